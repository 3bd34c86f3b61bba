// Copyright 2026 The hlearn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hlearn {

using cplx = std::complex<double>;

class DensityMatrix;

enum class PauliLetter : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

char to_char(PauliLetter letter);
PauliLetter letter_from_char(char c);

/// Tensor product of single-site Pauli matrices on up to 64 sites.
///
/// Stored in symplectic form: site k carries an X bit and a Z bit, and the
/// string represents i^{popcount(x & z)} X^x Z^z, so that Y = iXZ. Site k is
/// bit k of the computational-basis index (site 0 is least significant); the
/// bit value 0 is the +1 eigenstate of Z.
class PauliString {
 public:
  static constexpr int kMaxSites = 64;

  PauliString() = default;
  explicit PauliString(int n_sites);
  PauliString(int n_sites, std::uint64_t x_bits, std::uint64_t z_bits);

  /// Parses a letter word such as "XIZY"; character k is site k.
  static PauliString from_string(std::string_view letters);
  static PauliString single(int n_sites, int site, PauliLetter letter);

  int n_sites() const { return n_sites_; }
  std::uint64_t x_bits() const { return x_; }
  std::uint64_t z_bits() const { return z_; }
  std::uint64_t support() const { return x_ | z_; }
  int weight() const;
  bool is_identity() const { return (x_ | z_) == 0; }

  PauliLetter letter(int site) const;
  void set_letter(int site, PauliLetter letter);

  bool commutes_with(const PauliString& other) const;

  /// Action on a computational basis state: P|j> = phase(j) |j ^ x_bits()>.
  cplx phase_on(std::uint64_t basis_index) const;

  /// Restriction to the listed sites, re-indexed in list order.
  PauliString restrict_to(const std::vector<int>& sites) const;

  std::string to_string() const;

  /// Dense 2^n x 2^n matrix, for small n.
  Eigen::MatrixXcd to_dense() const;

  friend bool operator==(const PauliString& a, const PauliString& b) {
    return a.n_sites_ == b.n_sites_ && a.x_ == b.x_ && a.z_ == b.z_;
  }
  friend bool operator!=(const PauliString& a, const PauliString& b) { return !(a == b); }
  friend bool operator<(const PauliString& a, const PauliString& b);

 private:
  int n_sites_ = 0;
  std::uint64_t x_ = 0;
  std::uint64_t z_ = 0;
};

struct PauliProduct {
  /// Exponent k of the phase i^k, in [0, 4).
  int i_power = 0;
  PauliString result;

  cplx phase() const;
};

/// Exact product a * b = i^k * P.
PauliProduct multiply(const PauliString& a, const PauliString& b);

/// Complex-weighted sum of Pauli strings on a fixed number of sites.
class Operator {
 public:
  /// Coefficients with magnitude at or below this are dropped after arithmetic.
  static constexpr double kPruneThreshold = 1e-15;

  using TermMap = std::map<PauliString, cplx>;

  Operator() = default;
  explicit Operator(int n_sites);
  Operator(const PauliString& p, cplx coefficient = 1.0);

  static Operator identity(int n_sites, cplx coefficient = 1.0);
  static Operator pauli(int n_sites, int site, PauliLetter letter);
  /// sigma^+ = (X + iY)/2, raising |1> to |0> (the +1 eigenstate of Z).
  static Operator sigma_plus(int n_sites, int site);
  /// sigma^- = (X - iY)/2, lowering |0> to |1> (toward the -1 eigenstate of Z).
  static Operator sigma_minus(int n_sites, int site);

  int n_sites() const { return n_sites_; }
  const TermMap& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }
  cplx coefficient(const PauliString& p) const;

  void add_term(const PauliString& p, cplx coefficient);

  Operator adjoint() const;
  bool is_hermitian(double tol = 1e-12) const;
  /// Sum of |coefficient|, an upper bound on the operator norm.
  double pauli_norm() const;
  /// Restriction to a subset of sites; every term must be supported inside it.
  Operator restrict_to(const std::vector<int>& sites) const;
  std::uint64_t support() const;

  Operator& operator+=(const Operator& other);
  Operator& operator-=(const Operator& other);
  Operator& operator*=(cplx scalar);

  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(Operator a, cplx s) { return a *= s; }
  friend Operator operator*(cplx s, Operator a) { return a *= s; }
  friend Operator operator*(const Operator& a, const Operator& b);

  Eigen::MatrixXcd to_dense() const;

  friend bool operator==(const Operator& a, const Operator& b) {
    return a.n_sites_ == b.n_sites_ && a.terms_ == b.terms_;
  }

 private:
  void prune();

  int n_sites_ = 0;
  TermMap terms_;
};

Operator commutator(const Operator& a, const Operator& b);
Operator anticommutator(const Operator& a, const Operator& b);

/// Heisenberg-picture dissipator image of h for the jump pair (left, right):
///
///   right^dag [h, left] + [right^dag, h] left
///     = 2 (right^dag h left - 1/2 {right^dag left, h}).
///
/// For left = right = a this is a^dag[h,a] + [a^dag,h]a, which for Pauli a and h
/// equals 0 when they commute and -4h otherwise. A channel with rate g adds
/// (g/2) <adjoint_dissipator(left, right, h)> to d<h>/dt.
Operator adjoint_dissipator(const Operator& left, const Operator& right, const Operator& h);

/// tr(op * rho).
cplx expectation(const Operator& op, const DensityMatrix& state);
double expectation(const PauliString& p, const DensityMatrix& state);
/// tr(P rho) for a raw column-major dense matrix.
cplx pauli_trace(const PauliString& p, const Eigen::MatrixXcd& rho);

/// One term per line: "coeff_re coeff_im letters".
std::string to_text(const Operator& op);
/// Inverse of to_text; blank lines and lines starting with '#' are skipped.
Operator operator_from_text(std::string_view text);

}  // namespace hlearn

template <>
struct std::hash<hlearn::PauliString> {
  std::size_t operator()(const hlearn::PauliString& p) const noexcept;
};
