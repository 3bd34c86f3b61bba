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

#include "hlearn/pauli.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hlearn/density_matrix.hpp"
#include "hlearn/error.hpp"

namespace hlearn {

namespace {

constexpr cplx kIPowers[4] = {cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)};

int popcount(std::uint64_t v) { return std::popcount(v); }

void require_same_sites(int a, int b, const char* where) {
  if (a != b) {
    throw DimensionError(std::string(where) + ": site count mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

std::uint64_t site_mask(int n_sites) {
  return n_sites >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n_sites) - 1);
}

}  // namespace

char to_char(PauliLetter letter) {
  switch (letter) {
    case PauliLetter::I: return 'I';
    case PauliLetter::X: return 'X';
    case PauliLetter::Y: return 'Y';
    case PauliLetter::Z: return 'Z';
  }
  return '?';
}

PauliLetter letter_from_char(char c) {
  switch (c) {
    case 'I': case 'i': case '_': return PauliLetter::I;
    case 'X': case 'x': return PauliLetter::X;
    case 'Y': case 'y': return PauliLetter::Y;
    case 'Z': case 'z': return PauliLetter::Z;
    default: throw std::invalid_argument(std::string("invalid Pauli letter '") + c + "'");
  }
}

PauliString::PauliString(int n_sites) : n_sites_(n_sites) {
  if (n_sites <= 0 || n_sites > kMaxSites) {
    throw DimensionError("PauliString: n_sites must be in [1, 64], got " + std::to_string(n_sites));
  }
}

PauliString::PauliString(int n_sites, std::uint64_t x_bits, std::uint64_t z_bits)
    : PauliString(n_sites) {
  const auto mask = site_mask(n_sites);
  if ((x_bits & ~mask) != 0 || (z_bits & ~mask) != 0) {
    throw DimensionError("PauliString: bits set beyond n_sites");
  }
  x_ = x_bits;
  z_ = z_bits;
}

PauliString PauliString::from_string(std::string_view letters) {
  PauliString p(static_cast<int>(letters.size()));
  for (std::size_t k = 0; k < letters.size(); ++k) {
    p.set_letter(static_cast<int>(k), letter_from_char(letters[k]));
  }
  return p;
}

PauliString PauliString::single(int n_sites, int site, PauliLetter letter) {
  PauliString p(n_sites);
  p.set_letter(site, letter);
  return p;
}

int PauliString::weight() const { return popcount(x_ | z_); }

PauliLetter PauliString::letter(int site) const {
  const bool x = (x_ >> site) & 1U;
  const bool z = (z_ >> site) & 1U;
  if (x && z) return PauliLetter::Y;
  if (x) return PauliLetter::X;
  if (z) return PauliLetter::Z;
  return PauliLetter::I;
}

void PauliString::set_letter(int site, PauliLetter letter) {
  if (site < 0 || site >= n_sites_) {
    throw DimensionError("PauliString: site " + std::to_string(site) + " out of range");
  }
  const std::uint64_t bit = std::uint64_t{1} << site;
  x_ &= ~bit;
  z_ &= ~bit;
  if (letter == PauliLetter::X || letter == PauliLetter::Y) x_ |= bit;
  if (letter == PauliLetter::Z || letter == PauliLetter::Y) z_ |= bit;
}

bool PauliString::commutes_with(const PauliString& other) const {
  return (popcount((x_ & other.z_) ^ (z_ & other.x_)) & 1) == 0;
}

cplx PauliString::phase_on(std::uint64_t basis_index) const {
  int k = popcount(x_ & z_) + 2 * popcount(z_ & basis_index);
  return kIPowers[k & 3];
}

PauliString PauliString::restrict_to(const std::vector<int>& sites) const {
  PauliString out(static_cast<int>(sites.size()));
  for (std::size_t i = 0; i < sites.size(); ++i) {
    out.set_letter(static_cast<int>(i), letter(sites[i]));
  }
  return out;
}

std::string PauliString::to_string() const {
  std::string s(static_cast<std::size_t>(n_sites_), 'I');
  for (int k = 0; k < n_sites_; ++k) s[static_cast<std::size_t>(k)] = to_char(letter(k));
  return s;
}

Eigen::MatrixXcd PauliString::to_dense() const {
  const Eigen::Index dim = Eigen::Index{1} << n_sites_;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const auto col = static_cast<std::uint64_t>(j);
    m(static_cast<Eigen::Index>(col ^ x_), j) = phase_on(col);
  }
  return m;
}

bool operator<(const PauliString& a, const PauliString& b) {
  if (a.n_sites_ != b.n_sites_) return a.n_sites_ < b.n_sites_;
  if (a.x_ != b.x_) return a.x_ < b.x_;
  return a.z_ < b.z_;
}

cplx PauliProduct::phase() const { return kIPowers[i_power & 3]; }

PauliProduct multiply(const PauliString& a, const PauliString& b) {
  require_same_sites(a.n_sites(), b.n_sites(), "multiply");
  const std::uint64_t x = a.x_bits() ^ b.x_bits();
  const std::uint64_t z = a.z_bits() ^ b.z_bits();
  // i^{x1.z1} X^x1 Z^z1 i^{x2.z2} X^x2 Z^z2, moving Z^z1 past X^x2 costs (-1)^{z1.x2}.
  int k = popcount(a.x_bits() & a.z_bits()) + popcount(b.x_bits() & b.z_bits()) +
          2 * popcount(a.z_bits() & b.x_bits()) - popcount(x & z);
  return {((k % 4) + 4) % 4, PauliString(a.n_sites(), x, z)};
}

// --- Operator ---------------------------------------------------------------

Operator::Operator(int n_sites) : n_sites_(n_sites) {
  if (n_sites <= 0 || n_sites > PauliString::kMaxSites) {
    throw DimensionError("Operator: n_sites must be in [1, 64]");
  }
}

Operator::Operator(const PauliString& p, cplx coefficient) : n_sites_(p.n_sites()) {
  add_term(p, coefficient);
}

Operator Operator::identity(int n_sites, cplx coefficient) {
  return Operator(PauliString(n_sites), coefficient);
}

Operator Operator::pauli(int n_sites, int site, PauliLetter letter) {
  return Operator(PauliString::single(n_sites, site, letter));
}

Operator Operator::sigma_plus(int n_sites, int site) {
  Operator op(n_sites);
  op.add_term(PauliString::single(n_sites, site, PauliLetter::X), 0.5);
  op.add_term(PauliString::single(n_sites, site, PauliLetter::Y), cplx(0, 0.5));
  return op;
}

Operator Operator::sigma_minus(int n_sites, int site) {
  Operator op(n_sites);
  op.add_term(PauliString::single(n_sites, site, PauliLetter::X), 0.5);
  op.add_term(PauliString::single(n_sites, site, PauliLetter::Y), cplx(0, -0.5));
  return op;
}

cplx Operator::coefficient(const PauliString& p) const {
  auto it = terms_.find(p);
  return it == terms_.end() ? cplx(0) : it->second;
}

void Operator::add_term(const PauliString& p, cplx coefficient) {
  if (n_sites_ == 0) n_sites_ = p.n_sites();
  require_same_sites(n_sites_, p.n_sites(), "Operator::add_term");
  auto [it, inserted] = terms_.try_emplace(p, coefficient);
  if (!inserted) it->second += coefficient;
  if (std::abs(it->second) <= kPruneThreshold) terms_.erase(it);
}

Operator Operator::adjoint() const {
  Operator out(*this);
  for (auto& [p, c] : out.terms_) c = std::conj(c);
  return out;
}

bool Operator::is_hermitian(double tol) const {
  for (const auto& [p, c] : terms_) {
    if (std::abs(c.imag()) > tol) return false;
  }
  return true;
}

double Operator::pauli_norm() const {
  double s = 0;
  for (const auto& [p, c] : terms_) s += std::abs(c);
  return s;
}

std::uint64_t Operator::support() const {
  std::uint64_t s = 0;
  for (const auto& [p, c] : terms_) s |= p.support();
  return s;
}

Operator Operator::restrict_to(const std::vector<int>& sites) const {
  std::uint64_t mask = 0;
  for (int s : sites) mask |= std::uint64_t{1} << s;
  if ((support() & ~mask) != 0) {
    throw DimensionError("Operator::restrict_to: operator acts outside the requested sites");
  }
  Operator out(static_cast<int>(sites.size()));
  for (const auto& [p, c] : terms_) out.add_term(p.restrict_to(sites), c);
  return out;
}

Operator& Operator::operator+=(const Operator& other) {
  if (n_sites_ == 0) n_sites_ = other.n_sites_;
  if (other.n_sites_ != 0) require_same_sites(n_sites_, other.n_sites_, "Operator::+");
  for (const auto& [p, c] : other.terms_) add_term(p, c);
  return *this;
}

Operator& Operator::operator-=(const Operator& other) {
  if (n_sites_ == 0) n_sites_ = other.n_sites_;
  if (other.n_sites_ != 0) require_same_sites(n_sites_, other.n_sites_, "Operator::-");
  for (const auto& [p, c] : other.terms_) add_term(p, -c);
  return *this;
}

Operator& Operator::operator*=(cplx scalar) {
  for (auto& [p, c] : terms_) c *= scalar;
  prune();
  return *this;
}

Operator operator*(const Operator& a, const Operator& b) {
  require_same_sites(a.n_sites_, b.n_sites_, "Operator::*");
  Operator out(a.n_sites_);
  for (const auto& [pa, ca] : a.terms_) {
    for (const auto& [pb, cb] : b.terms_) {
      const auto prod = multiply(pa, pb);
      auto [it, inserted] = out.terms_.try_emplace(prod.result, ca * cb * prod.phase());
      if (!inserted) it->second += ca * cb * prod.phase();
    }
  }
  out.prune();
  return out;
}

void Operator::prune() {
  std::erase_if(terms_, [](const auto& kv) { return std::abs(kv.second) <= kPruneThreshold; });
}

Eigen::MatrixXcd Operator::to_dense() const {
  const Eigen::Index dim = Eigen::Index{1} << n_sites_;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (const auto& [p, c] : terms_) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto col = static_cast<std::uint64_t>(j);
      m(static_cast<Eigen::Index>(col ^ p.x_bits()), j) += c * p.phase_on(col);
    }
  }
  return m;
}

Operator commutator(const Operator& a, const Operator& b) {
  require_same_sites(a.n_sites(), b.n_sites(), "commutator");
  // Only anticommuting string pairs survive: [P, Q] = 2PQ when {P, Q} = 0.
  Operator out(a.n_sites());
  for (const auto& [pa, ca] : a.terms()) {
    for (const auto& [pb, cb] : b.terms()) {
      if (pa.commutes_with(pb)) continue;
      const auto prod = multiply(pa, pb);
      out.add_term(prod.result, 2.0 * ca * cb * prod.phase());
    }
  }
  return out;
}

Operator anticommutator(const Operator& a, const Operator& b) {
  require_same_sites(a.n_sites(), b.n_sites(), "anticommutator");
  Operator out(a.n_sites());
  for (const auto& [pa, ca] : a.terms()) {
    for (const auto& [pb, cb] : b.terms()) {
      if (!pa.commutes_with(pb)) continue;
      const auto prod = multiply(pa, pb);
      out.add_term(prod.result, 2.0 * ca * cb * prod.phase());
    }
  }
  return out;
}

Operator adjoint_dissipator(const Operator& left, const Operator& right, const Operator& h) {
  require_same_sites(left.n_sites(), h.n_sites(), "adjoint_dissipator");
  require_same_sites(right.n_sites(), h.n_sites(), "adjoint_dissipator");
  const Operator right_dag = right.adjoint();
  Operator out = right_dag * commutator(h, left);
  out += commutator(right_dag, h) * left;
  return out;
}

cplx pauli_trace(const PauliString& p, const Eigen::MatrixXcd& rho) {
  const auto dim = static_cast<std::uint64_t>(rho.rows());
  const std::uint64_t x = p.x_bits();
  const std::uint64_t z = p.z_bits();
  const cplx* data = rho.data();
  // tr(P rho) = sum_k phase(k) rho(k, k ^ x); column-major storage.
  double re = 0, im = 0;
  for (std::uint64_t k = 0; k < dim; ++k) {
    const cplx v = data[k + (k ^ x) * dim];
    if (std::popcount(z & k) & 1) {
      re -= v.real();
      im -= v.imag();
    } else {
      re += v.real();
      im += v.imag();
    }
  }
  return kIPowers[std::popcount(x & z) & 3] * cplx(re, im);
}

cplx expectation(const Operator& op, const DensityMatrix& state) {
  if (op.n_sites() != state.n_sites()) {
    throw DimensionError("expectation: operator and state site counts differ");
  }
  cplx total = 0;
  for (const auto& [p, c] : op.terms()) total += c * pauli_trace(p, state.entries());
  return total;
}

double expectation(const PauliString& p, const DensityMatrix& state) {
  if (p.n_sites() != state.n_sites()) {
    throw DimensionError("expectation: operator and state site counts differ");
  }
  return pauli_trace(p, state.entries()).real();
}

std::string to_text(const Operator& op) {
  std::string out;
  char buf[64];
  for (const auto& [p, c] : op.terms()) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g ", c.real(), c.imag());
    out += buf;
    out += p.to_string();
    out += '\n';
  }
  return out;
}

Operator operator_from_text(std::string_view text) {
  Operator op;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double re = 0, im = 0;
    std::string letters;
    if (!(fields >> re >> im >> letters)) {
      throw std::invalid_argument("operator text line " + std::to_string(line_no) +
                                  ": expected 'coeff_re coeff_im letters'");
    }
    op.add_term(PauliString::from_string(letters), cplx(re, im));
  }
  return op;
}

}  // namespace hlearn

std::size_t std::hash<hlearn::PauliString>::operator()(const hlearn::PauliString& p) const noexcept {
  std::uint64_t h = p.x_bits() * 0x9E3779B97F4A7C15ULL;
  h ^= p.z_bits() + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
  h ^= static_cast<std::uint64_t>(p.n_sites()) * 0xBF58476D1CE4E5B9ULL;
  return static_cast<std::size_t>(h);
}
