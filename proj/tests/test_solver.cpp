#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "hlearn/error.hpp"
#include "hlearn/solver.hpp"

using namespace hlearn;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  }
  return m;
}

Eigen::MatrixXd random_isometry(int rows, int cols, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rows, cols, rng));
  return Eigen::MatrixXd(qr.householderQ()).leftCols(cols);
}

// Matrix with prescribed singular values and right vectors V.
Eigen::MatrixXd with_spectrum(const Eigen::VectorXd& sv, const Eigen::MatrixXd& v, int rows,
                              std::mt19937_64& rng) {
  const Eigen::MatrixXd u = random_isometry(rows, static_cast<int>(sv.size()), rng);
  return u * sv.asDiagonal() * v.transpose();
}

double sin_angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
  return std::sqrt(std::max(0.0, 1.0 - c * c));
}

ConstraintSystem energy_system(const Eigen::MatrixXd& mh, std::vector<Eigen::MatrixXd> terms) {
  ConstraintSystem sys;
  sys.kind = SystemKind::energy;
  sys.hamiltonian_block = mh;
  sys.dissipative_terms = std::move(terms);
  for (Eigen::Index j = 0; j < mh.cols(); ++j) sys.coefficient_names.push_back("c" + std::to_string(j));
  for (std::size_t k = 0; k < sys.dissipative_terms.size(); ++k) sys.rate_names.push_back("d" + std::to_string(k));
  sys.rows.resize(static_cast<std::size_t>(mh.rows()));
  return sys;
}

ConstraintSystem ehrenfest_system(const Eigen::MatrixXd& kh, const Eigen::MatrixXd& kd,
                                  const Eigen::VectorXd& b) {
  ConstraintSystem sys;
  sys.kind = SystemKind::ehrenfest;
  sys.hamiltonian_block = kh;
  sys.dissipative_block = kd;
  sys.rhs = b;
  for (Eigen::Index j = 0; j < kh.cols(); ++j) sys.coefficient_names.push_back("c" + std::to_string(j));
  for (Eigen::Index k = 0; k < kd.cols(); ++k) sys.rate_names.push_back("d" + std::to_string(k));
  sys.rows.resize(static_cast<std::size_t>(kh.rows()));
  return sys;
}

}  // namespace

TEST(SvdMin, IdentityHasUnitSpectrum) {
  const Spectrum s = svd_min(Eigen::MatrixXd::Identity(2, 2));
  EXPECT_DOUBLE_EQ(s.values(0), 1.0);
  EXPECT_DOUBLE_EQ(s.values(1), 1.0);
}

TEST(SvdMin, DiagonalRatio) {
  Eigen::MatrixXd m = Eigen::Vector3d(3, 1, 0.5).asDiagonal();
  const Spectrum s = svd_min(m);
  EXPECT_NEAR(s.values(0), 0.5, 1e-15);
  EXPECT_NEAR(s.ratio(), 0.5, 1e-15);
  EXPECT_NEAR(std::abs(s.vectors(2, 0)), 1.0, 1e-15);
}

TEST(SvdMin, RankOneKernel) {
  Eigen::Vector3d u(1, 2, 3), w(1, -1, 2);
  const Eigen::MatrixXd m = u * w.transpose();
  const Spectrum s = svd_min(m);
  EXPECT_NEAR(s.values(0), 0.0, 1e-12);
  EXPECT_NEAR(s.values(1), 0.0, 1e-12);
  EXPECT_LT((m * s.vectors.col(0)).norm(), 1e-12);
  EXPECT_NEAR(s.vectors.col(0).norm(), 1.0, 1e-12);
}

TEST(SvdMin, TallMatrixMatchesDirectSvd) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd m = random_matrix(40, 6, rng);
  const Spectrum s = svd_min(m);
  Eigen::JacobiSVD<Eigen::MatrixXd> ref(m);
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(s.values(j), ref.singularValues()(5 - j), 1e-12);
  for (int j = 0; j < 6; ++j) {
    EXPECT_NEAR((m * s.vectors.col(j)).norm(), s.values(j), 1e-12);
  }
  for (int j = 1; j < 6; ++j) EXPECT_LE(s.values(j - 1), s.values(j));
}

TEST(SvdMin, WideMatrixPadsNullDirections) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd m = random_matrix(2, 4, rng);
  const Spectrum s = svd_min(m);
  EXPECT_TRUE(s.underdetermined);
  EXPECT_EQ(s.values.size(), 4);
  EXPECT_EQ(s.values(0), 0.0);
  EXPECT_EQ(s.values(1), 0.0);
  EXPECT_LT((m * s.vectors.col(0)).norm(), 1e-12);
}

TEST(SvdMin, RejectsNonFinite) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
  m(0, 1) = std::nan("");
  EXPECT_THROW(svd_min(m), SolverError);
}

TEST(Direct, FindsOneDimensionalMinimum) {
  auto f = [](const Eigen::VectorXd& x) { return (x(0) - 0.3) * (x(0) - 0.3) + 0.01; };
  const BoxResult r = direct_minimize(f, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 500);
  EXPECT_NEAR(r.x(0), 0.3, 1e-3);
  EXPECT_NEAR(r.value, 0.01, 1e-6);
  EXPECT_LE(r.evaluations, 502);
}

TEST(Direct, FindsGlobalMinimumOfMultimodalFunction) {
  // Branin on its usual box; global minimum 0.397887.
  auto branin = [](const Eigen::VectorXd& x) {
    const double pi = 3.14159265358979323846;
    const double a = x(1) - 5.1 / (4 * pi * pi) * x(0) * x(0) + 5 / pi * x(0) - 6;
    return a * a + 10 * (1 - 1 / (8 * pi)) * std::cos(x(0)) + 10;
  };
  Eigen::Vector2d lo(-5, 0), hi(10, 15);
  const BoxResult r = direct_minimize(branin, lo, hi, 2000);
  EXPECT_NEAR(r.value, 0.397887, 1e-3);
}

TEST(Direct, IsDeterministic) {
  auto f = [](const Eigen::VectorXd& x) {
    return std::sin(5 * x(0)) * std::cos(3 * x(1)) + x.squaredNorm();
  };
  const BoxResult a = direct_minimize(f, Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1), 700);
  const BoxResult b = direct_minimize(f, Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1), 700);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(PatternSearch, ConvergesOnQuadratic) {
  auto f = [](const Eigen::VectorXd& x) {
    return 4 * (x(0) - 0.2) * (x(0) - 0.2) + (x(1) - 0.7) * (x(1) - 0.7) + (x(0) - 0.2) * (x(1) - 0.7);
  };
  const BoxResult r = pattern_search(f, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.1, 0.1),
                                     Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1));
  EXPECT_NEAR(r.x(0), 0.2, 1e-6);
  EXPECT_NEAR(r.x(1), 0.7, 1e-6);
}

TEST(BoundedLeastSquares, FeasibleOptimumEqualsOrdinaryLeastSquares) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd a = random_matrix(20, 3, rng);
  const Eigen::MatrixXd b = random_matrix(20, 2, rng);
  const Eigen::VectorXd truth = (Eigen::VectorXd(5) << 1, -2, 0.5, 0.3, 0.7).finished();
  Eigen::MatrixXd ab(20, 5);
  ab << a, b;
  const Eigen::VectorXd rhs = ab * truth + 0.01 * random_matrix(20, 1, rng);
  const Eigen::VectorXd ols = ab.colPivHouseholderQr().solve(rhs);
  ASSERT_GT(ols(3), 0.0);
  ASSERT_GT(ols(4), 0.0);
  const BoundedLsq r = bounded_least_squares(a, b, rhs);
  EXPECT_LT((r.free - ols.head(3)).norm(), 1e-10);
  EXPECT_LT((r.nonneg - ols.tail(2)).norm(), 1e-10);
}

TEST(BoundedLeastSquares, ClampsNegativeRateAgainstGridOracle) {
  // One free coefficient and one rate whose unconstrained optimum is negative.
  Eigen::MatrixXd a(3, 1), b(3, 1);
  a << 1, 0, 1;
  b << 0.5, 1, -0.2;
  const Eigen::Vector3d rhs(1, -1, 0.6);
  const BoundedLsq r = bounded_least_squares(a, b, rhs);
  EXPECT_EQ(r.nonneg(0), 0.0);
  EXPECT_GE(r.gradient(0), -1e-8);
  double best = 1e300;
  for (int i = 0; i <= 3000; ++i) {
    for (int j = 0; j <= 300; ++j) {
      const double c = -3.0 + 6.0 * i / 3000.0;
      const double d = 3.0 * j / 300.0;
      best = std::min(best, (a.col(0) * c + b.col(0) * d - rhs).norm());
    }
  }
  EXPECT_LE(r.residual, best + 1e-12);
  EXPECT_NEAR(r.residual, best, 1e-3);
}

TEST(BoundedLeastSquares, KktConditionsOnRandomProblems) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd a = random_matrix(15, 3, rng);
    const Eigen::MatrixXd b = random_matrix(15, 4, rng);
    const Eigen::VectorXd rhs = random_matrix(15, 1, rng);
    const BoundedLsq r = bounded_least_squares(a, b, rhs);
    for (int k = 0; k < 4; ++k) {
      EXPECT_GE(r.nonneg(k), 0.0);
      if (r.nonneg(k) == 0.0) {
        EXPECT_GE(r.gradient(k), -1e-8);
      } else {
        EXPECT_LE(std::abs(r.gradient(k)), 1e-8 * rhs.norm());
      }
    }
    // The free block is optimal for the returned rates.
    const Eigen::VectorXd resid = a * r.free + b * r.nonneg - rhs;
    EXPECT_LT((a.transpose() * resid).norm(), 1e-10);
  }
}

TEST(SolveEhrenfest, RecoversExactSolution) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd kh = random_matrix(30, 4, rng);
  const Eigen::MatrixXd kd = random_matrix(30, 2, rng);
  const Eigen::Vector4d c(1, 2, -1, 0.5);
  const Eigen::Vector2d d(0.1, 0.0);
  const ConstraintSystem sys = ehrenfest_system(kh, kd, kh * c + kd * d);
  SolverConfig cfg;
  const LearningResult r = solve_ehrenfest(sys, cfg);
  EXPECT_LT((r.c_rec - c).norm(), 1e-10);
  EXPECT_LT((r.d_rec - d).norm(), 1e-10);
  EXPECT_LT(r.ratio, 1e-10);
  EXPECT_LT(r.residual, 1e-10);
}

TEST(SolveEhrenfest, FlagsDegenerateSystem) {
  Eigen::MatrixXd kh(4, 2);
  kh << 1, 1, 2, 2, 3, 3, 4, 4;
  const ConstraintSystem sys = ehrenfest_system(kh, Eigen::MatrixXd(4, 0), Eigen::Vector4d(1, 2, 3, 4));
  const LearningResult r = solve_ehrenfest(sys, SolverConfig{});
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.front().find("degenerate"), std::string::npos);
}

TEST(SolveEnergy, NoRatesIsPureSvd) {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd m = random_matrix(10, 4, rng);
  const LearningResult r = solve_energy(energy_system(m, {}), SolverConfig{});
  const Spectrum s = svd_min(m);
  EXPECT_EQ(r.spectrum.values, s.values);
  EXPECT_EQ(r.c_rec, s.vectors.col(0));
  EXPECT_EQ(r.d_rec.size(), 0);
}

TEST(SolveEnergy, FindsSyntheticOneDimensionalOptimum) {
  // lambda_1(d) = sqrt((d - 0.3)^2 + 0.01), minimized at d = 0.3.
  Eigen::MatrixXd mh(2, 1), m1(2, 1);
  mh << -0.3, 0.1;
  m1 << 2.0, 0.0;
  SolverConfig cfg;
  cfg.d_max = {1.0};
  const LearningResult r = solve_energy(energy_system(mh, {m1}), cfg);
  EXPECT_NEAR(r.d_rec(0), 0.3, 1e-3);
  EXPECT_NEAR(r.spectrum.values(0), 0.1, 1e-6);
  EXPECT_TRUE(r.converged);
}

TEST(SolveEnergy, RecoversRatesOfSufficientSyntheticSystem) {
  std::mt19937_64 rng(7);
  const int n = 5;
  const Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0).normalized();
  std::vector<Eigen::MatrixXd> terms;
  for (int k = 0; k < 2; ++k) terms.push_back(random_matrix(20, n, rng));
  const Eigen::Vector2d d(0.03, 0.12);
  Eigen::MatrixXd mh = random_matrix(20, n, rng);
  // Make c an exact null vector of M(d).
  const Eigen::VectorXd r0 = (mh + 0.5 * (d(0) * terms[0] + d(1) * terms[1])) * c;
  mh -= r0 * c.transpose();
  SolverConfig cfg;
  cfg.d_max = {0.5};
  const LearningResult r = solve_energy(energy_system(mh, terms), cfg);
  EXPECT_NEAR(r.d_rec(0), 0.03, 1e-5);
  EXPECT_NEAR(r.d_rec(1), 0.12, 1e-5);
  EXPECT_LT(sin_angle(r.c_rec, c), 1e-5);
  EXPECT_LT(r.spectrum.values(0), 1e-6 * r.spectrum.values(n - 1));
}

TEST(SolveEnergy, DeterministicRates) {
  std::mt19937_64 rng(8);
  const ConstraintSystem sys =
      energy_system(random_matrix(12, 3, rng), {random_matrix(12, 3, rng), random_matrix(12, 3, rng)});
  SolverConfig cfg;
  const LearningResult a = solve_energy(sys, cfg);
  const LearningResult b = solve_energy(sys, cfg);
  EXPECT_EQ(a.d_rec, b.d_rec);
  EXPECT_EQ(a.c_rec, b.c_rec);
}

TEST(SolveWithAdditional, RecoversScaleOfExactSystem) {
  std::mt19937_64 rng(9);
  const int n = 4;
  const Eigen::Vector4d c(0.5, -1.0, 2.0, 0.25);
  Eigen::MatrixXd mh = random_matrix(10, n, rng);
  mh -= (mh * c) * c.transpose() / c.squaredNorm();
  ConstraintSystem sys = energy_system(mh, {});
  sys.additional.matrix = random_matrix(3, n, rng);
  sys.additional.static_rhs = sys.additional.matrix * c;
  sys.additional.dissipative = Eigen::MatrixXd(3, 0);
  sys.additional.rows.resize(3);
  SolverConfig cfg;
  cfg.xi = 1000;
  const LearningResult r = solve_with_additional(sys, cfg);
  ASSERT_TRUE(r.scale.has_value());
  EXPECT_LT((*r.c_scaled - c).norm() / c.norm(), 1e-10);
  EXPECT_NEAR(r.c_rec.norm(), 1.0, 1e-12);
  EXPECT_LT(*r.delta_add, 1e-10);
}

TEST(SolveWithAdditional, BreaksTwoDimensionalKernel) {
  std::mt19937_64 rng(10);
  const int n = 6;
  const Eigen::MatrixXd v = random_isometry(n, n, rng);
  Eigen::VectorXd sv(n);
  sv << 0, 0, 1, 2, 3, 4;
  const Eigen::MatrixXd m = with_spectrum(sv, v, 20, rng);
  const Eigen::VectorXd c_h = v.col(0);
  ConstraintSystem sys = energy_system(m, {});
  const LearningResult plain = solve_energy(sys, SolverConfig{});
  EXPECT_EQ(kernel_dimension(plain.spectrum.values), 2);

  // Probe rows consistent with 3 c_h only.
  const Eigen::MatrixXd probes = random_matrix(3, n, rng);
  sys.additional.matrix = probes;
  sys.additional.static_rhs = probes * (3.0 * c_h);
  sys.additional.dissipative = Eigen::MatrixXd(3, 0);
  sys.additional.rows.resize(3);
  SolverConfig cfg;
  cfg.xi = 1000;
  const LearningResult r = solve_with_additional(sys, cfg);
  EXPECT_LT(sin_angle(r.c_rec, c_h), 1e-3);
  EXPECT_NEAR(*r.scale, r.c_rec.dot(c_h) > 0 ? 3.0 : -3.0, 1e-8);
  ASSERT_TRUE(r.ratio_projected.has_value());
  EXPECT_LT(*r.ratio_projected, 1e-8);
}

TEST(AdditionalBlock, RightHandSideIsLinearInRates) {
  std::mt19937_64 rng(11);
  AdditionalBlock blk;
  blk.matrix = random_matrix(4, 3, rng);
  blk.static_rhs = random_matrix(4, 1, rng);
  blk.dissipative = random_matrix(4, 2, rng);
  const Eigen::Vector2d d1(0.1, 0.4), d2(0.3, 0.05);
  const Eigen::VectorXd diff = blk.rhs(d1) - blk.rhs(d2);
  EXPECT_LT((diff + blk.dissipative * (d1 - d2)).norm(), 1e-14);
}

TEST(Reparametrize, IdentityLeavesSystemUnchanged) {
  std::mt19937_64 rng(12);
  const ConstraintSystem sys = energy_system(random_matrix(8, 3, rng), {random_matrix(8, 3, rng)});
  const ConstraintSystem out = reparametrize(sys, Eigen::MatrixXd::Identity(3, 3));
  EXPECT_EQ(out.hamiltonian_block, sys.hamiltonian_block);
  EXPECT_EQ(out.dissipative_terms[0], sys.dissipative_terms[0]);
}

TEST(Reparametrize, RejectsNonIsometry) {
  std::mt19937_64 rng(13);
  const ConstraintSystem sys = energy_system(random_matrix(8, 3, rng), {});
  EXPECT_THROW(reparametrize(sys, Eigen::MatrixXd::Ones(3, 1)), SolverError);
}

TEST(Reparametrize, AllOnesColumnGivesHomogeneousAnsatz) {
  std::mt19937_64 rng(14);
  const Eigen::MatrixXd mh = random_matrix(8, 4, rng);
  const ConstraintSystem sys = energy_system(mh, {});
  const Parametrization p = Parametrization::fixed(Eigen::MatrixXd::Ones(4, 1));
  const Eigen::MatrixXd g = p.matrix();
  EXPECT_NEAR(g(0, 0), 0.5, 1e-15);
  const LearningResult r = solve_parametrized(sys, p, SolverConfig{});
  ASSERT_EQ(r.c_rec.size(), 4);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(r.c_rec(j), 0.5, 1e-15);
}

TEST(Parametrization, ColumnsAreOrthonormal) {
  std::mt19937_64 rng(15);
  const Parametrization p = Parametrization::fixed(random_matrix(7, 3, rng));
  const Eigen::MatrixXd g = p.matrix();
  EXPECT_LT((g.transpose() * g - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(Parametrization::fixed(Eigen::MatrixXd::Ones(3, 2)), SolverError);
}

TEST(Parametrization, NonlinearSearchRecoversExponent) {
  // Columns of M chosen so that the null vector is the power law with exponent 1.3.
  std::mt19937_64 rng(16);
  const int n = 6;
  Parametrization p;
  p.alpha_bounds = {{0.0, 3.0}};
  p.generator = [n](const Eigen::VectorXd& a) {
    Eigen::MatrixXd g(n, 1);
    for (int j = 0; j < n; ++j) g(j, 0) = std::pow(j + 1.0, -a(0));
    return g;
  };
  const Eigen::VectorXd c = p.matrix(Eigen::VectorXd::Constant(1, 1.3)).col(0);
  Eigen::MatrixXd mh = random_matrix(12, n, rng);
  mh -= (mh * c) * c.transpose();
  const LearningResult r = solve_parametrized(energy_system(mh, {}), p, SolverConfig{});
  ASSERT_TRUE(r.alpha_rec.has_value());
  EXPECT_NEAR((*r.alpha_rec)(0), 1.3, 1e-4);
  EXPECT_LT(sin_angle(r.c_rec, c), 1e-4);
}

TEST(Regularize, ZeroBetaKeepsSpectrum) {
  std::mt19937_64 rng(17);
  const Eigen::MatrixXd mh = random_matrix(10, 4, rng);
  const ConstraintSystem sys = energy_system(mh, {});
  const Eigen::MatrixXd g = random_isometry(4, 2, rng);
  SolverConfig cfg;
  cfg.beta = 0.0;
  const LearningResult a = solve_regularized(sys, g, cfg);
  const LearningResult b = solve_energy(sys, cfg);
  EXPECT_LT((a.spectrum.values - b.spectrum.values).norm(), 1e-12);
}

TEST(Regularize, LargeBetaMatchesExactParametrization) {
  std::mt19937_64 rng(18);
  const Eigen::MatrixXd mh = random_matrix(10, 5, rng);
  const ConstraintSystem sys = energy_system(mh, {});
  const Eigen::MatrixXd g = random_isometry(5, 2, rng);
  SolverConfig cfg;
  cfg.beta = 1e4 * mh.norm();
  const LearningResult reg = solve_regularized(sys, g, cfg);
  const LearningResult exact = solve_parametrized(sys, Parametrization::fixed(g), SolverConfig{});
  EXPECT_LT(sin_angle(reg.c_rec, exact.c_rec), 1e-6);
}

TEST(Regularize, OutOfImageValuesGrowWithBeta) {
  std::mt19937_64 rng(19);
  const Eigen::MatrixXd mh = random_matrix(12, 5, rng);
  const ConstraintSystem sys = energy_system(mh, {});
  const Eigen::MatrixXd g = random_isometry(5, 2, rng);
  double prev_top = 0.0;
  for (double beta : {1e-1, 1e0, 1e1, 1e2, 1e3}) {
    const Spectrum s = svd_min(regularize(sys, g, beta).energy_matrix(Eigen::VectorXd(0)));
    EXPECT_GT(s.values(2), prev_top * 0.999);
    prev_top = s.values(2);
  }
  EXPECT_GT(prev_top, 100.0);
}

TEST(Regularize, SweepSeparatesImageFromComplement) {
  std::mt19937_64 rng(23);
  const Eigen::MatrixXd mh = random_matrix(12, 5, rng);
  const ConstraintSystem sys = energy_system(mh, {});
  const Eigen::MatrixXd g = random_isometry(5, 2, rng);
  const auto sweep = sweep_beta(sys, g, Eigen::VectorXd(0), {0.0, 1e-1, 1e0, 1e1, 1e2, 1e3});
  ASSERT_EQ(sweep.size(), 6u);
  EXPECT_LT((sweep[0].values - svd_min(mh).values).norm(), 1e-12);
  for (std::size_t i = 1; i < sweep.size(); ++i) EXPECT_GE(sweep[i].cost, sweep[i - 1].cost - 1e-12);
  const BetaSpectrum& top = sweep.back();
  // Two image directions at the bottom, three penalized ones above.
  EXPECT_NEAR(top.image_weight(0), 1.0, 1e-4);
  EXPECT_NEAR(top.image_weight(1), 1.0, 1e-4);
  for (int k = 2; k < 5; ++k) {
    EXPECT_NEAR(top.image_weight(k), 0.0, 1e-4);
    EXPECT_GT(top.values(k), 999.0);
  }
  const Spectrum exact = svd_min(mh * g);
  EXPECT_NEAR(top.values(0), exact.values(0), 1e-3 * exact.values(1));
  EXPECT_NEAR(top.values(1), exact.values(1), 1e-3 * exact.values(1));
  EXPECT_THROW(sweep_beta(ehrenfest_system(mh, Eigen::MatrixXd(12, 0), Eigen::VectorXd::Zero(12)), g,
                          Eigen::VectorXd(0), {1.0}),
               ConfigError);
}

TEST(ProjectedRatio, ReplacesSpuriousKernelDirection) {
  std::mt19937_64 rng(20);
  const int n = 5;
  const Eigen::MatrixXd v = random_isometry(n, n, rng);
  Eigen::VectorXd sv(n);
  sv << 0, 0, 0.7, 1.5, 2.0;
  const Eigen::MatrixXd m = with_spectrum(sv, v, 9, rng);
  const ProjectedSpectrum p = projected_ratio(m, v.col(0), 2);
  EXPECT_NEAR(p.values(0), 0.0, 1e-12);
  EXPECT_NEAR(p.values(1), 0.7, 1e-12);
  EXPECT_NEAR(p.ratio, 0.0, 1e-12);
  EXPECT_THROW(projected_ratio(m, v.col(3), 2), SolverError);
}

TEST(ProjectedRatio, WithoutDegeneracyIsIdentity) {
  std::mt19937_64 rng(21);
  const Eigen::MatrixXd m = random_matrix(8, 4, rng);
  const ProjectedSpectrum p = projected_ratio(m, Eigen::VectorXd::Ones(4), 1);
  const Spectrum s = svd_min(m);
  EXPECT_EQ(p.values, s.values);
  EXPECT_EQ(p.ratio, s.ratio());
}

TEST(KernelDimension, DetectsNearNullSubspace) {
  EXPECT_EQ(kernel_dimension(Eigen::Vector4d(1e-9, 2e-9, 1.0, 2.0)), 2);
  EXPECT_EQ(kernel_dimension(Eigen::Vector4d(1e-9, 0.5, 1.0, 2.0)), 1);
  EXPECT_EQ(kernel_dimension(Eigen::Vector4d(1e-9, 2e-9, 3e-9, 2.0)), 3);
}

TEST(DeltaAdd, Examples) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  const Eigen::Vector2d c(1, -1);
  EXPECT_EQ(delta_add(m, c, m * c), 0.0);
  EXPECT_DOUBLE_EQ(delta_add(m, Eigen::Vector2d::Zero(), Eigen::Vector2d(3, 4)), 5.0);
}

TEST(Properties, IsometryNeverShrinksSecondSingularValue) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd m = random_matrix(10, 6, rng);
    const Eigen::MatrixXd g = random_isometry(6, 2 + trial % 4, rng);
    EXPECT_GE(svd_min(m * g).values(1), svd_min(m).values(1) - 1e-12);
  }
}

TEST(Properties, WeylAndWedinBoundsUnderPerturbation) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5;
    const Eigen::MatrixXd v = random_isometry(n, n, rng);
    Eigen::VectorXd sv(n);
    sv << 0, 0.5, 1, 2, 3;
    const Eigen::MatrixXd m = with_spectrum(sv, v, 12, rng);
    const Eigen::MatrixXd e = 1e-3 * (1 + trial % 7) * random_matrix(12, n, rng);
    const Spectrum s = svd_min(m + e);
    const double e_norm = svd_min(e).values(n - 1);
    EXPECT_LE(s.values(0), e_norm + 1e-14);
    EXPECT_LE(sin_angle(s.vectors.col(0), v.col(0)), e_norm / s.values(1) + 1e-14);
  }
}

TEST(LearningResult, SerializesNamedCoefficients) {
  std::mt19937_64 rng(24);
  const ConstraintSystem sys = energy_system(random_matrix(6, 2, rng), {random_matrix(6, 2, rng)});
  const LearningResult r = solve_energy(sys, SolverConfig{});
  const nlohmann::json j = result_to_json(r);
  EXPECT_TRUE(j["c_rec"].contains("c0"));
  EXPECT_TRUE(j["d_rec"].contains("d0"));
  EXPECT_EQ(j["spectrum"].size(), 2u);
  EXPECT_GE(j["ratio"].get<double>(), 0.0);
  EXPECT_LE(j["ratio"].get<double>(), 1.0);
}

TEST(SolverConfig, RejectsInvalidValues) {
  SolverConfig cfg;
  cfg.xi = -1;
  EXPECT_THROW(cfg.validate(1), ConfigError);
  cfg = SolverConfig{};
  cfg.d_max = {0.0};
  EXPECT_THROW(cfg.validate(1), ConfigError);
  cfg.d_max = {1.0, 2.0};
  EXPECT_THROW(cfg.validate(3), ConfigError);
}
