#include "lyaptube/tube.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "lyaptube/scenario.hpp"
#include "oracles.hpp"

namespace lyaptube {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

const double kLmax = 1.0 + std::sqrt(0.5);  // largest eigenvalue of [[1.5,.5],[.5,.5]]

ComparisonBounds example_bounds() {
  return NominalDesign::linear_quadratic(vec({1, 2})).bounds;
}

TEST(SolveNuTest, ClosedFormMatchesOracle) {
  const auto nu = solve_nu({example_bounds(), 1e-3, 0.08}, 10.0);
  EXPECT_TRUE(nu.closed_form());
  for (double t : {0.0, 0.5, 3.0, 10.0, 40.0}) {
    EXPECT_NEAR(nu(t), oracles::nu_closed(t, kLmax, 1e-3, 0.08), 1e-14);
  }
  EXPECT_NEAR(nu.limit(), kLmax * 1e-3 / 4.0, 1e-15);
}

TEST(SolveNuTest, NumericAgreesWithClosedForm) {
  for (double c0 : {0.08, 0.33, 0.0875}) {
    const auto numeric = solve_nu({example_bounds(), 1e-3, c0}, 10.0, 1e-10, true);
    EXPECT_FALSE(numeric.closed_form());
    double worst = 0.0;
    for (int i = 0; i <= 10000; ++i) {
      const double t = 1e-3 * i;
      worst = std::max(worst, std::abs(numeric(t) - oracles::nu_closed(t, kLmax, 1e-3, c0)));
    }
    EXPECT_LT(worst, 1e-8) << "c0 " << c0;
  }
}

TEST(SolveNuTest, RejectsBadArguments) {
  EXPECT_THROW(solve_nu({example_bounds(), -1.0, 0.1}, 1.0), TubeError);
  EXPECT_THROW(solve_nu({example_bounds(), 1e-3, -0.1}, 1.0), TubeError);
  EXPECT_THROW(solve_nu({example_bounds(), 1e-3, 0.1}, 0.0), TubeError);
  const auto numeric = solve_nu({example_bounds(), 1e-3, 0.1}, 1.0, 1e-9, true);
  EXPECT_THROW(numeric(2.0), TubeError);
}

TEST(SolveNuTest, DiscontinuousLimitDecaysToZero) {
  const auto nu = solve_nu({example_bounds(), 0.0, 0.2}, 10.0);
  EXPECT_EQ(nu.limit(), 0.0);
  EXPECT_NEAR(nu(5.0), 0.2 * std::exp(-5.0 / kLmax), 1e-15);
}

// Non-quadratic bounds go through the integrator; the oracle is a brute-force
// RK4 on the same scalar ODE.
TEST(SolveNuTest, CubicDecreaseAgainstRk4) {
  ComparisonBounds b{ClassKFunction::quadratic(1.0), ClassKFunction::quadratic(1.0),
                     ClassKFunction([](double s) { return s * s * s; }, std::nullopt, 10.0), std::nullopt};
  const double mu = 0.01;
  const auto nu = solve_nu({b, mu, 0.5}, 5.0);
  EXPECT_FALSE(nu.closed_form());
  auto rhs = [mu](double, double v) { return -std::pow(std::sqrt(v), 3) + mu / 4.0; };
  for (double t : {0.3, 1.0, 2.7, 5.0}) {
    EXPECT_NEAR(nu(t), oracles::rk4_scalar(rhs, 0.5, t, 1e-4), 1e-7) << t;
  }
  EXPECT_NEAR(nu.limit(), std::pow(mu / 4.0, 2.0 / 3.0), 1e-12);
}

TEST(SolveNuPropertyTest, Trichotomy) {
  const double mu = 1e-3;
  const double ainf = alpha_inf(example_bounds(), mu);
  const auto below = solve_nu({example_bounds(), mu, 0.5 * ainf}, 60.0);
  const auto at = solve_nu({example_bounds(), mu, ainf}, 60.0);
  const auto above = solve_nu({example_bounds(), mu, 0.33}, 60.0);
  for (int i = 1; i <= 500; ++i) {
    const double t0 = 0.02 * (i - 1), t1 = 0.02 * i;
    EXPECT_GT(below(t1), below(t0));
    EXPECT_LT(above(t1), above(t0));
    EXPECT_NEAR(at(t1), ainf, 1e-12);
  }
  EXPECT_LT(std::abs(below(50.0) - ainf), 1e-6);
  EXPECT_LT(std::abs(above(50.0) - ainf), 1e-6);
}

TEST(AlphaInfTest, ExampleValues) {
  EXPECT_NEAR(alpha_inf(example_bounds(), 1e-3), 4.26777e-4, 1e-9);
  EXPECT_EQ(alpha_inf(example_bounds(), 0.0), 0.0);
  EXPECT_THROW(alpha_inf(example_bounds(), -1.0), TubeError);
}

TEST(SelectMuTest, RoundTrip) {
  const auto b = example_bounds();
  const auto sel = select_mu(b, 0.1);
  // alpha_inf(mu*) = alpha1(r_inf)
  EXPECT_NEAR(alpha_inf(b, sel.supremum), b.alpha1(0.1), 1e-15);
  const double lmin = 1.0 - std::sqrt(0.5);
  EXPECT_NEAR(sel.supremum, 4.0 * lmin * 0.01 / kLmax, 1e-15);
  EXPECT_NEAR(sel.recommended, 0.9 * sel.supremum, 1e-18);
  EXPECT_THROW(select_mu(b, 0.0), TubeError);
}

TEST(TubeSectionTest, HalfWidthsOfSetPointSection) {
  const auto lyap = solve_lyapunov(vec({1, 2}), Matrix::Identity(2, 2));
  const TubeSection s{vec({0.25, 0}), 0.33, lyap.P, lyap.P_inv};
  EXPECT_NEAR(support(s, vec({1, 0})) - 0.25, std::sqrt(0.33), 1e-12);
  EXPECT_NEAR(support(s, vec({0, 1})), std::sqrt(0.99), 1e-12);
  EXPECT_NEAR(support(s, vec({-1, 0})) + 0.25, std::sqrt(0.33), 1e-12);
  EXPECT_THROW(support(s, vec({0, 0})), TubeError);
}

TEST(TubeSectionTest, SinusoidStaticSupports) {
  const auto lyap = solve_lyapunov(vec({1, 2}), Matrix::Identity(2, 2));
  // Largest xi_2 of the reference is 0.5, level 0.08: 0.5 + sqrt(3 * 0.08).
  const TubeSection s{vec({0, 0.5}), 0.08, lyap.P, lyap.P_inv};
  EXPECT_NEAR(support(s, vec({0, 1})), 0.5 + std::sqrt(0.24), 1e-12);
  const TubeSection s1{vec({0.5, 0}), 0.08, lyap.P, lyap.P_inv};
  EXPECT_NEAR(support(s1, vec({1, 0})), 0.5 + std::sqrt(0.08), 1e-12);
}

TEST(TubeSectionTest, ZeroLevelIsSingleton) {
  const auto lyap = solve_lyapunov(vec({1, 2}), Matrix::Identity(2, 2));
  const TubeSection s{vec({0.2, -0.1}), 0.0, lyap.P, lyap.P_inv};
  EXPECT_TRUE(s.contains(vec({0.2, -0.1})));
  EXPECT_FALSE(s.contains(vec({0.2, -0.1 + 1e-9})));
  EXPECT_NEAR(support(s, vec({3, 4})), 0.2, 1e-15);
}

Matrix random_spd2(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(2, 2);
  m << u(rng), u(rng), u(rng), u(rng);
  return m * m.transpose() + 0.05 * Matrix::Identity(2, 2);
}

TEST(SupportPropertyTest, MatchesBoundarySampling) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> lv(0.01, 2.0);
  for (int i = 0; i < 100; ++i) {
    const Matrix P = random_spd2(rng);
    const TubeSection s{vec({u(rng), u(rng)}), lv(rng), P, P.inverse()};
    const Vector d = vec({u(rng), u(rng)});
    const double Pa[2][2] = {{P(0, 0), P(0, 1)}, {P(1, 0), P(1, 1)}};
    const double c[2] = {s.center[0], s.center[1]};
    const double dd[2] = {d[0], d[1]};
    const double sampled = oracles::sampled_support2(Pa, c, s.level, dd, 20000);
    const double exact = support(s, d);
    EXPECT_GE(exact, sampled - 1e-12);
    EXPECT_LE(std::abs(exact - sampled), 1e-6 * std::max(1.0, std::abs(exact))) << i;
  }
}

TEST(MinkowskiPropertyTest, DecompositionAgreesWithDirectMembership) {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const Matrix P = random_spd2(rng);
  const TubeSection s{vec({0.3, -0.4}), 0.7, P, P.inverse()};
  const auto parts = minkowski_decompose(s);
  EXPECT_EQ(parts.centered.center, Vector::Zero(2));
  EXPECT_EQ(parts.center, s.center);
  int inside = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vector x = vec({u(rng), u(rng)});
    const Vector e = x - s.center;
    const bool oracle = e.dot(P * e) <= 0.7;
    EXPECT_EQ(minkowski_contains(parts, x), oracle);
    EXPECT_EQ(s.contains(x), oracle);
    inside += oracle;
  }
  EXPECT_GT(inside, 0);
  EXPECT_LT(inside, 1000);
}

TEST(BoundaryPointTest, LiesOnLevelSet) {
  std::mt19937 rng(29);
  const Matrix P = random_spd2(rng);
  const TubeSection s{vec({0.1, 0.2}), 0.4, P, P.inverse()};
  for (int k = 0; k < 16; ++k) {
    const double a = 2 * M_PI * k / 16;
    const Vector e = s.boundary_point(vec({std::cos(a), std::sin(a)})) - s.center;
    EXPECT_NEAR(e.dot(P * e), 0.4, 1e-12);
  }
}

class ScenarioTubeTest : public ::testing::Test {
 protected:
  ScenarioSetup load(const std::string& name) { return build_setup(*builtin_scenario(name)); }
};

TEST_F(ScenarioTubeTest, SinusoidCertifiedBothWays) {
  const auto st = load("sinusoid");
  for (auto mode : {CertifyMode::kDynamic, CertifyMode::kStatic}) {
    const auto rep = certify(mode, st.plant, st.domain, st.iss_ptr(), st.controller, 0.08);
    EXPECT_EQ(rep.verdict, Verdict::kCertified) << to_string(mode);
    EXPECT_GT(rep.margin, 0.0);
    EXPECT_GE(rep.slack, 0.0);
    EXPECT_LE(rep.slack, 0.01 * rep.margin + 1e-15);
  }
}

TEST_F(ScenarioTubeTest, TransitionStaticWitnessOnFirstCoordinate) {
  const auto st = load("transition");
  const auto rep = certify(CertifyMode::kStatic, st.plant, st.domain, st.iss_ptr(),
                           st.controller, 0.0875);
  EXPECT_EQ(rep.verdict, Verdict::kNotCertified);
  ASSERT_EQ(rep.witness.direction.size(), 2);
  EXPECT_EQ(rep.witness.direction[1], 0.0);
  EXPECT_GT(rep.witness.excess, 0.0);
}

TEST_F(ScenarioTubeTest, SetPointModesAgree) {
  const auto st = load("setpoint");
  std::vector<Verdict> verdicts;
  for (auto mode : {CertifyMode::kSetPoint, CertifyMode::kDynamic, CertifyMode::kStatic}) {
    const auto rep = certify(mode, st.plant, st.domain, st.iss_ptr(), st.controller, 0.33);
    verdicts.push_back(rep.verdict);
    // Worst face is xi_2 <= 1 with support sqrt(0.99).
    EXPECT_NEAR(rep.margin, 1.0 - std::sqrt(0.99), 1e-12);
  }
  EXPECT_EQ(verdicts[0], Verdict::kCertified);
  EXPECT_EQ(verdicts[1], verdicts[0]);
  EXPECT_EQ(verdicts[2], verdicts[0]);
}

TEST_F(ScenarioTubeTest, PreconditionsEnforced) {
  auto st = load("sinusoid");
  EXPECT_THROW(certify(CertifyMode::kSetPoint, st.plant, st.domain, st.iss_ptr(), st.controller,
                       0.08),
               TubeError);
  EXPECT_THROW(certify(CertifyMode::kStatic, st.plant, st.domain, st.iss_ptr(), st.controller,
                       1e-5),
               TubeError);
  EXPECT_THROW(certify(CertifyMode::kDynamic, st.plant, st.domain, nullptr, st.controller, 0.08),
               TubeError);
  RedesignController weak = st.controller;
  weak.rho = 0.5;
  EXPECT_THROW(certify(CertifyMode::kDynamic, st.plant, st.domain, st.iss_ptr(), weak, 0.08),
               TubeError);
  RedesignController wide = st.controller;
  wide.reference = sinusoid_reference(2, 1.2, 1.0);
  EXPECT_THROW(certify(CertifyMode::kDynamic, st.plant, st.domain, st.iss_ptr(), wide, 0.08),
               TubeError);
}

TEST_F(ScenarioTubeTest, FiniteTimeNeedsHorizon) {
  const auto st = load("sinusoid");
  CertifyOptions opt;
  opt.finite_time = 2.0;
  const auto rep = certify(CertifyMode::kFiniteTime, st.plant, st.domain, st.iss_ptr(),
                           st.controller, 0.08, opt);
  EXPECT_EQ(rep.verdict, Verdict::kCertified);
  EXPECT_DOUBLE_EQ(rep.horizon_checked, 2.0);
  opt.finite_time = 0.0;
  EXPECT_THROW(certify(CertifyMode::kFiniteTime, st.plant, st.domain, st.iss_ptr(), st.controller,
                       0.08, opt),
               TubeError);
}

// Certified tubes: densely sampled section boundaries stay strictly inside D_r.
TEST_F(ScenarioTubeTest, CertifiedTubeIsContained) {
  const auto st = load("sinusoid");
  const auto rep = certify(CertifyMode::kDynamic, st.plant, st.domain, st.iss_ptr(),
                           st.controller, 0.08);
  ASSERT_EQ(rep.verdict, Verdict::kCertified);
  const Tube tube = make_tube(TubeKind::kDynamic, st.controller, 0.08, 30.0);
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> ut(0.0, 30.0);
  for (int i = 0; i < 300; ++i) {
    const auto sec = tube.section(ut(rng));
    for (int k = 0; k < 64; ++k) {
      const double a = 2 * M_PI * k / 64;
      EXPECT_TRUE(st.domain.contains(sec.boundary_point(vec({std::cos(a), std::sin(a)}))));
    }
  }
}

TEST_F(ScenarioTubeTest, DynamicSectionsNestInsideStatic) {
  const auto st = load("sinusoid");
  const Tube dyn = make_tube(TubeKind::kDynamic, st.controller, 0.08, 20.0);
  const Tube stat = make_tube(TubeKind::kStatic, st.controller, 0.08, 20.0);
  EXPECT_EQ(dyn.level_at(0.0), stat.level_at(0.0));
  double previous = dyn.level_at(0.0);
  for (int i = 1; i <= 200; ++i) {
    const double t = 0.1 * i;
    EXPECT_LE(dyn.level_at(t), stat.level_at(t));
    EXPECT_LT(dyn.level_at(t), previous);
    previous = dyn.level_at(t);
  }
  EXPECT_THROW(make_tube(TubeKind::kStatic, st.controller, 1e-5, 20.0), TubeError);
}

TEST(TubeCsvTest, HeaderAndRowCount) {
  const auto st = build_setup(*builtin_scenario("sinusoid"));
  const Tube tube = make_tube(TubeKind::kDynamic, st.controller, 0.08, 5.0);
  const std::vector<double> times = {0.0, 1.0, 2.0};
  std::ostringstream out;
  write_tube_csv(out, tube, times, 8);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,level,k,xi_1,xi_2");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 24);
}

TEST(ComparisonCheckTest, EqualityAndViolation) {
  auto g = [](double psi, double) { return -psi + 1.0; };
  std::vector<double> times, exact, high;
  for (int i = 0; i <= 100; ++i) {
    const double t = 0.05 * i;
    times.push_back(t);
    exact.push_back(1.0 - std::exp(-t));
    high.push_back(1.0 - std::exp(-t) + (t > 2.0 ? 1e-3 : 0.0));
  }
  EXPECT_TRUE(comparison_check(g, times, exact, 0.0).holds);
  const auto bad = comparison_check(g, times, high, 0.0);
  EXPECT_FALSE(bad.holds);
  EXPECT_NEAR(bad.worst_gap, 1e-3, 1e-8);
  EXPECT_THROW(comparison_check(g, times, exact, -1.0), TubeError);
}

// chi' = g(chi, t) - s with s >= 0 and chi(0) <= psi0: the lemma's hypotheses.
TEST(ComparisonCheckPropertyTest, RandomSubsolutions) {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> ua(0.1, 3.0), ub(-1.0, 1.0), uw(0.5, 6.0),
      us(0.0, 1.0), ud(0.0, 0.5), up(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = ua(rng), b = ub(rng), w = uw(rng), s = us(rng), d = ud(rng);
    const double psi0 = up(rng);
    auto g = [=](double psi, double t) { return -a * psi + b * std::sin(w * t); };
    auto chi_rhs = [=](double t, double x) { return -a * x + b * std::sin(w * t) - s; };
    std::vector<double> times, chi;
    double x = psi0 - d;
    for (int i = 0; i <= 200; ++i) {
      times.push_back(0.025 * i);
      chi.push_back(x);
      // Advance the oracle sub-solution by one sample interval.
      const double t0 = 0.025 * i;
      auto shifted = [&](double tau, double v) { return chi_rhs(t0 + tau, v); };
      x = oracles::rk4_scalar(shifted, x, 0.025, 1e-3);
    }
    const auto res = comparison_check(g, times, chi, psi0);
    EXPECT_TRUE(res.holds) << "trial " << trial << " gap " << res.worst_gap;
  }
}

}  // namespace
}  // namespace lyaptube
