#include "lyaptube/model.hpp"

#include <cmath>
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

TEST(DesiredStateTest, SinusoidAtZero) {
  const Reference ref = sinusoid_reference(2, 0.5, 1.0);
  const Vector xd = desired_state(ref, 0.0);
  EXPECT_NEAR(xd[0], 0.0, 1e-15);
  EXPECT_NEAR(xd[1], 0.5, 1e-15);
}

TEST(DesiredStateTest, SetPointIsConstant) {
  const Reference ref = set_point_reference(2, 0.25);
  for (double t : {0.0, 1.0, 123.4}) {
    EXPECT_EQ(desired_state(ref, t), vec({0.25, 0.0}));
    EXPECT_EQ(top_derivative(ref, t), 0.0);
  }
}

TEST(DesiredStateTest, TransitionStartAgainstFiniteDifference) {
  const Reference ref = transition_reference(2, 0.95, 1.15, 1.6, 0.5);
  const Vector xd = desired_state(ref, 0.0);
  EXPECT_NEAR(xd[0], -0.65, 1e-15);
  EXPECT_NEAR(xd[1], -0.35, 1e-15);
  // Oracle: central difference of the closed form, evaluated away from t = 0.
  auto y = [](double t) { return 0.95 - (1.15 * t + 1.6) * std::exp(-0.5 * t); };
  EXPECT_NEAR(oracles::central_difference(y, 1e-3), ref.derivatives[1](1e-3), 1e-8);
  EXPECT_NEAR(oracles::central_difference(y, 0.0), -0.35, 1e-8);
}

TEST(DesiredStateTest, NegativeTimeRejected) {
  const Reference ref = sinusoid_reference(2, 0.5, 1.0);
  EXPECT_THROW(desired_state(ref, -1e-9), ModelError);
}

// derivatives[k+1] matches a central difference of derivatives[k] to O(h^2).
TEST(DesiredStatePropertyTest, ChannelsAreConsistentDerivatives) {
  const std::vector<Reference> refs = {sinusoid_reference(3, 0.7, 1.3),
                                       transition_reference(3, 0.95, 1.15, 1.6, 0.5)};
  for (const auto& ref : refs) {
    for (double t = 0.1; t < 10.0; t += 0.37) {
      for (std::size_t k = 0; k + 1 < ref.derivatives.size(); ++k) {
        const double fd1 = oracles::central_difference(ref.derivatives[k], t, 1e-3);
        const double fd2 = oracles::central_difference(ref.derivatives[k], t, 5e-4);
        const double exact = ref.derivatives[k + 1](t);
        // Halving h must cut the error roughly by four.
        EXPECT_NEAR(fd1, exact, 1e-5);
        EXPECT_LE(std::abs(fd2 - exact), 0.3 * std::abs(fd1 - exact) + 1e-10);
      }
    }
  }
}

TEST(ReferenceTest, SinusoidLipschitzBoundsSampledVelocity) {
  const Reference ref = sinusoid_reference(2, 0.5, 2.0);
  EXPECT_GE(ref.lipschitz_bound, estimate_lipschitz(ref, 0.0, 10.0, 10001));
  EXPECT_EQ(ref.tail.kind, ReferenceTail::Kind::kPeriodic);
  EXPECT_NEAR(ref.tail.period, M_PI, 1e-15);
}

TEST(ReferenceTest, TransitionTailSettles) {
  const Reference ref = transition_reference(2, 0.95, 1.15, 1.6, 0.5, 60.0);
  EXPECT_EQ(ref.tail.kind, ReferenceTail::Kind::kSettling);
  EXPECT_EQ(ref.tail.limit, vec({0.95, 0.0}));
  EXPECT_LT(ref.tail.tail_radius, 1e-9);
  EXPECT_GE(ref.lipschitz_bound, estimate_lipschitz(ref, 0.0, 60.0, 60001));
}

TEST(ReferenceTest, TabulatedInterpolatesAndHolds) {
  const Reference ref = tabulated_reference({0.0, 1.0, 2.0}, {{0, 1, 0}, {1, 1, 0}, {2, 1, 0}});
  EXPECT_EQ(ref.n_xi(), 2);
  EXPECT_DOUBLE_EQ(desired_state(ref, 0.5)[0], 0.5);
  EXPECT_DOUBLE_EQ(desired_state(ref, 5.0)[0], 2.0);
  EXPECT_DOUBLE_EQ(ref.horizon, 2.0);
  EXPECT_DOUBLE_EQ(ref.lipschitz_bound, 1.0);
  EXPECT_THROW(tabulated_reference({0.0, 0.0}, {{0, 0}, {0, 0}}), ModelError);
  EXPECT_THROW(tabulated_reference({0.0, 1.0}, {{0, 0}, {0}}), ModelError);
}

TEST(ReferenceTest, InsideDomain) {
  const DomainSpec box = DomainSpec::box(vec({-1, -1}), vec({1, 1}), std::sqrt(2.0), 1.0);
  EXPECT_TRUE(reference_inside_domain(sinusoid_reference(2, 0.5, 1.0), box, 10.0, 1000));
  EXPECT_FALSE(reference_inside_domain(sinusoid_reference(2, 1.5, 1.0), box, 10.0, 1000));
}

TEST(DomainTest, PaperBoxValidates) {
  const DomainSpec box = DomainSpec::box(vec({-1, -1}), vec({1, 1}), std::sqrt(2.0), 1.0);
  EXPECT_NO_THROW(box.validate());
  EXPECT_EQ(box.vertices().size(), 4u);
  EXPECT_TRUE(box.contains(vec({0.99, -0.99})));
  EXPECT_FALSE(box.contains(vec({1.0, 0.0})));
  EXPECT_TRUE(box.closure_contains(vec({1.0, 0.0})));
  EXPECT_NEAR(box.signed_margin(vec({0.5, 0.0})), 0.5, 1e-15);
}

TEST(DomainTest, BallTooSmallRejected) {
  const DomainSpec box = DomainSpec::box(vec({-1, -1}), vec({1, 1}), 1.4, 1.0);
  EXPECT_THROW(box.validate(), ModelError);
}

TEST(DomainTest, UnboundedRejected) {
  DomainSpec half;
  half.halfspaces.push_back({vec({1.0, 0.0}), 1.0});
  half.halfspaces.push_back({vec({-1.0, 0.0}), 1.0});
  half.radius_r = 10.0;
  EXPECT_THROW(half.validate(), ModelError);
}

TEST(DomainTest, TriangleVertices) {
  DomainSpec tri;
  tri.halfspaces = {{vec({-1.0, 0.0}), 0.0}, {vec({0.0, -1.0}), 0.0}, {vec({1.0, 1.0}), 1.0}};
  tri.radius_r = 1.0;
  EXPECT_NO_THROW(tri.validate());
  EXPECT_EQ(tri.vertices().size(), 3u);
}

class ExampleModelTest : public ::testing::Test {
 protected:
  Scenario scenario_ = *builtin_scenario("sinusoid");
  PlantSpec plant_ = build_plant(scenario_);
  DomainSpec dom_ = build_domain(scenario_);
  IssCertificate iss_ = *build_iss(scenario_);
};

TEST_F(ExampleModelTest, InternalSetMembership) {
  EXPECT_NEAR(iss_.c_r, 0.5 * std::pow(std::sqrt(2.0) / 0.95, 2), 1e-15);
  EXPECT_NEAR(iss_.c_r, 1.10803, 1e-5);
  EXPECT_TRUE(internal_set_contains(iss_, vec({1.4})));
  EXPECT_TRUE(internal_set_contains(iss_, vec({0.0})));
  EXPECT_FALSE(internal_set_contains(iss_, vec({1.6})));
  EXPECT_TRUE(iss_.radius_condition_holds(dom_.radius_r));
}

TEST_F(ExampleModelTest, IssSandwichOnGrid) {
  std::vector<Vector> samples;
  for (double e = -1.48; e <= 1.48; e += 0.01) samples.push_back(vec({e}));
  EXPECT_TRUE(iss_.sandwich_holds(samples));
  EXPECT_TRUE(iss_.alpha3.check_class_k(2.0));
}

TEST_F(ExampleModelTest, BFloorViolationIsError) {
  PlantSpec weak = plant_;
  weak.b = [](const Vector&, const Vector&) { return 0.5; };
  EXPECT_THROW(weak.eval_b(vec({0, 0}), vec({0})), ModelError);
  EXPECT_DOUBLE_EQ(plant_.eval_b(vec({0, 0}), vec({0})), 1.0);
}

std::vector<StatePoint> example_grid(int per_axis, const Vector& eta) {
  std::vector<StatePoint> out;
  for (const auto& xi : box_grid(vec({-1, -1}), vec({1, 1}), per_axis)) out.push_back({xi, eta});
  return out;
}

TEST_F(ExampleModelTest, DeltaEstimateApproachesOne) {
  // sup over the closed box: (1 + 1)/8 + 3/4 = 1, at a corner with sin(5t) = 1.
  std::vector<double> times;
  for (int i = 0; i <= 2000; ++i) times.push_back(2.0 * M_PI / 5.0 * i / 2000.0);
  const double est = estimate_delta_bound(plant_, dom_, &iss_, times, example_grid(5, vec({1.4})));
  EXPECT_NEAR(est, 1.0, 1e-6);
  EXPECT_LE(est, dom_.delta_bound + 1e-12);
}

TEST_F(ExampleModelTest, DeltaEstimateTrivialCases) {
  PlantSpec zero = plant_;
  zero.delta = [](const Vector&, const Vector&, double) { return 0.0; };
  PlantSpec constant = plant_;
  constant.delta = [](const Vector&, const Vector&, double) { return -0.3; };
  const std::vector<double> times = {0.0, 1.0};
  const auto grid = example_grid(3, vec({0.0}));
  EXPECT_EQ(estimate_delta_bound(zero, dom_, &iss_, times, grid), 0.0);
  EXPECT_DOUBLE_EQ(estimate_delta_bound(constant, dom_, &iss_, times, grid), 0.3);
}

TEST_F(ExampleModelTest, DeltaEstimateRejectsOutsidePoints) {
  const std::vector<double> times = {0.0};
  std::vector<StatePoint> outside = {{vec({1.2, 0.0}), vec({0.0})}};
  EXPECT_THROW(estimate_delta_bound(plant_, dom_, &iss_, times, outside), ModelError);
  std::vector<StatePoint> eta_out = {{vec({0.0, 0.0}), vec({1.6})}};
  EXPECT_THROW(estimate_delta_bound(plant_, dom_, &iss_, times, eta_out), ModelError);
  EXPECT_THROW(estimate_delta_bound(plant_, dom_, &iss_, {}, outside), ModelError);
}

TEST_F(ExampleModelTest, DeltaEstimateMonotoneUnderRefinement) {
  std::vector<double> times;
  for (int i = 0; i <= 16; ++i) times.push_back(0.1 * i);
  double previous = 0.0;
  for (int level = 1; level <= 5; ++level) {
    const int per_axis = (1 << level) + 1;  // nested grids
    std::vector<double> fine_times;
    const int tn = (1 << level) * 8;
    for (int i = 0; i <= tn; ++i) fine_times.push_back(1.6 * i / tn);
    const double est = estimate_delta_bound(plant_, dom_, &iss_, fine_times,
                                            example_grid(per_axis, vec({0.5})));
    EXPECT_GE(est, previous);
    previous = est;
  }
}

}  // namespace
}  // namespace lyaptube
