#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lyaptube/class_k.hpp"

namespace lyaptube {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid model data or an evaluation outside the model's contract.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plant in Byrnes-Isidori form:
///   xi'  = A xi + B (a(xi, eta) + b(xi, eta) u + delta(xi, eta, t))
///   eta' = q(xi, eta)
///   y    = xi_1
/// with (A, B) the Brunovsky integrator chain of length n_xi. With n_eta = 0
/// the internal dynamics are absent and eta is always an empty vector.
struct PlantSpec {
  using ScalarField = std::function<double(const Vector& xi, const Vector& eta)>;
  using VectorField = std::function<Vector(const Vector& xi, const Vector& eta)>;
  using Perturbation =
      std::function<double(const Vector& xi, const Vector& eta, double t)>;

  int n_xi = 1;
  int n_eta = 0;
  ScalarField a;
  ScalarField b;
  VectorField q;
  Perturbation delta;
  double b_floor = 1.0;

  /// Throws ModelError on inconsistent dimensions or missing callbacks.
  void validate() const;

  double eval_a(const Vector& xi, const Vector& eta) const;
  /// b(xi, eta), checked against the floor |b| >= b_floor.
  double eval_b(const Vector& xi, const Vector& eta) const;
  Vector eval_q(const Vector& xi, const Vector& eta) const;
  double eval_delta(const Vector& xi, const Vector& eta, double t) const;
};

struct Halfspace {
  Vector normal;
  double offset = 0.0;
};

/// Open polytope D_r = { xi : normal_i . xi < offset_i }, contained in the
/// ball of radius `radius_r`, on which |delta| <= delta_bound is asserted.
struct DomainSpec {
  std::vector<Halfspace> halfspaces;
  double radius_r = 0.0;
  double delta_bound = 0.0;

  static DomainSpec box(const Vector& lower, const Vector& upper,
                        double radius_r, double delta_bound);

  int dimension() const;
  bool contains(const Vector& xi) const;
  bool closure_contains(const Vector& xi, double tol = 0.0) const;
  /// min_i (offset_i - normal_i . xi) / |normal_i|; positive iff inside.
  double signed_margin(const Vector& xi) const;

  /// Vertices of the closure, by brute-force enumeration of n-subsets of
  /// faces. Intended for the small dimensions of this library.
  std::vector<Vector> vertices() const;

  /// Checks boundedness (direction probing) and that every vertex lies in
  /// the closed ball of radius r. Throws ModelError otherwise.
  void validate() const;
};

/// ISS-Lyapunov certificate of the internal dynamics with the internal set
/// P_r = { eta : V_eta(eta) < c_r }.
struct IssCertificate {
  std::function<double(const Vector&)> v_eta;
  ClassKFunction alpha1;
  ClassKFunction alpha2;
  ClassKFunction alpha3;
  ClassKFunction gamma;
  double c_r = 0.0;

  double value(const Vector& eta) const { return v_eta(eta); }

  /// c_r >= alpha2(gamma(r)).
  bool radius_condition_holds(double radius_r) const;
  /// alpha1(|eta|) <= V_eta(eta) <= alpha2(|eta|) at every sample.
  bool sandwich_holds(std::span<const Vector> samples, double tol = 1e-12) const;
};

/// True iff V_eta(eta) < c_r.
bool internal_set_contains(const IssCertificate& iss, const Vector& eta);

/// How the union over an infinite horizon is reduced to finite work.
struct ReferenceTail {
  enum class Kind { kNone, kPeriodic, kSettling };
  Kind kind = Kind::kNone;
  /// Reduction starts here (T_u).
  double settle_time = 0.0;
  /// kPeriodic only.
  double period = 0.0;
  /// kSettling only: limit of xi_d and a bound on |xi_d(t) - limit| for
  /// t >= settle_time.
  Vector limit;
  double tail_radius = 0.0;
};

/// Reference y_d with its first n_xi derivatives.
struct Reference {
  using Signal = std::function<double(double)>;

  /// derivatives[k] = y_d^(k), k = 0..n_xi.
  std::vector<Signal> derivatives;
  double horizon = std::numeric_limits<double>::infinity();
  /// Upper bound on |xi_d'(t)|_2 over the horizon.
  double lipschitz_bound = 0.0;
  ReferenceTail tail;
  /// Constant reference with vanishing derivatives.
  bool is_set_point = false;

  int n_xi() const { return static_cast<int>(derivatives.size()) - 1; }
  bool finite_horizon() const { return std::isfinite(horizon); }
};

/// [y_d, y_d', ..., y_d^(n_xi - 1)](t). Throws ModelError for t < 0.
Vector desired_state(const Reference& ref, double t);
/// y_d^(n_xi)(t), the feed-forward term of the control law.
double top_derivative(const Reference& ref, double t);
/// xi_d'(t) = [y_d', ..., y_d^(n_xi)](t).
Vector desired_velocity(const Reference& ref, double t);

/// max |xi_d'(t)|_2 over `samples` equally spaced points of [t0, t1].
double estimate_lipschitz(const Reference& ref, double t0, double t1,
                          int samples);

/// y_d = amplitude sin(frequency t). Periodic tail with T_u = 0.
Reference sinusoid_reference(int n_xi, double amplitude, double frequency);
/// y_d = final - (slope t + offset) exp(-rate t). Settling tail at
/// `settle_time`; Lipschitz bound estimated by dense sampling with a 5%
/// inflation.
Reference transition_reference(int n_xi, double final_value, double slope,
                               double offset, double rate,
                               double settle_time = 60.0);
/// Constant xi_d = [value, 0, ..., 0].
Reference set_point_reference(int n_xi, double value);
/// Piecewise-linear interpolation of sampled derivative channels.
/// rows[i] holds [y_d, ..., y_d^(n_xi)] at times[i]. Finite horizon
/// times.back(); values are held outside the sampled range.
Reference tabulated_reference(std::vector<double> times,
                              std::vector<std::vector<double>> rows);

/// True iff xi_d(t) lies in D_r for every sample of [0, t_end].
bool reference_inside_domain(const Reference& ref, const DomainSpec& dom,
                             double t_end, int samples);

/// One point of the (xi, eta) sampling grid.
struct StatePoint {
  Vector xi;
  Vector eta;
};

/// Sampling estimate of sup |delta| over D_r x P_r x time. This is not a
/// proof of the bound; callers compare the result against
/// DomainSpec::delta_bound. Grid points must lie in the closure of
/// D_r x P_r (ModelError otherwise). `iss` may be null when n_eta = 0.
double estimate_delta_bound(const PlantSpec& plant, const DomainSpec& dom,
                            const IssCertificate* iss,
                            std::span<const double> t_grid,
                            std::span<const StatePoint> space_grid);

/// Tensor grid with `points_per_axis` nodes per axis on [lower, upper]
/// (inclusive). Grids with 2^k + 1 nodes are nested under refinement.
std::vector<Vector> box_grid(const Vector& lower, const Vector& upper,
                             int points_per_axis);

}  // namespace lyaptube
