#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "lyaptube/controller.hpp"
#include "lyaptube/model.hpp"
#include "lyaptube/tube.hpp"

namespace lyaptube {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Integrator { kRk4Fixed, kRk45Adaptive };
enum class ExitPolicy { kStopAndReport, kContinue };

struct SimConfig {
  Integrator integrator = Integrator::kRk4Fixed;
  /// Fixed step for rk4; recording interval for rk45.
  double step = 1e-3;
  double rtol = 1e-9;
  double atol = 1e-12;
  double t_end = 20.0;
  ExitPolicy exit_policy = ExitPolicy::kStopAndReport;
  /// Keep every n-th step in the trajectory (monitors still see all steps).
  int record_every = 1;
  /// Initial tube level for the nu channel; V_N(xi_bar(0)) when absent.
  std::optional<double> tube_c0;

  void validate() const;
};

struct InitialState {
  Vector xi;
  Vector eta;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> xi;
  std::vector<Vector> eta;
  std::vector<double> u;
  std::vector<double> v_n;
  std::vector<double> v_l;
  std::vector<double> lyapunov;    // V_N(xi_bar)
  std::vector<double> v_eta;       // V_eta(eta), 0 without internal dynamics
  std::vector<double> nu;
  std::vector<double> error_norm;  // |xi_bar|_2

  /// Left D_r x P_r. With kStopAndReport the last sample is the crossing,
  /// bracketed to 1e-9 s.
  bool exited = false;
  double exit_time = 0.0;
  /// First sample index outside D_r x P_r; monitor data from here on is
  /// outside the model's contract. Equals size() when never exited.
  std::size_t contract_end = 0;
  double tube_c0 = 0.0;
  /// max over every integration step of V_N - nu.
  double peak_tube_excess = -std::numeric_limits<double>::infinity();
  /// max over every integration step of V_N.
  double peak_lyapunov = 0.0;
  /// max over every integration step of |xi|_2.
  double peak_state_norm = 0.0;

  std::size_t size() const { return times.size(); }
};

/// Closed-loop vector field [xi'; eta'] with the perturbation included.
Vector closed_loop_rhs(const PlantSpec& plant, const RedesignController& ctrl,
                       const Vector& state, double t);

/// dV_N/dt along the closed loop by the chain rule,
/// grad V_N(xi_bar) . (xi' - xi_d').
double lyapunov_rate(const PlantSpec& plant, const RedesignController& ctrl,
                     const Vector& xi, const Vector& eta, double t);

/// Integrates the perturbed closed loop from t = 0. `iss` may be null when
/// n_eta = 0. Throws SimulationError on non-finite states (including the
/// b-floor violation reported by the plant).
Trajectory integrate(const PlantSpec& plant, const RedesignController& ctrl,
                     const DomainSpec& dom, const IssCertificate* iss,
                     const InitialState& x0, const SimConfig& cfg);

/// Runs every initial state concurrently; results keep input order.
std::vector<Trajectory> integrate_batch(const PlantSpec& plant,
                                        const RedesignController& ctrl,
                                        const DomainSpec& dom,
                                        const IssCertificate* iss,
                                        std::span<const InitialState> initials,
                                        const SimConfig& cfg);

/// count points xi_d + sqrt(level) P^{-1/2} d_k, with d_k equally spaced on
/// the unit circle of the (xi_1, xi_2) plane (+-1 for n_xi = 1).
std::vector<Vector> boundary_initial_states(const TubeSection& section, int count);

/// Smallest sample time T with |xi_bar| <= r_inf for every later sample;
/// nullopt if the final sample violates.
std::optional<double> measure_ultimate_bound(const Trajectory& traj, double r_inf);

struct InternalReport {
  /// max{V_eta(eta0), alpha2(gamma(r_m))}, r_m = max |xi|.
  double bound = 0.0;
  double max_v_eta = 0.0;
  bool bounded = false;
  bool left_internal_set = false;
};

InternalReport monitor_internal(const Trajectory& traj, const IssCertificate& iss,
                                double tol = 1e-9);

/// Header `t,xi_1..,eta_1..,u,v_N,v_L,V_N,nu,V_eta`, one row per sample.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace lyaptube
