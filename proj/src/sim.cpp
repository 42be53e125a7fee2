#include "lyaptube/sim.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <string>

#include <Eigen/Eigenvalues>
#include <boost/numeric/odeint.hpp>

namespace lyaptube {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::vector<double>;

Vector to_vector(const State& s) { return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())); }

State to_state(const Vector& v) { return State(v.data(), v.data() + v.size()); }

Vector join(const Vector& xi, const Vector& eta) {
  Vector out(xi.size() + eta.size());
  out << xi, eta;
  return out;
}

struct Monitor {
  const PlantSpec& plant;
  const RedesignController& ctrl;
  const DomainSpec& dom;
  const IssCertificate* iss;
  const TubeLevel& nu;

  bool inside(const Vector& state) const {
    const Vector xi = state.head(plant.n_xi);
    if (!dom.contains(xi)) return false;
    if (plant.n_eta > 0 && iss != nullptr) {
      return internal_set_contains(*iss, state.tail(plant.n_eta));
    }
    return true;
  }
};

void check_finite(const Vector& state, double t) {
  if (!state.allFinite()) {
    throw SimulationError("non-finite state at t = " + std::to_string(t));
  }
}

class Recorder {
 public:
  Recorder(const Monitor& m, Trajectory& traj) : m_(m), traj_(traj) {}

  /// Updates the step monitors; appends a row when `keep`.
  void observe(const Vector& state, double t, bool keep) {
    const int n = m_.plant.n_xi;
    const Vector xi = state.head(n);
    const Vector eta = state.tail(m_.plant.n_eta);
    const ControlTerms terms = control_terms(m_.ctrl, m_.plant, xi, eta, t);
    const double v = m_.ctrl.nominal.lyapunov(terms.xi_bar);
    const double level = m_.nu(t);
    traj_.peak_tube_excess = std::max(traj_.peak_tube_excess, v - level);
    traj_.peak_lyapunov = std::max(traj_.peak_lyapunov, v);
    traj_.peak_state_norm = std::max(traj_.peak_state_norm, xi.norm());
    if (!keep) return;
    traj_.times.push_back(t);
    traj_.xi.push_back(xi);
    traj_.eta.push_back(eta);
    traj_.u.push_back(terms.u);
    traj_.v_n.push_back(terms.v_n);
    traj_.v_l.push_back(terms.v_l);
    traj_.lyapunov.push_back(v);
    traj_.v_eta.push_back(m_.plant.n_eta > 0 && m_.iss != nullptr ? m_.iss->value(eta) : 0.0);
    traj_.nu.push_back(level);
    traj_.error_norm.push_back(terms.xi_bar.norm());
  }

 private:
  const Monitor& m_;
  Trajectory& traj_;
};

}  // namespace

void SimConfig::validate() const {
  if (!(step > 0.0)) throw SimulationError("sim: step must be > 0");
  if (!(t_end > 0.0)) throw SimulationError("sim: t_end must be > 0");
  if (record_every < 1) throw SimulationError("sim: record_every must be >= 1");
  if (!(rtol > 0.0) || !(atol > 0.0)) throw SimulationError("sim: tolerances must be > 0");
}

Vector closed_loop_rhs(const PlantSpec& plant, const RedesignController& ctrl,
                       const Vector& state, double t) {
  const int n = plant.n_xi;
  const Vector xi = state.head(n);
  const Vector eta = state.tail(plant.n_eta);
  const double u = control(ctrl, plant, xi, eta, t);
  Vector out(state.size());
  for (int i = 0; i + 1 < n; ++i) out[i] = xi[i + 1];
  out[n - 1] = plant.eval_a(xi, eta) + plant.eval_b(xi, eta) * u + plant.eval_delta(xi, eta, t);
  if (plant.n_eta > 0) out.tail(plant.n_eta) = plant.eval_q(xi, eta);
  return out;
}

double lyapunov_rate(const PlantSpec& plant, const RedesignController& ctrl, const Vector& xi,
                     const Vector& eta, double t) {
  const Vector rhs = closed_loop_rhs(plant, ctrl, join(xi, eta), t);
  const Vector xi_bar = xi - desired_state(ctrl.reference, t);
  const Vector error_rate = rhs.head(plant.n_xi) - desired_velocity(ctrl.reference, t);
  return ctrl.nominal.gradient(xi_bar).dot(error_rate);
}

Trajectory integrate(const PlantSpec& plant, const RedesignController& ctrl, const DomainSpec& dom,
                     const IssCertificate* iss, const InitialState& x0, const SimConfig& cfg) {
  plant.validate();
  cfg.validate();
  if (x0.xi.size() != plant.n_xi || x0.eta.size() != plant.n_eta) {
    throw SimulationError("sim: initial state has wrong dimension");
  }
  if (plant.n_eta > 0 && iss == nullptr) {
    throw SimulationError("sim: internal dynamics need an ISS certificate for monitoring");
  }

  Trajectory traj;
  const Vector xi_bar0 = x0.xi - desired_state(ctrl.reference, 0.0);
  traj.tube_c0 = cfg.tube_c0.value_or(ctrl.nominal.lyapunov(xi_bar0));
  const double mu = ctrl.discontinuous ? 0.0 : ctrl.mu;
  const TubeLevel nu = solve_nu({ctrl.nominal.bounds, mu, traj.tube_c0}, cfg.t_end);

  const Monitor monitor{plant, ctrl, dom, iss, nu};
  Recorder recorder(monitor, traj);

  auto system = [&](const State& x, State& dxdt, double t) {
    dxdt = to_state(closed_loop_rhs(plant, ctrl, to_vector(x), t));
  };

  Vector state = join(x0.xi, x0.eta);
  recorder.observe(state, 0.0, true);
  if (!dom.closure_contains(x0.xi)) {
    throw SimulationError("sim: initial xi outside the closure of D_r");
  }
  // Starting on the boundary of D_r or outside P_r voids the contract from
  // the first sample; integration still proceeds.
  bool in_contract = monitor.inside(state);
  if (!in_contract) {
    traj.exited = true;
    traj.exit_time = 0.0;
    traj.contract_end = 0;
  }

  if (cfg.integrator == Integrator::kRk4Fixed) {
    odeint::runge_kutta4<State> rk4;
    const auto steps = static_cast<long>(std::ceil(cfg.t_end / cfg.step - 1e-9));
    double t = 0.0;
    for (long k = 1; k <= steps; ++k) {
      const double h = k == steps ? cfg.t_end - t : cfg.step;
      State x = to_state(state);
      rk4.do_step(system, x, t, h);
      Vector next = to_vector(x);
      const double t_next = k == steps ? cfg.t_end : t + h;
      check_finite(next, t_next);

      if (in_contract && !monitor.inside(next)) {
        if (cfg.exit_policy == ExitPolicy::kStopAndReport) {
          // Bisect a partial step of length tau in [lo, hi].
          double lo = 0.0;
          double hi = h;
          Vector at_hi = next;
          while (hi - lo > 1e-9) {
            const double mid = 0.5 * (lo + hi);
            State y = to_state(state);
            rk4.do_step(system, y, t, mid);
            const Vector v = to_vector(y);
            if (monitor.inside(v)) {
              lo = mid;
            } else {
              hi = mid;
              at_hi = v;
            }
          }
          recorder.observe(at_hi, t + hi, true);
          traj.exited = true;
          traj.exit_time = t + hi;
          traj.contract_end = traj.size() - 1;
          return traj;
        }
        const bool keep = true;
        recorder.observe(next, t_next, keep);
        traj.exited = true;
        traj.exit_time = t_next;
        traj.contract_end = traj.size() - 1;
        in_contract = false;
        state = next;
        t = t_next;
        continue;
      }
      const bool keep = (k % cfg.record_every == 0) || k == steps;
      recorder.observe(next, t_next, keep);
      state = next;
      t = t_next;
    }
  } else {
    auto stepper = odeint::make_dense_output(cfg.atol, cfg.rtol,
                                             odeint::runge_kutta_dopri5<State>());
    stepper.initialize(to_state(state), 0.0, cfg.step);
    long next_sample = 1;
    const auto samples = static_cast<long>(std::ceil(cfg.t_end / cfg.step - 1e-9));
    auto sample_time = [&](long k) { return k == samples ? cfg.t_end : cfg.step * k; };
    while (next_sample <= samples) {
      const auto [t0, t1] = stepper.do_step(system);
      State x(state.size());
      while (next_sample <= samples && sample_time(next_sample) <= t1) {
        const double ts = sample_time(next_sample);
        stepper.calc_state(ts, x);
        Vector v = to_vector(x);
        check_finite(v, ts);
        if (in_contract && !monitor.inside(v)) {
          if (cfg.exit_policy == ExitPolicy::kStopAndReport) {
            double lo = std::max(t0, ts - cfg.step);
            double hi = ts;
            Vector at_hi = v;
            while (hi - lo > 1e-9) {
              const double mid = 0.5 * (lo + hi);
              stepper.calc_state(mid, x);
              const Vector w = to_vector(x);
              if (monitor.inside(w)) {
                lo = mid;
              } else {
                hi = mid;
                at_hi = w;
              }
            }
            recorder.observe(at_hi, hi, true);
            traj.exited = true;
            traj.exit_time = hi;
            traj.contract_end = traj.size() - 1;
            return traj;
          }
          recorder.observe(v, ts, true);
          traj.exited = true;
          traj.exit_time = ts;
          traj.contract_end = traj.size() - 1;
          in_contract = false;
        } else {
          recorder.observe(v, ts, next_sample % cfg.record_every == 0 || next_sample == samples);
        }
        state = v;
        ++next_sample;
      }
    }
  }
  if (in_contract) traj.contract_end = traj.size();
  return traj;
}

std::vector<Trajectory> integrate_batch(const PlantSpec& plant, const RedesignController& ctrl,
                                        const DomainSpec& dom, const IssCertificate* iss,
                                        std::span<const InitialState> initials,
                                        const SimConfig& cfg) {
  std::vector<std::future<Trajectory>> jobs;
  jobs.reserve(initials.size());
  for (const auto& x0 : initials) {
    jobs.push_back(std::async(std::launch::async, [&, x0] {
      return integrate(plant, ctrl, dom, iss, x0, cfg);
    }));
  }
  std::vector<Trajectory> out;
  out.reserve(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    try {
      out.push_back(jobs[i].get());
    } catch (const std::exception& e) {
      throw SimulationError("run " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Vector> boundary_initial_states(const TubeSection& section, int count) {
  if (count < 1) throw SimulationError("boundary states: count must be >= 1");
  if (!(section.level > 0.0)) throw SimulationError("boundary states: level must be > 0");
  const auto n = section.center.size();
  Eigen::SelfAdjointEigenSolver<Matrix> es(section.P);
  const Matrix inv_sqrt = es.operatorInverseSqrt();
  const double radius = std::sqrt(section.level);
  std::vector<Vector> out;
  for (int k = 0; k < count; ++k) {
    Vector d = Vector::Zero(n);
    if (n == 1) {
      d[0] = k % 2 == 0 ? 1.0 : -1.0;
    } else {
      const double angle = 2.0 * M_PI * k / count;
      d[0] = std::cos(angle);
      d[1] = std::sin(angle);
    }
    out.push_back(section.center + radius * (inv_sqrt * d));
  }
  return out;
}

std::optional<double> measure_ultimate_bound(const Trajectory& traj, double r_inf) {
  if (traj.size() == 0) throw SimulationError("ultimate bound: empty trajectory");
  if (traj.error_norm.back() > r_inf) return std::nullopt;
  std::size_t i = traj.size() - 1;
  while (i > 0 && traj.error_norm[i - 1] <= r_inf) --i;
  return traj.times[i];
}

InternalReport monitor_internal(const Trajectory& traj, const IssCertificate& iss, double tol) {
  if (traj.size() == 0 || traj.eta.front().size() == 0) {
    throw SimulationError("internal monitor: trajectory has no internal state");
  }
  double r_m = traj.peak_state_norm;
  for (const auto& xi : traj.xi) r_m = std::max(r_m, xi.norm());

  InternalReport report;
  report.bound = std::max(iss.value(traj.eta.front()), iss.alpha2(iss.gamma(r_m)));
  report.bounded = true;
  for (const auto& eta : traj.eta) {
    const double v = iss.value(eta);
    report.max_v_eta = std::max(report.max_v_eta, v);
    if (v > report.bound + tol) report.bounded = false;
    if (!(v < iss.c_r)) report.left_internal_set = true;
  }
  return report;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const auto n_xi = traj.xi.empty() ? 0 : traj.xi.front().size();
  const auto n_eta = traj.eta.empty() ? 0 : traj.eta.front().size();
  out << 't';
  for (Eigen::Index i = 1; i <= n_xi; ++i) out << ",xi_" << i;
  for (Eigen::Index i = 1; i <= n_eta; ++i) out << ",eta_" << i;
  out << ",u,v_N,v_L,V_N,nu,V_eta\n";
  out.precision(17);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << traj.times[k];
    for (Eigen::Index i = 0; i < n_xi; ++i) out << ',' << traj.xi[k][i];
    for (Eigen::Index i = 0; i < n_eta; ++i) out << ',' << traj.eta[k][i];
    out << ',' << traj.u[k] << ',' << traj.v_n[k] << ',' << traj.v_l[k] << ',' << traj.lyapunov[k]
        << ',' << traj.nu[k] << ',' << traj.v_eta[k] << '\n';
  }
}

}  // namespace lyaptube
