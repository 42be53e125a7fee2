#include "lyaptube/tube.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <boost/numeric/odeint.hpp>

namespace lyaptube {

namespace odeint = boost::numeric::odeint;

namespace {

using Scalar1 = std::array<double, 1>;

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

// ---------------------------------------------------------------------------
// Level functions

double alpha_inf(const ComparisonBounds& bounds, double mu) {
  if (!(mu >= 0.0)) throw TubeError("alpha_inf: mu must be >= 0");
  try {
    return bounds.alpha2(bounds.alpha3.inverse(mu / 4.0));
  } catch (const ClassKError& e) {
    throw TubeError(std::string("alpha_inf: ") + e.what());
  }
}

MuSelection select_mu(const ComparisonBounds& bounds, double r_inf) {
  if (!(r_inf > 0.0)) throw TubeError("select_mu: r_inf must be > 0");
  // alpha_inf(mu) = v  <=>  mu = 4 alpha3(alpha2^-1(v))
  MuSelection out;
  out.supremum = 4.0 * bounds.alpha3(bounds.alpha2.inverse(bounds.alpha1(r_inf)));
  out.recommended = 0.9 * out.supremum;
  return out;
}

double TubeLevel::rate(double nu) const {
  const double clamped = std::max(nu, 0.0);
  const double value =
      -spec_.bounds.alpha3(spec_.bounds.alpha2.inverse(clamped)) + spec_.mu / 4.0;
  if (!std::isfinite(value)) throw TubeError("tube level: non-finite rate");
  return value;
}

double TubeLevel::operator()(double t) const {
  if (!(t >= 0.0)) throw TubeError("tube level: negative time");
  if (closed_form_) return limit_ + (spec_.c0 - limit_) * std::exp(-decay_ * t);
  if (t > t_end_ * (1.0 + 1e-12)) throw TubeError("tube level: time beyond solved horizon");

  const auto last = samples_.size() - 1;
  const double pos = std::min(t / sample_step_, static_cast<double>(last));
  auto i = static_cast<std::size_t>(pos);
  if (i >= last) return samples_[last];
  const double h = sample_step_;
  const double s = (t - static_cast<double>(i) * h) / h;
  const double y0 = samples_[i];
  const double y1 = samples_[i + 1];
  const double m0 = rate(y0) * h;
  const double m1 = rate(y1) * h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * m1;
}

TubeLevel solve_nu(const LevelSpec& spec, double t_end, double rtol,
                   bool force_numeric) {
  if (!(spec.mu >= 0.0)) throw TubeError("solve_nu: mu must be >= 0");
  if (!(spec.c0 >= 0.0)) throw TubeError("solve_nu: c0 must be >= 0");
  if (!(t_end > 0.0)) throw TubeError("solve_nu: t_end must be > 0");

  TubeLevel level;
  level.spec_ = spec;
  level.limit_ = alpha_inf(spec.bounds, spec.mu);

  if (spec.bounds.quadratic && !force_numeric) {
    const auto& q = *spec.bounds.quadratic;
    level.closed_form_ = true;
    level.t_end_ = kInf;
    level.decay_ = q.c3 / q.c2;
    // Same expression as alpha_inf so the equilibrium start is exact.
    return level;
  }

  const int intervals = std::max(100, static_cast<int>(std::ceil(t_end / 1e-2)));
  level.sample_step_ = t_end / intervals;
  level.t_end_ = t_end;
  level.samples_.reserve(static_cast<std::size_t>(intervals) + 1);

  auto rhs = [&level](const Scalar1& x, Scalar1& dxdt, double) { dxdt[0] = level.rate(x[0]); };
  Scalar1 state{spec.c0};
  auto stepper =
      odeint::make_dense_output(1e-3 * rtol, rtol, odeint::runge_kutta_dopri5<Scalar1>());
  std::vector<double> times(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) times[i] = level.sample_step_ * i;
  times.back() = t_end;
  odeint::integrate_times(stepper, rhs, state, times.begin(), times.end(),
                          level.sample_step_,
                          [&level](const Scalar1& x, double) {
                            if (!std::isfinite(x[0])) throw TubeError("solve_nu: non-finite state");
                            level.samples_.push_back(x[0]);
                          });
  return level;
}

// ---------------------------------------------------------------------------
// Sections

bool TubeSection::contains(const Vector& xi, double tol) const {
  const Vector e = xi - center;
  return e.dot(P * e) <= level + tol;
}

Vector TubeSection::boundary_point(const Vector& unit_direction) const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(P);
  const Matrix inv_sqrt = es.operatorInverseSqrt();
  return center + std::sqrt(level) * (inv_sqrt * unit_direction);
}

double support(const TubeSection& section, const Vector& direction) {
  if (!(direction.norm() > 0.0)) throw TubeError("support: zero direction");
  if (section.P_inv.rows() != direction.size() || section.P_inv.cols() != direction.size()) {
    throw TubeError("support: P^-1 unavailable");
  }
  const double spread = direction.dot(section.P_inv * direction);
  return direction.dot(section.center) + std::sqrt(std::max(section.level, 0.0) * spread);
}

MinkowskiParts minkowski_decompose(const TubeSection& section) {
  MinkowskiParts parts;
  parts.center = section.center;
  parts.centered = section;
  parts.centered.center = Vector::Zero(section.center.size());
  return parts;
}

bool minkowski_contains(const MinkowskiParts& parts, const Vector& xi) {
  return parts.centered.contains(xi - parts.center);
}

// ---------------------------------------------------------------------------
// Tube

Tube::Tube(TubeKind kind, Reference reference, QuadraticLyapunov lyap, TubeLevel level)
    : kind_(kind),
      reference_(std::move(reference)),
      lyap_(std::move(lyap)),
      level_(std::move(level)) {
  if (kind_ == TubeKind::kStatic && level_.c0() < level_.limit()) {
    throw TubeError("static tube requires c0 >= alpha_inf(mu)");
  }
}

double Tube::level_at(double t) const {
  return kind_ == TubeKind::kDynamic ? level_(t) : level_.c0();
}

TubeSection Tube::section(double t) const {
  return TubeSection{desired_state(reference_, t), level_at(t), lyap_.P, lyap_.P_inv};
}

Tube make_tube(TubeKind kind, const RedesignController& ctrl, double c0, double t_end) {
  if (!ctrl.nominal.quadratic) throw TubeError("ellipsoidal tube needs a quadratic V_N");
  const double mu = ctrl.discontinuous ? 0.0 : ctrl.mu;
  return Tube(kind, ctrl.reference, *ctrl.nominal.quadratic,
              solve_nu({ctrl.nominal.bounds, mu, c0}, t_end));
}

void write_tube_csv(std::ostream& out, const Tube& tube, std::span<const double> times,
                    int points_per_section) {
  const int n = tube.reference().n_xi();
  if (n == 1) {
    out << "t,level,k,xi_1\n";
  } else {
    out << "t,level,k,xi_1,xi_2\n";
  }
  out.precision(17);
  for (const double t : times) {
    const TubeSection s = tube.section(t);
    if (n == 1) {
      const double half = std::sqrt(s.level * s.P_inv(0, 0));
      out << t << ',' << s.level << ",0," << s.center[0] - half << '\n';
      out << t << ',' << s.level << ",1," << s.center[0] + half << '\n';
      continue;
    }
    // Projection onto (xi_1, xi_2) has shape matrix level * (P^-1)[0:2, 0:2].
    const Eigen::Matrix2d shape = s.level * s.P_inv.topLeftCorner(2, 2);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(shape);
    const Eigen::Matrix2d root = es.operatorSqrt();
    for (int k = 0; k < points_per_section; ++k) {
      const double angle = 2.0 * M_PI * k / points_per_section;
      const Eigen::Vector2d p = s.center.head<2>() + root * Eigen::Vector2d(std::cos(angle), std::sin(angle));
      out << t << ',' << s.level << ',' << k << ',' << p[0] << ',' << p[1] << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Certification

std::string to_string(CertifyMode mode) {
  switch (mode) {
    case CertifyMode::kDynamic: return "dynamic";
    case CertifyMode::kStatic: return "static";
    case CertifyMode::kSetPoint: return "set-point";
    case CertifyMode::kFiniteTime: return "finite-time";
  }
  return "unknown";
}

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kCertified: return "certified";
    case Verdict::kNotCertified: return "not-certified";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "unknown";
}

namespace {

struct FaceData {
  Vector normal;
  double offset;
  double norm;
  double spread;  // sqrt(a^T P^-1 a)
};

/// Uniformly gridded stretch of the tube. `level` may be constant.
struct Stretch {
  double t0;
  double t1;
  std::function<double(double)> level;
  bool tail;
};

struct GridResult {
  double sampled = kInf;
  double rigorous = kInf;
  Witness witness;
};

void update_witness(GridResult& r, double margin, double t, bool tail, int face,
                    const FaceData& f) {
  if (margin < r.sampled) {
    r.sampled = margin;
    r.witness.time = t;
    r.witness.in_tail = tail;
    r.witness.face = face;
    r.witness.direction = f.normal / f.norm;
    r.witness.excess = -margin;
  }
}

void scan_stretch(const Stretch& s, double dt, const Reference& ref, const DomainSpec& dom,
                  const std::vector<FaceData>& faces, GridResult& r) {
  const int steps = std::max(1, static_cast<int>(std::ceil((s.t1 - s.t0) / dt - 1e-9)));
  const double h = (s.t1 - s.t0) / steps;
  const double lip = ref.lipschitz_bound;

  std::vector<double> prev_center(faces.size());
  double prev_root = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double t = k == steps ? s.t1 : s.t0 + h * k;
    const Vector xi_d = desired_state(ref, t);
    if (!dom.contains(xi_d)) {
      throw TubeError("certify: reference leaves D_r at t = " + std::to_string(t));
    }
    const double root = std::sqrt(std::max(s.level(t), 0.0));
    for (std::size_t i = 0; i < faces.size(); ++i) {
      const FaceData& f = faces[i];
      const double c = f.normal.dot(xi_d);
      update_witness(r, (f.offset - c - f.spread * root) / f.norm, t, s.tail,
                     static_cast<int>(i), f);
      if (k > 0) {
        const double center_bound = 0.5 * (c + prev_center[i] + f.norm * lip * h);
        const double bound = center_bound + f.spread * std::max(root, prev_root);
        r.rigorous = std::min(r.rigorous, (f.offset - bound) / f.norm);
      } else if (s.t1 == s.t0) {
        r.rigorous = std::min(r.rigorous, (f.offset - c - f.spread * root) / f.norm);
      }
      prev_center[i] = c;
    }
    prev_root = root;
    if (s.t1 == s.t0) break;
  }
}

void scan_settled_tail(const ReferenceTail& tail, double level, double t_mark,
                       const DomainSpec& dom, const std::vector<FaceData>& faces,
                       GridResult& r) {
  if (!dom.contains(tail.limit)) throw TubeError("certify: reference limit outside D_r");
  const double root = std::sqrt(std::max(level, 0.0));
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const FaceData& f = faces[i];
    const double bound = f.normal.dot(tail.limit) + f.norm * tail.tail_radius + f.spread * root;
    const double margin = (f.offset - bound) / f.norm;
    update_witness(r, margin, t_mark, true, static_cast<int>(i), f);
    r.rigorous = std::min(r.rigorous, margin);
  }
}

/// Smallest time after which the level is within 1% of its limit gap.
double convergence_time(const TubeLevel& level) {
  const double gap = std::abs(level.c0() - level.limit());
  if (gap == 0.0) return 0.0;
  double t = 1.0;
  while (t < 1e4 && std::abs(level(t) - level.limit()) > 0.01 * gap) t *= 2.0;
  return t;
}

bool samples_constant(const Reference& ref) {
  const Vector start = desired_state(ref, 0.0);
  for (int i = 0; i <= 200; ++i) {
    const double t = 0.5 * i;
    if (!(desired_state(ref, t) - start).isZero(0.0)) return false;
    if (top_derivative(ref, t) != 0.0) return false;
    if (!desired_velocity(ref, t).isZero(0.0)) return false;
  }
  return true;
}

}  // namespace

CertificationReport certify(CertifyMode mode, const PlantSpec& plant, const DomainSpec& dom,
                            const IssCertificate* iss, const RedesignController& ctrl,
                            double c0, const CertifyOptions& options) {
  plant.validate();
  dom.validate();
  if (plant.n_xi != dom.dimension() || plant.n_xi != ctrl.nominal.n_xi) {
    throw TubeError("certify: dimension mismatch");
  }
  try {
    ctrl.validate(dom.delta_bound);
  } catch (const SynthesisError& e) {
    throw TubeError(std::string("certify: ") + e.what());
  }
  if (!ctrl.nominal.quadratic) throw TubeError("certify: ellipsoidal check needs a quadratic V_N");
  if (plant.n_eta > 0) {
    if (iss == nullptr) throw TubeError("certify: internal dynamics need an ISS certificate");
    if (!iss->radius_condition_holds(dom.radius_r)) {
      throw TubeError("certify: c_r < alpha2(gamma(r))");
    }
  }
  if (!(c0 >= 0.0)) throw TubeError("certify: c0 must be >= 0");

  const Reference& ref = ctrl.reference;
  const QuadraticLyapunov& lyap = *ctrl.nominal.quadratic;
  const double mu = ctrl.discontinuous ? 0.0 : ctrl.mu;

  CertificationReport report;
  report.mode = mode;
  report.c0 = c0;
  report.mu = mu;
  report.alpha_inf = alpha_inf(ctrl.nominal.bounds, mu);
  report.c_r = iss != nullptr ? iss->c_r : 0.0;
  report.admissible_initial_set = TubeSection{desired_state(ref, 0.0), c0, lyap.P, lyap.P_inv};

  if ((mode == CertifyMode::kStatic || mode == CertifyMode::kSetPoint) &&
      c0 < report.alpha_inf) {
    throw TubeError("certify: " + to_string(mode) + " mode requires c0 >= alpha_inf(mu)");
  }
  if (mode == CertifyMode::kSetPoint && !(ref.is_set_point || samples_constant(ref))) {
    throw TubeError("certify: set-point mode requires a constant reference");
  }
  if (mode == CertifyMode::kFiniteTime && !(options.finite_time > 0.0)) {
    throw TubeError("certify: finite-time mode requires T_f > 0");
  }

  std::vector<FaceData> faces;
  for (const auto& h : dom.halfspaces) {
    faces.push_back({h.normal, h.offset, h.normal.norm(),
                     std::sqrt(h.normal.dot(lyap.P_inv * h.normal))});
  }

  // Reduce the union over time to finitely many stretches.
  std::vector<Stretch> stretches;
  std::optional<std::pair<double, double>> settled;  // (level, time mark)
  std::ostringstream reduction;

  // Long enough for every finite stretch below.
  double solve_end = 1.0;
  if (ref.finite_horizon()) solve_end = std::max(solve_end, ref.horizon);
  if (mode == CertifyMode::kFiniteTime) solve_end = std::max(solve_end, options.finite_time);
  solve_end = std::max(solve_end, ref.tail.settle_time + ref.tail.period);
  const TubeLevel probe = solve_nu({ctrl.nominal.bounds, mu, c0}, 1.0, options.rtol);
  const double t_conv = probe.closed_form() ? convergence_time(probe) : 0.0;
  solve_end = std::max(solve_end, ref.tail.settle_time + t_conv + ref.tail.period) + 1.0;
  const TubeLevel nu = solve_nu({ctrl.nominal.bounds, mu, c0}, solve_end, options.rtol);

  std::function<double(double)> level_fn;
  if (mode == CertifyMode::kStatic || mode == CertifyMode::kSetPoint) {
    level_fn = [c0](double) { return c0; };
  } else {
    level_fn = [&nu](double t) { return nu(t); };
  }

  if (mode == CertifyMode::kSetPoint) {
    stretches.push_back({0.0, 0.0, level_fn, false});
    reduction << "set-point: union equals the t = 0 section";
  } else if (mode == CertifyMode::kFiniteTime || ref.finite_horizon()) {
    const double t_f = mode == CertifyMode::kFiniteTime
                           ? (ref.finite_horizon() ? std::min(options.finite_time, ref.horizon)
                                                   : options.finite_time)
                           : ref.horizon;
    stretches.push_back({0.0, t_f, level_fn, false});
    reduction << "finite interval [0, " << t_f << "]";
  } else {
    const ReferenceTail& tail = ref.tail;
    if (tail.kind == ReferenceTail::Kind::kNone) {
      throw TubeError("certify: infinite horizon needs a periodic or settling tail");
    }
    double t_u = tail.settle_time;
    if (tail.kind == ReferenceTail::Kind::kPeriodic) {
      if (!(tail.period > 0.0)) throw TubeError("certify: periodic tail needs a period");
      if (mode == CertifyMode::kDynamic && t_conv > t_u) {
        t_u += std::ceil((t_conv - t_u) / tail.period) * tail.period;
      }
    } else if (mode == CertifyMode::kDynamic) {
      t_u = std::max(t_u, t_conv);
    }
    // nu is monotone, so on [t_u, inf) it lies between nu(t_u) and its limit.
    const double tail_level = mode == CertifyMode::kDynamic
                                  ? std::max(nu(t_u), report.alpha_inf)
                                  : c0;
    if (t_u > 0.0) stretches.push_back({0.0, t_u, level_fn, false});
    if (tail.kind == ReferenceTail::Kind::kPeriodic) {
      stretches.push_back({t_u, t_u + tail.period, [tail_level](double) { return tail_level; }, true});
      reduction << "grid [0, " << t_u << "] + one period " << tail.period << " at level "
                << tail_level;
    } else {
      settled = std::make_pair(tail_level, t_u);
      reduction << "grid [0, " << t_u << "] + settled section at limit, tail radius "
                << tail.tail_radius << ", level " << tail_level;
      if (t_u == 0.0) stretches.push_back({0.0, 0.0, level_fn, false});
    }
  }
  report.reduction = reduction.str();
  report.horizon_checked = 0.0;
  for (const auto& s : stretches) report.horizon_checked = std::max(report.horizon_checked, s.t1);

  const bool any_motion =
      std::any_of(stretches.begin(), stretches.end(), [](const Stretch& s) { return s.t1 > s.t0; });
  double dt = options.initial_step;
  GridResult result;
  while (true) {
    result = GridResult{};
    for (const auto& s : stretches) scan_stretch(s, dt, ref, dom, faces, result);
    if (settled) scan_settled_tail(ref.tail, settled->first, settled->second, dom, faces, result);

    const double slack = result.sampled - result.rigorous;
    const bool refine = any_motion && result.sampled > 0.0 &&
                        slack > options.slack_fraction * result.sampled &&
                        dt * 0.5 >= options.min_step;
    if (!refine) break;
    dt *= 0.5;
  }

  report.margin = result.sampled;
  report.slack = result.sampled - result.rigorous;
  report.grid_step = any_motion ? dt : 0.0;
  report.witness = result.witness;
  if (result.rigorous > 0.0) {
    report.verdict = Verdict::kCertified;
  } else if (result.sampled <= 0.0) {
    report.verdict = Verdict::kNotCertified;
  } else {
    report.verdict = Verdict::kInconclusive;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Comparison lemma

ComparisonResult comparison_check(const std::function<double(double, double)>& g,
                                  std::span<const double> times, std::span<const double> chi,
                                  double psi0, double tol) {
  if (times.empty() || times.size() != chi.size()) {
    throw TubeError("comparison_check: samples must be nonempty and aligned");
  }
  if (times.front() != 0.0) throw TubeError("comparison_check: samples must start at 0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw TubeError("comparison_check: times must increase");
  }
  if (chi.front() > psi0 + tol) throw TubeError("comparison_check: chi(0) > psi(0)");

  auto rhs = [&g](const Scalar1& x, Scalar1& dxdt, double t) { dxdt[0] = g(x[0], t); };
  Scalar1 state{psi0};
  auto stepper = odeint::make_dense_output(1e-12, 1e-10, odeint::runge_kutta_dopri5<Scalar1>());
  ComparisonResult out;
  out.worst_gap = -kInf;
  std::size_t k = 0;
  const double first_step = times.size() > 1 ? (times[1] - times[0]) : 1e-3;
  odeint::integrate_times(stepper, rhs, state, times.begin(), times.end(), first_step,
                          [&](const Scalar1& x, double) {
                            if (!std::isfinite(x[0])) {
                              throw TubeError("comparison_check: integration failed");
                            }
                            out.worst_gap = std::max(out.worst_gap, chi[k] - x[0]);
                            ++k;
                          });
  out.holds = out.worst_gap <= tol;
  return out;
}

}  // namespace lyaptube
