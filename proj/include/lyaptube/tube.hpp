#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lyaptube/controller.hpp"
#include "lyaptube/model.hpp"

namespace lyaptube {

/// Tube construction or certification could not be carried out.
class TubeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// alpha_inf(mu) = alpha2(alpha3^-1(mu / 4)), the limit of every tube level.
double alpha_inf(const ComparisonBounds& bounds, double mu);

struct MuSelection {
  /// alpha_inf^-1(alpha1(r_inf)); any mu strictly below guarantees the
  /// ultimate bound r_inf.
  double supremum = 0.0;
  /// 0.9 * supremum.
  double recommended = 0.0;
};

MuSelection select_mu(const ComparisonBounds& bounds, double r_inf);

struct LevelSpec {
  ComparisonBounds bounds;
  /// mu = 0 is the discontinuous limit.
  double mu = 0.0;
  double c0 = 0.0;
};

/// Solution nu(t) of nu' = -alpha3(alpha2^-1(nu)) + mu / 4, nu(0) = c0.
///
/// Quadratic bounds use the exponential closed form and are valid for all
/// t >= 0. Otherwise the ODE is integrated with adaptive Dormand-Prince on
/// [0, t_end] and sampled densely; evaluation interpolates with cubic
/// Hermite polynomials using the exact right-hand side as slope.
class TubeLevel {
 public:
  double operator()(double t) const;
  /// Right-hand side of the comparison ODE at level `nu`.
  double rate(double nu) const;

  double mu() const { return spec_.mu; }
  double c0() const { return spec_.c0; }
  double limit() const { return limit_; }
  bool closed_form() const { return closed_form_; }
  /// Largest valid time (infinity for the closed form).
  double t_end() const { return t_end_; }
  const ComparisonBounds& bounds() const { return spec_.bounds; }

 private:
  friend TubeLevel solve_nu(const LevelSpec&, double, double, bool);

  LevelSpec spec_;
  double limit_ = 0.0;
  bool closed_form_ = false;
  double t_end_ = 0.0;
  // closed form: nu(t) = limit + (c0 - limit) exp(-decay t)
  double decay_ = 0.0;
  double sample_step_ = 0.0;
  std::vector<double> samples_;
};

/// Throws TubeError for mu < 0, c0 < 0, t_end <= 0 or a non-finite
/// class-K evaluation. `force_numeric` bypasses the closed form.
TubeLevel solve_nu(const LevelSpec& spec, double t_end, double rtol = 1e-9,
                   bool force_numeric = false);

/// Ellipsoid { xi : (xi - center)^T P (xi - center) <= level }. Level 0 is
/// the singleton {center}.
struct TubeSection {
  Vector center;
  double level = 0.0;
  Matrix P;
  Matrix P_inv;

  bool contains(const Vector& xi, double tol = 0.0) const;
  /// Points center + sqrt(level) P^{-1/2} d for unit directions d.
  Vector boundary_point(const Vector& unit_direction) const;
};

/// h(d) = d . center + sqrt(level d^T P^-1 d). Throws TubeError for a zero
/// direction or a missing P^-1.
double support(const TubeSection& section, const Vector& direction);

struct MinkowskiParts {
  Vector center;
  /// Same shape and level, centred at the origin.
  TubeSection centered;
};

/// V(t) = {xi_d(t)} (+) Vbar(t).
MinkowskiParts minkowski_decompose(const TubeSection& section);
/// Membership of xi in {center} (+) centered.
bool minkowski_contains(const MinkowskiParts& parts, const Vector& xi);

enum class TubeKind { kDynamic, kStatic };

/// Time-indexed family of ellipsoidal sections along the reference.
///
/// Dynamic sections use level nu(t); static sections keep level c0 and
/// require c0 >= alpha_inf(mu). Both coincide at t = 0.
class Tube {
 public:
  Tube(TubeKind kind, Reference reference, QuadraticLyapunov lyap, TubeLevel level);

  TubeKind kind() const { return kind_; }
  double level_at(double t) const;
  TubeSection section(double t) const;
  const TubeLevel& level() const { return level_; }
  const Reference& reference() const { return reference_; }
  const QuadraticLyapunov& lyapunov() const { return lyap_; }

 private:
  TubeKind kind_;
  Reference reference_;
  QuadraticLyapunov lyap_;
  TubeLevel level_;
};

/// Builds the tube of `ctrl` (quadratic design required) for initial level
/// c0, solving nu on [0, t_end].
Tube make_tube(TubeKind kind, const RedesignController& ctrl, double c0,
               double t_end);

/// Writes the (xi_1, xi_2) projection of section boundaries as CSV with
/// header `t,level,k,xi_1,xi_2` (`t,level,k,xi_1` for n_xi = 1, two
/// endpoints per section).
void write_tube_csv(std::ostream& out, const Tube& tube,
                    std::span<const double> times, int points_per_section);

enum class CertifyMode { kDynamic, kStatic, kSetPoint, kFiniteTime };
enum class Verdict { kCertified, kNotCertified, kInconclusive };

std::string to_string(CertifyMode mode);
std::string to_string(Verdict verdict);

struct CertifyOptions {
  /// T_f for kFiniteTime.
  double finite_time = 0.0;
  double initial_step = 1e-2;
  double min_step = 1e-6;
  /// Refinement stops once slack <= slack_fraction * margin.
  double slack_fraction = 0.01;
  double rtol = 1e-9;
};

struct Witness {
  double time = 0.0;
  /// True when the worst point is the settled/periodic tail bound.
  bool in_tail = false;
  int face = -1;
  Vector direction;
  /// support - offset, normalised by |normal|; positive is a violation.
  double excess = 0.0;
};

struct CertificationReport {
  Verdict verdict = Verdict::kInconclusive;
  CertifyMode mode = CertifyMode::kDynamic;
  /// Minimal sampled signed distance (per face) from the sections to the
  /// boundary of D_r.
  double margin = 0.0;
  /// margin minus the rigorous inter-sample lower bound.
  double slack = 0.0;
  double grid_step = 0.0;
  double horizon_checked = 0.0;
  std::string reduction;
  double c0 = 0.0;
  double mu = 0.0;
  double alpha_inf = 0.0;
  double c_r = 0.0;
  Witness witness;
  TubeSection admissible_initial_set;
};

/// Decides whether the union of tube sections lies in D_r.
///
/// Dynamic and finite-time modes use nu(t); static mode uses c0 (needs
/// c0 >= alpha_inf); set-point mode checks only t = 0 and needs a constant
/// reference and c0 >= alpha_inf. Between grid samples the centre moves at
/// most lipschitz_bound * dt and sqrt(level) is bounded by its larger
/// endpoint (nu is monotone), which gives a rigorous lower margin. The grid
/// halves until that slack is below slack_fraction of the margin.
///
/// Throws TubeError if the reference leaves D_r, a precondition fails, or
/// the design is not quadratic.
CertificationReport certify(CertifyMode mode, const PlantSpec& plant,
                            const DomainSpec& dom, const IssCertificate* iss,
                            const RedesignController& ctrl, double c0,
                            const CertifyOptions& options = {});

struct ComparisonResult {
  bool holds = false;
  /// max_k chi(t_k) - psi(t_k).
  double worst_gap = 0.0;
};

/// Integrates psi' = g(psi, t), psi(0) = psi0, and checks chi <= psi + tol at
/// every sample time. Sample times must start at 0 and increase.
ComparisonResult comparison_check(const std::function<double(double, double)>& g,
                                  std::span<const double> times,
                                  std::span<const double> chi, double psi0,
                                  double tol = 1e-9);

}  // namespace lyaptube
