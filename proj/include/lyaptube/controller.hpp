#pragma once

#include <functional>
#include <optional>
#include <stdexcept>

#include "lyaptube/class_k.hpp"
#include "lyaptube/model.hpp"

namespace lyaptube {

/// Controller synthesis failed (unstable nominal loop, bad gains).
class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Brunovsky chain A (shift up) of size n.
Matrix brunovsky_a(int n);
/// A - B k^T for the chain of length k.size().
Matrix closed_loop_matrix(const Vector& k);
/// All eigenvalues strictly in the open left half plane.
bool is_hurwitz(const Matrix& a);

/// V_N(xi_bar) = xi_bar^T P xi_bar with Abar^T P + P Abar = -Q.
struct QuadraticLyapunov {
  Matrix P;
  Matrix Q;
  Matrix P_inv;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  /// lambda_min(Q).
  double q_min = 0.0;

  double value(const Vector& xi_bar) const { return xi_bar.dot(P * xi_bar); }
};

/// Solves Abar^T P + P Abar = -Q for Abar = A - B k^T by the vectorised
/// Kronecker system, then symmetrises. Throws SynthesisError if Abar is not
/// Hurwitz or Q is not symmetric positive definite.
QuadraticLyapunov solve_lyapunov(const Vector& k, const Matrix& Q);

/// max |Abar^T P + P Abar + Q|.
double lyapunov_residual(const QuadraticLyapunov& lyap, const Vector& k);

/// Class-K bounds of the nominal design. For the quadratic case the
/// coefficients are kept so that the tube level has a closed form:
///   a1(s) = lambda_min(P) s^2, a2(s) = lambda_max(P) s^2,
///   a3(s) = lambda_min(Q) s^2.
struct ComparisonBounds {
  ClassKFunction alpha1;
  ClassKFunction alpha2;
  ClassKFunction alpha3;
  struct Quadratic {
    double c1;
    double c2;
    double c3;
  };
  std::optional<Quadratic> quadratic;
};

ComparisonBounds classk_bounds(const QuadraticLyapunov& lyap);

/// Nominal feedback v_N with its Lyapunov function V_N.
///
/// The linear/quadratic design is the one used for tube geometry. Other
/// designs can be plugged in through the callbacks; they get the generic
/// (numerically integrated) tube level but no ellipsoidal sections.
struct NominalDesign {
  int n_xi = 0;
  std::function<double(const Vector&)> feedback;
  std::function<double(const Vector&)> lyapunov;
  std::function<Vector(const Vector&)> gradient;
  ComparisonBounds bounds;
  std::optional<Vector> gain;
  std::optional<QuadraticLyapunov> quadratic;

  static NominalDesign linear_quadratic(const Vector& k, const Matrix& Q);
  static NominalDesign linear_quadratic(const Vector& k);
};

/// w(xi_bar) = dV_N/dxi_bar * B = 2 (P xi_bar)_n.
double input_gradient(const QuadraticLyapunov& lyap, const Vector& xi_bar);
double input_gradient(const NominalDesign& nominal, const Vector& xi_bar);

/// Unit saturation.
double sat(double x);

/// u = b^-1 (-a + y_d^(n) + v_N(xi_bar) + v_L(xi_bar)), xi_bar = xi - xi_d.
///
/// `discontinuous` selects the mu -> 0 limit v_L = -rho sign(w); mu is not
/// used then.
struct RedesignController {
  NominalDesign nominal;
  double rho = 0.0;
  double mu = 0.0;
  bool discontinuous = false;
  Reference reference;

  /// rho >= delta_bound, mu > 0 unless discontinuous, matching dimensions.
  void validate(double delta_bound) const;
};

double v_redesign(const RedesignController& ctrl, const Vector& xi_bar);

struct ControlTerms {
  double u = 0.0;
  double v_n = 0.0;
  double v_l = 0.0;
  Vector xi_bar;
};

ControlTerms control_terms(const RedesignController& ctrl, const PlantSpec& plant,
                           const Vector& xi, const Vector& eta, double t);

double control(const RedesignController& ctrl, const PlantSpec& plant,
               const Vector& xi, const Vector& eta, double t);

}  // namespace lyaptube
