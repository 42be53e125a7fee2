#include "lyaptube/controller.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace lyaptube {

Matrix brunovsky_a(int n) {
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) a(i, i + 1) = 1.0;
  return a;
}

Matrix closed_loop_matrix(const Vector& k) {
  const auto n = static_cast<int>(k.size());
  Matrix a = brunovsky_a(n);
  a.row(n - 1) -= k.transpose();
  return a;
}

bool is_hurwitz(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  if (es.info() != Eigen::Success) return false;
  return (es.eigenvalues().real().array() < 0.0).all();
}

QuadraticLyapunov solve_lyapunov(const Vector& k, const Matrix& Q) {
  const auto n = k.size();
  if (n < 1) throw SynthesisError("lyapunov: empty gain");
  if (Q.rows() != n || Q.cols() != n) throw SynthesisError("lyapunov: Q has wrong size");
  if (!(Q - Q.transpose()).isZero(1e-12)) throw SynthesisError("lyapunov: Q not symmetric");

  const Matrix abar = closed_loop_matrix(k);
  if (!is_hurwitz(abar)) throw SynthesisError("lyapunov: A - B k^T is not Hurwitz");

  Eigen::SelfAdjointEigenSolver<Matrix> q_eig(Q);
  const double q_min = q_eig.eigenvalues().minCoeff();
  if (!(q_min > 0.0)) throw SynthesisError("lyapunov: Q not positive definite");

  // Column-major vec: vec(Abar^T P) = (I (x) Abar^T) vec(P),
  //                   vec(P Abar)   = (Abar^T (x) I) vec(P).
  const Matrix eye = Matrix::Identity(n, n);
  const Matrix at = abar.transpose();
  Matrix kron = Matrix::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n) += eye(i, j) * at + at(i, j) * eye;
    }
  }
  const Vector rhs = -Eigen::Map<const Vector>(Q.data(), n * n);
  Eigen::FullPivLU<Matrix> lu(kron);
  if (!lu.isInvertible()) throw SynthesisError("lyapunov: singular Kronecker system");
  const Vector vec_p = lu.solve(rhs);

  QuadraticLyapunov out;
  out.P = Eigen::Map<const Matrix>(vec_p.data(), n, n);
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  out.Q = Q;
  Eigen::SelfAdjointEigenSolver<Matrix> p_eig(out.P);
  out.lambda_min = p_eig.eigenvalues().minCoeff();
  out.lambda_max = p_eig.eigenvalues().maxCoeff();
  if (!(out.lambda_min > 0.0)) throw SynthesisError("lyapunov: P not positive definite");
  out.P_inv = out.P.inverse();
  out.P_inv = 0.5 * (out.P_inv + out.P_inv.transpose()).eval();
  out.q_min = q_min;
  return out;
}

double lyapunov_residual(const QuadraticLyapunov& lyap, const Vector& k) {
  const Matrix abar = closed_loop_matrix(k);
  return (abar.transpose() * lyap.P + lyap.P * abar + lyap.Q).cwiseAbs().maxCoeff();
}

ComparisonBounds classk_bounds(const QuadraticLyapunov& lyap) {
  ComparisonBounds b;
  b.alpha1 = ClassKFunction::quadratic(lyap.lambda_min);
  b.alpha2 = ClassKFunction::quadratic(lyap.lambda_max);
  b.alpha3 = ClassKFunction::quadratic(lyap.q_min);
  b.quadratic = ComparisonBounds::Quadratic{lyap.lambda_min, lyap.lambda_max, lyap.q_min};
  return b;
}

NominalDesign NominalDesign::linear_quadratic(const Vector& k, const Matrix& Q) {
  NominalDesign d;
  d.n_xi = static_cast<int>(k.size());
  d.gain = k;
  d.quadratic = solve_lyapunov(k, Q);
  d.bounds = classk_bounds(*d.quadratic);
  d.feedback = [k](const Vector& xi_bar) { return -k.dot(xi_bar); };
  d.lyapunov = [P = d.quadratic->P](const Vector& xi_bar) { return xi_bar.dot(P * xi_bar); };
  d.gradient = [P = d.quadratic->P](const Vector& xi_bar) -> Vector {
    return 2.0 * (P * xi_bar);
  };
  return d;
}

NominalDesign NominalDesign::linear_quadratic(const Vector& k) {
  return linear_quadratic(k, Matrix::Identity(k.size(), k.size()));
}

double input_gradient(const QuadraticLyapunov& lyap, const Vector& xi_bar) {
  const auto n = xi_bar.size();
  return 2.0 * lyap.P.row(n - 1).dot(xi_bar);
}

double input_gradient(const NominalDesign& nominal, const Vector& xi_bar) {
  if (nominal.quadratic) return input_gradient(*nominal.quadratic, xi_bar);
  const Vector g = nominal.gradient(xi_bar);
  return g[g.size() - 1];
}

double sat(double x) { return std::clamp(x, -1.0, 1.0); }

void RedesignController::validate(double delta_bound) const {
  if (nominal.n_xi < 1 || !nominal.feedback || !nominal.lyapunov || !nominal.gradient) {
    throw SynthesisError("controller: incomplete nominal design");
  }
  if (reference.n_xi() != nominal.n_xi) {
    throw SynthesisError("controller: reference order does not match n_xi");
  }
  if (!(rho >= delta_bound)) throw SynthesisError("controller: rho must dominate delta");
  if (!discontinuous && !(mu > 0.0)) throw SynthesisError("controller: mu must be > 0");
}

double v_redesign(const RedesignController& ctrl, const Vector& xi_bar) {
  const double w = input_gradient(ctrl.nominal, xi_bar);
  if (ctrl.discontinuous) {
    return w > 0.0 ? -ctrl.rho : (w < 0.0 ? ctrl.rho : 0.0);
  }
  return -ctrl.rho * sat(ctrl.rho / ctrl.mu * w);
}

ControlTerms control_terms(const RedesignController& ctrl, const PlantSpec& plant,
                           const Vector& xi, const Vector& eta, double t) {
  ControlTerms out;
  out.xi_bar = xi - desired_state(ctrl.reference, t);
  out.v_n = ctrl.nominal.feedback(out.xi_bar);
  out.v_l = v_redesign(ctrl, out.xi_bar);
  const double b = plant.eval_b(xi, eta);
  out.u = (-plant.eval_a(xi, eta) + top_derivative(ctrl.reference, t) + out.v_n + out.v_l) / b;
  return out;
}

double control(const RedesignController& ctrl, const PlantSpec& plant,
               const Vector& xi, const Vector& eta, double t) {
  return control_terms(ctrl, plant, xi, eta, t).u;
}

}  // namespace lyaptube
