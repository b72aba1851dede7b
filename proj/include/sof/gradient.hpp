#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "sof/errors.hpp"
#include "sof/lyapunov.hpp"
#include "sof/model.hpp"

namespace sof {

struct GradientBundle {
  MatrixXd E;             // (R + B'P B) KC - B'P A
  MatrixXd grad;          // 2 E Sigma C'
  MatrixXd natural;       // grad L^{-1}
  MatrixXd gauss_newton;  // (R + B'P B)^{-1} grad L^{-1}
  double grad_norm = 0.0;
};

// The preconditioners are applied through Cholesky solves against the SPD
// matrices L_K and R + B'P B — never via explicit inverses.
inline GradientBundle gradient(const LtiSystem& sys, const MatrixXd& K,
                               const ClosedLoopEval& ev) {
  GradientBundle g;
  const MatrixXd Bt = sys.B.transpose();
  g.E = (sys.R + Bt * ev.P * sys.B) * K * sys.C - Bt * ev.P * sys.A;
  g.grad = 2.0 * g.E * ev.Sigma * sys.C.transpose();
  g.grad_norm = g.grad.norm();

  {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(ev.Lout,
                                               Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * hi))
      throw IllConditionedOutputCorrelation(
          "output correlation L_K numerically singular (eigenvalues " +
          std::to_string(lo) + " .. " + std::to_string(hi) + ")");
  }
  Eigen::LLT<MatrixXd> lltL(ev.Lout);
  if (lltL.info() != Eigen::Success)
    throw IllConditionedOutputCorrelation(
        "Cholesky of output correlation L_K failed");
  // natural * L = grad, solved through the transpose.
  g.natural = lltL.solve(g.grad.transpose()).transpose();

  Eigen::LLT<MatrixXd> lltW(sys.R + Bt * ev.P * sys.B);
  if (lltW.info() != Eigen::Success)
    throw NumericError("R + B'P B not positive definite");
  g.gauss_newton = lltW.solve(g.natural);
  return g;
}

inline GradientBundle gradient(const LtiSystem& sys, const MatrixXd& K) {
  return gradient(sys, K, evaluate(sys, K));
}

// Directional derivative of the value matrix along Z:
//   P' = (C'Z'E + E'ZC) + A_K' P' A_K.
inline MatrixXd p_prime(const LtiSystem& sys, const MatrixXd& K,
                        const MatrixXd& Z, const ClosedLoopEval& ev) {
  const MatrixXd Bt = sys.B.transpose();
  const MatrixXd E =
      (sys.R + Bt * ev.P * sys.B) * K * sys.C - Bt * ev.P * sys.A;
  const MatrixXd CtZtE = sys.C.transpose() * Z.transpose() * E;
  const MatrixXd S = CtZtE + CtZtE.transpose();
  return solve_dlyap(closed_loop(sys, K), S, /*transpose_form=*/true);
}

// Hessian quadratic form along Z:
//   q(Z) = 2 Tr((ZC)'(B'P B + R)(ZC) Sigma) - 4 Tr((BZC)' P'[Z] A_K Sigma).
inline double hessian_quadratic(const LtiSystem& sys, const MatrixXd& K,
                                const MatrixXd& Z, const ClosedLoopEval& ev) {
  const MatrixXd Acl = closed_loop(sys, K);
  const MatrixXd Bt = sys.B.transpose();
  const MatrixXd ZC = Z * sys.C;
  const MatrixXd Pp = p_prime(sys, K, Z, ev);
  const double term1 =
      2.0 * (ZC.transpose() * (Bt * ev.P * sys.B + sys.R) * ZC * ev.Sigma)
              .trace();
  const double term2 =
      4.0 * ((sys.B * ZC).transpose() * Pp * Acl * ev.Sigma).trace();
  return term1 - term2;
}

inline double hessian_quadratic(const LtiSystem& sys, const MatrixXd& K,
                                const MatrixXd& Z) {
  return hessian_quadratic(sys, K, Z, evaluate(sys, K));
}

struct HessianMatrix {
  MatrixXd H;  // md x md, indexed by vec(K) in column-major (Eigen) order
  double min_eig = 0.0;
  double max_eig = 0.0;
};

// Assembles the vectorized Hessian by polarizing the quadratic form over the
// standard basis directions: H[a,b] = (q(Ea + Eb) - q(Ea) - q(Eb)) / 2.
// Each entry depends only on its own quadratic-form evaluations, so the
// result is independent of evaluation order.
inline HessianMatrix hessian_matrix(const LtiSystem& sys, const MatrixXd& K) {
  const ClosedLoopEval ev = evaluate(sys, K);
  const Eigen::Index m = sys.m(), d = sys.d(), md = m * d;

  Eigen::VectorXd qdiag(md);
  for (Eigen::Index a = 0; a < md; ++a) {
    MatrixXd Ea = MatrixXd::Zero(m, d);
    Ea(a % m, a / m) = 1.0;
    qdiag(a) = hessian_quadratic(sys, K, Ea, ev);
  }

  MatrixXd H(md, md);
  for (Eigen::Index a = 0; a < md; ++a) {
    H(a, a) = qdiag(a);
    for (Eigen::Index b = a + 1; b < md; ++b) {
      MatrixXd Eab = MatrixXd::Zero(m, d);
      Eab(a % m, a / m) = 1.0;
      Eab(b % m, b / m) = 1.0;
      const double qab = hessian_quadratic(sys, K, Eab, ev);
      H(a, b) = H(b, a) = 0.5 * (qab - qdiag(a) - qdiag(b));
    }
  }
  HessianMatrix hm;
  hm.H = 0.5 * (H + H.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(hm.H, Eigen::EigenvaluesOnly);
  hm.min_eig = es.eigenvalues().minCoeff();
  hm.max_eig = es.eigenvalues().maxCoeff();
  return hm;
}

// Finite-difference probes of J, for validating the analytic derivatives.

// Central difference of J at K along the (i,j) gain coordinate.
inline double fd_gradient_entry(const LtiSystem& sys, const MatrixXd& K,
                                Eigen::Index i, Eigen::Index j, double h) {
  MatrixXd Kp = K, Km = K;
  Kp(i, j) += h;
  Km(i, j) -= h;
  return (evaluate(sys, Kp).cost - evaluate(sys, Km).cost) / (2.0 * h);
}

// Second-order central difference of J at K along direction Z.
inline double fd_second_difference(const LtiSystem& sys, const MatrixXd& K,
                                   const MatrixXd& Z, double h) {
  const double jp = evaluate(sys, K + h * Z).cost;
  const double jm = evaluate(sys, K - h * Z).cost;
  const double j0 = evaluate(sys, K).cost;
  return (jp - 2.0 * j0 + jm) / (h * h);
}

}  // namespace sof
