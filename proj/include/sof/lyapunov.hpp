#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "sof/errors.hpp"
#include "sof/model.hpp"

namespace sof {

namespace detail {

inline MatrixXd kron(const MatrixXd& A, const MatrixXd& B) {
  MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

}  // namespace detail

// Solves the discrete Lyapunov fixed point by direct vectorization:
//   transpose_form = true :  X = S + Acl' X Acl   (value matrix)
//   transpose_form = false:  X = S + Acl X Acl'   (state correlation)
// (I - T) vec(X) = vec(S) with T the appropriate Kronecker square, dense LU.
// Exact to machine precision at the problem sizes this library targets; the
// O(n^6) cost is irrelevant there.  Caller guarantees rho(Acl) < 1.
inline MatrixXd solve_dlyap(const MatrixXd& Acl, const MatrixXd& S,
                            bool transpose_form) {
  const Eigen::Index n = Acl.rows();
  const MatrixXd At = Acl.transpose();
  // vec(A' X A) = (A' (x) A') vec(X);  vec(A X A') = (A (x) A) vec(X).
  MatrixXd G = transpose_form ? detail::kron(At, At) : detail::kron(Acl, Acl);
  G = MatrixXd::Identity(n * n, n * n) - G;

  Eigen::PartialPivLU<MatrixXd> lu(G);
  Eigen::VectorXd vecX =
      lu.solve(Eigen::Map<const Eigen::VectorXd>(S.data(), n * n));
  MatrixXd X = Eigen::Map<MatrixXd>(vecX.data(), n, n);
  X = 0.5 * (X + X.transpose()).eval();

  const MatrixXd back =
      transpose_form ? MatrixXd(At * X * Acl) : MatrixXd(Acl * X * At);
  const double resid = (X - S - back).norm();
  if (!(resid <= 1e-10 * std::max(X.norm(), 1e-300)))
    throw NumericError(
        "Lyapunov residual " + std::to_string(resid) +
        " out of tolerance (is the closed loop stable with margin?)");
  return X;
}

// Doubling iteration: S <- S + A S A', A <- A*A.  After k rounds S holds the
// partial series through length 2^k.  Used only as an independent
// cross-check solver in tests.
inline MatrixXd solve_dlyap_doubling(MatrixXd Acl, MatrixXd S,
                                     bool transpose_form, int max_doublings = 200) {
  if (transpose_form) Acl.transposeInPlace();
  for (int k = 0; k < max_doublings; ++k) {
    const MatrixXd inc = Acl * S * Acl.transpose();
    S += inc;
    if (inc.norm() <= 1e-16 * S.norm()) break;
    Acl = (Acl * Acl).eval();
    if (!S.allFinite() || !Acl.allFinite())
      throw NumericError("doubling iteration diverged (unstable input?)");
  }
  return 0.5 * (S + S.transpose()).eval();
}

// Everything the quadratic cost says about one stabilizing gain.
struct ClosedLoopEval {
  MatrixXd P;      // value matrix:       P = Q + (KC)'R(KC) + A_K' P A_K
  MatrixXd Sigma;  // state correlation:  Sigma = X0 + A_K Sigma A_K'
  MatrixXd Lout;   // output correlation: C Sigma C'
  double cost = 0.0;
  StabilityReport stability;
};

inline ClosedLoopEval evaluate(const LtiSystem& sys, const MatrixXd& K) {
  ClosedLoopEval ev;
  ev.stability = stability(sys, K);
  if (!ev.stability.stabilizing)
    throw UnstableClosedLoop(
        "closed loop has spectral radius " +
            std::to_string(ev.stability.spectral_radius) +
            " (needs < 1 - 1e-9)",
        ev.stability.spectral_radius);

  const MatrixXd Acl = closed_loop(sys, K);
  const MatrixXd KC = K * sys.C;
  const MatrixXd S = sys.Q + KC.transpose() * sys.R * KC;
  ev.P = solve_dlyap(Acl, S, /*transpose_form=*/true);
  ev.Sigma = solve_dlyap(Acl, sys.X0, /*transpose_form=*/false);
  ev.Lout = sys.C * ev.Sigma * sys.C.transpose();
  ev.cost = (ev.P * sys.X0).trace();

  // Tr(P X0) and Tr((Q + (KC)'R(KC)) Sigma) are the same number by the
  // series expansion; disagreement means a solver went numerically bad.
  // The gate scales with the solve's own conditioning, which grows like
  // 1/(1 - rho) as the loop approaches the stability boundary.
  const double cross = (S * ev.Sigma).trace();
  const double tol =
      std::max(1e-10, 1e-12 / (1.0 - ev.stability.spectral_radius));
  if (!(std::abs(ev.cost - cross) <= tol * std::max(std::abs(ev.cost), 1e-300)))
    throw NumericError("cost cross-check failed: Tr(P X0) = " +
                       std::to_string(ev.cost) + " vs Tr(S Sigma) = " +
                       std::to_string(cross));
  return ev;
}

// Brute-force cost: sum_{t<horizon} Tr((Q + (KC)'R(KC)) X_t) with
// X_{t+1} = A_K X_t A_K'.  Monotone nondecreasing in horizon.
inline double truncated_cost_oracle(const LtiSystem& sys, const MatrixXd& K,
                                    long horizon) {
  const MatrixXd Acl = closed_loop(sys, K);
  const MatrixXd KC = K * sys.C;
  const MatrixXd S = sys.Q + KC.transpose() * sys.R * KC;
  MatrixXd X = sys.X0;
  double sum = 0.0;
  for (long t = 0; t < horizon; ++t) {
    sum += S.cwiseProduct(X).sum();  // Tr(S X), both symmetric
    X = (Acl * X * Acl.transpose()).eval();
  }
  return sum;
}

// Same series, horizon chosen adaptively: stop once the per-step increment
// falls below 1e-14 of the running sum (cap 10^6 steps), so the tail is
// negligible for any moderately damped loop.
inline double adaptive_cost_oracle(const LtiSystem& sys, const MatrixXd& K,
                                   long cap = 1000000) {
  const MatrixXd Acl = closed_loop(sys, K);
  const MatrixXd KC = K * sys.C;
  const MatrixXd S = sys.Q + KC.transpose() * sys.R * KC;
  MatrixXd X = sys.X0;
  double sum = 0.0;
  for (long t = 0; t < cap; ++t) {
    const double inc = S.cwiseProduct(X).sum();
    sum += inc;
    if (t > 0 && inc < 1e-14 * sum) break;
    X = (Acl * X * Acl.transpose()).eval();
  }
  return sum;
}

// State-feedback LQR optimum by Riccati value iteration from P0 = Q:
//   P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA.
// Supplies the reference performance that the gradient-dominance gap bounds
// compare against.
struct DareResult {
  MatrixXd P;    // stabilizing Riccati fixed point
  MatrixXd Ks;   // optimal state feedback, u = -Ks x
  double Js = 0.0;
  long iterations = 0;
};

inline DareResult dare_state_feedback(const LtiSystem& sys,
                                      long max_iters = 100000) {
  DareResult res;
  MatrixXd P = sys.Q;
  const MatrixXd At = sys.A.transpose();
  const MatrixXd Bt = sys.B.transpose();
  for (long k = 1; k <= max_iters; ++k) {
    const MatrixXd PA = P * sys.A;
    const MatrixXd PB = P * sys.B;
    Eigen::LLT<MatrixXd> llt(sys.R + Bt * PB);
    if (llt.info() != Eigen::Success)
      throw NumericError("R + B'PB not positive definite in Riccati iteration");
    MatrixXd Pn = sys.Q + At * PA - (Bt * PA).transpose() * llt.solve(Bt * PA);
    Pn = 0.5 * (Pn + Pn.transpose()).eval();
    const double change = (Pn - P).norm();
    P = Pn;
    if (change <= 1e-12 * std::max(P.norm(), 1e-300)) {
      res.P = P;
      Eigen::LLT<MatrixXd> llt2(sys.R + Bt * P * sys.B);
      res.Ks = llt2.solve(Bt * P * sys.A);
      res.Js = (P * sys.X0).trace();
      res.iterations = k;
      return res;
    }
  }
  throw NumericError("Riccati value iteration did not converge in " +
                     std::to_string(max_iters) + " iterations");
}

}  // namespace sof
