#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "sof/errors.hpp"
#include "sof/gradient.hpp"
#include "sof/lyapunov.hpp"
#include "sof/model.hpp"
#include "sof/optimize.hpp"
#include "sof/rng.hpp"
#include "sof/run_log.hpp"

namespace sof {

struct ZerothOrderConfig {
  long num_trajectories = 1 << 14;    // z
  long rollout_length = 100;          // l
  double perturbation_radius = 1e-3;  // r
  double step_size = 0.2;             // eta
  std::uint64_t seed = 0;
};

struct Rollout {
  MatrixXd outputs;  // d x length, column t is y_t
  VectorXd costs;    // costs(t) = x_t'Q x_t + u_t'R u_t
  VectorXd x0;
};

// Cost values past this are treated as numerical divergence.
inline constexpr double kDivergenceCap = 1e250;

// Forward simulation of the closed loop from a concrete initial state.
// Unstable gains legitimately produce growing rollouts; only overflow to
// non-finite (or past the cap) is an error.
inline Rollout simulate(const LtiSystem& sys, const MatrixXd& K,
                        const VectorXd& x0, long length) {
  check_gain_shape(sys, K);
  if (x0.size() != sys.n()) throw StructuralError("x0 has wrong dimension");
  const MatrixXd Acl = closed_loop(sys, K);
  const MatrixXd KC = K * sys.C;
  const MatrixXd S = sys.Q + KC.transpose() * sys.R * KC;

  Rollout out;
  out.x0 = x0;
  out.outputs.resize(sys.d(), length);
  out.costs.resize(length);
  VectorXd x = x0;
  for (long t = 0; t < length; ++t) {
    out.outputs.col(t) = sys.C * x;
    const double c = x.dot(S * x);
    if (!(c < kDivergenceCap))
      throw DivergentRollout(
          "rollout diverged at step " + std::to_string(t) + " of " +
              std::to_string(length),
          t - 1);
    out.costs(t) = c;
    x = (Acl * x).eval();
  }
  return out;
}

// Draw x0 ~ N(0, X0).  The Gaussian is our realization of the initial
// distribution: only the second moment is prescribed, and the choice is
// recorded in run metadata.
inline VectorXd sample_initial_state(const MatrixXd& X0, CounterRng& rng) {
  Eigen::LLT<MatrixXd> llt(X0);
  if (llt.info() != Eigen::Success)
    throw NumericError("X0 not positive definite (Cholesky failed)");
  VectorXd z(X0.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return llt.matrixL() * z;
}

// Uniform draw on the unit Frobenius sphere of m x d matrices.
inline MatrixXd sample_unit_sphere(Eigen::Index m, Eigen::Index d,
                                   CounterRng& rng) {
  MatrixXd U(m, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < m; ++i) U(i, j) = rng.normal();
  return U / U.norm();
}

struct EstimateDiagnostics {
  long divergent = 0;  // perturbed rollouts that overflowed (excluded)
  long used = 0;       // trajectories contributing to grad_hat
};

struct Estimate {
  MatrixXd grad_hat;  // m x d
  MatrixXd L_hat;     // d x d
  EstimateDiagnostics diag;
};

namespace detail {

inline int worker_threads(long chunks) {
  long t = 0;
  if (const char* env = std::getenv("SOF_THREADS")) t = std::atol(env);
  if (t <= 0) t = static_cast<long>(std::thread::hardware_concurrency());
  if (t <= 0) t = 1;
  return static_cast<int>(std::min(t, chunks));
}

// Row-major copy for the contiguous dot products in the rollout kernel.
inline std::vector<double> row_major(const MatrixXd& M) {
  std::vector<double> v(static_cast<size_t>(M.rows() * M.cols()));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      v[static_cast<size_t>(i * M.cols() + j)] = M(i, j);
  return v;
}

// Accumulated cost of one rollout; x is advanced in place.  Returns +inf as
// the divergence marker.  When yyt/C are given, also accumulates
// sum_t (Cx)(Cx)' into yyt (d x d, row-major).  This is the hot loop of the
// zeroth-order estimator: raw pointers, no allocation.
inline double rollout_cost(const double* M, const double* S, double* x,
                           double* xn, int n, long len,
                           const double* C = nullptr, double* yyt = nullptr,
                           int d = 0) {
  double sum = 0.0;
  for (long t = 0; t < len; ++t) {
    double c = 0.0;
    for (int i = 0; i < n; ++i) {
      const double* Si = S + i * n;
      double si = 0.0;
      for (int j = 0; j < n; ++j) si += Si[j] * x[j];
      c += x[i] * si;
    }
    sum += c;
    if (!(sum < kDivergenceCap)) return std::numeric_limits<double>::infinity();
    if (C != nullptr) {
      for (int a = 0; a < d; ++a) {
        const double* Ca = C + a * n;
        double ya = 0.0;
        for (int j = 0; j < n; ++j) ya += Ca[j] * x[j];
        xn[n + a] = ya;  // scratch slots past x for y
      }
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) yyt[a * d + b] += xn[n + a] * xn[n + b];
    }
    for (int i = 0; i < n; ++i) {
      const double* Mi = M + i * n;
      double xi = 0.0;
      for (int j = 0; j < n; ++j) xi += Mi[j] * x[j];
      xn[i] = xi;
    }
    std::copy(xn, xn + n, x);
  }
  return sum;
}

}  // namespace detail

// One-point zeroth-order estimate: per trajectory, a nominal rollout of K
// (costs feed J-hat, outputs feed L-hat) and a perturbed rollout of K + rU
// from the *same* x0; grad_hat = mean((J'-J)/r U), L_hat = mean(sum y y').
// Perturbed rollouts that overflow are excluded from the gradient average
// and counted; more than 10% of them makes the estimate untrustworthy.
//
// Trajectory i's randomness depends only on (seed, iteration, i), and the
// batch is reduced chunk-by-chunk in fixed index order, so the result is
// bit-identical for a given seed no matter how many worker threads run
// (capped by SOF_THREADS).
inline Estimate estimate(const LtiSystem& sys, const MatrixXd& K,
                         const ZerothOrderConfig& cfg, long iteration = 0) {
  check_gain_shape(sys, K);
  const int n = static_cast<int>(sys.n());
  const int m = static_cast<int>(sys.m());
  const int d = static_cast<int>(sys.d());
  const long z = cfg.num_trajectories;
  const long len = cfg.rollout_length;
  const double r = cfg.perturbation_radius;

  Eigen::LLT<MatrixXd> lltX0(sys.X0);
  if (lltX0.info() != Eigen::Success)
    throw NumericError("X0 not positive definite (Cholesky failed)");
  const MatrixXd Lx = lltX0.matrixL();

  const MatrixXd Acl = closed_loop(sys, K);
  const MatrixXd KC = K * sys.C;
  const MatrixXd Snom = sys.Q + KC.transpose() * sys.R * KC;
  const std::vector<double> Mnom = detail::row_major(Acl);
  const std::vector<double> Srow = detail::row_major(Snom);
  const std::vector<double> Crow = detail::row_major(sys.C);

  const long n_chunks = std::min<long>(64, std::max<long>(1, z));
  struct Chunk {
    MatrixXd grad_sum;
    std::vector<double> yyt;
    long divergent = 0;
    long nominal_divergent = 0;
  };
  std::vector<Chunk> chunks(static_cast<size_t>(n_chunks));

  auto work = [&](long c) {
    Chunk& acc = chunks[static_cast<size_t>(c)];
    acc.grad_sum = MatrixXd::Zero(m, d);
    acc.yyt.assign(static_cast<size_t>(d * d), 0.0);
    const long lo = c * z / n_chunks;
    const long hi = (c + 1) * z / n_chunks;

    std::vector<double> x(static_cast<size_t>(n));
    std::vector<double> scratch(static_cast<size_t>(n + d));
    VectorXd zvec(n), x0(n);
    MatrixXd U(m, d), Kp(m, d), KpC(m, n), Aclp(n, n), Sp(n, n);
    std::vector<double> Mp(static_cast<size_t>(n * n)),
        Sprow(static_cast<size_t>(n * n));

    for (long i = lo; i < hi; ++i) {
      CounterRng rng_x(cfg.seed, static_cast<std::uint64_t>(iteration),
                       static_cast<std::uint64_t>(i),
                       rng_purpose::kInitialState);
      for (int k = 0; k < n; ++k) zvec(k) = rng_x.normal();
      x0.noalias() = Lx * zvec;

      CounterRng rng_u(cfg.seed, static_cast<std::uint64_t>(iteration),
                       static_cast<std::uint64_t>(i),
                       rng_purpose::kPerturbation);
      for (int jj = 0; jj < d; ++jj)
        for (int ii = 0; ii < m; ++ii) U(ii, jj) = rng_u.normal();
      U /= U.norm();

      // Nominal rollout: costs and outputs.
      for (int k = 0; k < n; ++k) x[static_cast<size_t>(k)] = x0(k);
      const double Jn = detail::rollout_cost(Mnom.data(), Srow.data(),
                                             x.data(), scratch.data(), n, len,
                                             Crow.data(), acc.yyt.data(), d);
      if (std::isinf(Jn)) {
        ++acc.nominal_divergent;
        ++acc.divergent;
        continue;
      }

      // Perturbed rollout from the same x0.
      Kp = K + r * U;
      KpC.noalias() = Kp * sys.C;
      Aclp = sys.A - sys.B * KpC;
      Sp = sys.Q + KpC.transpose() * sys.R * KpC;
      for (int ii = 0; ii < n; ++ii)
        for (int jj = 0; jj < n; ++jj) {
          Mp[static_cast<size_t>(ii * n + jj)] = Aclp(ii, jj);
          Sprow[static_cast<size_t>(ii * n + jj)] = Sp(ii, jj);
        }
      for (int k = 0; k < n; ++k) x[static_cast<size_t>(k)] = x0(k);
      const double Jp = detail::rollout_cost(Mp.data(), Sprow.data(), x.data(),
                                             scratch.data(), n, len);
      if (std::isinf(Jp)) {
        ++acc.divergent;
        continue;
      }
      acc.grad_sum += ((Jp - Jn) / r) * U;
    }
  };

  const int n_threads = detail::worker_threads(n_chunks);
  if (n_threads <= 1) {
    for (long c = 0; c < n_chunks; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t]() {
        for (long c = t; c < n_chunks; c += n_threads) work(c);
      });
    for (auto& th : pool) th.join();
  }

  Estimate est;
  est.grad_hat = MatrixXd::Zero(m, d);
  MatrixXd yyt = MatrixXd::Zero(d, d);
  long nominal_divergent = 0;
  for (const auto& acc : chunks) {  // fixed order: chunk 0, 1, ...
    est.grad_hat += acc.grad_sum;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        yyt(a, b) += acc.yyt[static_cast<size_t>(a * d + b)];
    est.diag.divergent += acc.divergent;
    nominal_divergent += acc.nominal_divergent;
  }
  est.diag.used = z - est.diag.divergent;
  if (est.diag.divergent > z / 10)
    throw EstimationUnreliable(
        std::to_string(est.diag.divergent) + " of " + std::to_string(z) +
            " perturbed rollouts diverged; estimate unreliable",
        est.diag.divergent, z);
  est.grad_hat /= static_cast<double>(std::max<long>(est.diag.used, 1));
  est.L_hat = yyt / static_cast<double>(std::max<long>(z - nominal_divergent, 1));
  return est;
}

using EstimatorFn = std::function<Estimate(
    const LtiSystem&, const MatrixXd&, const ZerothOrderConfig&, long)>;

// Model-free vanilla/natural policy gradient (Gauss-Newton needs B and P_K,
// which a simulator does not expose).  Stops when |grad_hat|_F <= epsilon.
// The log carries the estimate norms plus — the model being available here —
// the exact J and gradient norm of every iterate for evaluation plots.
inline RunLog run_modelfree(
    const LtiSystem& sys, const MatrixXd& K0, Method method,
    const ZerothOrderConfig& cfg, double epsilon = 1e-8, long max_iters = 150,
    const EstimatorFn& estimator =
        [](const LtiSystem& s, const MatrixXd& k, const ZerothOrderConfig& c,
           long it) { return estimate(s, k, c, it); }) {
  if (method == Method::gauss_newton)
    throw StructuralError(
        "Gauss-Newton has no model-free form (needs B and P_K)");
  check_gain_shape(sys, K0);
  const auto t0 = std::chrono::steady_clock::now();

  RunLog log;
  log.method = method;
  log.model_free = true;
  log.eta = cfg.step_size;
  log.seed = cfg.seed;

  MatrixXd K = K0;
  for (long j = 0;; ++j) {
    ClosedLoopEval ev;
    try {
      ev = evaluate(sys, K);
    } catch (const UnstableClosedLoop& e) {
      throw UnstableIterate("model-free iterate " + std::to_string(j) +
                                " left the stabilizing set (rho = " +
                                std::to_string(e.spectral_radius) + ")",
                            K, j);
    }
    const GradientBundle g = gradient(sys, K, ev);
    const Estimate est = estimator(sys, K, cfg, j);

    MatrixXd D = est.grad_hat;
    if (method == Method::natural) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(est.L_hat,
                                                 Eigen::EigenvaluesOnly);
      if (!(es.eigenvalues().minCoeff() >
            1e-12 * std::max(es.eigenvalues().maxCoeff(), 0.0)))
        throw IllConditionedOutputCorrelation(
            "estimated output correlation L_hat numerically singular");
      Eigen::LLT<MatrixXd> llt(est.L_hat);
      if (llt.info() != Eigen::Success)
        throw IllConditionedOutputCorrelation(
            "Cholesky of estimated L_hat failed");
      D = llt.solve(est.grad_hat.transpose()).transpose();
    }

    RunRecord rec;
    rec.iter = j;
    rec.K = K;
    rec.J = ev.cost;
    rec.grad_norm = g.grad_norm;
    rec.method_grad_norm = D.norm();
    rec.rho = ev.stability.spectral_radius;
    rec.grad_hat_norm = est.grad_hat.norm();
    rec.divergent_count = est.diag.divergent;
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    log.records.push_back(std::move(rec));

    if (est.grad_hat.norm() <= epsilon) {
      log.terminated_by = Termination::stationary;
      break;
    }
    if (j >= max_iters) {
      log.terminated_by = Termination::max_iters;
      break;
    }
    log.records.back().eta_used = cfg.step_size;
    K = detail::apply_update(K, cfg.step_size, D);
  }
  return log;
}

}  // namespace sof
