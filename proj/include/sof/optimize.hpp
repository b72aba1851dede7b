#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "sof/errors.hpp"
#include "sof/gradient.hpp"
#include "sof/landscape.hpp"
#include "sof/lyapunov.hpp"
#include "sof/model.hpp"
#include "sof/run_log.hpp"

namespace sof {

struct OptimizerConfig {
  Method method = Method::vanilla;
  std::optional<double> step_size;  // empty = auto (theorem bound at J(K0))
  double epsilon = 1e-8;            // on the method's own gradient norm
  long max_iters = 100000;
  bool enforce_monotone = true;
};

// Theorem step-size bounds, computed from the landscape constants at
// alpha = J(K0): 1/L (vanilla), mu sC^2/L (natural), mu sR sC^2/L (GN).
inline double auto_step_size(const LtiSystem& sys, Method method,
                             double alpha) {
  const double L = smoothness_constant(sys, alpha).L;
  const double mu = sigma_min_sym(sys.X0);
  const double sC = sigma_min(sys.C);
  const double sR = sigma_min_sym(sys.R);
  switch (method) {
    case Method::vanilla: return 1.0 / L;
    case Method::natural: return mu * sC * sC / L;
    case Method::gauss_newton: return mu * sR * sC * sC / L;
  }
  return 1.0 / L;
}

// Worst-case iteration count to epsilon-stationarity:
//   vanilla: 2a/(n e^2);  natural: 2a/(n mu sC^2 e^2);  GN adds sR.
inline long iteration_budget(Method method, double eta, double alpha,
                             double epsilon, double mu, double sigma_minC,
                             double sigma_minR) {
  double b = 2.0 * alpha / (eta * epsilon * epsilon);
  if (method != Method::vanilla) b /= mu * sigma_minC * sigma_minC;
  if (method == Method::gauss_newton) b /= sigma_minR;
  if (!(b < 9e18)) return std::numeric_limits<long>::max();
  return static_cast<long>(std::ceil(b));
}

// Linear-rate iteration count to epsilon_J-optimality; valid only for
// square full-rank C (gradient dominance).
inline long linear_rate_budget(const LtiSystem& sys, Method method, double eta,
                               double Sigma_Kstar_norm, double gap0,
                               double epsilonJ) {
  if (!c_square_full_rank(sys))
    throw RankDeficientC(
        "linear-rate budgets require square full-rank C (rank " +
        std::to_string(detail::numerical_rank(sys.C)) + " of " +
        std::to_string(sys.n()) + ")");
  const double mu = sigma_min_sym(sys.X0);
  const double sC = sigma_min(sys.C);
  const double sR = sigma_min_sym(sys.R);
  double coeff = Sigma_Kstar_norm / (2.0 * eta * mu);
  switch (method) {
    case Method::vanilla: coeff /= mu * sC * sC * sR; break;
    case Method::natural: coeff /= sR; break;
    case Method::gauss_newton: break;
  }
  const double b = coeff * std::log(gap0 / epsilonJ);
  if (!(b < 9e18)) return std::numeric_limits<long>::max();
  return static_cast<long>(std::ceil(std::max(b, 0.0)));
}

namespace detail {

// Shared by the model-based and model-free drivers so both produce
// bit-identical iterates for the same direction sequence.
inline MatrixXd apply_update(const MatrixXd& K, double eta,
                             const MatrixXd& D) {
  return K - eta * D;
}

inline const MatrixXd& method_direction(Method m, const GradientBundle& g) {
  switch (m) {
    case Method::vanilla: return g.grad;
    case Method::natural: return g.natural;
    case Method::gauss_newton: return g.gauss_newton;
  }
  return g.grad;
}

}  // namespace detail

// Model-based policy gradient: K <- K - eta D with D the method direction,
// stopping when |D|_F <= epsilon.  With enforce_monotone, a step that leaves
// the stabilizing set or increases J is retried at half the step, up to 30
// times (the accepted step is visible as eta_used); without it such a step
// throws.  Records one row per visited iterate; the final row has
// eta_used = 0.
inline RunLog run(const LtiSystem& sys, const MatrixXd& K0,
                  const OptimizerConfig& cfg) {
  check_gain_shape(sys, K0);
  const auto t0 = std::chrono::steady_clock::now();

  RunLog log;
  log.method = cfg.method;

  MatrixXd K = K0;
  ClosedLoopEval ev = evaluate(sys, K);
  const double alpha = ev.cost;

  log.eta = cfg.step_size ? *cfg.step_size
                          : auto_step_size(sys, cfg.method, alpha);
  log.theoretical_budget =
      iteration_budget(cfg.method, log.eta, alpha, cfg.epsilon,
                       sigma_min_sym(sys.X0), sigma_min(sys.C),
                       sigma_min_sym(sys.R));

  for (long iter = 0;; ++iter) {
    const GradientBundle g = gradient(sys, K, ev);
    const MatrixXd& D = detail::method_direction(cfg.method, g);
    const double mgn = D.norm();

    RunRecord rec;
    rec.iter = iter;
    rec.K = K;
    rec.J = ev.cost;
    rec.grad_norm = g.grad_norm;
    rec.method_grad_norm = mgn;
    rec.rho = ev.stability.spectral_radius;
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    log.records.push_back(std::move(rec));

    if (mgn <= cfg.epsilon) {
      log.terminated_by = Termination::stationary;
      break;
    }
    if (iter >= cfg.max_iters) {
      log.terminated_by = Termination::max_iters;
      break;
    }

    double e = log.eta;
    bool accepted = false;
    for (int h = 0; h <= 30 && !accepted; ++h, e *= 0.5) {
      const MatrixXd Kn = detail::apply_update(K, e, D);
      try {
        ClosedLoopEval evn = evaluate(sys, Kn);
        // Without the monotone guard any stabilizing step is taken as-is.
        if (!cfg.enforce_monotone || evn.cost <= ev.cost) {
          log.records.back().eta_used = e;
          K = Kn;
          ev = std::move(evn);
          accepted = true;
        }
      } catch (const UnstableClosedLoop&) {
        if (!cfg.enforce_monotone)
          throw UnstableIterate(
              "step " + std::to_string(e) + " at iteration " +
                  std::to_string(iter) + " left the stabilizing set",
              Kn, iter);
      }
    }
    if (!accepted) {
      log.terminated_by = Termination::monotonicity_violation;
      break;
    }
  }
  return log;
}

struct MonitorReport {
  double l = 0.0;     // lambda_min of the Hessian at K#
  double rbar = 0.0;  // basin radius 2l/M
  double r0 = 0.0;    // initial distance |K_0 - K#|_F
  double eta = 0.0;
  std::vector<bool> within;  // per-iterate envelope satisfaction
  bool pass = false;
};

// Checks the local linear-convergence envelope
//   |K_i - K#|_F <= (rbar r0/(rbar - r0)) (1/(1 + eta l))^i
// against a recorded run.  K# must be a strict local minimum and the run
// must start inside the basin r0 < rbar = 2l/M.
inline MonitorReport local_convergence_monitor(const LtiSystem& sys,
                                               const MatrixXd& K_hash,
                                               const RunLog& run_log,
                                               double M) {
  MonitorReport rep;
  rep.l = hessian_matrix(sys, K_hash).min_eig;
  if (!(rep.l > 0.0))
    throw NotALocalMinimum("lambda_min of Hessian at reference point is " +
                               std::to_string(rep.l),
                           rep.l);
  rep.rbar = 2.0 * rep.l / M;
  if (run_log.records.empty()) throw StructuralError("empty run log");
  rep.r0 = (run_log.records.front().K - K_hash).norm();
  rep.eta = run_log.eta;
  if (!(rep.r0 < rep.rbar))
    throw OutsideBasin("run starts at distance " + std::to_string(rep.r0) +
                           " >= basin radius " + std::to_string(rep.rbar),
                       rep.r0, rep.rbar);

  const double pref = rep.rbar * rep.r0 / (rep.rbar - rep.r0);
  const double decay = 1.0 / (1.0 + rep.eta * rep.l);
  rep.pass = true;
  double envelope = pref;
  for (const auto& r : run_log.records) {
    const bool ok = (r.K - K_hash).norm() <= envelope;
    rep.within.push_back(ok);
    rep.pass = rep.pass && ok;
    envelope *= decay;
  }
  return rep;
}

struct SensitivityReport {
  MatrixXd Ka, Kb;
  double distance = 0.0;
  double threshold = 0.0;  // 10 epsilon / min local curvature; see below
  bool differ = false;
  double E_norm_a = 0.0;  // |E_K|_F at Ka: ~0 identifies the exempt case
  double E_norm_b = 0.0;  //   (stationary point matching state feedback)
};

// Runs vanilla PG to stationarity under two initial-state second moments.
// With rank-deficient C the stationary points generally depend on X0; the
// exempt case (K#C = Ks*, i.e. E_K = 0) is identified by the E norms.
inline SensitivityReport stationarity_sensitivity(const LtiSystem& sys,
                                                  const MatrixXd& K0,
                                                  const MatrixXd& X0_a,
                                                  const MatrixXd& X0_b,
                                                  OptimizerConfig cfg) {
  cfg.method = Method::vanilla;
  LtiSystem sys_a(sys.A, sys.B, sys.C, sys.Q, sys.R, X0_a);
  LtiSystem sys_b(sys.A, sys.B, sys.C, sys.Q, sys.R, X0_b);
  const RunLog ra = run(sys_a, K0, cfg);
  const RunLog rb = run(sys_b, K0, cfg);

  SensitivityReport rep;
  rep.Ka = ra.back().K;
  rep.Kb = rb.back().K;
  rep.distance = (rep.Ka - rep.Kb).norm();
  // An epsilon-stationary point sits within epsilon/l of the basin minimizer
  // when the basin is l-strongly convex, so two such points for the *same*
  // minimizer differ by at most 2 epsilon / l. Distinctness is only claimed
  // beyond that bar (x5 safety), and only when both endpoints sit in
  // positively curved basins — with indefinite curvature no claim is made.
  const double la = hessian_matrix(sys_a, rep.Ka).min_eig;
  const double lb = hessian_matrix(sys_b, rep.Kb).min_eig;
  const double l = std::min(la, lb);
  rep.threshold = l > 0.0 ? 10.0 * cfg.epsilon / l
                          : std::numeric_limits<double>::infinity();
  rep.differ = rep.distance > rep.threshold;
  rep.E_norm_a = gradient(sys_a, rep.Ka).E.norm();
  rep.E_norm_b = gradient(sys_b, rep.Kb).E.norm();
  return rep;
}

}  // namespace sof
