#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sof/errors.hpp"
#include "sof/gradient.hpp"
#include "sof/lyapunov.hpp"
#include "sof/model.hpp"
#include "sof/rng.hpp"

namespace sof {

// Induced 2-norm (largest singular value).
inline double spec_norm(const MatrixXd& M) {
  return Eigen::JacobiSVD<MatrixXd>(M).singularValues()(0);
}

inline double sigma_min_sym(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Smallest singular value of a (possibly wide) matrix.
inline double sigma_min(const MatrixXd& M) {
  Eigen::JacobiSVD<MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  return s(s.size() - 1);
}

namespace detail {

inline double require_sigma_min_Q(const LtiSystem& sys, const char* who) {
  const double smin = sigma_min_sym(sys.Q);
  const double smax = spec_norm(sys.Q);
  if (!(smin > kRankTol * smax))
    throw ConstantsUnavailable(
        std::string(who) +
        " needs sigma_min(Q) > 0, but Q is singular (sigma_min = " +
        std::to_string(smin) + ")");
  return smin;
}

inline double require_sigma_min_R(const LtiSystem& sys, const char* who) {
  const double smin = sigma_min_sym(sys.R);
  const double smax = spec_norm(sys.R);
  if (!(smin > kRankTol * smax))
    throw ConstantsUnavailable(
        std::string(who) +
        " needs sigma_min(R) > 0, but R is singular (sigma_min = " +
        std::to_string(smin) + ")");
  return smin;
}

}  // namespace detail

struct SmoothnessResult {
  double L = 0.0;
  double zeta1 = 0.0;
};

// Hessian-norm bound on the sublevel set {J <= alpha}:
//   zeta1 = (1/smin(Q)) ((alpha/mu)(1 + |B|^2 |C|^2) + |R| |C|^2) - 1
//   L     = (2 alpha/smin(Q)) (|R| + (alpha/mu)(1 + 2 zeta1/(|B||C|)) |B|^2) |C|^2
inline SmoothnessResult smoothness_constant(const LtiSystem& sys,
                                            double alpha) {
  const double sminQ = detail::require_sigma_min_Q(sys, "smoothness constant");
  const double mu = sigma_min_sym(sys.X0);
  const double nB = spec_norm(sys.B), nC = spec_norm(sys.C),
               nR = spec_norm(sys.R);
  SmoothnessResult res;
  res.zeta1 =
      ((alpha / mu) * (1.0 + nB * nB * nC * nC) + nR * nC * nC) / sminQ - 1.0;
  res.L = (2.0 * alpha / sminQ) *
          (nR + (alpha / mu) * (1.0 + 2.0 * res.zeta1 / (nB * nC)) * nB * nB) *
          nC * nC;
  return res;
}

// Uniform bound on |KC| over the sublevel set:
//   psi = sqrt(|R| alpha + |B|^2 alpha^2 / mu) / (sqrt(mu) smin(R))
//         + |B| |A| alpha / (mu smin(R)).
inline double psi_bound(const LtiSystem& sys, double alpha) {
  const double sminR = detail::require_sigma_min_R(sys, "psi bound");
  const double mu = sigma_min_sym(sys.X0);
  const double nA = spec_norm(sys.A), nB = spec_norm(sys.B),
               nR = spec_norm(sys.R);
  return std::sqrt(nR * alpha + nB * nB * alpha * alpha / mu) /
             (std::sqrt(mu) * sminR) +
         nB * nA * alpha / (mu * sminR);
}

struct HessianLipschitzResult {
  double M = 0.0;
  double zeta2 = 0.0, zeta3 = 0.0, zeta4 = 0.0;
};

inline HessianLipschitzResult hessian_lipschitz_constant(const LtiSystem& sys,
                                                         double alpha,
                                                         double gamma,
                                                         double psi) {
  const double sminQ =
      detail::require_sigma_min_Q(sys, "Hessian Lipschitz constant");
  const double mu = sigma_min_sym(sys.X0);
  const double nB = spec_norm(sys.B), nC = spec_norm(sys.C),
               nR = spec_norm(sys.R);
  const SmoothnessResult sm = smoothness_constant(sys, alpha);
  HessianLipschitzResult res;
  const double pref = 2.0 * nC / sminQ;
  res.zeta2 = pref * ((alpha * gamma / mu) * nB + psi * nR);
  res.zeta3 =
      pref * ((alpha / mu) * (sm.zeta1 * gamma + res.zeta2 * gamma + nB * nC) * nB +
              nR * nC);
  res.zeta4 =
      pref * ((alpha / mu) * (sm.zeta1 * gamma + nB * nC) * nB + nR * nC);
  const double md = static_cast<double>(sys.m() * sys.d());
  res.M = (4.0 * alpha * alpha * std::sqrt(md) / (mu * sminQ)) *
          ((sm.zeta1 + 0.5 * res.zeta2) * nB * nC + res.zeta3 + 0.5 * res.zeta4) *
          nB * nC;
  return res;
}

// Rejection sampling of the sublevel set {J <= alpha}: Gaussian proposals
// centered at a known in-set gain, radius adapted on accept/reject.  The
// proposal stream is counter-based, so a run with a larger `count` extends a
// smaller run's accepted set (prefix property), and results are
// seed-deterministic regardless of scheduling.
struct SublevelSample {
  std::vector<MatrixXd> gains;  // gains[0] is the seed gain itself
  long proposals = 0;
};

inline SublevelSample sample_sublevel(const LtiSystem& sys,
                                      const MatrixXd& K_seed, double alpha,
                                      long count, std::uint64_t seed) {
  SublevelSample out;
  {
    const double j_seed = evaluate(sys, K_seed).cost;  // throws if unstable
    if (!(j_seed <= alpha))
      throw SamplingFailed("seed gain has J = " + std::to_string(j_seed) +
                           " > alpha = " + std::to_string(alpha));
  }
  out.gains.push_back(K_seed);

  const double r0 = 0.5 * (1.0 + K_seed.norm());
  double radius = r0;
  const long max_proposals = 1000 + 500 * count;
  while (static_cast<long>(out.gains.size()) < count &&
         out.proposals < max_proposals) {
    CounterRng rng(seed, 0, static_cast<std::uint64_t>(out.proposals),
                   rng_purpose::kProposal);
    ++out.proposals;
    MatrixXd K = K_seed;
    for (Eigen::Index j = 0; j < K.cols(); ++j)
      for (Eigen::Index i = 0; i < K.rows(); ++i)
        K(i, j) += radius * rng.normal();
    bool accept = false;
    try {
      accept = evaluate(sys, K).cost <= alpha;
    } catch (const UnstableClosedLoop&) {
      accept = false;
    }
    if (accept) {
      out.gains.push_back(std::move(K));
      radius = std::min(radius * 1.1, 8.0 * r0);
    } else {
      radius = std::max(radius * 0.9, r0 / 64.0);
    }
  }
  if (static_cast<long>(out.gains.size()) < count)
    throw SamplingFailed("only " + std::to_string(out.gains.size()) + " of " +
                         std::to_string(count) +
                         " sublevel samples found within " +
                         std::to_string(max_proposals) + " proposals");
  return out;
}

// gamma = max |A_K| over the sublevel set is not computable exactly (the set
// can be non-convex and disconnected); we take the sampled maximum inflated
// by a 1.05 safety factor.  Deterministic given seed; monotone in `samples`
// by the prefix property of the sampler.
inline double gamma_estimate(const LtiSystem& sys, const MatrixXd& K_seed,
                             double alpha, long samples, std::uint64_t seed) {
  const SublevelSample s = sample_sublevel(sys, K_seed, alpha, samples, seed);
  double gmax = 0.0;
  for (const auto& K : s.gains)
    gmax = std::max(gmax, spec_norm(closed_loop(sys, K)));
  return 1.05 * gmax;
}

enum class GammaProvenance { sampled, user_supplied };

struct LandscapeConstants {
  double alpha = 0.0;
  double mu = 0.0;
  double sigma_min_Q = 0.0;
  double sigma_min_R = 0.0;
  double sigma_min_C = 0.0;
  double zeta1 = 0.0, zeta2 = 0.0, zeta3 = 0.0, zeta4 = 0.0;
  double L = 0.0;    // smoothness (Hessian norm bound)
  double psi = 0.0;  // |KC| bound
  double gamma = 0.0;
  double M = 0.0;  // Hessian Lipschitz constant
  GammaProvenance gamma_provenance = GammaProvenance::sampled;
};

// One-stop computation of every landscape constant at alpha = J(K0), or at a
// caller-supplied alpha >= J(K0).  gamma_override skips the sampling step
// (user-supplied maximum).
inline LandscapeConstants landscape_constants(
    const LtiSystem& sys, const MatrixXd& K0, long gamma_samples = 10000,
    std::uint64_t seed = 0, std::optional<double> gamma_override = {},
    std::optional<double> alpha_override = {}) {
  LandscapeConstants lc;
  lc.alpha = alpha_override ? *alpha_override : evaluate(sys, K0).cost;
  lc.mu = sigma_min_sym(sys.X0);
  lc.sigma_min_Q = sigma_min_sym(sys.Q);
  lc.sigma_min_R = sigma_min_sym(sys.R);
  lc.sigma_min_C = sigma_min(sys.C);
  const SmoothnessResult sm = smoothness_constant(sys, lc.alpha);
  lc.L = sm.L;
  lc.zeta1 = sm.zeta1;
  lc.psi = psi_bound(sys, lc.alpha);
  if (gamma_override) {
    lc.gamma = *gamma_override;
    lc.gamma_provenance = GammaProvenance::user_supplied;
  } else {
    lc.gamma = gamma_estimate(sys, K0, lc.alpha, gamma_samples, seed);
    lc.gamma_provenance = GammaProvenance::sampled;
  }
  const HessianLipschitzResult hl =
      hessian_lipschitz_constant(sys, lc.alpha, lc.gamma, lc.psi);
  lc.M = hl.M;
  lc.zeta2 = hl.zeta2;
  lc.zeta3 = hl.zeta3;
  lc.zeta4 = hl.zeta4;
  return lc;
}

struct TraceBounds {
  double p_norm = 0.0;
  double p_bound = 0.0;  // J / mu
  bool p_ok = false;
  double sigma_trace = 0.0;
  double sigma_bound = 0.0;  // J / sigma_min(Q)
  bool sigma_ok = false;
};

// |P_K| <= J/mu and |Sigma_K| <= Tr(Sigma_K) <= J/smin(Q): proven bounds,
// so a false flag is a genuine defect somewhere.
inline TraceBounds trace_bounds(const LtiSystem& sys, const MatrixXd& K) {
  const ClosedLoopEval ev = evaluate(sys, K);
  TraceBounds tb;
  tb.p_norm = spec_norm(ev.P);
  tb.p_bound = ev.cost / sigma_min_sym(sys.X0);
  tb.p_ok = tb.p_norm <= tb.p_bound * (1.0 + 1e-12);
  const double sminQ = detail::require_sigma_min_Q(sys, "Sigma trace bound");
  tb.sigma_trace = ev.Sigma.trace();
  tb.sigma_bound = ev.cost / sminQ;
  tb.sigma_ok = tb.sigma_trace <= tb.sigma_bound * (1.0 + 1e-12);
  return tb;
}

// Exact identity ("almost smoothness"):
//   J(K') - J(K) = 2 Tr(Sigma_{K'} (K'C - KC)' E_K)
//                  + Tr(Sigma_{K'} (K'C - KC)' (R + B'P_K B)(K'C - KC)).
inline double performance_difference(const LtiSystem& sys, const MatrixXd& K,
                                     const MatrixXd& Kp) {
  const ClosedLoopEval evK = evaluate(sys, K);
  const ClosedLoopEval evKp = evaluate(sys, Kp);
  const MatrixXd Bt = sys.B.transpose();
  const MatrixXd E =
      (sys.R + Bt * evK.P * sys.B) * K * sys.C - Bt * evK.P * sys.A;
  const MatrixXd D = (Kp - K) * sys.C;
  const double lin = 2.0 * (evKp.Sigma * D.transpose() * E).trace();
  const double quad =
      (evKp.Sigma * D.transpose() * (sys.R + Bt * evK.P * sys.B) * D).trace();
  return lin + quad;
}

inline bool c_square_full_rank(const LtiSystem& sys) {
  return sys.d() == sys.n() && detail::numerical_rank(sys.C) == sys.n();
}

struct DominanceReport {
  double J_of_K = 0.0;
  double E_norm = 0.0;             // |E_K|_F at K
  double Sigma_Kstar_norm = 0.0;   // |Sigma_{Kref}|
  double gap_upper_rankdef = 0.0;  // |Sigma_{Kref}| Tr(E'(R+B'PB)^{-1}E)
  // Present only when C is square full rank:
  std::optional<double> Js_star;
  std::optional<double> gap_upper_fullrank;  // |Sigma|.|grad|^2/(4 mu^2 sC^2 sR)
  std::optional<double> gap_lower_fullrank;  // mu Tr(E'E)/|R+B'PB|
};

inline DominanceReport dominance_report(const LtiSystem& sys,
                                        const MatrixXd& K,
                                        const MatrixXd& Kref) {
  const ClosedLoopEval ev = evaluate(sys, K);
  const GradientBundle g = gradient(sys, K, ev);
  DominanceReport rep;
  rep.J_of_K = ev.cost;
  rep.E_norm = g.E.norm();
  rep.Sigma_Kstar_norm = spec_norm(evaluate(sys, Kref).Sigma);

  const MatrixXd W = sys.R + sys.B.transpose() * ev.P * sys.B;
  Eigen::LLT<MatrixXd> llt(W);
  if (llt.info() != Eigen::Success)
    throw NumericError("R + B'P B not positive definite");
  rep.gap_upper_rankdef =
      rep.Sigma_Kstar_norm * (g.E.transpose() * llt.solve(g.E)).trace();

  if (c_square_full_rank(sys)) {
    const double mu = sigma_min_sym(sys.X0);
    const double sC = sigma_min(sys.C);
    const double sR = detail::require_sigma_min_R(sys, "dominance bound");
    const DareResult dare = dare_state_feedback(sys);
    rep.Js_star = dare.Js;
    rep.gap_upper_fullrank = rep.Sigma_Kstar_norm * g.grad_norm * g.grad_norm /
                             (4.0 * mu * mu * sC * sC * sR);
    rep.gap_lower_fullrank =
        mu * (g.E.transpose() * g.E).trace() / spec_norm(W);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Sampled bound certificates.  Every inequality below is proven on the
// sublevel set, so a failing certificate means a defect (in the constants,
// the Hessian, or the sampler) — not an unlucky sample.

struct CertificateResult {
  std::string name;
  long checked = 0;
  long skipped = 0;          // pairs whose segment left the sublevel set
  double worst_ratio = 0.0;  // max over samples of lhs/rhs; pass needs <= 1
  bool pass = false;
  std::string note;
};

struct CertificateOptions {
  long gains = 100;
  long pairs = 100;
  std::uint64_t seed = 0;
  std::optional<MatrixXd> Kref;  // reference optimum for the rank-deficient
                                 // dominance bound
};

namespace detail {

// lhs <= rhs with slack for roundoff; ratio folds both cases.  Both sides of
// the gap bounds vanish at the optimum, so a sub-roundoff lhs passes outright.
inline double bound_ratio(double lhs, double rhs) {
  if (lhs <= 1e-12) return 0.0;
  if (rhs > 0.0) return lhs / rhs;
  return std::numeric_limits<double>::infinity();
}

inline void fold(CertificateResult& cert, double lhs, double rhs) {
  cert.worst_ratio = std::max(cert.worst_ratio, bound_ratio(lhs, rhs));
  ++cert.checked;
}

inline void finalize(CertificateResult& cert) {
  cert.pass = cert.checked > 0 && cert.worst_ratio <= 1.0 + 1e-9;
}

}  // namespace detail

// Runs the certificate suite at alpha = lc.alpha around K_seed:
//   - spectral norm of the assembled Hessian <= L at sampled in-set gains
//   - |KC| <= psi at the same gains
//   - trace bounds |P| <= J/mu, Tr(Sigma) <= J/smin(Q) at the same gains
//   - |H(K') - H(K)|_F <= M |K' - K|_F over in-set pairs whose segment
//     stays in the set (checked at 9 interior points)
//   - dominance gap bounds at the sampled gains (full-rank pair of bounds
//     when C is square full rank; the rank-deficient bound when Kref given)
inline std::vector<CertificateResult> run_certificates(
    const LtiSystem& sys, const MatrixXd& K_seed, const LandscapeConstants& lc,
    const CertificateOptions& opt = {}) {
  std::vector<CertificateResult> out;
  const SublevelSample gains =
      sample_sublevel(sys, K_seed, lc.alpha, opt.gains, opt.seed);

  CertificateResult hess{.name = "hessian_norm_le_L"};
  CertificateResult kc{.name = "kc_norm_le_psi"};
  CertificateResult pbound{.name = "p_norm_le_J_over_mu"};
  CertificateResult sbound{.name = "sigma_trace_le_J_over_sminQ"};
  const bool fullrank = c_square_full_rank(sys);
  CertificateResult dom_up{.name = fullrank ? "gap_le_fullrank_upper"
                                            : "gap_le_rankdef_upper"};
  CertificateResult dom_lo{.name = "fullrank_lower_le_gap"};

  std::optional<double> Js_star;
  if (fullrank) Js_star = dare_state_feedback(sys).Js;
  std::optional<double> Jref;
  if (opt.Kref) Jref = evaluate(sys, *opt.Kref).cost;

  for (const auto& K : gains.gains) {
    const HessianMatrix H = hessian_matrix(sys, K);
    detail::fold(hess, std::max(std::abs(H.min_eig), std::abs(H.max_eig)),
                 lc.L);
    detail::fold(kc, spec_norm(K * sys.C), lc.psi);
    const TraceBounds tb = trace_bounds(sys, K);
    detail::fold(pbound, tb.p_norm, tb.p_bound);
    detail::fold(sbound, tb.sigma_trace, tb.sigma_bound);
    if (fullrank) {
      const DominanceReport rep = dominance_report(sys, K, K_seed);
      detail::fold(dom_up, rep.J_of_K - *Js_star, *rep.gap_upper_fullrank);
      detail::fold(dom_lo, *rep.gap_lower_fullrank, rep.J_of_K - *Js_star);
    } else if (opt.Kref) {
      const DominanceReport rep = dominance_report(sys, K, *opt.Kref);
      detail::fold(dom_up, rep.J_of_K - *Jref, rep.gap_upper_rankdef);
    }
  }

  // In-set pairs from an independent sample stream.
  CertificateResult lip{.name = "hessian_lipschitz_le_M"};
  const SublevelSample pair_gains =
      sample_sublevel(sys, K_seed, lc.alpha, 2 * opt.pairs, opt.seed + 1);
  for (long i = 0; i + 1 < 2 * opt.pairs; i += 2) {
    const MatrixXd& K1 = pair_gains.gains[static_cast<size_t>(i)];
    const MatrixXd& K2 = pair_gains.gains[static_cast<size_t>(i + 1)];
    bool segment_in_set = true;
    for (int k = 1; k <= 9 && segment_in_set; ++k) {
      const MatrixXd Kt = K1 + (k / 10.0) * (K2 - K1);
      try {
        segment_in_set = evaluate(sys, Kt).cost <= lc.alpha;
      } catch (const UnstableClosedLoop&) {
        segment_in_set = false;
      }
    }
    if (!segment_in_set) {
      ++lip.skipped;
      continue;
    }
    const HessianMatrix H1 = hessian_matrix(sys, K1);
    const HessianMatrix H2 = hessian_matrix(sys, K2);
    detail::fold(lip, (H1.H - H2.H).norm(), lc.M * (K1 - K2).norm());
  }
  lip.note = std::to_string(lip.skipped) + " pairs skipped (segment left set)";

  for (CertificateResult* c : {&hess, &kc, &pbound, &sbound, &lip})
    detail::finalize(*c);
  out.push_back(hess);
  out.push_back(kc);
  out.push_back(pbound);
  out.push_back(sbound);
  out.push_back(lip);
  if (fullrank || opt.Kref) {
    detail::finalize(dom_up);
    out.push_back(dom_up);
  }
  if (fullrank) {
    detail::finalize(dom_lo);
    out.push_back(dom_lo);
  }
  return out;
}

}  // namespace sof
