#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sof/benchmarks.hpp"
#include "sof/errors.hpp"
#include "sof/gradient.hpp"
#include "sof/landscape.hpp"
#include "sof/lyapunov.hpp"
#include "sof/model.hpp"
#include "sof/modelfree.hpp"
#include "sof/optimize.hpp"
#include "sof/run_log.hpp"
#include "sof/system_io.hpp"

namespace sof {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;  // bad input or failed validation
inline constexpr int kExitRuntime = 3;     // numeric/runtime failure
inline constexpr int kExitArgs = 4;        // bad command-line arguments

// Command-line usage errors (exit 4), as opposed to bad input files (exit 2).
class ArgError : public Error {
 public:
  explicit ArgError(const std::string& what) : Error(what) {}
};

namespace cli_detail {

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Atomic per-file writes: runs never expose a half-written artifact.
inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw NumericError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline Method parse_method(const std::string& name, bool model_free = false) {
  if (name == "vanilla") return Method::vanilla;
  if (name == "natural") return Method::natural;
  if (name == "gauss-newton" || name == "gauss_newton") {
    if (model_free)
      throw ArgError("Gauss-Newton has no model-free form; use vanilla or natural");
    return Method::gauss_newton;
  }
  throw ArgError("unknown method '" + name +
                 "' (expected vanilla, natural, or gauss-newton)");
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      size_t pos = 0;
      const unsigned long long v = std::stoull(cell, &pos);
      if (pos != cell.size()) throw std::invalid_argument(cell);
      seeds.push_back(v);
    } catch (const std::exception&) {
      throw ArgError("bad seed '" + cell + "' in seed list");
    }
  }
  if (seeds.empty()) throw ArgError("empty seed list");
  return seeds;
}

inline MatrixXd parse_gain_arg(const std::string& text, const LtiSystem& sys) {
  try {
    return parse_gain(text, sys.m(), sys.d());
  } catch (const StructuralError& e) {
    throw ArgError(std::string("bad --k0: ") + e.what());
  }
}

inline nlohmann::json check_to_json(const CheckResult& c) {
  return {{"name", c.name},
          {"pass", c.pass},
          {"witness", c.witness},
          {"detail", c.detail}};
}

inline nlohmann::json constants_to_json(const LandscapeConstants& lc) {
  return {{"alpha", lc.alpha},
          {"mu", lc.mu},
          {"sigma_min_Q", lc.sigma_min_Q},
          {"sigma_min_R", lc.sigma_min_R},
          {"sigma_min_C", lc.sigma_min_C},
          {"zeta1", lc.zeta1},
          {"zeta2", lc.zeta2},
          {"zeta3", lc.zeta3},
          {"zeta4", lc.zeta4},
          {"L", lc.L},
          {"psi", lc.psi},
          {"gamma", lc.gamma},
          {"gamma_provenance", lc.gamma_provenance == GammaProvenance::sampled
                                   ? "sampled"
                                   : "user_supplied"},
          {"M", lc.M}};
}

inline std::string run_csv(const RunLog& log) {
  std::ostringstream os;
  write_csv(log, os);
  return os.str();
}

}  // namespace cli_detail

// --- validate ---------------------------------------------------------------

inline int cmd_validate(const std::string& system_path, std::ostream& out) {
  const LtiSystem sys = load_system(system_path);
  const ValidationReport rep = validate_system(sys);
  nlohmann::json j;
  j["pass"] = rep.pass;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : rep.checks) j["checks"].push_back(cli_detail::check_to_json(c));
  j["warnings"] = rep.warnings;
  out << j.dump(2) << "\n";
  return rep.pass ? kExitOk : kExitValidation;
}

// --- eval -------------------------------------------------------------------

inline int cmd_eval(const std::string& system_path, const std::string& k0_text,
                    std::ostream& out) {
  const LtiSystem sys = load_system(system_path);
  const MatrixXd K = cli_detail::parse_gain_arg(k0_text, sys);
  const ClosedLoopEval ev = evaluate(sys, K);  // UnstableClosedLoop -> exit 3
  const GradientBundle g = gradient(sys, K, ev);
  nlohmann::json j{{"J", ev.cost},
                   {"spectral_radius", ev.stability.spectral_radius},
                   {"stability_margin", ev.stability.margin},
                   {"grad_norm", g.grad_norm},
                   {"natural_grad_norm", g.natural.norm()},
                   {"gauss_newton_grad_norm", g.gauss_newton.norm()},
                   {"E_norm", g.E.norm()}};
  out << j.dump(2) << "\n";
  return kExitOk;
}

// --- grad-check -------------------------------------------------------------

inline int cmd_grad_check(const std::string& system_path,
                          const std::string& k0_text, double tol,
                          double hessian_tol, std::uint64_t seed,
                          std::ostream& out) {
  const LtiSystem sys = load_system(system_path);
  const MatrixXd K = cli_detail::parse_gain_arg(k0_text, sys);
  const GradientBundle g = gradient(sys, K);

  MatrixXd fd(sys.m(), sys.d());
  for (Eigen::Index j = 0; j < sys.d(); ++j)
    for (Eigen::Index i = 0; i < sys.m(); ++i)
      fd(i, j) = fd_gradient_entry(sys, K, i, j, 1e-6);
  const double grad_rel_err = (fd - g.grad).norm() / g.grad.norm();

  double hess_rel_err = 0.0;
  for (int t = 0; t < 3; ++t) {
    CounterRng rng(seed, 0, static_cast<std::uint64_t>(t),
                   rng_purpose::kPerturbation);
    const MatrixXd Z = sample_unit_sphere(sys.m(), sys.d(), rng);
    const double q = hessian_quadratic(sys, K, Z);
    const double q_fd = fd_second_difference(sys, K, Z, 1e-4);
    hess_rel_err = std::max(
        hess_rel_err, std::abs(q - q_fd) / std::max(std::abs(q_fd), 1e-30));
  }

  const bool pass = grad_rel_err <= tol && hess_rel_err <= hessian_tol;
  nlohmann::json j{{"grad_rel_err", grad_rel_err},
                   {"grad_tol", tol},
                   {"hessian_quadratic_rel_err", hess_rel_err},
                   {"hessian_tol", hessian_tol},
                   {"pass", pass}};
  out << j.dump(2) << "\n";
  return pass ? kExitOk : kExitRuntime;
}

// --- optimize ---------------------------------------------------------------

inline int cmd_optimize(const std::string& system_path,
                        const std::string& k0_text,
                        const std::string& method_text,
                        std::optional<double> eta, double epsilon,
                        long max_iters, bool enforce_monotone,
                        const std::string& out_dir, std::ostream& out) {
  const LtiSystem sys = load_system(system_path);
  const MatrixXd K0 = cli_detail::parse_gain_arg(k0_text, sys);
  OptimizerConfig cfg;
  cfg.method = cli_detail::parse_method(method_text);
  cfg.step_size = eta;
  cfg.epsilon = epsilon;
  cfg.max_iters = max_iters;
  cfg.enforce_monotone = enforce_monotone;
  const RunLog log = run(sys, K0, cfg);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path csv_path =
      std::filesystem::path(out_dir) /
      (std::string("run_") + method_name(cfg.method) + ".csv");
  cli_detail::write_file(csv_path, cli_detail::run_csv(log));

  const RunRecord& last = log.records.back();
  nlohmann::json j{{"method", method_name(cfg.method)},
                   {"eta", log.eta},
                   {"iterations", last.iter},
                   {"final_J", last.J},
                   {"final_grad_norm", last.grad_norm},
                   {"final_method_grad_norm", last.method_grad_norm},
                   {"terminated_by", termination_name(log.terminated_by)},
                   {"csv", csv_path.string()}};
  if (log.theoretical_budget) j["theoretical_budget"] = *log.theoretical_budget;
  out << j.dump(2) << "\n";
  return kExitOk;
}

// --- modelfree --------------------------------------------------------------

inline int cmd_modelfree(const std::string& system_path,
                         const std::string& k0_text,
                         const std::string& method_text,
                         ZerothOrderConfig cfg, double epsilon, long max_iters,
                         const std::vector<std::uint64_t>& seeds,
                         const std::string& out_dir, std::ostream& out) {
  const LtiSystem sys = load_system(system_path);
  const MatrixXd K0 = cli_detail::parse_gain_arg(k0_text, sys);
  const Method method = cli_detail::parse_method(method_text, true);

  std::filesystem::create_directories(out_dir);
  nlohmann::json runs = nlohmann::json::array();
  for (const std::uint64_t seed : seeds) {
    cfg.seed = seed;
    const RunLog log = run_modelfree(sys, K0, method, cfg, epsilon, max_iters);
    const std::filesystem::path csv_path =
        std::filesystem::path(out_dir) / ("mf_" + std::string(method_name(method)) +
                                          "_seed" + std::to_string(seed) + ".csv");
    cli_detail::write_file(csv_path, cli_detail::run_csv(log));
    const RunRecord& last = log.records.back();
    long divergent_total = 0;
    for (const auto& r : log.records) divergent_total += r.divergent_count;
    runs.push_back({{"seed", seed},
                    {"iterations", last.iter},
                    {"final_J", last.J},
                    {"final_grad_hat_norm", last.grad_hat_norm},
                    {"final_grad_norm", last.grad_norm},
                    {"terminated_by", termination_name(log.terminated_by)},
                    {"divergent_rollouts", divergent_total},
                    {"csv", csv_path.string()}});
  }
  nlohmann::json j{{"method", method_name(method)},
                   {"eta", cfg.step_size},
                   {"num_trajectories", cfg.num_trajectories},
                   {"rollout_length", cfg.rollout_length},
                   {"perturbation_radius", cfg.perturbation_radius},
                   {"runs", runs}};
  out << j.dump(2) << "\n";
  return kExitOk;
}

// --- landscape --------------------------------------------------------------

inline int cmd_landscape(const std::string& system_path,
                         std::optional<std::string> k0_text,
                         std::optional<double> alpha,
                         std::optional<double> gamma_override,
                         long gamma_samples, long certificate_samples,
                         std::uint64_t seed,
                         std::optional<std::string> kref_text,
                         std::optional<std::string> out_dir,
                         std::ostream& out) {
  const LtiSystem sys = load_system(system_path);
  MatrixXd K0;
  if (k0_text) {
    K0 = cli_detail::parse_gain_arg(*k0_text, sys);
  } else {
    K0 = MatrixXd::Zero(sys.m(), sys.d());
    if (!stability(sys, K0).stabilizing)
      throw ArgError(
          "--k0 required (without it the seed gain is 0, and this system is "
          "not open-loop stable)");
  }
  if (alpha) {
    const double j0 = evaluate(sys, K0).cost;
    if (*alpha < j0)
      throw ArgError("--alpha " + std::to_string(*alpha) +
                     " is below J(K0) = " + std::to_string(j0));
  }

  nlohmann::json j;
  j["system"] = system_path;
  bool all_pass = true;
  try {
    const LandscapeConstants lc = landscape_constants(
        sys, K0, gamma_samples, seed, gamma_override, alpha);
    j["constants_available"] = true;
    j["constants"] = cli_detail::constants_to_json(lc);

    if (certificate_samples > 0) {
      CertificateOptions copt;
      copt.gains = certificate_samples;
      copt.pairs = certificate_samples;
      copt.seed = seed;
      if (kref_text) copt.Kref = cli_detail::parse_gain_arg(*kref_text, sys);
      const std::vector<CertificateResult> certs =
          run_certificates(sys, K0, lc, copt);
      j["certificates"] = nlohmann::json::array();
      for (const auto& c : certs) {
        all_pass = all_pass && c.pass;
        j["certificates"].push_back({{"name", c.name},
                                     {"checked", c.checked},
                                     {"skipped", c.skipped},
                                     {"worst_ratio", c.worst_ratio},
                                     {"pass", c.pass},
                                     {"note", c.note}});
      }
      j["all_certificates_pass"] = all_pass;
    }
  } catch (const ConstantsUnavailable& e) {
    // Singular Q (or R) is a legitimate system property, not a usage error:
    // report it as structured output.
    j["constants_available"] = false;
    j["warning"] = e.what();
  }
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    cli_detail::write_file(std::filesystem::path(*out_dir) / "landscape.json",
                           text);
  }
  return all_pass ? kExitOk : kExitRuntime;
}

// --- sweep ------------------------------------------------------------------

struct GridSpec {
  double lo = 0.0, hi = 0.0;
  long points = 0;
};

inline GridSpec parse_grid(const std::string& text) {
  GridSpec g;
  const auto fail = [&] {
    throw ArgError("bad --grid '" + text + "' (expected lo:hi:points)");
  };
  std::stringstream ss(text);
  std::string a, b, c;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') ||
      !std::getline(ss, c))
    fail();
  try {
    size_t pa = 0, pb = 0, pc = 0;
    g.lo = std::stod(a, &pa);
    g.hi = std::stod(b, &pb);
    g.points = std::stol(c, &pc);
    if (pa != a.size() || pb != b.size() || pc != c.size()) fail();
  } catch (const std::exception&) {
    fail();
  }
  if (!(g.lo < g.hi) || g.points < 2) fail();
  return g;
}

inline int cmd_sweep(const std::string& system_path, const std::string& grid_text,
                     const std::string& out_dir, std::ostream& out) {
  const LtiSystem sys = load_system(system_path);
  if (sys.m() * sys.d() != 1)
    throw ArgError("sweep needs a scalar gain (m = d = 1); this system has " +
                   std::to_string(sys.m()) + "x" + std::to_string(sys.d()));
  const GridSpec grid = parse_grid(grid_text);

  std::string csv = "K,J,grad_norm,rho,stabilizing\n";
  double best_K = 0.0, best_J = std::numeric_limits<double>::infinity();
  long stabilizing_count = 0;
  MatrixXd K(1, 1);
  for (long i = 0; i < grid.points; ++i) {
    const double k =
        grid.lo + (grid.hi - grid.lo) * static_cast<double>(i) /
                      static_cast<double>(grid.points - 1);
    K(0, 0) = k;
    const StabilityReport st = stability(sys, K);
    double J = std::numeric_limits<double>::quiet_NaN();
    double gn = std::numeric_limits<double>::quiet_NaN();
    if (st.stabilizing) {
      const ClosedLoopEval ev = evaluate(sys, K);
      J = ev.cost;
      gn = gradient(sys, K, ev).grad_norm;
      ++stabilizing_count;
      if (J < best_J) {
        best_J = J;
        best_K = k;
      }
    }
    csv += cli_detail::fmt17(k) + "," + cli_detail::fmt17(J) + "," +
           cli_detail::fmt17(gn) + "," + cli_detail::fmt17(st.spectral_radius) +
           "," + (st.stabilizing ? "1" : "0") + "\n";
  }
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path csv_path =
      std::filesystem::path(out_dir) / "sweep.csv";
  cli_detail::write_file(csv_path, csv);

  nlohmann::json j{{"grid", {{"lo", grid.lo}, {"hi", grid.hi}, {"points", grid.points}}},
                   {"stabilizing_points", stabilizing_count},
                   {"csv", csv_path.string()}};
  if (stabilizing_count > 0) {
    j["min_K"] = best_K;
    j["min_J"] = best_J;
  }
  out << j.dump(2) << "\n";
  return kExitOk;
}

// --- reproduce --------------------------------------------------------------

struct ReproduceOptions {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  long mb_max_iters = 1000;  // model-based iteration cap
  long mf_iters = 100;       // model-free iterations (the figures plot 100)
  long num_trajectories = 1 << 14;
  long rollout_length = 100;
  double radius = 1e-3;
  double eta = 0.2;
};

namespace cli_detail {

struct ErrorCurves {
  std::vector<double> policy;  // |K - K*|_F / |K*|_F per iterate
  std::vector<double> cost;    // |J - J*| / |J*| per iterate
};

inline ErrorCurves relative_errors(const RunLog& log, const MatrixXd& Kref,
                                   double Jref) {
  ErrorCurves c;
  for (const auto& r : log.records) {
    c.policy.push_back((r.K - Kref).norm() / Kref.norm());
    c.cost.push_back(std::abs(r.J - Jref) / std::abs(Jref));
  }
  return c;
}

// One aggregated CSV per metric: iter, one column per seed, then min/mean/max
// (the published plots shade exactly this min-max band).  Runs that stopped
// early hold their final value.
inline std::string envelope_csv(const std::vector<std::vector<double>>& curves,
                                const std::vector<std::uint64_t>& seeds) {
  size_t rows = 0;
  for (const auto& c : curves) rows = std::max(rows, c.size());
  std::string csv = "iter";
  for (const auto s : seeds) csv += ",s" + std::to_string(s);
  csv += ",min,mean,max\n";
  for (size_t i = 0; i < rows; ++i) {
    csv += std::to_string(i);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, sum = 0.0;
    for (const auto& c : curves) {
      const double v = i < c.size() ? c[i] : c.back();
      csv += "," + fmt17(v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    csv += "," + fmt17(lo) + "," + fmt17(sum / static_cast<double>(curves.size())) +
           "," + fmt17(hi) + "\n";
  }
  return csv;
}

inline constexpr const char* kPlotStub = R"(#!/usr/bin/env python3
"""Plot the reproduction artifacts written next to this script."""
import csv
import os.path as p
import sys

try:
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib required: pip install matplotlib")

HERE = p.dirname(p.abspath(__file__))


def read(name):
    with open(p.join(HERE, name)) as f:
        rows = list(csv.DictReader(f))
    return rows


fig, axes = plt.subplots(1, 2, figsize=(11, 4))
for method in ("vanilla", "natural", "gauss_newton"):
    rows = read(f"model_based_{method}.csv")
    it = [int(r["iter"]) for r in rows]
    axes[0].semilogy(it, [float(r["rel_policy_err"]) for r in rows], label=method)
    axes[1].semilogy(it, [float(r["rel_cost_err"]) for r in rows], label=method)
for method in ("vanilla", "natural"):
    for ax, metric in ((axes[0], "policy_err"), (axes[1], "cost_err")):
        rows = read(f"model_free_{method}_{metric}.csv")
        it = [int(r["iter"]) for r in rows]
        mean = [float(r["mean"]) for r in rows]
        lo = [float(r["min"]) for r in rows]
        hi = [float(r["max"]) for r in rows]
        (line,) = ax.semilogy(it, mean, "--", label=f"model-free {method}")
        ax.fill_between(it, lo, hi, alpha=0.2, color=line.get_color())
axes[0].set(xlabel="iteration", ylabel="relative policy error")
axes[1].set(xlabel="iteration", ylabel="relative cost error")
for ax in axes:
    ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(p.join(HERE, "learning_curves.png"), dpi=150)
print("wrote", p.join(HERE, "learning_curves.png"))
)";

}  // namespace cli_detail

inline int cmd_reproduce(const std::string& example, const std::string& out_dir,
                         const ReproduceOptions& opt, std::ostream& out) {
  LtiSystem sys = example_one();
  MatrixXd K0 = example_one_initial_gain();
  MatrixXd Kref = example_one_reference_gain();
  if (example == "two") {
    sys = example_two();
    K0 = example_two_initial_gain();
    Kref = example_two_reference_gain();
  } else if (example != "one") {
    throw ArgError("unknown example '" + example + "' (expected one or two)");
  }
  const double Jref = evaluate(sys, Kref).cost;
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  nlohmann::json summary;
  summary["example"] = example;
  summary["eta"] = opt.eta;
  summary["reference"] = {{"gain_norm", Kref.norm()}, {"J", Jref}};

  for (const Method method :
       {Method::vanilla, Method::natural, Method::gauss_newton}) {
    OptimizerConfig cfg;
    cfg.method = method;
    cfg.step_size = opt.eta;
    cfg.max_iters = opt.mb_max_iters;
    RunLog log;
    try {
      log = run(sys, K0, cfg);
    } catch (const Error& e) {
      throw NumericError("model-based " + std::string(method_name(method)) +
                         " failed: " + e.what());
    }
    const cli_detail::ErrorCurves curves =
        cli_detail::relative_errors(log, Kref, Jref);
    std::string csv = "iter,J,grad_norm,rel_policy_err,rel_cost_err\n";
    for (size_t i = 0; i < log.records.size(); ++i) {
      const RunRecord& r = log.records[i];
      csv += std::to_string(r.iter) + "," + cli_detail::fmt17(r.J) + "," +
             cli_detail::fmt17(r.grad_norm) + "," +
             cli_detail::fmt17(curves.policy[i]) + "," +
             cli_detail::fmt17(curves.cost[i]) + "\n";
    }
    cli_detail::write_file(
        dir / (std::string("model_based_") + method_name(method) + ".csv"),
        csv);
    summary["model_based"][method_name(method)] = {
        {"iterations", log.records.back().iter},
        {"terminated_by", termination_name(log.terminated_by)},
        {"final_rel_policy_err", curves.policy.back()},
        {"final_rel_cost_err", curves.cost.back()}};
  }

  for (const Method method : {Method::vanilla, Method::natural}) {
    std::vector<std::vector<double>> policy_curves, cost_curves;
    double final_lo = std::numeric_limits<double>::infinity(), final_hi = 0.0,
           final_sum = 0.0;
    double cost_lo = std::numeric_limits<double>::infinity(), cost_hi = 0.0,
           cost_sum = 0.0;
    for (const std::uint64_t seed : opt.seeds) {
      ZerothOrderConfig cfg;
      cfg.num_trajectories = opt.num_trajectories;
      cfg.rollout_length = opt.rollout_length;
      cfg.perturbation_radius = opt.radius;
      cfg.step_size = opt.eta;
      cfg.seed = seed;
      RunLog log;
      try {
        log = run_modelfree(sys, K0, method, cfg, 1e-8, opt.mf_iters);
      } catch (const Error& e) {
        throw NumericError("model-free " + std::string(method_name(method)) +
                           " (seed " + std::to_string(seed) +
                           ") failed: " + e.what());
      }
      const cli_detail::ErrorCurves curves =
          cli_detail::relative_errors(log, Kref, Jref);
      final_lo = std::min(final_lo, curves.policy.back());
      final_hi = std::max(final_hi, curves.policy.back());
      final_sum += curves.policy.back();
      cost_lo = std::min(cost_lo, curves.cost.back());
      cost_hi = std::max(cost_hi, curves.cost.back());
      cost_sum += curves.cost.back();
      policy_curves.push_back(std::move(curves.policy));
      cost_curves.push_back(std::move(curves.cost));
    }
    const std::string base = std::string("model_free_") + method_name(method);
    cli_detail::write_file(dir / (base + "_policy_err.csv"),
                           cli_detail::envelope_csv(policy_curves, opt.seeds));
    cli_detail::write_file(dir / (base + "_cost_err.csv"),
                           cli_detail::envelope_csv(cost_curves, opt.seeds));
    const double n = static_cast<double>(opt.seeds.size());
    summary["model_free"][method_name(method)] = {
        {"seeds", opt.seeds},
        {"final_rel_policy_err",
         {{"min", final_lo}, {"mean", final_sum / n}, {"max", final_hi}}},
        {"final_rel_cost_err",
         {{"min", cost_lo}, {"mean", cost_sum / n}, {"max", cost_hi}}},
        {"envelope_nonzero", final_hi > final_lo}};
  }

  cli_detail::write_file(dir / "plot.py", cli_detail::kPlotStub);
  const std::string text = summary.dump(2) + "\n";
  cli_detail::write_file(dir / "summary.json", text);
  out << text;
  return kExitOk;
}

// --- top-level dispatch -----------------------------------------------------

inline int run_cli(int argc, const char* const* argv,
                   std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Policy-gradient optimization of static output-feedback gains"};
  app.require_subcommand(1);

  std::string system_path, k0_text, method_text = "vanilla";
  std::string grid_text, example, out_dir = ".", seed_list = "0";
  std::optional<double> eta, alpha, gamma_override;
  std::optional<std::string> k0_opt, kref_text, landscape_out;
  double epsilon = 1e-8, tol = 1e-6, hessian_tol = 1e-4;
  long max_iters = 100000, gamma_samples = 10000, cert_samples = 100;
  std::uint64_t seed = 0;
  bool no_monotone = false;
  ZerothOrderConfig zcfg;
  long mf_max_iters = 150;
  ReproduceOptions ropt;
  std::string repro_seed_list = "0,1,2,3,4,5,6,7,8,9";

  CLI::App* validate = app.add_subcommand("validate", "Check a system spec file");
  validate->add_option("--system", system_path, "system JSON file")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate cost and gradients at a gain");
  eval->add_option("--system", system_path)->required();
  eval->add_option("--k0", k0_text, "gain, rows ';'-separated, entries ','")->required();

  CLI::App* gradcheck = app.add_subcommand("grad-check", "Finite-difference check of the analytic gradient and Hessian form");
  gradcheck->add_option("--system", system_path)->required();
  gradcheck->add_option("--k0", k0_text)->required();
  gradcheck->add_option("--tol", tol, "gradient relative tolerance");
  gradcheck->add_option("--hessian-tol", hessian_tol);
  gradcheck->add_option("--seed", seed);

  CLI::App* optimize = app.add_subcommand("optimize", "Model-based policy gradient descent");
  optimize->add_option("--system", system_path)->required();
  optimize->add_option("--k0", k0_text)->required();
  optimize->add_option("--method", method_text, "vanilla|natural|gauss-newton");
  optimize->add_option("--eta", eta, "step size (default: theorem step from L)");
  optimize->add_option("--epsilon", epsilon, "stationarity tolerance");
  optimize->add_option("--max-iters", max_iters);
  optimize->add_flag("--no-monotone", no_monotone, "take raw steps (no halving on cost increase)");
  optimize->add_option("--out", out_dir, "output directory for the run CSV");

  CLI::App* modelfree = app.add_subcommand("modelfree", "Zeroth-order (simulation-only) policy gradient");
  modelfree->add_option("--system", system_path)->required();
  modelfree->add_option("--k0", k0_text)->required();
  modelfree->add_option("--method", method_text, "vanilla|natural");
  modelfree->add_option("--eta", zcfg.step_size);
  modelfree->add_option("--epsilon", epsilon);
  modelfree->add_option("--max-iters", mf_max_iters);
  modelfree->add_option("--z", zcfg.num_trajectories, "trajectories per estimate");
  modelfree->add_option("--rollout-length", zcfg.rollout_length);
  modelfree->add_option("--radius", zcfg.perturbation_radius, "perturbation radius r");
  modelfree->add_option("--seed-list", seed_list, "comma-separated seeds");
  modelfree->add_option("--out", out_dir);

  CLI::App* landscape = app.add_subcommand("landscape", "Sublevel-set constants and bound certificates");
  landscape->add_option("--system", system_path)->required();
  landscape->add_option("--k0", k0_opt, "seed gain (default: zero gain if stabilizing)");
  landscape->add_option("--alpha", alpha, "sublevel value (default: J(k0))");
  landscape->add_option("--gamma", gamma_override, "override the sampled gamma");
  landscape->add_option("--gamma-samples", gamma_samples);
  landscape->add_option("--certificates", cert_samples, "samples per certificate (0 = skip)");
  landscape->add_option("--seed", seed);
  landscape->add_option("--kref", kref_text, "reference optimum for the rank-deficient gap bound");
  landscape->add_option("--out", landscape_out);

  CLI::App* sweep = app.add_subcommand("sweep", "Evaluate J on a scalar-gain grid");
  sweep->add_option("--system", system_path)->required();
  sweep->add_option("--grid", grid_text, "lo:hi:points")->required();
  sweep->add_option("--out", out_dir);

  CLI::App* reproduce = app.add_subcommand("reproduce", "Rerun the two bundled benchmark studies");
  reproduce->add_option("--example", example, "one|two")->required();
  reproduce->add_option("--out", out_dir)->required();
  reproduce->add_option("--seed-list", repro_seed_list);
  reproduce->add_option("--max-iters", ropt.mb_max_iters, "model-based iteration cap");
  reproduce->add_option("--mf-iters", ropt.mf_iters, "model-free iterations");
  reproduce->add_option("--z", ropt.num_trajectories);
  reproduce->add_option("--rollout-length", ropt.rollout_length);
  reproduce->add_option("--radius", ropt.radius);
  reproduce->add_option("--eta", ropt.eta);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitArgs;
  }

  try {
    if (validate->parsed()) return cmd_validate(system_path, out);
    if (eval->parsed()) return cmd_eval(system_path, k0_text, out);
    if (gradcheck->parsed())
      return cmd_grad_check(system_path, k0_text, tol, hessian_tol, seed, out);
    if (optimize->parsed())
      return cmd_optimize(system_path, k0_text, method_text, eta, epsilon,
                          max_iters, !no_monotone, out_dir, out);
    if (modelfree->parsed())
      return cmd_modelfree(system_path, k0_text, method_text, zcfg, epsilon,
                           mf_max_iters, cli_detail::parse_seed_list(seed_list),
                           out_dir, out);
    if (landscape->parsed())
      return cmd_landscape(system_path, k0_opt, alpha, gamma_override,
                           gamma_samples, cert_samples, seed, kref_text,
                           landscape_out, out);
    if (sweep->parsed()) return cmd_sweep(system_path, grid_text, out_dir, out);
    if (reproduce->parsed()) {
      ropt.seeds = cli_detail::parse_seed_list(repro_seed_list);
      return cmd_reproduce(example, out_dir, ropt, out);
    }
    err << "no subcommand\n";
    return kExitArgs;
  } catch (const ArgError& e) {
    err << "error: " << e.what() << "\n";
    return kExitArgs;
  } catch (const StructuralError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace sof
