#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sof {

enum class Method { vanilla, natural, gauss_newton };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::vanilla: return "vanilla";
    case Method::natural: return "natural";
    case Method::gauss_newton: return "gauss_newton";
  }
  return "?";
}

enum class Termination { stationary, max_iters, monotonicity_violation };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::stationary: return "stationary";
    case Termination::max_iters: return "max_iters";
    case Termination::monotonicity_violation: return "monotonicity_violation";
  }
  return "?";
}

struct RunRecord {
  long iter = 0;
  Eigen::MatrixXd K;
  double J = 0.0;
  double grad_norm = 0.0;         // |∇J|_F, always the plain gradient
  double method_grad_norm = 0.0;  // norm of the method's own direction
  double rho = 0.0;               // spectral radius of A_K
  double eta_used = 0.0;  // step actually applied leaving this iterate
                          // (after halving); 0 on the final record
  double wall_time = 0.0;  // seconds since run start (not serialized)
  // Model-free extras (zero on model-based runs):
  double grad_hat_norm = 0.0;
  long divergent_count = 0;
};

struct RunLog {
  Method method = Method::vanilla;
  bool model_free = false;
  double eta = 0.0;  // configured (or auto-resolved) step size
  std::uint64_t seed = 0;
  std::vector<RunRecord> records;
  Termination terminated_by = Termination::max_iters;
  std::optional<long> theoretical_budget;

  const RunRecord& back() const { return records.back(); }
};

// CSV serialization.  %.17g round-trips doubles exactly, so re-running an
// identical configuration reproduces the file byte for byte.  Wall time is
// deliberately not a column for the same reason.
inline void write_csv(const RunLog& log, std::ostream& os) {
  const Eigen::Index m = log.records.empty() ? 0 : log.records[0].K.rows();
  const Eigen::Index d = log.records.empty() ? 0 : log.records[0].K.cols();
  os << "iter,J,grad_norm,method_grad_norm,rho,eta_used";
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      os << ",k_" << i << "_" << j;
  if (log.model_free) os << ",grad_hat_norm,divergent_count,seed";
  os << "\n";

  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (const auto& r : log.records) {
    os << r.iter;
    put(r.J);
    put(r.grad_norm);
    put(r.method_grad_norm);
    put(r.rho);
    put(r.eta_used);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < d; ++j) put(r.K(i, j));
    if (log.model_free) {
      put(r.grad_hat_norm);
      os << ',' << r.divergent_count << ',' << log.seed;
    }
    os << "\n";
  }
}

}  // namespace sof
