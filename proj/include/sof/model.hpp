#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "sof/errors.hpp"

namespace sof {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// A gain K is "stabilizing" only with this much margin below rho = 1, so all
// downstream Lyapunov solves stay well-conditioned (the feasible set is open;
// gains on the boundary produce unbounded cost).
inline constexpr double kStabilityTol = 1e-9;

// Relative threshold for numerical rank / positive-definiteness decisions.
inline constexpr double kRankTol = 1e-10;

// Plant and cost data for x+ = Ax + Bu, y = Cx, u = -Ky, with quadratic
// stage cost x'Qx + u'Ru and initial second moment E[x0 x0'] = X0.
// Construction checks shapes only; semantic admissibility (definiteness,
// ranks) is the job of validate_system so that deficient systems can still
// be represented and reported on.
struct LtiSystem {
  MatrixXd A, B, C, Q, R, X0;

  LtiSystem(MatrixXd A_, MatrixXd B_, MatrixXd C_, MatrixXd Q_, MatrixXd R_,
            MatrixXd X0_)
      : A(std::move(A_)),
        B(std::move(B_)),
        C(std::move(C_)),
        Q(std::move(Q_)),
        R(std::move(R_)),
        X0(std::move(X0_)) {
    const auto n = A.rows();
    if (A.cols() != n) throw StructuralError("A must be square");
    if (B.rows() != n)
      throw StructuralError("B has " + std::to_string(B.rows()) +
                            " rows, expected " + std::to_string(n));
    if (C.cols() != n)
      throw StructuralError("C has " + std::to_string(C.cols()) +
                            " columns, expected " + std::to_string(n));
    if (Q.rows() != n || Q.cols() != n)
      throw StructuralError("Q must be " + std::to_string(n) + "x" +
                            std::to_string(n));
    if (R.rows() != B.cols() || R.cols() != B.cols())
      throw StructuralError("R must be " + std::to_string(B.cols()) + "x" +
                            std::to_string(B.cols()));
    if (X0.rows() != n || X0.cols() != n)
      throw StructuralError("X0 must be " + std::to_string(n) + "x" +
                            std::to_string(n));
    if (n == 0 || B.cols() == 0 || C.rows() == 0)
      throw StructuralError("system dimensions must be positive");
  }

  Eigen::Index n() const { return A.rows(); }  // states
  Eigen::Index m() const { return B.cols(); }  // inputs
  Eigen::Index d() const { return C.rows(); }  // outputs
};

inline void check_gain_shape(const LtiSystem& sys, const MatrixXd& K) {
  if (K.rows() != sys.m() || K.cols() != sys.d())
    throw StructuralError("gain must be " + std::to_string(sys.m()) + "x" +
                          std::to_string(sys.d()) + ", got " +
                          std::to_string(K.rows()) + "x" +
                          std::to_string(K.cols()));
  if (!K.allFinite()) throw StructuralError("gain has non-finite entries");
}

// A_K = A - B K C.  With K = 0 the products vanish exactly, so the result
// is bitwise A.
inline MatrixXd closed_loop(const LtiSystem& sys, const MatrixXd& K) {
  check_gain_shape(sys, K);
  return sys.A - sys.B * (K * sys.C);
}

inline double spectral_radius(const MatrixXd& M) {
  Eigen::EigenSolver<MatrixXd> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw NumericError("eigenvalue iteration did not converge (Schur cap " +
                       std::to_string(es.getMaxIterations() * M.rows()) +
                       " iterations)");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct StabilityReport {
  double spectral_radius = 0.0;
  double margin = 0.0;  // 1 - rho
  bool stabilizing = false;
};

inline StabilityReport stability(const LtiSystem& sys, const MatrixXd& K) {
  StabilityReport rep;
  rep.spectral_radius = spectral_radius(closed_loop(sys, K));
  rep.margin = 1.0 - rep.spectral_radius;
  rep.stabilizing = rep.spectral_radius < 1.0 - kStabilityTol;
  return rep;
}

struct CheckResult {
  std::string name;
  bool pass = false;
  double witness = 0.0;  // eigenvalue or rank, per check
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  std::vector<std::string> warnings;
  bool pass = false;
};

namespace detail {

inline Eigen::Index numerical_rank(const MatrixXd& M) {
  Eigen::JacobiSVD<MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > kRankTol * s(0)) ++r;
  return r;
}

struct DefinitenessResult {
  bool symmetric = false;
  double min_eig = 0.0;
  double max_abs_eig = 0.0;
};

inline DefinitenessResult definiteness(const MatrixXd& M) {
  DefinitenessResult res;
  const double scale = M.norm();
  res.symmetric = (M - M.transpose()).norm() <= kRankTol * std::max(1.0, scale);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()));
  res.min_eig = es.eigenvalues().minCoeff();
  res.max_abs_eig = es.eigenvalues().cwiseAbs().maxCoeff();
  return res;
}

}  // namespace detail

// Checks Assumption-1 admissibility: PD weights, full-row-rank C,
// controllability and observability.  A symmetric PSD-but-singular nonzero Q
// passes with a warning (the benchmark circuit system ships one); landscape
// constants that need sigma_min(Q) > 0 refuse separately.
inline ValidationReport validate_system(const LtiSystem& sys) {
  ValidationReport rep;
  const auto n = sys.n();

  auto pd_check = [&](const char* name, const MatrixXd& M,
                      bool allow_singular) {
    const auto def = detail::definiteness(M);
    CheckResult c;
    c.name = name;
    c.witness = def.min_eig;
    const double thresh = kRankTol * def.max_abs_eig;
    if (!def.symmetric) {
      c.pass = false;
      c.detail = "not symmetric";
    } else if (def.min_eig > thresh && def.max_abs_eig > 0.0) {
      c.pass = true;
    } else if (allow_singular && def.min_eig >= -thresh &&
               def.max_abs_eig > 0.0) {
      c.pass = true;
      c.detail = "singular (min eigenvalue " + std::to_string(def.min_eig) +
                 "): deviates from the positive-definite assumption";
      rep.warnings.push_back(std::string(name) + ": " + c.detail);
    } else {
      c.pass = false;
      c.detail = def.max_abs_eig == 0.0 ? "zero matrix" : "not positive definite";
    }
    rep.checks.push_back(std::move(c));
  };

  pd_check("Q positive definite", sys.Q, /*allow_singular=*/true);
  pd_check("R positive definite", sys.R, /*allow_singular=*/false);
  pd_check("X0 positive definite", sys.X0, /*allow_singular=*/false);

  {
    CheckResult c;
    c.name = "C full row rank";
    const auto r = detail::numerical_rank(sys.C);
    c.witness = static_cast<double>(r);
    c.pass = (r == sys.d());
    if (!c.pass)
      c.detail = "rank " + std::to_string(r) + " < " + std::to_string(sys.d());
    rep.checks.push_back(std::move(c));
  }

  {
    // Controllability matrix [B, AB, ..., A^{n-1}B].
    MatrixXd ctrb(n, n * sys.m());
    MatrixXd blk = sys.B;
    for (Eigen::Index j = 0; j < n; ++j) {
      ctrb.middleCols(j * sys.m(), sys.m()) = blk;
      blk = sys.A * blk;
    }
    CheckResult c;
    c.name = "(A,B) controllable";
    const auto r = detail::numerical_rank(ctrb);
    c.witness = static_cast<double>(r);
    c.pass = (r == n);
    if (!c.pass)
      c.detail = "controllability rank " + std::to_string(r) + " < " +
                 std::to_string(n);
    rep.checks.push_back(std::move(c));
  }

  {
    // Observability matrix [C; CA; ...; CA^{n-1}].
    MatrixXd obsv(n * sys.d(), n);
    MatrixXd blk = sys.C;
    for (Eigen::Index j = 0; j < n; ++j) {
      obsv.middleRows(j * sys.d(), sys.d()) = blk;
      blk = blk * sys.A;
    }
    CheckResult c;
    c.name = "(C,A) observable";
    const auto r = detail::numerical_rank(obsv);
    c.witness = static_cast<double>(r);
    c.pass = (r == n);
    if (!c.pass)
      c.detail = "observability rank " + std::to_string(r) + " < " +
                 std::to_string(n);
    rep.checks.push_back(std::move(c));
  }

  rep.pass = true;
  for (const auto& c : rep.checks) rep.pass = rep.pass && c.pass;
  return rep;
}

}  // namespace sof
