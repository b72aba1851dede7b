#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace sof {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input: dimension mismatch, unparsable file, missing field.
class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what) : Error(what) {}
};

// Numerical failure: residual out of tolerance, non-finite value,
// solver non-convergence.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

// The closed loop A - BKC is not Schur stable (within the margin).
class UnstableClosedLoop : public Error {
 public:
  UnstableClosedLoop(const std::string& what, double rho)
      : Error(what), spectral_radius(rho) {}
  double spectral_radius;
};

// The output correlation L_K is numerically singular, so the natural
// direction cannot be formed reliably.
class IllConditionedOutputCorrelation : public NumericError {
 public:
  explicit IllConditionedOutputCorrelation(const std::string& what)
      : NumericError(what) {}
};

// A landscape constant needs sigma_min(Q) > 0 (or sigma_min(R) > 0) and the
// system does not provide it.  Carries the reason so callers can surface it.
class ConstantsUnavailable : public Error {
 public:
  explicit ConstantsUnavailable(const std::string& what) : Error(what) {}
};

// Sublevel-set rejection sampling found no admissible gain.
class SamplingFailed : public Error {
 public:
  explicit SamplingFailed(const std::string& what) : Error(what) {}
};

// Operation requires C square with full rank (linear-rate results).
class RankDeficientC : public Error {
 public:
  explicit RankDeficientC(const std::string& what) : Error(what) {}
};

// Local-convergence monitor: the reference point is not a strict local
// minimum (lambda_min of the Hessian is <= 0).
class NotALocalMinimum : public Error {
 public:
  NotALocalMinimum(const std::string& what, double min_eig)
      : Error(what), min_eig(min_eig) {}
  double min_eig;
};

// Local-convergence monitor: the run starts outside the guaranteed basin.
class OutsideBasin : public Error {
 public:
  OutsideBasin(const std::string& what, double r0, double rbar)
      : Error(what), r0(r0), rbar(rbar) {}
  double r0;
  double rbar;
};

// An optimizer step left the stabilizing set while monotone enforcement was
// off (nothing arrests the iterate, so we surface it instead).
class UnstableIterate : public Error {
 public:
  UnstableIterate(const std::string& what, Eigen::MatrixXd K, long iteration)
      : Error(what), K(std::move(K)), iteration(iteration) {}
  Eigen::MatrixXd K;
  long iteration;
};

// A simulated trajectory overflowed to non-finite values.
class DivergentRollout : public Error {
 public:
  DivergentRollout(const std::string& what, long last_finite_step)
      : Error(what), last_finite_step(last_finite_step) {}
  long last_finite_step;
};

// Too many perturbed rollouts diverged for the zeroth-order estimate to be
// trusted (more than 10% of the batch).
class EstimationUnreliable : public Error {
 public:
  EstimationUnreliable(const std::string& what, long divergent, long total)
      : Error(what), divergent(divergent), total(total) {}
  long divergent;
  long total;
};

}  // namespace sof
