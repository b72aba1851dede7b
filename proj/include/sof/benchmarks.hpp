#pragma once

#include <Eigen/Dense>

#include "sof/model.hpp"

namespace sof {

// Built-in benchmark systems, also shipped as examples/example1.json and
// examples/example2.json.  Reference gains are the published optima for
// these plants (4-5 significant digits), used for relative-error reporting.

// Two-state open-loop-unstable SISO plant (a discretized version of Doyle's
// classic LQG example).  Scalar gain; the stabilizing set is the open
// interval (2.1, 22.05).
inline LtiSystem example_one() {
  MatrixXd A(2, 2), B(2, 1), C(1, 2), Q(2, 2), R(1, 1), X0(2, 2);
  A << 1.1, 0.1, 0.0, 1.1;
  B << 0.0, 0.1;
  C << 1.0, 1.0;
  Q = 0.25 * MatrixXd::Identity(2, 2);
  R << 0.2;
  X0 = 0.1 * MatrixXd::Identity(2, 2);
  return LtiSystem(A, B, C, Q, R, X0);
}

inline MatrixXd example_one_initial_gain() {
  MatrixXd K(1, 1);
  K << 9.0;
  return K;
}

inline MatrixXd example_one_reference_gain() {
  MatrixXd K(1, 1);
  K << 4.0637;
  return K;
}

// Endpoints of the stabilizing interval for example_one's scalar gain.
inline double example_one_interval_lo() { return 2.1; }
inline double example_one_interval_hi() { return 22.05; }

// Four-state open-loop-stable circuit, two inputs, two outputs.  Q is
// singular (two states are unpenalized), so the sublevel-set constants are
// unavailable for this plant; validation passes with a warning.
inline LtiSystem example_two() {
  MatrixXd A(4, 4), B(4, 2), C(2, 4), Q(4, 4), R(2, 2), X0(4, 4);
  A << 0.90031, -0.00015, 0.09048, -0.00452,  //
      -0.00015, 0.90031, 0.00452, -0.09048,   //
      -0.09048, -0.00452, 0.90483, -0.09033,  //
      0.00452, 0.09048, -0.09033, 0.90483;
  B << 0.00468, -0.00015,  //
      0.00015, -0.00468,   //
      0.09516, -0.00467,   //
      -0.00467, 0.09516;
  C << 1, 1, 0, 0,  //
      0, 1, 0, 0;
  Q = VectorXd{{0.1, 0.2, 0.0, 0.0}}.asDiagonal();
  R = VectorXd{{1e-6, 1e-4}}.asDiagonal();
  X0 = MatrixXd::Identity(4, 4);
  return LtiSystem(A, B, C, Q, R, X0);
}

inline MatrixXd example_two_initial_gain() {
  MatrixXd K(2, 2);
  K << 0.0, -1.0, 0.0, -2.0;
  return K;
}

inline MatrixXd example_two_reference_gain() {
  MatrixXd K(2, 2);
  K << 2.9738, -7.2907, 2.1067, -12.5384;
  return K;
}

// Same plant with a different output map (e.g. C = I for the full-rank
// variants the linear-rate results require).
inline LtiSystem with_output(const LtiSystem& sys, const MatrixXd& C) {
  return LtiSystem(sys.A, sys.B, C, sys.Q, sys.R, sys.X0);
}

// Same plant with a different initial-state covariance.
inline LtiSystem with_initial_covariance(const LtiSystem& sys,
                                         const MatrixXd& X0) {
  return LtiSystem(sys.A, sys.B, sys.C, sys.Q, sys.R, X0);
}

}  // namespace sof
