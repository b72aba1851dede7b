#include "sof/gradient.hpp"

#include <gtest/gtest.h>

#include "sof/benchmarks.hpp"
#include "sof/lyapunov.hpp"
#include "sof/rng.hpp"
#include "test_support.hpp"

namespace sof {
namespace {

namespace fz = test::frozen;

TEST(GradientTest, MatchesCentralDifferences) {
  for (const bool second : {false, true}) {
    const LtiSystem sys = second ? example_two() : example_one();
    const MatrixXd K0 =
        second ? example_two_initial_gain() : example_one_initial_gain();
    const auto gains = test::stabilizing_gains(sys, K0, 10, /*seed=*/7);
    for (const auto& K : gains) {
      const GradientBundle g = gradient(sys, K);
      MatrixXd fd(sys.m(), sys.d());
      for (Eigen::Index j = 0; j < sys.d(); ++j)
        for (Eigen::Index i = 0; i < sys.m(); ++i)
          fd(i, j) = fd_gradient_entry(sys, K, i, j, 1e-6);
      EXPECT_LE((fd - g.grad).norm(), 1e-6 * g.grad.norm())
          << "K =\n"
          << K;
    }
  }
  test::expect_rel(gradient(example_one(), example_one_initial_gain()).grad(0, 0),
                   fz::kGrad9, 1e-12, "grad at K=9");
  test::expect_rel(gradient(example_two(), example_two_initial_gain()).grad_norm,
                   fz::kGrad2Norm, 1e-12, "grad norm ex2");
}

TEST(GradientTest, NormIdentityFromResidual) {
  // |grad J|_F^2 = 4 Tr(C Sigma E' E Sigma C'), an exact identity.
  for (const bool second : {false, true}) {
    const LtiSystem sys = second ? example_two() : example_one();
    const MatrixXd K0 =
        second ? example_two_initial_gain() : example_one_initial_gain();
    for (const auto& K : test::stabilizing_gains(sys, K0, 8, 11)) {
      const ClosedLoopEval ev = evaluate(sys, K);
      const GradientBundle g = gradient(sys, K, ev);
      const MatrixXd CS = sys.C * ev.Sigma;
      const double rhs = 4.0 * (CS * g.E.transpose() * g.E * CS.transpose()).trace();
      test::expect_rel(g.grad_norm * g.grad_norm, rhs, 1e-10, "norm identity");
    }
  }
}

TEST(GradientTest, PreconditionedDirectionsSolveTheirSystems) {
  const LtiSystem sys = example_two();
  const MatrixXd K = example_two_initial_gain();
  const ClosedLoopEval ev = evaluate(sys, K);
  const GradientBundle g = gradient(sys, K, ev);
  const MatrixXd W = sys.R + sys.B.transpose() * ev.P * sys.B;
  test::expect_matrix_near(g.natural * ev.Lout, g.grad, 1e-12 * g.grad.norm(),
                           "natural * L = grad");
  test::expect_matrix_near(W * g.gauss_newton * ev.Lout, g.grad,
                           1e-12 * g.grad.norm(), "W * GN * L = grad");
}

TEST(GradientTest, HessianQuadraticMatchesSecondDifferences) {
  // The second difference converges at O(h^2) until cancellation takes over,
  // so shrinking h by 10 must cut the error by ~100 (25 leaves margin) or
  // land below the eps*J/h^2 cancellation floor. Only the true limit obeys
  // both; a loose absolute gate additionally catches gross breakage.
  const LtiSystem sys = example_one();
  const auto gains =
      test::stabilizing_gains(sys, example_one_initial_gain(), 6, 3);
  MatrixXd Z(1, 1);
  Z << 1.0;
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  for (const auto& K : gains) {
    const double q = hessian_quadratic(sys, K, Z);
    const double e_coarse = std::abs(q - fd_second_difference(sys, K, Z, 1e-2));
    const double e_fine = std::abs(q - fd_second_difference(sys, K, Z, 1e-3));
    const double floor = 256.0 * kEps * evaluate(sys, K).cost / 1e-6;
    EXPECT_LE(e_fine, std::max(e_coarse / 25.0, floor)) << "K =\n" << K;
    EXPECT_LE(e_fine, 1e-4 * std::abs(q)) << "K =\n" << K;
  }

  const MatrixXd Z2 = MatrixXd::Identity(2, 2) / std::sqrt(2.0);
  test::expect_rel(hessian_quadratic(example_two(), example_two_initial_gain(), Z2),
                   fz::kHessQuadEx2, 1e-10, "pinned quadratic ex2");
}

TEST(GradientTest, QuadraticFormIsActuallyQuadratic) {
  // Parallelogram law q(Y+Z) + q(Y-Z) = 2q(Y) + 2q(Z) and homogeneity
  // q(cZ) = c^2 q(Z): fails if any non-bilinear term sneaks in.
  const LtiSystem sys = example_two();
  const MatrixXd K = example_two_initial_gain();
  const ClosedLoopEval ev = evaluate(sys, K);
  CounterRng rng(5, 0, 0, rng_purpose::kPerturbation);
  MatrixXd Y(2, 2), Z(2, 2);
  for (int i = 0; i < 4; ++i) Y(i % 2, i / 2) = rng.normal();
  for (int i = 0; i < 4; ++i) Z(i % 2, i / 2) = rng.normal();

  const double lhs = hessian_quadratic(sys, K, Y + Z, ev) +
                     hessian_quadratic(sys, K, Y - Z, ev);
  const double rhs =
      2.0 * hessian_quadratic(sys, K, Y, ev) + 2.0 * hessian_quadratic(sys, K, Z, ev);
  test::expect_rel(lhs, rhs, 1e-9, "parallelogram");
  test::expect_rel(hessian_quadratic(sys, K, 3.0 * Z, ev),
                   9.0 * hessian_quadratic(sys, K, Z, ev), 1e-10, "homogeneity");
}

TEST(GradientTest, AssembledHessianReproducesQuadraticForm) {
  const LtiSystem sys = example_two();
  const MatrixXd K = example_two_initial_gain();
  const HessianMatrix hm = hessian_matrix(sys, K);
  ASSERT_EQ(hm.H.rows(), 4);
  test::expect_matrix_near(hm.H, hm.H.transpose(), 1e-12 * hm.H.norm(),
                           "symmetry");

  const ClosedLoopEval ev = evaluate(sys, K);
  for (int t = 0; t < 20; ++t) {
    CounterRng rng(17, 0, static_cast<std::uint64_t>(t),
                   rng_purpose::kPerturbation);
    MatrixXd Z(2, 2);
    for (int i = 0; i < 4; ++i) Z(i % 2, i / 2) = rng.normal();
    Z /= Z.norm();
    // vec in column-major order, matching the assembly indexing.
    Eigen::VectorXd v(4);
    for (int a = 0; a < 4; ++a) v(a) = Z(a % 2, a / 2);
    const double via_matrix = v.dot(hm.H * v);
    const double direct = hessian_quadratic(sys, K, Z, ev);
    test::expect_rel(via_matrix, direct, 1e-9, "H vs quadratic form");
  }
}

TEST(GradientTest, ResidualVanishesAtStateFeedbackOptimum) {
  // With C = I the SOF problem is state feedback: at Ks* the residual E and
  // the gradient both vanish.
  const LtiSystem sys =
      with_output(example_one(), MatrixXd::Identity(2, 2));
  const DareResult dare = dare_state_feedback(sys);
  const GradientBundle g = gradient(sys, dare.Ks);
  EXPECT_LE(g.E.norm(), 1e-9);
  EXPECT_LE(g.grad_norm, 1e-8);
}

TEST(GradientTest, SingularOutputCorrelationRefused) {
  MatrixXd A = 0.5 * MatrixXd::Identity(2, 2);
  MatrixXd B = MatrixXd::Identity(2, 2);
  MatrixXd C(2, 2);
  C << 1.0, 1.0, 1.0, 1.0;  // rank 1 -> L_K = C Sigma C' is singular
  const LtiSystem sys(A, B, C, MatrixXd::Identity(2, 2),
                      MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
  EXPECT_THROW(gradient(sys, MatrixXd::Zero(2, 2)),
               IllConditionedOutputCorrelation);
}

}  // namespace
}  // namespace sof
