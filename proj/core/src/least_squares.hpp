#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>

namespace grpolab::detail {

/// Box-constrained nonlinear least squares problem: minimize ||r(p)||^2
/// subject to lower <= p <= upper.
struct LeastSquaresProblem {
  /// Fills the residual vector and, when the second argument is non-null,
  /// the Jacobian d r / d p.
  std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& residual, Eigen::MatrixXd* jacobian)>
      evaluate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct LeastSquaresOptions {
  std::size_t max_iterations = 500;
  /// Converged once an accepted step improves the objective by less than
  /// this fraction of its current value.
  double relative_tolerance = 1e-10;
  /// Converged once the step is this small relative to |p|.
  double step_tolerance = 1e-13;
};

struct LeastSquaresResult {
  Eigen::VectorXd params;
  double sse = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling; trial points are
/// projected onto the box.
LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem, Eigen::VectorXd start,
                                       const LeastSquaresOptions& options);

}  // namespace grpolab::detail
