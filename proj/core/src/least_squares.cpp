#include "least_squares.hpp"

#include <algorithm>
#include <cmath>

namespace grpolab::detail {

namespace {

Eigen::VectorXd project(Eigen::VectorXd p, const LeastSquaresProblem& problem) {
  return p.cwiseMax(problem.lower).cwiseMin(problem.upper);
}

}  // namespace

LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem, Eigen::VectorXd start,
                                       const LeastSquaresOptions& options) {
  LeastSquaresResult result;
  result.params = project(std::move(start), problem);

  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
  problem.evaluate(result.params, residual, &jacobian);
  result.sse = residual.squaredNorm();
  if (!std::isfinite(result.sse)) return result;

  double lambda = 1e-3;
  constexpr double kMaxLambda = 1e16;
  Eigen::VectorXd trial_residual;

  while (result.iterations < options.max_iterations) {
    ++result.iterations;
    if (result.sse == 0.0) {
      result.converged = true;
      return result;
    }
    const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
    const Eigen::VectorXd jtr = jacobian.transpose() * residual;
    Eigen::VectorXd diag = jtj.diagonal();
    const double floor = std::max(diag.maxCoeff(), 1e-300) * 1e-12;
    diag = diag.cwiseMax(floor);

    bool accepted = false;
    while (lambda <= kMaxLambda) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal() += lambda * diag;
      const Eigen::VectorXd step = lhs.ldlt().solve(-jtr);
      const Eigen::VectorXd trial = project(result.params + step, problem);
      const double moved = (trial - result.params).norm();
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      problem.evaluate(trial, trial_residual, nullptr);
      const double trial_sse = trial_residual.squaredNorm();
      if (std::isfinite(trial_sse) && trial_sse < result.sse) {
        const double improvement = result.sse - trial_sse;
        const double old_sse = result.sse;
        result.params = trial;
        result.sse = trial_sse;
        residual = trial_residual;
        problem.evaluate(result.params, residual, &jacobian);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (improvement <= options.relative_tolerance * old_sse ||
            moved <= options.step_tolerance * (result.params.norm() + options.step_tolerance)) {
          result.converged = true;
          return result;
        }
        break;
      }
      if (moved <= options.step_tolerance * (result.params.norm() + options.step_tolerance)) {
        // The box or rounding stops all progress: this is a (constrained)
        // stationary point to working precision.
        result.converged = true;
        return result;
      }
      lambda *= 4.0;
    }
    if (!accepted) {
      // No damping level reduces the objective: a local minimum to working
      // precision.
      result.converged = true;
      return result;
    }
  }
  return result;
}

}  // namespace grpolab::detail
