#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "grpolab/scaling_law.hpp"
#include "grpolab/telemetry.hpp"

namespace grpolab {

struct BudgetSpec {
  std::uint64_t total_steps = 1;
  /// Stop once less than this fraction of the predicted plateau remains to be
  /// gained.
  double min_relative_gain = 0.01;
  /// Refuse to decide before this fraction of the budget has been observed.
  double prefix_fraction_min = 0.15;

  /// Throws InputError unless total_steps >= 1, 0 < min_relative_gain < 1 and
  /// 0 < prefix_fraction_min < 1.
  void validate() const;
};

struct ForecastOptions {
  std::size_t bootstrap_resamples = 200;
  std::uint64_t seed = 0;
  /// Slope threshold defining the end of the rapid phase, as for
  /// detect_phases.
  double phase_fraction = 0.1;
  SigmoidFitOptions fit;
};

enum class Verdict { kStop, kContinue, kInsufficientData };

std::string to_string(Verdict v);

struct StopDecision {
  Verdict verdict = Verdict::kInsufficientData;
  double t_now = 0.0;
  double predicted_final_reward = 0.0;  // fitted plateau
  double fitted_reward_now = 0.0;       // fitted curve at t_now
  double predicted_remaining_gain_fraction = 0.0;
  double confidence_low = 0.0;   // 5th percentile of bootstrap plateaus
  double confidence_high = 0.0;  // 95th percentile
  std::optional<FitResult> fitted;
};

/// Fits the sigmoid law to `prefix` (renormalized to budget.total_steps,
/// covariates from its meta) and decides whether to keep training.
///
/// remaining = (plateau - fitted(t_now)) / max(|plateau|, 1e-9). The verdict
/// is stop when remaining < budget.min_relative_gain and the prefix has
/// either passed the fitted rapid-growth phase or shows no gain left beyond
/// its own noise (remaining absolute gain <= 2 * rmse). A prefix that is
/// constant is a zero-amplitude curve and stops. Prefixes shorter than
/// budget.prefix_fraction_min of the budget, or with fewer than 8 points,
/// give kInsufficientData.
///
/// The confidence band is a residual bootstrap: resampled residuals are added
/// to the fitted curve, refitted, and the 5th/95th percentiles of the refitted
/// plateaus reported (widened if needed to contain the point estimate).
///
/// Throws InputError for an invalid budget; propagates FitError when the
/// fit does not converge.
StopDecision forecast(const RewardTrajectory& prefix, const BudgetSpec& budget,
                      const ForecastOptions& options = {});

struct SavingsReport {
  double budget_saved_fraction = 0.0;  // 1 - t_now
  std::uint64_t steps_saved = 0;
  double reward_forgone = 0.0;  // plateau - fitted(t_now)
};

/// Throws InputError unless decision.verdict is kStop.
SavingsReport savings_report(const StopDecision& decision, const BudgetSpec& budget, double t_now);

/// {"verdict","predicted_final_reward","remaining_gain_fraction",
///  "confidence":[lo,hi],"budget_saved_fraction"}
std::string decision_to_json(const StopDecision& decision);

}  // namespace grpolab
