#include "grpolab/advisor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "grpolab/error.hpp"
#include "grpolab/random.hpp"

namespace grpolab {

namespace {

// Linear-interpolated sample quantile of a sorted vector.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

bool is_constant(const std::vector<double>& v) {
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  return *mx - *mn <= 1e-12 * std::max(1.0, std::max(std::abs(*mn), std::abs(*mx)));
}

}  // namespace

void BudgetSpec::validate() const {
  if (total_steps < 1) throw InputError("budget: total_steps must be >= 1");
  if (!(min_relative_gain > 0.0 && min_relative_gain < 1.0)) {
    throw InputError("budget: min_relative_gain must lie in (0, 1)");
  }
  if (!(prefix_fraction_min > 0.0 && prefix_fraction_min < 1.0)) {
    throw InputError("budget: prefix_fraction_min must lie in (0, 1)");
  }
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kStop:
      return "stop";
    case Verdict::kContinue:
      return "continue";
    case Verdict::kInsufficientData:
      return "insufficient-data";
  }
  return "unknown";
}

StopDecision forecast(const RewardTrajectory& prefix, const BudgetSpec& budget,
                      const ForecastOptions& options) {
  budget.validate();
  StopDecision decision;
  if (prefix.empty()) return decision;

  const RewardTrajectory run = prefix.renormalized(budget.total_steps);
  decision.t_now = run.points().back().normalized_step;
  if (decision.t_now < budget.prefix_fraction_min || run.size() < 8) return decision;

  const double r_init = run.meta().r_init;
  const double size = run.meta().model_size_b;
  const std::vector<double> observed = run.rewards();

  if (is_constant(observed)) {
    // Zero-amplitude curve: everything there is to gain has been gained.
    const double level = observed.front();
    FitResult flat;
    flat.params = SigmoidLawParams{.alpha = 0.0, .beta = level / size, .gamma = 0.0, .delta = 1.0, .t0 = 0.5};
    flat.residuals.push_back(std::vector<double>(observed.size(), 0.0));
    flat.runs_used.push_back({run.meta().run_id, r_init, size});
    decision.verdict = Verdict::kStop;
    decision.predicted_final_reward = level;
    decision.fitted_reward_now = level;
    decision.confidence_low = decision.confidence_high = level;
    decision.fitted = std::move(flat);
    return decision;
  }

  FitResult fit = fit_sigmoid(std::span<const RewardTrajectory>(&run, 1), options.fit);
  const SigmoidLawParams params = fit.sigmoid();
  const double plateau = predict_plateau(params, r_init, size);
  const double now = eval_sigmoid(params, r_init, size, decision.t_now);
  const double remaining = plateau - now;
  decision.predicted_final_reward = plateau;
  decision.fitted_reward_now = now;
  decision.predicted_remaining_gain_fraction = remaining / std::max(std::abs(plateau), 1e-9);

  const bool past_rapid_phase =
      params.gamma <= 0.0 ||
      decision.t_now >= params.t0 + phase_half_width(options.phase_fraction) / params.delta;
  const bool within_noise = remaining <= 2.0 * fit.rmse;
  decision.verdict = decision.predicted_remaining_gain_fraction < budget.min_relative_gain &&
                             (past_rapid_phase || within_noise)
                         ? Verdict::kStop
                         : Verdict::kContinue;

  // Residual bootstrap of the plateau.
  const std::vector<double>& residuals = fit.residuals.front();
  const std::vector<double> t = run.normalized_steps();
  std::vector<double> fitted_curve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) fitted_curve[i] = eval_sigmoid(params, r_init, size, t[i]);

  SigmoidFitOptions refit = options.fit;
  refit.starts = 0;
  refit.random_starts = 0;
  refit.init = params;

  Rng rng(options.seed);
  std::vector<double> plateaus;
  plateaus.reserve(options.bootstrap_resamples);
  for (std::size_t b = 0; b < options.bootstrap_resamples; ++b) {
    RewardTrajectory resampled(run.meta());
    for (std::size_t i = 0; i < t.size(); ++i) {
      resampled.record(run.points()[i].step,
                       fitted_curve[i] + residuals[uniform_index(rng, residuals.size())]);
    }
    try {
      const FitResult f = fit_sigmoid(std::span<const RewardTrajectory>(&resampled, 1), refit);
      plateaus.push_back(predict_plateau(f.sigmoid(), r_init, size));
    } catch (const FitError&) {
      // A resample that cannot be fitted contributes nothing to the band.
    }
  }
  if (plateaus.empty()) {
    decision.confidence_low = decision.confidence_high = plateau;
  } else {
    std::sort(plateaus.begin(), plateaus.end());
    decision.confidence_low = std::min(quantile(plateaus, 0.05), plateau);
    decision.confidence_high = std::max(quantile(plateaus, 0.95), plateau);
  }
  decision.fitted = std::move(fit);
  return decision;
}

SavingsReport savings_report(const StopDecision& decision, const BudgetSpec& budget, double t_now) {
  if (decision.verdict != Verdict::kStop) throw InputError("savings_report: verdict is not stop");
  if (!(t_now >= 0.0 && t_now <= 1.0)) throw InputError("savings_report: t_now must lie in [0, 1]");
  SavingsReport report;
  report.budget_saved_fraction = 1.0 - t_now;
  report.steps_saved = static_cast<std::uint64_t>(
      std::llround(report.budget_saved_fraction * static_cast<double>(budget.total_steps)));
  report.reward_forgone = decision.predicted_final_reward - decision.fitted_reward_now;
  if (decision.fitted && decision.fitted->is_sigmoid() && !decision.fitted->runs_used.empty()) {
    const RunUsed& run = decision.fitted->runs_used.front();
    report.reward_forgone = decision.predicted_final_reward -
                            eval_sigmoid(decision.fitted->sigmoid(), run.r_init, run.model_size_b, t_now);
  }
  return report;
}

std::string decision_to_json(const StopDecision& decision) {
  nlohmann::ordered_json doc;
  doc["verdict"] = to_string(decision.verdict);
  doc["predicted_final_reward"] = decision.predicted_final_reward;
  doc["remaining_gain_fraction"] = decision.predicted_remaining_gain_fraction;
  doc["confidence"] = {decision.confidence_low, decision.confidence_high};
  doc["budget_saved_fraction"] = decision.verdict == Verdict::kStop ? 1.0 - decision.t_now : 0.0;
  return doc.dump(2) + "\n";
}

}  // namespace grpolab
