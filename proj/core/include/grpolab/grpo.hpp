#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grpolab/random.hpp"
#include "grpolab/toy_policy.hpp"

namespace grpolab {

/// Hyperparameters of one GRPO run.
struct GrpoConfig {
  std::size_t group_size = 8;  // G
  double clip_epsilon = 0.2;   // epsilon
  double kl_beta = 0.04;       // beta
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  double learning_rate = 0.1;

  /// Throws InputError unless G >= 2, 0 < epsilon < 1, beta >= 0, steps >= 1
  /// and learning_rate >= 0.
  void validate() const;
};

/// A finite question/answer task with a rule-based reward per (question,
/// output) pair.
struct ToyTask {
  struct Question {
    std::string id;
    std::vector<std::string> outputs;
    std::vector<double> rewards;  // aligned with outputs
  };
  std::vector<Question> questions;

  /// Throws InputError on duplicate ids, fewer than two outputs, misaligned
  /// rewards, duplicate outputs within a question, or non-finite rewards.
  void validate() const;

  const Question& question(std::string_view id) const;
  std::vector<std::string> question_ids() const;
  std::vector<std::size_t> vocab_sizes() const;

  /// Mean over questions of the best available reward.
  double max_mean_reward() const;
};

/// {"questions":[{"id":..., "outputs":[...], "rewards":[...]}]}
ToyTask task_from_json(std::string_view text);
ToyTask load_task(const std::filesystem::path& path);

/// Fresh one-hot policy laid out for `task`.
CategoricalPolicy make_policy(const ToyTask& task, const PolicyInit& init);

/// Expected reward of `policy`, averaged over the task's questions.
double expected_reward(const ToyTask& task, const CategoricalPolicy& policy);

/// G outputs sampled for one question, with everything the surrogate needs.
/// Outputs are indices into the question's vocabulary.
struct Group {
  std::string question;
  std::vector<std::size_t> outputs;
  std::vector<double> rewards;
  std::vector<double> old_probs;
  std::vector<double> ref_probs;
  std::vector<double> advantages;

  std::size_t size() const noexcept { return outputs.size(); }
};

/// Population standard deviation below which a group carries no signal.
inline constexpr double kDegenerateRewardStd = 1e-8;

/// A_i = (r_i - mean(r)) / std(r) with the population std. All zeros when
/// std(r) < kDegenerateRewardStd. Throws InputError for fewer than 2 rewards.
std::vector<double> compute_advantages(std::span<const double> rewards);

/// r - ln(r) - 1 for r = pi_ref / pi_theta. Throws InputError for r <= 0.
double kl_estimate(double ratio);

/// Draws config.group_size outputs i.i.d. from `policy`'s distribution for
/// `question`, recording sampling-time and reference probabilities, rewards
/// and advantages. Throws InputError for an unknown question.
Group sample_group(const CategoricalPolicy& policy, const CategoricalPolicy& reference,
                   const ToyTask& task, std::string_view question, const GrpoConfig& config,
                   Rng& rng);

/// One sample's contribution min(rho A, clip(rho, 1-eps, 1+eps) A), without
/// the KL term.
double clipped_term(double ratio, double advantage, double clip_epsilon);

/// Mean over groups of
///   (1/G) sum_i [ min(rho_i A_i, clip(rho_i) A_i) - beta * kl(pi_ref/pi_theta) ]
/// with rho_i = pi_theta(o_i|q) / pi_old(o_i|q).
/// Throws InputError for no groups or malformed groups, NumericDomainError
/// when the policy assigns zero probability to a sampled output.
double surrogate_objective(std::span<const Group> groups, const CategoricalPolicy& policy,
                           const GrpoConfig& config);

/// Analytic gradient of surrogate_objective with respect to the adapter
/// factors. On a clip boundary the unclipped branch is differentiated.
AdapterGradient objective_gradient(std::span<const Group> groups, const CategoricalPolicy& policy,
                                   const GrpoConfig& config);

struct TrainReport {
  std::vector<double> mean_rewards;  // per step, mean over all sampled rewards
  std::vector<double> objectives;    // per step, surrogate at the sampling point
  CategoricalPolicy final_policy;
};

/// Receives (step, mean group reward) after every update; steps count from 1.
using TelemetrySink = std::function<void(std::size_t step, double mean_reward)>;

/// GRPO with one ascent step per sampled batch. The reference policy is a
/// frozen copy of `policy`. Sampling for (step, question) uses its own
/// substream derived from config.seed, so the run is bitwise reproducible.
TrainReport train(const ToyTask& task, CategoricalPolicy policy, const GrpoConfig& config,
                  const TelemetrySink& sink = {});

}  // namespace grpolab
