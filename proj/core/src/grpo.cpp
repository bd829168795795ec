#include "grpolab/grpo.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "grpolab/error.hpp"

namespace grpolab {

void GrpoConfig::validate() const {
  if (group_size < 2) throw InputError("group_size must be >= 2");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw InputError("clip_epsilon must lie in (0, 1)");
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) throw InputError("kl_beta must be finite and >= 0");
  if (steps < 1) throw InputError("steps must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("learning_rate must be finite and >= 0");
  }
}

void ToyTask::validate() const {
  if (questions.empty()) throw InputError("task has no questions");
  std::unordered_set<std::string> seen;
  for (const Question& q : questions) {
    if (!seen.insert(q.id).second) throw InputError("duplicate question id '" + q.id + "'");
    if (q.outputs.size() < 2) throw InputError("question '" + q.id + "' needs at least 2 outputs");
    if (q.rewards.size() != q.outputs.size()) {
      throw InputError("question '" + q.id + "': rewards not aligned with outputs");
    }
    if (std::set<std::string>(q.outputs.begin(), q.outputs.end()).size() != q.outputs.size()) {
      throw InputError("question '" + q.id + "': duplicate output");
    }
    for (double r : q.rewards) {
      if (!std::isfinite(r)) throw InputError("question '" + q.id + "': non-finite reward");
    }
  }
}

const ToyTask::Question& ToyTask::question(std::string_view id) const {
  const auto it = std::find_if(questions.begin(), questions.end(),
                               [&](const Question& q) { return q.id == id; });
  if (it == questions.end()) throw InputError("unknown question '" + std::string(id) + "'");
  return *it;
}

std::vector<std::string> ToyTask::question_ids() const {
  std::vector<std::string> ids;
  for (const Question& q : questions) ids.push_back(q.id);
  return ids;
}

std::vector<std::size_t> ToyTask::vocab_sizes() const {
  std::vector<std::size_t> sizes;
  for (const Question& q : questions) sizes.push_back(q.outputs.size());
  return sizes;
}

double ToyTask::max_mean_reward() const {
  double total = 0.0;
  for (const Question& q : questions) total += *std::max_element(q.rewards.begin(), q.rewards.end());
  return total / static_cast<double>(questions.size());
}

ToyTask task_from_json(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("task: ") + e.what(), 0);
  }
  if (!doc.is_object() || !doc.contains("questions") || !doc["questions"].is_array()) {
    throw SchemaError("task: expected an object with a 'questions' array");
  }
  ToyTask task;
  try {
    for (const json& q : doc["questions"]) {
      ToyTask::Question question;
      question.id = q.at("id").get<std::string>();
      question.outputs = q.at("outputs").get<std::vector<std::string>>();
      question.rewards = q.at("rewards").get<std::vector<double>>();
      task.questions.push_back(std::move(question));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("task: ") + e.what());
  }
  try {
    task.validate();
  } catch (const InputError& e) {
    throw SchemaError(std::string("task: ") + e.what());
  }
  return task;
}

ToyTask load_task(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open task file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return task_from_json(buf.str());
}

CategoricalPolicy make_policy(const ToyTask& task, const PolicyInit& init) {
  task.validate();
  return make_one_hot_policy(task.question_ids(), task.vocab_sizes(), init);
}

namespace {

void check_compatible(const ToyTask& task, const CategoricalPolicy& policy) {
  for (const ToyTask::Question& q : task.questions) {
    const std::size_t idx = policy.question_index(q.id);
    if (policy.questions()[idx].vocab_size != q.outputs.size()) {
      throw InputError("policy vocabulary of '" + q.id + "' does not match the task");
    }
  }
}

// Inverse-CDF draw from a discrete distribution.
std::size_t draw(const Eigen::VectorXd& probs, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  const auto n = static_cast<std::size_t>(probs.size());
  for (std::size_t j = 0; j < n; ++j) {
    cumulative += probs[static_cast<Eigen::Index>(j)];
    if (u < cumulative) return j;
  }
  // u landed in the rounding slack above the final partial sum.
  for (std::size_t j = n; j-- > 0;) {
    if (probs[static_cast<Eigen::Index>(j)] > 0.0) return j;
  }
  return n - 1;
}

void check_group(const Group& g) {
  const std::size_t n = g.outputs.size();
  if (n == 0 || g.rewards.size() != n || g.old_probs.size() != n || g.ref_probs.size() != n ||
      g.advantages.size() != n) {
    throw InputError("group '" + g.question + "': inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(g.old_probs[i] > 0.0) || !(g.ref_probs[i] > 0.0)) {
      throw NumericDomainError("group '" + g.question + "': non-positive old/ref probability");
    }
  }
}

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

}  // namespace

double expected_reward(const ToyTask& task, const CategoricalPolicy& policy) {
  check_compatible(task, policy);
  double total = 0.0;
  for (const ToyTask::Question& q : task.questions) {
    const Eigen::VectorXd p = policy.forward(q.id);
    for (std::size_t j = 0; j < q.rewards.size(); ++j) total += p[static_cast<Eigen::Index>(j)] * q.rewards[j];
  }
  return total / static_cast<double>(task.questions.size());
}

std::vector<double> compute_advantages(std::span<const double> rewards) {
  const std::size_t n = rewards.size();
  if (n < 2) throw InputError("compute_advantages: need at least 2 rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));

  std::vector<double> adv(n, 0.0);
  if (!(sd >= kDegenerateRewardStd)) return adv;
  for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

double kl_estimate(double ratio) {
  if (!(ratio > 0.0)) throw InputError("kl_estimate: ratio must be > 0");
  // r - ln r - 1 loses everything to cancellation near r = 1; expand there.
  const double d = ratio - 1.0;
  if (std::abs(d) < 1e-4) return d * d * (0.5 + d * (-1.0 / 3.0 + d * 0.25));
  return d - std::log(ratio);
}

Group sample_group(const CategoricalPolicy& policy, const CategoricalPolicy& reference,
                   const ToyTask& task, std::string_view question, const GrpoConfig& config,
                   Rng& rng) {
  if (config.group_size < 2) throw InputError("group_size must be >= 2");
  const ToyTask::Question& q = task.question(question);
  const Eigen::VectorXd p = policy.forward(question);
  const Eigen::VectorXd p_ref = reference.forward(question);
  if (static_cast<std::size_t>(p.size()) != q.outputs.size() ||
      static_cast<std::size_t>(p_ref.size()) != q.outputs.size()) {
    throw InputError("policy vocabulary of '" + q.id + "' does not match the task");
  }

  Group g;
  g.question = q.id;
  const std::size_t n = config.group_size;
  g.outputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = draw(p, rng);
    const auto jj = static_cast<Eigen::Index>(j);
    g.outputs.push_back(j);
    g.rewards.push_back(q.rewards[j]);
    g.old_probs.push_back(p[jj]);
    g.ref_probs.push_back(p_ref[jj]);
  }
  g.advantages = compute_advantages(g.rewards);
  return g;
}

double clipped_term(double ratio, double advantage, double clip_epsilon) {
  return std::min(ratio * advantage, clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage);
}

double surrogate_objective(std::span<const Group> groups, const CategoricalPolicy& policy,
                           const GrpoConfig& config) {
  if (groups.empty()) throw InputError("surrogate_objective: no groups");
  double total = 0.0;
  for (const Group& g : groups) {
    check_group(g);
    const Eigen::VectorXd p = policy.forward(g.question);
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.outputs[i] >= static_cast<std::size_t>(p.size())) {
        throw InputError("group '" + g.question + "': output index out of range");
      }
      const double pi = p[static_cast<Eigen::Index>(g.outputs[i])];
      if (!(pi > 0.0)) throw NumericDomainError("policy assigns zero probability to a sampled output");
      const double rho = pi / g.old_probs[i];
      sum += clipped_term(rho, g.advantages[i], config.clip_epsilon) -
             config.kl_beta * kl_estimate(g.ref_probs[i] / pi);
    }
    total += sum / static_cast<double>(g.size());
  }
  return total / static_cast<double>(groups.size());
}

AdapterGradient objective_gradient(std::span<const Group> groups, const CategoricalPolicy& policy,
                                   const GrpoConfig& config) {
  if (groups.empty()) throw InputError("objective_gradient: no groups");
  const LowRankAdapter& a = policy.adapter();
  AdapterGradient total{Eigen::MatrixXd::Zero(a.l1.rows(), a.l1.cols()),
                        Eigen::MatrixXd::Zero(a.l2.rows(), a.l2.cols())};
  const double eps = config.clip_epsilon;
  const double per_group = 1.0 / static_cast<double>(groups.size());

  for (const Group& g : groups) {
    check_group(g);
    const std::size_t q = policy.question_index(g.question);
    const Eigen::VectorXd p = policy.forward(q);
    const double weight = per_group / static_cast<double>(g.size());

    // d/d logits of sum_i term_i, via d term_i / d log pi(o_i) times
    // d log pi(o_i) / d logits = e_{o_i} - p.
    Eigen::VectorXd upstream = Eigen::VectorXd::Zero(p.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.outputs[i] >= static_cast<std::size_t>(p.size())) {
        throw InputError("group '" + g.question + "': output index out of range");
      }
      const auto j = static_cast<Eigen::Index>(g.outputs[i]);
      const double pi = p[j];
      if (!(pi > 0.0)) throw NumericDomainError("policy assigns zero probability to a sampled output");
      const double rho = pi / g.old_probs[i];
      const double adv = g.advantages[i];

      // The min picks the clipped constant only when rho has left the trust
      // region in the direction the advantage rewards.
      const bool clipped = (adv > 0.0 && rho > 1.0 + eps) || (adv < 0.0 && rho < 1.0 - eps);
      double dlogp = clipped ? 0.0 : rho * adv;
      // d/dlog pi of -beta (k - ln k - 1), k = ref / pi, is beta (k - 1).
      dlogp += config.kl_beta * (g.ref_probs[i] / pi - 1.0);

      upstream -= (weight * dlogp) * p;
      upstream[j] += weight * dlogp;
    }
    total += policy.adapter_gradient(q, upstream);
  }
  return total;
}

TrainReport train(const ToyTask& task, CategoricalPolicy policy, const GrpoConfig& config,
                  const TelemetrySink& sink) {
  config.validate();
  task.validate();
  check_compatible(task, policy);

  const CategoricalPolicy reference = policy;
  TrainReport report;
  report.mean_rewards.reserve(config.steps);
  report.objectives.reserve(config.steps);

  std::vector<Group> groups(task.questions.size());
  for (std::size_t step = 1; step <= config.steps; ++step) {
    // The policy at sampling time is the old policy for this step's update.
    double reward_sum = 0.0;
    for (std::size_t qi = 0; qi < task.questions.size(); ++qi) {
      Rng rng(substream_seed(config.seed, step, qi));
      groups[qi] = sample_group(policy, reference, task, task.questions[qi].id, config, rng);
      for (double r : groups[qi].rewards) reward_sum += r;
    }
    const double mean_reward =
        reward_sum / static_cast<double>(task.questions.size() * config.group_size);

    report.objectives.push_back(surrogate_objective(groups, policy, config));
    if (config.learning_rate > 0.0) {
      policy.apply_update(objective_gradient(groups, policy, config), config.learning_rate);
    }
    report.mean_rewards.push_back(mean_reward);
    if (sink) sink(step, mean_reward);
  }
  report.final_policy = std::move(policy);
  return report;
}

}  // namespace grpolab
