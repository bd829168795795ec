#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "grpolab/error.hpp"
#include "grpolab/grpo.hpp"
#include "test_util.hpp"

namespace grpolab {
namespace {

ToyTask two_question_task() {
  return task_from_json(R"({"questions":[
    {"id":"a","outputs":["w","x","y","z"],"rewards":[0,1,0,0]},
    {"id":"b","outputs":["w","x","y","z"],"rewards":[0,0,1,0]}]})");
}

TEST(Advantages, HandExample) {
  // mean 0.5, population std 0.5.
  const std::vector<double> a = compute_advantages(std::vector<double>{1, 0, 1, 0});
  const std::vector<double> expected{1, -1, 1, -1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], expected[i], 1e-15);
}

TEST(Advantages, DegenerateGroupIsAllZero) {
  for (double c : {0.0, 1.0, -3.5, 1e6}) {
    for (double v : compute_advantages(std::vector<double>{c, c, c})) EXPECT_EQ(v, 0.0);
  }
}

TEST(Advantages, AffineInvarianceExamples) {
  const auto base = compute_advantages(std::vector<double>{5, 2, 2, 3});
  const auto shifted = compute_advantages(std::vector<double>{6, 3, 3, 4});
  const auto scaled = compute_advantages(std::vector<double>{10, 4, 4, 6});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(base[i], shifted[i], 1e-12);
    EXPECT_NEAR(base[i], scaled[i], 1e-12);
  }
}

TEST(Advantages, ZScoreAndAffineProperties) {
  Rng rng(101);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t g = 2 + uniform_index(rng, 15);
    std::vector<double> r(g);
    for (double& x : r) x = uniform(rng, -5.0, 5.0);
    const auto a = compute_advantages(r);
    const auto [mean, sd] = testing::mean_and_std(a);
    EXPECT_NEAR(static_cast<double>(mean), 0.0, 1e-9);
    EXPECT_NEAR(static_cast<double>(sd), 1.0, 1e-9);

    // Oracle: z-scores in long double.
    const auto [rm, rs] = testing::mean_and_std(r);
    for (std::size_t i = 0; i < g; ++i) EXPECT_NEAR(a[i], static_cast<double>((r[i] - rm) / rs), 1e-9);

    const double scale = std::exp(uniform(rng, -3.0, 3.0));
    const double shift = uniform(rng, -100.0, 100.0);
    std::vector<double> t(g);
    for (std::size_t i = 0; i < g; ++i) t[i] = scale * r[i] + shift;
    const auto at = compute_advantages(t);
    for (std::size_t i = 0; i < g; ++i) EXPECT_NEAR(at[i], a[i], 1e-9);
  }
}

TEST(Advantages, RejectsTinyGroups) {
  EXPECT_THROW(compute_advantages(std::vector<double>{1.0}), InputError);
  EXPECT_THROW(compute_advantages(std::vector<double>{}), InputError);
}

TEST(KlEstimate, KnownValues) {
  EXPECT_EQ(kl_estimate(1.0), 0.0);
  EXPECT_NEAR(kl_estimate(2.0), 2.0 - std::log(2.0) - 1.0, 1e-15);
  EXPECT_NEAR(kl_estimate(2.0), 0.30685281944005469, 1e-15);
  EXPECT_NEAR(kl_estimate(0.5), 0.19314718055994531, 1e-15);
  EXPECT_THROW(kl_estimate(0.0), InputError);
  EXPECT_THROW(kl_estimate(-1.0), InputError);
}

TEST(KlEstimate, NonNegativeWithZeroOnlyAtOne) {
  Rng rng(103);
  for (int i = 0; i < 5000; ++i) {
    const double x = std::pow(10.0, uniform(rng, -3.0, 3.0));
    const double kl = kl_estimate(x);
    if (x == 1.0) {
      EXPECT_EQ(kl, 0.0);
    } else {
      EXPECT_GT(kl, 0.0) << "x = " << x;
    }
  }
  // Adjacent doubles around 1.
  EXPECT_GT(kl_estimate(std::nextafter(1.0, 2.0)), 0.0);
  EXPECT_GT(kl_estimate(std::nextafter(1.0, 0.0)), 0.0);
  // Series branch agrees with the direct formula where both are accurate.
  for (double d : {9e-5, -9e-5, 5e-5}) {
    const long double r = 1.0L + d;
    EXPECT_NEAR(kl_estimate(1.0 + d), static_cast<double>(r - std::log(r) - 1.0L), 1e-17);
  }
}

TEST(Surrogate, ClipHandCases) {
  EXPECT_DOUBLE_EQ(clipped_term(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_term(1.5, -1.0, 0.2), -1.5);
}

TEST(Surrogate, ClipDominanceAndMonotoneInEpsilon) {
  Rng rng(107);
  for (int i = 0; i < 2000; ++i) {
    const double rho = std::exp(uniform(rng, -1.5, 1.5));
    const double adv = uniform(rng, -3.0, 3.0);
    const double eps = uniform(rng, 0.01, 0.9);
    const double term = clipped_term(rho, adv, eps);
    const double clipped_rho = std::clamp(rho, 1.0 - eps, 1.0 + eps);
    EXPECT_LE(term, rho * adv + 1e-15);
    EXPECT_LE(term, clipped_rho * adv + 1e-15);
    const double wider = std::min(0.99, eps + uniform(rng, 0.0, 0.5));
    EXPECT_GE(clipped_term(rho, adv, wider), term - 1e-15);
  }
}

TEST(Surrogate, RatioOneIdentityGivesZero) {
  const ToyTask task = two_question_task();
  PolicyInit init;
  init.base_init_range = 0.7;
  init.seed = 5;
  const CategoricalPolicy policy = make_policy(task, init);
  GrpoConfig config;
  config.kl_beta = 0.3;
  Rng rng(1);
  std::vector<Group> groups;
  for (const auto& q : task.questions) groups.push_back(sample_group(policy, policy, task, q.id, config, rng));
  EXPECT_NEAR(surrogate_objective(groups, policy, config), 0.0, 1e-15);
}

TEST(Surrogate, ErrorPaths) {
  const ToyTask task = two_question_task();
  const CategoricalPolicy policy = make_policy(task, PolicyInit{});
  GrpoConfig config;
  EXPECT_THROW(surrogate_objective({}, policy, config), InputError);

  // Policy underflows to zero on the sampled output.
  Eigen::MatrixXd base = Eigen::MatrixXd::Zero(2, 8);
  base(0, 0) = -2000.0;
  const CategoricalPolicy spiked(base, policy.adapter(), policy.questions());
  Group g{"a", {0, 1}, {0, 1}, {0.25, 0.25}, {0.25, 0.25}, {-1, 1}};
  const std::vector<Group> groups{g};
  EXPECT_THROW(surrogate_objective(groups, spiked, config), NumericDomainError);
  EXPECT_THROW(objective_gradient(groups, spiked, config), NumericDomainError);
}

TEST(SampleGroup, PointMassPolicySamplesOnlyItsMode) {
  const ToyTask task = two_question_task();
  Eigen::MatrixXd base = Eigen::MatrixXd::Constant(2, 8, -800.0);
  base(0, 1) = 0.0;
  base(1, 6) = 0.0;
  const CategoricalPolicy point(base, make_policy(task, PolicyInit{}).adapter(),
                                make_policy(task, PolicyInit{}).questions());
  Rng rng(1);
  GrpoConfig config;
  const Group g = sample_group(point, point, task, "a", config, rng);
  ASSERT_EQ(g.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(g.outputs[i], 1u);
    EXPECT_EQ(g.old_probs[i], 1.0);
    EXPECT_EQ(g.rewards[i], 1.0);
    EXPECT_EQ(g.advantages[i], 0.0);
  }
}

TEST(SampleGroup, SeededUniformSamplingIsReproducible) {
  const ToyTask task = two_question_task();
  const CategoricalPolicy uniform_policy = make_policy(task, PolicyInit{});
  GrpoConfig config;
  ASSERT_EQ(config.group_size, 8u);
  Rng a(42), b(42), c(43);
  const Group g1 = sample_group(uniform_policy, uniform_policy, task, "b", config, a);
  const Group g2 = sample_group(uniform_policy, uniform_policy, task, "b", config, b);
  const Group g3 = sample_group(uniform_policy, uniform_policy, task, "b", config, c);
  EXPECT_EQ(g1.outputs, g2.outputs);
  EXPECT_EQ(g1.rewards, g2.rewards);
  EXPECT_EQ(g1.advantages, g2.advantages);
  EXPECT_NE(g1.outputs, g3.outputs);
  for (double p : g1.old_probs) EXPECT_EQ(p, 0.25);
}

TEST(SampleGroup, FrequenciesFollowThePolicy) {
  // Chi-square goodness of fit against the exact distribution.
  const ToyTask task = two_question_task();
  PolicyInit init;
  init.base_init_range = 1.0;
  init.seed = 8;
  const CategoricalPolicy policy = make_policy(task, init);
  const Eigen::VectorXd p = policy.forward("a");
  GrpoConfig config;
  config.group_size = 100;
  Rng rng(77);
  std::vector<double> counts(4, 0.0);
  const int groups = 400;
  for (int k = 0; k < groups; ++k) {
    for (std::size_t o : sample_group(policy, policy, task, "a", config, rng).outputs) counts[o] += 1.0;
  }
  double chi2 = 0.0;
  const double n = groups * 100.0;
  for (std::size_t j = 0; j < 4; ++j) {
    const double e = n * p[static_cast<Eigen::Index>(j)];
    chi2 += (counts[j] - e) * (counts[j] - e) / e;
  }
  EXPECT_LT(chi2, 16.27);  // chi-square(3) at p = 0.001
}

TEST(SampleGroup, UnknownQuestion) {
  const ToyTask task = two_question_task();
  const CategoricalPolicy policy = make_policy(task, PolicyInit{});
  Rng rng(1);
  EXPECT_THROW(sample_group(policy, policy, task, "zzz", GrpoConfig{}, rng), InputError);
}

TEST(Gradient, MatchesFiniteDifferencesOnRandomInstances) {
  Rng rng(2024);
  int checked = 0;
  while (checked < 60) {
    testing::GradientInstance inst;
    if (!testing::make_gradient_instance(rng, inst)) continue;
    const AdapterGradient analytic = objective_gradient(inst.groups, inst.policy, inst.config);
    const AdapterGradient numeric = testing::finite_difference(
        inst.policy, [&](const CategoricalPolicy& p) { return surrogate_objective(inst.groups, p, inst.config); },
        1e-5);
    EXPECT_LE(testing::gradient_relative_error(analytic, numeric), 1e-5) << "instance " << checked;
    ++checked;
  }
}

TEST(Gradient, AtReferenceOnlyPolicyGradientTermRemains) {
  Rng rng(5);
  const ToyTask task = testing::random_task(rng, 3, 4);
  const CategoricalPolicy policy = testing::random_policy(rng, 3, 4, 3, 1);
  GrpoConfig with_kl;
  with_kl.kl_beta = 0.5;
  GrpoConfig without_kl = with_kl;
  without_kl.kl_beta = 0.0;
  std::vector<Group> groups;
  for (const auto& q : task.questions) groups.push_back(sample_group(policy, policy, task, q.id, with_kl, rng));
  const AdapterGradient a = objective_gradient(groups, policy, with_kl);
  const AdapterGradient b = objective_gradient(groups, policy, without_kl);
  EXPECT_LE(std::sqrt((a.l1 - b.l1).squaredNorm() + (a.l2 - b.l2).squaredNorm()), 1e-15);
  EXPECT_GT(b.squared_norm(), 0.0);
}

TEST(Gradient, DegenerateGroupsGiveZeroGradient) {
  Rng rng(6);
  const CategoricalPolicy policy = testing::random_policy(rng, 2, 3, 2, 1);
  GrpoConfig config;
  config.kl_beta = 0.0;
  std::vector<Group> groups{Group{"q0", {0, 2, 1}, {1, 1, 1}, {0.3, 0.2, 0.5}, {0.3, 0.2, 0.5}, {0, 0, 0}},
                            Group{"q1", {1, 1, 0}, {0, 0, 0}, {0.4, 0.4, 0.1}, {0.5, 0.5, 0.2}, {0, 0, 0}}};
  const AdapterGradient g = objective_gradient(groups, policy, config);
  EXPECT_EQ(g.squared_norm(), 0.0);
}

TEST(Train, ZeroLearningRateLeavesPolicyUnchanged) {
  const ToyTask task = two_question_task();
  PolicyInit init;
  init.seed = 3;
  const CategoricalPolicy policy = make_policy(task, init);
  GrpoConfig config;
  config.learning_rate = 0.0;
  config.steps = 200;
  const TrainReport report = train(task, policy, config);
  EXPECT_TRUE(report.final_policy == policy);
  double mean = 0.0;
  for (double r : report.mean_rewards) mean += r;
  mean /= 200.0;
  // Uniform policy over 4 outputs with one correct: 0.25, sampled 16 per step.
  EXPECT_NEAR(mean, expected_reward(task, policy), 0.02);
}

TEST(Train, LearnsTheBestAnswers) {
  const ToyTask task = two_question_task();
  PolicyInit init;
  init.seed = 9;
  GrpoConfig config;
  config.steps = 500;
  config.seed = 7;
  const CategoricalPolicy policy = make_policy(task, init);
  const TrainReport report = train(task, policy, config);
  ASSERT_EQ(report.mean_rewards.size(), 500u);
  ASSERT_EQ(report.objectives.size(), 500u);
  EXPECT_GE(expected_reward(task, report.final_policy), 0.95 * task.max_mean_reward());
  // Base weights are frozen bit for bit.
  EXPECT_EQ(report.final_policy.base_weights(), policy.base_weights());
}

TEST(Train, DeterministicForFixedSeed) {
  const ToyTask task = two_question_task();
  GrpoConfig config;
  config.steps = 100;
  config.seed = 123;
  const CategoricalPolicy policy = make_policy(task, PolicyInit{});
  std::vector<std::pair<std::size_t, double>> emitted;
  const TrainReport a = train(task, policy, config, [&](std::size_t s, double r) { emitted.emplace_back(s, r); });
  const TrainReport b = train(task, policy, config);
  EXPECT_EQ(a.mean_rewards, b.mean_rewards);
  EXPECT_EQ(a.objectives, b.objectives);
  EXPECT_TRUE(a.final_policy == b.final_policy);
  ASSERT_EQ(emitted.size(), 100u);
  EXPECT_EQ(emitted.front().first, 1u);
  EXPECT_EQ(emitted.back().first, 100u);
  EXPECT_EQ(emitted[41].second, a.mean_rewards[41]);

  config.seed = 124;
  EXPECT_NE(train(task, policy, config).mean_rewards, a.mean_rewards);
}

TEST(Train, RejectsInvalidConfigurations) {
  const ToyTask task = two_question_task();
  const CategoricalPolicy policy = make_policy(task, PolicyInit{});
  GrpoConfig config;
  config.group_size = 1;
  EXPECT_THROW(train(task, policy, config), InputError);
  config = {};
  config.clip_epsilon = 1.0;
  EXPECT_THROW(train(task, policy, config), InputError);
  config = {};
  config.steps = 0;
  EXPECT_THROW(train(task, policy, config), InputError);
}

TEST(Task, ParsingAndValidation) {
  const ToyTask task = two_question_task();
  EXPECT_EQ(task.questions.size(), 2u);
  EXPECT_DOUBLE_EQ(task.max_mean_reward(), 1.0);
  EXPECT_THROW(task_from_json(R"({"questions":[{"id":"a","outputs":["x"],"rewards":[1]}]})"), SchemaError);
  EXPECT_THROW(task_from_json(R"({"questions":[{"id":"a","outputs":["x","y"],"rewards":[1]}]})"), SchemaError);
  EXPECT_THROW(task_from_json(R"({"questions":[{"id":"a","outputs":["x","y"]}]})"), SchemaError);
  EXPECT_THROW(task_from_json("[1,2"), ParseError);
  EXPECT_THROW(load_task("/nonexistent/task.json"), IoError);
}

}  // namespace
}  // namespace grpolab
