#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "grpolab/error.hpp"
#include "grpolab/toy_policy.hpp"
#include "test_util.hpp"

namespace grpolab {
namespace {

using testing::naive_logits;
using testing::random_policy;

CategoricalPolicy scalar_policy(double x, double w, double l1, double l2, double s) {
  // h = r = 1 and a two-output vocabulary whose second column is all zero.
  Eigen::MatrixXd base(1, 2);
  base << w, 0.0;
  Eigen::MatrixXd a(1, 1), b(1, 2);
  a << l1;
  b << l2, 0.0;
  QuestionSlot slot{"q", Eigen::VectorXd::Constant(1, x), 0, 2};
  return CategoricalPolicy(base, LowRankAdapter{a, b, s}, {slot});
}

TEST(ToyPolicy, ScalarForwardMatchesHandArithmetic) {
  // logit = x W + s x L1 L2 = 2*3 + 2*2*1*0.5 = 8.
  const CategoricalPolicy p = scalar_policy(2.0, 3.0, 1.0, 0.5, 2.0);
  EXPECT_DOUBLE_EQ(p.logits("q")[0], 8.0);
  EXPECT_DOUBLE_EQ(naive_logits(p, 0)[0], 8.0);
}

TEST(ToyPolicy, DisabledAdapterReducesToBaseModel) {
  Rng rng(11);
  CategoricalPolicy p = random_policy(rng, 3, 4, 3, 2);
  auto base_logits = [&](const CategoricalPolicy& pol, std::size_t q) {
    const QuestionSlot& slot = pol.questions()[q];
    return Eigen::VectorXd(
        (slot.features.transpose() *
         pol.base_weights().middleCols(static_cast<Eigen::Index>(slot.vocab_offset),
                                       static_cast<Eigen::Index>(slot.vocab_size)))
            .transpose());
  };
  for (int variant = 0; variant < 3; ++variant) {
    CategoricalPolicy q = p;
    if (variant == 0) q.mutable_adapter().l1.setZero();
    if (variant == 1) q.mutable_adapter().l2.setZero();
    if (variant == 2) q.mutable_adapter().scale = 0.0;
    for (std::size_t i = 0; i < q.questions().size(); ++i) {
      EXPECT_EQ(q.logits(i), base_logits(q, i)) << "variant " << variant << " question " << i;
    }
  }
}

TEST(ToyPolicy, ForwardMatchesNaiveLoopsAndNormalizes) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const CategoricalPolicy p = random_policy(rng, 3, 5, 4, 2, uniform(rng, -2.0, 2.0));
    for (std::size_t q = 0; q < 3; ++q) {
      const Eigen::VectorXd logits = p.logits(q);
      const std::vector<double> naive = naive_logits(p, q);
      for (std::size_t j = 0; j < naive.size(); ++j) EXPECT_NEAR(logits[static_cast<Eigen::Index>(j)], naive[j], 1e-12);
      const Eigen::VectorXd probs = p.forward(q);
      EXPECT_NEAR(probs.sum(), 1.0, 1e-12);
      EXPECT_GT(probs.minCoeff(), 0.0);
    }
  }
}

TEST(ToyPolicy, SoftmaxIsShiftInvariantAndStable) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd logits(6);
    for (Eigen::Index i = 0; i < 6; ++i) logits[i] = uniform(rng, -30.0, 30.0);
    const double c = uniform(rng, -500.0, 500.0);
    const Eigen::VectorXd a = softmax(logits);
    const Eigen::VectorXd b = softmax((logits.array() + c).matrix());
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
  }
  Eigen::VectorXd huge(2);
  huge << 1000.0, 0.0;
  const Eigen::VectorXd p = softmax(huge);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(ToyPolicy, MergedForwardEqualsAdapterForward) {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    // h = 3, o = 4, r = 1 as a single question, plus larger random layouts.
    const CategoricalPolicy p = trial == 0 ? random_policy(rng, 1, 4, 3, 1) : random_policy(rng, 2, 4, 3, 2);
    const CategoricalPolicy m = p.merged();
    EXPECT_TRUE(m.adapter().l1.isZero(0.0));
    for (std::size_t q = 0; q < p.questions().size(); ++q) {
      EXPECT_LE((p.forward(q) - m.forward(q)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ToyPolicy, MergeToggleRoundTrip) {
  Rng rng(9);
  CategoricalPolicy p = random_policy(rng, 2, 3, 2, 1);
  const Eigen::MatrixXd merged = p.merge_adapter();
  EXPECT_EQ(merged - p.adapter().delta(), p.base_weights());

  p.mutable_adapter().l1.setZero();
  EXPECT_EQ(p.merge_adapter(), p.base_weights());
}

TEST(ToyPolicy, AdapterContributionRankIsBounded) {
  Rng rng(13);
  for (std::size_t r = 1; r <= 3; ++r) {
    const CategoricalPolicy p = random_policy(rng, 4, 3, 5, r);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(p.adapter().delta());
    lu.setThreshold(1e-10);
    EXPECT_LE(static_cast<std::size_t>(lu.rank()), r);
  }
}

TEST(ToyPolicy, AdapterGradientMatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const CategoricalPolicy p = random_policy(rng, 2, 4, 3, 2, uniform(rng, 0.5, 2.0));
    for (std::size_t q = 0; q < 2; ++q) {
      Eigen::VectorXd upstream(4);
      for (Eigen::Index j = 0; j < 4; ++j) upstream[j] = uniform(rng, -1.0, 1.0);
      const AdapterGradient analytic = p.adapter_gradient(q, upstream);
      const AdapterGradient numeric = testing::finite_difference(
          p, [&](const CategoricalPolicy& pol) { return upstream.dot(pol.logits(q)); }, 1e-6);
      EXPECT_LE(testing::gradient_relative_error(analytic, numeric), 1e-6);
    }
  }
}

TEST(ToyPolicy, AdapterGradientVanishesWithoutSignal) {
  Rng rng(19);
  CategoricalPolicy p = random_policy(rng, 2, 3, 2, 1);
  const AdapterGradient zero_up = p.adapter_gradient(0, Eigen::VectorXd::Zero(3));
  EXPECT_TRUE(zero_up.l1.isZero(0.0));
  EXPECT_TRUE(zero_up.l2.isZero(0.0));

  p.mutable_adapter().scale = 0.0;
  const AdapterGradient zero_scale = p.adapter_gradient(1, Eigen::VectorXd::Ones(3));
  EXPECT_TRUE(zero_scale.l1.isZero(0.0));
  EXPECT_TRUE(zero_scale.l2.isZero(0.0));
}

TEST(ToyPolicy, ErrorPaths) {
  Rng rng(23);
  const CategoricalPolicy p = random_policy(rng, 2, 3, 2, 1);
  EXPECT_THROW(p.forward("nope"), InputError);
  EXPECT_THROW(p.adapter_gradient(0, Eigen::VectorXd::Zero(2)), InputError);

  // Rank above min(h, o).
  LowRankAdapter too_wide{Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(2, 2), 1.0};
  EXPECT_THROW(CategoricalPolicy(Eigen::MatrixXd::Zero(1, 2), too_wide,
                                 {QuestionSlot{"q", Eigen::VectorXd::Ones(1), 0, 2}}),
               InputError);
  // Overlapping vocabularies.
  LowRankAdapter ok{Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 3), 1.0};
  EXPECT_THROW(CategoricalPolicy(Eigen::MatrixXd::Zero(1, 3), ok,
                                 {QuestionSlot{"a", Eigen::VectorXd::Ones(1), 0, 2},
                                  QuestionSlot{"b", Eigen::VectorXd::Ones(1), 1, 2}}),
               InputError);
}

TEST(ToyPolicy, OneHotInitStartsAtBaseModel) {
  PolicyInit init;
  init.seed = 4;
  const CategoricalPolicy p = make_one_hot_policy({"a", "b"}, {4, 3}, init);
  EXPECT_EQ(p.feature_dim(), 2u);
  EXPECT_EQ(p.output_dim(), 7u);
  EXPECT_EQ(p.adapter().rank(), 2u);
  EXPECT_TRUE(p.adapter().l2.isZero(0.0));
  EXPECT_FALSE(p.adapter().l1.isZero(0.0));
  // W = 0 and L2 = 0: uniform.
  EXPECT_LE((p.forward("a").array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(ToyPolicy, CheckpointRoundTripsBitExactly) {
  Rng rng(29);
  const CategoricalPolicy p = random_policy(rng, 3, 4, 3, 2, 0.7);
  EXPECT_TRUE(policy_from_json(policy_to_json(p)) == p);

  const auto path = std::filesystem::temp_directory_path() / "grpolab_policy_roundtrip.json";
  save_policy(p, path);
  EXPECT_TRUE(load_policy(path) == p);
  std::filesystem::remove(path);

  EXPECT_THROW(policy_from_json("{\"l1\": 1}"), SchemaError);
  EXPECT_THROW(policy_from_json("{not json"), ParseError);
}

}  // namespace
}  // namespace grpolab
