#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grpolab {

/// Trainable factorized update s * L1 * L2 applied on top of a frozen
/// projection. L1 is h x r, L2 is r x o.
struct LowRankAdapter {
  Eigen::MatrixXd l1;
  Eigen::MatrixXd l2;
  double scale = 1.0;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(l1.cols()); }

  /// The h x o matrix s * L1 * L2.
  Eigen::MatrixXd delta() const { return scale * (l1 * l2); }
};

/// Gradients with respect to the adapter factors, shaped like L1 and L2.
struct AdapterGradient {
  Eigen::MatrixXd l1;
  Eigen::MatrixXd l2;

  AdapterGradient& operator+=(const AdapterGradient& other);
  double squared_norm() const { return l1.squaredNorm() + l2.squaredNorm(); }
};

/// One question's feature row and the slice of output columns that form its
/// vocabulary.
struct QuestionSlot {
  std::string id;
  Eigen::VectorXd features;  // length h
  std::size_t vocab_offset = 0;
  std::size_t vocab_size = 0;
};

/// Exact categorical policy. For question q with feature row x,
///   logits = x W + s x L1 L2   (restricted to q's output columns)
///   pi(. | q) = softmax(logits).
/// W is frozen; only the adapter is trained.
class CategoricalPolicy {
 public:
  CategoricalPolicy() = default;

  /// Throws InputError on inconsistent shapes, duplicate ids, overlapping or
  /// out-of-range vocab slices, vocab smaller than 2, or rank > min(h, o).
  CategoricalPolicy(Eigen::MatrixXd base_weights, LowRankAdapter adapter,
                    std::vector<QuestionSlot> questions);

  std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(base_.rows()); }
  std::size_t output_dim() const noexcept { return static_cast<std::size_t>(base_.cols()); }

  const Eigen::MatrixXd& base_weights() const noexcept { return base_; }
  const LowRankAdapter& adapter() const noexcept { return adapter_; }
  const std::vector<QuestionSlot>& questions() const noexcept { return questions_; }

  /// Index into questions(); throws InputError for unknown ids.
  std::size_t question_index(std::string_view id) const;
  bool has_question(std::string_view id) const;

  /// Logits over the question's vocabulary.
  Eigen::VectorXd logits(std::size_t question) const;
  Eigen::VectorXd logits(std::string_view id) const { return logits(question_index(id)); }

  /// Probabilities over the question's vocabulary.
  Eigen::VectorXd forward(std::size_t question) const;
  Eigen::VectorXd forward(std::string_view id) const { return forward(question_index(id)); }

  /// W + s L1 L2.
  Eigen::MatrixXd merge_adapter() const;

  /// Policy with the adapter folded into the base weights and zeroed.
  CategoricalPolicy merged() const;

  /// Gradient of sum_j upstream[j] * logits[j] with respect to L1 and L2.
  /// `upstream` covers the question's vocabulary; throws InputError on a
  /// length mismatch.
  AdapterGradient adapter_gradient(std::size_t question,
                                   const Eigen::VectorXd& upstream) const;

  /// In-place update L1 += step * g.l1, L2 += step * g.l2. Base weights are
  /// never touched.
  void apply_update(const AdapterGradient& g, double step);

  LowRankAdapter& mutable_adapter() noexcept { return adapter_; }

  bool operator==(const CategoricalPolicy& other) const;

 private:
  Eigen::MatrixXd base_;
  LowRankAdapter adapter_;
  std::vector<QuestionSlot> questions_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// How to build a fresh policy for a set of questions.
struct PolicyInit {
  std::size_t rank = 2;
  double scale = 1.0;
  /// L1 entries are drawn from U(-l1_init_range, l1_init_range); L2 starts at
  /// zero so the initial policy equals the base model.
  double l1_init_range = 0.5;
  /// Base weights drawn from U(-base_init_range, base_init_range); 0 gives a
  /// uniform initial policy.
  double base_init_range = 0.0;
  std::uint64_t seed = 0;
};

/// Policy with one-hot question features (h = number of questions) and the
/// questions' vocabularies laid out contiguously in question order.
CategoricalPolicy make_one_hot_policy(const std::vector<std::string>& question_ids,
                                      const std::vector<std::size_t>& vocab_sizes,
                                      const PolicyInit& init);

/// Checkpoint I/O. Doubles round-trip bit-exactly for finite values.
std::string policy_to_json(const CategoricalPolicy& policy);
CategoricalPolicy policy_from_json(std::string_view text);
void save_policy(const CategoricalPolicy& policy, const std::filesystem::path& path);
CategoricalPolicy load_policy(const std::filesystem::path& path);

}  // namespace grpolab
