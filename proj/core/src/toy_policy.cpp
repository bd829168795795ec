#include "grpolab/toy_policy.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "grpolab/error.hpp"
#include "grpolab/random.hpp"

namespace grpolab {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* name) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw SchemaError(std::string("checkpoint: matrix '") + name + "' needs rows, cols, data");
  }
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Eigen::Index>(data.size()) != rows) {
    throw SchemaError(std::string("checkpoint: matrix '") + name + "' has inconsistent shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = data[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw SchemaError(std::string("checkpoint: matrix '") + name + "' row has wrong length");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

}  // namespace

AdapterGradient& AdapterGradient::operator+=(const AdapterGradient& other) {
  l1 += other.l1;
  l2 += other.l2;
  return *this;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double peak = logits.maxCoeff();
  // Scalar exp: Eigen's packet exp clamps large negative inputs instead of
  // underflowing to zero.
  Eigen::VectorXd p = (logits.array() - peak).unaryExpr([](double x) { return std::exp(x); }).matrix();
  return p / p.sum();
}

CategoricalPolicy::CategoricalPolicy(Eigen::MatrixXd base_weights, LowRankAdapter adapter,
                                     std::vector<QuestionSlot> questions)
    : base_(std::move(base_weights)), adapter_(std::move(adapter)), questions_(std::move(questions)) {
  const Eigen::Index h = base_.rows();
  const Eigen::Index o = base_.cols();
  if (h == 0 || o == 0) throw InputError("policy: base weights must be non-empty");
  if (adapter_.l1.rows() != h || adapter_.l2.cols() != o ||
      adapter_.l1.cols() != adapter_.l2.rows()) {
    throw InputError("policy: adapter shapes do not match base weights");
  }
  const auto r = adapter_.l1.cols();
  if (r < 1 || r > std::min(h, o)) throw InputError("policy: adapter rank must be in [1, min(h, o)]");
  if (questions_.empty()) throw InputError("policy: no questions");

  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t q = 0; q < questions_.size(); ++q) {
    const QuestionSlot& slot = questions_[q];
    if (slot.features.size() != h) {
      throw InputError("policy: feature vector of '" + slot.id + "' has wrong length");
    }
    if (slot.vocab_size < 2) throw InputError("policy: question '" + slot.id + "' needs >= 2 outputs");
    if (slot.vocab_offset + slot.vocab_size > static_cast<std::size_t>(o)) {
      throw InputError("policy: vocabulary of '" + slot.id + "' exceeds output dimension");
    }
    if (!index_.emplace(slot.id, q).second) throw InputError("policy: duplicate question '" + slot.id + "'");
    spans.emplace_back(slot.vocab_offset, slot.vocab_offset + slot.vocab_size);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) throw InputError("policy: question vocabularies overlap");
  }
}

std::size_t CategoricalPolicy::question_index(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw InputError("unknown question '" + std::string(id) + "'");
  return it->second;
}

bool CategoricalPolicy::has_question(std::string_view id) const {
  return index_.contains(std::string(id));
}

Eigen::VectorXd CategoricalPolicy::logits(std::size_t question) const {
  if (question >= questions_.size()) throw InputError("question index out of range");
  const QuestionSlot& slot = questions_[question];
  const auto off = static_cast<Eigen::Index>(slot.vocab_offset);
  const auto n = static_cast<Eigen::Index>(slot.vocab_size);
  const Eigen::RowVectorXd x = slot.features.transpose();
  Eigen::VectorXd out = (x * base_.middleCols(off, n)).transpose();
  // s * (x L1) L2, associating left-to-right keeps this O(h r + r o).
  const Eigen::RowVectorXd xl1 = x * adapter_.l1;
  out += adapter_.scale * (xl1 * adapter_.l2.middleCols(off, n)).transpose();
  return out;
}

Eigen::VectorXd CategoricalPolicy::forward(std::size_t question) const {
  return softmax(logits(question));
}

Eigen::MatrixXd CategoricalPolicy::merge_adapter() const { return base_ + adapter_.delta(); }

CategoricalPolicy CategoricalPolicy::merged() const {
  LowRankAdapter zero{Eigen::MatrixXd::Zero(adapter_.l1.rows(), adapter_.l1.cols()),
                      Eigen::MatrixXd::Zero(adapter_.l2.rows(), adapter_.l2.cols()), adapter_.scale};
  return CategoricalPolicy(merge_adapter(), std::move(zero), questions_);
}

AdapterGradient CategoricalPolicy::adapter_gradient(std::size_t question,
                                                    const Eigen::VectorXd& upstream) const {
  if (question >= questions_.size()) throw InputError("question index out of range");
  const QuestionSlot& slot = questions_[question];
  if (static_cast<std::size_t>(upstream.size()) != slot.vocab_size) {
    throw InputError("adapter_gradient: upstream gradient length does not match vocabulary");
  }
  const auto off = static_cast<Eigen::Index>(slot.vocab_offset);
  const auto n = static_cast<Eigen::Index>(slot.vocab_size);
  const double s = adapter_.scale;

  AdapterGradient g{Eigen::MatrixXd::Zero(adapter_.l1.rows(), adapter_.l1.cols()),
                    Eigen::MatrixXd::Zero(adapter_.l2.rows(), adapter_.l2.cols())};
  // logits_j = ... + s * sum_{a,k} x_a L1[a,k] L2[k,j]
  //   d/dL1[a,k] = s * x_a * sum_j L2[k,j] g_j
  //   d/dL2[k,j] = s * (x L1)_k * g_j
  const Eigen::VectorXd l2g = adapter_.l2.middleCols(off, n) * upstream;
  g.l1 = s * slot.features * l2g.transpose();
  const Eigen::VectorXd xl1 = adapter_.l1.transpose() * slot.features;
  g.l2.middleCols(off, n) = s * xl1 * upstream.transpose();
  return g;
}

void CategoricalPolicy::apply_update(const AdapterGradient& g, double step) {
  if (g.l1.rows() != adapter_.l1.rows() || g.l1.cols() != adapter_.l1.cols() ||
      g.l2.rows() != adapter_.l2.rows() || g.l2.cols() != adapter_.l2.cols()) {
    throw InputError("apply_update: gradient shape mismatch");
  }
  adapter_.l1 += step * g.l1;
  adapter_.l2 += step * g.l2;
}

bool CategoricalPolicy::operator==(const CategoricalPolicy& other) const {
  if (base_.rows() != other.base_.rows() || base_.cols() != other.base_.cols()) return false;
  if (adapter_.l1.cols() != other.adapter_.l1.cols()) return false;
  if (base_ != other.base_ || adapter_.l1 != other.adapter_.l1 || adapter_.l2 != other.adapter_.l2 ||
      adapter_.scale != other.adapter_.scale || questions_.size() != other.questions_.size()) {
    return false;
  }
  for (std::size_t q = 0; q < questions_.size(); ++q) {
    const QuestionSlot& a = questions_[q];
    const QuestionSlot& b = other.questions_[q];
    if (a.id != b.id || a.vocab_offset != b.vocab_offset || a.vocab_size != b.vocab_size ||
        a.features != b.features) {
      return false;
    }
  }
  return true;
}

CategoricalPolicy make_one_hot_policy(const std::vector<std::string>& question_ids,
                                      const std::vector<std::size_t>& vocab_sizes,
                                      const PolicyInit& init) {
  if (question_ids.size() != vocab_sizes.size()) {
    throw InputError("make_one_hot_policy: ids and vocab sizes differ in length");
  }
  const std::size_t h = question_ids.size();
  std::size_t o = 0;
  std::vector<QuestionSlot> slots;
  slots.reserve(h);
  for (std::size_t q = 0; q < h; ++q) {
    QuestionSlot slot;
    slot.id = question_ids[q];
    slot.features = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(q));
    slot.vocab_offset = o;
    slot.vocab_size = vocab_sizes[q];
    o += vocab_sizes[q];
    slots.push_back(std::move(slot));
  }
  const auto hi = static_cast<Eigen::Index>(h);
  const auto oi = static_cast<Eigen::Index>(o);
  const auto r = static_cast<Eigen::Index>(init.rank);

  Rng rng(init.seed);
  Eigen::MatrixXd base = Eigen::MatrixXd::Zero(hi, oi);
  if (init.base_init_range > 0.0) {
    for (Eigen::Index i = 0; i < hi; ++i)
      for (Eigen::Index j = 0; j < oi; ++j) base(i, j) = uniform(rng, -init.base_init_range, init.base_init_range);
  }
  LowRankAdapter adapter{Eigen::MatrixXd::Zero(hi, r), Eigen::MatrixXd::Zero(r, oi), init.scale};
  for (Eigen::Index i = 0; i < hi; ++i)
    for (Eigen::Index k = 0; k < r; ++k) adapter.l1(i, k) = uniform(rng, -init.l1_init_range, init.l1_init_range);

  return CategoricalPolicy(std::move(base), std::move(adapter), std::move(slots));
}

std::string policy_to_json(const CategoricalPolicy& policy) {
  json questions = json::array();
  for (const QuestionSlot& slot : policy.questions()) {
    json features = json::array();
    for (Eigen::Index i = 0; i < slot.features.size(); ++i) features.push_back(slot.features[i]);
    questions.push_back({{"id", slot.id},
                         {"features", std::move(features)},
                         {"vocab_offset", slot.vocab_offset},
                         {"vocab_size", slot.vocab_size}});
  }
  const LowRankAdapter& a = policy.adapter();
  json doc = {{"base_weights", matrix_to_json(policy.base_weights())},
              {"l1", matrix_to_json(a.l1)},
              {"l2", matrix_to_json(a.l2)},
              {"scale", a.scale},
              {"rank", a.rank()},
              {"questions", std::move(questions)}};
  return doc.dump(2) + "\n";
}

CategoricalPolicy policy_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
  for (const char* key : {"base_weights", "l1", "l2", "scale", "rank", "questions"}) {
    if (!doc.contains(key)) throw SchemaError(std::string("checkpoint: missing field '") + key + "'");
  }
  try {
    LowRankAdapter adapter{matrix_from_json(doc["l1"], "l1"), matrix_from_json(doc["l2"], "l2"),
                           doc["scale"].get<double>()};
    if (doc["rank"].get<std::size_t>() != adapter.rank()) {
      throw SchemaError("checkpoint: rank does not match l1");
    }
    std::vector<QuestionSlot> slots;
    for (const json& q : doc["questions"]) {
      QuestionSlot slot;
      slot.id = q.at("id").get<std::string>();
      const auto& f = q.at("features");
      slot.features.resize(static_cast<Eigen::Index>(f.size()));
      for (std::size_t i = 0; i < f.size(); ++i) slot.features[static_cast<Eigen::Index>(i)] = f[i].get<double>();
      slot.vocab_offset = q.at("vocab_offset").get<std::size_t>();
      slot.vocab_size = q.at("vocab_size").get<std::size_t>();
      slots.push_back(std::move(slot));
    }
    return CategoricalPolicy(matrix_from_json(doc["base_weights"], "base_weights"), std::move(adapter),
                             std::move(slots));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

void save_policy(const CategoricalPolicy& policy, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << policy_to_json(policy);
}

CategoricalPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return policy_from_json(buf.str());
}

}  // namespace grpolab
