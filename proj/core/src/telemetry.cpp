#include "grpolab/telemetry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>

#include "grpolab/error.hpp"

namespace grpolab {

namespace {

using nlohmann::json;

double normalize(std::uint64_t step, std::uint64_t total) {
  return static_cast<double>(step) / static_cast<double>(total);
}

void check_meta(const RunMeta& meta) {
  if (!(meta.model_size_b > 0.0) || !std::isfinite(meta.model_size_b)) {
    throw InputError("model_size_b must be finite and > 0");
  }
  if (meta.total_planned_steps == 0) throw InputError("total_planned_steps must be > 0");
  if (!std::isfinite(meta.r_init)) throw InputError("r_init must be finite");
}

}  // namespace

RewardTrajectory::RewardTrajectory(RunMeta meta) : meta_(std::move(meta)) { check_meta(meta_); }

void RewardTrajectory::record(std::uint64_t step, double reward) {
  if (!points_.empty() && step <= points_.back().step) {
    throw InputError("record: step " + std::to_string(step) + " does not follow step " +
                     std::to_string(points_.back().step));
  }
  if (!std::isfinite(reward)) throw InputError("record: reward must be finite");
  points_.push_back({step, normalize(step, meta_.total_planned_steps), reward});
}

RewardTrajectory RewardTrajectory::prefix(double t_max) const {
  RewardTrajectory out(meta_);
  for (const TrajectoryPoint& p : points_) {
    if (p.normalized_step > t_max) break;
    out.points_.push_back(p);
  }
  return out;
}

RewardTrajectory RewardTrajectory::renormalized(std::uint64_t total_planned_steps) const {
  RunMeta meta = meta_;
  meta.total_planned_steps = total_planned_steps;
  RewardTrajectory out(std::move(meta));
  for (const TrajectoryPoint& p : points_) out.record(p.step, p.reward);
  return out;
}

std::vector<double> RewardTrajectory::normalized_steps() const {
  std::vector<double> t;
  t.reserve(points_.size());
  for (const TrajectoryPoint& p : points_) t.push_back(p.normalized_step);
  return t;
}

std::vector<double> RewardTrajectory::rewards() const {
  std::vector<double> r;
  r.reserve(points_.size());
  for (const TrajectoryPoint& p : points_) r.push_back(p.reward);
  return r;
}

std::size_t default_r_init_window(std::size_t n_points) {
  const auto two_percent = static_cast<std::size_t>(std::ceil(0.02 * static_cast<double>(n_points)));
  return std::min(n_points, std::max<std::size_t>(5, two_percent));
}

double estimate_r_init(const RewardTrajectory& trajectory, std::size_t window) {
  if (window == 0) throw InputError("estimate_r_init: window must be positive");
  if (window > trajectory.size()) {
    throw InputError("estimate_r_init: window " + std::to_string(window) + " exceeds " +
                     std::to_string(trajectory.size()) + " points");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < window; ++i) sum += trajectory.points()[i].reward;
  return sum / static_cast<double>(window);
}

RewardTrajectory smooth(const RewardTrajectory& trajectory, double half_life) {
  if (trajectory.empty()) throw InputError("smooth: empty trajectory");
  if (!(half_life > 0.0)) throw InputError("smooth: half_life must be > 0");
  RewardTrajectory out(trajectory.meta());
  const auto& pts = trajectory.points();
  double level = pts.front().reward;
  out.record(pts.front().step, level);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dt = pts[i].normalized_step - pts[i - 1].normalized_step;
    // Weight on the previous level halves every half_life of elapsed t.
    const double keep = std::exp2(-dt / half_life);
    level = keep * level + (1.0 - keep) * pts[i].reward;
    out.record(pts[i].step, level);
  }
  return out;
}

void write_trajectory(const RewardTrajectory& trajectory, std::ostream& out) {
  const RunMeta& m = trajectory.meta();
  json meta = {{"run_id", m.run_id},
               {"model_size_b", m.model_size_b},
               {"r_init", m.r_init},
               {"total_planned_steps", m.total_planned_steps}};
  out << meta.dump() << '\n';
  for (const TrajectoryPoint& p : trajectory.points()) {
    out << json{{"step", p.step}, {"reward", p.reward}}.dump() << '\n';
  }
}

RewardTrajectory read_trajectory(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<RewardTrajectory> trajectory;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", line_no);

    if (!trajectory) {
      for (const char* key : {"run_id", "model_size_b", "r_init", "total_planned_steps"}) {
        if (!j.contains(key)) {
          throw SchemaError("line " + std::to_string(line_no) + ": meta record missing '" + key + "'");
        }
      }
      RunMeta meta;
      try {
        meta.run_id = j["run_id"].get<std::string>();
        meta.model_size_b = j["model_size_b"].get<double>();
        meta.r_init = j["r_init"].get<double>();
        meta.total_planned_steps = j["total_planned_steps"].get<std::uint64_t>();
      } catch (const json::exception& e) {
        throw ParseError(std::string("bad meta field: ") + e.what(), line_no);
      }
      try {
        trajectory.emplace(std::move(meta));
      } catch (const InputError& e) {
        throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
      }
      continue;
    }

    if (!j.contains("step") || !j.contains("reward")) {
      throw SchemaError("line " + std::to_string(line_no) + ": point record needs 'step' and 'reward'");
    }
    if (!j["step"].is_number_unsigned() && !(j["step"].is_number_integer() && j["step"].get<long long>() >= 0)) {
      throw ParseError("'step' must be a non-negative integer", line_no);
    }
    if (!j["reward"].is_number()) throw ParseError("'reward' must be a number", line_no);
    try {
      trajectory->record(j["step"].get<std::uint64_t>(), j["reward"].get<double>());
    } catch (const InputError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!trajectory) throw SchemaError("trajectory has no meta record");
  return std::move(*trajectory);
}

void save_trajectory(const RewardTrajectory& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_trajectory(trajectory, out);
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

RewardTrajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_trajectory(in);
}

}  // namespace grpolab
