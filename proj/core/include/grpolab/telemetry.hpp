#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace grpolab {

struct TrajectoryPoint {
  std::uint64_t step = 0;
  double normalized_step = 0.0;  // step / total_planned_steps
  double reward = 0.0;

  bool operator==(const TrajectoryPoint&) const = default;
};

/// Covariates of one training run.
struct RunMeta {
  std::string run_id;
  double model_size_b = 1.0;  // billions of parameters, > 0
  double r_init = 0.0;
  std::uint64_t total_planned_steps = 1;

  bool operator==(const RunMeta&) const = default;
};

/// Reward-vs-step observations of one run. Steps are strictly increasing and
/// every point's normalized_step is derived from meta.total_planned_steps.
class RewardTrajectory {
 public:
  RewardTrajectory() = default;
  /// Throws InputError if model_size_b <= 0 or total_planned_steps == 0.
  explicit RewardTrajectory(RunMeta meta);

  const RunMeta& meta() const noexcept { return meta_; }
  const std::vector<TrajectoryPoint>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }

  void set_r_init(double r_init) { meta_.r_init = r_init; }

  /// Appends (step, reward). Throws InputError unless step exceeds the last
  /// recorded step and reward is finite.
  void record(std::uint64_t step, double reward);

  /// Copy holding only points with normalized_step <= t_max.
  RewardTrajectory prefix(double t_max) const;

  /// Copy re-normalized against a different planned step count.
  RewardTrajectory renormalized(std::uint64_t total_planned_steps) const;

  std::vector<double> normalized_steps() const;
  std::vector<double> rewards() const;

  bool operator==(const RewardTrajectory&) const = default;

 private:
  RunMeta meta_;
  std::vector<TrajectoryPoint> points_;
};

/// Number of leading points averaged for r_init: max(5, ceil(2% of n)),
/// capped at n.
std::size_t default_r_init_window(std::size_t n_points);

/// Mean reward of the first `window` points. Throws InputError when window is
/// 0 or exceeds the trajectory length.
double estimate_r_init(const RewardTrajectory& trajectory, std::size_t window);

/// Exponential moving average with the given half-life in normalized-step
/// units. The first point is left unchanged. Throws InputError for an empty
/// trajectory or half_life <= 0.
RewardTrajectory smooth(const RewardTrajectory& trajectory, double half_life);

/// Line-delimited JSON. Line 1:
///   {"run_id":..,"model_size_b":..,"r_init":..,"total_planned_steps":..}
/// then one {"step":..,"reward":..} per point. normalized_step is derived on
/// load, never stored.
void write_trajectory(const RewardTrajectory& trajectory, std::ostream& out);
/// Throws ParseError (with the 1-based line) for malformed lines and
/// SchemaError for missing fields or an empty stream.
RewardTrajectory read_trajectory(std::istream& in);

/// Throws IoError when the file cannot be opened.
void save_trajectory(const RewardTrajectory& trajectory, const std::filesystem::path& path);
RewardTrajectory load_trajectory(const std::filesystem::path& path);

}  // namespace grpolab
