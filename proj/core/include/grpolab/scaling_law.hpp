#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "grpolab/law_params.hpp"
#include "grpolab/telemetry.hpp"

namespace grpolab {

/// R(t) = alpha * r_init + beta * s + gamma / (1 + exp(-delta (t - t0))).
double eval_sigmoid(const SigmoidLawParams& params, double r_init, double s, double t);

/// t -> infinity limit of eval_sigmoid: alpha * r_init + beta * s + gamma.
double predict_plateau(const SigmoidLawParams& params, double r_init, double s);

/// R = r_max - (r_max - r_min) * n^(-exponent). Throws InputError for n < 1.
double eval_power_law(const PowerLawParams& params, double n);

/// Throws InputError unless delta > 0, gamma >= 0 and 0 <= t0 <= 1.
void validate(const SigmoidLawParams& params);
/// Throws InputError unless exponent > 0 and r_max > r_min.
void validate(const PowerLawParams& params);

struct RunUsed {
  std::string run_id;
  double r_init = 0.0;
  double model_size_b = 0.0;

  bool operator==(const RunUsed&) const = default;
};

struct FitResult {
  std::variant<SigmoidLawParams, PowerLawParams> params;
  double rmse = 0.0;
  /// residuals[k][i] = observed - fitted for point i of run k. For power-law
  /// fits these are in reward units over every point of the trajectory.
  std::vector<std::vector<double>> residuals;
  std::vector<RunUsed> runs_used;
  std::size_t iterations = 0;

  bool is_sigmoid() const noexcept { return std::holds_alternative<SigmoidLawParams>(params); }
  const SigmoidLawParams& sigmoid() const { return std::get<SigmoidLawParams>(params); }
  const PowerLawParams& power_law() const { return std::get<PowerLawParams>(params); }
};

struct SigmoidFitOptions {
  std::size_t max_iterations = 500;
  /// Relative objective improvement below which a local search stops.
  double tolerance = 1e-10;
  /// Number of grid starts refined by local search. 0 disables the grid, in
  /// which case `init` is required.
  std::size_t starts = 8;
  /// Extra start, e.g. a previous fit when refitting perturbed data.
  std::optional<SigmoidLawParams> init;
  /// Random starts drawn in addition to the grid.
  std::size_t random_starts = 0;
  std::uint64_t seed = 0;
};

/// Least-squares fit of the five global law parameters shared by all runs,
/// using each run's meta.r_init and meta.model_size_b as covariates and the
/// points' normalized steps as t.
///
/// Bounds: delta in [1e-2, 1e4], gamma in [0, 10 * reward range], t0 in
/// [0, 1]; alpha and beta are free. When the runs do not separate alpha from
/// beta (e.g. a single run) the split between them is arbitrary but
/// alpha * r_init + beta * s is still determined.
///
/// Throws InputError for no trajectories or fewer than 8 points in one,
/// FitError(kDegenerateData) when every run is constant, and
/// FitError(kNotConverged) carrying the best parameters when no local search
/// converges within max_iterations.
FitResult fit_sigmoid(std::span<const RewardTrajectory> trajectories,
                      const SigmoidFitOptions& options = {});

/// Sets r_max / r_min to the observed extremes, then fits the exponent by
/// least squares through the origin of log(gap) on log(N), where
/// gap = (r_max - R) / (r_max - r_min) and N is the raw step. Points with
/// gap <= 1e-9 or step < 1 are left out of the regression.
///
/// Throws InputError for fewer than 8 points, FitError(kDegenerateData) for a
/// constant trajectory or when fewer than 2 usable points remain.
FitResult fit_power_law(const RewardTrajectory& trajectory);

/// Phase boundaries on the normalized-step axis: where the sigmoid's slope
/// equals `fraction` of its peak slope gamma * delta / 4.
struct PhaseSegmentation {
  double initial_end = 0.0;
  double rapid_end = 0.0;
};

/// Half-width z of the high-slope window in units of 1/delta:
/// sigma'(x) = fraction / 4 at x = +-z, z = ln((1 + sqrt(1 - f)) / (1 - sqrt(1 - f))).
double phase_half_width(double fraction);

/// Boundaries t0 -+ z / delta clamped to [0, 1]. Throws InputError when
/// gamma <= 0 (no phases), delta <= 0, or fraction outside (0, 1].
PhaseSegmentation detect_phases(const SigmoidLawParams& params, double fraction = 0.1);

/// Fit file: {"model":"sigmoid"|"powerlaw", <params>, "rmse", "runs_used":[...]}.
std::string fit_to_json(const FitResult& fit);
/// rmse and runs_used are optional on input. Throws ParseError / SchemaError.
FitResult fit_from_json(std::string_view text);
void save_fit(const FitResult& fit, const std::filesystem::path& path);
FitResult load_fit(const std::filesystem::path& path);

}  // namespace grpolab
