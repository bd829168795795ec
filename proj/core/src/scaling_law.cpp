#include "grpolab/scaling_law.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "grpolab/error.hpp"
#include "grpolab/random.hpp"
#include "least_squares.hpp"

namespace grpolab {

namespace {

// Logistic function without overflow for large |x|.
double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

enum : Eigen::Index { kAlpha = 0, kBeta, kGamma, kDelta, kT0, kNumParams };

constexpr double kMinDelta = 1e-2;
constexpr double kMaxDelta = 1e4;

SigmoidLawParams from_vector(const Eigen::VectorXd& v) {
  return {.alpha = v[kAlpha], .beta = v[kBeta], .gamma = v[kGamma], .delta = v[kDelta], .t0 = v[kT0]};
}

// Observations of all runs flattened into one design.
struct Pooled {
  Eigen::VectorXd t, r_init, size, reward;
  std::vector<std::size_t> run_lengths;
};

Pooled pool(std::span<const RewardTrajectory> runs) {
  std::size_t n = 0;
  for (const RewardTrajectory& run : runs) n += run.size();
  Pooled d;
  d.t.resize(static_cast<Eigen::Index>(n));
  d.r_init.resize(d.t.size());
  d.size.resize(d.t.size());
  d.reward.resize(d.t.size());
  Eigen::Index i = 0;
  for (const RewardTrajectory& run : runs) {
    for (const TrajectoryPoint& p : run.points()) {
      d.t[i] = p.normalized_step;
      d.r_init[i] = run.meta().r_init;
      d.size[i] = run.meta().model_size_b;
      d.reward[i] = p.reward;
      ++i;
    }
    d.run_lengths.push_back(run.size());
  }
  return d;
}

void sigmoid_residuals(const Pooled& d, const Eigen::VectorXd& p, Eigen::VectorXd& r) {
  r.resize(d.t.size());
  for (Eigen::Index i = 0; i < d.t.size(); ++i) {
    r[i] = p[kAlpha] * d.r_init[i] + p[kBeta] * d.size[i] + p[kGamma] * logistic(p[kDelta] * (d.t[i] - p[kT0])) -
           d.reward[i];
  }
}

// With delta and t0 fixed the law is linear in (alpha, beta, gamma). Solves
// that least-squares problem (minimum-norm where alpha and beta are
// confounded) with gamma held inside [0, gamma_max].
struct LinearSolve {
  Eigen::VectorXd params;    // all five
  Eigen::VectorXd residual;  // fitted - observed
  bool gamma_free = true;    // false when gamma sits on a bound
};

LinearSolve solve_linear(const Pooled& d, double delta, double t0, double gamma_max) {
  const Eigen::Index n = d.t.size();
  Eigen::MatrixXd a(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = d.r_init[i];
    a(i, 1) = d.size[i];
    a(i, 2) = logistic(delta * (d.t[i] - t0));
  }
  LinearSolve out;
  Eigen::Vector3d coef = a.completeOrthogonalDecomposition().solve(d.reward);
  if (!(coef[2] >= 0.0 && coef[2] <= gamma_max)) {
    const double gamma = std::clamp(std::isfinite(coef[2]) ? coef[2] : 0.0, 0.0, gamma_max);
    const Eigen::VectorXd rest = d.reward - gamma * a.col(2);
    const Eigen::Vector2d ab = a.leftCols(2).completeOrthogonalDecomposition().solve(rest);
    coef << ab[0], ab[1], gamma;
    out.gamma_free = false;
  }
  out.params.resize(kNumParams);
  out.params << coef[0], coef[1], coef[2], delta, t0;
  out.residual = a * coef - d.reward;
  return out;
}

// Variable projection: the search runs over (delta, t0) only, with the linear
// parameters solved exactly at every point. This removes the long curved
// valley in (gamma, t0) that prefixes ending before the inflection produce.
// The Jacobian is Kaufman's approximation, the derivative of the fitted curve
// with the linear coefficients held fixed, projected off the span of the
// free linear columns.
void projected_residuals(const Pooled& d, double gamma_max, const Eigen::VectorXd& q, Eigen::VectorXd& r,
                         Eigen::MatrixXd* jac) {
  const LinearSolve ls = solve_linear(d, q[0], q[1], gamma_max);
  r = ls.residual;
  if (jac == nullptr) return;
  const Eigen::Index n = d.t.size();
  const double gamma = ls.params[kGamma];
  Eigen::MatrixXd raw(n, 2);
  Eigen::MatrixXd span(n, ls.gamma_free ? 3 : 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dt = d.t[i] - q[1];
    const double sig = logistic(q[0] * dt);
    const double slope = gamma * sig * (1.0 - sig);
    raw(i, 0) = slope * dt;
    raw(i, 1) = -slope * q[0];
    span(i, 0) = d.r_init[i];
    span(i, 1) = d.size[i];
    if (ls.gamma_free) span(i, 2) = sig;
  }
  *jac = raw - span * span.completeOrthogonalDecomposition().solve(raw);
}

void write_json_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

double eval_sigmoid(const SigmoidLawParams& p, double r_init, double s, double t) {
  return p.alpha * r_init + p.beta * s + p.gamma * logistic(p.delta * (t - p.t0));
}

double predict_plateau(const SigmoidLawParams& p, double r_init, double s) {
  return p.alpha * r_init + p.beta * s + p.gamma;
}

double eval_power_law(const PowerLawParams& p, double n) {
  if (!(n >= 1.0)) throw InputError("eval_power_law: n must be >= 1");
  return p.r_max - (p.r_max - p.r_min) * std::pow(n, -p.exponent);
}

void validate(const SigmoidLawParams& p) {
  if (!(p.delta > 0.0)) throw InputError("sigmoid law: delta must be > 0");
  if (!(p.gamma >= 0.0)) throw InputError("sigmoid law: gamma must be >= 0");
  if (!(p.t0 >= 0.0 && p.t0 <= 1.0)) throw InputError("sigmoid law: t0 must lie in [0, 1]");
  if (!std::isfinite(p.alpha) || !std::isfinite(p.beta) || !std::isfinite(p.gamma) ||
      !std::isfinite(p.delta)) {
    throw InputError("sigmoid law: parameters must be finite");
  }
}

void validate(const PowerLawParams& p) {
  if (!(p.exponent > 0.0) || !std::isfinite(p.exponent)) throw InputError("power law: exponent must be > 0");
  if (!(p.r_max > p.r_min)) throw InputError("power law: r_max must exceed r_min");
}

FitResult fit_sigmoid(std::span<const RewardTrajectory> trajectories, const SigmoidFitOptions& options) {
  if (trajectories.empty()) throw InputError("fit_sigmoid: no trajectories");
  bool all_constant = true;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const RewardTrajectory& run : trajectories) {
    if (run.size() < 8) {
      throw InputError("fit_sigmoid: run '" + run.meta().run_id + "' has fewer than 8 points");
    }
    const auto rewards = run.rewards();
    const auto [mn, mx] = std::minmax_element(rewards.begin(), rewards.end());
    lo = std::min(lo, *mn);
    hi = std::max(hi, *mx);
    if (*mx - *mn > 1e-12 * std::max(1.0, std::max(std::abs(*mn), std::abs(*mx)))) all_constant = false;
  }
  if (all_constant) {
    throw FitError(FitError::Kind::kDegenerateData,
                   "fit_sigmoid: rewards are constant; steepness and inflection are unidentifiable");
  }

  const Pooled data = pool(trajectories);
  const double gamma_max = 10.0 * (hi - lo);
  detail::LeastSquaresProblem problem;
  problem.evaluate = [&data, gamma_max](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* j) {
    projected_residuals(data, gamma_max, q, r, j);
  };
  problem.lower = Eigen::Vector2d(kMinDelta, 0.0);
  problem.upper = Eigen::Vector2d(kMaxDelta, 1.0);

  // Candidate (delta, t0) starts: a grid plus optional random draws, ranked
  // by their projected objective.
  std::vector<Eigen::VectorXd> starts;
  if (options.starts > 0) {
    struct Candidate {
      double sse;
      Eigen::Vector2d q;
    };
    std::vector<Candidate> grid;
    auto add = [&](double delta, double t0) {
      const Eigen::Vector2d q(delta, t0);
      Eigen::VectorXd r;
      projected_residuals(data, gamma_max, q, r, nullptr);
      grid.push_back({r.squaredNorm(), q});
    };
    constexpr int kDeltaSteps = 12;
    for (int i = 0; i < kDeltaSteps; ++i) {
      const double delta = 5.0 * std::pow(40.0, static_cast<double>(i) / (kDeltaSteps - 1));  // 5..200
      for (int k = 1; k <= 19; ++k) add(delta, 0.05 * k);
    }
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.random_starts; ++i) {
      const double delta = std::exp(uniform(rng, std::log(1.0), std::log(500.0)));
      add(delta, uniform01(rng));
    }
    std::stable_sort(grid.begin(), grid.end(),
                     [](const Candidate& a, const Candidate& b) { return a.sse < b.sse; });
    for (std::size_t i = 0; i < std::min(options.starts, grid.size()); ++i) starts.push_back(grid[i].q);
  }
  if (options.init) starts.push_back(Eigen::Vector2d(options.init->delta, options.init->t0));
  if (starts.empty()) throw InputError("fit_sigmoid: no starting point (starts = 0 and no init)");

  detail::LeastSquaresOptions lm;
  lm.max_iterations = options.max_iterations;
  lm.relative_tolerance = options.tolerance;

  std::optional<detail::LeastSquaresResult> best_converged;
  std::optional<detail::LeastSquaresResult> best_any;
  for (const Eigen::VectorXd& start : starts) {
    detail::LeastSquaresResult res = detail::levenberg_marquardt(problem, start, lm);
    if (!std::isfinite(res.sse)) continue;
    if (!best_any || res.sse < best_any->sse) best_any = res;
    if (res.converged && (!best_converged || res.sse < best_converged->sse)) best_converged = res;
  }
  auto full_params = [&](const Eigen::VectorXd& q) {
    return solve_linear(data, q[0], q[1], gamma_max).params;
  };
  if (!best_converged) {
    FitError::BestSoFar best;
    if (best_any) best = from_vector(full_params(best_any->params));
    throw FitError(FitError::Kind::kNotConverged,
                   "fit_sigmoid: no local search converged within " +
                       std::to_string(options.max_iterations) + " iterations",
                   best);
  }

  FitResult result;
  const Eigen::VectorXd params = full_params(best_converged->params);
  result.params = from_vector(params);
  result.iterations = best_converged->iterations;
  Eigen::VectorXd r;
  sigmoid_residuals(data, params, r);
  std::size_t offset = 0;
  double sq = 0.0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    std::vector<double> run_res(data.run_lengths[k]);
    for (std::size_t i = 0; i < run_res.size(); ++i) {
      run_res[i] = -r[static_cast<Eigen::Index>(offset + i)];
      sq += run_res[i] * run_res[i];
    }
    offset += run_res.size();
    result.residuals.push_back(std::move(run_res));
    const RunMeta& m = trajectories[k].meta();
    result.runs_used.push_back({m.run_id, m.r_init, m.model_size_b});
  }
  result.rmse = std::sqrt(sq / static_cast<double>(offset));
  return result;
}

FitResult fit_power_law(const RewardTrajectory& trajectory) {
  if (trajectory.size() < 8) throw InputError("fit_power_law: need at least 8 points");
  const auto rewards = trajectory.rewards();
  const auto [mn, mx] = std::minmax_element(rewards.begin(), rewards.end());
  if (!(*mx > *mn)) throw FitError(FitError::Kind::kDegenerateData, "fit_power_law: constant trajectory");

  PowerLawParams params{.exponent = 0.0, .r_max = *mx, .r_min = *mn};
  const double span = params.r_max - params.r_min;
  double sxy = 0.0;
  double sxx = 0.0;
  std::size_t used = 0;
  for (const TrajectoryPoint& p : trajectory.points()) {
    if (p.step < 1) continue;
    const double gap = (params.r_max - p.reward) / span;
    if (gap <= 1e-9) continue;
    const double x = std::log(static_cast<double>(p.step));
    // log(gap) = -exponent * log(N), fitted through the origin.
    sxy += x * std::log(gap);
    sxx += x * x;
    ++used;
  }
  if (used < 2 || sxx <= 0.0) {
    throw FitError(FitError::Kind::kDegenerateData, "fit_power_law: too few points with a positive gap");
  }
  params.exponent = -sxy / sxx;
  if (!(params.exponent > 0.0)) {
    throw FitError(FitError::Kind::kDegenerateData,
                   "fit_power_law: rewards do not approach their maximum (exponent <= 0)", params);
  }

  FitResult result;
  result.params = params;
  std::vector<double> res;
  double sq = 0.0;
  for (const TrajectoryPoint& p : trajectory.points()) {
    if (p.step < 1) continue;
    res.push_back(p.reward - eval_power_law(params, static_cast<double>(p.step)));
    sq += res.back() * res.back();
  }
  result.rmse = std::sqrt(sq / static_cast<double>(res.size()));
  result.residuals.push_back(std::move(res));
  const RunMeta& m = trajectory.meta();
  result.runs_used.push_back({m.run_id, m.r_init, m.model_size_b});
  return result;
}

double phase_half_width(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("phase threshold must lie in (0, 1]");
  // sigma (1 - sigma) = f / 4  =>  sigma = (1 +- sqrt(1 - f)) / 2.
  const double root = std::sqrt(1.0 - fraction);
  return std::log((1.0 + root) / (1.0 - root));
}

PhaseSegmentation detect_phases(const SigmoidLawParams& params, double fraction) {
  if (!(params.gamma > 0.0)) throw InputError("detect_phases: gamma = 0, the curve has no phases");
  if (!(params.delta > 0.0)) throw InputError("detect_phases: delta must be > 0");
  const double half = phase_half_width(fraction) / params.delta;
  return {std::clamp(params.t0 - half, 0.0, 1.0), std::clamp(params.t0 + half, 0.0, 1.0)};
}

std::string fit_to_json(const FitResult& fit) {
  using nlohmann::ordered_json;
  ordered_json doc;
  if (fit.is_sigmoid()) {
    const SigmoidLawParams& p = fit.sigmoid();
    doc["model"] = "sigmoid";
    doc["alpha"] = p.alpha;
    doc["beta"] = p.beta;
    doc["gamma"] = p.gamma;
    doc["delta"] = p.delta;
    doc["t0"] = p.t0;
  } else {
    const PowerLawParams& p = fit.power_law();
    doc["model"] = "powerlaw";
    doc["exponent"] = p.exponent;
    doc["r_max"] = p.r_max;
    doc["r_min"] = p.r_min;
  }
  doc["rmse"] = fit.rmse;
  ordered_json runs = ordered_json::array();
  for (const RunUsed& r : fit.runs_used) {
    runs.push_back({{"run_id", r.run_id}, {"r_init", r.r_init}, {"model_size_b", r.model_size_b}});
  }
  doc["runs_used"] = std::move(runs);
  return doc.dump(2) + "\n";
}

FitResult fit_from_json(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("fit file: ") + e.what(), 0);
  }
  if (!doc.is_object() || !doc.contains("model")) throw SchemaError("fit file: missing 'model'");
  FitResult fit;
  try {
    const auto model = doc["model"].get<std::string>();
    auto need = [&](const char* key) {
      if (!doc.contains(key)) throw SchemaError(std::string("fit file: missing '") + key + "'");
      return doc[key].get<double>();
    };
    if (model == "sigmoid") {
      SigmoidLawParams p{.alpha = need("alpha"), .beta = need("beta"), .gamma = need("gamma"),
                         .delta = need("delta"), .t0 = need("t0")};
      validate(p);
      fit.params = p;
    } else if (model == "powerlaw") {
      PowerLawParams p{.exponent = need("exponent"), .r_max = need("r_max"), .r_min = need("r_min")};
      validate(p);
      fit.params = p;
    } else {
      throw SchemaError("fit file: unknown model '" + model + "'");
    }
    if (doc.contains("rmse") && !doc["rmse"].is_null()) fit.rmse = doc["rmse"].get<double>();
    if (doc.contains("runs_used")) {
      for (const json& r : doc["runs_used"]) {
        fit.runs_used.push_back({r.at("run_id").get<std::string>(), r.at("r_init").get<double>(),
                                 r.at("model_size_b").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("fit file: ") + e.what());
  } catch (const InputError& e) {
    throw SchemaError(std::string("fit file: ") + e.what());
  }
  return fit;
}

void save_fit(const FitResult& fit, const std::filesystem::path& path) {
  write_json_file(path, fit_to_json(fit));
}

FitResult load_fit(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open fit file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return fit_from_json(buf.str());
}

}  // namespace grpolab
