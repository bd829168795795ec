#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "grpolab/grpolab.hpp"

namespace grpolab::cli {

namespace {

// Bad flag values detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("GRPO_LAB_SEED")) {
    std::uint64_t seed = 0;
    const std::string_view text(env);
    const auto res = std::from_chars(text.data(), text.data() + text.size(), seed);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
      throw UsageError("GRPO_LAB_SEED is not an unsigned integer: '" + std::string(text) + "'");
    }
    return seed;
  }
  return 0;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

void print_best_so_far(const FitError& e, std::ostream& err) {
  if (const auto* p = std::get_if<SigmoidLawParams>(&e.best_so_far())) {
    err << "best-so-far: alpha=" << format_double(p->alpha) << " beta=" << format_double(p->beta)
        << " gamma=" << format_double(p->gamma) << " delta=" << format_double(p->delta)
        << " t0=" << format_double(p->t0) << '\n';
  } else if (const auto* q = std::get_if<PowerLawParams>(&e.best_so_far())) {
    err << "best-so-far: exponent=" << format_double(q->exponent) << " r_max=" << format_double(q->r_max)
        << " r_min=" << format_double(q->r_min) << '\n';
  } else {
    err << "best-so-far: none\n";
  }
}

FitResult load_sigmoid_fit(const std::string& path) {
  FitResult fit = load_fit(path);
  if (!fit.is_sigmoid()) throw SchemaError("fit file '" + path + "' does not hold a sigmoid law");
  return fit;
}

struct TrainFlags {
  std::string task;
  std::string out;
  std::string checkpoint;
  std::string run_id;
  std::size_t group_size = 8;
  double epsilon = 0.2;
  double beta = 0.04;
  std::size_t steps = 500;
  double learning_rate = 0.1;
  std::size_t rank = 2;
  double scale = 1.0;
  double model_size = 1.0;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
  GrpoConfig config;
  config.group_size = f.group_size;
  config.clip_epsilon = f.epsilon;
  config.kl_beta = f.beta;
  config.steps = f.steps;
  config.learning_rate = f.learning_rate;
  config.seed = resolve_seed(f.seed);
  try {
    config.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  if (!(f.model_size > 0.0)) throw UsageError("--model-size must be > 0");

  const ToyTask task = load_task(f.task);
  PolicyInit init;
  init.rank = f.rank;
  init.scale = f.scale;
  init.seed = substream_seed(config.seed, 0xA11CE);
  CategoricalPolicy policy = [&] {
    try {
      return make_policy(task, init);
    } catch (const InputError& e) {
      throw UsageError(e.what());
    }
  }();

  RunMeta meta;
  meta.run_id = f.run_id.empty() ? "train-seed" + std::to_string(config.seed) : f.run_id;
  meta.model_size_b = f.model_size;
  meta.total_planned_steps = config.steps;
  RewardTrajectory trajectory(meta);

  const auto start = std::chrono::steady_clock::now();
  const TrainReport report =
      train(task, std::move(policy), config, [&](std::size_t step, double reward) { trajectory.record(step, reward); });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  trajectory.set_r_init(estimate_r_init(trajectory, default_r_init_window(trajectory.size())));
  save_trajectory(trajectory, f.out);
  if (!f.checkpoint.empty()) save_policy(report.final_policy, f.checkpoint);

  out << "steps " << config.steps << '\n'
      << "seed " << config.seed << '\n'
      << "final_mean_reward " << format_double(report.mean_rewards.back()) << '\n'
      << "final_expected_reward " << format_double(expected_reward(task, report.final_policy)) << '\n'
      << "max_mean_reward " << format_double(task.max_mean_reward()) << '\n'
      << "r_init " << format_double(trajectory.meta().r_init) << '\n'
      << "wall_time_s " << wall << '\n';
  return kOk;
}

struct FitFlags {
  std::vector<std::string> trajectories;
  std::string model = "sigmoid";
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_fit(const FitFlags& f, std::ostream& out) {
  std::vector<RewardTrajectory> runs;
  for (const std::string& path : f.trajectories) runs.push_back(load_trajectory(path));

  std::string text;
  if (f.model == "sigmoid") {
    SigmoidFitOptions options;
    options.seed = resolve_seed(f.seed);
    text = fit_to_json(fit_sigmoid(runs, options));
  } else {
    // One power law per trajectory; several are written as a JSON array.
    std::vector<std::string> docs;
    for (const RewardTrajectory& run : runs) docs.push_back(fit_to_json(fit_power_law(run)));
    if (docs.size() == 1) {
      text = docs.front();
    } else {
      text = "[\n";
      for (std::size_t i = 0; i < docs.size(); ++i) {
        std::string d = docs[i];
        while (!d.empty() && d.back() == '\n') d.pop_back();
        text += d + (i + 1 < docs.size() ? ",\n" : "\n");
      }
      text += "]\n";
    }
  }
  if (f.out.empty()) {
    out << text;
  } else {
    write_text(f.out, text);
    out << "wrote " << f.out << '\n';
  }
  return kOk;
}

struct PredictFlags {
  std::string fit;
  double r_init = 0.0;
  double size = 1.0;
  double t = 0.0;
};

int cmd_predict(const PredictFlags& f, std::ostream& out) {
  const SigmoidLawParams p = load_sigmoid_fit(f.fit).sigmoid();
  out << "{\"t\": " << format_double(f.t) << ", \"reward\": " << format_double(eval_sigmoid(p, f.r_init, f.size, f.t))
      << ", \"plateau\": " << format_double(predict_plateau(p, f.r_init, f.size)) << "}\n";
  return kOk;
}

struct PhasesFlags {
  std::string fit;
  double threshold = 0.1;
};

int cmd_phases(const PhasesFlags& f, std::ostream& out) {
  const SigmoidLawParams p = load_sigmoid_fit(f.fit).sigmoid();
  PhaseSegmentation seg;
  try {
    seg = detect_phases(p, f.threshold);
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  out << "{\"initial_end\": " << format_double(seg.initial_end) << ", \"rapid_end\": "
      << format_double(seg.rapid_end) << ", \"t0\": " << format_double(p.t0) << "}\n";
  return kOk;
}

struct AdviseFlags {
  std::string trajectory;
  std::optional<std::uint64_t> budget_steps;
  double min_gain = 0.01;
  double prefix_min = 0.15;
  std::size_t resamples = 200;
  std::optional<std::uint64_t> seed;
};

int cmd_advise(const AdviseFlags& f, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(f.seed);
  const RewardTrajectory run = load_trajectory(f.trajectory);
  BudgetSpec budget;
  budget.total_steps = f.budget_steps.value_or(run.meta().total_planned_steps);
  budget.min_relative_gain = f.min_gain;
  budget.prefix_fraction_min = f.prefix_min;
  try {
    budget.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  ForecastOptions options;
  options.bootstrap_resamples = f.resamples;
  options.seed = seed;
  options.fit.seed = seed;
  out << decision_to_json(forecast(run, budget, options));
  return kOk;
}

struct ExportFlags {
  std::string trajectory;
  std::string fit;
  std::string out;
};

int cmd_export_plot(const ExportFlags& f, std::ostream& out) {
  const RewardTrajectory run = load_trajectory(f.trajectory);
  const FitResult fit = load_fit(f.fit);
  std::ostringstream csv;
  csv << "normalized_step,reward,fitted_reward,residual\n";
  for (const TrajectoryPoint& p : run.points()) {
    double fitted = 0.0;
    if (fit.is_sigmoid()) {
      fitted = eval_sigmoid(fit.sigmoid(), run.meta().r_init, run.meta().model_size_b, p.normalized_step);
    } else {
      // Step 0 has no power-law value of its own; it shares N = 1.
      fitted = eval_power_law(fit.power_law(), std::max<double>(1.0, static_cast<double>(p.step)));
    }
    csv << format_double(p.normalized_step) << ',' << format_double(p.reward) << ',' << format_double(fitted)
        << ',' << format_double(p.reward - fitted) << '\n';
  }
  if (f.out.empty()) {
    out << csv.str();
  } else {
    write_text(f.out, csv.str());
    out << "wrote " << f.out << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GRPO toy-training lab and reward scaling-law toolkit", "grpo_lab"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Run GRPO on a toy task and write its reward trajectory");
  train_cmd->add_option("--task", train_flags.task, "Task JSON file")->required();
  train_cmd->add_option("--out", train_flags.out, "Trajectory output (JSON lines)")->required();
  train_cmd->add_option("--group-size", train_flags.group_size, "Completions sampled per question (G)")
      ->capture_default_str();
  train_cmd->add_option("--epsilon", train_flags.epsilon, "Clip range")->capture_default_str();
  train_cmd->add_option("--beta", train_flags.beta, "KL penalty weight")->capture_default_str();
  train_cmd->add_option("--steps", train_flags.steps, "Training steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--lr", train_flags.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--rank", train_flags.rank, "Adapter rank")->capture_default_str();
  train_cmd->add_option("--scale", train_flags.scale, "Adapter scale")->capture_default_str();
  train_cmd->add_option("--model-size", train_flags.model_size, "Model size covariate recorded in the run meta")
      ->capture_default_str();
  train_cmd->add_option("--run-id", train_flags.run_id, "Run identifier");
  train_cmd->add_option("--checkpoint", train_flags.checkpoint, "Write the final policy here");
  train_cmd->add_option("--seed", train_flags.seed, "RNG seed (default: $GRPO_LAB_SEED, else 0)");

  FitFlags fit_flags;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the sigmoid law (jointly) or a power law (per run)");
  fit_cmd->add_option("--traj", fit_flags.trajectories, "Trajectory files")->required()->expected(1, -1);
  fit_cmd->add_option("--model", fit_flags.model, "sigmoid | powerlaw")
      ->check(CLI::IsMember({"sigmoid", "powerlaw"}))
      ->capture_default_str();
  fit_cmd->add_option("--out", fit_flags.out, "Fit JSON output (default: stdout)");
  fit_cmd->add_option("--seed", fit_flags.seed, "Multi-start seed");

  PredictFlags predict_flags;
  auto* predict_cmd = app.add_subcommand("predict", "Evaluate R(t) and the plateau of a fitted sigmoid law");
  predict_cmd->add_option("--fit", predict_flags.fit, "Sigmoid fit file")->required();
  predict_cmd->add_option("--r-init", predict_flags.r_init, "Initial reward")->required();
  predict_cmd->add_option("--size", predict_flags.size, "Model size in billions")->required();
  predict_cmd->add_option("--t", predict_flags.t, "Normalized step")->required();

  PhasesFlags phases_flags;
  auto* phases_cmd = app.add_subcommand("phases", "Slow / rapid / plateau boundaries of a sigmoid law");
  phases_cmd->add_option("--fit", phases_flags.fit, "Sigmoid fit file")->required();
  phases_cmd->add_option("--threshold", phases_flags.threshold, "Fraction of the peak slope")
      ->capture_default_str();

  AdviseFlags advise_flags;
  auto* advise_cmd = app.add_subcommand("advise", "Stop/continue recommendation for a partial run");
  advise_cmd->add_option("--traj", advise_flags.trajectory, "Trajectory prefix")->required();
  advise_cmd->add_option("--budget-steps", advise_flags.budget_steps,
                         "Planned steps (default: the trajectory's total_planned_steps)");
  advise_cmd->add_option("--min-gain", advise_flags.min_gain, "Relative gain below which to stop")
      ->capture_default_str();
  advise_cmd->add_option("--prefix-min", advise_flags.prefix_min, "Minimum observed budget fraction")
      ->capture_default_str();
  advise_cmd->add_option("--resamples", advise_flags.resamples, "Bootstrap resamples")->capture_default_str();
  advise_cmd->add_option("--seed", advise_flags.seed, "Bootstrap seed");

  ExportFlags export_flags;
  auto* export_cmd = app.add_subcommand("export-plot", "CSV of observed vs fitted rewards");
  export_cmd->add_option("--traj", export_flags.trajectory, "Trajectory file")->required();
  export_cmd->add_option("--fit", export_flags.fit, "Fit file")->required();
  export_cmd->add_option("--out", export_flags.out, "CSV output (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags, out);
    if (fit_cmd->parsed()) return cmd_fit(fit_flags, out);
    if (predict_cmd->parsed()) return cmd_predict(predict_flags, out);
    if (phases_cmd->parsed()) return cmd_phases(phases_flags, out);
    if (advise_cmd->parsed()) return cmd_advise(advise_flags, out);
    if (export_cmd->parsed()) return cmd_export_plot(export_flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FitError& e) {
    err << "fit failed: " << e.what() << '\n';
    print_best_so_far(e, err);
    return kFitFailure;
  } catch (const std::exception& e) {
    // I/O, parse, schema and data-domain errors.
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace grpolab::cli
