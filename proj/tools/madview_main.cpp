#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "madview/report.hpp"
#include "madview/run.hpp"
#include "madview/version.hpp"

namespace fs = std::filesystem;
using namespace madview;

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> sets;  // key=value
  std::string seed, views, training_mode, merge_strategy, alpha, env_id;
  std::string total_steps;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "config file (JSON)");
  cmd->add_option("--set", flags.sets,
                  "override as key=value (repeatable; value parsed as JSON)");
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--views", flags.views, "number of camera views");
  cmd->add_option("--training-mode", flags.training_mode,
                  "mad|merged_only|singular_only|naive_both|single_camera");
  cmd->add_option("--merge-strategy", flags.merge_strategy,
                  "sum|concat|frame_stack|attention|vit_layer|q_mean");
  cmd->add_option("--alpha", flags.alpha, "MAD blending weight in [0,1]");
  cmd->add_option("--env", flags.env_id, "environment id");
  cmd->add_option("--total-steps", flags.total_steps, "total environment steps");
}

OverrideList overrides_from(const CommonFlags& flags) {
  OverrideList ov;
  for (const std::string& kv : flags.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    ov.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!flags.seed.empty()) ov.emplace_back("seed", flags.seed);
  if (!flags.views.empty()) ov.emplace_back("n_views", flags.views);
  if (!flags.training_mode.empty())
    ov.emplace_back("training_mode", flags.training_mode);
  if (!flags.merge_strategy.empty())
    ov.emplace_back("merge_strategy", flags.merge_strategy);
  if (!flags.alpha.empty()) ov.emplace_back("mad_alpha", flags.alpha);
  if (!flags.env_id.empty()) ov.emplace_back("env_id", flags.env_id);
  if (!flags.total_steps.empty())
    ov.emplace_back("total_env_steps", flags.total_steps);
  return ov;
}

RunConfig config_from(const CommonFlags& flags) {
  const OverrideList ov = overrides_from(flags);
  if (flags.config_path.empty()) return parse_config("", ov);
  return load_config(flags.config_path, ov);
}

std::string default_run_root() {
  if (const char* root = std::getenv("MADVIEW_RUN_ROOT")) return root;
  return "runs";
}

std::string default_run_dir(const RunConfig& cfg) {
  return (fs::path(default_run_root()) /
          (cfg.env_id + "-" + to_string(cfg.training_mode) + "-s" +
           std::to_string(cfg.seed) + "-" +
           hex64(config_hash(cfg)).substr(0, 8)))
      .string();
}

void fresh_run_dir(const fs::path& dir) {
  for (const char* f : {"train.csv", "eval.csv", "eval.json"})
    fs::remove(dir / f);
  fs::remove_all(dir / "checkpoints");
  fs::remove_all(dir / "state");
}

std::vector<std::vector<int>> parse_subsets(const std::string& text,
                                            int n_views) {
  std::vector<std::vector<int>> subsets;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    if (token == "all") {
      std::vector<int> all;
      for (int i = 0; i < n_views; ++i) all.push_back(i);
      subsets.push_back(all);
      continue;
    }
    std::vector<int> subset;
    std::stringstream ts(token);
    std::string view;
    while (std::getline(ts, view, '+')) {
      const int v = std::stoi(view);
      if (v < 1 || v > n_views)
        throw ValidationError("view index " + view + " outside 1.." +
                              std::to_string(n_views));
      subset.push_back(v - 1);
    }
    subsets.push_back(subset);
  }
  if (subsets.empty()) throw ValidationError("no subsets requested");
  return subsets;
}

int cmd_train(const CommonFlags& flags, const std::string& run_dir_flag,
              bool resume) {
  const RunConfig cfg = config_from(flags);
  const std::string run_dir =
      run_dir_flag.empty() ? default_run_dir(cfg) : run_dir_flag;
  if (!resume) {
    fs::create_directories(run_dir);
    fresh_run_dir(run_dir);
  }
  std::cout << "training -> " << run_dir << "\n";
  TrainResult result = train_run(cfg, run_dir, resume, &std::cout);
  std::cout << "done; final robustness matrix:\n";
  for (const auto& row : result.final_matrix.rows)
    std::cout << "  " << row.subset_label << ": success "
              << row.success_rate << ", return " << row.mean_return << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& env_override,
             const std::string& subsets_text, int episodes,
             const std::string& out_dir_flag, bool force,
             const std::string& config_path) {
  CheckpointMeta meta = read_checkpoint_meta(fs::path(checkpoint));
  RunConfig cfg = parse_config(meta.config_json);
  if (!config_path.empty()) {
    const RunConfig requested = load_config(config_path);
    if (config_hash(requested) != meta.config_hash && !force)
      throw ConfigError(
          "config hash mismatch between checkpoint and --config; pass "
          "--force to evaluate anyway");
    cfg = requested;
  }
  if (!env_override.empty()) cfg.env_id = env_override;
  if (episodes > 0) cfg.eval_episodes = episodes;

  auto env = make_env(cfg.env_id, env_options_from_config(cfg));
  Agent<float> agent = Agent<float>::build(cfg, env->spec());
  auto params = agent.all_params();
  load_weights(fs::path(checkpoint), {params.data(), params.size()});

  const auto subsets = parse_subsets(
      subsets_text.empty() ? "all" : subsets_text, env->spec().n_views);
  EvalReport report;
  report.env_id = cfg.env_id;
  report.checkpoint_step = meta.step;
  report.master_seed = cfg.seed;
  std::cout << "subset | success_rate | mean_return | episodes\n";
  for (const auto& subset : subsets) {
    EvalEntry row = evaluate(agent, *env, std::span<const int>(subset),
                             cfg.eval_episodes, cfg.seed, meta.step);
    report.rows.push_back(row);
    std::cout << row.subset_label << " | " << row.success_rate << " | "
              << row.mean_return << " | " << row.episodes << "\n";
  }
  const fs::path out_dir = out_dir_flag.empty()
                               ? fs::path(checkpoint).parent_path().parent_path()
                               : fs::path(out_dir_flag);
  RunDirectory rd(out_dir);
  rd.append_eval_report(report, meta.step);
  rd.flush();
  std::cout << "wrote " << rd.eval_csv() << " and " << rd.eval_json() << "\n";
  return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& run_root,
              const std::vector<std::string>& sweep_specs) {
  if (sweep_specs.empty())
    throw ConfigError("sweep requires at least one --sweep key=v1,v2,... entry");
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const std::string& spec : sweep_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--sweep expects key=v1,v2,... got '" + spec + "'");
    std::vector<std::string> values;
    std::stringstream ss(spec.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) values.push_back(v);
    if (values.empty()) throw ConfigError("--sweep entry has no values");
    axes.emplace_back(spec.substr(0, eq), values);
  }
  std::vector<std::size_t> idx(axes.size(), 0);
  int cell = 0;
  while (true) {
    CommonFlags cell_flags = flags;
    for (std::size_t i = 0; i < axes.size(); ++i)
      cell_flags.sets.push_back(axes[i].first + "=" + axes[i].second[idx[i]]);
    const RunConfig cfg = config_from(cell_flags);
    const std::string dir =
        (fs::path(run_root.empty() ? default_run_root() : run_root) /
         (cfg.env_id + "-" + to_string(cfg.training_mode) + "-s" +
          std::to_string(cfg.seed) + "-" +
          hex64(config_hash(cfg)).substr(0, 8)))
            .string();
    std::cout << "sweep cell " << cell++ << " -> " << dir << "\n";
    fs::create_directories(dir);
    fresh_run_dir(dir);
    train_run(cfg, dir, false, &std::cout);
    std::size_t k = 0;
    for (; k < axes.size(); ++k) {
      if (++idx[k] < axes[k].second.size()) break;
      idx[k] = 0;
    }
    if (k == axes.size()) break;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"madview: multi-view reinforcement learning with fused and "
               "disentangled view features"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags train_flags;
  std::string train_run_dir;
  bool resume = false;
  CLI::App* train = app.add_subcommand("train", "train an agent");
  add_common(train, train_flags);
  train->add_option("--run-dir", train_run_dir, "output run directory");
  train->add_flag("--resume", resume, "resume from the run's saved state");

  std::string eval_checkpoint, eval_env, eval_subsets, eval_out, eval_config;
  int eval_episodes = 0;
  bool eval_force = false;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint .bin path")
      ->required();
  eval->add_option("--env", eval_env, "environment id override");
  eval->add_option("--subsets", eval_subsets,
                   "comma list of subsets: all, view numbers, or 1+2 combos");
  eval->add_option("--episodes", eval_episodes, "episodes per subset");
  eval->add_option("--out", eval_out, "output directory for eval files");
  eval->add_option("--config", eval_config, "config file to validate against");
  eval->add_flag("--force", eval_force, "evaluate despite config hash mismatch");

  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  CLI::App* report = app.add_subcommand("report", "aggregate runs into plots");
  report->add_option("runs", report_dirs, "run directories")->required();
  report->add_option("--out", report_out, "report output directory");

  CommonFlags sweep_flags;
  std::string sweep_root;
  std::vector<std::string> sweep_specs;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "cartesian product of overrides, one run per cell");
  add_common(sweep, sweep_flags);
  sweep->add_option("--sweep", sweep_specs, "axis as key=v1,v2,... (repeatable)");
  sweep->add_option("--run-root", sweep_root, "root directory for sweep runs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_flags, train_run_dir, resume);
    if (eval->parsed())
      return cmd_eval(eval_checkpoint, eval_env, eval_subsets, eval_episodes,
                      eval_out, eval_force, eval_config);
    if (report->parsed()) {
      ReportOptions opts;
      opts.run_dirs = report_dirs;
      opts.out_dir = report_out;
      generate_report(opts, std::cout);
      return 0;
    }
    if (sweep->parsed()) return cmd_sweep(sweep_flags, sweep_root, sweep_specs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
