#pragma once

#include <functional>
#include <string>
#include <vector>

#include "madview/agent.hpp"
#include "madview/envs.hpp"

namespace madview {

struct EvalEntry {
  std::string subset_label;
  std::vector<int> subset;  // 0-based view indices
  double success_rate = 0;  // successes / episodes, exactly
  double mean_return = 0;
  int episodes = 0;
};

// Success rates of one policy across view subsets, plus their unweighted
// average row.
struct EvalReport {
  std::string env_id;
  long checkpoint_step = 0;
  std::uint64_t master_seed = 0;
  std::vector<EvalEntry> rows;  // subsets, then the "average" row last

  const EvalEntry* find(const std::string& label) const {
    for (const auto& r : rows)
      if (r.subset_label == label) return &r;
    return nullptr;
  }
};

using Policy = std::function<Eigen::VectorXf(const MultiViewObservation&)>;

// Runs seeded episodes of `policy` on `env`. An episode counts as a success
// if the environment flags success at any step. Episode seeds derive from
// (master_seed, "eval", checkpoint_step, episode index) so different methods
// evaluate on identical episode instances.
EvalEntry run_episodes(Env& env, const Policy& policy, int episodes,
                       std::uint64_t master_seed, long checkpoint_step,
                       const std::string& label);

std::string subset_label(std::span<const int> subset, int n_views);

// Deterministic (mean-action) evaluation of the agent restricted to `subset`.
template <class S>
EvalEntry evaluate(Agent<S>& agent, Env& env, std::span<const int> subset,
                   int episodes, std::uint64_t master_seed,
                   long checkpoint_step) {
  if (subset.empty()) throw ValidationError("view subset must be non-empty");
  for (int i : subset)
    if (i < 0 || i >= agent.env_spec().n_views)
      throw ValidationError("view index " + std::to_string(i + 1) +
                            " outside 1.." +
                            std::to_string(agent.env_spec().n_views));
  std::vector<int> subset_copy(subset.begin(), subset.end());
  Policy policy = [&agent, subset_copy](const MultiViewObservation& obs) {
    return agent.act_on_subset(obs, subset_copy, /*stochastic=*/false);
  };
  // Trigger capability errors before running episodes.
  (void)agent.act_on_subset(env.reset(0), subset_copy, false);
  EvalEntry entry =
      run_episodes(env, policy, episodes, master_seed, checkpoint_step,
                   subset_label(subset, agent.env_spec().n_views));
  entry.subset = subset_copy;
  return entry;
}

// Evaluates {all views} plus each singular view, then appends the unweighted
// average row.
template <class S>
EvalReport robustness_matrix(Agent<S>& agent, Env& env,
                             const std::string& env_id, int episodes,
                             std::uint64_t master_seed, long checkpoint_step) {
  EvalReport report;
  report.env_id = env_id;
  report.checkpoint_step = checkpoint_step;
  report.master_seed = master_seed;
  const int n = agent.env_spec().n_views;
  std::vector<std::vector<int>> subsets;
  std::vector<int> all;
  for (int i = 0; i < n; ++i) all.push_back(i);
  subsets.push_back(all);
  for (int i = 0; i < n; ++i) subsets.push_back({i});
  double success_sum = 0, return_sum = 0;
  for (const auto& sel : subsets) {
    report.rows.push_back(evaluate(agent, env, std::span<const int>(sel),
                                   episodes, master_seed, checkpoint_step));
    success_sum += report.rows.back().success_rate;
    return_sum += report.rows.back().mean_return;
  }
  EvalEntry avg;
  avg.subset_label = "average";
  avg.success_rate = success_sum / static_cast<double>(subsets.size());
  avg.mean_return = return_sum / static_cast<double>(subsets.size());
  avg.episodes = episodes;
  report.rows.push_back(avg);
  return report;
}

}  // namespace madview
