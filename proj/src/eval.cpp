#include "madview/eval.hpp"

namespace madview {

std::string subset_label(std::span<const int> subset, int n_views) {
  if (static_cast<int>(subset.size()) == n_views) return "all";
  std::string label;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (i) label += "+";
    label += "view" + std::to_string(subset[i] + 1);
  }
  return label;
}

EvalEntry run_episodes(Env& env, const Policy& policy, int episodes,
                       std::uint64_t master_seed, long checkpoint_step,
                       const std::string& label) {
  if (episodes < 1) throw ValidationError("episodes must be >= 1");
  EvalEntry entry;
  entry.subset_label = label;
  entry.episodes = episodes;
  int successes = 0;
  double return_sum = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    const std::uint64_t ep_seed = derive_seed(
        master_seed, "eval",
        static_cast<std::uint64_t>(checkpoint_step) * 1000003ull +
            static_cast<std::uint64_t>(ep));
    MultiViewObservation obs = env.reset(ep_seed);
    bool success = false;
    double ep_return = 0;
    while (true) {
      Eigen::VectorXf action = policy(obs);
      StepResult sr = env.step(
          std::span<const float>(action.data(), action.size()));
      ep_return += sr.reward;
      success = success || sr.success;
      obs = sr.observation;
      if (sr.terminated || sr.truncated) break;
    }
    successes += success ? 1 : 0;
    return_sum += ep_return;
  }
  entry.success_rate =
      static_cast<double>(successes) / static_cast<double>(episodes);
  entry.mean_return = return_sum / static_cast<double>(episodes);
  return entry;
}

}  // namespace madview
