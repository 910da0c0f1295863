#include "madview/run.hpp"

#include <ostream>

namespace madview {

EnvOptions env_options_from_config(const RunConfig& cfg) {
  EnvOptions opts;
  opts.image_h = cfg.image_h;
  opts.image_w = cfg.image_w;
  opts.frame_stack = cfg.frame_stack;
  opts.action_repeat = cfg.action_repeat;
  return opts;
}

TrainResult train_run(const RunConfig& cfg, const std::string& run_dir,
                      bool resume, std::ostream* log) {
  validate(cfg);
  auto env = make_env(cfg.env_id, env_options_from_config(cfg));
  const EnvSpec spec = env->spec();

  RunDirectory dir{std::filesystem::path(run_dir)};
  Agent<float> agent = Agent<float>::build(cfg, spec);
  const ComponentSeeds seeds = derive_seeds(cfg.seed);
  ReplayBuffer buffer(cfg.replay_capacity, seeds.replay);

  long start_step = 0;
  if (resume) {
    if (!std::filesystem::exists(dir.state_file()))
      throw ConfigError("no resume state at " + dir.state_file().string());
    ResumeHeader header = load_resume_state(dir.state_file(), agent, buffer);
    start_step = header.env_step;
    agent.reset_interaction();  // the interrupted episode is abandoned
    if (log) *log << "resuming from env_step " << start_step << "\n";
  } else {
    dir.write_manifest(make_manifest(cfg));
  }

  const std::uint64_t cfg_hash = config_hash(cfg);
  const std::string cfg_json = serialize_config(cfg);
  TrainResult result;
  result.run_dir = run_dir;

  auto evaluate_and_save = [&](long env_step) {
    EvalReport matrix = robustness_matrix(agent, *env, cfg.env_id,
                                          cfg.eval_episodes, cfg.seed,
                                          env_step);
    dir.append_eval_report(matrix, env_step);
    CheckpointMeta meta;
    meta.config_hash = cfg_hash;
    meta.step = env_step;
    meta.config_json = cfg_json;
    meta.latest_avg_success = matrix.rows.back().success_rate;
    auto params = agent.all_params();
    save_checkpoint(dir.checkpoints_dir(), meta, {params.data(), params.size()});
    ResumeHeader header;
    header.env_step = env_step;
    header.adam_steps_critic = agent.critic_optimizer().steps_taken();
    header.adam_steps_actor = agent.actor_optimizer().steps_taken();
    header.adam_steps_temp = agent.temperature_optimizer().steps_taken();
    save_resume_state(dir.state_file(), agent, buffer, header);
    dir.flush();
    if (log)
      *log << "eval @" << env_step
           << " avg_success=" << matrix.rows.back().success_rate << "\n";
    result.final_matrix = matrix;
    // evaluation leaves the environment mid-episode; restart interaction
    agent.reset_interaction();
    return matrix;
  };

  for (long step = start_step; step < cfg.total_env_steps; ++step) {
    auto report = agent.train_step(*env, buffer, step);
    if (report) dir.append_train_row(*report);
    const long done_steps = step + 1;
    if (done_steps % cfg.eval_every == 0 || done_steps == cfg.total_env_steps)
      evaluate_and_save(done_steps);
  }
  if (cfg.total_env_steps == 0) evaluate_and_save(0);
  dir.flush();
  return result;
}

}  // namespace madview
