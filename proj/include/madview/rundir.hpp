#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "madview/agent.hpp"
#include "madview/config.hpp"
#include "madview/eval.hpp"
#include "madview/replay.hpp"

namespace madview {

// Layout of one run's artifacts:
//   manifest.json, config.json, train.csv, eval.csv, eval.json,
//   checkpoints/ckpt_<step>.bin + .json, state/latest.bin, plots/.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path dir);

  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path checkpoints_dir() const { return dir_ / "checkpoints"; }
  std::filesystem::path plots_dir() const { return dir_ / "plots"; }
  std::filesystem::path state_file() const { return dir_ / "state" / "latest.bin"; }
  std::filesystem::path train_csv() const { return dir_ / "train.csv"; }
  std::filesystem::path eval_csv() const { return dir_ / "eval.csv"; }
  std::filesystem::path eval_json() const { return dir_ / "eval.json"; }
  std::filesystem::path manifest_file() const { return dir_ / "manifest.json"; }

  void write_manifest(const RunManifest& manifest);
  RunManifest read_manifest() const;

  void append_train_row(const LossReport& report);
  void append_eval_report(const EvalReport& report, long env_step);
  void flush();

  // Rewrites eval.json with every matrix recorded so far in this process.
  void write_eval_json();

  static const char* train_csv_header();
  static const char* eval_csv_header();

 private:
  std::filesystem::path dir_;
  std::ofstream train_out_, eval_out_;
  std::vector<std::pair<long, EvalReport>> eval_history_;

  void open_train();
  void open_eval();
};

// ---- checkpoints: weight blob + sidecar JSON ----

struct CheckpointMeta {
  std::uint64_t config_hash = 0;
  long step = 0;
  std::string config_json;   // full config snapshot for reconstruction
  double latest_avg_success = -1;  // metric summary; -1 when not evaluated yet
};

void save_weights(const std::filesystem::path& bin_path,
                  std::span<nn::Tensor<float>* const> tensors);
void load_weights(const std::filesystem::path& bin_path,
                  std::span<nn::Tensor<float>* const> tensors);

void save_checkpoint(const std::filesystem::path& dir, const CheckpointMeta& meta,
                     std::span<nn::Tensor<float>* const> tensors);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& bin_path);

// ---- full resume state (weights, optimizer, RNG streams, replay buffer) ----

struct ResumeHeader {
  long env_step = 0;
  long adam_steps_critic = 0, adam_steps_actor = 0, adam_steps_temp = 0;
};

void save_resume_state(const std::filesystem::path& path, Agent<float>& agent,
                       ReplayBuffer& buffer, const ResumeHeader& header);
ResumeHeader load_resume_state(const std::filesystem::path& path,
                               Agent<float>& agent, ReplayBuffer& buffer);

}  // namespace madview
