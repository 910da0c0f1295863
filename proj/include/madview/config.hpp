#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "madview/common.hpp"
#include "madview/rng.hpp"

namespace madview {

enum class MergeStrategy { kSum, kConcat, kFrameStack, kAttention, kVitLayer, kQMean };
enum class TrainingMode { kMad, kMergedOnly, kSingularOnly, kNaiveBoth, kSingleCamera };
enum class EncoderPreset { kDqn84, kDesk32 };

std::string to_string(MergeStrategy s);
std::string to_string(TrainingMode m);
std::string to_string(EncoderPreset p);
MergeStrategy merge_strategy_from_string(const std::string& s);
TrainingMode training_mode_from_string(const std::string& s);
EncoderPreset encoder_preset_from_string(const std::string& s);

// Full run configuration. Fields without a config-file entry fall back to
// these defaults; validate() enforces every documented invariant.
struct RunConfig {
  std::uint64_t seed = 0;
  int n_views = 3;
  int image_h = 84;
  int image_w = 84;
  int frame_stack = 3;
  int action_repeat = 1;
  int replay_capacity = 500000;
  int batch_size = 256;
  double learning_rate = 5e-4;
  int update_frequency = 2;
  double tau = 0.01;
  int feature_dim = 50;
  int hidden_dim = 1024;
  double log_std_low = -10.0;
  double log_std_high = 2.0;
  double init_temperature = 0.1;
  double mad_alpha = 0.8;
  double discount = 0.99;
  int exploration_steps = 2000;
  long total_env_steps = 30000;
  long eval_every = 5000;
  int eval_episodes = 20;
  MergeStrategy merge_strategy = MergeStrategy::kSum;
  TrainingMode training_mode = TrainingMode::kMad;
  int shift_pad = 4;

  std::string env_id = "triview-reach";
  EncoderPreset encoder_preset = EncoderPreset::kDqn84;
  int single_view_index = 0;
  int attention_heads = 1;
  int attention_ffn_dim = 0;  // 0 -> 2 * feature_dim

  bool operator==(const RunConfig&) const = default;
};

using OverrideList = std::vector<std::pair<std::string, std::string>>;

// Loads a config file (JSON object; empty file means "all defaults"), applies
// overrides last, validates, and returns the result. Unknown keys and type
// mismatches raise ConfigError naming the key; invariant violations raise
// ValidationError naming the constraint.
RunConfig load_config(const std::string& path, const OverrideList& overrides = {});

// Same pipeline for in-memory text (used by load_config and tests).
RunConfig parse_config(const std::string& text, const OverrideList& overrides = {});

void validate(const RunConfig& cfg);

std::string serialize_config(const RunConfig& cfg);  // canonical JSON
std::uint64_t config_hash(const RunConfig& cfg);

// Hash with the seed normalized out: runs differing only by seed share a
// group (seed replicates of one configuration).
std::uint64_t config_group_hash(const RunConfig& cfg);

// Snapshot of everything needed to rerun or audit a run.
struct RunManifest {
  RunConfig config;
  std::string code_version;
  std::string started_at;  // wall clock, informational only
  ComponentSeeds seeds;
};

RunManifest make_manifest(const RunConfig& cfg);
std::string serialize_manifest(const RunManifest& m);
RunManifest parse_manifest(const std::string& text);

}  // namespace madview
