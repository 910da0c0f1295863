#include "madview/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "madview/version.hpp"

namespace madview {

using nlohmann::json;

std::string to_string(MergeStrategy s) {
  switch (s) {
    case MergeStrategy::kSum: return "sum";
    case MergeStrategy::kConcat: return "concat";
    case MergeStrategy::kFrameStack: return "frame_stack";
    case MergeStrategy::kAttention: return "attention";
    case MergeStrategy::kVitLayer: return "vit_layer";
    case MergeStrategy::kQMean: return "q_mean";
  }
  return "?";
}

std::string to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::kMad: return "mad";
    case TrainingMode::kMergedOnly: return "merged_only";
    case TrainingMode::kSingularOnly: return "singular_only";
    case TrainingMode::kNaiveBoth: return "naive_both";
    case TrainingMode::kSingleCamera: return "single_camera";
  }
  return "?";
}

std::string to_string(EncoderPreset p) {
  switch (p) {
    case EncoderPreset::kDqn84: return "dqn84";
    case EncoderPreset::kDesk32: return "desk32";
  }
  return "?";
}

MergeStrategy merge_strategy_from_string(const std::string& s) {
  if (s == "sum") return MergeStrategy::kSum;
  if (s == "concat") return MergeStrategy::kConcat;
  if (s == "frame_stack") return MergeStrategy::kFrameStack;
  if (s == "attention") return MergeStrategy::kAttention;
  if (s == "vit_layer") return MergeStrategy::kVitLayer;
  if (s == "q_mean") return MergeStrategy::kQMean;
  throw ConfigError("unknown merge_strategy '" + s + "'");
}

TrainingMode training_mode_from_string(const std::string& s) {
  if (s == "mad") return TrainingMode::kMad;
  if (s == "merged_only") return TrainingMode::kMergedOnly;
  if (s == "singular_only") return TrainingMode::kSingularOnly;
  if (s == "naive_both") return TrainingMode::kNaiveBoth;
  if (s == "single_camera") return TrainingMode::kSingleCamera;
  throw ConfigError("unknown training_mode '" + s + "'");
}

EncoderPreset encoder_preset_from_string(const std::string& s) {
  if (s == "dqn84") return EncoderPreset::kDqn84;
  if (s == "desk32") return EncoderPreset::kDesk32;
  throw ConfigError("unknown encoder_preset '" + s + "'");
}

namespace {

json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["n_views"] = c.n_views;
  j["image_hw"] = {c.image_h, c.image_w};
  j["frame_stack"] = c.frame_stack;
  j["action_repeat"] = c.action_repeat;
  j["replay_capacity"] = c.replay_capacity;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["update_frequency"] = c.update_frequency;
  j["tau"] = c.tau;
  j["feature_dim"] = c.feature_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["log_std_bounds"] = {c.log_std_low, c.log_std_high};
  j["init_temperature"] = c.init_temperature;
  j["mad_alpha"] = c.mad_alpha;
  j["discount"] = c.discount;
  j["exploration_steps"] = c.exploration_steps;
  j["total_env_steps"] = c.total_env_steps;
  j["eval_every"] = c.eval_every;
  j["eval_episodes"] = c.eval_episodes;
  j["merge_strategy"] = to_string(c.merge_strategy);
  j["training_mode"] = to_string(c.training_mode);
  j["shift_pad"] = c.shift_pad;
  j["env_id"] = c.env_id;
  j["encoder_preset"] = to_string(c.encoder_preset);
  j["single_view_index"] = c.single_view_index;
  j["attention_heads"] = c.attention_heads;
  j["attention_ffn_dim"] = c.attention_ffn_dim;
  return j;
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

void apply_json(RunConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "seed") c.seed = get_as<std::uint64_t>(v, k);
    else if (k == "n_views") c.n_views = get_as<int>(v, k);
    else if (k == "image_hw") {
      if (!v.is_array() || v.size() != 2)
        throw ConfigError("config key 'image_hw' must be [height, width]");
      c.image_h = get_as<int>(v[0], k);
      c.image_w = get_as<int>(v[1], k);
    } else if (k == "frame_stack") c.frame_stack = get_as<int>(v, k);
    else if (k == "action_repeat") c.action_repeat = get_as<int>(v, k);
    else if (k == "replay_capacity") c.replay_capacity = get_as<int>(v, k);
    else if (k == "batch_size") c.batch_size = get_as<int>(v, k);
    else if (k == "learning_rate") c.learning_rate = get_as<double>(v, k);
    else if (k == "update_frequency") c.update_frequency = get_as<int>(v, k);
    else if (k == "tau") c.tau = get_as<double>(v, k);
    else if (k == "feature_dim") c.feature_dim = get_as<int>(v, k);
    else if (k == "hidden_dim") c.hidden_dim = get_as<int>(v, k);
    else if (k == "log_std_bounds") {
      if (!v.is_array() || v.size() != 2)
        throw ConfigError("config key 'log_std_bounds' must be [low, high]");
      c.log_std_low = get_as<double>(v[0], k);
      c.log_std_high = get_as<double>(v[1], k);
    } else if (k == "init_temperature") c.init_temperature = get_as<double>(v, k);
    else if (k == "mad_alpha") c.mad_alpha = get_as<double>(v, k);
    else if (k == "discount") c.discount = get_as<double>(v, k);
    else if (k == "exploration_steps") c.exploration_steps = get_as<int>(v, k);
    else if (k == "total_env_steps") c.total_env_steps = get_as<long>(v, k);
    else if (k == "eval_every") c.eval_every = get_as<long>(v, k);
    else if (k == "eval_episodes") c.eval_episodes = get_as<int>(v, k);
    else if (k == "merge_strategy")
      c.merge_strategy = merge_strategy_from_string(get_as<std::string>(v, k));
    else if (k == "training_mode")
      c.training_mode = training_mode_from_string(get_as<std::string>(v, k));
    else if (k == "shift_pad") c.shift_pad = get_as<int>(v, k);
    else if (k == "env_id") c.env_id = get_as<std::string>(v, k);
    else if (k == "encoder_preset")
      c.encoder_preset = encoder_preset_from_string(get_as<std::string>(v, k));
    else if (k == "single_view_index") c.single_view_index = get_as<int>(v, k);
    else if (k == "attention_heads") c.attention_heads = get_as<int>(v, k);
    else if (k == "attention_ffn_dim") c.attention_ffn_dim = get_as<int>(v, k);
    else throw ConfigError("unknown config key '" + k + "'");
  }
}

json parse_override_value(const std::string& key, const std::string& value) {
  json parsed = json::parse(value, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return json(value);  // bare strings (enum names, env ids)
  (void)key;
}

}  // namespace

void validate(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  if (c.mad_alpha < 0.0 || c.mad_alpha > 1.0) fail("mad_alpha ∉ [0,1]");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) fail("tau ∉ (0,1]");
  if (!(c.discount > 0.0 && c.discount <= 1.0)) fail("discount ∉ (0,1]");
  if (c.replay_capacity < c.batch_size) fail("replay_capacity < batch_size");
  if (c.frame_stack < 1) fail("frame_stack < 1");
  if (c.n_views < 1) fail("n_views < 1");
  if (!(c.log_std_low < c.log_std_high)) fail("log_std_bounds.low >= log_std_bounds.high");
  if (c.image_h <= 0 || c.image_w <= 0) fail("image_hw must be positive");
  if (c.batch_size < 1) fail("batch_size < 1");
  if (c.learning_rate <= 0.0) fail("learning_rate <= 0");
  if (c.update_frequency < 1) fail("update_frequency < 1");
  if (c.feature_dim < 1) fail("feature_dim < 1");
  if (c.hidden_dim < 1) fail("hidden_dim < 1");
  if (c.init_temperature <= 0.0) fail("init_temperature <= 0");
  if (c.action_repeat < 1) fail("action_repeat < 1");
  if (c.shift_pad < 0) fail("shift_pad < 0");
  if (c.eval_episodes < 1) fail("eval_episodes < 1");
  if (c.eval_every < 1) fail("eval_every < 1");
  if (c.total_env_steps < 0) fail("total_env_steps < 0");
  if (c.exploration_steps < 0) fail("exploration_steps < 0");
  if (c.single_view_index < 0 || c.single_view_index >= c.n_views)
    fail("single_view_index ∉ [0, n_views)");
  if (c.attention_heads < 1) fail("attention_heads < 1");
  if (c.attention_heads > 1 && c.feature_dim % c.attention_heads != 0)
    fail("feature_dim not divisible by attention_heads");
  if (c.attention_ffn_dim < 0) fail("attention_ffn_dim < 0");
}

RunConfig parse_config(const std::string& text, const OverrideList& overrides) {
  RunConfig cfg;
  // An empty (or whitespace-only) file means "all defaults".
  bool blank = true;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) { blank = false; break; }
  if (!blank) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON");
    apply_json(cfg, j);
  }
  for (const auto& [key, value] : overrides) {
    json j;
    j[key] = parse_override_value(key, value);
    apply_json(cfg, j);
  }
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path, const OverrideList& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string serialize_config(const RunConfig& cfg) {
  return config_to_json(cfg).dump(2);
}

std::uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(config_to_json(cfg).dump());
}

std::uint64_t config_group_hash(const RunConfig& cfg) {
  RunConfig seedless = cfg;
  seedless.seed = 0;
  return fnv1a64(config_to_json(seedless).dump());
}

RunManifest make_manifest(const RunConfig& cfg) {
  RunManifest m;
  m.config = cfg;
  m.code_version = kVersion;
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&tt, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  m.started_at = buf;
  m.seeds = derive_seeds(cfg.seed);
  return m;
}

std::string serialize_manifest(const RunManifest& m) {
  json j;
  j["config"] = json::parse(serialize_config(m.config));
  j["config_hash"] = hex64(config_hash(m.config));
  j["code_version"] = m.code_version;
  j["started_at"] = m.started_at;
  j["seeds"]["env"] = m.seeds.env;
  j["seeds"]["init"] = m.seeds.init;
  j["seeds"]["replay"] = m.seeds.replay;
  j["seeds"]["augment"] = m.seeds.augment;
  return j.dump(2);
}

RunManifest parse_manifest(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ConfigError("manifest is not valid JSON");
  RunManifest m;
  RunConfig cfg;
  apply_json(cfg, j.at("config"));
  validate(cfg);
  m.config = cfg;
  m.code_version = j.at("code_version").get<std::string>();
  m.started_at = j.at("started_at").get<std::string>();
  m.seeds.env = j.at("seeds").at("env").get<std::uint64_t>();
  m.seeds.init = j.at("seeds").at("init").get<std::uint64_t>();
  m.seeds.replay = j.at("seeds").at("replay").get<std::uint64_t>();
  m.seeds.augment = j.at("seeds").at("augment").get<std::uint64_t>();
  return m;
}

}  // namespace madview
