#include <doctest.h>

#include "madview/config.hpp"

using namespace madview;

TEST_CASE("empty file yields the documented defaults") {
  const RunConfig cfg = parse_config("");
  CHECK(cfg.mad_alpha == doctest::Approx(0.8));
  CHECK(cfg.feature_dim == 50);
  CHECK(cfg.batch_size == 256);
  CHECK(cfg.replay_capacity == 500000);
  CHECK(cfg.frame_stack == 3);
  CHECK(cfg.exploration_steps == 2000);
  CHECK(cfg.learning_rate == doctest::Approx(5e-4));
  CHECK(cfg.update_frequency == 2);
  CHECK(cfg.tau == doctest::Approx(0.01));
  CHECK(cfg.hidden_dim == 1024);
  CHECK(cfg.log_std_low == doctest::Approx(-10.0));
  CHECK(cfg.log_std_high == doctest::Approx(2.0));
  CHECK(cfg.init_temperature == doctest::Approx(0.1));
  CHECK(cfg.image_h == 84);
  CHECK(cfg.image_w == 84);
}

TEST_CASE("mad_alpha outside [0,1] is rejected with the constraint name") {
  CHECK_THROWS_WITH_AS(parse_config("", {{"mad_alpha", "1.5"}}),
                       "mad_alpha ∉ [0,1]", ValidationError);
}

TEST_CASE("discount can be set per environment profile") {
  const RunConfig cfg = parse_config(R"({"discount": 0.8})");
  CHECK(cfg.discount == doctest::Approx(0.8));
}

TEST_CASE("unknown keys raise a configuration error naming the key") {
  CHECK_THROWS_AS(parse_config(R"({"learningrate": 1.0})"), ConfigError);
  try {
    parse_config(R"({"learningrate": 1.0})");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learningrate") != std::string::npos);
  }
}

TEST_CASE("type errors and malformed JSON are configuration errors") {
  CHECK_THROWS_AS(parse_config(R"({"batch_size": "many"})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{nope"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1,2]"), ConfigError);
}

TEST_CASE("overrides apply after the file and are validated") {
  const RunConfig cfg =
      parse_config(R"({"batch_size": 64})", {{"batch_size", "32"},
                                             {"merge_strategy", "concat"}});
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.merge_strategy == MergeStrategy::kConcat);
  CHECK_THROWS_AS(parse_config("", {{"tau", "0"}}), ValidationError);
  CHECK_THROWS_AS(parse_config("", {{"replay_capacity", "10"},
                                    {"batch_size", "32"}}),
                  ValidationError);
  CHECK_THROWS_AS(parse_config("", {{"log_std_bounds", "[2, -10]"}}),
                  ValidationError);
}

TEST_CASE("config round-trips through serialization") {
  const RunConfig cfg = parse_config("", {{"seed", "9"},
                                          {"n_views", "2"},
                                          {"image_hw", "[32, 48]"},
                                          {"training_mode", "merged_only"},
                                          {"encoder_preset", "desk32"}});
  const RunConfig back = parse_config(serialize_config(cfg));
  CHECK(back == cfg);
  CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("manifest reloads identical per-component seeds") {
  RunConfig cfg = parse_config("", {{"seed", "1234"}});
  const RunManifest m = make_manifest(cfg);
  const RunManifest back = parse_manifest(serialize_manifest(m));
  CHECK(back.seeds == m.seeds);
  CHECK(back.config == m.config);
  CHECK(back.seeds == derive_seeds(1234));
}

TEST_CASE("enum spellings round-trip") {
  for (auto s : {MergeStrategy::kSum, MergeStrategy::kConcat,
                 MergeStrategy::kFrameStack, MergeStrategy::kAttention,
                 MergeStrategy::kVitLayer, MergeStrategy::kQMean})
    CHECK(merge_strategy_from_string(to_string(s)) == s);
  for (auto m : {TrainingMode::kMad, TrainingMode::kMergedOnly,
                 TrainingMode::kSingularOnly, TrainingMode::kNaiveBoth,
                 TrainingMode::kSingleCamera})
    CHECK(training_mode_from_string(to_string(m)) == m);
}
