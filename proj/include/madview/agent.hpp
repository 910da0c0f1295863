#pragma once

#include <optional>
#include <vector>

#include "madview/config.hpp"
#include "madview/envs.hpp"
#include "madview/merge.hpp"
#include "madview/networks.hpp"
#include "madview/replay.hpp"

namespace madview {

// Per-update diagnostics. For blended losses the total equals
// alpha * unaug + (1 - alpha) * mean(aug components).
struct LossReport {
  long env_step = 0;
  double critic_loss = 0, actor_loss = 0, temperature_loss = 0;
  double temperature = 0;
  double q_value_mean = 0;  // online Q1 on the primary stream
  double critic_unaug = 0, actor_unaug = 0;
  std::vector<double> critic_aug;  // per view
  std::vector<double> actor_aug;
  double grad_norm_critic = 0, grad_norm_actor = 0;
};

// Test instrumentation filled during update() when requested.
template <class S>
struct UpdateTrace {
  ad::Mat<S> target_values;                      // shared critic target y
  std::vector<ad::Mat<S>> per_stream_targets;    // y as consumed per stream
  std::vector<ad::Mat<S>> critic_stream_states;  // online critic state inputs
  std::vector<ad::Mat<S>> actor_q_states;        // Q state input per stream
  std::vector<ad::Mat<S>> actor_policy_inputs;   // policy input per stream
  std::vector<ad::Mat<S>> target_critic_grads;   // expected all-zero
  std::vector<ad::Mat<S>> target_encoder_grads;  // expected all-zero
  std::vector<ad::Mat<S>> critic_group_grads;    // one per critic-group tensor
  std::vector<ad::Mat<S>> actor_group_grads;     // one per actor-group tensor
};

// Actor-critic learner over fused multi-view features. The `mad` mode trains
// the actor and critic on merged features and applies every singular-view
// feature as an input augmentation, with all learning targets computed from
// the unaugmented merged stream; the other modes are the ablations.
template <class S>
class Agent {
 public:
  using GRef = typename ad::Graph<S>::Ref;

  static Agent build(const RunConfig& cfg, const EnvSpec& spec) {
    validate(cfg);
    if (cfg.n_views != spec.n_views)
      throw ConfigError("config n_views=" + std::to_string(cfg.n_views) +
                        " does not match environment n_views=" +
                        std::to_string(spec.n_views));
    Agent a;
    a.cfg_ = cfg;
    a.spec_ = spec;
    a.seeds_ = derive_seeds(cfg.seed);
    Rng init_rng(a.seeds_.init);

    a.fusion_ = Fusion<S>::build(cfg.merge_strategy, cfg.feature_dim,
                                 cfg.n_views, cfg.attention_heads,
                                 cfg.attention_ffn_dim, init_rng);
    const bool needs_view_features =
        cfg.training_mode == TrainingMode::kMad ||
        cfg.training_mode == TrainingMode::kNaiveBoth;
    if (needs_view_features && !a.fusion_.merged_dim_matches_view_dim())
      throw ConfigError(
          "training_mode '" + to_string(cfg.training_mode) +
          "' requires a merge strategy whose fused features match the "
          "singular-view dimensionality; '" +
          to_string(cfg.merge_strategy) + "' does not");
    if (cfg.training_mode == TrainingMode::kSingularOnly &&
        cfg.merge_strategy == MergeStrategy::kFrameStack)
      throw ConfigError(
          "training_mode 'singular_only' has no per-view features under the "
          "'frame_stack' strategy");

    int enc_channels = 3 * cfg.frame_stack;
    if (cfg.merge_strategy == MergeStrategy::kFrameStack)
      enc_channels *= cfg.n_views;
    a.encoder_ = Encoder<S>::build(cfg.encoder_preset, enc_channels,
                                   cfg.image_h, cfg.image_w, cfg.feature_dim,
                                   init_rng);
    const int state_dim = a.state_dim();
    a.actor_ = Actor<S>::build(state_dim + spec.proprio_dim, spec.action_dim,
                               cfg.hidden_dim, S(cfg.log_std_low),
                               S(cfg.log_std_high), init_rng);
    a.critic_ = TwinCritic<S>::build(state_dim + spec.proprio_dim +
                                         spec.action_dim,
                                     cfg.hidden_dim, init_rng);
    a.encoder_target_ = a.encoder_;
    a.fusion_target_ = a.fusion_;
    a.critic_target_ = a.critic_;
    a.temperature_.init(S(cfg.init_temperature));

    a.opt_critic_.emplace(S(cfg.learning_rate));
    a.opt_actor_.emplace(S(cfg.learning_rate));
    a.opt_temp_.emplace(S(cfg.learning_rate));
    a.aug_rng_ = Rng(a.seeds_.augment);
    a.env_rng_ = Rng(a.seeds_.env);
    return a;
  }

  const RunConfig& config() const { return cfg_; }
  const EnvSpec& env_spec() const { return spec_; }

  // Dimensionality of the state representation entering actor and critic.
  int state_dim() const {
    switch (cfg_.training_mode) {
      case TrainingMode::kMad:
      case TrainingMode::kNaiveBoth:
        return cfg_.feature_dim;
      case TrainingMode::kMergedOnly:
        return fusion_.output_dim();
      case TrainingMode::kSingularOnly:
      case TrainingMode::kSingleCamera:
        return cfg_.feature_dim;
    }
    return cfg_.feature_dim;
  }

  // ---- one gradient update ----

  LossReport update(const Batch<S>& batch, UpdateTrace<S>* trace = nullptr) {
    return update_impl(batch, trace, /*apply=*/true);
  }

  // Computes every loss (and gradients, when traced) without touching the
  // parameters or RNG-stream ordering; used by gradient-check tests.
  LossReport compute_losses(const Batch<S>& batch,
                            UpdateTrace<S>* trace = nullptr) {
    return update_impl(batch, trace, /*apply=*/false);
  }

  LossReport update_impl(const Batch<S>& batch, UpdateTrace<S>* trace,
                         bool apply) {
    if (batch.size < 1) throw ValidationError("empty batch");
    const int B = batch.size;
    const int A = spec_.action_dim;

    // One draw per batch element and timestep, shared across views; one
    // reparameterization noise per element, shared across feature streams.
    const ShiftOffsets off_t = draw_shift_offsets(B, cfg_.shift_pad, aug_rng_);
    const ShiftOffsets off_tp1 = draw_shift_offsets(B, cfg_.shift_pad, aug_rng_);
    const ad::Mat<S> eps_target = normal_mat(A, B, aug_rng_);
    const ad::Mat<S> eps_actor = normal_mat(A, B, aug_rng_);

    const int plane_channels = 3 * cfg_.frame_stack;
    std::vector<ad::Mat<S>> obs(batch.n_views), next(batch.n_views);
    for (int v = 0; v < batch.n_views; ++v) {
      obs[v] = shift_images(batch.obs_views[v], off_t, plane_channels,
                            cfg_.image_h, cfg_.image_w);
      next[v] = shift_images(batch.next_views[v], off_tp1, plane_channels,
                             cfg_.image_h, cfg_.image_w);
    }

    LossReport report;
    report.temperature = static_cast<double>(temperature_.value());

    // ---------- critic ----------
    ad::Graph<S> g;
    const GRef proprio = g.constant(batch.proprio);
    const GRef next_proprio = g.constant(batch.next_proprio);
    const GRef action = g.constant(batch.action);

    CriticPlan plan = build_critic_plan(g, batch, obs, next, proprio,
                                        next_proprio, action, eps_target,
                                        trace);
    g.backward(plan.loss);
    report.critic_loss = scalar(g, plan.loss);
    report.critic_unaug = plan.unaug_value;
    report.critic_aug = plan.aug_values;
    report.q_value_mean = plan.q_value_mean;
    report.grad_norm_critic = grad_norm(g, critic_group());
    if (trace) {
      capture_target_grads(g, *trace);
      for (nn::Tensor<S>* t : critic_group())
        trace->critic_group_grads.push_back(
            g.has_param(t) ? g.grad_of(t)
                           : ad::Mat<S>::Zero(t->value.rows(), t->value.cols()));
    }
    if (apply) opt_critic_->step(as_span(critic_group()), g);

    // ---------- actor (on features detached from the critic pass) ----------
    ad::Graph<S> ga;
    ActorPlan aplan = build_actor_plan(ga, g, plan, batch, eps_actor, trace);
    ga.backward(aplan.loss);
    report.actor_loss = scalar(ga, aplan.loss);
    report.actor_unaug = aplan.unaug_value;
    report.actor_aug = aplan.aug_values;
    report.grad_norm_actor = grad_norm(ga, actor_group());
    if (trace)
      for (nn::Tensor<S>* t : actor_group())
        trace->actor_group_grads.push_back(
            ga.has_param(t)
                ? ga.grad_of(t)
                : ad::Mat<S>::Zero(t->value.rows(), t->value.cols()));
    if (apply) opt_actor_->step(as_span(actor_group()), ga);

    // ---------- temperature (unaugmented/primary stream log-probs) ----------
    ad::Graph<S> gt;
    const GRef temp_loss =
        temperature_loss(gt, temperature_.log_temp.ref(gt),
                         aplan.primary_log_prob, target_entropy());
    gt.backward(temp_loss);
    report.temperature_loss = scalar(gt, temp_loss);
    if (apply) {
      opt_temp_->step(as_span(temp_group()), gt);
      report.temperature = static_cast<double>(temperature_.value());
      // targets track online parameters
      soft_update<S>(as_span(target_group()), as_const_span(online_group()),
                     S(cfg_.tau));
    }
    return report;
  }

  // ---- environment interaction ----

  std::optional<LossReport> train_step(Env& env, ReplayBuffer& buffer,
                                       long env_step) {
    if (!has_obs_) {
      current_obs_ = env.reset(env_rng_.next_u64());
      has_obs_ = true;
    }
    Eigen::VectorXf action(spec_.action_dim);
    if (env_step < cfg_.exploration_steps) {
      for (int i = 0; i < spec_.action_dim; ++i)
        action(i) = static_cast<float>(env_rng_.uniform(-1.0, 1.0));
    } else {
      action = act(current_obs_, /*stochastic=*/true);
    }
    StepResult sr = env.step(std::span<const float>(action.data(),
                                                    action.size()));
    Transition tr;
    tr.obs = current_obs_;
    tr.action = action;
    tr.reward = static_cast<float>(sr.reward);
    tr.next_obs = sr.observation;
    tr.done = sr.terminated;  // truncation still bootstraps
    buffer.push(tr);
    if (sr.terminated || sr.truncated) {
      current_obs_ = env.reset(env_rng_.next_u64());
    } else {
      current_obs_ = sr.observation;
    }
    if ((env_step + 1) % cfg_.update_frequency == 0 &&
        buffer.size() >= cfg_.batch_size) {
      Batch<float> fb = buffer.sample(cfg_.batch_size);
      LossReport report;
      if constexpr (std::is_same_v<S, float>) {
        report = update(fb);
      } else {
        Batch<S> sb = convert_batch<S>(fb);
        report = update(sb);
      }
      report.env_step = env_step + 1;
      return report;
    }
    return std::nullopt;
  }

  void reset_interaction() { has_obs_ = false; }

  // Stochastic or mean action from the full view set the mode trains on.
  Eigen::VectorXf act(const MultiViewObservation& observation, bool stochastic) {
    std::vector<int> subset;
    if (cfg_.training_mode == TrainingMode::kSingleCamera)
      subset = {cfg_.single_view_index};
    else
      for (int i = 0; i < spec_.n_views; ++i) subset.push_back(i);
    return act_on_subset(observation, subset, stochastic);
  }

  // Deterministic policy evaluated on the views in `subset` only. For the
  // `sum` strategy the fused feature is the partial sum over those views.
  Eigen::VectorXf act_on_subset(const MultiViewObservation& observation,
                                std::span<const int> subset,
                                bool stochastic = false) {
    if (subset.empty()) throw ValidationError("view subset must be non-empty");
    for (int i : subset)
      if (i < 0 || i >= spec_.n_views)
        throw ValidationError("view index " + std::to_string(i + 1) +
                              " outside 1.." + std::to_string(spec_.n_views));
    if (static_cast<int>(subset.size()) != spec_.n_views &&
        !fusion_.supports_subset() &&
        cfg_.training_mode != TrainingMode::kSingleCamera)
      throw CapabilityError("merge strategy '" +
                            to_string(cfg_.merge_strategy) +
                            "' cannot evaluate a partial view subset");
    ad::Graph<S> g;
    GRef state = encode_subset(g, observation, subset);
    std::vector<GRef> in{state,
                         g.constant(observation.proprio.template cast<S>())};
    GRef actor_in = g.vcat(in);
    ad::Mat<S> out;
    if (stochastic) {
      const ad::Mat<S> eps = normal_mat(spec_.action_dim, 1, aug_rng_);
      out = g.value(actor_.sample(g, actor_in, eps).action);
    } else {
      out = g.value(actor_.mean_action(g, actor_in));
    }
    return out.template cast<float>();
  }

  // ---- parameter access ----

  std::vector<nn::Tensor<S>*> critic_group() {
    std::vector<nn::Tensor<S>*> out = encoder_.params();
    append(out, fusion_.params());
    append(out, critic_.params());
    return out;
  }
  std::vector<nn::Tensor<S>*> actor_group() { return actor_.params(); }
  std::vector<nn::Tensor<S>*> temp_group() { return {&temperature_.log_temp}; }
  std::vector<nn::Tensor<S>*> online_group() {
    auto out = critic_group();
    return out;
  }
  std::vector<nn::Tensor<S>*> target_group() {
    std::vector<nn::Tensor<S>*> out = encoder_target_.params();
    append(out, fusion_target_.params());
    append(out, critic_target_.params());
    return out;
  }
  std::vector<nn::Tensor<S>*> all_params() {
    auto out = critic_group();
    append(out, actor_group());
    append(out, temp_group());
    append(out, target_group());
    return out;
  }

  Encoder<S>& encoder() { return encoder_; }
  Encoder<S>& target_encoder() { return encoder_target_; }
  Actor<S>& actor() { return actor_; }
  TwinCritic<S>& critic() { return critic_; }
  TwinCritic<S>& target_critic() { return critic_target_; }
  Fusion<S>& fusion() { return fusion_; }
  EntropyTemperature<S>& temperature() { return temperature_; }
  nn::Adam<S>& critic_optimizer() { return *opt_critic_; }
  nn::Adam<S>& actor_optimizer() { return *opt_actor_; }
  nn::Adam<S>& temperature_optimizer() { return *opt_temp_; }
  Rng& augmentation_rng() { return aug_rng_; }
  Rng& environment_rng() { return env_rng_; }

  S target_entropy() const { return S(-spec_.action_dim); }

  std::uint64_t params_fingerprint() {
    auto params = all_params();
    std::vector<const nn::Tensor<S>*> cp(params.begin(), params.end());
    return nn::params_hash<S>(cp);
  }

 private:
  RunConfig cfg_;
  EnvSpec spec_;
  ComponentSeeds seeds_;
  Encoder<S> encoder_, encoder_target_;
  Fusion<S> fusion_, fusion_target_;
  Actor<S> actor_;
  TwinCritic<S> critic_, critic_target_;
  EntropyTemperature<S> temperature_;
  std::optional<nn::Adam<S>> opt_critic_, opt_actor_, opt_temp_;
  Rng aug_rng_{0}, env_rng_{0};
  MultiViewObservation current_obs_;
  bool has_obs_ = false;

  struct CriticPlan {
    GRef loss = -1;
    // feature values for the actor pass (already shifted pipeline)
    std::vector<ad::Mat<S>> view_features;
    ad::Mat<S> merged_features;
    double unaug_value = 0;
    std::vector<double> aug_values;
    double q_value_mean = 0;
  };

  struct ActorPlan {
    GRef loss = -1;
    double unaug_value = 0;
    std::vector<double> aug_values;
    ad::Mat<S> primary_log_prob;  // (1 x B) values for the temperature loss
  };

  static void append(std::vector<nn::Tensor<S>*>& dst,
                     std::vector<nn::Tensor<S>*> src) {
    dst.insert(dst.end(), src.begin(), src.end());
  }
  static std::span<nn::Tensor<S>* const> as_span(
      const std::vector<nn::Tensor<S>*>& v) {
    return {v.data(), v.size()};
  }
  static std::vector<const nn::Tensor<S>*> to_const(
      const std::vector<nn::Tensor<S>*>& v) {
    return {v.begin(), v.end()};
  }
  std::vector<const nn::Tensor<S>*> online_const_;
  std::span<const nn::Tensor<S>* const> as_const_span(
      std::vector<nn::Tensor<S>*> v) {
    online_const_.assign(v.begin(), v.end());
    return {online_const_.data(), online_const_.size()};
  }

  static ad::Mat<S> normal_mat(int rows, int cols, Rng& rng) {
    ad::Mat<S> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r)
        m(r, c) = static_cast<S>(rng.normal());
    return m;
  }

  static double scalar(const ad::Graph<S>& g, GRef r) {
    return static_cast<double>(g.value(r)(0, 0));
  }

  double grad_norm(const ad::Graph<S>& g,
                   const std::vector<nn::Tensor<S>*>& params) const {
    double ss = 0;
    for (const nn::Tensor<S>* p : params)
      if (g.has_param(p)) {
        const auto grad = g.grad_of(p);
        ss += static_cast<double>(grad.squaredNorm());
      }
    return std::sqrt(ss);
  }

  void capture_target_grads(const ad::Graph<S>& g, UpdateTrace<S>& trace) {
    for (nn::Tensor<S>* p : critic_target_.params())
      trace.target_critic_grads.push_back(
          g.has_param(p) ? g.grad_of(p)
                         : ad::Mat<S>::Zero(p->value.rows(), p->value.cols()));
    auto enc_params = encoder_target_.params();
    append(enc_params, fusion_target_.params());
    for (nn::Tensor<S>* p : enc_params)
      trace.target_encoder_grads.push_back(
          g.has_param(p) ? g.grad_of(p)
                         : ad::Mat<S>::Zero(p->value.rows(), p->value.cols()));
  }

  // Encodes all views with one batched encoder call; returns per-view refs.
  std::vector<GRef> encode_views(ad::Graph<S>& g,
                                 const std::vector<ad::Mat<S>>& views,
                                 const Encoder<S>& enc) const {
    const int n = static_cast<int>(views.size());
    const int B = static_cast<int>(views[0].cols());
    ad::Mat<S> all(views[0].rows(), static_cast<Eigen::Index>(n) * B);
    for (int v = 0; v < n; ++v) all.middleCols(static_cast<Eigen::Index>(v) * B, B) = views[v];
    GRef feats = enc.forward(g, g.constant(all));
    std::vector<GRef> out;
    out.reserve(n);
    for (int v = 0; v < n; ++v) out.push_back(g.cols(feats, v * B, B));
    return out;
  }

  // Rowwise channel concatenation for the frame_stack strategy.
  static ad::Mat<S> stack_views(const std::vector<ad::Mat<S>>& views) {
    Eigen::Index rows = 0;
    for (const auto& v : views) rows += v.rows();
    ad::Mat<S> out(rows, views[0].cols());
    Eigen::Index at = 0;
    for (const auto& v : views) {
      out.middleRows(at, v.rows()) = v;
      at += v.rows();
    }
    return out;
  }

  GRef critic_input(ad::Graph<S>& g, GRef state, GRef proprio, GRef action) const {
    std::vector<GRef> parts{state, proprio, action};
    return g.vcat(parts);
  }

  // mean((q1 - y)^2 + (q2 - y)^2); both heads contribute squared residuals.
  GRef stream_critic_loss(ad::Graph<S>& g, const TwinCritic<S>& critic,
                          GRef state, GRef proprio, GRef action, GRef y,
                          double* q_mean_out = nullptr) const {
    auto [q1, q2] = critic.forward(g, critic_input(g, state, proprio, action));
    if (q_mean_out) *q_mean_out = static_cast<double>(g.value(q1).mean());
    GRef se = g.add(g.square(g.sub(q1, y)), g.square(g.sub(q2, y)));
    return g.mean_all(se);
  }

  // y = r + gamma * (1 - done) * (min Q_target - temperature * log pi); the
  // returned node is already detached (targets never carry gradient).
  GRef bellman_target(ad::Graph<S>& g, GRef next_state, GRef next_proprio,
                      const ad::Mat<S>& eps, const Batch<S>& batch,
                      ad::Mat<S>* y_out) const {
    std::vector<GRef> in{next_state, next_proprio};
    auto sample = actor_.sample(g, g.vcat(in), eps);
    GRef minq = critic_target_.min_q(
        g, critic_input(g, next_state, next_proprio, sample.action));
    GRef ent = g.scale(sample.log_prob, temperature_.value());
    GRef boot = g.sub(minq, ent);
    ad::Mat<S> mask = (S(cfg_.discount) * (S(1) - batch.done.array())).matrix();
    GRef y_live =
        g.add(g.mul(boot, g.constant(mask)), g.constant(batch.reward));
    if (y_out) *y_out = g.value(y_live);
    return g.detach(y_live);
  }

  // Per-view bellman target for q_mean: min over heads of per-view means.
  GRef bellman_target_qmean(ad::Graph<S>& g, std::span<const GRef> next_feats,
                            GRef next_proprio, const ad::Mat<S>& eps,
                            const Batch<S>& batch) const {
    GRef pooled = fusion_target_.mean_pool(g, next_feats);
    std::vector<GRef> in{pooled, next_proprio};
    auto sample = actor_.sample(g, g.vcat(in), eps);
    GRef q1acc = -1, q2acc = -1;
    for (GRef f : next_feats) {
      auto [q1, q2] = critic_target_.forward(
          g, critic_input(g, f, next_proprio, sample.action));
      q1acc = q1acc < 0 ? q1 : g.add(q1acc, q1);
      q2acc = q2acc < 0 ? q2 : g.add(q2acc, q2);
    }
    const S inv = S(1) / S(next_feats.size());
    GRef minq = g.min_(g.scale(q1acc, inv), g.scale(q2acc, inv));
    GRef ent = g.scale(sample.log_prob, temperature_.value());
    ad::Mat<S> mask = (S(cfg_.discount) * (S(1) - batch.done.array())).matrix();
    GRef y_live = g.add(g.mul(g.sub(minq, ent), g.constant(mask)),
                        g.constant(batch.reward));
    return g.detach(y_live);
  }

  CriticPlan build_critic_plan(ad::Graph<S>& g, const Batch<S>& batch,
                               const std::vector<ad::Mat<S>>& obs,
                               const std::vector<ad::Mat<S>>& next,
                               GRef proprio, GRef next_proprio, GRef action,
                               const ad::Mat<S>& eps_target,
                               UpdateTrace<S>* trace) {
    CriticPlan plan;
    const int n = batch.n_views;
    const double alpha = cfg_.mad_alpha;

    switch (cfg_.training_mode) {
      case TrainingMode::kMad: {
        auto feats = encode_views(g, obs, encoder_);
        GRef merged = fusion_.merge(g, feats);
        auto tfeats = encode_views(g, next, encoder_target_);
        GRef merged_next = fusion_target_.merge(g, tfeats);
        ad::Mat<S> y_val;
        GRef y = bellman_target(g, merged_next, next_proprio, eps_target,
                                batch, &y_val);
        GRef unaug = stream_critic_loss(g, critic_, merged, proprio, action, y,
                                        &plan.q_value_mean);
        plan.unaug_value = scalar(g, unaug);
        GRef loss = g.scale(unaug, S(alpha));
        GRef aug_acc = -1;
        for (int i = 0; i < n; ++i) {
          GRef li = stream_critic_loss(g, critic_, feats[i], proprio, action, y);
          plan.aug_values.push_back(scalar(g, li));
          aug_acc = aug_acc < 0 ? li : g.add(aug_acc, li);
          if (trace) {
            trace->per_stream_targets.push_back(g.value(y));
            trace->critic_stream_states.push_back(g.value(feats[i]));
          }
        }
        if (trace) {
          trace->target_values = y_val;
          trace->per_stream_targets.insert(trace->per_stream_targets.begin(),
                                           g.value(y));
          trace->critic_stream_states.insert(
              trace->critic_stream_states.begin(), g.value(merged));
        }
        loss = g.add(loss, g.scale(aug_acc, S((1.0 - alpha) / n)));
        plan.loss = loss;
        plan.merged_features = g.value(merged);
        for (int i = 0; i < n; ++i)
          plan.view_features.push_back(g.value(feats[i]));
        break;
      }
      case TrainingMode::kMergedOnly: {
        if (cfg_.merge_strategy == MergeStrategy::kFrameStack) {
          ad::Mat<S> stacked = stack_views(obs);
          ad::Mat<S> stacked_next = stack_views(next);
          GRef merged = encoder_.forward(g, g.constant(stacked));
          GRef merged_next =
              encoder_target_.forward(g, g.constant(stacked_next));
          GRef y = bellman_target(g, merged_next, next_proprio, eps_target,
                                  batch, nullptr);
          plan.loss = stream_critic_loss(g, critic_, merged, proprio, action,
                                         y, &plan.q_value_mean);
          plan.unaug_value = scalar(g, plan.loss);
          plan.merged_features = g.value(merged);
        } else if (cfg_.merge_strategy == MergeStrategy::kQMean) {
          auto feats = encode_views(g, obs, encoder_);
          auto tfeats = encode_views(g, next, encoder_target_);
          GRef y = bellman_target_qmean(g, tfeats, next_proprio, eps_target,
                                        batch);
          GRef q1acc = -1, q2acc = -1;
          for (GRef f : feats) {
            auto [q1, q2] =
                critic_.forward(g, critic_input(g, f, proprio, action));
            q1acc = q1acc < 0 ? q1 : g.add(q1acc, q1);
            q2acc = q2acc < 0 ? q2 : g.add(q2acc, q2);
          }
          const S inv = S(1) / S(n);
          GRef q1m = g.scale(q1acc, inv), q2m = g.scale(q2acc, inv);
          plan.q_value_mean = static_cast<double>(g.value(q1m).mean());
          GRef se = g.add(g.square(g.sub(q1m, y)), g.square(g.sub(q2m, y)));
          plan.loss = g.mean_all(se);
          plan.unaug_value = scalar(g, plan.loss);
          GRef pooled = fusion_.mean_pool(g, feats);
          plan.merged_features = g.value(pooled);
          for (int i = 0; i < n; ++i)
            plan.view_features.push_back(g.value(feats[i]));
        } else {
          auto feats = encode_views(g, obs, encoder_);
          GRef merged = fusion_.merge(g, feats);
          auto tfeats = encode_views(g, next, encoder_target_);
          GRef merged_next = fusion_target_.merge(g, tfeats);
          GRef y = bellman_target(g, merged_next, next_proprio, eps_target,
                                  batch, nullptr);
          plan.loss = stream_critic_loss(g, critic_, merged, proprio, action,
                                         y, &plan.q_value_mean);
          plan.unaug_value = scalar(g, plan.loss);
          plan.merged_features = g.value(merged);
        }
        break;
      }
      case TrainingMode::kSingularOnly: {
        auto feats = encode_views(g, obs, encoder_);
        auto tfeats = encode_views(g, next, encoder_target_);
        GRef acc = -1;
        for (int i = 0; i < n; ++i) {
          GRef yi = bellman_target(g, tfeats[i], next_proprio, eps_target,
                                   batch, nullptr);
          double qm = 0;
          GRef li = stream_critic_loss(g, critic_, feats[i], proprio, action,
                                       yi, i == 0 ? &plan.q_value_mean : &qm);
          plan.aug_values.push_back(scalar(g, li));
          acc = acc < 0 ? li : g.add(acc, li);
        }
        plan.loss = g.scale(acc, S(1) / S(n));
        for (int i = 0; i < n; ++i)
          plan.view_features.push_back(g.value(feats[i]));
        plan.merged_features = plan.view_features[0];
        break;
      }
      case TrainingMode::kNaiveBoth: {
        // Naive co-equal training: every stream gets its own target,
        // recomputed from that stream's augmented features.
        auto feats = encode_views(g, obs, encoder_);
        GRef merged = fusion_.merge(g, feats);
        auto tfeats = encode_views(g, next, encoder_target_);
        GRef merged_next = fusion_target_.merge(g, tfeats);
        GRef y_merged = bellman_target(g, merged_next, next_proprio,
                                       eps_target, batch, nullptr);
        GRef loss = stream_critic_loss(g, critic_, merged, proprio, action,
                                       y_merged, &plan.q_value_mean);
        plan.unaug_value = scalar(g, loss);
        for (int i = 0; i < n; ++i) {
          GRef yi = bellman_target(g, tfeats[i], next_proprio, eps_target,
                                   batch, nullptr);
          GRef li =
              stream_critic_loss(g, critic_, feats[i], proprio, action, yi);
          plan.aug_values.push_back(scalar(g, li));
          loss = g.add(loss, li);
        }
        plan.loss = loss;
        plan.merged_features = g.value(merged);
        for (int i = 0; i < n; ++i)
          plan.view_features.push_back(g.value(feats[i]));
        break;
      }
      case TrainingMode::kSingleCamera: {
        const int k = cfg_.single_view_index;
        std::vector<ad::Mat<S>> one{obs[k]}, one_next{next[k]};
        auto feats = encode_views(g, one, encoder_);
        auto tfeats = encode_views(g, one_next, encoder_target_);
        GRef y = bellman_target(g, tfeats[0], next_proprio, eps_target, batch,
                                nullptr);
        plan.loss = stream_critic_loss(g, critic_, feats[0], proprio, action,
                                       y, &plan.q_value_mean);
        plan.unaug_value = scalar(g, plan.loss);
        plan.merged_features = g.value(feats[0]);
        break;
      }
    }
    return plan;
  }

  // One actor stream: policy fed `policy_input`, Q evaluated at `q_state`.
  GRef actor_stream_term(ad::Graph<S>& g, GRef policy_input, GRef q_state,
                         GRef proprio, const ad::Mat<S>& eps,
                         ad::Mat<S>* log_prob_out) {
    std::vector<GRef> pin{policy_input, proprio};
    auto sample = actor_.sample(g, g.vcat(pin), eps);
    GRef q = critic_.min_q(g, critic_input(g, q_state, proprio, sample.action));
    GRef term = g.mean_all(
        g.sub(g.scale(sample.log_prob, temperature_.value()), q));
    if (log_prob_out) *log_prob_out = g.value(sample.log_prob);
    return term;
  }

  ActorPlan build_actor_plan(ad::Graph<S>& ga, const ad::Graph<S>& g,
                             const CriticPlan& plan, const Batch<S>& batch,
                             const ad::Mat<S>& eps_actor,
                             UpdateTrace<S>* trace) {
    (void)g;
    ActorPlan out;
    const int n = batch.n_views;
    const double alpha = cfg_.mad_alpha;
    GRef proprio = ga.constant(batch.proprio);

    auto record = [&](GRef pol_in, GRef q_state) {
      if (trace) {
        trace->actor_policy_inputs.push_back(ga.value(pol_in));
        trace->actor_q_states.push_back(ga.value(q_state));
      }
    };

    switch (cfg_.training_mode) {
      case TrainingMode::kMad: {
        GRef merged = ga.constant(plan.merged_features);
        GRef unaug = actor_stream_term(ga, merged, merged, proprio, eps_actor,
                                       &out.primary_log_prob);
        record(merged, merged);
        out.unaug_value = scalar(ga, unaug);
        GRef loss = ga.scale(unaug, S(alpha));
        GRef acc = -1;
        for (int i = 0; i < n; ++i) {
          GRef vi = ga.constant(plan.view_features[i]);
          // Q state stays the merged feature; only the policy input varies.
          GRef ti = actor_stream_term(ga, vi, merged, proprio, eps_actor,
                                      nullptr);
          record(vi, merged);
          out.aug_values.push_back(scalar(ga, ti));
          acc = acc < 0 ? ti : ga.add(acc, ti);
        }
        out.loss = ga.add(loss, ga.scale(acc, S((1.0 - alpha) / n)));
        break;
      }
      case TrainingMode::kMergedOnly:
      case TrainingMode::kSingleCamera: {
        if (cfg_.merge_strategy == MergeStrategy::kQMean &&
            cfg_.training_mode == TrainingMode::kMergedOnly) {
          GRef pooled = ga.constant(plan.merged_features);
          std::vector<GRef> pin{pooled, proprio};
          auto sample = actor_.sample(ga, ga.vcat(pin), eps_actor);
          out.primary_log_prob = ga.value(sample.log_prob);
          GRef q1acc = -1, q2acc = -1;
          for (int i = 0; i < n; ++i) {
            GRef vi = ga.constant(plan.view_features[i]);
            auto [q1, q2] = critic_.forward(
                ga, critic_input(ga, vi, proprio, sample.action));
            q1acc = q1acc < 0 ? q1 : ga.add(q1acc, q1);
            q2acc = q2acc < 0 ? q2 : ga.add(q2acc, q2);
          }
          const S inv = S(1) / S(n);
          GRef q = ga.min_(ga.scale(q1acc, inv), ga.scale(q2acc, inv));
          out.loss = ga.mean_all(ga.sub(
              ga.scale(sample.log_prob, temperature_.value()), q));
          record(pooled, pooled);
          out.unaug_value = scalar(ga, out.loss);
        } else {
          GRef merged = ga.constant(plan.merged_features);
          out.loss = actor_stream_term(ga, merged, merged, proprio, eps_actor,
                                       &out.primary_log_prob);
          record(merged, merged);
          out.unaug_value = scalar(ga, out.loss);
        }
        break;
      }
      case TrainingMode::kSingularOnly: {
        GRef acc = -1;
        std::vector<ad::Mat<S>> logps;
        for (int i = 0; i < n; ++i) {
          GRef vi = ga.constant(plan.view_features[i]);
          ad::Mat<S> lp;
          GRef ti = actor_stream_term(ga, vi, vi, proprio, eps_actor, &lp);
          record(vi, vi);
          logps.push_back(lp);
          out.aug_values.push_back(scalar(ga, ti));
          acc = acc < 0 ? ti : ga.add(acc, ti);
        }
        out.loss = ga.scale(acc, S(1) / S(n));
        // temperature stream: mean over views
        ad::Mat<S> lp_mean = logps[0];
        for (int i = 1; i < n; ++i) lp_mean += logps[i];
        out.primary_log_prob = lp_mean / S(n);
        break;
      }
      case TrainingMode::kNaiveBoth: {
        GRef merged = ga.constant(plan.merged_features);
        GRef loss = actor_stream_term(ga, merged, merged, proprio, eps_actor,
                                      &out.primary_log_prob);
        record(merged, merged);
        out.unaug_value = scalar(ga, loss);
        for (int i = 0; i < n; ++i) {
          GRef vi = ga.constant(plan.view_features[i]);
          GRef ti = actor_stream_term(ga, vi, vi, proprio, eps_actor, nullptr);
          record(vi, vi);
          out.aug_values.push_back(scalar(ga, ti));
          loss = ga.add(loss, ti);
        }
        out.loss = loss;
        break;
      }
    }
    return out;
  }

  // Encodes only the requested views and fuses them.
  GRef encode_subset(ad::Graph<S>& g, const MultiViewObservation& observation,
                     std::span<const int> subset) {
    if (static_cast<int>(observation.views.size()) != spec_.n_views)
      throw ValidationError("observation view count mismatch");
    if (cfg_.merge_strategy == MergeStrategy::kFrameStack) {
      std::vector<ad::Mat<S>> mats;
      for (int i = 0; i < spec_.n_views; ++i)
        mats.push_back(view_to_mat(observation.views[i]));
      return encoder_.forward(g, g.constant(stack_views(mats)));
    }
    std::vector<ad::Mat<S>> mats;
    for (int i : subset) mats.push_back(view_to_mat(observation.views[i]));
    auto feats = encode_views(g, mats, encoder_);
    if (cfg_.training_mode == TrainingMode::kSingleCamera)
      return feats.size() == 1 ? feats[0] : fusion_.merge(g, feats);
    if (cfg_.merge_strategy == MergeStrategy::kQMean)
      return fusion_.mean_pool(g, feats);
    if (cfg_.merge_strategy == MergeStrategy::kConcat &&
        static_cast<int>(subset.size()) != spec_.n_views)
      throw CapabilityError("merge strategy 'concat' cannot fuse a partial subset");
    return fusion_.merge(g, feats);
  }

  static ad::Mat<S> view_to_mat(const Image& img) {
    ad::Mat<S> m(static_cast<Eigen::Index>(img.size()), 1);
    for (std::size_t i = 0; i < img.size(); ++i)
      m(static_cast<Eigen::Index>(i), 0) = static_cast<S>(img.data[i]);
    return m;
  }
};

}  // namespace madview
