#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "madview/config.hpp"
#include "madview/nn.hpp"

namespace madview {

using ad::ConvShape;
using ad::Graph;
using ad::Mat;
using nn::Tensor;

template <class S>
using Ref = typename Graph<S>::Ref;

// Shared per-view image encoder: conv trunk, linear projection to
// feature_dim, layer norm, tanh. One parameter set serves every view.
template <class S>
class Encoder {
 public:
  static Encoder build(EncoderPreset preset, int in_channels, int h, int w,
                       int feature_dim, Rng& rng) {
    Encoder e;
    e.in_channels_ = in_channels;
    e.in_h_ = h;
    e.in_w_ = w;
    e.feature_dim_ = feature_dim;
    std::vector<std::pair<int, std::pair<int, int>>> layers;  // out_c,(k,stride)
    if (preset == EncoderPreset::kDqn84) {
      layers = {{32, {8, 4}}, {64, {4, 2}}, {64, {3, 1}}};
    } else {
      layers = {{16, {4, 2}}, {32, {3, 2}}};
    }
    int c = in_channels, ch = h, cw = w;
    int idx = 0;
    for (auto& [out_c, ks] : layers) {
      ConvShape cs{c, ch, cw, out_c, ks.first, ks.second};
      if (cs.out_h() < 1 || cs.out_w() < 1)
        throw ValidationError("encoder preset does not fit input resolution " +
                              std::to_string(h) + "x" + std::to_string(w));
      e.convs_.emplace_back();
      e.convs_.back().init(cs, rng, "encoder.conv" + std::to_string(idx++));
      c = out_c;
      ch = cs.out_h();
      cw = cs.out_w();
    }
    e.conv_out_dim_ = c * ch * cw;
    e.proj_.init(e.conv_out_dim_, feature_dim, rng, "encoder.proj");
    e.ln_.init(feature_dim, "encoder.ln");
    return e;
  }

  // images: (in_channels*h*w x B), values in [0,1].
  Ref<S> forward(Graph<S>& g, Ref<S> images) const {
    if (g.value(images).rows() != in_channels_ * in_h_ * in_w_)
      throw ValidationError("encoder input shape mismatch: expected " +
                            std::to_string(in_channels_ * in_h_ * in_w_) +
                            " rows, got " +
                            std::to_string(g.value(images).rows()));
    Ref<S> x = images;
    for (const auto& conv : convs_) x = g.relu(conv.forward(g, x));
    return g.tanh_(ln_.forward(g, proj_.forward(g, x)));
  }

  Mat<S> encode(const Mat<S>& images) const {
    Graph<S> g;
    return g.value(forward(g, g.constant(images)));
  }

  std::vector<Tensor<S>*> params() {
    std::vector<Tensor<S>*> out;
    for (auto& cv : convs_) cv.collect(out);
    proj_.collect(out);
    ln_.collect(out);
    return out;
  }

  std::vector<const Tensor<S>*> params() const {
    auto mut = const_cast<Encoder*>(this)->params();
    return {mut.begin(), mut.end()};
  }

  int feature_dim() const { return feature_dim_; }
  int in_channels() const { return in_channels_; }
  int in_h() const { return in_h_; }
  int in_w() const { return in_w_; }

 private:
  std::vector<nn::Conv<S>> convs_;
  nn::Linear<S> proj_;
  nn::LayerNorm<S> ln_;
  int in_channels_ = 0, in_h_ = 0, in_w_ = 0;
  int feature_dim_ = 0, conv_out_dim_ = 0;
};

template <class S>
struct ActorSample {
  Ref<S> action;
  Ref<S> log_prob;  // (1 x B), includes the tanh squashing correction
};

// Squashed-Gaussian policy head. log_std is kept inside the configured bounds
// by a smooth tanh mapping; actions are tanh-squashed into (-1, 1).
template <class S>
class Actor {
 public:
  static Actor build(int input_dim, int action_dim, int hidden, S log_std_low,
                     S log_std_high, Rng& rng) {
    Actor a;
    a.input_dim_ = input_dim;
    a.action_dim_ = action_dim;
    a.log_std_low_ = log_std_low;
    a.log_std_high_ = log_std_high;
    a.l1_.init(input_dim, hidden, rng, "actor.l1");
    a.l2_.init(hidden, hidden, rng, "actor.l2");
    a.head_.init(hidden, 2 * action_dim, rng, "actor.head");
    return a;
  }

  // Reparameterized sample; `noise` holds standard-normal draws (A x B).
  ActorSample<S> sample(Graph<S>& g, Ref<S> input, const Mat<S>& noise) const {
    auto [mu, log_std] = heads(g, input);
    Ref<S> std_ = g.exp_(log_std);
    Ref<S> eps = g.constant(noise);
    Ref<S> u = g.add(mu, g.mul(std_, eps));
    Ref<S> action = g.tanh_(u);
    // Gaussian log density; (u - mu) / std is routed through the graph so the
    // total derivative w.r.t. the policy parameters is exact.
    Ref<S> z = g.div(g.sub(u, mu), std_);
    Ref<S> log_n = g.neg(g.add_scalar(g.add(g.scale(g.square(z), S(0.5)), log_std),
                                      S(0.5) * std::log(S(2) * S(M_PI))));
    Ref<S> sq = g.log_(g.add_scalar(g.scale(g.square(action), S(-1)),
                                    S(1) + S(1e-6)));
    return {action, g.colsum(g.sub(log_n, sq))};
  }

  Ref<S> mean_action(Graph<S>& g, Ref<S> input) const {
    auto [mu, log_std] = heads(g, input);
    (void)log_std;
    return g.tanh_(mu);
  }

  std::pair<Ref<S>, Ref<S>> heads(Graph<S>& g, Ref<S> input) const {
    if (g.value(input).rows() != input_dim_)
      throw ValidationError("actor input dimension mismatch");
    Ref<S> h = g.relu(l2_.forward(g, g.relu(l1_.forward(g, input))));
    Ref<S> out = head_.forward(g, h);
    Ref<S> mu = g.rows(out, 0, action_dim_);
    Ref<S> raw = g.rows(out, action_dim_, action_dim_);
    // smooth clamp into [low, high]
    Ref<S> unit = g.add_scalar(g.tanh_(raw), S(1));
    Ref<S> log_std = g.add_scalar(
        g.scale(unit, S(0.5) * (log_std_high_ - log_std_low_)), log_std_low_);
    return {mu, log_std};
  }

  std::vector<Tensor<S>*> params() {
    std::vector<Tensor<S>*> out;
    l1_.collect(out);
    l2_.collect(out);
    head_.collect(out);
    return out;
  }

  int input_dim() const { return input_dim_; }
  int action_dim() const { return action_dim_; }

 private:
  nn::Linear<S> l1_, l2_, head_;
  int input_dim_ = 0, action_dim_ = 0;
  S log_std_low_ = S(-10), log_std_high_ = S(2);
};

// Two independent Q heads over [state features; proprio; action].
template <class S>
class TwinCritic {
 public:
  static TwinCritic build(int input_dim, int hidden, Rng& rng) {
    TwinCritic c;
    c.input_dim_ = input_dim;
    c.q1_l1_.init(input_dim, hidden, rng, "critic.q1.l1");
    c.q1_l2_.init(hidden, hidden, rng, "critic.q1.l2");
    c.q1_out_.init(hidden, 1, rng, "critic.q1.out");
    c.q2_l1_.init(input_dim, hidden, rng, "critic.q2.l1");
    c.q2_l2_.init(hidden, hidden, rng, "critic.q2.l2");
    c.q2_out_.init(hidden, 1, rng, "critic.q2.out");
    return c;
  }

  std::pair<Ref<S>, Ref<S>> forward(Graph<S>& g, Ref<S> input) const {
    if (g.value(input).rows() != input_dim_)
      throw ValidationError("critic input dimension mismatch");
    Ref<S> h1 = g.relu(q1_l2_.forward(g, g.relu(q1_l1_.forward(g, input))));
    Ref<S> h2 = g.relu(q2_l2_.forward(g, g.relu(q2_l1_.forward(g, input))));
    return {q1_out_.forward(g, h1), q2_out_.forward(g, h2)};
  }

  Ref<S> min_q(Graph<S>& g, Ref<S> input) const {
    auto [q1, q2] = forward(g, input);
    return g.min_(q1, q2);
  }

  std::vector<Tensor<S>*> params() {
    std::vector<Tensor<S>*> out;
    q1_l1_.collect(out);
    q1_l2_.collect(out);
    q1_out_.collect(out);
    q2_l1_.collect(out);
    q2_l2_.collect(out);
    q2_out_.collect(out);
    return out;
  }

  int input_dim() const { return input_dim_; }

 private:
  nn::Linear<S> q1_l1_, q1_l2_, q1_out_;
  nn::Linear<S> q2_l1_, q2_l2_, q2_out_;
  int input_dim_ = 0;
};

// Auto-tuned entropy temperature, stored as log(temperature) so it stays
// positive. Target entropy follows the -action_dim convention.
template <class S>
struct EntropyTemperature {
  Tensor<S> log_temp;

  void init(S init_temperature) {
    log_temp.name = "temperature.log";
    log_temp.value = Mat<S>::Constant(1, 1, std::log(init_temperature));
  }

  S value() const { return std::exp(log_temp.value(0, 0)); }
};

// Standard auto-tuning objective for the entropy temperature:
//   L(log_t) = mean( exp(log_t) * (-log_pi - target_entropy) )
// with log-probabilities held constant. Stationary when the policy entropy
// estimate -mean(log_pi) equals target_entropy; below-target entropy drives
// the temperature up.
template <class S>
Ref<S> temperature_loss(Graph<S>& g, Ref<S> log_temp_node,
                        const Mat<S>& log_probs, S target_entropy) {
  Mat<S> centred = (-log_probs.array() - target_entropy).matrix();
  return g.mean_all(
      g.mul_scalar_node(g.constant(centred), g.exp_(log_temp_node)));
}

// ---- random shift augmentation ----

struct ShiftOffsets {
  std::vector<std::pair<int, int>> dxy;  // per batch element (dx, dy)
};

// One offset pair per batch element, uniform over the integer square
// [-pad, pad]^2. The caller applies the same offsets to every view.
inline ShiftOffsets draw_shift_offsets(int batch, int pad, Rng& rng) {
  if (pad < 0) throw ValidationError("shift pad must be >= 0");
  ShiftOffsets off;
  off.dxy.resize(batch);
  for (int i = 0; i < batch; ++i) {
    const int dx = rng.uniform_int(2 * pad + 1) - pad;
    const int dy = rng.uniform_int(2 * pad + 1) - pad;
    off.dxy[i] = {dx, dy};
  }
  return off;
}

// Translates every channel plane of each batch column by that column's
// offset, replicating border pixels. Zero offsets copy the input bit-exactly.
template <class S>
Mat<S> shift_images(const Mat<S>& images, const ShiftOffsets& offsets,
                    int channels, int h, int w) {
  if (images.rows() != static_cast<Eigen::Index>(channels) * h * w)
    throw ValidationError("shift_images: image plane size mismatch");
  if (images.cols() != static_cast<Eigen::Index>(offsets.dxy.size()))
    throw ValidationError("shift_images: offsets count != batch size");
  Mat<S> out(images.rows(), images.cols());
  for (Eigen::Index b = 0; b < images.cols(); ++b) {
    const auto [dx, dy] = offsets.dxy[b];
    const S* src = images.col(b).data();
    S* dst = out.col(b).data();
    for (int c = 0; c < channels; ++c) {
      const S* plane = src + static_cast<std::ptrdiff_t>(c) * h * w;
      S* po = dst + static_cast<std::ptrdiff_t>(c) * h * w;
      for (int y = 0; y < h; ++y) {
        const int sy = std::clamp(y - dy, 0, h - 1);
        for (int x = 0; x < w; ++x) {
          const int sx = std::clamp(x - dx, 0, w - 1);
          po[y * w + x] = plane[sy * w + sx];
        }
      }
    }
  }
  return out;
}

}  // namespace madview
