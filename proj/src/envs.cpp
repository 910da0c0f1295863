#include "madview/envs.hpp"

#include <algorithm>
#include <cmath>

namespace madview {

namespace {

// Fixed pseudo-texture for occluded views; depends only on pixel position.
float occlusion_texture(int c, int y, int x) {
  return 0.45f + 0.25f * std::sin(0.6f * static_cast<float>(y + 2 * x) +
                                  1.7f * static_cast<float>(c));
}

void rotate_quarter(int rot, float u, float v, float& ox, float& oy) {
  switch (rot & 3) {
    case 0: ox = u; oy = v; break;
    case 1: ox = -v; oy = u; break;
    case 2: ox = -u; oy = -v; break;
    default: ox = v; oy = -u; break;
  }
}

}  // namespace

TriViewReach::TriViewReach(TriViewVariant variant, const EnvOptions& options)
    : variant_(variant), options_(options) {
  if (options_.frame_stack < 1)
    throw ValidationError("frame_stack must be >= 1");
  if (options_.action_repeat < 1)
    throw ValidationError("action_repeat must be >= 1");
  if (options_.image_h <= 0 || options_.image_w <= 0)
    throw ValidationError("image size must be positive");

  ViewGeometry top;         // identity top-down view
  ViewGeometry rotated;     // rotated 90 degrees, channels permuted
  rotated.rot_quarter = 1;
  rotated.channel_perm = {2, 0, 1};
  ViewGeometry shifted;     // translated and zoomed out
  shifted.cx = 0.15f;
  shifted.cy = 0.15f;
  shifted.half = 1.6f;

  switch (variant_) {
    case TriViewVariant::kPlain:
      views_ = {top, rotated, shifted};
      break;
    case TriViewVariant::kOccluded: {
      ViewGeometry occ1 = rotated, occ2 = shifted;
      occ1.mode = ViewGeometry::Mode::kOccluded;
      occ2.mode = ViewGeometry::Mode::kOccluded;
      views_ = {top, occ1, occ2};
      break;
    }
    case TriViewVariant::kRgbd: {
      ViewGeometry depth = top;
      depth.mode = ViewGeometry::Mode::kDepth;
      views_ = {top, depth};
      break;
    }
  }
  if (!options_.native_hw.empty() &&
      options_.native_hw.size() != views_.size())
    throw ValidationError("native_hw must list one resolution per view");
  stacks_.resize(views_.size());
}

EnvSpec TriViewReach::spec() const {
  EnvSpec s;
  s.action_dim = 2;
  s.proprio_dim = 2;
  s.episode_length = kEpisodeLength;
  s.n_views = static_cast<int>(views_.size());
  for (const auto& v : views_) {
    switch (v.mode) {
      case ViewGeometry::Mode::kRgb:
        s.view_descriptions.push_back(
            v.rot_quarter ? "rotated colour view"
                          : (v.half > 1.5f ? "translated zoomed-out colour view"
                                           : "top-down colour view"));
        break;
      case ViewGeometry::Mode::kDepth:
        s.view_descriptions.push_back("top-down distance-coded view");
        break;
      case ViewGeometry::Mode::kOccluded:
        s.view_descriptions.push_back("occluded view (uninformative texture)");
        break;
    }
  }
  return s;
}

const ViewGeometry& TriViewReach::view_geometry(int view) const {
  if (view < 0 || view >= static_cast<int>(views_.size()))
    throw ValidationError("view index out of range");
  return views_[view];
}

Image TriViewReach::render_view(int view) const {
  const ViewGeometry& vg = views_[view];
  int nh = options_.image_h, nw = options_.image_w;
  if (!options_.native_hw.empty()) {
    nh = options_.native_hw[view].first;
    nw = options_.native_hw[view].second;
  }
  Image img(3, nh, nw);
  if (vg.mode == ViewGeometry::Mode::kOccluded) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < nh; ++y)
        for (int x = 0; x < nw; ++x) img.at(c, y, x) = occlusion_texture(c, y, x);
    return img;
  }
  const float inv_sigma2 = 1.0f / (2.0f * kBlobSigma * kBlobSigma);
  // half a pixel in world units, for anti-aliased disc edges
  const float pw = vg.half * 2.0f / static_cast<float>(std::min(nh, nw));
  for (int y = 0; y < nh; ++y) {
    const float v = (1.0f - 2.0f * (static_cast<float>(y) + 0.5f) /
                                static_cast<float>(nh)) *
                    vg.half;
    for (int x = 0; x < nw; ++x) {
      const float u = (2.0f * (static_cast<float>(x) + 0.5f) /
                           static_cast<float>(nw) -
                       1.0f) *
                      vg.half;
      float wx, wy;
      rotate_quarter(vg.rot_quarter, u, v, wx, wy);
      wx += vg.cx;
      wy += vg.cy;
      const float da = std::hypot(wx - agent_.x(), wy - agent_.y());
      const float dg = std::hypot(wx - goal_.x(), wy - goal_.y());
      if (vg.mode == ViewGeometry::Mode::kRgb) {
        const float ia = std::exp(-da * da * inv_sigma2);
        const float ig = std::exp(-dg * dg * inv_sigma2);
        float content[3] = {ia, ig, 0.f};
        for (int c = 0; c < 3; ++c)
          img.at(c, y, x) = content[vg.channel_perm[c]];
      } else {  // depth: constant plateau per object, nearer object wins
        const float ia =
            std::clamp(0.5f + (kDiscRadius - da) / pw, 0.f, 1.f) * 0.95f;
        const float ig =
            std::clamp(0.5f + (kDiscRadius - dg) / pw, 0.f, 1.f) * 0.55f;
        const float d = std::max(ia, ig);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = d;
      }
    }
  }
  return img;
}

Image TriViewReach::processed_frame(int view) const {
  Image img = render_view(view);
  if (img.h != options_.image_h || img.w != options_.image_w)
    img = resize_bilinear(img, options_.image_h, options_.image_w);
  quantize_u8(img);
  return img;
}

std::vector<Image> TriViewReach::render_views() const {
  std::vector<Image> out;
  out.reserve(views_.size());
  for (int i = 0; i < static_cast<int>(views_.size()); ++i)
    out.push_back(render_view(i));
  return out;
}

void TriViewReach::push_frames() {
  for (int i = 0; i < static_cast<int>(views_.size()); ++i) {
    stacks_[i].push_back(processed_frame(i));
    while (static_cast<int>(stacks_[i].size()) > options_.frame_stack)
      stacks_[i].pop_front();
  }
}

MultiViewObservation TriViewReach::observation() const {
  MultiViewObservation obs;
  obs.t = t_;
  obs.proprio = Eigen::Vector2f(velocity_);
  obs.views.reserve(views_.size());
  for (const auto& stack : stacks_) {
    Image stacked(3 * options_.frame_stack, options_.image_h, options_.image_w);
    std::size_t at = 0;
    for (const Image& frame : stack) {
      std::copy(frame.data.begin(), frame.data.end(), stacked.data.begin() + at);
      at += frame.data.size();
    }
    obs.views.push_back(std::move(stacked));
  }
  return obs;
}

MultiViewObservation TriViewReach::reset(std::optional<std::uint64_t> seed) {
  if (seed.has_value()) rng_ = Rng(*seed);
  agent_.x() = static_cast<float>(rng_.uniform(-kSpawnHalf, kSpawnHalf));
  agent_.y() = static_cast<float>(rng_.uniform(-kSpawnHalf, kSpawnHalf));
  goal_.x() = static_cast<float>(rng_.uniform(-kSpawnHalf, kSpawnHalf));
  goal_.y() = static_cast<float>(rng_.uniform(-kSpawnHalf, kSpawnHalf));
  velocity_.setZero();
  t_ = 0;
  needs_reset_ = false;
  for (auto& stack : stacks_) stack.clear();
  // fill every stack slot with the initial frame
  for (int k = 0; k < options_.frame_stack; ++k) push_frames();
  return observation();
}

StepResult TriViewReach::step(std::span<const float> action) {
  if (needs_reset_)
    throw UsageError("step() called on a finished episode; call reset() first");
  if (static_cast<int>(action.size()) != 2)
    throw ValidationError("action must have dimension 2");
  Eigen::Vector2f a(std::clamp(action[0], -1.f, 1.f),
                    std::clamp(action[1], -1.f, 1.f));
  StepResult result;
  for (int rep = 0; rep < options_.action_repeat; ++rep) {
    const Eigen::Vector2f before = agent_;
    agent_ = (agent_ + kSpeed * a)
                 .cwiseMax(-kArenaHalf)
                 .cwiseMin(kArenaHalf);
    velocity_ = (agent_ - before) / kSpeed;
    const float dist = distance_to_goal();
    const bool hit = dist < kSuccessRadius;
    result.reward += -dist + (hit ? kSuccessBonus : 0.f);
    result.success = result.success || hit;
  }
  ++t_;
  result.truncated = t_ >= kEpisodeLength;
  result.terminated = false;
  needs_reset_ = result.truncated || result.terminated;
  push_frames();
  result.observation = observation();
  return result;
}

void TriViewReach::set_state(const Eigen::Vector2f& agent,
                             const Eigen::Vector2f& goal) {
  agent_ = agent;
  goal_ = goal;
  velocity_.setZero();
  needs_reset_ = false;
  t_ = 0;
  for (auto& stack : stacks_) stack.clear();
  for (int k = 0; k < options_.frame_stack; ++k) push_frames();
}

std::unique_ptr<Env> make_env(const std::string& id,
                              const EnvOptions& options) {
  if (id == "triview-reach")
    return std::make_unique<TriViewReach>(TriViewVariant::kPlain, options);
  if (id == "triview-reach-occluded")
    return std::make_unique<TriViewReach>(TriViewVariant::kOccluded, options);
  if (id == "triview-reach-rgbd")
    return std::make_unique<TriViewReach>(TriViewVariant::kRgbd, options);
  throw ConfigError("unknown environment id '" + id + "'");
}

std::vector<std::string> registered_envs() {
  return {"triview-reach", "triview-reach-occluded", "triview-reach-rgbd"};
}

}  // namespace madview
