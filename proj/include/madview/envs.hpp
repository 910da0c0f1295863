#pragma once

#include <Eigen/Core>
#include <array>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "madview/image.hpp"
#include "madview/rng.hpp"

namespace madview {

// Per-view frame-stacked image tensors plus proprioceptive state at one
// timestep. Every view shares the post-resize shape (frame_stack*3, H, W);
// at episode start all stack slots hold the initial frame, oldest first.
struct MultiViewObservation {
  std::vector<Image> views;
  Eigen::VectorXf proprio;
  int t = 0;
};

struct StepResult {
  MultiViewObservation observation;
  double reward = 0.0;
  bool success = false;     // task metric; episode may continue after success
  bool terminated = false;  // MDP termination
  bool truncated = false;   // time limit only
};

struct EnvSpec {
  int action_dim = 0;
  int proprio_dim = 0;
  int episode_length = 0;
  int n_views = 0;
  std::vector<std::string> view_descriptions;
};

// Environment interface. Actions live in the box [-1,1]^action_dim; values
// outside are clipped. Identical (seed, action sequence) pairs must produce
// bit-identical observation/reward/success trajectories. Third-party adapters
// implement this interface out-of-tree and register a factory.
class Env {
 public:
  virtual ~Env() = default;
  virtual EnvSpec spec() const = 0;
  virtual MultiViewObservation reset(std::optional<std::uint64_t> seed) = 0;
  virtual StepResult step(std::span<const float> action) = 0;
};

struct EnvOptions {
  int image_h = 32;
  int image_w = 32;
  int frame_stack = 3;
  int action_repeat = 1;
  // Optional per-view native render resolutions; views rendered at a
  // different native size are resized (bilinear) to (image_h, image_w).
  std::vector<std::pair<int, int>> native_hw;
};

enum class TriViewVariant { kPlain, kOccluded, kRgbd };

// How one camera view maps world coordinates to pixels.
struct ViewGeometry {
  enum class Mode { kRgb, kDepth, kOccluded };
  float cx = 0.f, cy = 0.f;   // world centre of the view window
  float half = 1.3f;          // world half-extent of the window
  int rot_quarter = 0;        // camera rotation in 90-degree steps
  std::array<int, 3> channel_perm = {0, 1, 2};
  Mode mode = Mode::kRgb;
};

// Desk-scale multi-view reach task: a velocity-controlled point agent in the
// arena [-1,1]^2 must reach a goal. Shaped reward is -distance plus a success
// bonus inside the success radius. Each view is an information-preserving
// transform of the same scene so any single view suffices to solve the task;
// the occluded variant replaces two views with a fixed uninformative texture
// and the rgbd variant pairs a colour-coded and a distance-coded view.
class TriViewReach : public Env {
 public:
  static constexpr float kArenaHalf = 1.0f;
  static constexpr float kSpawnHalf = 0.8f;
  static constexpr float kSpeed = 0.15f;
  static constexpr float kSuccessRadius = 0.1f;
  static constexpr float kSuccessBonus = 1.0f;
  static constexpr float kBlobSigma = 0.11f;
  static constexpr float kDiscRadius = 0.16f;
  static constexpr int kEpisodeLength = 50;

  TriViewReach(TriViewVariant variant, const EnvOptions& options);

  EnvSpec spec() const override;
  MultiViewObservation reset(std::optional<std::uint64_t> seed) override;
  StepResult step(std::span<const float> action) override;

  // Deterministic rendering of the current internal state at native
  // resolutions, before resize and stacking.
  std::vector<Image> render_views() const;

  const ViewGeometry& view_geometry(int view) const;

  // Test hooks: inject a state and read it back.
  void set_state(const Eigen::Vector2f& agent, const Eigen::Vector2f& goal);
  Eigen::Vector2f agent_pos() const { return agent_; }
  Eigen::Vector2f goal_pos() const { return goal_; }
  float distance_to_goal() const { return (agent_ - goal_).norm(); }

 private:
  TriViewVariant variant_;
  EnvOptions options_;
  std::vector<ViewGeometry> views_;
  Rng rng_{0};
  Eigen::Vector2f agent_{0.f, 0.f};
  Eigen::Vector2f goal_{0.f, 0.f};
  Eigen::Vector2f velocity_{0.f, 0.f};
  int t_ = 0;
  bool needs_reset_ = true;
  std::vector<std::deque<Image>> stacks_;  // per view, oldest first

  Image render_view(int view) const;
  Image processed_frame(int view) const;  // rendered, resized, quantized
  MultiViewObservation observation() const;
  void push_frames();
};

std::unique_ptr<Env> make_env(const std::string& id, const EnvOptions& options);
std::vector<std::string> registered_envs();

}  // namespace madview
