#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "madview/envs.hpp"
#include "madview/graph.hpp"
#include "madview/rng.hpp"

namespace madview {

// One experience tuple. Stored images are unaugmented; random shifts are
// applied at sample time. `done` records termination, never truncation.
struct Transition {
  MultiViewObservation obs;
  Eigen::VectorXf action;
  float reward = 0.f;
  MultiViewObservation next_obs;
  bool done = false;
};

// Column-per-element training batch; images are float in [0,1].
template <class S>
struct Batch {
  int n_views = 0;
  int size = 0;
  std::vector<ad::Mat<S>> obs_views;   // each (frame_stack*3*H*W x B)
  std::vector<ad::Mat<S>> next_views;
  ad::Mat<S> proprio, next_proprio;    // (P x B)
  ad::Mat<S> action;                   // (A x B)
  ad::Mat<S> reward, done;             // (1 x B)
};

template <class S, class T>
Batch<S> convert_batch(const Batch<T>& in) {
  Batch<S> out;
  out.n_views = in.n_views;
  out.size = in.size;
  for (const auto& m : in.obs_views) out.obs_views.push_back(m.template cast<S>());
  for (const auto& m : in.next_views) out.next_views.push_back(m.template cast<S>());
  out.proprio = in.proprio.template cast<S>();
  out.next_proprio = in.next_proprio.template cast<S>();
  out.action = in.action.template cast<S>();
  out.reward = in.reward.template cast<S>();
  out.done = in.done.template cast<S>();
  return out;
}

// Bounded FIFO store with uniform with-replacement sampling from a dedicated
// RNG stream. Observation images are held as 8-bit planes.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, std::uint64_t sampling_seed);

  void push(const Transition& t);
  Batch<float> sample(int batch_size);

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }

  // i-th oldest transition, reconstructed (tests and resume serialization).
  Transition at(int fifo_index) const;

  // Indices drawn by the most recent sample() call, in draw order.
  const std::vector<int>& last_indices() const { return last_indices_; }

  std::string rng_state() const { return rng_.serialize(); }
  void set_rng_state(const std::string& s) { rng_ = Rng::deserialize(s); }

 private:
  struct Stored {
    std::vector<std::vector<std::uint8_t>> obs_views;
    std::vector<std::vector<std::uint8_t>> next_views;
    Eigen::VectorXf proprio, next_proprio;
    Eigen::VectorXf action;
    float reward = 0.f;
    bool done = false;
    int t = 0, next_t = 0;
  };

  int capacity_;
  Rng rng_;
  std::vector<Stored> entries_;  // ring; start_ is the oldest element
  std::size_t start_ = 0;
  std::vector<int> last_indices_;

  // shape of the first pushed transition; later pushes must match
  int n_views_ = -1, img_c_ = 0, img_h_ = 0, img_w_ = 0;
  int proprio_dim_ = 0, action_dim_ = 0;

  const Stored& stored_at(int fifo_index) const;
  void check_shapes(const Transition& t);
};

}  // namespace madview
