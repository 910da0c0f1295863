#include "madview/replay.hpp"

namespace madview {

ReplayBuffer::ReplayBuffer(int capacity, std::uint64_t sampling_seed)
    : capacity_(capacity), rng_(sampling_seed) {
  if (capacity_ < 1) throw ValidationError("replay capacity must be >= 1");
  entries_.reserve(static_cast<std::size_t>(capacity_));
}

void ReplayBuffer::check_shapes(const Transition& t) {
  if (t.obs.views.empty() || t.next_obs.views.size() != t.obs.views.size())
    throw ValidationError("transition views are empty or inconsistent");
  const Image& first = t.obs.views[0];
  if (n_views_ < 0) {
    n_views_ = static_cast<int>(t.obs.views.size());
    img_c_ = first.c;
    img_h_ = first.h;
    img_w_ = first.w;
    proprio_dim_ = static_cast<int>(t.obs.proprio.size());
    action_dim_ = static_cast<int>(t.action.size());
  }
  if (static_cast<int>(t.obs.views.size()) != n_views_)
    throw ValidationError("transition view count does not match buffer");
  for (const auto& views : {&t.obs.views, &t.next_obs.views})
    for (const Image& img : *views)
      if (img.c != img_c_ || img.h != img_h_ || img.w != img_w_)
        throw ValidationError("transition image shape does not match buffer");
  if (static_cast<int>(t.obs.proprio.size()) != proprio_dim_ ||
      static_cast<int>(t.next_obs.proprio.size()) != proprio_dim_)
    throw ValidationError("transition proprio size does not match buffer");
  if (static_cast<int>(t.action.size()) != action_dim_)
    throw ValidationError("transition action size does not match buffer");
}

void ReplayBuffer::push(const Transition& t) {
  check_shapes(t);
  Stored s;
  for (const Image& img : t.obs.views) s.obs_views.push_back(to_u8(img));
  for (const Image& img : t.next_obs.views) s.next_views.push_back(to_u8(img));
  s.proprio = t.obs.proprio;
  s.next_proprio = t.next_obs.proprio;
  s.action = t.action;
  s.reward = t.reward;
  s.done = t.done;
  s.t = t.obs.t;
  s.next_t = t.next_obs.t;
  if (static_cast<int>(entries_.size()) < capacity_) {
    entries_.push_back(std::move(s));
  } else {
    entries_[start_] = std::move(s);  // overwrite the oldest
    start_ = (start_ + 1) % entries_.size();
  }
}

const ReplayBuffer::Stored& ReplayBuffer::stored_at(int fifo_index) const {
  if (fifo_index < 0 || fifo_index >= size())
    throw ValidationError("replay index out of range");
  return entries_[(start_ + static_cast<std::size_t>(fifo_index)) %
                  entries_.size()];
}

Transition ReplayBuffer::at(int fifo_index) const {
  const Stored& s = stored_at(fifo_index);
  Transition t;
  for (const auto& v : s.obs_views)
    t.obs.views.push_back(from_u8(v, img_c_, img_h_, img_w_));
  for (const auto& v : s.next_views)
    t.next_obs.views.push_back(from_u8(v, img_c_, img_h_, img_w_));
  t.obs.proprio = s.proprio;
  t.next_obs.proprio = s.next_proprio;
  t.obs.t = s.t;
  t.next_obs.t = s.next_t;
  t.action = s.action;
  t.reward = s.reward;
  t.done = s.done;
  return t;
}

Batch<float> ReplayBuffer::sample(int batch_size) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (size() == 0) throw UsageError("cannot sample from an empty buffer");
  Batch<float> b;
  b.n_views = n_views_;
  b.size = batch_size;
  const int plane = img_c_ * img_h_ * img_w_;
  for (int v = 0; v < n_views_; ++v) {
    b.obs_views.emplace_back(plane, batch_size);
    b.next_views.emplace_back(plane, batch_size);
  }
  b.proprio.resize(proprio_dim_, batch_size);
  b.next_proprio.resize(proprio_dim_, batch_size);
  b.action.resize(action_dim_, batch_size);
  b.reward.resize(1, batch_size);
  b.done.resize(1, batch_size);

  last_indices_.clear();
  for (int col = 0; col < batch_size; ++col) {
    const int idx = rng_.uniform_int(size());
    last_indices_.push_back(idx);
    const Stored& s = stored_at(idx);
    for (int v = 0; v < n_views_; ++v) {
      float* obs_dst = b.obs_views[v].col(col).data();
      float* next_dst = b.next_views[v].col(col).data();
      const auto& ob = s.obs_views[v];
      const auto& nb = s.next_views[v];
      for (int i = 0; i < plane; ++i) {
        obs_dst[i] = static_cast<float>(ob[i]) / 255.f;
        next_dst[i] = static_cast<float>(nb[i]) / 255.f;
      }
    }
    b.proprio.col(col) = s.proprio;
    b.next_proprio.col(col) = s.next_proprio;
    b.action.col(col) = s.action;
    b.reward(0, col) = s.reward;
    b.done(0, col) = s.done ? 1.f : 0.f;
  }
  return b;
}

}  // namespace madview
