#include "madview/merge.hpp"

#include <numeric>

namespace madview {

MergedFeatures merge_sum(std::span<const Eigen::VectorXf> features,
                         std::span<const int> source_views) {
  if (features.empty()) throw ValidationError("merge_sum: empty feature list");
  const Eigen::Index dim = features[0].size();
  MergedFeatures out;
  out.values = Eigen::VectorXf::Zero(dim);
  for (const auto& f : features) {
    if (f.size() != dim)
      throw ValidationError("merge_sum: feature length mismatch");
    out.values += f;
  }
  if (!source_views.empty())
    out.source_views.assign(source_views.begin(), source_views.end());
  else {
    out.source_views.resize(features.size());
    std::iota(out.source_views.begin(), out.source_views.end(), 0);
  }
  return out;
}

MergedFeatures merge_concat(std::span<const Eigen::VectorXf> features,
                            int n_views) {
  if (static_cast<int>(features.size()) != n_views)
    throw ValidationError("merge_concat: expected " + std::to_string(n_views) +
                          " views, got " + std::to_string(features.size()));
  if (features.empty()) throw ValidationError("merge_concat: empty feature list");
  const Eigen::Index dim = features[0].size();
  MergedFeatures out;
  out.values.resize(dim * n_views);
  for (int i = 0; i < n_views; ++i) {
    if (features[i].size() != dim)
      throw ValidationError("merge_concat: feature length mismatch");
    out.values.segment(i * dim, dim) = features[i];
    out.source_views.push_back(i);
  }
  return out;
}

Image merge_frame_stack(std::span<const Image> views) {
  if (views.empty()) throw ValidationError("merge_frame_stack: empty view list");
  const int h = views[0].h, w = views[0].w;
  int channels = 0;
  for (const auto& v : views) {
    if (v.h != h || v.w != w)
      throw ValidationError("merge_frame_stack: spatial dimensions differ");
    channels += v.c;
  }
  Image out(channels, h, w);
  std::size_t at = 0;
  for (const auto& v : views) {
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + at);
    at += v.data.size();
  }
  return out;
}

double q_mean(std::span<const double> q_values) {
  if (q_values.empty()) throw ValidationError("q_mean: empty value list");
  double s = 0.0;
  for (double q : q_values) s += q;
  return s / static_cast<double>(q_values.size());
}

}  // namespace madview
