#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "madview/config.hpp"
#include "madview/image.hpp"
#include "madview/nn.hpp"

namespace madview {

// Fused feature vector plus the view subset it was built from.
struct MergedFeatures {
  Eigen::VectorXf values;
  std::vector<int> source_views;
};

// Elementwise sum in the given order. Same dimensionality as each input, so
// downstream networks accept merged and singular features interchangeably.
MergedFeatures merge_sum(std::span<const Eigen::VectorXf> features,
                         std::span<const int> source_views = {});

// Concatenation in registry view order; requires every configured view.
MergedFeatures merge_concat(std::span<const Eigen::VectorXf> features,
                            int n_views);

// Channel concatenation of raw views before encoding.
Image merge_frame_stack(std::span<const Image> views);

// Arithmetic mean of per-view Q predictions (late merge).
double q_mean(std::span<const double> q_values);

// Graph-side fusion used in training and evaluation. Attention variants own
// learnable parameters; sum/concat are parameter-free.
template <class S>
class Fusion {
 public:
  using GRef = typename ad::Graph<S>::Ref;

  static Fusion build(MergeStrategy kind, int feature_dim, int n_views,
                      int heads, int ffn_dim, Rng& rng) {
    Fusion f;
    f.kind_ = kind;
    f.feature_dim_ = feature_dim;
    f.n_views_ = n_views;
    f.heads_ = heads;
    f.ffn_dim_ = ffn_dim > 0 ? ffn_dim : 2 * feature_dim;
    if (heads < 1 || feature_dim % heads != 0)
      throw ConfigError("attention_heads must divide feature_dim");
    if (kind == MergeStrategy::kAttention) {
      f.query_.name = "fusion.query";
      f.query_.value.resize(feature_dim, 1);
      nn::orthogonal_init(f.query_.value, rng);
      f.key_.init(feature_dim, feature_dim, rng, "fusion.key");
      f.value_proj_.init(feature_dim, feature_dim, rng, "fusion.value");
    } else if (kind == MergeStrategy::kVitLayer) {
      f.ln1_.init(feature_dim, "fusion.ln1");
      f.ln2_.init(feature_dim, "fusion.ln2");
      f.wq_.init(feature_dim, feature_dim, rng, "fusion.wq");
      f.wk_.init(feature_dim, feature_dim, rng, "fusion.wk");
      f.wv_.init(feature_dim, feature_dim, rng, "fusion.wv");
      f.wo_.init(feature_dim, feature_dim, rng, "fusion.wo");
      f.ff1_.init(feature_dim, f.ffn_dim_, rng, "fusion.ff1");
      f.ff2_.init(f.ffn_dim_, feature_dim, rng, "fusion.ff2");
    }
    return f;
  }

  MergeStrategy kind() const { return kind_; }

  // Dimensionality of the fused representation fed to actor/critic.
  int output_dim() const {
    return kind_ == MergeStrategy::kConcat ? n_views_ * feature_dim_
                                           : feature_dim_;
  }

  // Whether fused features share the singular-view dimensionality (the
  // requirement for feature-level augmentation and subset evaluation).
  bool merged_dim_matches_view_dim() const {
    return kind_ == MergeStrategy::kSum || kind_ == MergeStrategy::kAttention ||
           kind_ == MergeStrategy::kVitLayer;
  }

  bool supports_subset() const {
    return merged_dim_matches_view_dim() || kind_ == MergeStrategy::kQMean;
  }

  // Fuses per-view feature nodes (each feature_dim x B).
  GRef merge(ad::Graph<S>& g, std::span<const GRef> views) const {
    if (views.empty()) throw ValidationError("merge: empty view list");
    for (GRef v : views)
      if (g.value(v).rows() != feature_dim_)
        throw ValidationError("merge: feature dimension mismatch");
    switch (kind_) {
      case MergeStrategy::kSum: {
        GRef acc = views[0];
        for (std::size_t i = 1; i < views.size(); ++i)
          acc = g.add(acc, views[i]);
        return acc;
      }
      case MergeStrategy::kConcat: {
        if (static_cast<int>(views.size()) != n_views_)
          throw ValidationError(
              "concat merge requires all " + std::to_string(n_views_) +
              " views, got " + std::to_string(views.size()));
        return g.vcat(views);
      }
      case MergeStrategy::kAttention:
        return attention_pool(g, views);
      case MergeStrategy::kVitLayer:
        return vit_block_pool(g, views);
      default:
        throw CapabilityError("merge strategy '" + to_string(kind_) +
                              "' does not produce fused features");
    }
  }

  // Unweighted mean over view features (actor input for the q_mean strategy).
  GRef mean_pool(ad::Graph<S>& g, std::span<const GRef> views) const {
    if (views.empty()) throw ValidationError("mean_pool: empty view list");
    GRef acc = views[0];
    for (std::size_t i = 1; i < views.size(); ++i) acc = g.add(acc, views[i]);
    return g.scale(acc, S(1) / S(views.size()));
  }

  std::vector<nn::Tensor<S>*> params() {
    std::vector<nn::Tensor<S>*> out;
    if (kind_ == MergeStrategy::kAttention) {
      out.push_back(&query_);
      key_.collect(out);
      value_proj_.collect(out);
    } else if (kind_ == MergeStrategy::kVitLayer) {
      ln1_.collect(out);
      ln2_.collect(out);
      wq_.collect(out);
      wk_.collect(out);
      wv_.collect(out);
      wo_.collect(out);
      ff1_.collect(out);
      ff2_.collect(out);
    }
    return out;
  }

 private:
  MergeStrategy kind_ = MergeStrategy::kSum;
  int feature_dim_ = 0, n_views_ = 0, heads_ = 1, ffn_dim_ = 0;

  nn::Tensor<S> query_;
  nn::Linear<S> key_, value_proj_;

  nn::LayerNorm<S> ln1_, ln2_;
  nn::Linear<S> wq_, wk_, wv_, wo_, ff1_, ff2_;

  // Learned-query cross attention over the view set; permutation invariant.
  GRef attention_pool(ad::Graph<S>& g, std::span<const GRef> views) const {
    const int dk = feature_dim_ / heads_;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dk));
    std::vector<GRef> keys, vals;
    keys.reserve(views.size());
    vals.reserve(views.size());
    for (GRef v : views) {
      keys.push_back(key_.forward(g, v));
      vals.push_back(value_proj_.forward(g, v));
    }
    GRef q = query_.ref(g);
    std::vector<GRef> head_outputs;
    for (int h = 0; h < heads_; ++h) {
      GRef qh = g.rows(q, h * dk, dk);
      std::vector<GRef> scores;
      scores.reserve(views.size());
      for (std::size_t i = 0; i < views.size(); ++i) {
        GRef kh = g.rows(keys[i], h * dk, dk);
        scores.push_back(g.scale(g.colsum(g.mul_colvec(kh, qh)), inv_sqrt));
      }
      GRef weights = g.softmax_cols(g.vcat(scores));
      GRef acc = -1;
      for (std::size_t i = 0; i < views.size(); ++i) {
        GRef vh = g.rows(vals[i], h * dk, dk);
        GRef term = g.mul_rowvec(vh, g.rows(weights, static_cast<int>(i), 1));
        acc = (acc < 0) ? term : g.add(acc, term);
      }
      head_outputs.push_back(acc);
    }
    return heads_ == 1 ? head_outputs[0] : g.vcat(head_outputs);
  }

  // Pre-LN self-attention block with a feedforward sublayer; tokens are views
  // and the output is the mean over token outputs.
  GRef vit_block_pool(ad::Graph<S>& g, std::span<const GRef> views) const {
    const int n = static_cast<int>(views.size());
    const int dk = feature_dim_ / heads_;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dk));
    std::vector<GRef> qs, ks, vs;
    for (GRef v : views) {
      GRef normed = ln1_.forward(g, v);
      qs.push_back(wq_.forward(g, normed));
      ks.push_back(wk_.forward(g, normed));
      vs.push_back(wv_.forward(g, normed));
    }
    GRef pooled = -1;
    for (int i = 0; i < n; ++i) {
      std::vector<GRef> head_outputs;
      for (int h = 0; h < heads_; ++h) {
        GRef qih = g.rows(qs[i], h * dk, dk);
        std::vector<GRef> scores;
        for (int j = 0; j < n; ++j) {
          GRef kjh = g.rows(ks[j], h * dk, dk);
          scores.push_back(g.scale(g.colsum(g.mul(qih, kjh)), inv_sqrt));
        }
        GRef weights = g.softmax_cols(g.vcat(scores));
        GRef acc = -1;
        for (int j = 0; j < n; ++j) {
          GRef vjh = g.rows(vs[j], h * dk, dk);
          GRef term = g.mul_rowvec(vjh, g.rows(weights, j, 1));
          acc = (acc < 0) ? term : g.add(acc, term);
        }
        head_outputs.push_back(acc);
      }
      GRef attn = heads_ == 1 ? head_outputs[0] : g.vcat(head_outputs);
      GRef res1 = g.add(views[i], wo_.forward(g, attn));
      GRef ff = ff2_.forward(g, g.relu(ff1_.forward(g, ln2_.forward(g, res1))));
      GRef token_out = g.add(res1, ff);
      pooled = (pooled < 0) ? token_out : g.add(pooled, token_out);
    }
    return g.scale(pooled, S(1) / S(n));
  }
};

}  // namespace madview
