#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "madview/graph.hpp"
#include "madview/rng.hpp"

namespace madview::nn {

using ad::ConvShape;
using ad::Graph;
using ad::Mat;

// Trainable matrix plus its Adam moments. The address of a Tensor is its
// identity inside a Graph.
template <class S>
struct Tensor {
  std::string name;
  Mat<S> value;
  Mat<S> m;  // first moment, sized on first optimizer step
  Mat<S> v;  // second moment

  typename Graph<S>::Ref ref(Graph<S>& g) const { return g.param(value, this); }
};

// Orthogonal initialization (QR of a Gaussian matrix, sign-fixed by the
// diagonal of R), gain 1. For wide matrices the transpose is initialized.
template <class S>
void orthogonal_init(Mat<S>& w, Rng& rng) {
  const Eigen::Index r = w.rows(), c = w.cols();
  const bool flip = r < c;
  const Eigen::Index hi = std::max(r, c), lo = std::min(r, c);
  Mat<S> gauss(hi, lo);
  for (Eigen::Index j = 0; j < lo; ++j)
    for (Eigen::Index i = 0; i < hi; ++i)
      gauss(i, j) = static_cast<S>(rng.normal());
  Eigen::HouseholderQR<Mat<S>> qr(gauss);
  Mat<S> q = qr.householderQ() * Mat<S>::Identity(hi, lo);
  Mat<S> rmat = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < lo; ++j)
    if (rmat(j, j) < S(0)) q.col(j) = -q.col(j);
  w = flip ? Mat<S>(q.transpose()) : q;
}

template <class S>
struct Linear {
  Tensor<S> w, b;

  void init(int in, int out, Rng& rng, const std::string& name) {
    w.name = name + ".w";
    b.name = name + ".b";
    w.value.resize(out, in);
    orthogonal_init(w.value, rng);
    b.value = Mat<S>::Zero(out, 1);
  }

  typename Graph<S>::Ref forward(Graph<S>& g, typename Graph<S>::Ref x) const {
    return g.add_colvec(g.matmul(w.ref(g), x), b.ref(g));
  }

  void collect(std::vector<Tensor<S>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

// Conv kernel stored as (out_c x in_c*k*k); patch row index c*k*k + ky*k + kx.
template <class S>
struct Conv {
  Tensor<S> w, b;
  ConvShape shape;

  void init(const ConvShape& cs, Rng& rng, const std::string& name) {
    shape = cs;
    w.name = name + ".w";
    b.name = name + ".b";
    w.value.resize(cs.out_c, cs.patch());
    orthogonal_init(w.value, rng);
    b.value = Mat<S>::Zero(cs.out_c, 1);
  }

  typename Graph<S>::Ref forward(Graph<S>& g, typename Graph<S>::Ref x) const {
    return g.conv2d(x, w.ref(g), b.ref(g), shape);
  }

  void collect(std::vector<Tensor<S>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <class S>
struct LayerNorm {
  Tensor<S> gamma, beta;

  void init(int dim, const std::string& name) {
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.value = Mat<S>::Constant(dim, 1, S(1));
    beta.value = Mat<S>::Zero(dim, 1);
  }

  typename Graph<S>::Ref forward(Graph<S>& g, typename Graph<S>::Ref x) const {
    return g.layer_norm(x, gamma.ref(g), beta.ref(g));
  }

  void collect(std::vector<Tensor<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

template <class S>
class Adam {
 public:
  explicit Adam(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update using the gradients recorded in `g`. Parameters the
  // graph never touched receive zero gradient (their moments still decay).
  void step(std::span<Tensor<S>* const> params, const Graph<S>& g) {
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(beta2_, static_cast<S>(t_));
    for (Tensor<S>* p : params) {
      Mat<S> grad = g.has_param(p) ? g.grad_of(p)
                                   : Mat<S>::Zero(p->value.rows(), p->value.cols());
      if (p->m.size() == 0) {
        p->m = Mat<S>::Zero(p->value.rows(), p->value.cols());
        p->v = Mat<S>::Zero(p->value.rows(), p->value.cols());
      }
      p->m = beta1_ * p->m + (S(1) - beta1_) * grad;
      p->v = (beta2_ * p->v.array() + (S(1) - beta2_) * grad.array().square())
                 .matrix();
      p->value -=
          (lr_ * (p->m.array() / bc1) / ((p->v.array() / bc2).sqrt() + eps_))
              .matrix();
    }
  }

  long steps_taken() const { return t_; }
  void set_steps_taken(long t) { t_ = t; }
  S learning_rate() const { return lr_; }

 private:
  S lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// target <- (1 - tau) * target + tau * online, per scalar.
template <class S>
void soft_update(std::span<Tensor<S>* const> target,
                 std::span<const Tensor<S>* const> online, S tau) {
  if (target.size() != online.size())
    throw ValidationError("soft_update: parameter trees differ in size");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i]->value.rows() != online[i]->value.rows() ||
        target[i]->value.cols() != online[i]->value.cols())
      throw ValidationError("soft_update: tensor shape mismatch at '" +
                            online[i]->name + "'");
    target[i]->value = (S(1) - tau) * target[i]->value + tau * online[i]->value;
  }
}

template <class S>
void hard_copy(std::span<Tensor<S>* const> target,
               std::span<const Tensor<S>* const> online) {
  soft_update<S>(target, online, S(1));
}

// FNV over raw tensor bytes; used to assert read-only access patterns.
template <class S>
std::uint64_t params_hash(std::span<const Tensor<S>* const> params) {
  std::uint64_t h = kFnvOffset;
  for (const Tensor<S>* p : params)
    h = fnv1a64_bytes(p->value.data(), sizeof(S) * p->value.size(), h);
  return h;
}

}  // namespace madview::nn
