#pragma once

#include <Eigen/Core>
#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "madview/common.hpp"

namespace madview::ad {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Valid (unpadded) convolution geometry. Inputs are flattened images with row
// index (channel * H + y) * W + x; batch elements are columns.
struct ConvShape {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, kernel = 0, stride = 1;

  int out_h() const { return (in_h - kernel) / stride + 1; }
  int out_w() const { return (in_w - kernel) / stride + 1; }
  int patch() const { return in_c * kernel * kernel; }
  int positions() const { return out_h() * out_w(); }
  int in_size() const { return in_c * in_h * in_w; }
  int out_size() const { return out_c * positions(); }
};

// Reverse-mode tape over Eigen matrices. One Graph instance per loss; nodes
// are created in topological order, so backward() is a reverse sweep. Columns
// are batch elements throughout.
template <class S>
class Graph {
 public:
  using Ref = int;

  Ref constant(Mat<S> v) { return add_node(std::move(v), {}, false, nullptr); }

  // Gradient-tracked input whose value lives outside the graph. `key` is the
  // identity used to read the gradient back (usually the tensor address).
  Ref param(const Mat<S>& value, const void* key) {
    auto it = param_refs_.find(key);
    if (it != param_refs_.end()) return it->second;
    Ref r = add_node(value, {}, true, nullptr);
    param_refs_.emplace(key, r);
    return r;
  }

  bool has_param(const void* key) const { return param_refs_.count(key) > 0; }

  const Mat<S>& value(Ref r) const { return nodes_[r].value; }

  // Gradient of a node after backward(); zero-shaped if never reached.
  Mat<S> grad(Ref r) const {
    const Node& n = nodes_[r];
    if (n.grad.size() == 0)
      return Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Mat<S> grad_of(const void* key) const {
    auto it = param_refs_.find(key);
    if (it == param_refs_.end())
      throw ValidationError("parameter was never registered in this graph");
    return grad(it->second);
  }

  // ---- elementwise ----

  Ref add(Ref a, Ref b) {
    check_same(a, b, "add");
    Mat<S> v = nodes_[a].value + nodes_[b].value;
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      g.accum(n.parents[0], n.grad);
                      g.accum(n.parents[1], n.grad);
                    });
  }

  Ref sub(Ref a, Ref b) {
    check_same(a, b, "sub");
    Mat<S> v = nodes_[a].value - nodes_[b].value;
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      g.accum(n.parents[0], n.grad);
                      g.accum(n.parents[1], -n.grad);
                    });
  }

  Ref mul(Ref a, Ref b) {
    check_same(a, b, "mul");
    Mat<S> v = nodes_[a].value.cwiseProduct(nodes_[b].value);
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      g.accum(n.parents[0],
                              n.grad.cwiseProduct(g.nodes_[n.parents[1]].value));
                      g.accum(n.parents[1],
                              n.grad.cwiseProduct(g.nodes_[n.parents[0]].value));
                    });
  }

  Ref div(Ref a, Ref b) {
    check_same(a, b, "div");
    Mat<S> v = nodes_[a].value.cwiseQuotient(nodes_[b].value);
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      const Mat<S>& bv = g.nodes_[n.parents[1]].value;
                      g.accum(n.parents[0], n.grad.cwiseQuotient(bv));
                      g.accum(n.parents[1], -(n.grad.cwiseProduct(n.value))
                                                 .cwiseQuotient(bv));
                    });
  }

  Ref scale(Ref a, S c) {
    Mat<S> v = nodes_[a].value * c;
    return add_node(std::move(v), {a}, any_grad({a}),
                    [c](Graph& g, const Node& n) {
                      g.accum(n.parents[0], n.grad * c);
                    });
  }

  Ref neg(Ref a) { return scale(a, S(-1)); }

  Ref add_scalar(Ref a, S c) {
    Mat<S> v = (nodes_[a].value.array() + c).matrix();
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) { g.accum(n.parents[0], n.grad); });
  }

  Ref tanh_(Ref a) {
    Mat<S> v = nodes_[a].value.array().tanh().matrix();
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) {
                      g.accum(n.parents[0],
                              (n.grad.array() * (S(1) - n.value.array().square()))
                                  .matrix());
                    });
  }

  Ref relu(Ref a) {
    Mat<S> v = nodes_[a].value.cwiseMax(S(0));
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) {
                      const Mat<S>& x = g.nodes_[n.parents[0]].value;
                      g.accum(n.parents[0],
                              (n.grad.array() * (x.array() > S(0)).template cast<S>())
                                  .matrix());
                    });
  }

  Ref exp_(Ref a) {
    Mat<S> v = nodes_[a].value.array().exp().matrix();
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) {
                      g.accum(n.parents[0],
                              n.grad.cwiseProduct(n.value));
                    });
  }

  Ref log_(Ref a) {
    Mat<S> v = nodes_[a].value.array().log().matrix();
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) {
                      g.accum(n.parents[0],
                              n.grad.cwiseQuotient(g.nodes_[n.parents[0]].value));
                    });
  }

  Ref square(Ref a) {
    Mat<S> v = nodes_[a].value.array().square().matrix();
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) {
                      g.accum(n.parents[0],
                              (n.grad.array() * S(2) *
                               g.nodes_[n.parents[0]].value.array())
                                  .matrix());
                    });
  }

  // Elementwise minimum; ties route the gradient to the first argument.
  Ref min_(Ref a, Ref b) {
    check_same(a, b, "min");
    Mat<S> v = nodes_[a].value.cwiseMin(nodes_[b].value);
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      const Mat<S>& av = g.nodes_[n.parents[0]].value;
                      const Mat<S>& bv = g.nodes_[n.parents[1]].value;
                      Mat<S> mask = (av.array() <= bv.array()).template cast<S>();
                      g.accum(n.parents[0], n.grad.cwiseProduct(mask));
                      g.accum(n.parents[1],
                              (n.grad.array() * (S(1) - mask.array())).matrix());
                    });
  }

  // ---- broadcast ----

  // (m x n) + column vector (m x 1).
  Ref add_colvec(Ref a, Ref b) {
    if (nodes_[b].value.cols() != 1 ||
        nodes_[a].value.rows() != nodes_[b].value.rows())
      throw ValidationError("add_colvec: shape mismatch");
    Mat<S> v = nodes_[a].value.colwise() +
               Eigen::Matrix<S, Eigen::Dynamic, 1>(nodes_[b].value.col(0));
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      g.accum(n.parents[0], n.grad);
                      g.accum(n.parents[1], n.grad.rowwise().sum());
                    });
  }

  // (m x n) * column vector (m x 1), broadcast over columns.
  Ref mul_colvec(Ref a, Ref b) {
    if (nodes_[b].value.cols() != 1 ||
        nodes_[a].value.rows() != nodes_[b].value.rows())
      throw ValidationError("mul_colvec: shape mismatch");
    Mat<S> v = (nodes_[a].value.array().colwise() *
                nodes_[b].value.col(0).array())
                   .matrix();
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      const Mat<S>& av = g.nodes_[n.parents[0]].value;
                      const Mat<S>& bv = g.nodes_[n.parents[1]].value;
                      g.accum(n.parents[0],
                              (n.grad.array().colwise() * bv.col(0).array()).matrix());
                      g.accum(n.parents[1],
                              n.grad.cwiseProduct(av).rowwise().sum());
                    });
  }

  // (m x n) * row vector (1 x n), broadcast over rows.
  Ref mul_rowvec(Ref a, Ref b) {
    if (nodes_[b].value.rows() != 1 ||
        nodes_[a].value.cols() != nodes_[b].value.cols())
      throw ValidationError("mul_rowvec: shape mismatch");
    Mat<S> v = (nodes_[a].value.array().rowwise() *
                nodes_[b].value.row(0).array())
                   .matrix();
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      const Mat<S>& av = g.nodes_[n.parents[0]].value;
                      const Mat<S>& bv = g.nodes_[n.parents[1]].value;
                      g.accum(n.parents[0],
                              (n.grad.array().rowwise() * bv.row(0).array()).matrix());
                      g.accum(n.parents[1],
                              n.grad.cwiseProduct(av).colwise().sum());
                    });
  }

  // (m x n) * scalar node (1 x 1).
  Ref mul_scalar_node(Ref a, Ref s) {
    if (nodes_[s].value.size() != 1)
      throw ValidationError("mul_scalar_node: scalar operand must be 1x1");
    const S sv = nodes_[s].value(0, 0);
    Mat<S> v = nodes_[a].value * sv;
    return add_node(std::move(v), {a, s}, any_grad({a, s}),
                    [sv](Graph& g, const Node& n) {
                      g.accum(n.parents[0], n.grad * sv);
                      Mat<S> ds(1, 1);
                      ds(0, 0) = n.grad.cwiseProduct(g.nodes_[n.parents[0]].value).sum();
                      g.accum(n.parents[1], ds);
                    });
  }

  // ---- linear algebra ----

  Ref matmul(Ref a, Ref b) {
    if (nodes_[a].value.cols() != nodes_[b].value.rows())
      throw ValidationError("matmul: inner dimensions differ");
    Mat<S> v = nodes_[a].value * nodes_[b].value;
    return add_node(std::move(v), {a, b}, any_grad({a, b}),
                    [](Graph& g, const Node& n) {
                      const Mat<S>& av = g.nodes_[n.parents[0]].value;
                      const Mat<S>& bv = g.nodes_[n.parents[1]].value;
                      if (g.nodes_[n.parents[0]].requires_grad)
                        g.accum(n.parents[0], n.grad * bv.transpose());
                      if (g.nodes_[n.parents[1]].requires_grad)
                        g.accum(n.parents[1], av.transpose() * n.grad);
                    });
  }

  // ---- reductions ----

  Ref sum_all(Ref a) {
    Mat<S> v(1, 1);
    v(0, 0) = nodes_[a].value.sum();
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) {
                      const Node& p = g.nodes_[n.parents[0]];
                      g.accum(n.parents[0],
                              Mat<S>::Constant(p.value.rows(), p.value.cols(),
                                               n.grad(0, 0)));
                    });
  }

  Ref mean_all(Ref a) {
    const S inv = S(1) / S(nodes_[a].value.size());
    return scale(sum_all(a), inv);
  }

  // Sum over rows: (m x n) -> (1 x n).
  Ref colsum(Ref a) {
    Mat<S> v = nodes_[a].value.colwise().sum();
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) {
                      const Node& p = g.nodes_[n.parents[0]];
                      Mat<S> gp = Mat<S>::Zero(p.value.rows(), p.value.cols());
                      gp.rowwise() += n.grad.row(0);
                      g.accum(n.parents[0], gp);
                    });
  }

  // ---- shape ----

  Ref rows(Ref a, int r0, int len) {
    if (r0 < 0 || len < 0 || r0 + len > nodes_[a].value.rows())
      throw ValidationError("rows: slice out of range");
    Mat<S> v = nodes_[a].value.middleRows(r0, len);
    return add_node(std::move(v), {a}, any_grad({a}),
                    [r0, len](Graph& g, const Node& n) {
                      const Node& p = g.nodes_[n.parents[0]];
                      Mat<S> gp = Mat<S>::Zero(p.value.rows(), p.value.cols());
                      gp.middleRows(r0, len) = n.grad;
                      g.accum(n.parents[0], gp);
                    });
  }

  Ref cols(Ref a, int c0, int len) {
    if (c0 < 0 || len < 0 || c0 + len > nodes_[a].value.cols())
      throw ValidationError("cols: slice out of range");
    Mat<S> v = nodes_[a].value.middleCols(c0, len);
    return add_node(std::move(v), {a}, any_grad({a}),
                    [c0, len](Graph& g, const Node& n) {
                      const Node& p = g.nodes_[n.parents[0]];
                      Mat<S> gp = Mat<S>::Zero(p.value.rows(), p.value.cols());
                      gp.middleCols(c0, len) = n.grad;
                      g.accum(n.parents[0], gp);
                    });
  }

  Ref vcat(std::span<const Ref> parts) {
    if (parts.empty()) throw ValidationError("vcat: empty input");
    Eigen::Index cols_n = nodes_[parts[0]].value.cols();
    Eigen::Index rows_n = 0;
    for (Ref r : parts) {
      if (nodes_[r].value.cols() != cols_n)
        throw ValidationError("vcat: column counts differ");
      rows_n += nodes_[r].value.rows();
    }
    Mat<S> v(rows_n, cols_n);
    Eigen::Index at = 0;
    for (Ref r : parts) {
      v.middleRows(at, nodes_[r].value.rows()) = nodes_[r].value;
      at += nodes_[r].value.rows();
    }
    std::vector<Ref> ps(parts.begin(), parts.end());
    return add_node(std::move(v), ps, any_grad(parts),
                    [](Graph& g, const Node& n) {
                      Eigen::Index at = 0;
                      for (Ref p : n.parents) {
                        const Eigen::Index r = g.nodes_[p].value.rows();
                        g.accum(p, n.grad.middleRows(at, r));
                        at += r;
                      }
                    });
  }

  Ref hcat(std::span<const Ref> parts) {
    if (parts.empty()) throw ValidationError("hcat: empty input");
    Eigen::Index rows_n = nodes_[parts[0]].value.rows();
    Eigen::Index cols_n = 0;
    for (Ref r : parts) {
      if (nodes_[r].value.rows() != rows_n)
        throw ValidationError("hcat: row counts differ");
      cols_n += nodes_[r].value.cols();
    }
    Mat<S> v(rows_n, cols_n);
    Eigen::Index at = 0;
    for (Ref r : parts) {
      v.middleCols(at, nodes_[r].value.cols()) = nodes_[r].value;
      at += nodes_[r].value.cols();
    }
    std::vector<Ref> ps(parts.begin(), parts.end());
    return add_node(std::move(v), ps, any_grad(parts),
                    [](Graph& g, const Node& n) {
                      Eigen::Index at = 0;
                      for (Ref p : n.parents) {
                        const Eigen::Index c = g.nodes_[p].value.cols();
                        g.accum(p, n.grad.middleCols(at, c));
                        at += c;
                      }
                    });
  }

  // ---- normalizations ----

  // Softmax within each column.
  Ref softmax_cols(Ref a) {
    Mat<S> v = nodes_[a].value;
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      auto col = v.col(c).array();
      const S m = col.maxCoeff();
      v.col(c) = (col - m).exp();
      v.col(c) /= v.col(c).sum();
    }
    return add_node(std::move(v), {a}, any_grad({a}),
                    [](Graph& g, const Node& n) {
                      Mat<S> gp(n.value.rows(), n.value.cols());
                      for (Eigen::Index c = 0; c < n.value.cols(); ++c) {
                        const S dot = n.grad.col(c).dot(n.value.col(c));
                        gp.col(c) = n.value.col(c).cwiseProduct(
                            n.grad.col(c).array().matrix() -
                            Mat<S>::Constant(n.value.rows(), 1, dot));
                      }
                      g.accum(n.parents[0], gp);
                    });
  }

  // Per-column layer normalization with affine parameters gamma, beta (m x 1).
  Ref layer_norm(Ref x, Ref gamma, Ref beta, S eps = S(1e-5)) {
    const Mat<S>& xv = nodes_[x].value;
    const Eigen::Index m = xv.rows(), n = xv.cols();
    if (nodes_[gamma].value.rows() != m || nodes_[beta].value.rows() != m)
      throw ValidationError("layer_norm: affine parameter shape mismatch");
    Mat<S> xhat(m, n);
    Eigen::Matrix<S, 1, Eigen::Dynamic> inv_sd(n);
    for (Eigen::Index c = 0; c < n; ++c) {
      const S mu = xv.col(c).mean();
      const S var = (xv.col(c).array() - mu).square().mean();
      const S is = S(1) / std::sqrt(var + eps);
      inv_sd(c) = is;
      xhat.col(c) = (xv.col(c).array() - mu) * is;
    }
    Mat<S> v = ((xhat.array().colwise() * nodes_[gamma].value.col(0).array())
                    .colwise() +
                nodes_[beta].value.col(0).array())
                   .matrix();
    auto back = [xhat, inv_sd](Graph& g, const Node& nd) {
      const Ref xp = nd.parents[0], gp_ = nd.parents[1], bp = nd.parents[2];
      const Mat<S>& gam = g.nodes_[gp_].value;
      const Eigen::Index m2 = nd.value.rows(), n2 = nd.value.cols();
      if (g.nodes_[gp_].requires_grad)
        g.accum(gp_, nd.grad.cwiseProduct(xhat).rowwise().sum());
      if (g.nodes_[bp].requires_grad) g.accum(bp, nd.grad.rowwise().sum());
      if (g.nodes_[xp].requires_grad) {
        Mat<S> dxhat = nd.grad.array().colwise() * gam.col(0).array();
        Mat<S> dx(m2, n2);
        for (Eigen::Index c = 0; c < n2; ++c) {
          const S mean_d = dxhat.col(c).mean();
          const S mean_dx = dxhat.col(c).cwiseProduct(xhat.col(c)).mean();
          dx.col(c) = (inv_sd(c) * (dxhat.col(c).array() - mean_d -
                                    xhat.col(c).array() * mean_dx))
                          .matrix();
        }
        g.accum(xp, dx);
      }
    };
    return add_node(std::move(v), {x, gamma, beta}, any_grad({x, gamma, beta}),
                    back);
  }

  // ---- convolution ----

  // x: (in_c*in_h*in_w x B), w: (out_c x in_c*k*k), b: (out_c x 1).
  // Output: (out_c*positions x B), row index = channel * positions + position.
  Ref conv2d(Ref x, Ref w, Ref b, const ConvShape& cs) {
    const Mat<S>& xv = nodes_[x].value;
    const Mat<S>& wv = nodes_[w].value;
    if (xv.rows() != cs.in_size())
      throw ValidationError("conv2d: input size does not match shape");
    if (wv.rows() != cs.out_c || wv.cols() != cs.patch())
      throw ValidationError("conv2d: weight shape mismatch");
    if (nodes_[b].value.rows() != cs.out_c || nodes_[b].value.cols() != 1)
      throw ValidationError("conv2d: bias shape mismatch");
    const int B = static_cast<int>(xv.cols());
    const int P = cs.positions();
    Mat<S> out(cs.out_size(), B);
    const int chunk = std::min(B, 32);
    Mat<S> cols_buf(cs.patch(), P * chunk);
    Mat<S> prod;
    for (int b0 = 0; b0 < B; b0 += chunk) {
      const int bn = std::min(chunk, B - b0);
      im2col(xv, cs, b0, bn, cols_buf);
      prod.noalias() = wv * cols_buf.leftCols(P * bn);
      prod.colwise() += Eigen::Matrix<S, Eigen::Dynamic, 1>(nodes_[b].value.col(0));
      // (out_c x P*bn) -> rows (c*P + p) of the batch columns
      for (int i = 0; i < bn; ++i)
        for (int c = 0; c < cs.out_c; ++c)
          for (int p = 0; p < P; ++p)
            out(c * P + p, b0 + i) = prod(c, i * P + p);
    }
    ConvShape cs_copy = cs;
    auto back = [cs_copy](Graph& g, const Node& n) {
      const Ref xp = n.parents[0], wp = n.parents[1], bp = n.parents[2];
      const Mat<S>& xv2 = g.nodes_[xp].value;
      const Mat<S>& wv2 = g.nodes_[wp].value;
      const int B2 = static_cast<int>(xv2.cols());
      const int P2 = cs_copy.positions();
      const int chunk2 = std::min(B2, 32);
      Mat<S> cols_buf2(cs_copy.patch(), P2 * chunk2);
      Mat<S> gmat(cs_copy.out_c, P2 * chunk2);
      Mat<S> dW = Mat<S>::Zero(wv2.rows(), wv2.cols());
      Eigen::Matrix<S, Eigen::Dynamic, 1> db =
          Eigen::Matrix<S, Eigen::Dynamic, 1>::Zero(cs_copy.out_c);
      Mat<S> dX;
      const bool need_dx = g.nodes_[xp].requires_grad;
      if (need_dx) dX = Mat<S>::Zero(xv2.rows(), xv2.cols());
      Mat<S> dcols;
      for (int b0 = 0; b0 < B2; b0 += chunk2) {
        const int bn = std::min(chunk2, B2 - b0);
        for (int i = 0; i < bn; ++i)
          for (int c = 0; c < cs_copy.out_c; ++c)
            for (int p = 0; p < P2; ++p)
              gmat(c, i * P2 + p) = n.grad(c * P2 + p, b0 + i);
        auto gblock = gmat.leftCols(P2 * bn);
        if (g.nodes_[wp].requires_grad) {
          im2col(xv2, cs_copy, b0, bn, cols_buf2);
          dW.noalias() += gblock * cols_buf2.leftCols(P2 * bn).transpose();
        }
        if (g.nodes_[bp].requires_grad) db += gblock.rowwise().sum();
        if (need_dx) {
          dcols.noalias() = wv2.transpose() * gblock;
          col2im_add(dcols, cs_copy, b0, bn, dX);
        }
      }
      if (g.nodes_[wp].requires_grad) g.accum(wp, dW);
      if (g.nodes_[bp].requires_grad) g.accum(bp, db);
      if (need_dx) g.accum(xp, dX);
    };
    return add_node(std::move(out), {x, w, b}, any_grad({x, w, b}), back);
  }

  // ---- control ----

  // Value copy with no parents: the gradient stop.
  Ref detach(Ref a) { return add_node(nodes_[a].value, {}, false, nullptr); }

  void backward(Ref root) {
    Node& rn = nodes_[root];
    if (rn.value.size() != 1)
      throw ValidationError("backward: root must be a scalar node");
    rn.grad = Mat<S>::Constant(1, 1, S(1));
    for (Ref i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || !n.back) continue;
      n.back(*this, n);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;  // allocated lazily during backward
    std::vector<Ref> parents;
    std::function<void(Graph&, const Node&)> back;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // deque: references stay valid as nodes are added
  std::unordered_map<const void*, Ref> param_refs_;

  Ref add_node(Mat<S> v, std::vector<Ref> parents, bool req,
               std::function<void(Graph&, const Node&)> back) {
    Node n;
    n.value = std::move(v);
    n.parents = std::move(parents);
    n.requires_grad = req;
    if (req) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
  }

  bool any_grad(std::span<const Ref> refs) const {
    for (Ref r : refs)
      if (nodes_[r].requires_grad) return true;
    return false;
  }

  bool any_grad(std::initializer_list<Ref> refs) const {
    return any_grad(std::span<const Ref>(refs.begin(), refs.size()));
  }

  void check_same(Ref a, Ref b, const char* op) const {
    if (nodes_[a].value.rows() != nodes_[b].value.rows() ||
        nodes_[a].value.cols() != nodes_[b].value.cols())
      throw ValidationError(std::string(op) + ": operand shapes differ");
  }

  template <typename D>
  void accum(Ref p, const Eigen::MatrixBase<D>& g) {
    Node& n = nodes_[p];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

  static void im2col(const Mat<S>& x, const ConvShape& cs, int b0, int bn,
                     Mat<S>& cols_out) {
    const int P = cs.positions();
    const int oh = cs.out_h(), ow = cs.out_w();
    for (int i = 0; i < bn; ++i) {
      const S* src = x.col(b0 + i).data();
      for (int c = 0; c < cs.in_c; ++c) {
        for (int ky = 0; ky < cs.kernel; ++ky) {
          for (int kx = 0; kx < cs.kernel; ++kx) {
            const int row = (c * cs.kernel + ky) * cs.kernel + kx;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * cs.stride + ky;
              const S* line = src + (c * cs.in_h + iy) * cs.in_w + kx;
              S* dst = cols_out.data() +
                       static_cast<std::ptrdiff_t>(i * P + oy * ow) *
                           cols_out.rows() +
                       row;
              for (int ox = 0; ox < ow; ++ox)
                dst[static_cast<std::ptrdiff_t>(ox) * cols_out.rows()] =
                    line[ox * cs.stride];
            }
          }
        }
      }
    }
  }

  static void col2im_add(const Mat<S>& dcols, const ConvShape& cs, int b0,
                         int bn, Mat<S>& dx) {
    const int P = cs.positions();
    const int oh = cs.out_h(), ow = cs.out_w();
    for (int i = 0; i < bn; ++i) {
      S* dst = dx.col(b0 + i).data();
      for (int c = 0; c < cs.in_c; ++c) {
        for (int ky = 0; ky < cs.kernel; ++ky) {
          for (int kx = 0; kx < cs.kernel; ++kx) {
            const int row = (c * cs.kernel + ky) * cs.kernel + kx;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * cs.stride + ky;
              S* line = dst + (c * cs.in_h + iy) * cs.in_w + kx;
              const S* src = dcols.data() +
                             static_cast<std::ptrdiff_t>(i * P + oy * ow) *
                                 dcols.rows() +
                             row;
              for (int ox = 0; ox < ow; ++ox)
                line[ox * cs.stride] +=
                    src[static_cast<std::ptrdiff_t>(ox) * dcols.rows()];
            }
          }
        }
      }
    }
  }
};

}  // namespace madview::ad
