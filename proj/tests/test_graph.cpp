#include <doctest.h>

#include <functional>

#include "madview/graph.hpp"
#include "madview/rng.hpp"

using namespace madview;
using ad::ConvShape;
using ad::Graph;
using Md = ad::Mat<double>;

namespace {

Md random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Md m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Central finite differences of `loss(params)` against the analytic gradient
// from one backward pass. `build` maps parameter values to the loss value.
void check_gradients(std::vector<Md> params,
                     const std::function<double(const std::vector<Md>&)>& eval,
                     const std::function<void(Graph<double>&,
                                              const std::vector<Md>&,
                                              std::vector<Graph<double>::Ref>&,
                                              Graph<double>::Ref&)>& build,
                     double tol = 1e-6, double h = 1e-5) {
  Graph<double> g;
  std::vector<Graph<double>::Ref> refs;
  Graph<double>::Ref loss_ref = -1;
  build(g, params, refs, loss_ref);
  g.backward(loss_ref);

  for (std::size_t p = 0; p < params.size(); ++p) {
    const Md analytic = g.grad(refs[p]);
    for (int j = 0; j < params[p].cols(); ++j) {
      for (int i = 0; i < params[p].rows(); ++i) {
        std::vector<Md> plus = params, minus = params;
        plus[p](i, j) += h;
        minus[p](i, j) -= h;
        const double fd = (eval(plus) - eval(minus)) / (2 * h);
        const double an = analytic(i, j);
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
        CHECK(std::abs(fd - an) / denom < tol);
      }
    }
  }
}

}  // namespace

TEST_CASE("elementwise, reduction and broadcast ops differentiate correctly") {
  Rng rng(11);
  std::vector<Md> params{random_mat(3, 4, rng), random_mat(3, 4, rng),
                         random_mat(3, 1, rng), random_mat(1, 4, rng)};
  params[1] = (params[1].array().abs() + 0.5).matrix();  // keep log/div away from 0

  auto make = [](Graph<double>& g, const std::vector<Md>& p,
                 std::vector<Graph<double>::Ref>& refs,
                 Graph<double>::Ref& loss) {
    refs = {g.param(p[0], &p[0]), g.param(p[1], &p[1]), g.param(p[2], &p[2]),
            g.param(p[3], &p[3])};
    auto a = refs[0], b = refs[1];
    auto t = g.tanh_(g.mul(a, b));
    t = g.add(t, g.relu(g.sub(a, b)));
    t = g.add(t, g.div(a, b));
    t = g.add(t, g.log_(g.add_scalar(g.square(b), 0.3)));
    t = g.add(t, g.exp_(g.scale(a, 0.1)));
    t = g.min_(t, g.mul(a, a));
    t = g.add_colvec(t, refs[2]);
    t = g.mul_colvec(t, refs[2]);
    t = g.mul_rowvec(t, refs[3]);
    auto sm = g.softmax_cols(t);
    loss = g.mean_all(g.add(g.colsum(g.square(sm)), g.colsum(t)));
  };
  auto eval = [&](const std::vector<Md>& p) {
    Graph<double> g;
    std::vector<Graph<double>::Ref> refs;
    Graph<double>::Ref loss = -1;
    make(g, p, refs, loss);
    return g.value(loss)(0, 0);
  };
  check_gradients(params, eval, make, 1e-5);
}

TEST_CASE("matmul, slices, concat and layer_norm differentiate correctly") {
  Rng rng(13);
  std::vector<Md> params{random_mat(4, 5, rng), random_mat(5, 3, rng),
                         random_mat(4, 1, rng), random_mat(4, 1, rng)};
  auto make = [](Graph<double>& g, const std::vector<Md>& p,
                 std::vector<Graph<double>::Ref>& refs,
                 Graph<double>::Ref& loss) {
    refs = {g.param(p[0], &p[0]), g.param(p[1], &p[1]), g.param(p[2], &p[2]),
            g.param(p[3], &p[3])};
    auto y = g.matmul(refs[0], refs[1]);       // 4x3
    auto ln = g.layer_norm(y, refs[2], refs[3]);
    auto top = g.rows(ln, 0, 2);
    auto bottom = g.rows(ln, 2, 2);
    std::vector<Graph<double>::Ref> parts{top, bottom};
    auto cat = g.vcat(parts);
    std::vector<Graph<double>::Ref> hparts{g.cols(cat, 0, 2), g.cols(cat, 2, 1)};
    auto hcat = g.hcat(hparts);
    loss = g.mean_all(g.square(hcat));
  };
  auto eval = [&](const std::vector<Md>& p) {
    Graph<double> g;
    std::vector<Graph<double>::Ref> refs;
    Graph<double>::Ref loss = -1;
    make(g, p, refs, loss);
    return g.value(loss)(0, 0);
  };
  check_gradients(params, eval, make, 1e-5);
}

TEST_CASE("conv2d matches a direct nested-loop convolution") {
  Rng rng(17);
  ConvShape cs{2, 6, 7, 3, 3, 2};
  const Md x = random_mat(cs.in_size(), 4, rng);
  const Md w = random_mat(cs.out_c, cs.patch(), rng);
  const Md b = random_mat(cs.out_c, 1, rng);

  Graph<double> g;
  auto out = g.conv2d(g.constant(x), g.constant(w), g.constant(b), cs);
  const Md& got = g.value(out);

  for (int bcol = 0; bcol < 4; ++bcol) {
    for (int oc = 0; oc < cs.out_c; ++oc) {
      for (int oy = 0; oy < cs.out_h(); ++oy) {
        for (int ox = 0; ox < cs.out_w(); ++ox) {
          double acc = b(oc, 0);
          for (int ic = 0; ic < cs.in_c; ++ic)
            for (int ky = 0; ky < cs.kernel; ++ky)
              for (int kx = 0; kx < cs.kernel; ++kx) {
                const int iy = oy * cs.stride + ky;
                const int ix = ox * cs.stride + kx;
                acc += w(oc, (ic * cs.kernel + ky) * cs.kernel + kx) *
                       x((ic * cs.in_h + iy) * cs.in_w + ix, bcol);
              }
          const int row = oc * cs.positions() + oy * cs.out_w() + ox;
          CHECK(got(row, bcol) == doctest::Approx(acc).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(19);
  ConvShape cs{2, 5, 5, 2, 3, 1};
  std::vector<Md> params{random_mat(cs.in_size(), 2, rng),
                         random_mat(cs.out_c, cs.patch(), rng),
                         random_mat(cs.out_c, 1, rng)};
  auto make = [cs](Graph<double>& g, const std::vector<Md>& p,
                   std::vector<Graph<double>::Ref>& refs,
                   Graph<double>::Ref& loss) {
    refs = {g.param(p[0], &p[0]), g.param(p[1], &p[1]), g.param(p[2], &p[2])};
    auto out = g.conv2d(refs[0], refs[1], refs[2], cs);
    loss = g.mean_all(g.square(g.tanh_(out)));
  };
  auto eval = [&](const std::vector<Md>& p) {
    Graph<double> g;
    std::vector<Graph<double>::Ref> refs;
    Graph<double>::Ref loss = -1;
    make(g, p, refs, loss);
    return g.value(loss)(0, 0);
  };
  check_gradients(params, eval, make, 1e-5);
}

TEST_CASE("detach blocks gradient flow exactly") {
  Rng rng(23);
  const Md x = random_mat(3, 2, rng);
  Graph<double> g;
  auto p = g.param(x, &x);
  auto through = g.square(p);
  auto stopped = g.detach(through);
  auto loss = g.mean_all(g.mul(stopped, p));
  g.backward(loss);
  // d/dp of mean(stop(p^2) * p) = mean-weight * p^2 only
  const Md expected = (x.array().square() / 6.0).matrix();
  CHECK((g.grad(p) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameters registered twice share one node and accumulate") {
  Rng rng(29);
  const Md x = random_mat(2, 2, rng);
  Graph<double> g;
  auto p1 = g.param(x, &x);
  auto p2 = g.param(x, &x);
  CHECK(p1 == p2);
  auto loss = g.mean_all(g.add(g.square(p1), g.scale(p2, 3.0)));
  g.backward(loss);
  const Md expected = ((2.0 * x.array() + 3.0) / 4.0).matrix();
  CHECK((g.grad_of(&x) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("shape mismatches are rejected") {
  Graph<double> g;
  auto a = g.constant(Md::Zero(2, 3));
  auto b = g.constant(Md::Zero(3, 2));
  CHECK_THROWS_AS(g.add(a, b), ValidationError);
  CHECK_THROWS_AS(g.mul(a, b), ValidationError);
  CHECK_THROWS_AS(g.rows(a, 1, 5), ValidationError);
  CHECK_THROWS_AS(g.backward(a), ValidationError);
}
