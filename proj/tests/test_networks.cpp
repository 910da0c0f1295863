#include <doctest.h>

#include <cmath>

#include "madview/networks.hpp"

using namespace madview;
using Md = ad::Mat<double>;
using Graphd = ad::Graph<double>;

namespace {

Md random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Md m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

Md random_image(int rows, int cols, Rng& rng) {
  Md m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform();
  return m;
}

}  // namespace

TEST_CASE("encoder output is deterministic with feature_dim rows") {
  Rng rng(5);
  auto enc = Encoder<double>::build(EncoderPreset::kDesk32, 9, 32, 32, 50, rng);
  const Md img = random_image(9 * 32 * 32, 2, rng);
  const Md f1 = enc.encode(img);
  const Md f2 = enc.encode(img);
  CHECK(f1.rows() == 50);
  CHECK(f1.cols() == 2);
  CHECK((f1 - f2).cwiseAbs().maxCoeff() == 0.0);
  // two different views through the same params: different features, same dim
  CHECK((f1.col(0) - f1.col(1)).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("batched encoding equals per-image encoding row by row") {
  Rng rng(6);
  auto enc = Encoder<double>::build(EncoderPreset::kDesk32, 3, 32, 32, 16, rng);
  const int B = 5;
  const Md batch = random_image(3 * 32 * 32, B, rng);
  const Md all = enc.encode(batch);
  for (int b = 0; b < B; ++b) {
    const Md one = enc.encode(batch.col(b));
    CHECK((all.col(b) - one.col(0)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("encoder rejects shape mismatches") {
  Rng rng(7);
  auto enc = Encoder<double>::build(EncoderPreset::kDesk32, 9, 32, 32, 50, rng);
  CHECK_THROWS_AS(enc.encode(Md::Zero(9 * 32 * 31, 1)), ValidationError);
  CHECK_THROWS_AS(Encoder<double>::build(EncoderPreset::kDqn84, 9, 16, 16, 50,
                                         rng),
                  ValidationError);
}

TEST_CASE("dqn84 preset accepts 84x84 inputs") {
  Rng rng(8);
  auto enc = Encoder<double>::build(EncoderPreset::kDqn84, 9, 84, 84, 50, rng);
  const Md img = random_image(9 * 84 * 84, 1, rng);
  CHECK(enc.encode(img).rows() == 50);
}

TEST_CASE("actor mean mode is deterministic and actions stay inside (-1,1)") {
  Rng rng(9);
  auto actor = Actor<double>::build(12, 3, 16, -10.0, 2.0, rng);
  const Md input = random_mat(12, 4, rng);
  Graphd g;
  auto a1 = g.value(actor.mean_action(g, g.constant(input)));
  Graphd g2;
  auto a2 = g2.value(actor.mean_action(g2, g2.constant(input)));
  CHECK((a1 - a2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a1.cwiseAbs().maxCoeff() < 1.0);

  Graphd g3;
  const Md noise = random_mat(3, 4, rng);
  auto sample = actor.sample(g3, g3.constant(input), noise);
  CHECK(g3.value(sample.action).cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("sample log_prob matches an independent squashed-Gaussian density") {
  Rng rng(10);
  auto actor = Actor<double>::build(8, 2, 16, -10.0, 2.0, rng);
  const Md input = random_mat(8, 6, rng, 0.5);
  const Md noise = random_mat(2, 6, rng, 0.7);
  Graphd g;
  auto in_ref = g.constant(input);
  auto sample = actor.sample(g, in_ref, noise);
  auto [mu_ref, ls_ref] = actor.heads(g, in_ref);
  const Md action = g.value(sample.action);
  const Md log_prob = g.value(sample.log_prob);
  const Md mu = g.value(mu_ref);
  const Md log_std = g.value(ls_ref);

  for (int b = 0; b < 6; ++b) {
    double lp = 0;
    for (int k = 0; k < 2; ++k) {
      const double a = action(k, b);
      const double u = 0.5 * std::log((1 + a) / (1 - a));  // atanh
      const double sd = std::exp(log_std(k, b));
      const double z = (u - mu(k, b)) / sd;
      lp += -0.5 * z * z - log_std(k, b) - 0.5 * std::log(2 * M_PI);
      lp -= std::log(1 - a * a);
    }
    CHECK(std::abs(lp - log_prob(0, b)) < 1e-5);
  }
}

TEST_CASE("actor log_prob gradients match finite differences") {
  Rng rng(12);
  auto actor = Actor<double>::build(4, 2, 8, -10.0, 2.0, rng);
  const Md input = random_mat(4, 3, rng, 0.5);
  const Md noise = random_mat(2, 3, rng, 0.5);

  auto eval = [&]() {
    Graphd g;
    auto s = actor.sample(g, g.constant(input), noise);
    auto loss = g.mean_all(s.log_prob);
    return std::pair<double, Graphd>(g.value(loss)(0, 0), std::move(g));
  };

  Graphd g;
  auto s = actor.sample(g, g.constant(input), noise);
  auto loss = g.mean_all(s.log_prob);
  g.backward(loss);

  const double h = 1e-6;
  for (nn::Tensor<double>* t : actor.params()) {
    const Md analytic = g.grad_of(t);
    for (int j = 0; j < t->value.cols(); ++j) {
      for (int i = 0; i < t->value.rows(); ++i) {
        const double keep = t->value(i, j);
        t->value(i, j) = keep + h;
        const double fp = eval().first;
        t->value(i, j) = keep - h;
        const double fm = eval().first;
        t->value(i, j) = keep;
        const double fd = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic(i, j)),
                                       1e-4});
        CHECK(std::abs(fd - analytic(i, j)) / denom < 1e-4);
      }
    }
  }
}

TEST_CASE("twin critic heads differ at init and batch evaluation is row-consistent") {
  Rng rng(14);
  auto critic = TwinCritic<double>::build(10, 8, rng);
  const Md input = random_mat(10, 5, rng);
  Graphd g;
  auto [q1, q2] = critic.forward(g, g.constant(input));
  const Md v1 = g.value(q1), v2 = g.value(q2);
  CHECK((v1 - v2).cwiseAbs().maxCoeff() > 1e-8);
  Graphd g2;
  auto [q1b, q2b] = critic.forward(g2, g2.constant(input));
  CHECK((g2.value(q1b) - v1).cwiseAbs().maxCoeff() == 0.0);
  for (int b = 0; b < 5; ++b) {
    Graphd gb;
    auto [qa, qb_] = critic.forward(gb, gb.constant(Md(input.col(b))));
    CHECK(std::abs(gb.value(qa)(0, 0) - v1(0, b)) < 1e-6);
    CHECK(std::abs(gb.value(qb_)(0, 0) - v2(0, b)) < 1e-6);
  }
}

TEST_CASE("critic gradients match finite differences") {
  Rng rng(15);
  auto critic = TwinCritic<double>::build(4, 8, rng);
  const Md input = random_mat(4, 2, rng);
  auto eval = [&]() {
    Graphd g;
    auto [q1, q2] = critic.forward(g, g.constant(input));
    return g.value(g.mean_all(g.add(q1, g.scale(q2, 2.0))))(0, 0);
  };
  Graphd g;
  auto [q1, q2] = critic.forward(g, g.constant(input));
  auto loss = g.mean_all(g.add(q1, g.scale(q2, 2.0)));
  g.backward(loss);
  const double h = 1e-6;
  for (nn::Tensor<double>* t : critic.params()) {
    const Md analytic = g.grad_of(t);
    for (int j = 0; j < t->value.cols(); ++j)
      for (int i = 0; i < t->value.rows(); ++i) {
        const double keep = t->value(i, j);
        t->value(i, j) = keep + h;
        const double fp = eval();
        t->value(i, j) = keep - h;
        const double fm = eval();
        t->value(i, j) = keep;
        const double fd = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic(i, j)),
                                       1e-4});
        CHECK(std::abs(fd - analytic(i, j)) / denom < 1e-4);
      }
  }
}

TEST_CASE("soft_update endpoints, formula and linearity") {
  Rng rng(16);
  nn::Tensor<double> target, online;
  target.name = online.name = "x";
  target.value = Md::Constant(1, 1, 1.0);
  online.value = Md::Constant(1, 1, 0.0);
  std::vector<nn::Tensor<double>*> t{&target};
  std::vector<const nn::Tensor<double>*> o{&online};

  auto reset = [&]() { target.value(0, 0) = 1.0; };

  nn::soft_update<double>({t.data(), 1}, {o.data(), 1}, 0.01);
  CHECK(target.value(0, 0) == doctest::Approx(0.99).epsilon(1e-12));

  reset();
  nn::soft_update<double>({t.data(), 1}, {o.data(), 1}, 1.0);
  CHECK(target.value(0, 0) == 0.0);

  reset();
  nn::soft_update<double>({t.data(), 1}, {o.data(), 1}, 0.0);
  CHECK(target.value(0, 0) == 1.0);

  // twice with tau == once with 1-(1-tau)^2, per scalar
  const double tau = 0.3;
  reset();
  nn::soft_update<double>({t.data(), 1}, {o.data(), 1}, tau);
  nn::soft_update<double>({t.data(), 1}, {o.data(), 1}, tau);
  const double twice = target.value(0, 0);
  reset();
  nn::soft_update<double>({t.data(), 1}, {o.data(), 1},
                          1.0 - (1.0 - tau) * (1.0 - tau));
  CHECK(target.value(0, 0) == doctest::Approx(twice).epsilon(1e-12));

  nn::Tensor<double> wrong;
  wrong.value = Md::Zero(2, 1);
  std::vector<const nn::Tensor<double>*> bad{&wrong};
  CHECK_THROWS_AS(
      (nn::soft_update<double>({t.data(), 1}, {bad.data(), 1}, 0.5)),
      ValidationError);
}

TEST_CASE("gradients from multiple views accumulate into the shared encoder") {
  Rng rng(18);
  auto enc = Encoder<double>::build(EncoderPreset::kDesk32, 3, 32, 32, 8, rng);
  std::vector<Md> views{random_image(3 * 32 * 32, 2, rng),
                        random_image(3 * 32 * 32, 2, rng),
                        random_image(3 * 32 * 32, 2, rng)};

  // single graph, three encode calls, summed loss
  Graphd g;
  Graphd::Ref loss = -1;
  for (const Md& v : views) {
    auto li = g.mean_all(g.square(enc.forward(g, g.constant(v))));
    loss = loss < 0 ? li : g.add(loss, li);
  }
  g.backward(loss);

  // oracle: per-view graphs, gradients summed by hand
  for (nn::Tensor<double>* t : enc.params()) {
    Md summed = Md::Zero(t->value.rows(), t->value.cols());
    for (const Md& v : views) {
      Graphd gi;
      auto li = gi.mean_all(gi.square(enc.forward(gi, gi.constant(v))));
      gi.backward(li);
      summed += gi.grad_of(t);
    }
    CHECK((g.grad_of(t) - summed).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("random shift: zero pad is the identity") {
  Rng rng(20);
  const auto off = draw_shift_offsets(4, 0, rng);
  for (auto [dx, dy] : off.dxy) {
    CHECK(dx == 0);
    CHECK(dy == 0);
  }
  const Md imgs = random_image(3 * 8 * 8, 4, rng);
  const Md out = shift_images(imgs, off, 3, 8, 8);
  CHECK((out - imgs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random shift translates with replicate padding") {
  Md img(1 * 3 * 3, 1);
  img.col(0) << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  ShiftOffsets off;
  off.dxy = {{1, 0}};  // shift content right by one
  const Md out = shift_images(img, off, 1, 3, 3);
  Md expect(9, 1);
  expect.col(0) << 1, 1, 2, 4, 4, 5, 7, 7, 8;
  CHECK((out - expect).cwiseAbs().maxCoeff() == 0.0);

  // constant image is invariant under any shift
  Rng rng(21);
  const Md cimg = Md::Constant(3 * 5 * 5, 2, 0.25);
  const auto off2 = draw_shift_offsets(2, 4, rng);
  CHECK((shift_images(cimg, off2, 3, 5, 5) - cimg).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("offsets are bounded by pad and identical when reapplied") {
  Rng rng(22);
  const auto off = draw_shift_offsets(64, 4, rng);
  for (auto [dx, dy] : off.dxy) {
    CHECK(std::abs(dx) <= 4);
    CHECK(std::abs(dy) <= 4);
  }
  // the same offsets applied to several views move them identically
  const Md view = random_image(3 * 6 * 6, 64, rng);
  const Md a = shift_images(view, off, 3, 6, 6);
  const Md b = shift_images(view, off, 3, 6, 6);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("temperature parameter stays positive") {
  EntropyTemperature<double> temp;
  temp.init(0.1);
  CHECK(temp.value() == doctest::Approx(0.1));
  temp.log_temp.value(0, 0) = -20.0;
  CHECK(temp.value() > 0.0);
}
