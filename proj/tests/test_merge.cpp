#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "madview/merge.hpp"

using namespace madview;
using Md = ad::Mat<double>;
using Graphd = ad::Graph<double>;

namespace {

Eigen::VectorXf random_vec(int n, Rng& rng) {
  Eigen::VectorXf v(n);
  for (int i = 0; i < n; ++i) v(i) = static_cast<float>(rng.normal());
  return v;
}

Md random_mat(int r, int c, Rng& rng) {
  Md m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("merge_sum basics: identity, inverse, loop oracle") {
  Rng rng(31);
  const Eigen::VectorXf v = random_vec(50, rng);
  std::vector<Eigen::VectorXf> one{v};
  CHECK((merge_sum(one).values - v).cwiseAbs().maxCoeff() == 0.f);

  std::vector<Eigen::VectorXf> pair{v, -v};
  CHECK(merge_sum(pair).values.cwiseAbs().maxCoeff() == 0.f);

  std::vector<Eigen::VectorXf> three{random_vec(50, rng), random_vec(50, rng),
                                     random_vec(50, rng)};
  const auto merged = merge_sum(three);
  for (int k = 0; k < 50; ++k) {
    float acc = 0.f;  // scalar loop oracle
    for (const auto& f : three) acc += f(k);
    CHECK(std::abs(merged.values(k) - acc) < 1e-7f);
  }
  CHECK(merged.source_views == std::vector<int>{0, 1, 2});

  std::vector<Eigen::VectorXf> empty;
  CHECK_THROWS_AS(merge_sum(empty), ValidationError);
  std::vector<Eigen::VectorXf> ragged{random_vec(3, rng), random_vec(4, rng)};
  CHECK_THROWS_AS(merge_sum(ragged), ValidationError);
}

TEST_CASE("merge_sum permutation invariance within 1e-6") {
  Rng rng(32);
  std::vector<Eigen::VectorXf> feats;
  for (int i = 0; i < 5; ++i) feats.push_back(random_vec(50, rng));
  const auto base = merge_sum(feats);
  std::vector<int> order(feats.size());
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
    std::vector<Eigen::VectorXf> permuted;
    for (int k : order) permuted.push_back(feats[k]);
    CHECK((merge_sum(permuted).values - base.values).cwiseAbs().maxCoeff() <
          1e-6f);
  }
}

TEST_CASE("merge_sum subset consistency: subset = full minus excluded") {
  Rng rng(33);
  std::vector<Eigen::VectorXf> feats;
  for (int i = 0; i < 4; ++i) feats.push_back(random_vec(50, rng));
  const auto full = merge_sum(feats);
  std::vector<Eigen::VectorXf> subset{feats[0], feats[2]};
  std::vector<Eigen::VectorXf> excluded{feats[1], feats[3]};
  const Eigen::VectorXf expect = full.values - merge_sum(excluded).values;
  CHECK((merge_sum(subset).values - expect).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("merge_concat preserves order and arity") {
  Rng rng(34);
  const Eigen::VectorXf v1 = random_vec(50, rng), v2 = random_vec(50, rng);
  std::vector<Eigen::VectorXf> pair{v1, v2};
  const auto merged = merge_concat(pair, 2);
  CHECK(merged.values.size() == 100);
  CHECK((merged.values.head(50) - v1).cwiseAbs().maxCoeff() == 0.f);
  CHECK((merged.values.tail(50) - v2).cwiseAbs().maxCoeff() == 0.f);

  std::vector<Eigen::VectorXf> one{v1};
  CHECK_THROWS_AS(merge_concat(one, 2), ValidationError);
}

TEST_CASE("merge_frame_stack concatenates channels") {
  Image a(9, 32, 32), b(9, 32, 32), c(9, 32, 32);
  Rng rng(35);
  for (auto* img : {&a, &b, &c})
    for (auto& px : img->data) px = static_cast<float>(rng.uniform());
  std::vector<Image> one{a};
  const Image same = merge_frame_stack(one);
  CHECK(same.c == 9);
  CHECK(same.data == a.data);

  std::vector<Image> three{a, b, c};
  const Image stacked = merge_frame_stack(three);
  CHECK(stacked.c == 27);
  CHECK(stacked.h == 32);
  // channel slice k*9..(k+1)*9 equals view k
  for (int k = 0; k < 3; ++k) {
    const Image& src = three[static_cast<std::size_t>(k)];
    for (int ch = 0; ch < 9; ++ch)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          CHECK(stacked.at(k * 9 + ch, y, x) == src.at(ch, y, x));
  }

  Image odd(3, 16, 32);
  std::vector<Image> bad{a, odd};
  CHECK_THROWS_AS(merge_frame_stack(bad), ValidationError);
}

TEST_CASE("q_mean equals the loop oracle") {
  std::vector<double> one{3.5};
  CHECK(q_mean(one) == 3.5);
  std::vector<double> two{1.0, 3.0};
  CHECK(q_mean(two) == 2.0);
  Rng rng(36);
  std::vector<double> five;
  for (int i = 0; i < 5; ++i) five.push_back(rng.normal());
  double acc = 0;
  for (double q : five) acc += q;
  CHECK(q_mean(five) == doctest::Approx(acc / 5.0).epsilon(1e-12));
  std::vector<double> empty;
  CHECK_THROWS_AS(q_mean(empty), ValidationError);
}

TEST_CASE("fusion sum matches the plain merge and supports subsets") {
  Rng rng(37);
  auto fusion = Fusion<double>::build(MergeStrategy::kSum, 16, 3, 1, 0, rng);
  CHECK(fusion.output_dim() == 16);
  CHECK(fusion.merged_dim_matches_view_dim());
  CHECK(fusion.supports_subset());
  Graphd g;
  std::vector<Graphd::Ref> views{g.constant(random_mat(16, 4, rng)),
                                 g.constant(random_mat(16, 4, rng)),
                                 g.constant(random_mat(16, 4, rng))};
  const Md merged = g.value(fusion.merge(g, views));
  const Md expect =
      g.value(views[0]) + g.value(views[1]) + g.value(views[2]);
  CHECK((merged - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention pooling matches a hand-rolled softmax-weighted sum") {
  Rng rng(38);
  const int d = 8;
  auto fusion = Fusion<double>::build(MergeStrategy::kAttention, d, 2, 1, 0, rng);
  auto params = fusion.params();
  REQUIRE(params.size() == 5);  // query, key w/b, value w/b
  const Md query = params[0]->value;
  const Md wk = params[1]->value, bk = params[2]->value;
  const Md wv = params[3]->value, bv = params[4]->value;

  Graphd g;
  const Md v1 = random_mat(d, 3, rng), v2 = random_mat(d, 3, rng);
  std::vector<Graphd::Ref> views{g.constant(v1), g.constant(v2)};
  const Md got = g.value(fusion.merge(g, views));

  for (int b = 0; b < 3; ++b) {
    const Eigen::VectorXd k1 = wk * v1.col(b) + bk.col(0);
    const Eigen::VectorXd k2 = wk * v2.col(b) + bk.col(0);
    const Eigen::VectorXd u1 = wv * v1.col(b) + bv.col(0);
    const Eigen::VectorXd u2 = wv * v2.col(b) + bv.col(0);
    const double s1 = query.col(0).dot(k1) / std::sqrt(double(d));
    const double s2 = query.col(0).dot(k2) / std::sqrt(double(d));
    const double m = std::max(s1, s2);
    const double w1 = std::exp(s1 - m), w2 = std::exp(s2 - m);
    const Eigen::VectorXd expect = (w1 * u1 + w2 * u2) / (w1 + w2);
    CHECK((got.col(b) - expect).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("attention output is permutation invariant and finite for one view") {
  Rng rng(39);
  const int d = 12;
  auto fusion = Fusion<double>::build(MergeStrategy::kAttention, d, 3, 2, 0, rng);
  Graphd g;
  const Md v1 = random_mat(d, 2, rng), v2 = random_mat(d, 2, rng),
           v3 = random_mat(d, 2, rng);
  std::vector<Graphd::Ref> abc{g.constant(v1), g.constant(v2), g.constant(v3)};
  std::vector<Graphd::Ref> cab{abc[2], abc[0], abc[1]};
  const Md out1 = g.value(fusion.merge(g, abc));
  const Md out2 = g.value(fusion.merge(g, cab));
  CHECK((out1 - out2).cwiseAbs().maxCoeff() < 1e-5);

  std::vector<Graphd::Ref> single{abc[0]};
  const Md one = g.value(fusion.merge(g, single));
  CHECK(one.allFinite());
}

TEST_CASE("vit layer: single token equals its block output, permutation invariant") {
  Rng rng(40);
  const int d = 10;
  auto fusion = Fusion<double>::build(MergeStrategy::kVitLayer, d, 3, 1, 0, rng);
  Graphd g;
  const Md v1 = random_mat(d, 2, rng), v2 = random_mat(d, 2, rng),
           v3 = random_mat(d, 2, rng);

  // permutation invariance of the mean-pooled output
  std::vector<Graphd::Ref> abc{g.constant(v1), g.constant(v2), g.constant(v3)};
  std::vector<Graphd::Ref> bca{abc[1], abc[2], abc[0]};
  CHECK((g.value(fusion.merge(g, abc)) - g.value(fusion.merge(g, bca)))
            .cwiseAbs()
            .maxCoeff() < 1e-5);

  // reference forward pass for a single token: attention collapses to the
  // value projection of the token itself
  auto params = fusion.params();
  // order: ln1(g,b), ln2(g,b), wq(w,b), wk(w,b), wv(w,b), wo(w,b), ff1, ff2
  const Md ln1_g = params[0]->value, ln1_b = params[1]->value;
  const Md ln2_g = params[2]->value, ln2_b = params[3]->value;
  const Md wv = params[8]->value, bv = params[9]->value;
  const Md wo = params[10]->value, bo = params[11]->value;
  const Md ff1 = params[12]->value, ff1b = params[13]->value;
  const Md ff2 = params[14]->value, ff2b = params[15]->value;

  std::vector<Graphd::Ref> single{g.constant(v1)};
  const Md got = g.value(fusion.merge(g, single));
  for (int b = 0; b < 2; ++b) {
    const Eigen::VectorXd x = v1.col(b);
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    const Eigen::VectorXd xhat = (x.array() - mu) / std::sqrt(var + 1e-5);
    const Eigen::VectorXd n1 =
        (xhat.array() * ln1_g.col(0).array() + ln1_b.col(0).array()).matrix();
    const Eigen::VectorXd attn = wv * n1 + bv.col(0);  // softmax over one token
    const Eigen::VectorXd r1 = x + wo * attn + bo.col(0);
    const double mu2 = r1.mean();
    const double var2 = (r1.array() - mu2).square().mean();
    const Eigen::VectorXd n2 =
        (((r1.array() - mu2) / std::sqrt(var2 + 1e-5)) * ln2_g.col(0).array() +
         ln2_b.col(0).array())
            .matrix();
    const Eigen::VectorXd hidden =
        (ff1 * n2 + ff1b.col(0)).cwiseMax(0.0);
    const Eigen::VectorXd expect = r1 + ff2 * hidden + ff2b.col(0);
    CHECK((got.col(b) - expect).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("fused outputs stay finite for finite inputs across strategies") {
  Rng rng(41);
  for (auto kind : {MergeStrategy::kSum, MergeStrategy::kConcat,
                    MergeStrategy::kAttention, MergeStrategy::kVitLayer}) {
    auto fusion = Fusion<double>::build(kind, 8, 3, 1, 0, rng);
    Graphd g;
    std::vector<Graphd::Ref> views{g.constant(random_mat(8, 4, rng)),
                                   g.constant(random_mat(8, 4, rng)),
                                   g.constant(random_mat(8, 4, rng))};
    CHECK(g.value(fusion.merge(g, views)).allFinite());
  }
}

TEST_CASE("dimension contract: only matching strategies suit feature augmentation") {
  Rng rng(42);
  CHECK(Fusion<double>::build(MergeStrategy::kSum, 8, 3, 1, 0, rng)
            .merged_dim_matches_view_dim());
  CHECK(Fusion<double>::build(MergeStrategy::kAttention, 8, 3, 1, 0, rng)
            .merged_dim_matches_view_dim());
  CHECK(Fusion<double>::build(MergeStrategy::kVitLayer, 8, 3, 1, 0, rng)
            .merged_dim_matches_view_dim());
  CHECK_FALSE(Fusion<double>::build(MergeStrategy::kConcat, 8, 3, 1, 0, rng)
                  .merged_dim_matches_view_dim());
  CHECK_FALSE(Fusion<double>::build(MergeStrategy::kFrameStack, 8, 3, 1, 0, rng)
                  .merged_dim_matches_view_dim());
  CHECK_FALSE(Fusion<double>::build(MergeStrategy::kQMean, 8, 3, 1, 0, rng)
                  .merged_dim_matches_view_dim());
  CHECK(Fusion<double>::build(MergeStrategy::kConcat, 8, 3, 1, 0, rng)
            .output_dim() == 24);
}
