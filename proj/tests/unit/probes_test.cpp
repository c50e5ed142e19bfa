#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "lexiscope/error.hpp"
#include "lexiscope/probes.hpp"

using namespace lexiscope;

namespace {

Vector vec(std::initializer_list<float> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), x.data());
  return x;
}

// Full sort of every distance, then a plain vote count.
Label knn_oracle(const std::vector<ProbePoint>& train, const Vector& q, int k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < train.size(); ++i) {
    double s = 0;
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      const double diff = static_cast<double>(train[i].x[j]) - q[j];
      s += diff * diff;
    }
    d.emplace_back(s, i);
  }
  std::sort(d.begin(), d.end());
  int words = 0, nonwords = 0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(d.size())); ++i)
    (train[d[static_cast<std::size_t>(i)].second].label == Label::Word ? words : nonwords)++;
  return words >= nonwords ? Label::Word : Label::Nonword;
}

std::vector<ProbePoint> random_points(std::mt19937_64& rng, int n, int dim) {
  std::normal_distribution<float> g;
  std::vector<ProbePoint> pts;
  for (int i = 0; i < n; ++i) {
    Vector x(dim);
    for (int j = 0; j < dim; ++j) x[j] = g(rng);
    pts.push_back({x, rng() % 2 ? Label::Word : Label::Nonword, 0});
  }
  return pts;
}

}  // namespace

TEST(Knn, AllWordTrainSet) {
  std::vector<ProbePoint> train;
  for (int i = 0; i < 5; ++i) train.push_back({vec({float(i), 0}), Label::Word, 0});
  EXPECT_EQ(knn_classify(train, vec({100, -3})), Label::Word);
}

TEST(Knn, HandExample) {
  std::vector<ProbePoint> train;
  for (int i = 0; i < 3; ++i) train.push_back({vec({0, 0}), Label::Word, 0});
  for (int i = 0; i < 3; ++i) train.push_back({vec({10, 10}), Label::Nonword, 0});
  EXPECT_EQ(knn_classify(train, vec({1, 1}), 4), Label::Word);
}

TEST(Knn, SplitVoteGoesToWord) {
  std::vector<ProbePoint> train = {{vec({0}), Label::Nonword, 0},
                                   {vec({1}), Label::Word, 0},
                                   {vec({-1}), Label::Nonword, 0},
                                   {vec({2}), Label::Word, 0}};
  EXPECT_EQ(knn_classify(train, vec({0.5f}), 4), Label::Word);
}

TEST(Knn, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(11);
  const auto train = random_points(rng, 200, 2);
  for (int k : {1, 2, 3, 4, 7}) {
    const auto queries = random_points(rng, 50, 2);
    for (const auto& q : queries) EXPECT_EQ(knn_classify(train, q.x, k), knn_oracle(train, q.x, k));
  }
}

TEST(Knn, Errors) {
  std::vector<ProbePoint> empty;
  EXPECT_THROW(knn_classify(empty, vec({1})), Error);
  std::vector<ProbePoint> one = {{vec({0}), Label::Word, 0}};
  EXPECT_THROW(knn_classify(one, vec({1}), 0), Error);
}

TEST(Knn, SeparatedClustersAreClassifiedPerfectly) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g(0.0f, 0.1f);
  std::vector<ProbePoint> pts;
  for (int i = 0; i < 100; ++i) {
    Vector x(8), y(8);
    for (int j = 0; j < 8; ++j) x[j] = g(rng), y[j] = 1.0f + g(rng);
    pts.push_back({x, Label::Word, 0});
    pts.push_back({y, Label::Nonword, 0});
  }
  const auto ds = split_dataset(pts, 5);
  EXPECT_EQ(ds.train.size(), 160u);
  EXPECT_EQ(ds.eval.size(), 40u);
  EXPECT_DOUBLE_EQ(knn_accuracy(ds.train, ds.eval), 1.0);
}

TEST(Knn, SplitKeepsLabelBalance) {
  std::mt19937_64 rng(4);
  auto pts = random_points(rng, 0, 2);
  for (int i = 0; i < 50; ++i) pts.push_back({vec({float(i)}), Label::Word, 0});
  for (int i = 0; i < 30; ++i) pts.push_back({vec({float(-i)}), Label::Nonword, 0});
  const auto a = split_dataset(pts, 9), b = split_dataset(pts, 9);
  const auto words = std::count_if(a.train.begin(), a.train.end(), [](auto& p) { return p.label == Label::Word; });
  EXPECT_EQ(words, 40);
  EXPECT_EQ(a.train.size(), 64u);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].x, b.train[i].x);
}

TEST(LogitLens, HandExample) {
  Matrix E(3, 2);
  E << 1, 0, 0, 1, -1, 0;
  EXPECT_EQ(logit_lens_input(vec({2, 1}), E), (TokenIds{0, 1, 2}));
}

TEST(LogitLens, ZeroHiddenKeepsIdOrder) {
  Matrix E = Matrix::Random(5, 3);
  EXPECT_EQ(logit_lens_input(Vector::Zero(3), E), (TokenIds{0, 1, 2, 3, 4}));
  EXPECT_FALSE(lens_hit(Vector::Zero(3), E, 0));
  EXPECT_THROW(cosine_retrieval(Vector::Zero(3), E), Error);
}

TEST(LogitLens, TopOneMatchesArgmax) {
  std::mt19937_64 rng(8);
  std::normal_distribution<float> g;
  Matrix E(50, 6);
  for (Eigen::Index i = 0; i < E.size(); ++i) E.data()[i] = g(rng);
  for (int q = 0; q < 30; ++q) {
    Vector h(6);
    for (int j = 0; j < 6; ++j) h[j] = g(rng);
    Eigen::Index best = 0;
    (E * h).maxCoeff(&best);
    EXPECT_EQ(logit_lens_input(h, E).front(), best);
    EXPECT_TRUE(lens_hit(h, E, static_cast<TokenId>(best)));
  }
}

TEST(LogitLens, TiesAreMisses) {
  Matrix E(2, 2);
  E << 1, 0, 1, 0;
  EXPECT_FALSE(lens_hit(vec({1, 0}), E, 0));
  EXPECT_FALSE(lens_hit(vec({1, 0}), E, 1));
}

TEST(Cosine, SelfSimilarityAndScaleInvariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> g;
  Matrix E(8, 4);
  for (Eigen::Index i = 0; i < E.size(); ++i) E.data()[i] = g(rng);
  for (int t = 0; t < 8; ++t) {
    const Vector h = E.row(t).transpose();
    EXPECT_EQ(cosine_retrieval(h, E).front(), t);
    EXPECT_TRUE(cosine_hit(h, E, t));
  }
  for (int q = 0; q < 20; ++q) {
    Vector h(4);
    for (int j = 0; j < 4; ++j) h[j] = g(rng);
    const TokenIds r = cosine_retrieval(h, E);
    EXPECT_EQ(cosine_retrieval(Vector(h * 3.5f), E), r);
    std::vector<double> sims(8);
    for (int i = 0; i < 8; ++i)
      sims[static_cast<std::size_t>(i)] = E.row(i).dot(h.transpose()) / (E.row(i).norm() * h.norm());
    EXPECT_EQ(r.front(), std::max_element(sims.begin(), sims.end()) - sims.begin());
  }
}

TEST(Cosine, AgreesWithLensForEqualNormRows) {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> g;
  Matrix E(20, 5);
  for (Eigen::Index i = 0; i < E.size(); ++i) E.data()[i] = g(rng);
  E.rowwise().normalize();
  for (int q = 0; q < 50; ++q) {
    Vector h(5);
    for (int j = 0; j < 5; ++j) h[j] = g(rng);
    EXPECT_EQ(cosine_retrieval(h, E).front(), logit_lens_input(h, E).front());
  }
}

TEST(RetrievalCurve, Examples) {
  const auto all = retrieval_curve({{true, true}, {true, true}});
  EXPECT_EQ(all.per_layer, (std::vector<double>{1, 1}));
  EXPECT_EQ(all.cumulative, (std::vector<double>{1, 1}));
  const auto c = retrieval_curve({{false, true}, {true, false}});
  EXPECT_EQ(c.per_layer, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(c.cumulative, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(c.n_items, 2u);
  const auto none = retrieval_curve({{false}});
  EXPECT_EQ(none.per_layer, (std::vector<double>{0.0}));
  EXPECT_EQ(none.cumulative, (std::vector<double>{0.0}));
}

TEST(RetrievalCurve, CumulativeIsMonotone) {
  std::mt19937_64 rng(1);
  std::vector<std::vector<bool>> hits(40, std::vector<bool>(6));
  for (auto& row : hits)
    for (std::size_t l = 0; l < row.size(); ++l) row[l] = rng() % 4 == 0;
  const auto c = retrieval_curve(hits);
  for (std::size_t l = 1; l < c.cumulative.size(); ++l) EXPECT_GE(c.cumulative[l], c.cumulative[l - 1]);
  EXPECT_GE(c.cumulative.back(), *std::max_element(c.per_layer.begin(), c.per_layer.end()));
}

TEST(SeriesCsv, Format) {
  std::ostringstream a, b;
  const std::vector<double> v{0.5, 0.25};
  write_series_csv(a, v);
  write_series_csv(b, v, "value", "typo");
  EXPECT_EQ(a.str(), "layer,value\n0,0.5\n1,0.25\n");
  EXPECT_EQ(b.str(), "layer,value,group\n0,0.5,typo\n1,0.25,typo\n");
}
