#include "lexiscope/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "lexiscope/error.hpp"

namespace lexiscope {

ProbeDataset split_dataset(std::vector<ProbePoint> points, std::uint64_t seed, double train_fraction) {
  std::vector<ProbePoint> words, nonwords;
  for (auto& p : points) (p.label == Label::Word ? words : nonwords).push_back(std::move(p));
  std::mt19937_64 rng(seed);
  ProbeDataset ds;
  for (auto* group : {&words, &nonwords}) {
    // Fisher-Yates with the raw engine keeps the split identical across stdlibs.
    for (std::size_t i = group->size(); i > 1; --i) std::swap((*group)[i - 1], (*group)[rng() % i]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(group->size())));
    for (std::size_t i = 0; i < group->size(); ++i)
      (i < n_train ? ds.train : ds.eval).push_back(std::move((*group)[i]));
  }
  return ds;
}

Label knn_classify(std::span<const ProbePoint> train, const Vector& query, int k) {
  if (train.empty()) throw Error(ErrorCode::EmptyTrainSet, "kNN needs training points");
  if (k < 1 || static_cast<std::size_t>(k) > train.size())
    throw Error(ErrorCode::ConfigError, "k must lie in [1, |train|]");
  std::vector<std::pair<double, std::size_t>> dist(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].x.size() != query.size())
      throw Error(ErrorCode::DimensionMismatch, "probe point width differs from query");
    dist[i] = {(train[i].x - query).cast<double>().squaredNorm(), i};
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  int words = 0;
  for (int i = 0; i < k; ++i) words += train[dist[static_cast<std::size_t>(i)].second].label == Label::Word;
  return 2 * words >= k ? Label::Word : Label::Nonword;
}

double knn_accuracy(std::span<const ProbePoint> train, std::span<const ProbePoint> eval, int k) {
  if (eval.empty()) throw Error(ErrorCode::EmptyInput, "no eval points");
  std::size_t correct = 0;
  for (const auto& p : eval) correct += knn_classify(train, p.x, k) == p.label;
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

namespace {

TokenIds rank(const Eigen::VectorXd& scores) {
  TokenIds ids(static_cast<std::size_t>(scores.size()));
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) { return scores(a) > scores(b); });
  return ids;
}

Eigen::VectorXd dot_scores(const Vector& hidden, const Matrix& E) {
  if (hidden.size() != E.cols())
    throw Error(ErrorCode::DimensionMismatch, "hidden width " + std::to_string(hidden.size()) +
                                                  " vs embedding width " + std::to_string(E.cols()));
  return E.cast<double>() * hidden.cast<double>();
}

Eigen::VectorXd cosine_scores(const Vector& hidden, const Matrix& E) {
  Eigen::VectorXd s = dot_scores(hidden, E);
  const double hn = hidden.cast<double>().norm();
  if (hn == 0.0) throw Error(ErrorCode::ZeroVector, "cosine retrieval of a zero vector");
  for (Eigen::Index i = 0; i < E.rows(); ++i) {
    const double en = E.row(i).cast<double>().norm();
    s(i) = en == 0.0 ? 0.0 : s(i) / (en * hn);
  }
  return s;
}

bool unique_top(const Eigen::VectorXd& s, TokenId target) {
  if (target < 0 || target >= s.size()) return false;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (i != target && s(i) >= s(target)) return false;
  return true;
}

}  // namespace

TokenIds logit_lens_input(const Vector& hidden, const Matrix& E) { return rank(dot_scores(hidden, E)); }

TokenIds cosine_retrieval(const Vector& hidden, const Matrix& E) { return rank(cosine_scores(hidden, E)); }

bool lens_hit(const Vector& hidden, const Matrix& E, TokenId target) {
  return unique_top(dot_scores(hidden, E), target);
}

bool cosine_hit(const Vector& hidden, const Matrix& E, TokenId target) {
  return unique_top(cosine_scores(hidden, E), target);
}

RetrievalCurve retrieval_curve(const std::vector<std::vector<bool>>& hits) {
  if (hits.empty() || hits.front().empty()) throw Error(ErrorCode::EmptyInput, "no retrieval items");
  const std::size_t L = hits.front().size();
  RetrievalCurve c;
  c.n_items = hits.size();
  c.per_layer.assign(L, 0.0);
  c.cumulative.assign(L, 0.0);
  for (const auto& row : hits) {
    if (row.size() != L) throw Error(ErrorCode::DimensionMismatch, "ragged hit matrix");
    bool any = false;
    for (std::size_t l = 0; l < L; ++l) {
      any = any || row[l];
      c.per_layer[l] += row[l];
      c.cumulative[l] += any;
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    c.per_layer[l] /= static_cast<double>(hits.size());
    c.cumulative[l] /= static_cast<double>(hits.size());
  }
  return c;
}

void write_series_csv(std::ostream& out, std::span<const double> values, const std::string& value_name,
                      const std::string& group) {
  out << "layer," << value_name << (group.empty() ? "" : ",group") << '\n';
  out.precision(17);
  for (std::size_t l = 0; l < values.size(); ++l) {
    out << l << ',' << values[l];
    if (!group.empty()) out << ',' << group;
    out << '\n';
  }
}

}  // namespace lexiscope
