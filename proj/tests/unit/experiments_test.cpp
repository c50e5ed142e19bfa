#include <gtest/gtest.h>

#include <random>

#include "lexiscope/error.hpp"
#include "lexiscope/experiments.hpp"
#include "toy_model.hpp"

using namespace lexiscope;
using lexiscope::fixtures::toy_model;

namespace {

struct Fixture {
  const fixtures::ToyModel& m = toy_model();
  CorpusIndex ix = index_corpus(m.vocab, m.text);
  ModelRef ref{m.weights, m.config, m.vocab};
};

std::vector<std::vector<Vector>> gaussian_states(std::mt19937_64& rng, int n, int layers, int dim) {
  std::normal_distribution<float> g;
  std::vector<std::vector<Vector>> out(static_cast<std::size_t>(n));
  for (auto& item : out)
    for (int l = 0; l < layers; ++l) {
      Vector x(dim);
      for (int j = 0; j < dim; ++j) x[j] = g(rng);
      item.push_back(x);
    }
  return out;
}

}  // namespace

TEST(Experiments, KnnAccuracyOnSignEncodedTraces) {
  std::mt19937_64 rng(1);
  auto words = gaussian_states(rng, 100, 3, 6);
  auto nonwords = gaussian_states(rng, 100, 3, 6);
  for (auto& item : words)
    for (auto& x : item) x[0] = std::abs(x[0]) + 5.0f;
  for (auto& item : nonwords)
    for (auto& x : item) x[0] = -std::abs(x[0]) - 5.0f;
  EXPECT_EQ(knn_layer_accuracy(words, nonwords, 3, 4), (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Experiments, KnnAccuracyOnIdenticalClassesIsChance) {
  std::mt19937_64 rng(2);
  const auto words = gaussian_states(rng, 1000, 2, 8);
  const auto nonwords = gaussian_states(rng, 1000, 2, 8);
  for (double a : knn_layer_accuracy(words, nonwords, 5, 4)) EXPECT_NEAR(a, 0.5, 0.05);
}

TEST(Experiments, WordVsNonwordShapesAndBalance) {
  Fixture f;
  ExperimentOptions o;
  const auto words = multi_token_words(f.ix, o);
  const auto nonwords = make_nonword_records(f.m.vocab, words, 7);
  ASSERT_EQ(words.size(), nonwords.size());
  for (std::size_t i = 0; i < words.size(); ++i) EXPECT_EQ(words[i].context_ids, nonwords[i].context_ids);
  const auto r = word_vs_nonword(f.ref, words, nonwords, TokenPos::Last, o);
  EXPECT_EQ(r.curves.at("accuracy").values.size(), static_cast<std::size_t>(f.m.config.n_layers + 1));
  for (double a : r.curves.at("accuracy").values) EXPECT_TRUE(a >= 0.0 && a <= 1.0);
  const std::span<const WordRecord> fewer(nonwords.data(), nonwords.size() / 2);
  try {
    word_vs_nonword(f.ref, words, fewer, TokenPos::Last, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnbalancedDataset);
  }
}

TEST(Experiments, RetrievalItemsPerMode) {
  Fixture f;
  ExperimentOptions o;
  o.suffixes = {"ing", "ion", "est", "er", "s"};
  for (const auto mode : {SplitMode::Artificial, SplitMode::Typo, SplitMode::Suffix}) {
    const auto items = make_retrieval_items(f.m.vocab, f.ix, mode, o);
    ASSERT_FALSE(items.empty()) << to_string(mode);
    for (const auto& it : items) {
      EXPECT_EQ(f.m.vocab.token(it.target), " " + it.word);
      EXPECT_GE(it.ids.size(), 2u) << it.word;
      if (mode != SplitMode::Typo) {
        std::string joined;
        for (const auto& p : it.pieces) joined += p;
        EXPECT_EQ(joined, it.word);
        EXPECT_GT(it.word.size(), 3u);
      } else {
        EXPECT_GT(it.word.size(), 4u);
        EXPECT_NE(it.pieces.at(0), it.word);
      }
    }
  }
}

TEST(Experiments, ItemsDoNotDependOnIterationOrder) {
  Fixture f;
  ExperimentOptions all, few;
  few.max_items = 5;
  const auto a = make_retrieval_items(f.m.vocab, f.ix, SplitMode::Artificial, all);
  const auto b = make_retrieval_items(f.m.vocab, f.ix, SplitMode::Artificial, few);
  ASSERT_EQ(b.size(), 5u);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(a[i].pieces, b[i].pieces);
    EXPECT_EQ(a[i].ids, b[i].ids);
  }
}

TEST(Experiments, NoEligibleWords) {
  const Vocabulary v;
  const CorpusIndex ix = index_corpus(v, "a bb ccc\n");
  try {
    make_retrieval_items(v, ix, SplitMode::Artificial, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoEligibleWords);
  }
}

TEST(Experiments, SplitRetrievalCurves) {
  Fixture f;
  ExperimentOptions o;
  const auto items = make_retrieval_items(f.m.vocab, f.ix, SplitMode::Artificial, o);
  const auto r = split_retrieval(f.ref, items, o);
  const auto& per = r.curves.at("per_layer").values;
  const auto& cum = r.curves.at("cumulative").values;
  ASSERT_EQ(per.size(), static_cast<std::size_t>(f.m.config.n_layers + 1));
  EXPECT_GT(cum.back(), per.front());
  for (std::size_t l = 1; l < cum.size(); ++l) EXPECT_GE(cum[l], cum[l - 1]);
  EXPECT_EQ(r.scalars.at("n_items"), static_cast<double>(items.size()));
}

TEST(Experiments, FfnCurvesMatchTraceRecomputation) {
  Fixture f;
  ExperimentOptions o;
  o.max_items = 10;
  const auto items = make_retrieval_items(f.m.vocab, f.ix, SplitMode::Artificial, o);
  const auto r = ffn_retrieval(f.ref, items, o);
  const int L = f.m.config.n_layers;
  std::vector<double> hidden(static_cast<std::size_t>(L + 1)), ffn(static_cast<std::size_t>(L));
  for (const auto& it : items) {
    TokenIds ids = it.context;
    ids.insert(ids.end(), it.ids.begin(), it.ids.end());
    const auto tr = forward(f.m.weights, f.m.config, ids);
    const Eigen::Index last = tr.length() - 1;
    auto hit = [&](const Matrix& m) {
      const Vector s = f.m.weights.embed * m.row(last).transpose();
      Eigen::Index best = 0;
      const float top = s.maxCoeff(&best);
      return best == it.target && (s.array() == top).count() == 1;
    };
    for (int l = 0; l <= L; ++l) hidden[static_cast<std::size_t>(l)] += hit(tr.hidden[static_cast<std::size_t>(l)]);
    for (int l = 0; l < L; ++l) ffn[static_cast<std::size_t>(l)] += hit(tr.ffn_update[static_cast<std::size_t>(l)]);
  }
  for (auto& x : hidden) x /= static_cast<double>(items.size());
  for (auto& x : ffn) x /= static_cast<double>(items.size());
  EXPECT_EQ(r.curves.at("hidden_per_layer").values, hidden);
  EXPECT_EQ(r.curves.at("ffn_per_layer").values, ffn);
}

TEST(Experiments, ZeroFfnNeverRetrieves) {
  Fixture f;
  ModelWeights w = f.m.weights;
  for (auto& l : w.layers) l.w_down.setZero();
  const ModelRef ref{w, f.m.config, f.m.vocab};
  ExperimentOptions o;
  const auto items = make_retrieval_items(f.m.vocab, f.ix, SplitMode::Artificial, o);
  const auto r = ffn_retrieval(ref, items, o);
  for (double v : r.curves.at("ffn_cumulative").values) EXPECT_EQ(v, 0.0);
}

TEST(Experiments, AblationNoneEqualsSplitRetrieval) {
  Fixture f;
  ExperimentOptions o;
  const auto items = make_retrieval_items(f.m.vocab, f.ix, SplitMode::Suffix, o);
  EXPECT_EQ(to_json(ffn_ablation(f.ref, items, AblationPolicy::None, o)).dump(),
            to_json(split_retrieval(f.ref, items, o)).dump());
}

TEST(Experiments, AblationLayerCounts) {
  Fixture f;
  ExperimentOptions o;
  const auto items = make_retrieval_items(f.m.vocab, f.ix, SplitMode::Artificial, o);
  int nonempty = 0;
  for (const auto& it : items) {
    const auto hits = ffn_hits(f.ref, it);
    const auto targeted = ablation_layers(f.ref, it, AblationPolicy::Targeted, o.seed);
    const auto random = ablation_layers(f.ref, it, AblationPolicy::Random, o.seed);
    EXPECT_EQ(static_cast<long>(targeted.size()), std::count(hits.begin(), hits.end(), true));
    EXPECT_EQ(random.size(), targeted.size());
    EXPECT_TRUE(std::is_sorted(random.begin(), random.end()));
    EXPECT_EQ(std::adjacent_find(random.begin(), random.end()), random.end());
    if (targeted.empty()) {
      EXPECT_EQ(hidden_hits(f.ref, it), hidden_hits(f.ref, it, {}));
    } else {
      ++nonempty;
    }
  }
  const auto none = ffn_ablation(f.ref, items, AblationPolicy::None, o);
  const auto targeted = ffn_ablation(f.ref, items, AblationPolicy::Targeted, o);
  if (nonempty == 0) EXPECT_EQ(none.curves.at("per_layer").values, targeted.curves.at("per_layer").values);
  EXPECT_EQ(ffn_ablation(f.ref, items, AblationPolicy::Random, o).scalars.at("mean_ablated_layers"),
            targeted.scalars.at("mean_ablated_layers"));
}

TEST(Experiments, UniformAttentionGivesEqualGroups) {
  Fixture f;
  ModelWeights w = f.m.weights;
  for (auto& l : w.layers) l.wq.setZero();
  const ModelRef ref{w, f.m.config, f.m.vocab};
  std::vector<WordRecord> multi, single;
  for (std::size_t n = 2; n <= 6; ++n) {
    multi.push_back({"m", TokenIds(n, 'a'), {}, n});
    single.push_back({"s", TokenIds{'b'}, TokenIds(n - 1, 'c'), 1});
  }
  ExperimentOptions o;
  const auto r = attention_aggregation(ref, multi, single, o);
  EXPECT_EQ(r.curves.at("multi_token").values, r.curves.at("single_token").values);
  for (const auto& t : r.stats) {
    EXPECT_NEAR(t.p_greater, 0.5, 1e-12);
    EXPECT_NEAR(t.p_less, 0.5, 1e-12);
  }
  EXPECT_NEAR(r.curves.at("multi_token").values[0], (1.0 / 2 + 1.0 / 3 + 1.0 / 4 + 1.0 / 5 + 1.0 / 6) / 5, 1e-6);
}

TEST(Experiments, AttentionMeansMatchAveragingOracle) {
  Fixture f;
  ExperimentOptions o;
  o.max_items = 20;
  const auto multi = multi_token_words(f.ix, o, 2, 4);
  const auto single = single_token_words(f.ix, o);
  const auto r = attention_aggregation(f.ref, multi, single, o);
  auto oracle = [&](const std::vector<WordRecord>& group) {
    std::vector<double> sum(static_cast<std::size_t>(f.m.config.n_layers));
    int n = 0;
    for (const auto& w : group) {
      TokenIds ids = w.context_ids;
      ids.insert(ids.end(), w.token_ids.begin(), w.token_ids.end());
      if (ids.size() < 2) continue;
      const auto tr = forward(f.m.weights, f.m.config, ids);
      const int q = tr.length() - 1;
      for (int l = 0; l < f.m.config.n_layers; ++l) {
        double s = 0;
        for (int h = 0; h < f.m.config.n_heads; ++h)
          s += tr.attn_weights[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)](q, q - 1);
        sum[static_cast<std::size_t>(l)] += s / f.m.config.n_heads;
      }
      ++n;
    }
    for (auto& x : sum) x /= n;
    return sum;
  };
  const auto mo = oracle(multi), so = oracle(single);
  for (std::size_t l = 0; l < mo.size(); ++l) {
    EXPECT_NEAR(r.curves.at("multi_token").values[l], mo[l], 1e-6);
    EXPECT_NEAR(r.curves.at("single_token").values[l], so[l], 1e-6);
    EXPECT_NEAR(r.stats[l].p_greater + r.stats[l].p_less, 1.0, 1e-12);
  }
}

TEST(Experiments, UntrainedModelNeverDecodes) {
  Fixture f;
  const ModelWeights fresh = init_weights(f.m.config);
  const ModelRef ref{fresh, f.m.config, f.m.vocab};
  ExperimentOptions o;
  o.max_items = 15;
  const auto r = multi_token_retrieval(ref, multi_token_words(f.ix, o), o);
  EXPECT_DOUBLE_EQ(r.scalars.at("never_decoded"), 1.0);
}

TEST(Experiments, ReportsAreDeterministic) {
  Fixture f;
  ExperimentOptions o;
  o.seed = 9;
  o.max_items = 12;
  auto once = [&] {
    const auto items = make_retrieval_items(f.m.vocab, f.ix, SplitMode::Typo, o);
    return to_json(ffn_ablation(f.ref, items, AblationPolicy::Random, o)).dump();
  };
  EXPECT_EQ(once(), once());
}
