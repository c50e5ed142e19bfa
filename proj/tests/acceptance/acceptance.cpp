// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when
// any criterion fails.

#include <Eigen/QR>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lexiscope/corpus.hpp"
#include "lexiscope/error.hpp"
#include "lexiscope/experiments.hpp"
#include "lexiscope/harness.hpp"
#include "lexiscope/model.hpp"
#include "lexiscope/patchscope.hpp"
#include "lexiscope/probes.hpp"
#include "lexiscope/stats.hpp"
#include "lexiscope/tokenizer.hpp"
#include "lexiscope/vocab_expansion.hpp"

using namespace lexiscope;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s criterion %d: %s | %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

MatrixD random_orthogonal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixD a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  Eigen::HouseholderQR<MatrixD> qr(a);
  MatrixD q = qr.householderQ();
  const VectorD diag = MatrixD(qr.matrixQR()).diagonal();
  for (int j = 0; j < d; ++j)
    if (diag[j] < 0) q.col(j) = -q.col(j);
  return q;
}

MatrixD unit_rms_rows(int n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixD h(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) h(i, j) = g(rng);
    h.row(i) /= std::sqrt(h.row(i).squaredNorm() / d);
  }
  return h;
}

double procrustes_objective(const MatrixD& T, const MatrixD& H, const MatrixD& X) {
  return (H * T.transpose() - X).squaredNorm();
}

ModelConfig config_of(int d, int layers, int heads, int d_ff, int vocab, int max_seq, std::uint64_t seed) {
  ModelConfig c;
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_ff = d_ff;
  c.vocab_size = vocab;
  c.max_seq = max_seq;
  c.seed = seed;
  return c;
}

ModelWeights noisy_weights(const ModelConfig& c, float std, std::uint64_t seed) {
  ModelWeights w = init_weights(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, std);
  w.for_each_tensor([&](const std::string& name, float* p, std::size_t size) {
    const bool gain = name.find("norm") != std::string::npos;
    for (std::size_t i = 0; i < size; ++i) p[i] = gain ? 1.0f + n(rng) : n(rng);
  });
  return w;
}

TokenIds random_ids(int n, int vocab, std::mt19937_64& rng) {
  TokenIds ids(static_cast<std::size_t>(n));
  for (auto& t : ids) t = static_cast<TokenId>(rng() % static_cast<std::uint64_t>(vocab));
  return ids;
}

struct Trained {
  std::string text;
  Vocabulary vocab;
  ModelConfig config;
  ModelWeights weights;
};

// A few hundred steps on a small synthetic corpus, d = 64, four layers.
const Trained& small_model() {
  static const Trained t = [] {
    Trained m;
    SynthOptions so;
    so.n_words = 80;
    so.n_lines = 4000;
    so.seed = 11;
    m.text = synth_corpus(so);
    m.vocab = train_bpe(m.text, 500);
    m.config = config_of(64, 4, 4, 192, static_cast<int>(m.vocab.size()), 64, 5);
    TrainHyper h;
    h.steps = 200;
    h.seq_len = 48;
    h.lr = 3e-3f;
    m.weights = train(m.config, augmented_stream(m.vocab, m.text, 0.1, 2), h).weights;
    return m;
  }();
  return t;
}

// The trend model: ~200 words, ~1M tokens, d = 128, four layers.
const Trained& trend_model() {
  static const Trained t = [] {
    Trained m;
    SynthOptions so;
    so.n_lines = 100000;
    so.seed = 1;
    m.text = synth_corpus(so);
    m.vocab = train_bpe(m.text, 1000);
    m.config = config_of(128, 4, 4, 384, static_cast<int>(m.vocab.size()), 128, 1);
    TrainHyper h;
    h.steps = 2000;
    h.batch = 8;
    h.seq_len = 64;
    h.lr = 3e-3f;
    h.warmup = 50;
    const TokenIds stream = augmented_stream(m.vocab, m.text, 0.1, 7);
    m.weights = train(m.config, stream, h).weights;
    std::printf("  trend model: %zu stream tokens, vocab %zu\n", stream.size(), m.vocab.size());
    return m;
  }();
  return t;
}

// ---------------------------------------------------------------------------

Outcome procrustes_recovery() {
  std::mt19937_64 rng(101);
  const MatrixD Q = random_orthogonal(32, rng);
  const MatrixD H = unit_rms_rows(64, 32, rng);
  const MatrixD X = H * Q.transpose();
  const auto t0 = Clock::now();
  const MatrixD T = fit_procrustes(H, X);
  const double secs = seconds_since(t0);
  const double err = (T - Q).cwiseAbs().maxCoeff();
  return {err < 1e-6 && secs < 1.0, fmt("max_abs_err=%.3g runtime=%.4fs", err, secs)};
}

Outcome procrustes_optimality() {
  std::mt19937_64 rng(202);
  int wins = 0;
  double worst_margin = INFINITY;
  for (int inst = 0; inst < 100; ++inst) {
    const MatrixD H = unit_rms_rows(64, 32, rng);
    const MatrixD X = unit_rms_rows(64, 32, rng);
    const double best = procrustes_objective(fit_procrustes(H, X), H, X);
    bool all = true;
    for (int r = 0; r < 1000; ++r) {
      const double other = procrustes_objective(random_orthogonal(32, rng), H, X);
      worst_margin = std::min(worst_margin, other - best);
      if (!(best < other)) all = false;
    }
    wins += all;
  }
  return {wins == 100, fmt("instances_won=%d/100 smallest_margin=%.4g", wins, worst_margin)};
}

Outcome identity_patch() {
  const Trained& m = small_model();
  const PatchPrompt p = build_patch_prompt(m.vocab, kRepeatTemplate);
  const int at = p.patch_positions.at(0);
  int ok = 0;
  double worst = 0;
  for (TokenId t = 0; t < m.config.vocab_size; ++t) {
    TokenIds direct = p.token_ids;
    direct[static_cast<std::size_t>(at)] = t;
    const auto a = forward(m.weights, m.config, direct, {}, ForwardOptions{false});
    const Intervention iv = Intervention::patch(0, at, m.weights.embed.row(t).transpose());
    const auto b = forward(m.weights, m.config, p.token_ids, std::span(&iv, 1), ForwardOptions{false});
    const double diff = (a.logits - b.logits).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    ok += diff <= 1e-6;
  }
  return {ok == m.config.vocab_size,
          fmt("tokens_within_tol=%d/%d max_abs_diff=%.3g", ok, m.config.vocab_size, worst)};
}

Outcome residual_accounting() {
  const ModelConfig c = config_of(32, 3, 4, 64, 50, 64, 9);
  std::mt19937_64 rng(303);
  double resid = 0, row_err = 0;
  bool causal = true;
  for (int trial = 0; trial < 100; ++trial) {
    const ModelWeights w = noisy_weights(c, 0.3f, 1000 + static_cast<std::uint64_t>(trial));
    const int len = 2 + static_cast<int>(rng() % 40);
    const auto tr = forward(w, c, random_ids(len, c.vocab_size, rng));
    for (int l = 0; l < c.n_layers; ++l) {
      const Matrix r = tr.hidden[l + 1] - tr.hidden[l] - tr.attn_out[l] - tr.ffn_update[l];
      resid = std::max(resid, static_cast<double>(r.cwiseAbs().maxCoeff()));
      for (const Matrix& a : tr.attn_weights[l])
        for (int i = 0; i < a.rows(); ++i) {
          double s = 0;
          for (int j = 0; j < a.cols(); ++j) {
            s += a(i, j);
            if (j > i && a(i, j) != 0.0f) causal = false;
          }
          row_err = std::max(row_err, std::abs(s - 1.0));
        }
    }
  }
  return {resid <= 1e-5 && row_err <= 1e-6 && causal,
          fmt("max_residual=%.3g max_row_sum_err=%.3g causal_exact=%s", resid, row_err, causal ? "yes" : "no")};
}

Outcome ablation_algebra() {
  const ModelConfig c = config_of(32, 4, 4, 64, 50, 64, 4);
  std::mt19937_64 rng(404);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const ModelWeights w = noisy_weights(c, 0.3f, 500 + static_cast<std::uint64_t>(trial));
    const int len = 4 + static_cast<int>(rng() % 20);
    const int p = static_cast<int>(rng() % static_cast<std::uint64_t>(len));
    std::vector<Intervention> iv;
    for (int l = 0; l < c.n_layers; ++l) iv.push_back(Intervention::ablate_ffn(l, p));
    const auto tr = forward(w, c, random_ids(len, c.vocab_size, rng), iv);
    Vector expect = tr.hidden[0].row(p).transpose();
    for (int l = 0; l < c.n_layers; ++l) expect += tr.attn_out[l].row(p).transpose();
    worst = std::max(worst, static_cast<double>((tr.hidden[c.n_layers].row(p).transpose() - expect).cwiseAbs().maxCoeff()));
  }

  const Trained& m = small_model();
  const ModelRef ref{m.weights, m.config, m.vocab};
  const CorpusIndex ix = index_corpus(m.vocab, m.text);
  ExperimentOptions o;
  o.seed = 5;
  const auto items = make_retrieval_items(m.vocab, ix, SplitMode::Artificial, o);
  const std::string none = to_json(ffn_ablation(ref, items, AblationPolicy::None, o)).dump();
  const std::string split = to_json(split_retrieval(ref, items, o)).dump();
  const bool equal = none == split;
  return {worst <= 1e-5 && equal, fmt("max_abs_err=%.3g none_equals_split=%s items=%zu", worst,
                                      equal ? "yes" : "no", items.size())};
}

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

struct WelchCase {
  std::vector<double> a, b;
  double t, df, p_greater, p_less;
};

// mpmath at 50 digits, tests/oracles/welch_oracle.py.
const std::vector<WelchCase> kWelch = {
    {{1.0, 2.0, 3.0, 4.0, 5.0}, {2.0, 3.0, 4.0, 5.0, 6.5},
     -1.044073795327748894886626, 7.922199003375663076675776, 0.8363698071287977916988968,
     0.1636301928712022083011032},
    {{0.12, 0.15, 0.11, 0.19, 0.14, 0.13}, {0.09, 0.10, 0.08, 0.12},
     2.959320151246863249013951, 7.984304567425188725357085, 0.009102356961312261645482887,
     0.9908976430386877383545171},
    {{5.1, 4.9, 5.3, 5.0}, {3.2, 3.9, 4.4, 3.0, 3.7, 4.1, 3.5},
     6.758322054597674626729624, 8.062153532454005710218529, 0.00006938896934996492926200046,
     0.999930611030650035070738},
    {{10.0, 10.5, 9.5}, {10.1, 10.2, 9.9, 10.0, 10.3},
     -0.3364632924552265638349127, 2.243162307845877420642843, 0.6172845328425202979407609,
     0.3827154671574797020592391},
    {{0.5, 0.7, 0.2, 0.9, 0.4, 0.6, 0.3, 0.8}, {0.45, 0.55, 0.5, 0.48},
     0.6171729202024904743636801, 7.785719505091108450427671, 0.2773678345099790943351427,
     0.7226321654900209056648573},
};

// Ten lines, byte-level vocabulary, added words "mountain" and "river".
// Bytes per line: 32 22 20 9 23 19 20 5 21 17 = 188. Each spaced match
// saves len(word) tokens, each line-initial match len(word) - 1:
// line 1 " river" 5 + " mountain" 8, line 2 " mountain" 8, line 3 " river" 5,
// line 5 "mountain" 7 + " river" 5 + " mountain" 8, line 8 "river" 4,
// line 10 " river" 5. Saved 55, leaving 133 tokens.
const char* kReductionFixture =
    "the river runs past the mountain\n"
    "a mountain stood alone\n"
    "rivers are not river\n"
    "we walked\n"
    "mountain river mountain\n"
    "nothing here at all\n"
    "the riverbank is wet\n"
    "river\n"
    "Mountain with capital\n"
    "end of the river.\n";

Outcome oracles() {
  std::mt19937_64 rng(606);
  std::normal_distribution<float> g;
  auto point = [&](int dim) {
    Vector x(dim);
    for (int j = 0; j < dim; ++j) x[j] = g(rng);
    return x;
  };
  std::vector<ProbePoint> train;
  for (int i = 0; i < 300; ++i) train.push_back({point(8), rng() % 2 ? Label::Word : Label::Nonword, 0});
  int mismatches = 0;
  for (int q = 0; q < 500; ++q) {
    const Vector x = point(8);
    const int k = 1 + static_cast<int>(rng() % 7);
    mismatches += knn_classify(train, x, k) != knn_oracle(train, x, k);
  }

  double welch_err = 0;
  for (const auto& c : kWelch) {
    const auto r = one_sided_t_test(c.a, c.b);
    for (const double e : {r.t_stat - c.t, r.df - c.df, r.p_greater - c.p_greater, r.p_less - c.p_less})
      welch_err = std::max(welch_err, std::abs(e));
  }

  const Vocabulary bytes;
  const ExpandedVocabulary ev(bytes, {"mountain", "river"});
  const double reduction = token_reduction(ev, kReductionFixture);
  const double expected = 1.0 - 133.0 / 188.0;

  return {mismatches == 0 && welch_err <= 1e-9 && reduction == expected,
          fmt("knn_mismatches=%d/500 welch_max_err=%.3g token_reduction=%.17g expected=%.17g", mismatches,
              welch_err, reduction, expected)};
}

Outcome gradient_check() {
  const ModelConfig c = config_of(16, 2, 4, 32, 24, 64, 3);
  const ModelWeightsT<double> w = noisy_weights(c, 0.4f, 707).cast<double>();
  std::mt19937_64 rng(708);
  Batch b{2, 7, random_ids(14, c.vocab_size, rng), random_ids(14, c.vocab_size, rng)};
  ModelWeightsT<double> g = ModelWeightsT<double>::zeros(c);
  batch_loss_and_grad(w, c, b, g);

  std::vector<std::pair<double*, std::size_t>> params, grads;
  ModelWeightsT<double> probe = w;
  probe.for_each_tensor([&](const std::string&, double* p, std::size_t n) { params.emplace_back(p, n); });
  g.for_each_tensor([&](const std::string&, double* p, std::size_t n) { grads.emplace_back(p, n); });

  const double h = 1e-5;
  int checked = 0, ok = 0;
  double worst = 0;
  while (checked < 20) {
    const std::size_t t = rng() % params.size();
    const std::size_t i = rng() % params[t].second;
    const double analytic = grads[t].first[i];
    double& x = params[t].first[i];
    const double orig = x;
    x = orig + h;
    const double up = batch_loss(probe, c, b);
    x = orig - h;
    const double down = batch_loss(probe, c, b);
    x = orig;
    const double numeric = (up - down) / (2 * h);
    if (analytic == 0.0 && std::abs(numeric) < 1e-12) continue;
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-12);
    worst = std::max(worst, rel);
    ok += rel < 1e-3;
    ++checked;
  }
  return {ok == 20, fmt("probes_within_tol=%d/20 max_rel_err=%.3g", ok, worst)};
}

Outcome trend() {
  const Trained& m = trend_model();
  const ModelRef ref{m.weights, m.config, m.vocab};
  const CorpusIndex ix = index_corpus(m.vocab, m.text);
  ExperimentOptions o;
  o.seed = 3;
  const auto art = split_retrieval(ref, make_retrieval_items(m.vocab, ix, SplitMode::Artificial, o), o);
  const auto typo = split_retrieval(ref, make_retrieval_items(m.vocab, ix, SplitMode::Typo, o), o);
  const auto& per = art.curves.at("per_layer").values;
  const auto& cum = art.curves.at("cumulative").values;
  const auto& typo_per = typo.curves.at("per_layer").values;
  const std::size_t best = static_cast<std::size_t>(std::max_element(per.begin(), per.end()) - per.begin());
  const double chance = 1.0 / static_cast<double>(m.vocab.size());
  const bool above_chance = per[best] >= 5 * chance;
  const bool above_layer0 = per[best] > per[0];
  const bool monotone = std::is_sorted(cum.begin(), cum.end());
  const bool typo_le = typo_per[best] <= per[best];
  std::string curve;
  for (double v : per) curve += fmt("%.3f ", v);
  return {above_chance && above_layer0 && monotone && typo_le,
          fmt("per_layer=[%s] best_layer=%zu rate=%.3f chance=%.4f layer0=%.3f cumulative_monotone=%s "
              "typo_at_best=%.3f",
              curve.c_str(), best, per[best], chance, per[0], monotone ? "yes" : "no", typo_per[best])};
}

bool contains_word(const std::string& line, const std::set<std::string>& words) {
  for (auto piece : pretokenize(line))
    if (words.count(std::string(trim(piece)))) return true;
  return false;
}

Outcome frozen_core() {
  const Trained& m = trend_model();
  SynthOptions so;
  so.n_lines = 3000;
  so.seed = 21;
  const std::string test = synth_corpus(so);
  ExpansionOptions eo;
  eo.max_words = 20;
  const auto res = expand_vocabulary(m.weights, m.config, m.vocab, m.text, test, eo);
  if (res.model.entries.empty()) return {false, "no word was accepted"};

  ModelWeights core = res.model.weights;
  core.embed = core.embed.topRows(m.config.vocab_size).eval();
  core.unembed = core.unembed.topRows(m.config.vocab_size).eval();
  const bool hash_same = hash_weights(core) == hash_weights(m.weights);

  std::set<std::string> added;
  for (const auto& e : res.model.entries) added.insert(e.word);
  const ExpandedVocabulary ev(m.vocab, {added.begin(), added.end()});
  SynthOptions ho;
  ho.n_lines = 400;
  ho.seed = 77;
  const std::string held = synth_corpus(ho);
  std::istringstream in(held);
  std::size_t positions = 0, same = 0, lines = 0;
  bool no_new_ids = true;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || contains_word(line, added)) continue;
    const TokenIds ids = ev.encode(line).ids;
    for (TokenId t : ids) no_new_ids &= !ev.is_new(t);
    if (ids.size() > static_cast<std::size_t>(m.config.max_seq)) continue;
    ++lines;
    const auto a = forward(m.weights, m.config, ids, {}, ForwardOptions{false});
    const auto b = forward(res.model.weights, res.model.config, ids, {}, ForwardOptions{false});
    for (int p = 0; p < a.logits.rows(); ++p) {
      const Matrix ra = a.logits.row(p), rb = b.logits.row(p).leftCols(m.config.vocab_size);
      ++positions;
      same += argmax(std::span<const float>(ra.data(), static_cast<std::size_t>(ra.size()))) ==
              argmax(std::span<const float>(rb.data(), static_cast<std::size_t>(rb.size())));
    }
  }

  const LayerMaps maps = learn_layer_maps(m.weights, m.config);
  double rms_err = 0;
  for (const auto& e : res.model.entries) {
    const VectorD x = e.e_hat.cast<double>();
    rms_err = std::max(rms_err, std::abs(std::sqrt(x.squaredNorm() / x.size()) - maps.rms_E_mean));
  }
  const bool pass = hash_same && no_new_ids && positions > 0 && same == positions && rms_err <= 1e-6;
  return {pass, fmt("accepted=%zu core_hash_same=%s held_out_lines=%zu argmax_same=%zu/%zu rms_E_mean=%.6g "
                    "max_rms_err=%.3g refine_loss=%.3f->%.3f",
                    res.model.entries.size(), hash_same ? "yes" : "no", lines, same, positions, maps.rms_E_mean,
                    rms_err, res.refine_loss.empty() ? 0.0 : res.refine_loss.front(),
                    res.refine_loss.empty() ? 0.0 : res.refine_loss.back())};
}

// Thirty seven-word sentences repeated sixty times next to word drills, so
// the model memorises them; the same sentences are the evaluation text.
Outcome memorizable_expansion() {
  std::mt19937_64 rng(5);
  const auto& lex = synth_lexicon();
  const std::vector<std::string> words(lex.begin(), lex.begin() + 60);
  std::vector<std::string> sentences;
  for (int s = 0; s < 30; ++s) {
    std::string line;
    for (int i = 0; i < 7; ++i) {
      if (i) line += ' ';
      line += words[rng() % words.size()];
    }
    sentences.push_back(line + ".");
  }
  std::string train_text, test;
  for (int rep = 0; rep < 60; ++rep) {
    for (const auto& s : sentences) train_text += s + "\n";
    for (const auto& w : words)
      train_text += (rep % 2 ? "Repeat this word twice: 1) " + w + " 2) " + w
                             : w + " " + w + " " + w + " " + w + " " + w) +
                    "\n";
  }
  for (const auto& s : sentences) test += s + "\n";

  const Vocabulary v = train_bpe(train_text, 400);
  const ModelConfig c = config_of(64, 4, 4, 192, static_cast<int>(v.size()), 128, 2);
  TrainHyper h;
  h.steps = 1500;
  h.batch = 8;
  h.seq_len = 64;
  h.lr = 3e-3f;
  h.warmup = 50;
  const ModelWeights w = train(c, augmented_stream(v, train_text, 0.0, 1), h).weights;

  ExpansionOptions eo;
  eo.max_words = 5;
  eo.refine.steps = 300;
  const auto res = expand_vocabulary(w, c, v, train_text, test, eo);
  std::vector<std::string> added;
  for (const auto& e : res.model.entries) added.push_back(e.word);
  const ExpandedVocabulary ev(v, added);
  const auto before = evaluate_top1(w, c, ev, test, false);
  const auto after = evaluate_top1(res.model.weights, res.model.config, ev, test, true);
  const double new_acc = after.new_token_acc.value_or(0.0);
  const double drop = before.all_words_acc - after.all_words_acc;
  return {added.size() == 5 && new_acc > 0 && drop <= 0.02,
          fmt("accepted=%zu new_token_acc=%.4f all_words_acc %.4f -> %.4f (drop %.4f) token_reduction=%.4f",
              added.size(), new_acc, before.all_words_acc, after.all_words_acc, drop,
              token_reduction(ev, test))};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = read_text_file(e.path());
  return files;
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "lexiscope_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  RunConfig base;
  base.set("seed", "9");
  base.set("synth.words", "60");
  base.set("synth.lines", "2000");
  base.set("tokenizer.vocab_size", "400");
  base.set("model.d_model", "32");
  base.set("model.n_layers", "2");
  base.set("model.d_ff", "64");
  base.set("model.max_seq", "64");
  base.set("train.steps", "40");
  base.set("train.seq_len", "32");
  base.set("exp.max_items", "40");
  base.set("expand.max_words", "3");
  base.set("expand.refine_steps", "10");
  base.set("expand.refine_seq_len", "64");

  const fs::path corpus = root / "synth-corpus" / "corpus.txt";
  const fs::path vocab = root / "tokenizer" / "vocab.txt";
  const fs::path ckpt = root / "model" / "model.ckpt";
  const std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> runs = {
      {"synth-corpus", {}},
      {"tokenizer", {{"corpus", corpus.string()}}},
      {"model", {{"corpus", corpus.string()}, {"vocab", vocab.string()}}},
      {"split-retrieval", {{"exp.split_mode", "typo"}}},
      {"ffn-retrieval", {}},
      {"ffn-ablation", {{"exp.policy", "random"}}},
      {"word-nonword", {}},
      {"multi-token-retrieval", {}},
      {"attention", {}},
      {"expand", {{"train_corpus", corpus.string()}}},
  };
  int identical = 0;
  std::string failed;
  for (const auto& [name, extra] : runs) {
    RunConfig c = base;
    c.set("experiment", name);
    if (name != "synth-corpus" && name != "tokenizer" && name != "model") {
      c.set("corpus", corpus.string());
      c.set("vocab", vocab.string());
      c.set("checkpoint", ckpt.string());
    }
    for (const auto& [k, v] : extra) c.set(k, v);
    const fs::path out = root / name;
    c.set("output_dir", out.string());
    run(c);
    const auto first = snapshot(out);
    const fs::path keep = root / (name + ".first");
    fs::rename(out, keep);
    run(c);
    const auto second = snapshot(out);
    fs::remove_all(out);
    fs::rename(keep, out);
    if (first == second && first.count("report.json") && first.count("manifest.json") && verify_manifest(out).empty())
      ++identical;
    else
      failed += " " + name;
  }
  fs::remove_all(root);
  return {identical == static_cast<int>(runs.size()),
          fmt("byte_identical_runs=%d/%zu%s%s", identical, runs.size(), failed.empty() ? "" : " differing:",
              failed.c_str())};
}

}  // namespace

int main() {
  report(1, "Procrustes recovery", procrustes_recovery);
  report(2, "Procrustes optimality", procrustes_optimality);
  report(3, "identity-patch equivalence", identity_patch);
  report(4, "residual accounting", residual_accounting);
  report(5, "ablation algebra", ablation_algebra);
  report(6, "oracle equivalence", oracles);
  report(7, "gradient check", gradient_check);
  report(8, "toy-model detokenization trend", trend);
  report(9, "frozen-core expansion", frozen_core);
  report(10, "expansion on a memorizable corpus", memorizable_expansion);
  report(11, "reproducibility", reproducibility);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
