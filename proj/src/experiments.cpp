#include "lexiscope/experiments.hpp"

#include <algorithm>
#include <random>

#include "lexiscope/error.hpp"
#include "lexiscope/hash.hpp"

namespace lexiscope {

const char* to_string(SplitMode m) {
  switch (m) {
    case SplitMode::Artificial: return "artificial";
    case SplitMode::Typo: return "typo";
    case SplitMode::Suffix: return "suffix";
  }
  return "?";
}

const char* to_string(AblationPolicy p) {
  switch (p) {
    case AblationPolicy::Targeted: return "targeted";
    case AblationPolicy::Random: return "random";
    case AblationPolicy::None: return "none";
  }
  return "?";
}

const char* to_string(TokenPos p) { return p == TokenPos::Last ? "last" : "penultimate"; }

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["curves"] = nlohmann::json::object();
  for (const auto& [name, s] : r.curves) j["curves"][name] = {{"values", s.values}, {"group", s.group}};
  j["stats"] = nlohmann::json::array();
  for (const auto& t : r.stats)
    j["stats"].push_back({{"layer", t.layer},
                          {"t_stat", t.t_stat},
                          {"df", t.df},
                          {"p_greater", t.p_greater},
                          {"p_less", t.p_less},
                          {"n_a", t.n_a},
                          {"n_b", t.n_b}});
  j["scalars"] = r.scalars;
  j["metadata"] = r.metadata;
  return j;
}

namespace {

TokenIds context_for(const CorpusIndex& corpus, const WordEntry& w, const ExperimentOptions& o) {
  return o.use_context ? corpus.context(w.first, o.context_tokens) : TokenIds{};
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// context + word, keeping as much context as fits.
TokenIds join(const ModelConfig& cfg, const TokenIds& context, const TokenIds& ids) {
  const std::size_t room = static_cast<std::size_t>(cfg.max_seq) - std::min(ids.size(), static_cast<std::size_t>(cfg.max_seq));
  const std::size_t keep = std::min(context.size(), room);
  TokenIds out(context.end() - static_cast<std::ptrdiff_t>(keep), context.end());
  out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

RetrievalCurve curve_or_throw(const std::vector<std::vector<bool>>& hits) {
  if (hits.empty()) throw Error(ErrorCode::NoEligibleWords, "no items to evaluate");
  return retrieval_curve(hits);
}

void add_curve(ExperimentReport& r, const std::string& prefix, const RetrievalCurve& c) {
  r.curves[prefix + "per_layer"] = {c.per_layer, prefix.empty() ? "" : prefix.substr(0, prefix.size() - 1)};
  r.curves[prefix + "cumulative"] = {c.cumulative, prefix.empty() ? "" : prefix.substr(0, prefix.size() - 1)};
  r.scalars[prefix + "n_items"] = static_cast<double>(c.n_items);
}

}  // namespace

std::vector<RetrievalItem> make_retrieval_items(const Vocabulary& vocab, const CorpusIndex& corpus,
                                                SplitMode mode, const ExperimentOptions& o) {
  std::vector<RetrievalItem> items;
  for (const WordEntry& w : corpus.words) {
    if (o.max_items && items.size() >= o.max_items) break;
    if (w.n_tokens != 1) continue;
    const auto target = vocab.find(" " + w.surface);
    if (!target) continue;
    RetrievalItem it;
    it.word = w.surface;
    it.target = *target;
    std::mt19937_64 rng(item_seed(o.seed, w.surface));
    const std::size_t len = w.surface.size();
    if (mode == SplitMode::Artificial) {
      if (len <= 3) continue;
      const int max_pieces = static_cast<int>(std::min<std::size_t>(5, len));
      const int n = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_pieces - 1));
      it.pieces = artificial_split(w.surface, n, rng()).pieces;
      it.ids = encode_pieces(vocab, it.pieces, true);
    } else if (mode == SplitMode::Typo) {
      if (len <= 4) continue;
      for (int attempt = 0; attempt < o.typo_retries; ++attempt) {
        const std::string typo = perturb_typo(w.surface, sample_typo(w.surface, rng));
        TokenIds ids = encode_piece(vocab, " " + typo);
        if (ids.size() >= 2) {
          it.pieces = {typo};
          it.ids = std::move(ids);
          break;
        }
      }
      if (it.ids.empty()) continue;
    } else {
      const auto suffix = std::find_if(o.suffixes.begin(), o.suffixes.end(), [&](const std::string& s) {
        return !s.empty() && len > s.size() && ends_with(w.surface, s);
      });
      if (suffix == o.suffixes.end()) continue;
      it.pieces = {w.surface.substr(0, len - suffix->size()), *suffix};
      it.ids = encode_pieces(vocab, it.pieces, true);
    }
    it.context = context_for(corpus, w, o);
    items.push_back(std::move(it));
  }
  if (items.empty())
    throw Error(ErrorCode::NoEligibleWords, std::string("no words eligible for ") + to_string(mode) + " retrieval");
  return items;
}

std::vector<WordRecord> multi_token_words(const CorpusIndex& corpus, const ExperimentOptions& o,
                                          std::size_t min_tokens, std::size_t max_tokens) {
  std::vector<WordRecord> out;
  for (const WordEntry& w : corpus.words) {
    if (o.max_items && out.size() >= o.max_items) break;
    if (w.n_tokens < std::max<std::size_t>(2, min_tokens) || (max_tokens && w.n_tokens > max_tokens)) continue;
    WordRecord r = corpus.record(w, o.use_context ? o.context_tokens : 0);
    if (r.n_tokens != w.n_tokens) continue;  // only seen without its boundary space
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<WordRecord> single_token_words(const CorpusIndex& corpus, const ExperimentOptions& o) {
  std::vector<WordRecord> out;
  for (const WordEntry& w : corpus.words) {
    if (o.max_items && out.size() >= o.max_items) break;
    if (w.n_tokens != 1 || !w.spaced) continue;
    out.push_back(corpus.record(w, o.use_context ? o.context_tokens : 0));
  }
  return out;
}

std::vector<WordRecord> make_nonword_records(const Vocabulary& vocab, std::span<const WordRecord> words,
                                             std::uint64_t seed) {
  const NonwordGenerator gen(vocab, words);
  std::mt19937_64 rng(seed);
  std::vector<WordRecord> out;
  out.reserve(words.size());
  for (const WordRecord& w : words) {
    WordRecord r;
    r.token_ids = gen.next(rng);
    r.n_tokens = r.token_ids.size();
    r.surface = std::string(trim(decode(vocab, r.token_ids)));
    r.context_ids = w.context_ids;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> knn_layer_accuracy(const std::vector<std::vector<Vector>>& word_states,
                                       const std::vector<std::vector<Vector>>& nonword_states,
                                       std::uint64_t seed, int k) {
  if (word_states.empty() || nonword_states.empty()) throw Error(ErrorCode::EmptyInput, "no probe items");
  const std::size_t L = word_states.front().size();
  std::vector<double> acc(L);
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<ProbePoint> pts;
    pts.reserve(word_states.size() + nonword_states.size());
    for (const auto& s : word_states) pts.push_back({s.at(l), Label::Word, static_cast<int>(l)});
    for (const auto& s : nonword_states) pts.push_back({s.at(l), Label::Nonword, static_cast<int>(l)});
    const ProbeDataset ds = split_dataset(std::move(pts), seed);
    acc[l] = knn_accuracy(ds.train, ds.eval, k);
  }
  return acc;
}

namespace {

// Hidden states at token `offset` from the end of the word, every layer.
std::vector<Vector> word_states(const ModelRef& m, const WordRecord& w, std::size_t offset) {
  const TokenIds ids = join(m.config, w.context_ids, w.token_ids);
  const auto tr = forward(m.weights, m.config, ids, {}, ForwardOptions{false});
  const auto row = static_cast<Eigen::Index>(ids.size() - 1 - offset);
  std::vector<Vector> out;
  for (const auto& h : tr.hidden) out.push_back(h.row(row).transpose());
  return out;
}

}  // namespace

ExperimentReport word_vs_nonword(const ModelRef& m, std::span<const WordRecord> words,
                                 std::span<const WordRecord> nonwords, TokenPos pos,
                                 const ExperimentOptions& o) {
  const double nw = static_cast<double>(words.size()), nn = static_cast<double>(nonwords.size());
  if (nw == 0 || nn == 0 || std::abs(nw - nn) > 0.01 * std::max(nw, nn))
    throw Error(ErrorCode::UnbalancedDataset, "word and nonword sets differ in size");
  const std::size_t min_tokens = pos == TokenPos::Last ? 2 : 3;
  const std::size_t offset = pos == TokenPos::Last ? 0 : 1;
  std::vector<std::vector<Vector>> ws, ns;
  for (const auto& w : words)
    if (w.n_tokens >= min_tokens) ws.push_back(word_states(m, w, offset));
  for (const auto& w : nonwords)
    if (w.n_tokens >= min_tokens) ns.push_back(word_states(m, w, offset));
  const std::size_t n = std::min(ws.size(), ns.size());
  ws.resize(n);
  ns.resize(n);
  if (n < 5) throw Error(ErrorCode::NoEligibleWords, "too few items for the probe");

  ExperimentReport r;
  r.name = std::string("word_vs_nonword_") + to_string(pos);
  r.curves["accuracy"] = {knn_layer_accuracy(ws, ns, o.seed, o.knn_k), ""};
  r.scalars["n_per_class"] = static_cast<double>(n);
  return r;
}

std::vector<bool> hidden_hits(const ModelRef& m, const RetrievalItem& item,
                              std::span<const Intervention> interventions) {
  const TokenIds ids = join(m.config, item.context, item.ids);
  // interventions address the word's last token, whatever context was kept
  std::vector<Intervention> iv(interventions.begin(), interventions.end());
  for (auto& i : iv) i.position = static_cast<int>(ids.size()) - 1;
  const auto tr = forward(m.weights, m.config, ids, iv, ForwardOptions{false});
  std::vector<bool> hits;
  for (const auto& h : tr.hidden) hits.push_back(lens_hit(h.row(h.rows() - 1).transpose(), m.weights.embed, item.target));
  return hits;
}

std::vector<bool> ffn_hits(const ModelRef& m, const RetrievalItem& item) {
  const TokenIds ids = join(m.config, item.context, item.ids);
  const auto tr = forward(m.weights, m.config, ids, {}, ForwardOptions{false});
  std::vector<bool> hits;
  for (const auto& f : tr.ffn_update) hits.push_back(lens_hit(f.row(f.rows() - 1).transpose(), m.weights.embed, item.target));
  return hits;
}

ExperimentReport split_retrieval(const ModelRef& m, std::span<const RetrievalItem> items, const ExperimentOptions&) {
  std::vector<std::vector<bool>> hits;
  for (const auto& it : items) hits.push_back(hidden_hits(m, it));
  ExperimentReport r;
  r.name = "split_retrieval";
  add_curve(r, "", curve_or_throw(hits));
  return r;
}

ExperimentReport ffn_retrieval(const ModelRef& m, std::span<const RetrievalItem> items, const ExperimentOptions&) {
  std::vector<std::vector<bool>> hidden, ffn;
  for (const auto& it : items) {
    hidden.push_back(hidden_hits(m, it));
    ffn.push_back(ffn_hits(m, it));
  }
  ExperimentReport r;
  r.name = "ffn_retrieval";
  add_curve(r, "hidden_", curve_or_throw(hidden));
  add_curve(r, "ffn_", curve_or_throw(ffn));
  return r;
}

std::vector<int> ablation_layers(const ModelRef& m, const RetrievalItem& item, AblationPolicy policy,
                                 std::uint64_t seed) {
  if (policy == AblationPolicy::None) return {};
  const auto hits = ffn_hits(m, item);
  std::vector<int> targeted;
  for (std::size_t l = 0; l < hits.size(); ++l)
    if (hits[l]) targeted.push_back(static_cast<int>(l));
  if (policy == AblationPolicy::Targeted) return targeted;
  std::vector<int> layers(hits.size());
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l] = static_cast<int>(l);
  std::mt19937_64 rng(item_seed(seed, item.word));
  for (std::size_t i = 0; i < targeted.size(); ++i)
    std::swap(layers[i], layers[i + rng() % (layers.size() - i)]);
  layers.resize(targeted.size());
  std::sort(layers.begin(), layers.end());
  return layers;
}

ExperimentReport ffn_ablation(const ModelRef& m, std::span<const RetrievalItem> items, AblationPolicy policy,
                              const ExperimentOptions& o) {
  if (policy == AblationPolicy::None) return split_retrieval(m, items, o);
  std::vector<std::vector<bool>> hits;
  double ablated = 0;
  for (const auto& it : items) {
    std::vector<Intervention> iv;
    for (int l : ablation_layers(m, it, policy, o.seed)) iv.push_back(Intervention::ablate_ffn(l, 0));
    ablated += static_cast<double>(iv.size());
    hits.push_back(hidden_hits(m, it, iv));
  }
  ExperimentReport r;
  r.name = std::string("ffn_ablation_") + to_string(policy);
  add_curve(r, "", curve_or_throw(hits));
  r.scalars["mean_ablated_layers"] = ablated / static_cast<double>(items.size());
  return r;
}

ExperimentReport multi_token_retrieval(const ModelRef& m, std::span<const WordRecord> words,
                                       const ExperimentOptions& o) {
  if (words.empty()) throw Error(ErrorCode::NoEligibleWords, "no multi-token words");
  const PatchPrompt prompt = build_patch_prompt(m.vocab, o.patch_template);
  std::vector<std::vector<bool>> hits;
  for (const auto& w : words) {
    const auto states = last_token_states(m.weights, m.config, w.context_ids, w.token_ids);
    std::vector<bool> row;
    for (int l = 0; l < static_cast<int>(states.size()); ++l) {
      const int patch_layer = o.patch_mode == PatchMode::Input ? 0 : l;
      row.push_back(patchscope_decode(m.weights, m.config, m.vocab, prompt, states[static_cast<std::size_t>(l)],
                                      w.surface, 0, l, patch_layer)
                        .success);
    }
    hits.push_back(std::move(row));
  }
  ExperimentReport r;
  r.name = "multi_token_retrieval";
  const auto c = retrieval_curve(hits);
  add_curve(r, "", c);
  r.scalars["never_decoded"] = 1.0 - c.cumulative.back();
  return r;
}

std::vector<double> preceding_token_attention(const ForwardTrace& tr, int query) {
  if (query < 1 || query >= tr.length()) throw Error(ErrorCode::InvalidPosition, "query needs a preceding token");
  if (tr.attn_weights.empty()) throw Error(ErrorCode::EmptyInput, "trace kept no attention weights");
  std::vector<double> out;
  for (const auto& heads : tr.attn_weights) {
    double s = 0.0;
    for (const auto& a : heads) s += a(query, query - 1);
    out.push_back(s / static_cast<double>(heads.size()));
  }
  return out;
}

ExperimentReport attention_aggregation(const ModelRef& m, std::span<const WordRecord> multi,
                                       std::span<const WordRecord> single, const ExperimentOptions&) {
  auto collect = [&](std::span<const WordRecord> group) {
    std::vector<std::vector<double>> by_layer(static_cast<std::size_t>(m.config.n_layers));
    for (const auto& w : group) {
      const TokenIds ids = join(m.config, w.context_ids, w.token_ids);
      if (ids.size() < 2) continue;
      const auto tr = forward(m.weights, m.config, ids);
      const auto a = preceding_token_attention(tr, static_cast<int>(ids.size()) - 1);
      for (std::size_t l = 0; l < a.size(); ++l) by_layer[l].push_back(a[l]);
    }
    return by_layer;
  };
  const auto mt = collect(multi);
  const auto st = collect(single);
  if (mt.front().empty() || st.front().empty())
    throw Error(ErrorCode::NoEligibleWords, "attention aggregation needs both groups");

  ExperimentReport r;
  r.name = "attention_aggregation";
  Series ms{{}, "multi_token"}, ss{{}, "single_token"};
  for (std::size_t l = 0; l < mt.size(); ++l) {
    ms.values.push_back(mean(mt[l]));
    ss.values.push_back(mean(st[l]));
    r.stats.push_back(one_sided_t_test(mt[l], st[l], static_cast<int>(l)));
  }
  r.curves["multi_token"] = std::move(ms);
  r.curves["single_token"] = std::move(ss);
  r.scalars["n_multi"] = static_cast<double>(mt.front().size());
  r.scalars["n_single"] = static_cast<double>(st.front().size());
  return r;
}

}  // namespace lexiscope
