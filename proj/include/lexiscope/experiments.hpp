#pragma once

// The detokenization experiments: word/nonword probing, split and typo
// retrieval through the input-embedding logit lens, FFN retrieval and
// ablation, patchscope retrieval of multi-token words, and attention
// aggregation with per-layer t-tests.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexiscope/corpus.hpp"
#include "lexiscope/model.hpp"
#include "lexiscope/patchscope.hpp"
#include "lexiscope/probes.hpp"
#include "lexiscope/stats.hpp"

namespace lexiscope {

struct ModelRef {
  const ModelWeights& weights;
  const ModelConfig& config;
  const Vocabulary& vocab;
};

enum class SplitMode { Artificial, Typo, Suffix };
enum class TokenPos { Last, Penultimate };
enum class AblationPolicy { Targeted, Random, None };

struct ExperimentOptions {
  std::uint64_t seed = 0;
  std::size_t context_tokens = 100;
  bool use_context = true;
  std::size_t max_items = 0;  // 0 keeps every eligible word
  int knn_k = 4;
  std::vector<std::string> suffixes{"ing", "ion", "est"};
  int typo_retries = 100;
  int attention_tokens = 0;  // multi-token group size; 0 takes 2..4
  PatchMode patch_mode = PatchMode::Input;
  std::string patch_template = std::string(kRepeatTemplate);
};

struct Series {
  std::vector<double> values;
  std::string group;
};

struct ExperimentReport {
  std::string name;
  std::map<std::string, Series> curves;
  std::vector<TTestResult> stats;
  std::map<std::string, double> scalars;
  std::map<std::string, std::string> metadata;
};

nlohmann::json to_json(const ExperimentReport& report);

// ---------------------------------------------------------------------------
// Items

/// A perturbed rendering of a word whose natural form is one token.
struct RetrievalItem {
  std::string word;
  TokenId target = 0;  // the original single token
  std::vector<std::string> pieces;
  TokenIds ids;  // tokens of the perturbed word
  TokenIds context;
};

/// Eligible words in first-appearance order, perturbed deterministically from
/// (seed, word). Artificial: longer than 3 characters, 2..5 uniform pieces.
/// Typo: longer than 4, resampled until multi-token. Suffix: ends in one of
/// the configured suffixes, cut at the suffix boundary. Throws NoEligibleWords.
std::vector<RetrievalItem> make_retrieval_items(const Vocabulary& vocab, const CorpusIndex& corpus,
                                                SplitMode mode, const ExperimentOptions& options);

/// Multi-token words (space-prefixed form has min..max tokens; max 0 = any).
std::vector<WordRecord> multi_token_words(const CorpusIndex& corpus, const ExperimentOptions& options,
                                          std::size_t min_tokens = 2, std::size_t max_tokens = 0);

/// Words whose space-prefixed form is a single token.
std::vector<WordRecord> single_token_words(const CorpusIndex& corpus, const ExperimentOptions& options);

/// One nonword per word, carrying that word's context.
std::vector<WordRecord> make_nonword_records(const Vocabulary& vocab, std::span<const WordRecord> words,
                                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiments

/// Per-layer kNN eval accuracy from precomputed states [item][layer].
std::vector<double> knn_layer_accuracy(const std::vector<std::vector<Vector>>& word_states,
                                       const std::vector<std::vector<Vector>>& nonword_states,
                                       std::uint64_t seed, int k);

ExperimentReport word_vs_nonword(const ModelRef& model, std::span<const WordRecord> words,
                                 std::span<const WordRecord> nonwords, TokenPos pos,
                                 const ExperimentOptions& options);

/// Logit-lens hits of the last-token hidden state at every layer 0..n_layers.
std::vector<bool> hidden_hits(const ModelRef& model, const RetrievalItem& item,
                              std::span<const Intervention> interventions = {});

/// Logit-lens hits of the last-token FFN update at every layer 0..n_layers-1.
std::vector<bool> ffn_hits(const ModelRef& model, const RetrievalItem& item);

ExperimentReport split_retrieval(const ModelRef& model, std::span<const RetrievalItem> items,
                                 const ExperimentOptions& options);

/// Hidden-state curves and FFN-update curves side by side.
ExperimentReport ffn_retrieval(const ModelRef& model, std::span<const RetrievalItem> items,
                               const ExperimentOptions& options);

/// Layers whose last-token FFN update is ablated for this item. Random draws
/// as many distinct layers as Targeted would, seeded by (seed, word).
std::vector<int> ablation_layers(const ModelRef& model, const RetrievalItem& item, AblationPolicy policy,
                                 std::uint64_t seed);

/// Policy None runs no intervention and returns the split_retrieval report.
ExperimentReport ffn_ablation(const ModelRef& model, std::span<const RetrievalItem> items,
                              AblationPolicy policy, const ExperimentOptions& options);

ExperimentReport multi_token_retrieval(const ModelRef& model, std::span<const WordRecord> words,
                                       const ExperimentOptions& options);

/// Head-averaged attention from position `query` to `query - 1`, per layer.
std::vector<double> preceding_token_attention(const ForwardTrace& trace, int query);

ExperimentReport attention_aggregation(const ModelRef& model, std::span<const WordRecord> multi,
                                       std::span<const WordRecord> single,
                                       const ExperimentOptions& options);

const char* to_string(SplitMode m);
const char* to_string(AblationPolicy p);
const char* to_string(TokenPos p);

}  // namespace lexiscope
