#pragma once

// Finetuning-free vocabulary expansion: orthogonal per-layer maps from hidden
// space to the E and U spaces, new entries derived from detokenized word
// representations, and a short refinement run that trains only two d x d
// matrices while the core model stays frozen.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexiscope/model.hpp"
#include "lexiscope/patchscope.hpp"
#include "lexiscope/tokenizer.hpp"

namespace lexiscope {

struct LayerMaps {
  std::vector<MatrixD> T_E;  // per layer 0..n_layers, d x d orthogonal
  std::vector<MatrixD> T_U;
  double rms_E_mean = 0.0;
  double rms_U_mean = 0.0;
  std::vector<double> rms_h_mean;
};

/// v / sqrt(mean(v_i^2)). Throws ZeroVector.
VectorD rms_normalize(const VectorD& v);

/// Orthogonal T minimising sum ||T h_i - x_i||^2 over rows of H and X:
/// SVD of X^T H = S diag V^T, T = S V^T. Largest-magnitude entry of every
/// left singular vector is made positive.
MatrixD fit_procrustes(const MatrixD& H, const MatrixD& X);

/// hidden[l] rows for every token run alone: n_layers + 1 matrices, V x d.
std::vector<MatrixD> single_token_states(const ModelWeights& weights, const ModelConfig& config);

/// Fits the maps from precomputed single-token states.
LayerMaps fit_layer_maps(const std::vector<MatrixD>& states, const Matrix& E, const Matrix& U);

LayerMaps learn_layer_maps(const ModelWeights& weights, const ModelConfig& config);

struct InitialEntries {
  Vector e_hat;
  Vector u_hat;
};

InitialEntries derive_initial_entries(const Vector& r, int layer, const LayerMaps& maps);

struct ExpansionEntry {
  std::string word;
  TokenIds original_ids;
  int layer = 0;
  Vector r;
  Vector e_hat, u_hat;
  Vector e, u;
  TokenId new_id = 0;
};

/// Base vocabulary plus whole-word tokens. A pre-token whose trimmed text is
/// an added word becomes that word's single id; everything else is BPE.
class ExpandedVocabulary {
 public:
  ExpandedVocabulary(const Vocabulary& base, std::vector<std::string> words);

  const Vocabulary& base() const { return *base_; }
  std::size_t original_size() const { return base_->size(); }
  std::size_t size() const { return base_->size() + words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  std::optional<TokenId> find_word(std::string_view word) const;
  bool is_new(TokenId id) const { return id >= static_cast<TokenId>(base_->size()); }

  TokenIdSeq encode(std::string_view text) const;
  /// New ids render as " word".
  std::string decode(std::span<const TokenId> ids) const;
  /// Documents joined by newline, as used for training.
  TokenIds encode_stream(std::string_view text) const;

 private:
  const Vocabulary* base_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct RefinementMatrices {
  Matrix W_E;
  Matrix W_U;
};

struct RefineHyper {
  int steps = 500;
  int batch = 4;
  int seq_len = 128;
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  std::uint64_t seed = 1;
};

enum class EntryInit { Maps, MeanEmbedding };

struct ExpansionOptions {
  std::size_t min_count = 1;
  std::string patch_template = std::string(kIdentityTemplate);
  PatchMode patch_mode = PatchMode::Input;
  std::size_t context_tokens = 100;
  bool use_context = true;
  std::size_t max_words = 0;  // 0 keeps every candidate
  EntryInit init = EntryInit::Maps;
  RefineHyper refine;
};

/// Original weights with E and U extended by one row per entry.
struct ExpandedModel {
  ModelConfig config;
  ModelWeights weights;
  ExpansionHeader header;
  std::vector<ExpansionEntry> entries;
};

struct ExpansionResult {
  ExpandedModel model;
  std::vector<std::string> candidates;
  std::vector<std::string> skipped;  // no decodable layer
  std::vector<float> refine_loss;
};

/// Multi-token alphabetic words seen at least `min_count` times, in order of
/// first appearance.
std::vector<std::string> expansion_candidates(const Vocabulary& vocab, std::string_view text,
                                              std::size_t min_count);

/// Builds the expanded model with e = e_hat + W_E e_hat, u = u_hat + W_U u_hat.
ExpandedModel assemble_expanded(const ModelWeights& weights, const ModelConfig& config,
                                std::vector<ExpansionEntry> entries, const RefinementMatrices& W);

/// Trains W_E and W_U (starting at zero) on the re-encoded corpus with every
/// other parameter frozen; updates `model` to the final effective rows.
RefinementMatrices train_refinement(ExpandedModel& model, const ExpandedVocabulary& vocab,
                                    std::string_view train_text, const RefineHyper& hyper,
                                    std::vector<float>* loss_curve = nullptr);

/// Candidate scan, earliest decodable layer per word, initial entries and
/// refinement. Throws NoCandidates when no word reaches min_count.
ExpansionResult expand_vocabulary(const ModelWeights& weights, const ModelConfig& config,
                                  const Vocabulary& vocab, std::string_view train_text,
                                  std::string_view test_text, const ExpansionOptions& options);

struct Top1Metrics {
  std::optional<double> new_token_acc;
  std::optional<double> original_or_new_acc;
  double all_words_acc = 0.0;
  std::size_t n_positions = 0;
  std::size_t n_word_positions = 0;
};

/// Token-level top-1 next-token accuracy over every document of `text`.
/// With `use_new_tokens` the text is encoded with the added words; otherwise
/// with the base vocabulary, and word positions score the original first
/// token only.
Top1Metrics evaluate_top1(const ModelWeights& weights, const ModelConfig& config,
                          const ExpandedVocabulary& vocab, std::string_view text, bool use_new_tokens);

/// 1 - (tokens with added words) / (tokens under the base vocabulary).
double token_reduction(const ExpandedVocabulary& vocab, std::string_view text);

// JSONL persistence, one entry per line, vectors as base64 float32.
void save_entries(const std::filesystem::path& path, std::span<const ExpansionEntry> entries);
std::vector<ExpansionEntry> load_entries(const std::filesystem::path& path);

std::string base64_floats(const Vector& v);
Vector floats_from_base64(std::string_view text);

}  // namespace lexiscope
