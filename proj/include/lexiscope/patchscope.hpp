#pragma once

// Patchscope decoding: inject a hidden vector into a carrier prompt and test
// whether greedy generation spells out the original word.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lexiscope/model.hpp"
#include "lexiscope/tokenizer.hpp"

namespace lexiscope {

inline constexpr std::string_view kRepeatTemplate = "Repeat this word twice: 1) {X} 2)";
inline constexpr std::string_view kIdentityTemplate = "x x x x";
inline constexpr std::string_view kPlaceholder = "{X}";

/// Byte 'x'. Every placeholder renders as this single token.
inline constexpr TokenId kFillerToken = 'x';

struct PatchPrompt {
  std::string templ;
  TokenIds token_ids;
  std::vector<int> patch_positions;
};

/// A template holds exactly one "{X}", or consists only of "x" placeholders
/// separated by whitespace. The whitespace before a placeholder is absorbed
/// into it. Throws BadTemplate otherwise.
PatchPrompt build_patch_prompt(const Vocabulary& vocab, std::string_view templ);

/// Where the vector enters the carrier run.
enum class PatchMode { Input, MatchedLayer };

struct DecodeResult {
  int layer = 0;
  std::string generated;
  bool success = false;
  std::string target;
};

/// Tokens the target occupies as a space-prefixed word.
std::size_t target_length(const Vocabulary& vocab, std::string_view target);

/// Greedy decode with `r` patched at every placeholder position, at
/// `patch_layer` (0 = input level). Success iff the first target_length
/// generated tokens decode, trimmed, to `target`. max_new <= 0 means exactly
/// target_length tokens. `layer` is recorded in the result.
DecodeResult patchscope_decode(const ModelWeights& weights, const ModelConfig& config,
                               const Vocabulary& vocab, const PatchPrompt& prompt, const Vector& r,
                               std::string_view target, int max_new = 0, int layer = 0,
                               int patch_layer = 0);

struct DecodableLayer {
  int layer = 0;
  Vector r;
};

/// Hidden states of context + word at its last token, one per layer 0..n_layers.
std::vector<Vector> last_token_states(const ModelWeights& weights, const ModelConfig& config,
                                      const TokenIds& context, const TokenIds& word_ids);

/// First layer whose last-token state decodes to the word, or nullopt.
std::optional<DecodableLayer> earliest_decodable_layer(const ModelWeights& weights,
                                                       const ModelConfig& config,
                                                       const Vocabulary& vocab,
                                                       const WordRecord& word,
                                                       const PatchPrompt& prompt,
                                                       PatchMode mode = PatchMode::Input);

}  // namespace lexiscope
