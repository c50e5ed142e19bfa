#pragma once

// Byte-level BPE tokenizer and the word perturbations used by the
// detokenization experiments (artificial splits, typos, nonwords).
//
// Word boundaries follow the leading-space convention: a word-initial token
// carries the space that precedes the word (" cats"), so decode is a plain
// concatenation and encode is total over arbitrary bytes.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lexiscope {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

inline constexpr std::size_t kByteAlphabet = 256;

struct MergeRule {
  TokenId left = 0;
  TokenId right = 0;
  TokenId result = 0;
};

/// [begin, end) token range of one whitespace-delimited word.
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const WordSpan&) const = default;
};

struct TokenIdSeq {
  TokenIds ids;
  std::vector<WordSpan> word_spans;
};

/// Immutable BPE vocabulary. Ids 0..255 are the raw bytes; every later id is
/// produced by exactly one merge rule, in training order.
class Vocabulary {
 public:
  Vocabulary();  // bytes only, no merges

  /// Builds the vocabulary by replaying merges given as token strings.
  static Vocabulary from_merges(const std::vector<std::pair<std::string, std::string>>& merges);

  Vocabulary(std::vector<std::string> tokens, std::vector<MergeRule> merges);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::vector<MergeRule>& merges() const noexcept { return merges_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Rank of the merge joining (left, right), or -1.
  int merge_rank(TokenId left, TokenId right) const;

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && merges_.size() == other.merges_.size() &&
           std::equal(merges_.begin(), merges_.end(), other.merges_.begin(),
                      [](const MergeRule& a, const MergeRule& b) {
                        return a.left == b.left && a.right == b.right && a.result == b.result;
                      });
  }

 private:
  void build_indices();

  std::vector<std::string> tokens_;
  std::vector<MergeRule> merges_;
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<std::uint64_t, int> rank_;
};

/// Splits text into pre-tokens. Each piece is a whitespace run, or an optional
/// single leading space followed by a run of letters, digits or other symbols.
/// Pieces concatenate back to the input exactly.
std::vector<std::string_view> pretokenize(std::string_view text);

/// True when the pre-token is a word (letters, optionally space-prefixed).
bool is_word_piece(std::string_view piece);

Vocabulary train_bpe(std::string_view corpus, std::size_t vocab_size);

TokenIdSeq encode(const Vocabulary& vocab, std::string_view text);

/// Encodes a single pre-token without splitting it further.
TokenIds encode_piece(const Vocabulary& vocab, std::string_view piece);

std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids);

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);
std::string escape_token(std::string_view bytes);
std::string unescape_token(std::string_view text);

// ---------------------------------------------------------------------------
// Word perturbations

struct SplitResult {
  std::vector<std::string> pieces;
  bool degenerate = false;  // n_pieces == 1 passthrough
};

/// Cuts `word` into `n_pieces` non-empty contiguous substrings at uniformly
/// random distinct cut points drawn from a mt19937_64 seeded with `seed`.
SplitResult artificial_split(std::string_view word, int n_pieces, std::uint64_t seed);

/// Encodes split pieces one by one; `leading_space` prefixes the first piece.
TokenIds encode_pieces(const Vocabulary& vocab, std::span<const std::string> pieces,
                       bool leading_space);

enum class TypoKind { SwapAdjacent, DeleteChar, InsertChar };

struct TypoOp {
  TypoKind kind = TypoKind::SwapAdjacent;
  std::size_t position = 0;
  std::optional<char> inserted_char;
};

std::string perturb_typo(std::string_view word, const TypoOp& op);

/// Draws a valid typo for `word` (kind, position and letter uniform).
TypoOp sample_typo(std::string_view word, std::mt19937_64& rng);

struct WordRecord {
  std::string surface;
  TokenIds token_ids;
  TokenIds context_ids;
  std::size_t n_tokens = 0;
};

/// Encodes `surface` as a word; word-initial tokens carry the boundary space
/// unless `leading_space` is false.
WordRecord make_word_record(const Vocabulary& vocab, std::string surface, TokenIds context = {},
                            bool leading_space = true);

enum class TokenRole { Initial, Internal, Final };

/// Position-preserving token shuffler: samples nonwords whose tokens occupy
/// the same positional role (initial / internal / final) they had in the
/// source words, with a length distribution matching the source.
class NonwordGenerator {
 public:
  NonwordGenerator(const Vocabulary& vocab, std::span<const WordRecord> words,
                   int max_attempts = 1000);

  TokenIds next(std::mt19937_64& rng) const;

  const std::vector<TokenId>& pool(TokenRole role) const;

 private:
  const Vocabulary* vocab_;
  std::vector<TokenId> initial_, internal_, final_;
  std::vector<std::size_t> lengths_;
  std::vector<std::string> surfaces_;  // sorted
  int max_attempts_;
};

TokenIds make_nonword(const Vocabulary& vocab, std::span<const WordRecord> words,
                      std::uint64_t seed);

/// Strips leading and trailing ASCII whitespace (the boundary marker included).
std::string_view trim(std::string_view s);

}  // namespace lexiscope
