#include "lexiscope/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "lexiscope/error.hpp"

namespace lexiscope {

namespace {

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

TokenId pair_left(std::uint64_t key) { return static_cast<TokenId>(key >> 32); }
TokenId pair_right(std::uint64_t key) { return static_cast<TokenId>(key & 0xffffffffu); }

enum class CharClass { Space, Letter, Digit, Other };

CharClass classify(unsigned char c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
    return CharClass::Space;
  }
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80) return CharClass::Letter;
  if (c >= '0' && c <= '9') return CharClass::Digit;
  return CharClass::Other;
}

std::vector<std::string> base_tokens() {
  std::vector<std::string> tokens;
  tokens.reserve(kByteAlphabet);
  for (std::size_t b = 0; b < kByteAlphabet; ++b) tokens.emplace_back(1, static_cast<char>(b));
  return tokens;
}

/// Applies merges by ascending rank until no adjacent pair is mergeable.
TokenIds bpe_symbols(const Vocabulary& vocab, std::string_view piece) {
  TokenIds symbols;
  symbols.reserve(piece.size());
  for (unsigned char c : piece) symbols.push_back(static_cast<TokenId>(c));
  const auto& merges = vocab.merges();
  while (symbols.size() > 1) {
    int best = -1;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const int rank = vocab.merge_rank(symbols[i], symbols[i + 1]);
      if (rank >= 0 && (best < 0 || rank < best)) best = rank;
    }
    if (best < 0) break;
    const MergeRule& rule = merges[static_cast<std::size_t>(best)];
    TokenIds merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == rule.left && symbols[i + 1] == rule.right) {
        merged.push_back(rule.result);
        ++i;
      } else {
        merged.push_back(symbols[i]);
      }
    }
    symbols.swap(merged);
  }
  return symbols;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : tokens_(base_tokens()) { build_indices(); }

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<MergeRule> merges)
    : tokens_(std::move(tokens)), merges_(std::move(merges)) {
  if (tokens_.size() < kByteAlphabet) {
    throw Error(ErrorCode::FormatError, "vocabulary is missing byte tokens");
  }
  for (std::size_t b = 0; b < kByteAlphabet; ++b) {
    if (tokens_[b] != std::string(1, static_cast<char>(b))) {
      throw Error(ErrorCode::FormatError, "token " + std::to_string(b) + " is not its byte");
    }
  }
  const auto n = static_cast<TokenId>(tokens_.size());
  for (const MergeRule& m : merges_) {
    if (m.left < 0 || m.left >= n || m.right < 0 || m.right >= n || m.result < 0 || m.result >= n) {
      throw Error(ErrorCode::FormatError, "merge refers to an unknown token");
    }
    if (tokens_[static_cast<std::size_t>(m.result)] !=
        tokens_[static_cast<std::size_t>(m.left)] + tokens_[static_cast<std::size_t>(m.right)]) {
      throw Error(ErrorCode::FormatError, "merge output does not match its inputs");
    }
  }
  build_indices();
  if (index_.size() != tokens_.size()) {
    throw Error(ErrorCode::FormatError, "duplicate token strings in vocabulary");
  }
}

Vocabulary Vocabulary::from_merges(const std::vector<std::pair<std::string, std::string>>& merges) {
  std::vector<std::string> tokens = base_tokens();
  std::unordered_map<std::string, TokenId> index;
  for (std::size_t i = 0; i < tokens.size(); ++i) index.emplace(tokens[i], static_cast<TokenId>(i));
  std::vector<MergeRule> rules;
  for (const auto& [left, right] : merges) {
    const auto l = index.find(left);
    const auto r = index.find(right);
    if (l == index.end() || r == index.end()) {
      throw Error(ErrorCode::FormatError, "merge input not in vocabulary: " + left + " " + right);
    }
    const std::string joined = left + right;
    auto [it, inserted] = index.emplace(joined, static_cast<TokenId>(tokens.size()));
    if (inserted) tokens.push_back(joined);
    rules.push_back({l->second, r->second, it->second});
  }
  return Vocabulary(std::move(tokens), std::move(rules));
}

void Vocabulary::build_indices() {
  index_.clear();
  rank_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<TokenId>(i));
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    rank_.emplace(pair_key(merges_[r].left, merges_[r].right), static_cast<int>(r));
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(ErrorCode::UnknownTokenId, std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::merge_rank(TokenId left, TokenId right) const {
  const auto it = rank_.find(pair_key(left, right));
  return it == rank_.end() ? -1 : it->second;
}

// ---------------------------------------------------------------------------
// Pre-tokenization

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> pieces;
  const std::size_t n = text.size();
  std::size_t i = 0;
  auto cls = [&](std::size_t k) { return classify(static_cast<unsigned char>(text[k])); };
  auto run_end = [&](std::size_t k) {
    const CharClass c = cls(k);
    while (k < n && cls(k) == c) ++k;
    return k;
  };
  while (i < n) {
    if (cls(i) != CharClass::Space) {
      const std::size_t end = run_end(i);
      pieces.push_back(text.substr(i, end - i));
      i = end;
      continue;
    }
    std::size_t end = run_end(i);
    const bool word_follows = end < n;
    if (word_follows && text[end - 1] == ' ') {
      // The space right before a word belongs to that word.
      if (end - 1 > i) pieces.push_back(text.substr(i, end - 1 - i));
      const std::size_t word_end = run_end(end);
      pieces.push_back(text.substr(end - 1, word_end - end + 1));
      i = word_end;
    } else {
      pieces.push_back(text.substr(i, end - i));
      i = end;
    }
  }
  return pieces;
}

bool is_word_piece(std::string_view piece) {
  if (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
  if (piece.empty()) return false;
  return std::all_of(piece.begin(), piece.end(), [](char c) {
    return classify(static_cast<unsigned char>(c)) == CharClass::Letter;
  });
}

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return classify(static_cast<unsigned char>(c)) == CharClass::Space; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// ---------------------------------------------------------------------------
// Training

Vocabulary train_bpe(std::string_view corpus, std::size_t vocab_size) {
  if (vocab_size < kByteAlphabet) {
    throw Error(ErrorCode::CorpusTooSmall,
                "vocab_size " + std::to_string(vocab_size) + " is below the byte alphabet");
  }
  if (corpus.empty() && vocab_size > kByteAlphabet) {
    throw Error(ErrorCode::CorpusTooSmall, "empty corpus");
  }

  // Unique pre-tokens in order of first occurrence; (word index, symbol
  // position) then orders pair occurrences exactly as they appear in the text.
  std::vector<TokenIds> words;
  std::vector<std::int64_t> counts;
  {
    std::unordered_map<std::string_view, std::size_t> seen;
    for (std::string_view piece : pretokenize(corpus)) {
      auto [it, inserted] = seen.emplace(piece, words.size());
      if (inserted) {
        TokenIds symbols;
        for (unsigned char c : piece) symbols.push_back(static_cast<TokenId>(c));
        words.push_back(std::move(symbols));
        counts.push_back(0);
      }
      ++counts[it->second];
    }
  }

  std::unordered_map<std::uint64_t, std::int64_t> pair_count;
  std::unordered_map<std::uint64_t, std::set<std::size_t>> pair_words;
  auto add_word = [&](std::size_t w, int sign) {
    const TokenIds& s = words[w];
    std::map<std::uint64_t, std::int64_t> local;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) ++local[pair_key(s[i], s[i + 1])];
    for (const auto& [key, mult] : local) {
      const std::int64_t c = (pair_count[key] += sign * mult * counts[w]);
      if (sign > 0) {
        pair_words[key].insert(w);
      } else if (c == 0) {
        pair_count.erase(key);
        pair_words.erase(key);
      } else {
        pair_words[key].erase(w);
      }
    }
  };
  for (std::size_t w = 0; w < words.size(); ++w) add_word(w, +1);

  auto first_occurrence = [&](std::uint64_t key) {
    const std::size_t w = *pair_words.at(key).begin();
    const TokenIds& s = words[w];
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (pair_key(s[i], s[i + 1]) == key) return std::pair{w, i};
    }
    return std::pair{w, s.size()};
  };

  std::vector<std::string> tokens = base_tokens();
  std::unordered_map<std::string, TokenId> index;
  for (std::size_t i = 0; i < tokens.size(); ++i) index.emplace(tokens[i], static_cast<TokenId>(i));
  std::vector<MergeRule> merges;

  while (tokens.size() < vocab_size) {
    if (pair_count.empty()) {
      throw Error(ErrorCode::CorpusTooSmall, "ran out of pairs after " +
                                                 std::to_string(tokens.size()) + " tokens");
    }
    std::int64_t best_count = 0;
    std::vector<std::uint64_t> tied;
    for (const auto& [key, c] : pair_count) {
      if (c > best_count) {
        best_count = c;
        tied.assign(1, key);
      } else if (c == best_count) {
        tied.push_back(key);
      }
    }
    std::uint64_t best = tied.front();
    if (tied.size() > 1) {
      auto best_occ = first_occurrence(best);
      for (std::size_t k = 1; k < tied.size(); ++k) {
        const auto occ = first_occurrence(tied[k]);
        if (occ < best_occ) {
          best_occ = occ;
          best = tied[k];
        }
      }
    }

    const TokenId left = pair_left(best);
    const TokenId right = pair_right(best);
    const std::string joined =
        tokens[static_cast<std::size_t>(left)] + tokens[static_cast<std::size_t>(right)];
    auto [it, inserted] = index.emplace(joined, static_cast<TokenId>(tokens.size()));
    if (inserted) tokens.push_back(joined);
    const TokenId result = it->second;
    merges.push_back({left, right, result});

    const std::vector<std::size_t> affected(pair_words[best].begin(), pair_words[best].end());
    for (std::size_t w : affected) {
      add_word(w, -1);
      TokenIds& s = words[w];
      TokenIds merged;
      merged.reserve(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          merged.push_back(result);
          ++i;
        } else {
          merged.push_back(s[i]);
        }
      }
      s.swap(merged);
      add_word(w, +1);
    }
  }
  return Vocabulary(std::move(tokens), std::move(merges));
}

// ---------------------------------------------------------------------------
// Encode / decode

TokenIds encode_piece(const Vocabulary& vocab, std::string_view piece) {
  return bpe_symbols(vocab, piece);
}

TokenIdSeq encode(const Vocabulary& vocab, std::string_view text) {
  TokenIdSeq out;
  std::unordered_map<std::string_view, TokenIds> cache;
  for (std::string_view piece : pretokenize(text)) {
    auto it = cache.find(piece);
    if (it == cache.end()) it = cache.emplace(piece, bpe_symbols(vocab, piece)).first;
    const std::size_t begin = out.ids.size();
    out.ids.insert(out.ids.end(), it->second.begin(), it->second.end());
    if (is_word_piece(piece)) out.word_spans.push_back({begin, out.ids.size()});
  }
  return out;
}

std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (TokenId id : ids) out += vocab.token(id);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string escape_token(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c > 0x20 && c < 0x7f && c != '#') {
      out += static_cast<char>(c);
    } else {
      out += "\\x";
      out += kHex[c >> 4];
      out += kHex[c & 0xf];
    }
  }
  return out;
}

std::string unescape_token(std::string_view text) {
  auto hex = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(ErrorCode::FormatError, "bad hex digit in token escape");
  };
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      out += text[i];
      continue;
    }
    if (i + 1 < text.size() && text[i + 1] == '\\') {
      out += '\\';
      ++i;
    } else if (i + 3 < text.size() && text[i + 1] == 'x') {
      out += static_cast<char>(hex(text[i + 2]) * 16 + hex(text[i + 3]));
      i += 3;
    } else {
      throw Error(ErrorCode::FormatError, "bad token escape: " + std::string(text));
    }
  }
  return out;
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const std::string& t : vocab.tokens()) out << escape_token(t) << '\n';
  out << "#MERGES\n";
  for (const MergeRule& m : vocab.merges()) {
    out << escape_token(vocab.token(m.left)) << ' ' << escape_token(vocab.token(m.right)) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::vector<std::string> tokens;
  std::vector<MergeRule> merges;
  std::unordered_map<std::string, TokenId> index;
  std::string line;
  bool in_merges = false;
  while (std::getline(in, line)) {
    if (!in_merges) {
      if (line == "#MERGES") {
        in_merges = true;
        continue;
      }
      std::string tok = unescape_token(line);
      index.emplace(tok, static_cast<TokenId>(tokens.size()));
      tokens.push_back(std::move(tok));
      continue;
    }
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error(ErrorCode::FormatError, "bad merge line: " + line);
    const std::string left = unescape_token(std::string_view(line).substr(0, sp));
    const std::string right = unescape_token(std::string_view(line).substr(sp + 1));
    const auto l = index.find(left), r = index.find(right), o = index.find(left + right);
    if (l == index.end() || r == index.end() || o == index.end()) {
      throw Error(ErrorCode::FormatError, "merge refers to unknown tokens: " + line);
    }
    merges.push_back({l->second, r->second, o->second});
  }
  if (!in_merges) throw Error(ErrorCode::FormatError, "missing #MERGES section");
  return Vocabulary(std::move(tokens), std::move(merges));
}

// ---------------------------------------------------------------------------
// Perturbations

SplitResult artificial_split(std::string_view word, int n_pieces, std::uint64_t seed) {
  if (word.size() <= 3) {
    throw Error(ErrorCode::WordTooShort, "'" + std::string(word) + "' needs more than 3 characters");
  }
  if (n_pieces < 1 || n_pieces > 5 || static_cast<std::size_t>(n_pieces) > word.size()) {
    throw Error(ErrorCode::TooManyPieces, std::to_string(n_pieces) + " pieces for '" +
                                              std::string(word) + "'");
  }
  if (n_pieces == 1) return {{std::string(word)}, true};

  // Partial Fisher-Yates over the interior cut points 1..len-1.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> cuts(word.size() - 1);
  for (std::size_t i = 0; i < cuts.size(); ++i) cuts[i] = i + 1;
  const auto n_cuts = static_cast<std::size_t>(n_pieces - 1);
  for (std::size_t i = 0; i < n_cuts; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (cuts.size() - i));
    std::swap(cuts[i], cuts[j]);
  }
  cuts.resize(n_cuts);
  std::sort(cuts.begin(), cuts.end());

  SplitResult out;
  std::size_t start = 0;
  for (std::size_t c : cuts) {
    out.pieces.emplace_back(word.substr(start, c - start));
    start = c;
  }
  out.pieces.emplace_back(word.substr(start));
  return out;
}

TokenIds encode_pieces(const Vocabulary& vocab, std::span<const std::string> pieces,
                       bool leading_space) {
  TokenIds ids;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const std::string piece = (i == 0 && leading_space) ? " " + pieces[i] : pieces[i];
    const TokenIds part = encode_piece(vocab, piece);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

std::string perturb_typo(std::string_view word, const TypoOp& op) {
  if (word.size() <= 4) {
    throw Error(ErrorCode::WordTooShort, "'" + std::string(word) + "' needs more than 4 characters");
  }
  if (op.inserted_char.has_value() != (op.kind == TypoKind::InsertChar)) {
    throw Error(ErrorCode::InvalidPosition, "inserted_char must be set exactly for insertions");
  }
  std::string out(word);
  const std::size_t p = op.position;
  switch (op.kind) {
    case TypoKind::SwapAdjacent:
      if (p + 1 >= word.size() || word[p] == word[p + 1]) {
        throw Error(ErrorCode::InvalidPosition, "swap at " + std::to_string(p));
      }
      std::swap(out[p], out[p + 1]);
      break;
    case TypoKind::DeleteChar:
      if (p >= word.size()) throw Error(ErrorCode::InvalidPosition, "delete at " + std::to_string(p));
      out.erase(p, 1);
      break;
    case TypoKind::InsertChar:
      if (p > word.size()) throw Error(ErrorCode::InvalidPosition, "insert at " + std::to_string(p));
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(p), *op.inserted_char);
      break;
  }
  return out;
}

TypoOp sample_typo(std::string_view word, std::mt19937_64& rng) {
  if (word.size() <= 4) {
    throw Error(ErrorCode::WordTooShort, "'" + std::string(word) + "' needs more than 4 characters");
  }
  for (;;) {
    TypoOp op;
    op.kind = static_cast<TypoKind>(rng() % 3);
    switch (op.kind) {
      case TypoKind::SwapAdjacent:
        op.position = rng() % (word.size() - 1);
        if (word[op.position] == word[op.position + 1]) continue;
        break;
      case TypoKind::DeleteChar:
        op.position = rng() % word.size();
        break;
      case TypoKind::InsertChar:
        op.position = rng() % (word.size() + 1);
        op.inserted_char = static_cast<char>('a' + rng() % 26);
        break;
    }
    return op;
  }
}

WordRecord make_word_record(const Vocabulary& vocab, std::string surface, TokenIds context,
                            bool leading_space) {
  WordRecord rec;
  rec.token_ids = encode_piece(vocab, leading_space ? " " + surface : surface);
  rec.n_tokens = rec.token_ids.size();
  rec.surface = std::move(surface);
  rec.context_ids = std::move(context);
  return rec;
}

NonwordGenerator::NonwordGenerator(const Vocabulary& vocab, std::span<const WordRecord> words,
                                   int max_attempts)
    : vocab_(&vocab), max_attempts_(max_attempts) {
  for (const WordRecord& w : words) {
    const auto& ids = w.token_ids;
    if (ids.size() < 2) continue;
    initial_.push_back(ids.front());
    for (std::size_t i = 1; i + 1 < ids.size(); ++i) internal_.push_back(ids[i]);
    final_.push_back(ids.back());
    lengths_.push_back(ids.size());
    surfaces_.emplace_back(trim(w.surface));
  }
  std::sort(surfaces_.begin(), surfaces_.end());
}

const std::vector<TokenId>& NonwordGenerator::pool(TokenRole role) const {
  switch (role) {
    case TokenRole::Initial: return initial_;
    case TokenRole::Internal: return internal_;
    case TokenRole::Final: return final_;
  }
  return initial_;
}

TokenIds NonwordGenerator::next(std::mt19937_64& rng) const {
  if (!lengths_.empty()) {
    auto pick = [&](const std::vector<TokenId>& pool) { return pool[rng() % pool.size()]; };
    for (int attempt = 0; attempt < max_attempts_; ++attempt) {
      const std::size_t len = lengths_[rng() % lengths_.size()];
      if (len > 2 && internal_.empty()) continue;
      TokenIds ids;
      ids.push_back(pick(initial_));
      for (std::size_t i = 1; i + 1 < len; ++i) ids.push_back(pick(internal_));
      ids.push_back(pick(final_));
      const std::string text(trim(decode(*vocab_, ids)));
      if (!std::binary_search(surfaces_.begin(), surfaces_.end(), text)) return ids;
    }
  }
  throw Error(ErrorCode::NoValidNonword,
              "no nonword found after " + std::to_string(max_attempts_) + " attempts");
}

TokenIds make_nonword(const Vocabulary& vocab, std::span<const WordRecord> words,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return NonwordGenerator(vocab, words).next(rng);
}

}  // namespace lexiscope
