#include "lexiscope/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <fstream>
#include <sstream>

#include "lexiscope/error.hpp"
#include "lexiscope/hash.hpp"

namespace lexiscope {

const WordEntry* CorpusIndex::find(std::string_view surface) const {
  const auto it = lookup_.find(std::string(surface));
  return it == lookup_.end() ? nullptr : &words[it->second];
}

std::size_t CorpusIndex::n_tokens() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.size();
  return n;
}

TokenIds CorpusIndex::stream() const {
  TokenIds out;
  out.reserve(n_tokens() + docs.size());
  for (const auto& d : docs) {
    out.insert(out.end(), d.begin(), d.end());
    out.push_back('\n');
  }
  return out;
}

TokenIds CorpusIndex::context(const Occurrence& at, std::size_t max_tokens) const {
  const TokenIds& d = docs.at(at.doc);
  const std::size_t start = at.begin > max_tokens ? at.begin - max_tokens : 0;
  return TokenIds(d.begin() + static_cast<std::ptrdiff_t>(start), d.begin() + static_cast<std::ptrdiff_t>(at.begin));
}

WordRecord CorpusIndex::record(const WordEntry& word, std::size_t max_context) const {
  const TokenIds& d = docs.at(word.first.doc);
  WordRecord r;
  r.surface = word.surface;
  r.token_ids.assign(d.begin() + static_cast<std::ptrdiff_t>(word.first.begin),
                     d.begin() + static_cast<std::ptrdiff_t>(word.first.end));
  r.n_tokens = r.token_ids.size();
  r.context_ids = context(word.first, max_context);
  return r;
}

CorpusIndex index_corpus(const Vocabulary& vocab, std::string_view text) {
  CorpusIndex ix;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    if (trim(line).empty()) continue;

    const std::size_t doc = ix.docs.size();
    TokenIds ids;
    for (std::string_view piece : pretokenize(line)) {
      const std::size_t begin = ids.size();
      const TokenIds part = encode_piece(vocab, piece);
      ids.insert(ids.end(), part.begin(), part.end());
      if (!is_word_piece(piece)) continue;
      const std::string surface(trim(piece));
      const bool spaced = piece.front() == ' ';
      const Occurrence occ{doc, begin, ids.size()};
      auto [it, fresh] = ix.lookup_.emplace(surface, ix.words.size());
      if (fresh) {
        const std::size_t n = spaced ? part.size() : encode_piece(vocab, " " + surface).size();
        ix.words.push_back({surface, 0, occ, spaced, n});
      }
      WordEntry& w = ix.words[it->second];
      ++w.count;
      if (spaced && !w.spaced) {
        w.first = occ;
        w.spaced = true;
      }
    }
    ix.docs.push_back(std::move(ids));
  }
  return ix;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string corpus_id(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

}  // namespace lexiscope

namespace lexiscope {

const std::vector<std::string>& synth_lexicon() {
  static const std::vector<std::string> words = {
#include "synth_words.inc"
  };
  return words;
}

std::string synth_corpus(const SynthOptions& o) {
  const auto& lex = synth_lexicon();
  if (o.n_words < 4 || o.n_words > lex.size())
    throw Error(ErrorCode::ConfigError, "n_words must lie in [4, " + std::to_string(lex.size()) + "]");
  if (o.min_sentence < 1 || o.max_sentence < o.min_sentence)
    throw Error(ErrorCode::ConfigError, "bad sentence length range");
  std::mt19937_64 rng(o.seed);

  // Shuffle so the Zipf rank is unrelated to the list order.
  std::vector<std::string> words(lex.begin(), lex.end());
  for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng() % i]);
  words.resize(o.n_words);

  std::vector<double> weights(o.n_words);
  for (std::size_t i = 0; i < o.n_words; ++i) weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), o.zipf_exponent);
  std::discrete_distribution<std::size_t> zipf(weights.begin(), weights.end());

  std::vector<std::vector<std::size_t>> next(o.n_words);
  for (auto& succ : next) {
    const std::size_t k = 2 + rng() % 2;
    while (succ.size() < k) succ.push_back(zipf(rng));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::string out;
  for (std::size_t line = 0; line < o.n_lines; ++line) {
    if (unit(rng) < o.repeat_fraction) {
      const std::string& w = words[zipf(rng)];
      if (rng() % 2 == 0)
        out += "Repeat this word twice: 1) " + w + " 2) " + w;
      else
        out += w + " " + w + " " + w + " " + w + " " + w;
    } else {
      const int len = o.min_sentence + static_cast<int>(rng() % static_cast<std::uint64_t>(o.max_sentence - o.min_sentence + 1));
      std::size_t cur = zipf(rng);
      for (int i = 0; i < len; ++i) {
        if (i) out += ' ';
        out += words[cur];
        const auto& succ = next[cur];
        cur = succ[rng() % succ.size()];
      }
      out += '.';
    }
    out += '\n';
  }
  return out;
}

TokenIds augmented_stream(const Vocabulary& vocab, std::string_view text, double split_prob, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::unordered_map<std::string_view, TokenIds> cache;
  TokenIds out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (trim(line).empty()) continue;
    for (std::string_view piece : pretokenize(line)) {
      auto it = cache.find(piece);
      if (it == cache.end()) it = cache.emplace(piece, encode_piece(vocab, piece)).first;
      const TokenIds& ids = it->second;
      const std::string_view word = trim(piece);
      if (split_prob > 0 && ids.size() == 1 && is_word_piece(piece) && word.size() > 3 && unit(rng) < split_prob) {
        const int max_pieces = static_cast<int>(std::min<std::size_t>(5, word.size()));
        const int n = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_pieces - 1));
        const auto split = artificial_split(word, n, rng());
        const TokenIds parts = encode_pieces(vocab, split.pieces, piece.front() == ' ');
        out.insert(out.end(), parts.begin(), parts.end());
      } else {
        out.insert(out.end(), ids.begin(), ids.end());
      }
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace lexiscope
