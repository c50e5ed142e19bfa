#pragma once

// Plain-text corpora: one document per line, encoded once and indexed by
// whole word so experiments can pull a word together with its left context.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexiscope/tokenizer.hpp"

namespace lexiscope {

struct Occurrence {
  std::size_t doc = 0;
  std::size_t begin = 0;  // token range inside docs[doc]
  std::size_t end = 0;
};

struct WordEntry {
  std::string surface;  // without the boundary space
  std::size_t count = 0;
  Occurrence first;  // first space-prefixed occurrence when there is one
  bool spaced = false;
  std::size_t n_tokens = 0;  // tokens of the space-prefixed form
};

class CorpusIndex {
 public:
  std::vector<TokenIds> docs;
  std::vector<WordEntry> words;  // first-appearance order

  const WordEntry* find(std::string_view surface) const;
  std::size_t n_tokens() const;

  /// Documents joined by the newline byte.
  TokenIds stream() const;

  /// Up to `max_tokens` tokens preceding the occurrence in its document.
  TokenIds context(const Occurrence& at, std::size_t max_tokens) const;

  /// The word's tokens at `first`, with up to `max_context` tokens of context.
  WordRecord record(const WordEntry& word, std::size_t max_context) const;

 private:
  friend CorpusIndex index_corpus(const Vocabulary&, std::string_view);
  std::unordered_map<std::string, std::size_t> lookup_;
};

/// Alphabetic pre-tokens count as words; case is kept.
CorpusIndex index_corpus(const Vocabulary& vocab, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

/// FNV-1a of the text, hex encoded. Used as the corpus id in reports.
std::string corpus_id(std::string_view text);

// ---------------------------------------------------------------------------
// Synthetic training text

struct SynthOptions {
  std::size_t n_words = 200;   // distinct words drawn from the built-in list
  std::size_t n_lines = 20000;
  double zipf_exponent = 1.0;
  double repeat_fraction = 0.3;  // share of lines that are repetition drills
  int min_sentence = 5;
  int max_sentence = 12;
  std::uint64_t seed = 0;
};

/// Words available to the generator, in a fixed order.
const std::vector<std::string>& synth_lexicon();

/// Zipf-weighted word-level Markov text (each word has two or three
/// successors) interleaved with drills of the form "Repeat this word twice:
/// 1) w 2) w" and "w w w w w". One line per document.
std::string synth_corpus(const SynthOptions& options);

/// Encodes `text` as a training stream (documents joined by newline) while
/// cutting each single-token word of more than three letters into 2..5
/// random pieces with probability `split_prob`.
TokenIds augmented_stream(const Vocabulary& vocab, std::string_view text, double split_prob,
                          std::uint64_t seed);

}  // namespace lexiscope
