#pragma once

// Run configuration, corpus ingestion and the `run` pipeline that writes
// report.json, curves/*.csv and manifest.json into one output directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexiscope/corpus.hpp"
#include "lexiscope/experiments.hpp"
#include "lexiscope/tokenizer.hpp"

namespace lexiscope {

/// Flat key = value configuration. Every key has a default; unknown keys
/// are rejected. The hash covers every key, defaults included.
class RunConfig {
 public:
  RunConfig();

  /// One `key = value` per line; blank lines and lines starting with '#'
  /// are ignored. Throws ConfigError.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  /// Names every key accepted by set(), in canonical order.
  static std::vector<std::string> keys();

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  /// Replaces output_dir with $LEXISCOPE_OUTPUT_DIR when that is set.
  void apply_environment();

  std::string canonical() const;  // sorted "key = value" lines
  std::string hash() const;       // 16 hex digits

  std::string experiment() const { return get("experiment"); }
  std::uint64_t seed() const;
  std::filesystem::path output_dir() const { return get("output_dir"); }

  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Names accepted by the `experiment` key.
const std::vector<std::string>& pipeline_names();

struct Eligibility {
  std::vector<std::string> split;        // single-token words longer than 3 letters
  std::vector<std::string> typo;         // single-token words longer than 4 letters
  std::vector<std::string> multi_token;  // space-prefixed form has 2+ tokens
  std::vector<std::string> suffix;       // single-token, ends in a listed suffix
  std::vector<std::string> frequent;     // seen at least min_count times
};

struct IngestOptions {
  std::size_t min_count = 1;
  std::vector<std::string> suffixes{"ing", "ion", "est"};
};

struct IngestedCorpus {
  std::string text;  // files joined by newline
  CorpusIndex index;
  Eligibility eligible;
};

/// Reads and indexes the files in order. Throws IoError for unreadable
/// files and EncodingError for invalid UTF-8.
IngestedCorpus ingest(std::span<const std::filesystem::path> paths, const Vocabulary& vocab,
                      const IngestOptions& options = {});

Eligibility eligible_words(const CorpusIndex& index, const IngestOptions& options);

/// Byte offset of the first invalid UTF-8 sequence, or npos.
std::size_t find_invalid_utf8(std::string_view text);

/// Experiment knobs read from the exp.* keys.
ExperimentOptions experiment_options(const RunConfig& config);

struct RunResult {
  std::filesystem::path output_dir;
  std::vector<std::string> files;  // relative to output_dir, manifest last
};

/// Dispatches to the configured pipeline and writes its artifacts.
RunResult run(const RunConfig& config);

/// FNV-1a of a file's bytes, 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Recomputes every manifest entry. Returns the paths whose hash or size
/// no longer match.
std::vector<std::string> verify_manifest(const std::filesystem::path& output_dir);

}  // namespace lexiscope
