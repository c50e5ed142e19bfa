#include "lexiscope/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lexiscope/error.hpp"
#include "lexiscope/hash.hpp"
#include "lexiscope/model.hpp"
#include "lexiscope/vocab_expansion.hpp"

namespace lexiscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"experiment", ""},
      {"seed", "0"},
      {"timestamp", "unset"},
      {"corpus", ""},
      {"train_corpus", ""},
      {"checkpoint", ""},
      {"vocab", ""},
      {"output_dir", "out"},
      {"exp.split_mode", "artificial"},
      {"exp.token_pos", "last"},
      {"exp.policy", "targeted"},
      {"exp.max_items", "0"},
      {"exp.context_tokens", "100"},
      {"exp.use_context", "true"},
      {"exp.knn_k", "4"},
      {"exp.suffixes", "ing,ion,est"},
      {"exp.typo_retries", "100"},
      {"exp.attention_tokens", "0"},
      {"exp.patch_mode", "input"},
      {"exp.template", std::string(kRepeatTemplate)},
      {"exp.min_count", "1"},
      {"synth.words", "200"},
      {"synth.lines", "20000"},
      {"synth.zipf", "1"},
      {"synth.repeat_fraction", "0.3"},
      {"tokenizer.vocab_size", "1000"},
      {"model.d_model", "128"},
      {"model.n_layers", "4"},
      {"model.n_heads", "4"},
      {"model.d_ff", "384"},
      {"model.max_seq", "128"},
      {"model.rope_base", "10000"},
      {"train.steps", "2000"},
      {"train.batch", "8"},
      {"train.seq_len", "64"},
      {"train.lr", "0.003"},
      {"train.warmup", "50"},
      {"train.min_lr_ratio", "0.1"},
      {"train.weight_decay", "0"},
      {"train.grad_clip", "1"},
      {"train.split_prob", "0.1"},
      {"expand.min_count", "1"},
      {"expand.max_words", "0"},
      {"expand.template", std::string(kIdentityTemplate)},
      {"expand.patch_mode", "input"},
      {"expand.init", "maps"},
      {"expand.refine_steps", "500"},
      {"expand.refine_batch", "4"},
      {"expand.refine_seq_len", "128"},
      {"expand.refine_lr", "0.001"},
  };
  return d;
}

std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(trim_copy(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw Error(ErrorCode::ConfigError, key + " = '" + value + "' is not " + what);
}

SplitMode parse_split_mode(const std::string& v) {
  if (v == "artificial") return SplitMode::Artificial;
  if (v == "typo") return SplitMode::Typo;
  if (v == "suffix") return SplitMode::Suffix;
  bad_value("exp.split_mode", v, "artificial, typo or suffix");
}

TokenPos parse_token_pos(const std::string& v) {
  if (v == "last") return TokenPos::Last;
  if (v == "penultimate") return TokenPos::Penultimate;
  bad_value("exp.token_pos", v, "last or penultimate");
}

AblationPolicy parse_policy(const std::string& v) {
  if (v == "targeted") return AblationPolicy::Targeted;
  if (v == "random") return AblationPolicy::Random;
  if (v == "none") return AblationPolicy::None;
  bad_value("exp.policy", v, "targeted, random or none");
}

PatchMode parse_patch_mode(const std::string& key, const std::string& v) {
  if (v == "input") return PatchMode::Input;
  if (v == "matched") return PatchMode::MatchedLayer;
  bad_value(key, v, "input or matched");
}

EntryInit parse_init(const std::string& v) {
  if (v == "maps") return EntryInit::Maps;
  if (v == "mean") return EntryInit::MeanEmbedding;
  bad_value("expand.init", v, "maps or mean");
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path require_path(const RunConfig& c, const std::string& key) {
  const std::string& v = c.get(key);
  if (v.empty()) throw Error(ErrorCode::ConfigError, c.experiment() + " needs " + key);
  return v;
}

std::vector<fs::path> path_list(const RunConfig& c, const std::string& key) {
  require_path(c, key);
  std::vector<fs::path> out;
  for (const auto& p : split_list(c.get(key))) out.emplace_back(p);
  return out;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << bytes;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

ModelConfig model_config(const RunConfig& c, std::size_t vocab_size) {
  ModelConfig m;
  m.d_model = static_cast<int>(c.get_int("model.d_model"));
  m.n_layers = static_cast<int>(c.get_int("model.n_layers"));
  m.n_heads = static_cast<int>(c.get_int("model.n_heads"));
  m.d_ff = static_cast<int>(c.get_int("model.d_ff"));
  m.max_seq = static_cast<int>(c.get_int("model.max_seq"));
  m.rope_base = static_cast<float>(c.get_double("model.rope_base"));
  m.vocab_size = static_cast<int>(vocab_size);
  m.seed = c.seed();
  m.validate();
  return m;
}

// What one pipeline hands to the writer.
struct Outcome {
  ExperimentReport report;
  json extra = json::object();
  json inputs = json::object();
  std::vector<std::pair<std::string, std::string>> files;  // relative path, bytes
};

struct LoadedModel {
  Checkpoint ckpt;
  Vocabulary vocab;
};

LoadedModel load_model(const RunConfig& c, json& inputs) {
  LoadedModel m{load_checkpoint(require_path(c, "checkpoint")), load_vocabulary(require_path(c, "vocab"))};
  if (m.ckpt.config.vocab_size != static_cast<int>(m.vocab.size()))
    throw Error(ErrorCode::ConfigError, "checkpoint and vocabulary sizes differ");
  inputs["checkpoint_hash"] = hex64(hash_weights(m.ckpt.weights));
  inputs["vocab_size"] = m.vocab.size();
  return m;
}

IngestOptions ingest_options(const RunConfig& c) {
  IngestOptions o;
  o.min_count = static_cast<std::size_t>(c.get_int("exp.min_count"));
  o.suffixes = split_list(c.get("exp.suffixes"));
  return o;
}

Outcome run_synth(const RunConfig& c) {
  SynthOptions o;
  o.n_words = static_cast<std::size_t>(c.get_int("synth.words"));
  o.n_lines = static_cast<std::size_t>(c.get_int("synth.lines"));
  o.zipf_exponent = c.get_double("synth.zipf");
  o.repeat_fraction = c.get_double("synth.repeat_fraction");
  o.seed = c.seed();
  Outcome out;
  std::string text = synth_corpus(o);
  out.report.name = "synth_corpus";
  out.report.scalars["bytes"] = static_cast<double>(text.size());
  out.report.scalars["lines"] = static_cast<double>(o.n_lines);
  out.inputs["corpus_id"] = corpus_id(text);
  out.files.emplace_back("corpus.txt", std::move(text));
  return out;
}

Outcome run_tokenizer(const RunConfig& c) {
  Outcome out;
  std::string text;
  for (const auto& p : path_list(c, "corpus")) {
    if (!text.empty()) text += '\n';
    text += read_text_file(p);
  }
  if (const auto bad = find_invalid_utf8(text); bad != std::string::npos)
    throw Error(ErrorCode::EncodingError, "invalid UTF-8 at byte " + std::to_string(bad));
  const Vocabulary v = train_bpe(text, static_cast<std::size_t>(c.get_int("tokenizer.vocab_size")));
  const fs::path tmp = c.output_dir() / "vocab.txt";
  save_vocabulary(v, tmp);
  out.report.name = "tokenizer";
  out.report.scalars["vocab_size"] = static_cast<double>(v.size());
  out.report.scalars["corpus_tokens"] = static_cast<double>(encode(v, text).ids.size());
  out.inputs["corpus_id"] = corpus_id(text);
  out.files.emplace_back("vocab.txt", read_text_file(tmp));
  return out;
}

Outcome run_model(const RunConfig& c) {
  Outcome out;
  const Vocabulary vocab = load_vocabulary(require_path(c, "vocab"));
  const IngestedCorpus corpus = ingest(path_list(c, "corpus"), vocab);
  const ModelConfig mc = model_config(c, vocab.size());
  TrainHyper h;
  h.steps = static_cast<int>(c.get_int("train.steps"));
  h.batch = static_cast<int>(c.get_int("train.batch"));
  h.seq_len = static_cast<int>(c.get_int("train.seq_len"));
  h.lr = static_cast<float>(c.get_double("train.lr"));
  h.warmup = static_cast<int>(c.get_int("train.warmup"));
  h.min_lr_ratio = static_cast<float>(c.get_double("train.min_lr_ratio"));
  h.weight_decay = static_cast<float>(c.get_double("train.weight_decay"));
  h.grad_clip = static_cast<float>(c.get_double("train.grad_clip"));
  h.seed = c.seed() + 1;
  const TokenIds stream = augmented_stream(vocab, corpus.text, c.get_double("train.split_prob"), c.seed());
  const TrainResult tr = train(mc, stream, h);
  const fs::path ckpt = c.output_dir() / "model.ckpt";
  save_checkpoint(ckpt, mc, tr.weights);
  out.report.name = "model";
  out.report.scalars["initial_loss"] = tr.loss_curve.front();
  out.report.scalars["final_loss"] = tr.loss_curve.back();
  out.report.scalars["stream_tokens"] = static_cast<double>(stream.size());
  out.report.scalars["parameters"] = static_cast<double>(tr.weights.parameter_count());
  out.extra["loss_curve"] = tr.loss_curve;
  out.inputs["corpus_id"] = corpus_id(corpus.text);
  out.inputs["vocab_size"] = vocab.size();
  out.files.emplace_back("model.ckpt", read_text_file(ckpt));
  return out;
}

Outcome run_experiment(const RunConfig& c) {
  Outcome out;
  const LoadedModel lm = load_model(c, out.inputs);
  const ModelRef m{lm.ckpt.weights, lm.ckpt.config, lm.vocab};
  const IngestedCorpus corpus = ingest(path_list(c, "corpus"), lm.vocab, ingest_options(c));
  out.inputs["corpus_id"] = corpus_id(corpus.text);
  const ExperimentOptions o = experiment_options(c);
  const std::string& e = c.experiment();
  if (e == "word-nonword") {
    const auto words = multi_token_words(corpus.index, o);
    const auto nonwords = make_nonword_records(lm.vocab, words, o.seed);
    out.report = word_vs_nonword(m, words, nonwords, parse_token_pos(c.get("exp.token_pos")), o);
  } else if (e == "multi-token-retrieval") {
    out.report = multi_token_retrieval(m, multi_token_words(corpus.index, o), o);
  } else if (e == "attention") {
    const std::size_t lo = o.attention_tokens > 0 ? static_cast<std::size_t>(o.attention_tokens) : 2;
    const std::size_t hi = o.attention_tokens > 0 ? lo : 4;
    out.report = attention_aggregation(m, multi_token_words(corpus.index, o, lo, hi),
                                       single_token_words(corpus.index, o), o);
  } else {
    const auto items = make_retrieval_items(lm.vocab, corpus.index, parse_split_mode(c.get("exp.split_mode")), o);
    if (e == "split-retrieval")
      out.report = split_retrieval(m, items, o);
    else if (e == "ffn-retrieval")
      out.report = ffn_retrieval(m, items, o);
    else
      out.report = ffn_ablation(m, items, parse_policy(c.get("exp.policy")), o);
  }
  return out;
}

void add_top1(ExperimentReport& r, const std::string& prefix, const Top1Metrics& t) {
  r.scalars[prefix + "all_words_acc"] = t.all_words_acc;
  if (t.new_token_acc) r.scalars[prefix + "new_token_acc"] = *t.new_token_acc;
  if (t.original_or_new_acc) r.scalars[prefix + "original_or_new_acc"] = *t.original_or_new_acc;
  r.scalars[prefix + "positions"] = static_cast<double>(t.n_positions);
}

Outcome run_expand(const RunConfig& c) {
  Outcome out;
  const LoadedModel lm = load_model(c, out.inputs);
  const std::string train_text = read_text_file(require_path(c, "train_corpus"));
  const IngestedCorpus test = ingest(path_list(c, "corpus"), lm.vocab);
  out.inputs["corpus_id"] = corpus_id(test.text);
  out.inputs["train_corpus_id"] = corpus_id(train_text);

  ExpansionOptions o;
  o.min_count = static_cast<std::size_t>(c.get_int("expand.min_count"));
  o.max_words = static_cast<std::size_t>(c.get_int("expand.max_words"));
  o.patch_template = c.get("expand.template");
  o.patch_mode = parse_patch_mode("expand.patch_mode", c.get("expand.patch_mode"));
  o.context_tokens = static_cast<std::size_t>(c.get_int("exp.context_tokens"));
  o.use_context = c.get_bool("exp.use_context");
  o.init = parse_init(c.get("expand.init"));
  o.refine.steps = static_cast<int>(c.get_int("expand.refine_steps"));
  o.refine.batch = static_cast<int>(c.get_int("expand.refine_batch"));
  o.refine.seq_len = static_cast<int>(c.get_int("expand.refine_seq_len"));
  o.refine.lr = static_cast<float>(c.get_double("expand.refine_lr"));
  o.refine.seed = c.seed() + 1;
  const ExpansionResult res = expand_vocabulary(lm.ckpt.weights, lm.ckpt.config, lm.vocab, train_text, test.text, o);

  std::vector<std::string> words;
  for (const auto& e : res.model.entries) words.push_back(e.word);
  const ExpandedVocabulary ev(lm.vocab, words);
  ExperimentReport& r = out.report;
  r.name = "expand";
  r.scalars["candidates"] = static_cast<double>(res.candidates.size());
  r.scalars["accepted"] = static_cast<double>(words.size());
  r.scalars["skipped"] = static_cast<double>(res.skipped.size());
  r.scalars["token_reduction"] = token_reduction(ev, test.text);
  add_top1(r, "original_", evaluate_top1(lm.ckpt.weights, lm.ckpt.config, ev, test.text, false));
  add_top1(r, "expanded_", evaluate_top1(res.model.weights, res.model.config, ev, test.text, true));
  json entries = json::array();
  for (const auto& e : res.model.entries)
    entries.push_back({{"word", e.word}, {"layer", e.layer}, {"new_id", e.new_id}});
  out.extra["entries"] = entries;
  out.extra["skipped"] = res.skipped;
  out.extra["refine_loss"] = res.refine_loss;

  const fs::path ckpt = c.output_dir() / "expanded.ckpt";
  const fs::path jl = c.output_dir() / "entries.jsonl";
  save_checkpoint(ckpt, res.model.config, res.model.weights, &res.model.header);
  save_entries(jl, res.model.entries);
  out.files.emplace_back("expanded.ckpt", read_text_file(ckpt));
  out.files.emplace_back("entries.jsonl", read_text_file(jl));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig::RunConfig() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : defaults()) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(n) + ": expected key = value");
    c.set(trim_copy(t.substr(0, eq)), trim_copy(t.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) { return parse(read_text_file(path)); }

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
  return it->second;
}

void RunConfig::apply_environment() {
  if (const char* dir = std::getenv("LEXISCOPE_OUTPUT_DIR"); dir && *dir) values_["output_dir"] = dir;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return hex64(fnv1a(canonical())); }

long long RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  long long x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return x;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  double x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return x;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::uint64_t RunConfig::seed() const {
  const std::string& v = get("seed");
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value("seed", v, "an unsigned integer");
  return x;
}

const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> names = {
      "synth-corpus",  "tokenizer",    "model",  "word-nonword",
      "split-retrieval", "ffn-retrieval", "ffn-ablation", "multi-token-retrieval",
      "attention",     "expand"};
  return names;
}

// ---------------------------------------------------------------------------

std::size_t find_invalid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      n = 1, cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      n = 2, cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      n = 3, cp = c & 0x07;
    } else {
      return i;
    }
    if (i + n >= s.size()) return i;
    for (std::size_t k = 1; k <= n; ++k) {
      const auto d = static_cast<unsigned char>(s[i + k]);
      if ((d & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (d & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[n] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += n + 1;
  }
  return std::string_view::npos;
}

Eligibility eligible_words(const CorpusIndex& index, const IngestOptions& o) {
  Eligibility e;
  for (const WordEntry& w : index.words) {
    const std::size_t len = w.surface.size();
    const bool single = w.n_tokens == 1 && w.spaced;
    if (single && len > 3) e.split.push_back(w.surface);
    if (single && len > 4) e.typo.push_back(w.surface);
    if (w.n_tokens >= 2) e.multi_token.push_back(w.surface);
    if (single)
      for (const auto& s : o.suffixes)
        if (!s.empty() && len > s.size() && w.surface.compare(len - s.size(), s.size(), s) == 0) {
          e.suffix.push_back(w.surface);
          break;
        }
    if (w.count >= o.min_count) e.frequent.push_back(w.surface);
  }
  return e;
}

IngestedCorpus ingest(std::span<const fs::path> paths, const Vocabulary& vocab, const IngestOptions& o) {
  IngestedCorpus out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const std::string text = read_text_file(paths[i]);
    if (const auto bad = find_invalid_utf8(text); bad != std::string::npos)
      throw Error(ErrorCode::EncodingError,
                  paths[i].string() + ": invalid UTF-8 at byte " + std::to_string(bad));
    if (i) out.text += '\n';
    out.text += text;
  }
  out.index = index_corpus(vocab, out.text);
  out.eligible = eligible_words(out.index, o);
  return out;
}

ExperimentOptions experiment_options(const RunConfig& c) {
  ExperimentOptions o;
  o.seed = c.seed();
  o.context_tokens = static_cast<std::size_t>(c.get_int("exp.context_tokens"));
  o.use_context = c.get_bool("exp.use_context");
  o.max_items = static_cast<std::size_t>(c.get_int("exp.max_items"));
  o.knn_k = static_cast<int>(c.get_int("exp.knn_k"));
  o.suffixes = split_list(c.get("exp.suffixes"));
  o.typo_retries = static_cast<int>(c.get_int("exp.typo_retries"));
  o.attention_tokens = static_cast<int>(c.get_int("exp.attention_tokens"));
  o.patch_mode = parse_patch_mode("exp.patch_mode", c.get("exp.patch_mode"));
  o.patch_template = c.get("exp.template");
  return o;
}

std::string file_hash(const fs::path& path) { return corpus_id(read_text_file(path)); }

RunResult run(const RunConfig& c) {
  const std::string& e = c.experiment();
  const auto& names = pipeline_names();
  if (std::find(names.begin(), names.end(), e) == names.end())
    throw Error(ErrorCode::ConfigError, "unknown experiment '" + e + "'");
  const fs::path dir = c.output_dir();
  std::error_code ec;
  fs::create_directories(dir / "curves", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  Outcome out;
  if (e == "synth-corpus")
    out = run_synth(c);
  else if (e == "tokenizer")
    out = run_tokenizer(c);
  else if (e == "model")
    out = run_model(c);
  else if (e == "expand")
    out = run_expand(c);
  else
    out = run_experiment(c);

  json report = {{"experiment", e},
                 {"config_hash", c.hash()},
                 {"seed", c.seed()},
                 {"timestamp", c.get("timestamp")},
                 {"inputs", out.inputs},
                 {"result", to_json(out.report)}};
  for (auto& [k, v] : out.extra.items()) report[k] = v;
  out.files.emplace_back("report.json", report.dump(2) + "\n");
  for (const auto& [name, series] : out.report.curves) {
    std::ostringstream csv;
    write_series_csv(csv, series.values, "value", series.group);
    out.files.emplace_back("curves/" + name + ".csv", csv.str());
  }
  std::sort(out.files.begin(), out.files.end());

  json files = json::array();
  RunResult result{dir, {}};
  for (const auto& [rel, bytes] : out.files) {
    write_file(dir / rel, bytes);
    files.push_back({{"path", rel}, {"bytes", bytes.size()}, {"fnv1a64", corpus_id(bytes)}});
    result.files.push_back(rel);
  }
  const json manifest = {{"experiment", e},
                         {"config_hash", c.hash()},
                         {"seed", c.seed()},
                         {"config", c.values()},
                         {"files", files}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  result.files.push_back("manifest.json");
  return result;
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  json m;
  try {
    m = json::parse(read_text_file(dir / "manifest.json"));
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::FormatError, std::string("manifest.json: ") + ex.what());
  }
  std::vector<std::string> bad;
  for (const auto& f : m.at("files")) {
    const std::string rel = f.at("path");
    const fs::path p = dir / rel;
    if (!fs::exists(p)) {
      bad.push_back(rel);
      continue;
    }
    const std::string bytes = read_text_file(p);
    if (bytes.size() != f.at("bytes").get<std::size_t>() || corpus_id(bytes) != f.at("fnv1a64").get<std::string>())
      bad.push_back(rel);
  }
  return bad;
}

}  // namespace lexiscope
