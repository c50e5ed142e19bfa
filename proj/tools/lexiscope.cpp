// Command-line front end. Pipeline verbs build a RunConfig from an optional
// config file plus --set overrides and hand it to run().

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lexiscope/corpus.hpp"
#include "lexiscope/error.hpp"
#include "lexiscope/harness.hpp"
#include "lexiscope/model.hpp"
#include "lexiscope/patchscope.hpp"
#include "lexiscope/tokenizer.hpp"
#include "lexiscope/vocab_expansion.hpp"

namespace lx = lexiscope;

namespace {

struct PipelineArgs {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // config key -> flag value
};

void add_pipeline_args(CLI::App* app, PipelineArgs& a) {
  app->add_option("-c,--config", a.config, "key = value run configuration");
  app->add_option("--set", a.sets, "override one key (key=value)");
}

// Shorthand flag that writes one config key.
void add_key_flag(CLI::App* app, PipelineArgs& a, const std::string& flag, const std::string& key,
                  const std::string& help) {
  app->add_option_function<std::string>(flag, [&a, key](const std::string& v) { a.flags[key] = v; }, help);
}

void add_io_flags(CLI::App* app, PipelineArgs& a) {
  add_key_flag(app, a, "--ckpt", "checkpoint", "model checkpoint");
  add_key_flag(app, a, "--vocab", "vocab", "vocabulary file");
  add_key_flag(app, a, "--corpus", "corpus", "corpus file(s), comma separated");
  add_key_flag(app, a, "--seed", "seed", "run seed");
  add_key_flag(app, a, "--out", "output_dir", "output directory");
}

lx::RunConfig make_config(const PipelineArgs& a, const std::string& experiment) {
  lx::RunConfig c = a.config.empty() ? lx::RunConfig{} : lx::RunConfig::load(a.config);
  if (!experiment.empty()) c.set("experiment", experiment);
  for (const auto& [k, v] : a.flags) c.set(k, v);
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw lx::Error(lx::ErrorCode::ConfigError, "--set expects key=value, got '" + s + "'");
    c.set(std::string(lx::trim(s.substr(0, eq))), std::string(lx::trim(s.substr(eq + 1))));
  }
  c.apply_environment();
  return c;
}

void run_and_print(const lx::RunConfig& c) {
  const lx::RunResult r = lx::run(c);
  std::cout << "wrote " << r.files.size() << " files to " << r.output_dir.string() << " (config "
            << c.hash() << ")\n";
  for (const auto& f : r.files) std::cout << "  " << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lexiscope: probing how small transformers assemble words from sub-word tokens"};
  app.require_subcommand(1);

  PipelineArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "run the pipeline named by the config");
  add_pipeline_args(run_cmd, run_args);

  // tokenizer
  auto* tok = app.add_subcommand("tokenizer", "corpus synthesis, BPE training, encoding");
  tok->require_subcommand(1);
  PipelineArgs synth_args, bpe_args;
  auto* synth_cmd = tok->add_subcommand("synth", "write a synthetic corpus");
  add_pipeline_args(synth_cmd, synth_args);
  add_key_flag(synth_cmd, synth_args, "--seed", "seed", "generator seed");
  add_key_flag(synth_cmd, synth_args, "--out", "output_dir", "output directory");
  auto* train_tok = tok->add_subcommand("train", "train a BPE vocabulary");
  add_pipeline_args(train_tok, bpe_args);
  add_key_flag(train_tok, bpe_args, "--corpus", "corpus", "training text");
  add_key_flag(train_tok, bpe_args, "--vocab-size", "tokenizer.vocab_size", "final vocabulary size");
  add_key_flag(train_tok, bpe_args, "--out", "output_dir", "output directory");
  std::string enc_vocab, enc_text;
  auto* enc = tok->add_subcommand("encode", "print token ids and pieces");
  enc->add_option("--vocab", enc_vocab, "vocabulary file")->required();
  enc->add_option("text", enc_text, "text to encode")->required();

  // model
  auto* model = app.add_subcommand("model", "training and inspection");
  model->require_subcommand(1);
  PipelineArgs model_args;
  auto* train_model = model->add_subcommand("train", "train a model");
  add_pipeline_args(train_model, model_args);
  add_io_flags(train_model, model_args);
  std::string info_ckpt;
  auto* info = model->add_subcommand("info", "print a checkpoint's configuration");
  info->add_option("checkpoint", info_ckpt)->required();

  // exp
  PipelineArgs exp_args;
  std::string exp_name, policy, mode, pos;
  auto* exp = app.add_subcommand("exp", "run one experiment");
  exp->add_option("name", exp_name, "word-nonword, split-retrieval, ffn-retrieval, ffn-ablation, "
                                    "multi-token-retrieval or attention")
      ->required();
  exp->add_option("--policy", policy, "ffn-ablation policy: targeted, random, none");
  exp->add_option("--mode", mode, "split mode: artificial, typo, suffix");
  exp->add_option("--pos", pos, "probe position: last, penultimate");
  add_pipeline_args(exp, exp_args);
  add_io_flags(exp, exp_args);

  // patchscope
  std::string ps_ckpt, ps_vocab, ps_words, ps_word, ps_corpus, ps_out, ps_template = "repeat";
  bool ps_matched = false;
  auto* ps = app.add_subcommand("patchscope", "decode words' last-token states layer by layer");
  ps->add_option("--ckpt", ps_ckpt, "model checkpoint")->required();
  ps->add_option("--vocab", ps_vocab, "vocabulary file")->required();
  ps->add_option("--words", ps_words, "file with one word per line");
  ps->add_option("--word", ps_word, "a single word");
  ps->add_option("--corpus", ps_corpus, "take each word's context from its first occurrence here");
  ps->add_option("--template", ps_template, "repeat, xxxx, or a literal template");
  ps->add_option("--out", ps_out, "JSONL output (default stdout)");
  ps->add_flag("--matched-layer", ps_matched, "patch at the source layer instead of the input");

  // expand
  PipelineArgs expand_args;
  auto* expand = app.add_subcommand("expand", "add whole-word tokens and refine them");
  add_pipeline_args(expand, expand_args);
  add_key_flag(expand, expand_args, "--ckpt", "checkpoint", "model checkpoint");
  add_key_flag(expand, expand_args, "--vocab", "vocab", "vocabulary file");
  add_key_flag(expand, expand_args, "--train", "train_corpus", "refinement text");
  add_key_flag(expand, expand_args, "--test", "corpus", "text scanned for candidates and evaluated");
  add_key_flag(expand, expand_args, "--min-count", "expand.min_count", "minimum test-set frequency");
  add_key_flag(expand, expand_args, "--seed", "seed", "run seed");
  add_key_flag(expand, expand_args, "--out", "output_dir", "output directory");
  std::string ev_ckpt, ev_vocab, ev_entries, ev_test;
  auto* expand_eval = expand->add_subcommand("eval", "score an expanded checkpoint on text");
  expand_eval->add_option("--ckpt", ev_ckpt, "expanded checkpoint")->required();
  expand_eval->add_option("--vocab", ev_vocab, "base vocabulary")->required();
  expand_eval->add_option("--entries", ev_entries, "entries.jsonl")->required();
  expand_eval->add_option("--test", ev_test, "evaluation text")->required();

  // report
  std::string report_dir;
  auto* report = app.add_subcommand("report", "verify a run directory and summarise its report");
  report->add_option("dir", report_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) {
      run_and_print(make_config(run_args, ""));
    } else if (*synth_cmd) {
      run_and_print(make_config(synth_args, "synth-corpus"));
    } else if (*train_tok) {
      run_and_print(make_config(bpe_args, "tokenizer"));
    } else if (*enc) {
      const lx::Vocabulary v = lx::load_vocabulary(enc_vocab);
      for (const lx::TokenId id : lx::encode(v, enc_text).ids)
        std::cout << id << '\t' << lx::escape_token(v.token(id)) << '\n';
    } else if (*train_model) {
      run_and_print(make_config(model_args, "model"));
    } else if (*info) {
      const lx::Checkpoint ck = lx::load_checkpoint(info_ckpt);
      const auto& c = ck.config;
      std::cout << "d_model " << c.d_model << "\nn_layers " << c.n_layers << "\nn_heads " << c.n_heads
                << "\nd_ff " << c.d_ff << "\nvocab_size " << c.vocab_size << "\nmax_seq " << c.max_seq
                << "\nparameters " << ck.weights.parameter_count() << "\n";
      if (ck.expansion) std::cout << "original_vocab " << ck.expansion->original_vocab << "\n";
    } else if (*exp) {
      lx::RunConfig c = make_config(exp_args, exp_name);
      if (!policy.empty()) c.set("exp.policy", policy);
      if (!mode.empty()) c.set("exp.split_mode", mode);
      if (!pos.empty()) c.set("exp.token_pos", pos);
      run_and_print(c);
    } else if (*ps) {
      const lx::Checkpoint ck = lx::load_checkpoint(ps_ckpt);
      const lx::Vocabulary v = lx::load_vocabulary(ps_vocab);
      const std::string templ = ps_template == "repeat" ? std::string(lx::kRepeatTemplate)
                                : ps_template == "xxxx" ? std::string(lx::kIdentityTemplate)
                                                        : ps_template;
      const lx::PatchPrompt prompt = lx::build_patch_prompt(v, templ);
      std::vector<std::string> words;
      if (!ps_word.empty()) words.push_back(ps_word);
      if (!ps_words.empty()) {
        std::istringstream in(lx::read_text_file(ps_words));
        for (std::string line; std::getline(in, line);)
          if (!lx::trim(line).empty()) words.emplace_back(lx::trim(line));
      }
      if (words.empty()) throw lx::Error(lx::ErrorCode::ConfigError, "give --word or --words");
      std::optional<lx::CorpusIndex> ix;
      if (!ps_corpus.empty()) ix = lx::index_corpus(v, lx::read_text_file(ps_corpus));
      std::ofstream file;
      if (!ps_out.empty()) {
        file.open(ps_out, std::ios::binary | std::ios::trunc);
        if (!file) throw lx::Error(lx::ErrorCode::IoError, "cannot write " + ps_out);
      }
      std::ostream& out = ps_out.empty() ? std::cout : file;
      for (const auto& word : words) {
        lx::WordRecord w = lx::make_word_record(v, word);
        if (ix)
          if (const auto* e = ix->find(word)) w = ix->record(*e, 100);
        const auto states = lx::last_token_states(ck.weights, ck.config, w.context_ids, w.token_ids);
        for (int l = 0; l < static_cast<int>(states.size()); ++l) {
          const auto r = lx::patchscope_decode(ck.weights, ck.config, v, prompt, states[static_cast<std::size_t>(l)],
                                               word, 0, l, ps_matched ? l : 0);
          out << nlohmann::json{{"word", word}, {"layer", r.layer}, {"generated", r.generated},
                                {"success", r.success}, {"target", r.target}}
                     .dump()
              << "\n";
        }
      }
    } else if (*expand_eval) {
      const lx::Checkpoint ck = lx::load_checkpoint(ev_ckpt);
      const lx::Vocabulary v = lx::load_vocabulary(ev_vocab);
      std::vector<std::string> words;
      for (const auto& e : lx::load_entries(ev_entries)) words.push_back(e.word);
      const lx::ExpandedVocabulary ev(v, words);
      if (ck.config.vocab_size != static_cast<int>(ev.size()))
        throw lx::Error(lx::ErrorCode::ConfigError, "checkpoint does not match vocabulary plus entries");
      const std::string text = lx::read_text_file(ev_test);
      const auto m = lx::evaluate_top1(ck.weights, ck.config, ev, text, true);
      nlohmann::json j = {{"all_words_acc", m.all_words_acc},
                          {"positions", m.n_positions},
                          {"word_positions", m.n_word_positions},
                          {"token_reduction", lx::token_reduction(ev, text)}};
      if (m.new_token_acc) j["new_token_acc"] = *m.new_token_acc;
      if (m.original_or_new_acc) j["original_or_new_acc"] = *m.original_or_new_acc;
      std::cout << j.dump(2) << "\n";
    } else if (*expand) {
      run_and_print(make_config(expand_args, "expand"));
    } else if (*report) {
      const auto bad = lx::verify_manifest(report_dir);
      const auto j = nlohmann::json::parse(lx::read_text_file(std::filesystem::path(report_dir) / "report.json"));
      std::cout << "experiment " << j.at("experiment").get<std::string>() << "\nconfig_hash "
                << j.at("config_hash").get<std::string>() << "\n";
      for (const auto& [k, v] : j.at("result").at("scalars").items()) std::cout << k << " " << v.dump() << "\n";
      for (const auto& [k, v] : j.at("result").at("curves").items()) std::cout << k << " " << v.at("values").dump() << "\n";
      if (!bad.empty()) {
        for (const auto& f : bad) std::cerr << "manifest mismatch: " << f << "\n";
        return lx::exit_status(lx::ErrorCode::FormatError);
      }
      std::cout << "manifest ok\n";
    }
  } catch (const lx::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lx::exit_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lx::exit_status(lx::ErrorCode::FormatError);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
