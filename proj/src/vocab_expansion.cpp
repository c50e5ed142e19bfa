#include "lexiscope/vocab_expansion.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "lexiscope/corpus.hpp"
#include "lexiscope/error.hpp"
#include "lexiscope/hash.hpp"

namespace lexiscope {

VectorD rms_normalize(const VectorD& v) {
  if (v.size() == 0) throw Error(ErrorCode::ZeroVector, "rms_normalize of an empty vector");
  const double rms = std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
  if (rms == 0.0) throw Error(ErrorCode::ZeroVector, "rms_normalize of a zero vector");
  return v / rms;
}

MatrixD fit_procrustes(const MatrixD& H, const MatrixD& X) {
  if (H.rows() != X.rows() || H.cols() != X.cols() || H.rows() < 1)
    throw Error(ErrorCode::DimensionMismatch, "Procrustes needs equally shaped, non-empty H and X");
  const Eigen::MatrixXd M = X.transpose() * H;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd S = svd.matrixU();
  Eigen::MatrixXd V = svd.matrixV();
  for (Eigen::Index i = 0; i < S.cols(); ++i) {
    Eigen::Index at = 0;
    S.col(i).cwiseAbs().maxCoeff(&at);
    if (S(at, i) < 0) {
      S.col(i) *= -1.0;
      V.col(i) *= -1.0;
    }
  }
  return S * V.transpose();
}

std::vector<MatrixD> single_token_states(const ModelWeights& w, const ModelConfig& c) {
  std::vector<MatrixD> states(static_cast<std::size_t>(c.n_layers) + 1, MatrixD(c.vocab_size, c.d_model));
  for (TokenId t = 0; t < c.vocab_size; ++t) {
    const TokenIds ids{t};
    const auto tr = forward(w, c, ids, {}, ForwardOptions{false});
    for (std::size_t l = 0; l < states.size(); ++l) states[l].row(t) = tr.hidden[l].row(0).cast<double>();
  }
  return states;
}

namespace {

// Rows scaled to unit RMS; also returns the mean of the original row RMS.
MatrixD normalize_rows(const MatrixD& m, double& mean_rms) {
  MatrixD out(m.rows(), m.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const VectorD row = m.row(i).transpose();
    total += std::sqrt(row.squaredNorm() / static_cast<double>(row.size()));
    out.row(i) = rms_normalize(row).transpose();
  }
  mean_rms = total / static_cast<double>(m.rows());
  return out;
}

}  // namespace

LayerMaps fit_layer_maps(const std::vector<MatrixD>& states, const Matrix& E, const Matrix& U) {
  LayerMaps maps;
  const MatrixD Xe = normalize_rows(E.cast<double>(), maps.rms_E_mean);
  const MatrixD Xu = normalize_rows(U.cast<double>(), maps.rms_U_mean);
  for (const MatrixD& h : states) {
    double rms_h = 0.0;
    const MatrixD H = normalize_rows(h, rms_h);
    maps.rms_h_mean.push_back(rms_h);
    maps.T_E.push_back(fit_procrustes(H, Xe));
    maps.T_U.push_back(fit_procrustes(H, Xu));
  }
  return maps;
}

LayerMaps learn_layer_maps(const ModelWeights& w, const ModelConfig& c) {
  return fit_layer_maps(single_token_states(w, c), w.embed, w.unembed);
}

InitialEntries derive_initial_entries(const Vector& r, int layer, const LayerMaps& maps) {
  if (layer < 0 || layer >= static_cast<int>(maps.T_E.size()))
    throw Error(ErrorCode::InvalidPosition, "no map for layer " + std::to_string(layer));
  const VectorD rn = rms_normalize(r.cast<double>());
  const auto l = static_cast<std::size_t>(layer);
  return {(maps.T_E[l] * rn * maps.rms_E_mean).cast<float>(), (maps.T_U[l] * rn * maps.rms_U_mean).cast<float>()};
}

// ---------------------------------------------------------------------------

ExpandedVocabulary::ExpandedVocabulary(const Vocabulary& base, std::vector<std::string> words)
    : base_(&base), words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const auto id = static_cast<TokenId>(base.size() + i);
    if (!ids_.emplace(words_[i], id).second) throw Error(ErrorCode::ConfigError, "duplicate new word " + words_[i]);
  }
}

std::optional<TokenId> ExpandedVocabulary::find_word(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenIdSeq ExpandedVocabulary::encode(std::string_view text) const {
  TokenIdSeq out;
  for (std::string_view piece : pretokenize(text)) {
    const std::size_t begin = out.ids.size();
    const bool word = is_word_piece(piece);
    const auto hit = word ? find_word(trim(piece)) : std::nullopt;
    if (hit) {
      out.ids.push_back(*hit);
    } else {
      const TokenIds ids = encode_piece(*base_, piece);
      out.ids.insert(out.ids.end(), ids.begin(), ids.end());
    }
    if (word) out.word_spans.push_back({begin, out.ids.size()});
  }
  return out;
}

std::string ExpandedVocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id >= 0 && static_cast<std::size_t>(id) >= base_->size() && static_cast<std::size_t>(id) < size())
      out += " " + words_[static_cast<std::size_t>(id) - base_->size()];
    else
      out += base_->token(id);
  }
  return out;
}

namespace {

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    if (!trim(line).empty()) f(line);
  }
}

}  // namespace

TokenIds ExpandedVocabulary::encode_stream(std::string_view text) const {
  TokenIds out;
  for_each_line(text, [&](std::string_view line) {
    const auto seq = encode(line);
    out.insert(out.end(), seq.ids.begin(), seq.ids.end());
    out.push_back('\n');
  });
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> expansion_candidates(const Vocabulary& vocab, std::string_view text, std::size_t min_count) {
  if (min_count < 1) throw Error(ErrorCode::ConfigError, "min_count must be at least 1");
  const CorpusIndex ix = index_corpus(vocab, text);
  std::vector<std::string> out;
  for (const auto& w : ix.words)
    if (w.count >= min_count && w.n_tokens >= 2) out.push_back(w.surface);
  return out;
}

ExpandedModel assemble_expanded(const ModelWeights& weights, const ModelConfig& config,
                                std::vector<ExpansionEntry> entries, const RefinementMatrices& W) {
  ExpandedModel m;
  m.config = config;
  m.weights = weights;
  const auto V = static_cast<Eigen::Index>(config.vocab_size);
  const auto M = static_cast<Eigen::Index>(entries.size());
  const auto d = static_cast<Eigen::Index>(config.d_model);
  m.config.vocab_size = config.vocab_size + static_cast<int>(M);
  m.weights.embed.conservativeResize(V + M, d);
  m.weights.unembed.conservativeResize(V + M, d);
  m.header.original_vocab = config.vocab_size;
  m.header.refine_embed = W.W_E;
  m.header.refine_unembed = W.W_U;
  m.header.embed_init.resize(M, d);
  m.header.unembed_init.resize(M, d);
  for (Eigen::Index i = 0; i < M; ++i) {
    auto& e = entries[static_cast<std::size_t>(i)];
    e.new_id = static_cast<TokenId>(V + i);
    e.e = e.e_hat + W.W_E * e.e_hat;
    e.u = e.u_hat + W.W_U * e.u_hat;
    m.weights.embed.row(V + i) = e.e.transpose();
    m.weights.unembed.row(V + i) = e.u.transpose();
    m.header.embed_init.row(i) = e.e_hat.transpose();
    m.header.unembed_init.row(i) = e.u_hat.transpose();
  }
  m.entries = std::move(entries);
  return m;
}

namespace {

std::uint64_t core_hash(const ExpandedModel& m) {
  ModelWeights core = m.weights;
  const auto V = m.header.original_vocab;
  core.embed = m.weights.embed.topRows(V);
  core.unembed = m.weights.unembed.topRows(V);
  return hash_weights(core);
}

}  // namespace

RefinementMatrices train_refinement(ExpandedModel& model, const ExpandedVocabulary& vocab, std::string_view train_text,
                                    const RefineHyper& h, std::vector<float>* loss_curve) {
  const auto d = model.config.d_model;
  RefinementMatrices W{Matrix::Zero(d, d), Matrix::Zero(d, d)};
  if (model.entries.empty()) throw Error(ErrorCode::EmptyInput, "refinement needs at least one entry");
  if (vocab.size() != static_cast<std::size_t>(model.config.vocab_size))
    throw Error(ErrorCode::DimensionMismatch, "expanded vocabulary and model disagree on size");
  const TokenIds stream = vocab.encode_stream(train_text);
  if (stream.size() < 3) throw Error(ErrorCode::EmptyCorpus, "refinement corpus is empty");
  const int seq_len = std::min({h.seq_len, model.config.max_seq, static_cast<int>(stream.size()) - 1});

  const std::uint64_t frozen = core_hash(model);
  const auto M = static_cast<Eigen::Index>(model.entries.size());
  const Matrix& Ehat = model.header.embed_init;
  const Matrix& Uhat = model.header.unembed_init;

  ModelWeights grad = ModelWeights::zeros(model.config);
  Matrix mE = Matrix::Zero(d, d), vE = Matrix::Zero(d, d), mU = Matrix::Zero(d, d), vU = Matrix::Zero(d, d);
  std::uint64_t state = h.seed;
  auto adam = [&](Matrix& p, Matrix& m, Matrix& v, const Matrix& g, int step) {
    m = h.beta1 * m + (1.0f - h.beta1) * g;
    v = h.beta2 * v + (1.0f - h.beta2) * g.cwiseProduct(g);
    const float bc1 = 1.0f - std::pow(h.beta1, static_cast<float>(step + 1));
    const float bc2 = 1.0f - std::pow(h.beta2, static_cast<float>(step + 1));
    p.array() -= h.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + 1e-8f);
  };
  for (int step = 0; step < h.steps; ++step) {
    model.weights.embed.bottomRows(M) = Ehat + Ehat * W.W_E.transpose();
    model.weights.unembed.bottomRows(M) = Uhat + Uhat * W.W_U.transpose();
    const Batch b = sample_batch(stream, h.batch, seq_len, state);
    const float loss = batch_loss_and_grad(model.weights, model.config, b, grad, GradScope::EmbeddingsOnly);
    if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "refinement loss is not finite");
    if (loss_curve) loss_curve->push_back(loss);
    const Matrix gE = grad.embed.bottomRows(M).transpose() * Ehat;
    const Matrix gU = grad.unembed.bottomRows(M).transpose() * Uhat;
    adam(W.W_E, mE, vE, gE, step);
    adam(W.W_U, mU, vU, gU, step);
  }
  ModelWeights base = model.weights;
  base.embed = model.weights.embed.topRows(model.header.original_vocab);
  base.unembed = model.weights.unembed.topRows(model.header.original_vocab);
  ModelConfig base_cfg = model.config;
  base_cfg.vocab_size = model.header.original_vocab;
  model = assemble_expanded(base, base_cfg, std::move(model.entries), W);
  if (core_hash(model) != frozen) throw Error(ErrorCode::Internal, "refinement modified frozen parameters");
  return W;
}

ExpansionResult expand_vocabulary(const ModelWeights& weights, const ModelConfig& config, const Vocabulary& vocab,
                                  std::string_view train_text, std::string_view test_text,
                                  const ExpansionOptions& o) {
  ExpansionResult res;
  res.candidates = expansion_candidates(vocab, test_text, o.min_count);
  if (res.candidates.empty())
    throw Error(ErrorCode::NoCandidates, "no multi-token word occurs " + std::to_string(o.min_count) + "+ times");

  const CorpusIndex ix = index_corpus(vocab, test_text);
  const PatchPrompt prompt = build_patch_prompt(vocab, o.patch_template);
  std::vector<ExpansionEntry> entries;
  for (const std::string& word : res.candidates) {
    if (o.max_words && entries.size() >= o.max_words) break;
    const WordRecord rec = ix.record(*ix.find(word), o.use_context ? o.context_tokens : 0);
    const auto found = earliest_decodable_layer(weights, config, vocab, rec, prompt, o.patch_mode);
    if (!found) {
      res.skipped.push_back(word);
      continue;
    }
    ExpansionEntry e;
    e.word = word;
    e.original_ids = rec.token_ids;
    e.layer = found->layer;
    e.r = found->r;
    entries.push_back(std::move(e));
  }

  if (entries.empty()) {
    res.model = assemble_expanded(weights, config, {}, {Matrix::Zero(config.d_model, config.d_model),
                                                        Matrix::Zero(config.d_model, config.d_model)});
    return res;
  }

  if (o.init == EntryInit::Maps) {
    const LayerMaps maps = learn_layer_maps(weights, config);
    for (auto& e : entries) {
      auto init = derive_initial_entries(e.r, e.layer, maps);
      e.e_hat = std::move(init.e_hat);
      e.u_hat = std::move(init.u_hat);
    }
  } else {
    for (auto& e : entries) {
      e.e_hat = Vector::Zero(config.d_model);
      e.u_hat = Vector::Zero(config.d_model);
      for (TokenId t : e.original_ids) {
        e.e_hat += weights.embed.row(t).transpose();
        e.u_hat += weights.unembed.row(t).transpose();
      }
      e.e_hat /= static_cast<float>(e.original_ids.size());
      e.u_hat /= static_cast<float>(e.original_ids.size());
    }
  }

  std::vector<std::string> words;
  for (const auto& e : entries) words.push_back(e.word);
  const ExpandedVocabulary ev(vocab, words);
  const auto d = config.d_model;
  res.model = assemble_expanded(weights, config, std::move(entries), {Matrix::Zero(d, d), Matrix::Zero(d, d)});
  if (o.refine.steps > 0) train_refinement(res.model, ev, train_text, o.refine, &res.refine_loss);
  return res;
}

// ---------------------------------------------------------------------------

Top1Metrics evaluate_top1(const ModelWeights& weights, const ModelConfig& config, const ExpandedVocabulary& vocab,
                          std::string_view text, bool use_new_tokens) {
  Top1Metrics m;
  std::size_t correct = 0, word_new = 0, word_either = 0;
  for_each_line(text, [&](std::string_view line) {
    const TokenIdSeq seq = use_new_tokens ? vocab.encode(line) : encode(vocab.base(), line);
    // word_first[p] = original first token of an added word starting at p
    std::vector<std::optional<TokenId>> word_first(seq.ids.size());
    for (const auto& span : seq.word_spans) {
      const std::string surface(trim(vocab.decode(std::span<const TokenId>(seq.ids).subspan(span.begin, span.end - span.begin))));
      if (!vocab.find_word(surface)) continue;
      const std::string spaced = span.begin == 0 ? surface : " " + surface;
      word_first[span.begin] = encode_piece(vocab.base(), spaced).front();
    }
    const std::size_t T = seq.ids.size();
    const auto window = static_cast<std::size_t>(config.max_seq);
    for (std::size_t start = 0; start + 1 < T; start += window - 1) {
      const std::size_t end = std::min(T, start + window);
      const std::span<const TokenId> ids(seq.ids.data() + start, end - start);
      const auto tr = forward(weights, config, ids, {}, ForwardOptions{false});
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        const auto row = tr.logits.row(static_cast<Eigen::Index>(i));
        const TokenId pred = argmax(std::span<const float>(row.data(), static_cast<std::size_t>(row.size())));
        const TokenId actual = ids[i + 1];
        ++m.n_positions;
        correct += pred == actual;
        const auto& first = word_first[start + i + 1];
        if (first) {
          ++m.n_word_positions;
          word_new += pred == actual && vocab.is_new(actual);
          word_either += pred == actual || pred == *first;
        }
      }
      if (end == T) break;
    }
  });
  if (m.n_positions == 0) throw Error(ErrorCode::EmptyCorpus, "no positions to evaluate");
  m.all_words_acc = static_cast<double>(correct) / static_cast<double>(m.n_positions);
  if (m.n_word_positions) {
    const double n = static_cast<double>(m.n_word_positions);
    if (use_new_tokens) m.new_token_acc = static_cast<double>(word_new) / n;
    m.original_or_new_acc = static_cast<double>(word_either) / n;
  }
  return m;
}

double token_reduction(const ExpandedVocabulary& vocab, std::string_view text) {
  std::size_t before = 0, after = 0;
  for_each_line(text, [&](std::string_view line) {
    before += encode(vocab.base(), line).ids.size();
    after += vocab.encode(line).ids.size();
  });
  if (before == 0) throw Error(ErrorCode::EmptyCorpus, "token_reduction of empty text");
  return 1.0 - static_cast<double>(after) / static_cast<double>(before);
}

// ---------------------------------------------------------------------------

std::string base64_floats(const Vector& v) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<const char*, 6, 8>>;
  const auto* p = reinterpret_cast<const char*>(v.data());
  const std::size_t n = static_cast<std::size_t>(v.size()) * sizeof(float);
  std::string out(It(p), It(p + n));
  out.append((3 - n % 3) % 3, '=');
  return out;
}

Vector floats_from_base64(std::string_view text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<const char*>, 8, 6>;
  if (text.size() % 4 != 0) throw Error(ErrorCode::FormatError, "base64 length is not a multiple of 4");
  std::string padded(text);
  std::size_t pad = 0;
  while (pad < 2 && !padded.empty() && padded[padded.size() - 1 - pad] == '=') ++pad;
  std::replace(padded.end() - static_cast<std::ptrdiff_t>(pad), padded.end(), '=', 'A');
  std::string bytes;
  try {
    bytes.assign(It(padded.data()), It(padded.data() + padded.size()));
  } catch (const std::exception&) {
    throw Error(ErrorCode::FormatError, "invalid base64 payload");
  }
  bytes.resize(bytes.size() - pad);
  if (bytes.size() % sizeof(float) != 0) throw Error(ErrorCode::FormatError, "base64 payload is not float32");
  Vector v(static_cast<Eigen::Index>(bytes.size() / sizeof(float)));
  std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

void save_entries(const std::filesystem::path& path, std::span<const ExpansionEntry> entries) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& e : entries) {
    nlohmann::json j{{"word", e.word},
                     {"original_ids", e.original_ids},
                     {"layer", e.layer},
                     {"new_id", e.new_id},
                     {"r", base64_floats(e.r)},
                     {"e_hat", base64_floats(e.e_hat)},
                     {"u_hat", base64_floats(e.u_hat)},
                     {"e", base64_floats(e.e)},
                     {"u", base64_floats(e.u)}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<ExpansionEntry> load_entries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::vector<ExpansionEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ExpansionEntry e;
      e.word = j.at("word").get<std::string>();
      e.original_ids = j.at("original_ids").get<TokenIds>();
      e.layer = j.at("layer").get<int>();
      e.new_id = j.at("new_id").get<TokenId>();
      e.r = floats_from_base64(j.at("r").get<std::string>());
      e.e_hat = floats_from_base64(j.at("e_hat").get<std::string>());
      e.u_hat = floats_from_base64(j.at("u_hat").get<std::string>());
      e.e = floats_from_base64(j.at("e").get<std::string>());
      e.u = floats_from_base64(j.at("u").get<std::string>());
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::FormatError, std::string("bad entry line: ") + ex.what());
    }
  }
  return out;
}

}  // namespace lexiscope
