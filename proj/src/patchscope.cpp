#include "lexiscope/patchscope.hpp"

#include <algorithm>

#include "lexiscope/error.hpp"

namespace lexiscope {

namespace {

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string_view rstrip(std::string_view s) {
  while (!s.empty() && is_blank(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

PatchPrompt build_patch_prompt(const Vocabulary& vocab, std::string_view templ) {
  PatchPrompt p;
  p.templ = std::string(templ);
  const auto at = templ.find(kPlaceholder);
  if (at != std::string_view::npos) {
    if (templ.find(kPlaceholder, at + 1) != std::string_view::npos)
      throw Error(ErrorCode::BadTemplate, "template has more than one placeholder");
    const std::string_view prefix = rstrip(templ.substr(0, at));
    const std::string_view suffix = templ.substr(at + kPlaceholder.size());
    p.token_ids = encode(vocab, prefix).ids;
    p.patch_positions.push_back(static_cast<int>(p.token_ids.size()));
    p.token_ids.push_back(kFillerToken);
    const auto tail = encode(vocab, suffix).ids;
    p.token_ids.insert(p.token_ids.end(), tail.begin(), tail.end());
    return p;
  }
  // all-placeholder form: "x x x x"
  std::size_t i = 0;
  while (i < templ.size()) {
    if (is_blank(templ[i])) {
      ++i;
      continue;
    }
    if (templ[i] != 'x' || (i + 1 < templ.size() && !is_blank(templ[i + 1])))
      throw Error(ErrorCode::BadTemplate, "template '" + p.templ + "' has no placeholder");
    p.patch_positions.push_back(static_cast<int>(p.token_ids.size()));
    p.token_ids.push_back(kFillerToken);
    ++i;
  }
  if (p.patch_positions.empty()) throw Error(ErrorCode::BadTemplate, "template has no placeholder");
  return p;
}

std::size_t target_length(const Vocabulary& vocab, std::string_view target) {
  return encode_piece(vocab, " " + std::string(target)).size();
}

DecodeResult patchscope_decode(const ModelWeights& weights, const ModelConfig& config,
                               const Vocabulary& vocab, const PatchPrompt& prompt, const Vector& r,
                               std::string_view target, int max_new, int layer, int patch_layer) {
  if (trim(target).empty()) throw Error(ErrorCode::BadTarget, "empty decode target");
  if (r.size() != config.d_model) throw Error(ErrorCode::DimensionMismatch, "patch vector width");
  const auto n = static_cast<int>(target_length(vocab, target));
  const int steps = max_new <= 0 ? n : max_new;

  std::vector<Intervention> iv;
  for (int pos : prompt.patch_positions) iv.push_back(Intervention::patch(patch_layer, pos, r));
  const TokenIds gen = generate(weights, config, prompt.token_ids, steps, iv);

  DecodeResult res;
  res.layer = layer;
  res.target = std::string(target);
  res.generated = decode(vocab, gen);
  if (static_cast<int>(gen.size()) >= n) {
    const std::string head = decode(vocab, std::span<const TokenId>(gen.data(), static_cast<std::size_t>(n)));
    res.success = trim(head) == trim(target);
  }
  return res;
}

std::vector<Vector> last_token_states(const ModelWeights& weights, const ModelConfig& config,
                                      const TokenIds& context, const TokenIds& word_ids) {
  if (word_ids.empty()) throw Error(ErrorCode::EmptyInput, "word has no tokens");
  if (static_cast<int>(word_ids.size()) > config.max_seq)
    throw Error(ErrorCode::SequenceTooLong, "word longer than max_seq");
  const std::size_t keep = std::min(context.size(), static_cast<std::size_t>(config.max_seq) - word_ids.size());
  TokenIds ids(context.end() - static_cast<std::ptrdiff_t>(keep), context.end());
  ids.insert(ids.end(), word_ids.begin(), word_ids.end());
  const auto tr = forward(weights, config, ids, {}, ForwardOptions{false});
  std::vector<Vector> out;
  out.reserve(tr.hidden.size());
  for (const auto& h : tr.hidden) out.push_back(h.row(h.rows() - 1).transpose());
  return out;
}

std::optional<DecodableLayer> earliest_decodable_layer(const ModelWeights& weights,
                                                       const ModelConfig& config,
                                                       const Vocabulary& vocab,
                                                       const WordRecord& word,
                                                       const PatchPrompt& prompt, PatchMode mode) {
  const auto states = last_token_states(weights, config, word.context_ids, word.token_ids);
  for (int l = 0; l < static_cast<int>(states.size()); ++l) {
    const int patch_layer = mode == PatchMode::Input ? 0 : l;
    const auto res = patchscope_decode(weights, config, vocab, prompt, states[static_cast<std::size_t>(l)],
                                       word.surface, 0, l, patch_layer);
    if (res.success) return DecodableLayer{l, states[static_cast<std::size_t>(l)]};
  }
  return std::nullopt;
}

}  // namespace lexiscope
