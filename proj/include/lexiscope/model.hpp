#pragma once

// Desk-scale decoder-only transformer: pre-RMSNorm blocks with rotary
// attention and a SiLU-gated FFN, untied input embeddings E and
// unembeddings U. Every forward pass can be traced layer by layer and
// accepts interventions on the residual stream.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexiscope/tensor.hpp"
#include "lexiscope/tokenizer.hpp"

namespace lexiscope {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int vocab_size = static_cast<int>(kByteAlphabet);
  int max_seq = 128;
  float rope_base = 10000.0f;
  float norm_eps = 1e-5f;
  std::uint64_t seed = 0;

  int head_dim() const { return d_model / n_heads; }
  /// Throws ConfigError when a count is not positive or heads do not divide d_model.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename S>
struct LayerWeightsT {
  VectorT<S> attn_norm;
  MatrixT<S> wq, wk, wv, wo;  // d x d, rows are output units
  VectorT<S> ffn_norm;
  MatrixT<S> w_gate, w_up;  // d_ff x d
  MatrixT<S> w_down;        // d x d_ff
};

template <typename S>
struct ModelWeightsT {
  MatrixT<S> embed;    // E: V x d
  MatrixT<S> unembed;  // U: V x d
  std::vector<LayerWeightsT<S>> layers;
  VectorT<S> final_norm;

  static ModelWeightsT zeros(const ModelConfig& config);

  template <typename T>
  ModelWeightsT<T> cast() const;

  /// Calls f(name, data, size) for each tensor in checkpoint order.
  template <typename F>
  void for_each_tensor(F&& f);
  template <typename F>
  void for_each_tensor(F&& f) const;

  std::size_t parameter_count() const;
};

using ModelWeights = ModelWeightsT<float>;
using LayerWeights = LayerWeightsT<float>;

/// Seeded Gaussian initialisation (std 0.02, output projections scaled by
/// 1/sqrt(2 n_layers)), norm gains at 1.
ModelWeights init_weights(const ModelConfig& config);

/// Throws DimensionMismatch when tensor shapes disagree with the config.
void check_shapes(const ModelWeights& weights, const ModelConfig& config);

// ---------------------------------------------------------------------------
// Interventions and traces

enum class InterventionKind { PatchHidden, AblateFfn };

struct Intervention {
  InterventionKind kind = InterventionKind::PatchHidden;
  int layer = 0;  // PatchHidden: 0..n_layers (n_layers = before the final norm)
  int position = 0;
  Vector vector;  // PatchHidden only

  static Intervention patch(int layer, int position, Vector v) {
    return {InterventionKind::PatchHidden, layer, position, std::move(v)};
  }
  static Intervention ablate_ffn(int layer, int position) {
    return {InterventionKind::AblateFfn, layer, position, {}};
  }
};

struct ForwardTrace {
  std::vector<Matrix> hidden;      // n_layers + 1 entries, T x d; hidden[0] = embedding rows
  std::vector<Matrix> attn_out;    // n_layers entries, T x d
  std::vector<Matrix> ffn_update;  // n_layers entries, T x d
  std::vector<std::vector<Matrix>> attn_weights;  // [layer][head], T x T, row = query
  Matrix logits;                                  // T x V

  int n_layers() const { return static_cast<int>(attn_out.size()); }
  int length() const { return static_cast<int>(logits.rows()); }
};

struct ForwardOptions {
  bool keep_attention = true;
};

ForwardTrace forward(const ModelWeights& weights, const ModelConfig& config,
                     std::span<const TokenId> ids, std::span<const Intervention> interventions = {},
                     const ForwardOptions& options = {});

/// Greedy decoding. Interventions are re-applied at their absolute positions
/// on every step. Returns only the newly generated tokens.
TokenIds generate(const ModelWeights& weights, const ModelConfig& config,
                  std::span<const TokenId> prompt, int max_new,
                  std::span<const Intervention> interventions = {});

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const float> row);

// ---------------------------------------------------------------------------
// Training

/// B sequences of equal length, stored row-major (B x T).
struct Batch {
  int batch = 0;
  int seq_len = 0;
  TokenIds inputs;
  TokenIds targets;
};

enum class GradScope { All, EmbeddingsOnly };

/// Mean next-token cross-entropy of the batch.
template <typename S>
S batch_loss(const ModelWeightsT<S>& weights, const ModelConfig& config, const Batch& batch);

/// Mean cross-entropy and its gradient. With GradScope::EmbeddingsOnly only
/// grad.embed and grad.unembed are written.
template <typename S>
S batch_loss_and_grad(const ModelWeightsT<S>& weights, const ModelConfig& config,
                      const Batch& batch, ModelWeightsT<S>& grad,
                      GradScope scope = GradScope::All);

struct TrainHyper {
  float lr = 3e-3f;
  int steps = 500;
  int batch = 8;
  int seq_len = 64;
  int warmup = 20;
  float min_lr_ratio = 0.1f;
  float weight_decay = 0.0f;
  float grad_clip = 1.0f;
  float beta1 = 0.9f;
  float beta2 = 0.95f;
  std::uint64_t seed = 1;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<float> loss_curve;
};

using TrainCallback = std::function<void(int step, float loss)>;

/// AdamW with linear warmup and cosine decay. Windows of seq_len + 1 tokens
/// are drawn uniformly from the corpus stream.
TrainResult train(const ModelConfig& config, std::span<const TokenId> corpus,
                  const TrainHyper& hyper, const TrainCallback& on_step = {});

TrainResult train(const ModelConfig& config, ModelWeights initial, std::span<const TokenId> corpus,
                  const TrainHyper& hyper, const TrainCallback& on_step = {});

/// Draws one batch of random windows from the stream.
Batch sample_batch(std::span<const TokenId> corpus, int batch, int seq_len, std::uint64_t& state);

// ---------------------------------------------------------------------------
// Checkpoints

/// Extra block stored by vocabulary-expanded checkpoints.
struct ExpansionHeader {
  int original_vocab = 0;
  Matrix refine_embed;    // W_E, d x d
  Matrix refine_unembed;  // W_U, d x d
  Matrix embed_init;      // e_hat rows, M x d
  Matrix unembed_init;    // u_hat rows, M x d
};

struct Checkpoint {
  ModelConfig config;
  ModelWeights weights;
  std::optional<ExpansionHeader> expansion;
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelWeights& weights, const ExpansionHeader* expansion = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the raw bytes of every tensor, in checkpoint order.
std::uint64_t hash_weights(const ModelWeights& weights);

}  // namespace lexiscope

#include "lexiscope/detail/model_weights.inl"
