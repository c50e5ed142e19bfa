#pragma once

// Internal forward/backward kernels shared by inference and training.

#include <span>
#include <vector>

#include "lexiscope/model.hpp"

namespace lexiscope::detail {

template <typename S>
struct RopeTable {
  MatrixT<S> cos;  // T x head_dim/2
  MatrixT<S> sin;
};

template <typename S>
struct LayerCache {
  MatrixT<S> x;  // residual stream entering the layer (post-patch)
  VectorT<S> inv_rms1;
  MatrixT<S> a_in;     // normalised attention input
  MatrixT<S> q, k, v;  // q and k after rotary encoding
  std::vector<MatrixT<S>> probs;  // [b * n_heads + h], T x T
  MatrixT<S> o;
  MatrixT<S> attn_out;
  MatrixT<S> mid;
  VectorT<S> inv_rms2;
  MatrixT<S> f_in;
  MatrixT<S> gate, up, act;
  MatrixT<S> ffn_update;
};

template <typename S>
struct ForwardCache {
  int batch = 0;
  int seq_len = 0;
  RopeTable<S> rope;
  std::vector<LayerCache<S>> layers;
  MatrixT<S> h_final;
  VectorT<S> inv_rms_final;
  MatrixT<S> hn;
  MatrixT<S> logits;
};

/// Runs the stack on B x T tokens. Interventions require B == 1.
template <typename S>
void forward_core(const ModelWeightsT<S>& w, const ModelConfig& cfg, std::span<const TokenId> ids,
                  int batch, int seq_len, std::span<const Intervention> interventions,
                  ForwardCache<S>& cache);

/// Mean cross-entropy of cache.logits against targets.
template <typename S>
S cross_entropy(const ForwardCache<S>& cache, std::span<const TokenId> targets,
                MatrixT<S>* dlogits);

template <typename S>
void backward_core(const ModelWeightsT<S>& w, const ModelConfig& cfg, std::span<const TokenId> ids,
                   const ForwardCache<S>& cache, const MatrixT<S>& dlogits, ModelWeightsT<S>& grad,
                   GradScope scope);

void validate_interventions(const ModelConfig& cfg, int seq_len,
                            std::span<const Intervention> interventions);

}  // namespace lexiscope::detail
