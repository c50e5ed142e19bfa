#include <cmath>
#include <random>

#include "lexiscope/error.hpp"
#include "lexiscope/model.hpp"
#include "transformer_core.hpp"

namespace lexiscope {

void ModelConfig::validate() const {
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || vocab_size <= 0 ||
      max_seq <= 0)
    throw Error(ErrorCode::ConfigError, "model sizes must be positive");
  if (d_model % n_heads != 0)
    throw Error(ErrorCode::ConfigError, "n_heads must divide d_model");
  if (head_dim() % 2 != 0) throw Error(ErrorCode::ConfigError, "head_dim must be even for rotary");
  if (!(rope_base > 1.0f) || !(norm_eps > 0.0f))
    throw Error(ErrorCode::ConfigError, "rope_base must exceed 1 and norm_eps be positive");
}

ModelWeights init_weights(const ModelConfig& c) {
  c.validate();
  ModelWeights w = ModelWeights::zeros(c);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  const float out_scale = 1.0f / std::sqrt(2.0f * static_cast<float>(c.n_layers));
  auto fill = [&](Matrix& m, float scale) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * scale;
  };
  fill(w.embed, 1.0f);
  fill(w.unembed, 1.0f);
  for (auto& l : w.layers) {
    l.attn_norm.setOnes();
    fill(l.wq, 1.0f);
    fill(l.wk, 1.0f);
    fill(l.wv, 1.0f);
    fill(l.wo, out_scale);
    l.ffn_norm.setOnes();
    fill(l.w_gate, 1.0f);
    fill(l.w_up, 1.0f);
    fill(l.w_down, out_scale);
  }
  w.final_norm.setOnes();
  return w;
}

void check_shapes(const ModelWeights& w, const ModelConfig& c) {
  auto expect = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::DimensionMismatch, std::string("bad shape for ") + what);
  };
  const int d = c.d_model;
  expect(w.embed.rows() == c.vocab_size && w.embed.cols() == d, "embed");
  expect(w.unembed.rows() == c.vocab_size && w.unembed.cols() == d, "unembed");
  expect(static_cast<int>(w.layers.size()) == c.n_layers, "layers");
  for (const auto& l : w.layers) {
    expect(l.attn_norm.size() == d && l.ffn_norm.size() == d, "norm gain");
    for (const Matrix* m : {&l.wq, &l.wk, &l.wv, &l.wo}) expect(m->rows() == d && m->cols() == d, "attention");
    expect(l.w_gate.rows() == c.d_ff && l.w_gate.cols() == d, "w_gate");
    expect(l.w_up.rows() == c.d_ff && l.w_up.cols() == d, "w_up");
    expect(l.w_down.rows() == d && l.w_down.cols() == c.d_ff, "w_down");
  }
  expect(w.final_norm.size() == d, "final_norm");
}

int argmax(std::span<const float> row) {
  if (row.empty()) throw Error(ErrorCode::EmptyInput, "argmax of empty row");
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

namespace detail {

namespace {

template <typename S>
RopeTable<S> make_rope(int seq_len, int head_dim, double base) {
  const int half = head_dim / 2;
  RopeTable<S> r{MatrixT<S>(seq_len, half), MatrixT<S>(seq_len, half)};
  for (int t = 0; t < seq_len; ++t)
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(base, -2.0 * i / head_dim);
      r.cos(t, i) = static_cast<S>(std::cos(t * freq));
      r.sin(t, i) = static_cast<S>(std::sin(t * freq));
    }
  return r;
}

// Half-split rotation of every head; inverse = transpose, used by backward.
template <typename S>
void apply_rope(MatrixT<S>& x, int batch, int seq_len, int n_heads, int head_dim,
                const RopeTable<S>& r, bool inverse) {
  const int half = head_dim / 2;
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < seq_len; ++t) {
      S* row = x.row(b * seq_len + t).data();
      for (int h = 0; h < n_heads; ++h) {
        S* hd = row + h * head_dim;
        for (int i = 0; i < half; ++i) {
          const S c = r.cos(t, i);
          const S s = inverse ? -r.sin(t, i) : r.sin(t, i);
          const S a = hd[i], z = hd[i + half];
          hd[i] = a * c - z * s;
          hd[i + half] = a * s + z * c;
        }
      }
    }
}

template <typename S>
void rms_norm(const MatrixT<S>& x, const VectorT<S>& gain, double eps, MatrixT<S>& out,
              VectorT<S>& inv_rms) {
  const auto n = x.rows();
  const auto d = x.cols();
  out.resize(n, d);
  inv_rms.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double ss = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) ss += static_cast<double>(x(r, j)) * x(r, j);
    const S inv = static_cast<S>(1.0 / std::sqrt(ss / static_cast<double>(d) + eps));
    inv_rms(r) = inv;
    out.row(r) = (x.row(r) * inv).cwiseProduct(gain.transpose());
  }
}

// dx = inv * (g.dy - xn * mean(g.dy . xn)), with xn = x * inv.
template <typename S>
MatrixT<S> rms_norm_backward(const MatrixT<S>& dy, const MatrixT<S>& x, const VectorT<S>& gain,
                             const VectorT<S>& inv_rms, VectorT<S>* dgain) {
  const auto n = x.rows();
  const auto d = x.cols();
  MatrixT<S> dx(n, d);
  if (dgain) dgain->setZero(d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S inv = inv_rms(r);
    const auto xn = (x.row(r) * inv).eval();
    const auto gdy = dy.row(r).cwiseProduct(gain.transpose()).eval();
    if (dgain) *dgain += dy.row(r).cwiseProduct(xn).transpose();
    const S m = gdy.dot(xn) / static_cast<S>(d);
    dx.row(r) = inv * (gdy - xn * m);
  }
  return dx;
}

template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

}  // namespace

void validate_interventions(const ModelConfig& cfg, int seq_len,
                            std::span<const Intervention> interventions) {
  for (const auto& iv : interventions) {
    if (iv.position < 0 || iv.position >= seq_len)
      throw Error(ErrorCode::BadIntervention, "intervention position out of range");
    if (iv.kind == InterventionKind::PatchHidden) {
      if (iv.layer < 0 || iv.layer > cfg.n_layers)
        throw Error(ErrorCode::BadIntervention, "patch layer out of range");
      if (iv.vector.size() != cfg.d_model)
        throw Error(ErrorCode::BadIntervention, "patch vector has wrong width");
    } else if (iv.layer < 0 || iv.layer >= cfg.n_layers) {
      throw Error(ErrorCode::BadIntervention, "ablation layer out of range");
    }
  }
}

template <typename S>
void forward_core(const ModelWeightsT<S>& w, const ModelConfig& cfg, std::span<const TokenId> ids,
                  int batch, int seq_len, std::span<const Intervention> interventions,
                  ForwardCache<S>& c) {
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int hd = cfg.head_dim();
  const int N = batch * seq_len;
  const double eps = cfg.norm_eps;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

  if (c.seq_len != seq_len || c.rope.cos.cols() != hd / 2)
    c.rope = make_rope<S>(seq_len, hd, cfg.rope_base);
  c.batch = batch;
  c.seq_len = seq_len;
  c.layers.resize(static_cast<std::size_t>(cfg.n_layers));

  MatrixT<S> x(N, d);
  for (int n = 0; n < N; ++n) {
    const TokenId id = ids[static_cast<std::size_t>(n)];
    if (id < 0 || id >= w.embed.rows())
      throw Error(ErrorCode::UnknownTokenId, "token id " + std::to_string(id) + " outside vocabulary");
    x.row(n) = w.embed.row(id);
  }

  auto patch = [&](int layer) {
    for (const auto& iv : interventions)
      if (iv.kind == InterventionKind::PatchHidden && iv.layer == layer)
        x.row(iv.position) = iv.vector.template cast<S>().transpose();
  };

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& lw = w.layers[static_cast<std::size_t>(l)];
    auto& lc = c.layers[static_cast<std::size_t>(l)];
    patch(l);
    lc.x = x;

    rms_norm(x, lw.attn_norm, eps, lc.a_in, lc.inv_rms1);
    lc.q.noalias() = lc.a_in * lw.wq.transpose();
    lc.k.noalias() = lc.a_in * lw.wk.transpose();
    lc.v.noalias() = lc.a_in * lw.wv.transpose();
    apply_rope(lc.q, batch, seq_len, H, hd, c.rope, false);
    apply_rope(lc.k, batch, seq_len, H, hd, c.rope, false);

    lc.o.resize(N, d);
    lc.probs.resize(static_cast<std::size_t>(batch * H));
    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < H; ++h) {
        const auto Q = lc.q.block(b * seq_len, h * hd, seq_len, hd);
        const auto K = lc.k.block(b * seq_len, h * hd, seq_len, hd);
        const auto V = lc.v.block(b * seq_len, h * hd, seq_len, hd);
        MatrixT<S>& P = lc.probs[static_cast<std::size_t>(b * H + h)];
        P.noalias() = (Q * K.transpose()) * scale;
        for (int i = 0; i < seq_len; ++i) {
          S mx = P(i, 0);
          for (int j = 1; j <= i; ++j) mx = std::max(mx, P(i, j));
          double sum = 0.0;
          for (int j = 0; j <= i; ++j) sum += std::exp(static_cast<double>(P(i, j) - mx));
          for (int j = 0; j <= i; ++j)
            P(i, j) = static_cast<S>(std::exp(static_cast<double>(P(i, j) - mx)) / sum);
          for (int j = i + 1; j < seq_len; ++j) P(i, j) = S(0);
        }
        lc.o.block(b * seq_len, h * hd, seq_len, hd).noalias() = P * V;
      }
    lc.attn_out.noalias() = lc.o * lw.wo.transpose();
    lc.mid = x + lc.attn_out;

    rms_norm(lc.mid, lw.ffn_norm, eps, lc.f_in, lc.inv_rms2);
    lc.gate.noalias() = lc.f_in * lw.w_gate.transpose();
    lc.up.noalias() = lc.f_in * lw.w_up.transpose();
    lc.act = lc.gate.unaryExpr([](S g) { return g * sigmoid(g); }).cwiseProduct(lc.up);
    lc.ffn_update.noalias() = lc.act * lw.w_down.transpose();
    for (const auto& iv : interventions)
      if (iv.kind == InterventionKind::AblateFfn && iv.layer == l)
        lc.ffn_update.row(iv.position).setZero();
    x = lc.mid + lc.ffn_update;
  }
  patch(cfg.n_layers);
  c.h_final = x;
  rms_norm(c.h_final, w.final_norm, eps, c.hn, c.inv_rms_final);
  c.logits.noalias() = c.hn * w.unembed.transpose();
}

template <typename S>
S cross_entropy(const ForwardCache<S>& c, std::span<const TokenId> targets, MatrixT<S>* dlogits) {
  const auto N = c.logits.rows();
  const auto V = c.logits.cols();
  if (dlogits) dlogits->resize(N, V);
  double loss = 0.0;
  for (Eigen::Index n = 0; n < N; ++n) {
    const TokenId t = targets[static_cast<std::size_t>(n)];
    if (t < 0 || t >= V) throw Error(ErrorCode::UnknownTokenId, "target outside vocabulary");
    const S mx = c.logits.row(n).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < V; ++j) sum += std::exp(static_cast<double>(c.logits(n, j) - mx));
    loss += std::log(sum) - static_cast<double>(c.logits(n, t) - mx);
    if (dlogits) {
      for (Eigen::Index j = 0; j < V; ++j)
        (*dlogits)(n, j) =
            static_cast<S>(std::exp(static_cast<double>(c.logits(n, j) - mx)) / sum / N);
      (*dlogits)(n, t) -= static_cast<S>(1.0 / N);
    }
  }
  return static_cast<S>(loss / static_cast<double>(N));
}

template <typename S>
void backward_core(const ModelWeightsT<S>& w, const ModelConfig& cfg, std::span<const TokenId> ids,
                   const ForwardCache<S>& c, const MatrixT<S>& dlogits, ModelWeightsT<S>& g,
                   GradScope scope) {
  const bool all = scope == GradScope::All;
  const int H = cfg.n_heads;
  const int hd = cfg.head_dim();
  const int T = c.seq_len;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

  g.unembed.noalias() = dlogits.transpose() * c.hn;
  MatrixT<S> dhn = dlogits * w.unembed;
  MatrixT<S> dx =
      rms_norm_backward(dhn, c.h_final, w.final_norm, c.inv_rms_final, all ? &g.final_norm : nullptr);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& lw = w.layers[static_cast<std::size_t>(l)];
    const auto& lc = c.layers[static_cast<std::size_t>(l)];
    auto& lg = g.layers[static_cast<std::size_t>(l)];

    // FFN branch
    const MatrixT<S> dact = dx * lw.w_down;
    MatrixT<S> dgate(dact.rows(), dact.cols());
    MatrixT<S> dup(dact.rows(), dact.cols());
    for (Eigen::Index i = 0; i < dact.size(); ++i) {
      const S z = lc.gate.data()[i];
      const S sg = sigmoid(z);
      dup.data()[i] = dact.data()[i] * z * sg;
      dgate.data()[i] = dact.data()[i] * lc.up.data()[i] * sg * (S(1) + z * (S(1) - sg));
    }
    if (all) {
      lg.w_down.noalias() = dx.transpose() * lc.act;
      lg.w_gate.noalias() = dgate.transpose() * lc.f_in;
      lg.w_up.noalias() = dup.transpose() * lc.f_in;
    }
    MatrixT<S> df_in = dgate * lw.w_gate;
    df_in.noalias() += dup * lw.w_up;
    MatrixT<S> dmid =
        dx + rms_norm_backward(df_in, lc.mid, lw.ffn_norm, lc.inv_rms2, all ? &lg.ffn_norm : nullptr);

    // attention branch
    const MatrixT<S> dout = dmid * lw.wo;
    if (all) lg.wo.noalias() = dmid.transpose() * lc.o;
    MatrixT<S> dq = MatrixT<S>::Zero(dout.rows(), dout.cols());
    MatrixT<S> dk = MatrixT<S>::Zero(dout.rows(), dout.cols());
    MatrixT<S> dv = MatrixT<S>::Zero(dout.rows(), dout.cols());
    for (int b = 0; b < c.batch; ++b)
      for (int h = 0; h < H; ++h) {
        const MatrixT<S>& P = lc.probs[static_cast<std::size_t>(b * H + h)];
        const auto Q = lc.q.block(b * T, h * hd, T, hd);
        const auto K = lc.k.block(b * T, h * hd, T, hd);
        const auto V = lc.v.block(b * T, h * hd, T, hd);
        const auto dO = dout.block(b * T, h * hd, T, hd);
        MatrixT<S> dS = dO * V.transpose();
        dv.block(b * T, h * hd, T, hd).noalias() = P.transpose() * dO;
        for (int i = 0; i < T; ++i) {
          S dot = 0;
          for (int j = 0; j <= i; ++j) dot += P(i, j) * dS(i, j);
          for (int j = 0; j <= i; ++j) dS(i, j) = P(i, j) * (dS(i, j) - dot) * scale;
          for (int j = i + 1; j < T; ++j) dS(i, j) = S(0);
        }
        dq.block(b * T, h * hd, T, hd).noalias() = dS * K;
        dk.block(b * T, h * hd, T, hd).noalias() = dS.transpose() * Q;
      }
    apply_rope(dq, c.batch, T, H, hd, c.rope, true);
    apply_rope(dk, c.batch, T, H, hd, c.rope, true);
    if (all) {
      lg.wq.noalias() = dq.transpose() * lc.a_in;
      lg.wk.noalias() = dk.transpose() * lc.a_in;
      lg.wv.noalias() = dv.transpose() * lc.a_in;
    }
    MatrixT<S> da_in = dq * lw.wq;
    da_in.noalias() += dk * lw.wk;
    da_in.noalias() += dv * lw.wv;
    dx = dmid + rms_norm_backward(da_in, lc.x, lw.attn_norm, lc.inv_rms1, all ? &lg.attn_norm : nullptr);
  }

  g.embed.setZero(w.embed.rows(), w.embed.cols());
  for (Eigen::Index n = 0; n < dx.rows(); ++n) g.embed.row(ids[static_cast<std::size_t>(n)]) += dx.row(n);
}

template void forward_core<float>(const ModelWeightsT<float>&, const ModelConfig&,
                                  std::span<const TokenId>, int, int, std::span<const Intervention>,
                                  ForwardCache<float>&);
template void forward_core<double>(const ModelWeightsT<double>&, const ModelConfig&,
                                   std::span<const TokenId>, int, int,
                                   std::span<const Intervention>, ForwardCache<double>&);
template float cross_entropy<float>(const ForwardCache<float>&, std::span<const TokenId>,
                                    MatrixT<float>*);
template double cross_entropy<double>(const ForwardCache<double>&, std::span<const TokenId>,
                                      MatrixT<double>*);
template void backward_core<float>(const ModelWeightsT<float>&, const ModelConfig&,
                                   std::span<const TokenId>, const ForwardCache<float>&,
                                   const MatrixT<float>&, ModelWeightsT<float>&, GradScope);
template void backward_core<double>(const ModelWeightsT<double>&, const ModelConfig&,
                                    std::span<const TokenId>, const ForwardCache<double>&,
                                    const MatrixT<double>&, ModelWeightsT<double>&, GradScope);

}  // namespace detail

ForwardTrace forward(const ModelWeights& w, const ModelConfig& cfg, std::span<const TokenId> ids,
                     std::span<const Intervention> interventions, const ForwardOptions& opt) {
  if (ids.empty()) throw Error(ErrorCode::EmptyInput, "forward on empty sequence");
  const int T = static_cast<int>(ids.size());
  if (T > cfg.max_seq)
    throw Error(ErrorCode::SequenceTooLong,
                "sequence of " + std::to_string(T) + " exceeds max_seq " + std::to_string(cfg.max_seq));
  detail::validate_interventions(cfg, T, interventions);

  detail::ForwardCache<float> c;
  detail::forward_core(w, cfg, ids, 1, T, interventions, c);

  ForwardTrace tr;
  tr.hidden.reserve(static_cast<std::size_t>(cfg.n_layers) + 1);
  for (auto& lc : c.layers) {
    tr.hidden.push_back(std::move(lc.x));
    tr.attn_out.push_back(std::move(lc.attn_out));
    tr.ffn_update.push_back(std::move(lc.ffn_update));
    if (opt.keep_attention) tr.attn_weights.push_back(std::move(lc.probs));
  }
  tr.hidden.push_back(std::move(c.h_final));
  tr.logits = std::move(c.logits);
  return tr;
}

TokenIds generate(const ModelWeights& w, const ModelConfig& cfg, std::span<const TokenId> prompt,
                  int max_new, std::span<const Intervention> interventions) {
  if (prompt.empty()) throw Error(ErrorCode::EmptyInput, "generate needs a prompt");
  if (max_new < 0 || static_cast<int>(prompt.size()) + max_new > cfg.max_seq)
    throw Error(ErrorCode::SequenceTooLong, "prompt plus max_new exceeds max_seq");
  TokenIds seq(prompt.begin(), prompt.end());
  TokenIds out;
  detail::ForwardCache<float> c;
  for (int step = 0; step < max_new; ++step) {
    const int T = static_cast<int>(seq.size());
    if (step == 0) detail::validate_interventions(cfg, T, interventions);
    detail::forward_core(w, cfg, seq, 1, T, interventions, c);
    const auto last = c.logits.row(T - 1);
    const TokenId next = argmax(std::span<const float>(last.data(), static_cast<std::size_t>(last.size())));
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

template <typename S>
S batch_loss(const ModelWeightsT<S>& w, const ModelConfig& cfg, const Batch& b) {
  detail::ForwardCache<S> c;
  detail::forward_core(w, cfg, b.inputs, b.batch, b.seq_len, {}, c);
  return detail::cross_entropy<S>(c, b.targets, nullptr);
}

template <typename S>
S batch_loss_and_grad(const ModelWeightsT<S>& w, const ModelConfig& cfg, const Batch& b,
                      ModelWeightsT<S>& grad, GradScope scope) {
  detail::ForwardCache<S> c;
  detail::forward_core(w, cfg, b.inputs, b.batch, b.seq_len, {}, c);
  MatrixT<S> dlogits;
  const S loss = detail::cross_entropy(c, b.targets, &dlogits);
  if (grad.layers.size() != w.layers.size()) grad = ModelWeightsT<S>::zeros(cfg);
  detail::backward_core(w, cfg, b.inputs, c, dlogits, grad, scope);
  return loss;
}

template float batch_loss<float>(const ModelWeightsT<float>&, const ModelConfig&, const Batch&);
template double batch_loss<double>(const ModelWeightsT<double>&, const ModelConfig&, const Batch&);
template float batch_loss_and_grad<float>(const ModelWeightsT<float>&, const ModelConfig&,
                                          const Batch&, ModelWeightsT<float>&, GradScope);
template double batch_loss_and_grad<double>(const ModelWeightsT<double>&, const ModelConfig&,
                                            const Batch&, ModelWeightsT<double>&, GradScope);

}  // namespace lexiscope
