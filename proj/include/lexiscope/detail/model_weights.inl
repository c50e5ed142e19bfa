#pragma once

#include <string>

namespace lexiscope {

template <typename S>
ModelWeightsT<S> ModelWeightsT<S>::zeros(const ModelConfig& c) {
  ModelWeightsT<S> w;
  w.embed = MatrixT<S>::Zero(c.vocab_size, c.d_model);
  w.unembed = MatrixT<S>::Zero(c.vocab_size, c.d_model);
  w.layers.resize(static_cast<std::size_t>(c.n_layers));
  for (auto& l : w.layers) {
    l.attn_norm = VectorT<S>::Zero(c.d_model);
    l.wq = MatrixT<S>::Zero(c.d_model, c.d_model);
    l.wk = MatrixT<S>::Zero(c.d_model, c.d_model);
    l.wv = MatrixT<S>::Zero(c.d_model, c.d_model);
    l.wo = MatrixT<S>::Zero(c.d_model, c.d_model);
    l.ffn_norm = VectorT<S>::Zero(c.d_model);
    l.w_gate = MatrixT<S>::Zero(c.d_ff, c.d_model);
    l.w_up = MatrixT<S>::Zero(c.d_ff, c.d_model);
    l.w_down = MatrixT<S>::Zero(c.d_model, c.d_ff);
  }
  w.final_norm = VectorT<S>::Zero(c.d_model);
  return w;
}

template <typename S>
template <typename T>
ModelWeightsT<T> ModelWeightsT<S>::cast() const {
  ModelWeightsT<T> out;
  out.embed = embed.template cast<T>();
  out.unembed = unembed.template cast<T>();
  out.layers.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    auto& b = out.layers[i];
    b.attn_norm = a.attn_norm.template cast<T>();
    b.wq = a.wq.template cast<T>();
    b.wk = a.wk.template cast<T>();
    b.wv = a.wv.template cast<T>();
    b.wo = a.wo.template cast<T>();
    b.ffn_norm = a.ffn_norm.template cast<T>();
    b.w_gate = a.w_gate.template cast<T>();
    b.w_up = a.w_up.template cast<T>();
    b.w_down = a.w_down.template cast<T>();
  }
  out.final_norm = final_norm.template cast<T>();
  return out;
}

namespace detail {

template <typename W, typename F>
void visit_tensors(W& w, F&& f) {
  f(std::string("embed"), w.embed.data(), static_cast<std::size_t>(w.embed.size()));
  f(std::string("unembed"), w.unembed.data(), static_cast<std::size_t>(w.unembed.size()));
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    f(p + "attn_norm", l.attn_norm.data(), static_cast<std::size_t>(l.attn_norm.size()));
    f(p + "wq", l.wq.data(), static_cast<std::size_t>(l.wq.size()));
    f(p + "wk", l.wk.data(), static_cast<std::size_t>(l.wk.size()));
    f(p + "wv", l.wv.data(), static_cast<std::size_t>(l.wv.size()));
    f(p + "wo", l.wo.data(), static_cast<std::size_t>(l.wo.size()));
    f(p + "ffn_norm", l.ffn_norm.data(), static_cast<std::size_t>(l.ffn_norm.size()));
    f(p + "w_gate", l.w_gate.data(), static_cast<std::size_t>(l.w_gate.size()));
    f(p + "w_up", l.w_up.data(), static_cast<std::size_t>(l.w_up.size()));
    f(p + "w_down", l.w_down.data(), static_cast<std::size_t>(l.w_down.size()));
  }
  f(std::string("final_norm"), w.final_norm.data(), static_cast<std::size_t>(w.final_norm.size()));
}

}  // namespace detail

template <typename S>
template <typename F>
void ModelWeightsT<S>::for_each_tensor(F&& f) {
  detail::visit_tensors(*this, f);
}

template <typename S>
template <typename F>
void ModelWeightsT<S>::for_each_tensor(F&& f) const {
  detail::visit_tensors(*this, f);
}

template <typename S>
std::size_t ModelWeightsT<S>::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const S*, std::size_t size) { n += size; });
  return n;
}

}  // namespace lexiscope
