#include <cmath>
#include <numbers>

#include "lexiscope/error.hpp"
#include "lexiscope/hash.hpp"
#include "lexiscope/model.hpp"

namespace lexiscope {

namespace {

float scheduled_lr(const TrainHyper& h, int step) {
  if (step < h.warmup) return h.lr * static_cast<float>(step + 1) / static_cast<float>(h.warmup);
  const int span = std::max(1, h.steps - h.warmup);
  const double progress = static_cast<double>(step - h.warmup) / span;
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return h.lr * static_cast<float>(h.min_lr_ratio + (1.0 - h.min_lr_ratio) * cosine);
}

bool decays(const std::string& name) {
  // only the projection matrices inside blocks
  return name.find(".w") != std::string::npos;
}

}  // namespace

Batch sample_batch(std::span<const TokenId> corpus, int batch, int seq_len, std::uint64_t& state) {
  if (batch <= 0 || seq_len <= 0) throw Error(ErrorCode::ConfigError, "batch and seq_len must be positive");
  if (corpus.size() < static_cast<std::size_t>(seq_len) + 1)
    throw Error(ErrorCode::EmptyCorpus, "corpus shorter than one training window");
  Batch b;
  b.batch = batch;
  b.seq_len = seq_len;
  b.inputs.reserve(static_cast<std::size_t>(batch * seq_len));
  b.targets.reserve(static_cast<std::size_t>(batch * seq_len));
  const std::uint64_t starts = corpus.size() - static_cast<std::size_t>(seq_len);
  for (int i = 0; i < batch; ++i) {
    const std::size_t s = splitmix64(state) % starts;
    for (int t = 0; t < seq_len; ++t) {
      b.inputs.push_back(corpus[s + static_cast<std::size_t>(t)]);
      b.targets.push_back(corpus[s + static_cast<std::size_t>(t) + 1]);
    }
  }
  return b;
}

TrainResult train(const ModelConfig& config, std::span<const TokenId> corpus, const TrainHyper& hyper,
                  const TrainCallback& on_step) {
  return train(config, init_weights(config), corpus, hyper, on_step);
}

TrainResult train(const ModelConfig& config, ModelWeights initial, std::span<const TokenId> corpus,
                  const TrainHyper& hyper, const TrainCallback& on_step) {
  config.validate();
  check_shapes(initial, config);
  if (hyper.seq_len > config.max_seq) throw Error(ErrorCode::ConfigError, "seq_len exceeds max_seq");
  if (corpus.size() < static_cast<std::size_t>(hyper.seq_len) + 1)
    throw Error(ErrorCode::EmptyCorpus, "corpus yields no full training window");

  TrainResult out{std::move(initial), {}};
  ModelWeights& w = out.weights;
  ModelWeights grad = ModelWeights::zeros(config);
  ModelWeights m = ModelWeights::zeros(config);
  ModelWeights v = ModelWeights::zeros(config);

  std::vector<std::string> names;
  std::vector<float*> params, grads, ms, vs;
  std::vector<std::size_t> sizes;
  w.for_each_tensor([&](const std::string& n, float* p, std::size_t s) {
    names.push_back(n);
    params.push_back(p);
    sizes.push_back(s);
  });
  grad.for_each_tensor([&](const std::string&, float* p, std::size_t) { grads.push_back(p); });
  m.for_each_tensor([&](const std::string&, float* p, std::size_t) { ms.push_back(p); });
  v.for_each_tensor([&](const std::string&, float* p, std::size_t) { vs.push_back(p); });

  std::uint64_t state = hyper.seed;
  const double eps = 1e-8;
  out.loss_curve.reserve(static_cast<std::size_t>(hyper.steps));
  for (int step = 0; step < hyper.steps; ++step) {
    const Batch b = sample_batch(corpus, hyper.batch, hyper.seq_len, state);
    const float loss = batch_loss_and_grad(w, config, b, grad);
    if (!std::isfinite(loss))
      throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite at step " + std::to_string(step));

    double norm2 = 0.0;
    for (std::size_t k = 0; k < grads.size(); ++k)
      for (std::size_t i = 0; i < sizes[k]; ++i) norm2 += static_cast<double>(grads[k][i]) * grads[k][i];
    const double norm = std::sqrt(norm2);
    const double clip = (hyper.grad_clip > 0 && norm > hyper.grad_clip) ? hyper.grad_clip / norm : 1.0;

    const double lr = scheduled_lr(hyper, step);
    const double bc1 = 1.0 - std::pow(static_cast<double>(hyper.beta1), step + 1);
    const double bc2 = 1.0 - std::pow(static_cast<double>(hyper.beta2), step + 1);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const bool wd = hyper.weight_decay > 0 && decays(names[k]);
      for (std::size_t i = 0; i < sizes[k]; ++i) {
        const double g = grads[k][i] * clip;
        ms[k][i] = static_cast<float>(hyper.beta1 * ms[k][i] + (1.0 - hyper.beta1) * g);
        vs[k][i] = static_cast<float>(hyper.beta2 * vs[k][i] + (1.0 - hyper.beta2) * g * g);
        double upd = (ms[k][i] / bc1) / (std::sqrt(vs[k][i] / bc2) + eps);
        if (wd) upd += hyper.weight_decay * params[k][i];
        params[k][i] -= static_cast<float>(lr * upd);
      }
    }
    out.loss_curve.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return out;
}

}  // namespace lexiscope
