#include "hfnrv/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "hfnrv/media.hpp"
#include "hfnrv/ops.hpp"

namespace hfnrv {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adan ? "adan" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adan") return OptimizerKind::Adan;
  if (s == "adam") return OptimizerKind::Adam;
  throw InvalidArgument("unknown optimizer '" + s + "'");
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.base_lr > 0.0) || !std::isfinite(cfg.base_lr)) throw InvalidArgument("train.base_lr must be > 0");
  if (cfg.epochs < 0) throw InvalidArgument("train.epochs must be >= 0");
  if (!(cfg.warmup_fraction >= 0.0 && cfg.warmup_fraction < 1.0))
    throw InvalidArgument("train.warmup_fraction must lie in [0, 1)");
  if (cfg.batch_size < 1) throw InvalidArgument("train.batch_size must be >= 1");
  validate(cfg.loss);
}

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0 || step < 0 || step >= total_steps)
    throw InvalidArgument("lr_at: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + ")");
  const long warm = std::lround(cfg.warmup_fraction * static_cast<double>(total_steps));
  if (step < warm) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warm);
  const long span = total_steps - 1 - warm;
  if (span <= 0) return cfg.base_lr;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(span);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

template <typename T>
const Vec<T>& require_grad(const Parameter<T>& p) {
  if (!p.tensor.has_grad()) throw InternalError("optimizer: parameter " + p.name + " has no gradient");
  return p.tensor.node()->grad;
}

}  // namespace

template <typename T>
void Adan<T>::step(ParameterList<T>& params, double lr) {
  if (state_.empty()) state_.resize(params.size());
  if (state_.size() != params.size()) throw InternalError("Adan: parameter list changed size");
  ++t_;
  const double b1 = s_.betas[0], b2 = s_.betas[1], b3 = s_.betas[2];
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double bc3 = 1.0 - std::pow(b3, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Vec<T>& g = require_grad(params[i]);
    State& st = state_[i];
    if (st.m.size() == 0) {
      st.m = Vec<T>::Zero(g.size());
      st.n = Vec<T>::Zero(g.size());
      st.v = Vec<T>::Zero(g.size());
      st.prev_grad = g;
    }
    const Vec<T> diff = g - st.prev_grad;
    st.m = T(b1) * st.m + T(1 - b1) * g;
    st.n = T(b2) * st.n + T(1 - b2) * diff;
    const Vec<T> u = g + T(b2) * diff;
    st.v = T(b3) * st.v + T(1 - b3) * u.square();
    const Vec<T> denom = st.v.sqrt() / T(std::sqrt(bc3)) + T(s_.eps);
    const Vec<T> update = (st.m / T(bc1) + T(b2) * st.n / T(bc2)) / denom;
    Vec<T>& w = params[i].tensor.mutable_data();
    if (s_.weight_decay != 0.0) w *= T(1 - lr * s_.weight_decay);
    w -= T(lr) * update;
    st.prev_grad = g;
  }
}

template <typename T>
void Adam<T>::step(ParameterList<T>& params, double lr) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  if (m_.size() != params.size()) throw InternalError("Adam: parameter list changed size");
  ++t_;
  const double b1 = s_.betas[0], b2 = s_.betas[1];
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Vec<T>& g = require_grad(params[i]);
    if (m_[i].size() == 0) {
      m_[i] = Vec<T>::Zero(g.size());
      v_[i] = Vec<T>::Zero(g.size());
    }
    m_[i] = T(b1) * m_[i] + T(1 - b1) * g;
    v_[i] = T(b2) * v_[i] + T(1 - b2) * g.square();
    Vec<T>& w = params[i].tensor.mutable_data();
    if (s_.weight_decay != 0.0) w *= T(1 - lr * s_.weight_decay);
    w -= T(lr) * (m_[i] / T(bc1)) / ((v_[i] / T(bc2)).sqrt() + T(s_.eps));
  }
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind) {
  if (kind == OptimizerKind::Adan) return std::make_unique<Adan<T>>();
  return std::make_unique<Adam<T>>();
}

template class Adan<float>;
template class Adan<double>;
template class Adam<float>;
template class Adam<double>;
template std::unique_ptr<Optimizer<float>> make_optimizer(OptimizerKind);
template std::unique_ptr<Optimizer<double>> make_optimizer(OptimizerKind);

std::string to_jsonl(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"loss", r.loss}, {"l_spa", r.l_spa},
                   {"l_fre", r.l_fre}, {"psnr", r.psnr}, {"lr", r.lr}};
  return j.dump();
}

void TrainLog::write_jsonl(std::ostream& os) const {
  for (const auto& r : records) os << to_jsonl(r) << '\n';
}

EmbeddingSet<float> encode_all(const VideoModel<float>& model, const std::vector<Tensor<float>>& frames) {
  NoGradGuard no_grad;
  std::vector<Tensor<float>> ec, eh;
  for (const auto& f : frames) {
    ec.push_back(model.content_encode(f));
    if (model.config().hf_branch_enabled) eh.push_back(model.hf_encode(f));
  }
  EmbeddingSet<float> e;
  if (!ec.empty()) e.e_c = stack(ec);
  if (!eh.empty()) e.e_h = stack(eh);
  return e;
}

std::vector<Tensor<float>> decode_all(const EmbeddingSet<float>& embeddings, const Decoder<float>& decoder) {
  NoGradGuard no_grad;
  std::vector<Tensor<float>> out;
  for (Index t = 0; t < embeddings.frames(); ++t) out.push_back(clamp01(decode(embeddings, t, decoder)));
  return out;
}

namespace {

std::vector<std::size_t> frame_order(std::size_t n, bool shuffle, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle)
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

void check_frames(const std::vector<Tensor<float>>& frames) {
  if (frames.empty()) throw InvalidArgument("train: no frames");
  for (const auto& f : frames)
    if (f.shape() != frames.front().shape() || f.rank() != 3 || f.dim(0) != 3)
      throw InvalidArgument("train: frames must all be 3×H×W with equal dims, got " + shape_str(f.shape()));
}

}  // namespace

TrainResult train_video(const std::vector<Tensor<float>>& frames, const ModelConfig& model_cfg,
                        const TrainConfig& cfg, const EpochCallback& on_epoch) {
  check_frames(frames);
  validate(cfg);
  validate(model_cfg, frames.front().dim(1), frames.front().dim(2));

  VideoModel<float> model(model_cfg, cfg.seed);
  TrainLog log;
  auto opt = make_optimizer<float>(cfg.optimizer);
  std::mt19937_64 order_rng(cfg.seed ^ 0x5DEECE66DULL);

  const long T = static_cast<long>(frames.size());
  const long B = cfg.batch_size;
  const long steps_per_epoch = (T + B - 1) / B;
  const long total = steps_per_epoch * cfg.epochs;
  ParameterList<float>& params = model.parameters();

  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = frame_order(frames.size(), cfg.shuffle, order_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (long b = 0; b < steps_per_epoch; ++b) {
      for (auto& p : params) p.tensor.zero_grad();
      const long begin = b * B, end = std::min(T, begin + B);
      const float inv = 1.0f / static_cast<float>(end - begin);
      for (long k = begin; k < end; ++k) {
        const Tensor<float>& x = frames[order[static_cast<std::size_t>(k)]];
        ForwardResult<float> fr = model.forward_train(x);
        LossReport<float> lr = total_loss(fr.reconstruction, x, cfg.loss);
        backward(scale(lr.objective, inv));
        rec.loss += lr.l_total;
        rec.l_spa += lr.l_spa;
        rec.l_fre += lr.l_fre;
        rec.psnr += psnr(clamp01(fr.reconstruction.detach()), x);
      }
      const double rate = lr_at(step++, total, cfg);
      opt->step(params, rate);
      rec.lr = rate;
    }
    rec.loss /= static_cast<double>(T);
    rec.l_spa /= static_cast<double>(T);
    rec.l_fre /= static_cast<double>(T);
    rec.psnr /= static_cast<double>(T);
    log.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  for (auto& p : params) p.tensor.zero_grad();

  EmbeddingSet<float> emb = encode_all(model, frames);
  const auto recon = decode_all(emb, model.decoder());
  double total_psnr = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) total_psnr += psnr(recon[t], frames[t]);
  return TrainResult{std::move(model), std::move(emb), std::move(log),
                     total_psnr / static_cast<double>(frames.size())};
}

void finetune_decoder(ParameterList<float>& params, const Decoder<float>& decoder,
                      const EmbeddingSet<float>& embeddings, const std::vector<Tensor<float>>& frames,
                      const std::vector<Vec<float>>& keep, int epochs, const TrainConfig& cfg) {
  check_frames(frames);
  if (embeddings.frames() != static_cast<Index>(frames.size()))
    throw InvalidArgument("finetune: embedding count does not match frame count");
  if (!keep.empty() && keep.size() != params.size())
    throw InvalidArgument("finetune: mask list does not match parameters");
  if (epochs <= 0) return;
  auto opt = make_optimizer<float>(cfg.optimizer);
  const long T = static_cast<long>(frames.size());
  const long total = T * epochs;
  long step = 0;
  auto apply_masks = [&] {
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i].size() > 0) params[i].tensor.mutable_data() *= keep[i];
  };
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (long t = 0; t < T; ++t) {
      for (auto& p : params) p.tensor.zero_grad();
      Tensor<float> out = decode(embeddings, t, decoder);
      total_loss(out, frames[static_cast<std::size_t>(t)], cfg.loss).objective.backward();
      opt->step(params, lr_at(step++, total, cfg));
      apply_masks();
    }
  }
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace hfnrv
