#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "hfnrv/loss.hpp"
#include "hfnrv/model.hpp"

namespace hfnrv {

enum class OptimizerKind { Adan, Adam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  double base_lr = 3e-3;
  int epochs = 300;
  double warmup_fraction = 0.1;
  int batch_size = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adan;
  bool shuffle = false;
  LossConfig loss;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

/// Linear warmup over round(warmup_fraction·total) steps, then cosine decay
/// reaching 0 at step total−1.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

/// Stateful first-order optimizer over a fixed parameter list.
template <typename T>
class Optimizer {
public:
  virtual ~Optimizer() = default;
  /// Consumes the current grads of every parameter; throws InternalError if
  /// any parameter has none.
  virtual void step(ParameterList<T>& params, double lr) = 0;
};

struct AdanSettings {
  std::array<double, 3> betas{0.98, 0.92, 0.99};
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamSettings {
  std::array<double, 2> betas{0.9, 0.999};
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
class Adan final : public Optimizer<T> {
public:
  explicit Adan(AdanSettings s = {}) : s_(s) {}
  void step(ParameterList<T>& params, double lr) override;

private:
  struct State {
    Vec<T> m, n, v, prev_grad;
  };
  AdanSettings s_;
  std::vector<State> state_;
  long t_ = 0;
};

template <typename T>
class Adam final : public Optimizer<T> {
public:
  explicit Adam(AdamSettings s = {}) : s_(s) {}
  void step(ParameterList<T>& params, double lr) override;

private:
  AdamSettings s_;
  std::vector<Vec<T>> m_, v_;
  long t_ = 0;
};

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind);

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double loss = 0;
  double l_spa = 0;
  double l_fre = 0;
  double psnr = 0;  ///< mean over frames of the training-time reconstructions
  double lr = 0;    ///< lr of the last step in the epoch
};

struct TrainLog {
  std::vector<EpochRecord> records;
  /// One JSON object per line.
  void write_jsonl(std::ostream& os) const;
};

std::string to_jsonl(const EpochRecord& r);

struct TrainResult {
  VideoModel<float> model;
  EmbeddingSet<float> embeddings;
  TrainLog log;
  double final_psnr = 0;  ///< mean PSNR of decode(embeddings) vs frames
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Overfits `model_cfg` to `frames` (each 3×H×W in [0,1]).
TrainResult train_video(const std::vector<Tensor<float>>& frames, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const EpochCallback& on_epoch = {});

/// Runs both encoders without gradient and stacks the per-frame embeddings.
EmbeddingSet<float> encode_all(const VideoModel<float>& model, const std::vector<Tensor<float>>& frames);

/// Clamped reconstruction of every frame.
std::vector<Tensor<float>> decode_all(const EmbeddingSet<float>& embeddings, const Decoder<float>& decoder);

/// Decoder-only training with fixed embeddings (post-pruning fine-tune).
/// Entries of `keep` that are 0 are held at zero; `keep` maps parameter
/// index to a 0/1 mask of the same length, or is empty for unmasked tensors.
void finetune_decoder(ParameterList<float>& decoder_params, const Decoder<float>& decoder,
                      const EmbeddingSet<float>& embeddings, const std::vector<Tensor<float>>& frames,
                      const std::vector<Vec<float>>& keep, int epochs, const TrainConfig& cfg);

}  // namespace hfnrv
