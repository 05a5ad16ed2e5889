#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hfnrv/tensor.hpp"
#include "hfnrv/wavelet.hpp"

namespace hfnrv {

enum class Activation { Harmonic, Gelu, Sine };
enum class Fusion { Hfm, Concat, Add, InterAttention };
/// Architecture of the branch producing e_h: the wavelet encoder, or a copy
/// of the content-encoder architecture (ablation V2).
enum class HfEncoderKind { Wavelet, Content };

std::string to_string(Activation a);
std::string to_string(Fusion f);
std::string to_string(HfEncoderKind k);
Activation activation_from_string(const std::string& s);
Fusion fusion_from_string(const std::string& s);
HfEncoderKind hf_encoder_from_string(const std::string& s);

struct ModelConfig {
  std::vector<int> content_strides{2, 2, 2, 2};  ///< f
  std::vector<int> hf_strides{2, 2, 2, 2};       ///< g
  int d_c = 8;
  int d_h = 4;
  std::vector<int> decoder_strides{2, 2, 2, 2};
  int base_width = 44;
  double width_reduction = 2.0;
  int min_width = 8;
  int hfm_stage = 0;
  Activation activation = Activation::Harmonic;
  Fusion fusion = Fusion::Hfm;
  bool hf_branch_enabled = true;
  HfEncoderKind hf_encoder = HfEncoderKind::Wavelet;
  int enc_width = 16;         ///< channels of every encoder stage
  int wfd_channels = 8;       ///< output channels of the WFD 1×1 convs
  int convnext_kernel = 3;    ///< depthwise kernel inside ConvNeXt blocks
  int fn_expansion = 2;       ///< hidden = fn_expansion · C inside the HFM feed-forward
  int decoder_kernel = 3;
  int head_kernel = 3;

  bool operator==(const ModelConfig&) const = default;
};

/// Small configuration used by tests and the bundled fixture (64×128 frames).
ModelConfig desk_model_config();
/// Stride layout reported for the 640×1280 Bunny crop; widths kept small.
ModelConfig bunny_model_config();

/// Throws InvalidArgument when the config is inconsistent in itself or with
/// H×W frames (divisibility, stride list lengths, stage indices).
void validate(const ModelConfig& cfg, Index height, Index width);
void validate(const ModelConfig& cfg);

/// Output channels of every decoder stage.
std::vector<int> decoder_widths(const ModelConfig& cfg);

/// Decoder stage whose input resolution is closest (log scale) to e_h's.
int nearest_hfm_stage(const ModelConfig& cfg);

int product(const std::vector<int>& v);

// ---------------------------------------------------------------------------
// Building blocks. Each holds Tensor handles shared with the owning model's
// parameter list.

/// Registers freshly initialised parameters under unique names.
template <typename T>
class ParamFactory {
public:
  ParamFactory(ParameterList<T>& sink, std::uint64_t seed) : sink_(sink), rng_(seed) {}

  /// Uniform in ±1/√fan_in.
  Tensor<T> kaiming(const std::string& name, Shape shape, Index fan_in);
  Tensor<T> constant(const std::string& name, Shape shape, T value);

private:
  Tensor<T> add(const std::string& name, Tensor<T> t);
  ParameterList<T>& sink_;
  std::mt19937_64 rng_;
};

template <typename T>
struct Conv {
  Tensor<T> weight, bias;  // bias may be undefined
  Index stride = 1, padding = 0, groups = 1;

  static Conv make(ParamFactory<T>& pf, const std::string& name, Index in, Index out, Index k,
                   Index stride = 1, Index padding = 0, Index groups = 1, bool with_bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Residual block: depthwise k×k → channel layer norm → 1×1 (×4) → GELU → 1×1.
template <typename T>
struct ConvNeXtBlock {
  Conv<T> depthwise;
  Tensor<T> norm_scale, norm_shift;
  Conv<T> expand, project;

  static ConvNeXtBlock make(ParamFactory<T>& pf, const std::string& name, Index channels,
                            Index kernel);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Conv k×k to C'·r² → pixel shuffle(r) → activation.
template <typename T>
struct HarmonicBlock {
  Conv<T> conv;
  Index factor = 1;
  Activation activation = Activation::Harmonic;
  Tensor<T> omega1, omega2;  // only for Activation::Harmonic

  static HarmonicBlock make(ParamFactory<T>& pf, const std::string& name, Index in, Index out,
                            Index factor, Index kernel, Activation act);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Gated feed-forward: 1×1 expand into two halves, depthwise 3×3 on the
/// first, GELU(first)·second, 1×1 project, residual add.
template <typename T>
struct FeedForward {
  Conv<T> expand, depthwise, project;
  Index hidden = 0;

  static FeedForward make(ParamFactory<T>& pf, const std::string& name, Index channels,
                          Index expansion);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// High-frequency feature modulation: γ = f_a(e_h), β = f_b(e_h), each three
/// 1×1 convs; output FN(γ ⊙ e_c + β).
template <typename T>
struct HfmBlock {
  std::array<Conv<T>, 3> f_a, f_b;
  FeedForward<T> fn;

  static HfmBlock make(ParamFactory<T>& pf, const std::string& name, Index content_channels,
                       Index hf_channels, Index fn_expansion);
  Tensor<T> gamma(const Tensor<T>& hf) const;
  Tensor<T> beta(const Tensor<T>& hf) const;
  Tensor<T> modulate(const Tensor<T>& content, const Tensor<T>& hf) const;
  Tensor<T> operator()(const Tensor<T>& content, const Tensor<T>& hf) const;
};

/// Channel-wise single-head cross attention: queries from the content
/// features, keys/values from the high-frequency features.
template <typename T>
struct InterAttention {
  Conv<T> query, key, value, project;

  static InterAttention make(ParamFactory<T>& pf, const std::string& name, Index content_channels,
                             Index hf_channels);
  Tensor<T> operator()(const Tensor<T>& content, const Tensor<T>& hf) const;
};

/// Fusion of content features with (resized) e_h at one decoder stage.
template <typename T>
struct FusionBlock {
  Fusion kind = Fusion::Hfm;
  std::optional<HfmBlock<T>> hfm;
  std::optional<Conv<T>> projection;  // concat: (C+C_h)→C; add: C_h→C without bias
  std::optional<InterAttention<T>> attention;

  static FusionBlock make(ParamFactory<T>& pf, const std::string& name, Fusion kind,
                          Index content_channels, Index hf_channels, Index fn_expansion);
  Tensor<T> operator()(const Tensor<T>& content, const Tensor<T>& hf) const;
};

template <typename T>
class ContentEncoder {
public:
  ContentEncoder(const ModelConfig& cfg, const std::vector<int>& strides, int out_channels,
                 ParamFactory<T>& pf, const std::string& name);
  Tensor<T> operator()(const Tensor<T>& frame) const;

private:
  std::vector<Conv<T>> down_;
  std::vector<ConvNeXtBlock<T>> blocks_;
  Conv<T> out_;
};

/// Per-stage intermediates of the wavelet encoder, for inspection.
template <typename T>
struct HfTrace {
  std::vector<Tensor<T>> high_raw;  ///< lh+hl+hh fed to each WFD's high conv
  std::vector<Tensor<T>> stage_out;
};

/// Stage 0: E_0 = ConvNeXt(conv(x)); stage i ≥ 1:
/// (F_L_i, F_H_i) = WFD(F_L_{i-1}) with F_L_0 = x, and
/// E_i = ConvNeXt(conv(concat(E_{i-1}, F_H_i))). A final 1×1 conv maps to d_h.
template <typename T>
class WaveletEncoder {
public:
  WaveletEncoder(const ModelConfig& cfg, ParamFactory<T>& pf, const std::string& name);
  Tensor<T> operator()(const Tensor<T>& frame, HfTrace<T>* trace = nullptr) const;

private:
  std::vector<Conv<T>> down_;
  std::vector<ConvNeXtBlock<T>> blocks_;
  std::vector<WfdParams<T>> wfd_;  // wfd_[i-1] feeds stage i
  Conv<T> out_;
};

template <typename T>
class Decoder {
public:
  Decoder(const ModelConfig& cfg, ParamFactory<T>& pf);
  /// e_c: d_c×h×w; e_h: d_h×h'×w' or undefined (fusion skipped). Returns the
  /// unclamped 3×H×W head output.
  Tensor<T> operator()(const Tensor<T>& e_c, const Tensor<T>& e_h) const;

  /// Pre-FN modulated tensor at the fusion stage (HFM fusion only).
  Tensor<T> modulated_features(const Tensor<T>& e_c, const Tensor<T>& e_h) const;
  const std::optional<FusionBlock<T>>& fusion() const { return fusion_; }
  const std::vector<HarmonicBlock<T>>& stages() const { return stages_; }

private:
  Tensor<T> fuse_input(Index stage, const Tensor<T>& x, const Tensor<T>& e_h) const;
  ModelConfig cfg_;
  std::vector<HarmonicBlock<T>> stages_;
  std::optional<FusionBlock<T>> fusion_;
  Conv<T> head_;
};

/// Per-frame content and high-frequency embeddings of a whole video.
template <typename T>
struct EmbeddingSet {
  Tensor<T> e_c;  ///< T×d_c×h×w
  Tensor<T> e_h;  ///< T×d_h×h'×w', undefined when the hf branch is disabled
  [[nodiscard]] Index frames() const { return e_c.defined() ? e_c.dim(0) : 0; }
};

template <typename T>
struct ForwardResult {
  Tensor<T> reconstruction;
  Tensor<T> e_c;
  Tensor<T> e_h;
};

struct ParameterCounts {
  Index content_encoder = 0;
  Index hf_encoder = 0;
  Index decoder = 0;
  [[nodiscard]] Index total() const { return content_encoder + hf_encoder + decoder; }
};

/// Encoders plus decoder. Only the decoder (with embeddings) is kept after
/// training.
template <typename T>
class VideoModel {
public:
  VideoModel(const ModelConfig& cfg, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }

  Tensor<T> content_encode(const Tensor<T>& frame) const;
  /// Undefined tensor when the hf branch is disabled.
  Tensor<T> hf_encode(const Tensor<T>& frame, HfTrace<T>* trace = nullptr) const;
  ForwardResult<T> forward_train(const Tensor<T>& frame) const;

  const Decoder<T>& decoder() const { return *decoder_; }
  ParameterList<T>& parameters() { return all_; }
  const ParameterList<T>& parameters() const { return all_; }
  /// Subset of parameters() belonging to the decoder, in the same order.
  ParameterList<T> decoder_parameters() const;
  ParameterCounts parameter_counts() const;

  /// Deep copy (fresh graph leaves with identical values).
  VideoModel clone() const;

private:
  ModelConfig cfg_;
  ParameterList<T> all_;
  std::size_t content_end_ = 0, hf_end_ = 0;  // boundaries inside all_
  std::optional<ContentEncoder<T>> content_;
  std::optional<WaveletEncoder<T>> wavelet_;
  std::optional<ContentEncoder<T>> hf_content_;
  std::optional<Decoder<T>> decoder_;
};

/// The decoder alone, rebuilt from stored values (bitstream / model file).
template <typename T>
struct DecoderModel {
  ModelConfig config;
  ParameterList<T> params;
  Decoder<T> decoder;

  explicit DecoderModel(const ModelConfig& cfg);
  /// Assigns parameter values by name; every decoder parameter must be given.
  void load(const std::vector<std::pair<std::string, Vec<T>>>& values);
};

/// Frame t of the video: decoder applied to row t of the embeddings.
template <typename T>
Tensor<T> decode(const EmbeddingSet<T>& embeddings, Index t, const Decoder<T>& decoder);

template <typename T>
Index count_elements(const ParameterList<T>& params) {
  Index n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

}  // namespace hfnrv
