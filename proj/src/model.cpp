#include "hfnrv/model.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "hfnrv/ops.hpp"

namespace hfnrv {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw InvalidArgument(msg); }

std::string list_str(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

// Uniform [0,1) from the top 53 bits; independent of the standard library's
// distribution implementations.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Harmonic: return "harmonic";
    case Activation::Gelu: return "gelu";
    case Activation::Sine: return "sine";
  }
  return "?";
}

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::Hfm: return "hfm";
    case Fusion::Concat: return "concat";
    case Fusion::Add: return "add";
    case Fusion::InterAttention: return "inter_attention";
  }
  return "?";
}

std::string to_string(HfEncoderKind k) {
  return k == HfEncoderKind::Wavelet ? "wavelet" : "content";
}

Activation activation_from_string(const std::string& s) {
  if (s == "harmonic") return Activation::Harmonic;
  if (s == "gelu") return Activation::Gelu;
  if (s == "sine") return Activation::Sine;
  bad("unknown activation '" + s + "'");
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "hfm") return Fusion::Hfm;
  if (s == "concat") return Fusion::Concat;
  if (s == "add") return Fusion::Add;
  if (s == "inter_attention") return Fusion::InterAttention;
  bad("unknown fusion '" + s + "'");
}

HfEncoderKind hf_encoder_from_string(const std::string& s) {
  if (s == "wavelet") return HfEncoderKind::Wavelet;
  if (s == "content") return HfEncoderKind::Content;
  bad("unknown hf encoder '" + s + "'");
}

int product(const std::vector<int>& v) {
  int p = 1;
  for (int x : v) p *= x;
  return p;
}

ModelConfig desk_model_config() { return ModelConfig{}; }

ModelConfig bunny_model_config() {
  ModelConfig cfg;
  cfg.content_strides = {5, 4, 4, 2, 2};
  cfg.hf_strides = {2, 2, 2, 2, 2};
  cfg.decoder_strides = {5, 4, 4, 2, 2};
  cfg.d_c = 16;
  cfg.d_h = 2;
  cfg.enc_width = 8;
  cfg.wfd_channels = 4;
  cfg.base_width = 32;
  cfg.hfm_stage = nearest_hfm_stage(cfg);
  return cfg;
}

void validate(const ModelConfig& cfg) {
  auto positive = [](const std::vector<int>& v) {
    for (int x : v)
      if (x <= 0) return false;
    return !v.empty();
  };
  if (!positive(cfg.content_strides)) bad("content_strides must be a non-empty list of positive ints");
  if (!positive(cfg.decoder_strides)) bad("decoder_strides must be a non-empty list of positive ints");
  if (cfg.decoder_strides.size() != cfg.content_strides.size())
    bad("decoder_strides " + list_str(cfg.decoder_strides) + " must have as many stages as content_strides " +
        list_str(cfg.content_strides));
  if (product(cfg.decoder_strides) != product(cfg.content_strides))
    bad("decoder_strides " + list_str(cfg.decoder_strides) +
        " must upsample by the content downsample factor " + std::to_string(product(cfg.content_strides)));
  if (cfg.d_c <= 0 || cfg.base_width <= 0 || cfg.min_width <= 0 || cfg.enc_width <= 0)
    bad("channel counts must be positive");
  if (!(cfg.width_reduction >= 1.0)) bad("width_reduction must be >= 1");
  if (cfg.hfm_stage < 0 || cfg.hfm_stage >= static_cast<int>(cfg.decoder_strides.size()))
    bad("hfm_stage " + std::to_string(cfg.hfm_stage) + " outside [0, " +
        std::to_string(cfg.decoder_strides.size()) + ")");
  if (cfg.convnext_kernel <= 0 || cfg.convnext_kernel % 2 == 0) bad("convnext_kernel must be odd");
  if (cfg.decoder_kernel <= 0 || cfg.decoder_kernel % 2 == 0) bad("decoder_kernel must be odd");
  if (cfg.head_kernel <= 0 || cfg.head_kernel % 2 == 0) bad("head_kernel must be odd");
  if (cfg.fn_expansion <= 0) bad("fn_expansion must be positive");
  if (cfg.hf_branch_enabled) {
    if (!positive(cfg.hf_strides)) bad("hf_strides must be a non-empty list of positive ints");
    if (cfg.d_h <= 0) bad("d_h must be positive");
    if (cfg.hf_encoder == HfEncoderKind::Wavelet) {
      if (cfg.wfd_channels <= 0) bad("wfd_channels must be positive");
      // Every WFD halves the running low band, which must line up with the
      // previous stage output.
      for (std::size_t i = 0; i + 1 < cfg.hf_strides.size(); ++i)
        if (cfg.hf_strides[i] != 2)
          bad("hf_strides " + list_str(cfg.hf_strides) +
              ": wavelet chaining requires stride 2 for every stage but the last");
    }
  }
}

void validate(const ModelConfig& cfg, Index height, Index width) {
  validate(cfg);
  const int f = product(cfg.content_strides);
  if (height % f != 0 || width % f != 0)
    bad("frame " + std::to_string(height) + "x" + std::to_string(width) +
        " not divisible by content downsample factor " + std::to_string(f) + " (strides " +
        list_str(cfg.content_strides) + ")");
  if (cfg.hf_branch_enabled) {
    const int g = product(cfg.hf_strides);
    if (height % g != 0 || width % g != 0)
      bad("frame " + std::to_string(height) + "x" + std::to_string(width) +
          " not divisible by high-frequency downsample factor " + std::to_string(g) + " (strides " +
          list_str(cfg.hf_strides) + ")");
  }
}

std::vector<int> decoder_widths(const ModelConfig& cfg) {
  std::vector<int> w;
  double c = cfg.base_width;
  for (std::size_t i = 0; i < cfg.decoder_strides.size(); ++i) {
    w.push_back(std::max(cfg.min_width, static_cast<int>(std::floor(c))));
    c /= cfg.width_reduction;
  }
  return w;
}

int nearest_hfm_stage(const ModelConfig& cfg) {
  // Stage i input scale relative to the frame: prod(decoder[:i]) / prod(f).
  const double target = -std::log(static_cast<double>(product(cfg.hf_strides)));
  double scale = -std::log(static_cast<double>(product(cfg.content_strides)));
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cfg.decoder_strides.size(); ++i) {
    const double d = std::abs(scale - target);
    if (d < best_dist - 1e-12) {
      best_dist = d;
      best = static_cast<int>(i);
    }
    scale += std::log(static_cast<double>(cfg.decoder_strides[i]));
  }
  return best;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> ParamFactory<T>::add(const std::string& name, Tensor<T> t) {
  for (const auto& p : sink_)
    if (p.name == name) throw InternalError("duplicate parameter name " + name);
  sink_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParamFactory<T>::kaiming(const std::string& name, Shape shape, Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Vec<T> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i)
    v[i] = static_cast<T>((2.0 * unit_uniform(rng_) - 1.0) * bound);
  return add(name, Tensor<T>(std::move(shape), std::move(v), true));
}

template <typename T>
Tensor<T> ParamFactory<T>::constant(const std::string& name, Shape shape, T value) {
  return add(name, Tensor<T>::full(std::move(shape), value, true));
}

template <typename T>
Conv<T> Conv<T>::make(ParamFactory<T>& pf, const std::string& name, Index in, Index out, Index k,
                      Index stride, Index padding, Index groups, bool with_bias) {
  Conv c;
  c.weight = pf.kaiming(name + ".weight", {out, in / groups, k, k}, in / groups * k * k);
  if (with_bias) c.bias = pf.constant(name + ".bias", {out}, T(0));
  c.stride = stride;
  c.padding = padding;
  c.groups = groups;
  return c;
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, stride, padding, groups);
}

template <typename T>
ConvNeXtBlock<T> ConvNeXtBlock<T>::make(ParamFactory<T>& pf, const std::string& name,
                                        Index channels, Index kernel) {
  ConvNeXtBlock b;
  b.depthwise = Conv<T>::make(pf, name + ".dwconv", channels, channels, kernel, 1, kernel / 2, channels);
  b.norm_scale = pf.constant(name + ".norm.scale", {channels}, T(1));
  b.norm_shift = pf.constant(name + ".norm.shift", {channels}, T(0));
  b.expand = Conv<T>::make(pf, name + ".pwconv1", channels, 4 * channels, 1);
  b.project = Conv<T>::make(pf, name + ".pwconv2", 4 * channels, channels, 1);
  return b;
}

template <typename T>
Tensor<T> ConvNeXtBlock<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = depthwise(x);
  h = layer_norm_channels(h, norm_scale, norm_shift);
  h = project(gelu(expand(h)));
  return add(x, h);
}

template <typename T>
HarmonicBlock<T> HarmonicBlock<T>::make(ParamFactory<T>& pf, const std::string& name, Index in,
                                        Index out, Index factor, Index kernel, Activation act) {
  HarmonicBlock b;
  b.conv = Conv<T>::make(pf, name + ".conv", in, out * factor * factor, kernel, 1, kernel / 2);
  b.factor = factor;
  b.activation = act;
  if (act == Activation::Harmonic) {
    b.omega1 = pf.constant(name + ".omega1", {1}, T(1));
    b.omega2 = pf.constant(name + ".omega2", {1}, T(0));
  }
  return b;
}

template <typename T>
Tensor<T> HarmonicBlock<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = pixel_shuffle(conv(x), factor);
  switch (activation) {
    case Activation::Harmonic: return harmonic(h, omega1, omega2);
    case Activation::Gelu: return gelu(h);
    case Activation::Sine: return sin(h);
  }
  return h;
}

template <typename T>
FeedForward<T> FeedForward<T>::make(ParamFactory<T>& pf, const std::string& name, Index channels,
                                    Index expansion) {
  FeedForward f;
  f.hidden = channels * expansion;
  f.expand = Conv<T>::make(pf, name + ".project_in", channels, 2 * f.hidden, 1);
  f.depthwise = Conv<T>::make(pf, name + ".dwconv", f.hidden, f.hidden, 3, 1, 1, f.hidden);
  f.project = Conv<T>::make(pf, name + ".project_out", f.hidden, channels, 1);
  return f;
}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = expand(x);
  Tensor<T> gate = gelu(depthwise(slice0(h, 0, hidden)));
  Tensor<T> val = slice0(h, hidden, hidden);
  return add(x, project(mul(gate, val)));
}

template <typename T>
HfmBlock<T> HfmBlock<T>::make(ParamFactory<T>& pf, const std::string& name,
                              Index content_channels, Index hf_channels, Index fn_expansion) {
  HfmBlock b;
  const Index C = content_channels;
  for (int branch = 0; branch < 2; ++branch) {
    auto& net = branch == 0 ? b.f_a : b.f_b;
    const std::string base = name + (branch == 0 ? ".f_a." : ".f_b.");
    net[0] = Conv<T>::make(pf, base + "0", hf_channels, C, 1);
    net[1] = Conv<T>::make(pf, base + "1", C, C, 1);
    net[2] = Conv<T>::make(pf, base + "2", C, C, 1);
    // Identity modulation at initialisation: γ ≡ 1, β ≡ 0.
    net[2].weight.mutable_data().setZero();
    net[2].bias.mutable_data().setConstant(branch == 0 ? T(1) : T(0));
  }
  b.fn = FeedForward<T>::make(pf, name + ".fn", C, fn_expansion);
  return b;
}

template <typename T>
Tensor<T> HfmBlock<T>::gamma(const Tensor<T>& hf) const {
  return f_a[2](gelu(f_a[1](gelu(f_a[0](hf)))));
}

template <typename T>
Tensor<T> HfmBlock<T>::beta(const Tensor<T>& hf) const {
  return f_b[2](gelu(f_b[1](gelu(f_b[0](hf)))));
}

template <typename T>
Tensor<T> HfmBlock<T>::modulate(const Tensor<T>& content, const Tensor<T>& hf) const {
  return add(mul(gamma(hf), content), beta(hf));
}

template <typename T>
Tensor<T> HfmBlock<T>::operator()(const Tensor<T>& content, const Tensor<T>& hf) const {
  return fn(modulate(content, hf));
}

template <typename T>
InterAttention<T> InterAttention<T>::make(ParamFactory<T>& pf, const std::string& name,
                                          Index content_channels, Index hf_channels) {
  InterAttention a;
  a.query = Conv<T>::make(pf, name + ".query", content_channels, content_channels, 1);
  a.key = Conv<T>::make(pf, name + ".key", hf_channels, content_channels, 1);
  a.value = Conv<T>::make(pf, name + ".value", hf_channels, content_channels, 1);
  a.project = Conv<T>::make(pf, name + ".project", content_channels, content_channels, 1);
  return a;
}

template <typename T>
Tensor<T> InterAttention<T>::operator()(const Tensor<T>& content, const Tensor<T>& hf) const {
  const Index C = content.dim(0), N = content.dim(1) * content.dim(2);
  Tensor<T> q = reshape(query(content), {C, N});
  Tensor<T> k = reshape(key(hf), {C, N});
  Tensor<T> v = reshape(value(hf), {C, N});
  Tensor<T> attn = softmax_rows(scale(matmul(q, transpose(k)), T(1) / std::sqrt(static_cast<T>(N))));
  Tensor<T> out = reshape(matmul(attn, v), content.shape());
  return add(content, project(out));
}

template <typename T>
FusionBlock<T> FusionBlock<T>::make(ParamFactory<T>& pf, const std::string& name, Fusion kind,
                                    Index content_channels, Index hf_channels, Index fn_expansion) {
  FusionBlock f;
  f.kind = kind;
  switch (kind) {
    case Fusion::Hfm:
      f.hfm = HfmBlock<T>::make(pf, name, content_channels, hf_channels, fn_expansion);
      break;
    case Fusion::Concat:
      f.projection = Conv<T>::make(pf, name + ".proj", content_channels + hf_channels, content_channels, 1);
      break;
    case Fusion::Add:
      f.projection = Conv<T>::make(pf, name + ".proj", hf_channels, content_channels, 1, 1, 0, 1, false);
      break;
    case Fusion::InterAttention:
      f.attention = InterAttention<T>::make(pf, name, content_channels, hf_channels);
      break;
  }
  return f;
}

template <typename T>
Tensor<T> FusionBlock<T>::operator()(const Tensor<T>& content, const Tensor<T>& hf) const {
  if (content.dim(1) != hf.dim(1) || content.dim(2) != hf.dim(2))
    throw InternalError("fusion: spatial mismatch " + shape_str(content.shape()) + " vs " +
                        shape_str(hf.shape()));
  switch (kind) {
    case Fusion::Hfm: return (*hfm)(content, hf);
    case Fusion::Concat: return (*projection)(concat<T>({content, hf}));
    case Fusion::Add: return add(content, (*projection)(hf));
    case Fusion::InterAttention: return (*attention)(content, hf);
  }
  return content;
}

// ---------------------------------------------------------------------------

template <typename T>
ContentEncoder<T>::ContentEncoder(const ModelConfig& cfg, const std::vector<int>& strides,
                                  int out_channels, ParamFactory<T>& pf, const std::string& name) {
  const Index w = cfg.enc_width;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    const std::string stage = name + ".stage" + std::to_string(i);
    down_.push_back(Conv<T>::make(pf, stage + ".down", i == 0 ? 3 : w, w, strides[i], strides[i]));
    blocks_.push_back(ConvNeXtBlock<T>::make(pf, stage + ".block", w, cfg.convnext_kernel));
  }
  out_ = Conv<T>::make(pf, name + ".out", w, out_channels, 1);
}

template <typename T>
Tensor<T> ContentEncoder<T>::operator()(const Tensor<T>& frame) const {
  Tensor<T> x = frame;
  for (std::size_t i = 0; i < down_.size(); ++i) x = blocks_[i](down_[i](x));
  return out_(x);
}

template <typename T>
WaveletEncoder<T>::WaveletEncoder(const ModelConfig& cfg, ParamFactory<T>& pf,
                                  const std::string& name) {
  const Index w = cfg.enc_width;
  const Index wf = cfg.wfd_channels;
  const std::size_t stages = cfg.hf_strides.size();
  for (std::size_t i = 0; i < stages; ++i) {
    const std::string stage = name + ".stage" + std::to_string(i);
    const int s = cfg.hf_strides[i];
    if (i == 0) {
      down_.push_back(Conv<T>::make(pf, stage + ".down", 3, w, s, s));
    } else {
      const Index in = (i == 1) ? 3 : wf;
      WfdParams<T> p;
      Conv<T> high = Conv<T>::make(pf, stage + ".wfd.high", in, wf, 1);
      p.high_weight = high.weight;
      p.high_bias = high.bias;
      if (i + 1 < stages) {
        Conv<T> low = Conv<T>::make(pf, stage + ".wfd.low", in, wf, 1);
        p.low_weight = low.weight;
        p.low_bias = low.bias;
      }
      wfd_.push_back(std::move(p));
      down_.push_back(Conv<T>::make(pf, stage + ".down", w + wf, w, s, s));
    }
    blocks_.push_back(ConvNeXtBlock<T>::make(pf, stage + ".block", w, cfg.convnext_kernel));
  }
  out_ = Conv<T>::make(pf, name + ".out", w, cfg.d_h, 1);
}

template <typename T>
Tensor<T> WaveletEncoder<T>::operator()(const Tensor<T>& frame, HfTrace<T>* trace) const {
  Tensor<T> e = blocks_[0](down_[0](frame));
  if (trace) trace->stage_out.push_back(e);
  Tensor<T> low = frame;
  for (std::size_t i = 1; i < down_.size(); ++i) {
    WfdOutput<T> parts = wfd(low, wfd_[i - 1]);
    if (trace) trace->high_raw.push_back(parts.high_raw);
    e = blocks_[i](down_[i](concat<T>({e, parts.high})));
    if (trace) trace->stage_out.push_back(e);
    low = parts.low;
  }
  return out_(e);
}

template <typename T>
Decoder<T>::Decoder(const ModelConfig& cfg, ParamFactory<T>& pf) : cfg_(cfg) {
  validate(cfg);
  const std::vector<int> widths = decoder_widths(cfg);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const Index in = i == 0 ? cfg.d_c : widths[i - 1];
    if (cfg.hf_branch_enabled && static_cast<int>(i) == cfg.hfm_stage)
      fusion_ = FusionBlock<T>::make(pf, "decoder.fusion", cfg.fusion, in, cfg.d_h, cfg.fn_expansion);
    stages_.push_back(HarmonicBlock<T>::make(pf, "decoder.stage" + std::to_string(i), in, widths[i],
                                             cfg.decoder_strides[i], cfg.decoder_kernel,
                                             cfg.activation));
  }
  head_ = Conv<T>::make(pf, "decoder.head", widths.back(), 3, cfg.head_kernel, 1, cfg.head_kernel / 2);
}

template <typename T>
Tensor<T> Decoder<T>::fuse_input(Index stage, const Tensor<T>& x, const Tensor<T>& e_h) const {
  if (!fusion_ || !e_h.defined() || stage != cfg_.hfm_stage) return x;
  Tensor<T> h = e_h;
  if (h.dim(1) != x.dim(1) || h.dim(2) != x.dim(2)) h = resize_bilinear(h, x.dim(1), x.dim(2));
  return (*fusion_)(x, h);
}

template <typename T>
Tensor<T> Decoder<T>::operator()(const Tensor<T>& e_c, const Tensor<T>& e_h) const {
  if (e_c.rank() != 3 || e_c.dim(0) != cfg_.d_c)
    throw InvalidArgument("decoder: content embedding must be d_c×h×w, got " + shape_str(e_c.shape()));
  Tensor<T> x = e_c;
  for (std::size_t i = 0; i < stages_.size(); ++i)
    x = stages_[i](fuse_input(static_cast<Index>(i), x, e_h));
  return head_(x);
}

template <typename T>
Tensor<T> Decoder<T>::modulated_features(const Tensor<T>& e_c, const Tensor<T>& e_h) const {
  if (!fusion_ || !fusion_->hfm) throw InvalidArgument("modulated_features: decoder has no HFM block");
  Tensor<T> x = e_c;
  for (Index i = 0; i < cfg_.hfm_stage; ++i) x = stages_[static_cast<std::size_t>(i)](x);
  Tensor<T> h = e_h;
  if (h.dim(1) != x.dim(1) || h.dim(2) != x.dim(2)) h = resize_bilinear(h, x.dim(1), x.dim(2));
  return fusion_->hfm->modulate(x, h);
}

// ---------------------------------------------------------------------------

template <typename T>
VideoModel<T>::VideoModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate(cfg);
  ParamFactory<T> pf(all_, seed);
  content_.emplace(cfg, cfg.content_strides, cfg.d_c, pf, "content_encoder");
  content_end_ = all_.size();
  if (cfg.hf_branch_enabled) {
    if (cfg.hf_encoder == HfEncoderKind::Wavelet)
      wavelet_.emplace(cfg, pf, "hf_encoder");
    else
      hf_content_.emplace(cfg, cfg.hf_strides, cfg.d_h, pf, "hf_encoder");
  }
  hf_end_ = all_.size();
  decoder_.emplace(cfg, pf);
}

template <typename T>
Tensor<T> VideoModel<T>::content_encode(const Tensor<T>& frame) const {
  if (frame.rank() != 3 || frame.dim(0) != 3)
    throw InvalidArgument("content_encode: expected 3×H×W frame, got " + shape_str(frame.shape()));
  validate(cfg_, frame.dim(1), frame.dim(2));
  return (*content_)(frame);
}

template <typename T>
Tensor<T> VideoModel<T>::hf_encode(const Tensor<T>& frame, HfTrace<T>* trace) const {
  if (!cfg_.hf_branch_enabled) return {};
  if (frame.rank() != 3 || frame.dim(0) != 3)
    throw InvalidArgument("hf_encode: expected 3×H×W frame, got " + shape_str(frame.shape()));
  validate(cfg_, frame.dim(1), frame.dim(2));
  if (wavelet_) return (*wavelet_)(frame, trace);
  return (*hf_content_)(frame);
}

template <typename T>
ForwardResult<T> VideoModel<T>::forward_train(const Tensor<T>& frame) const {
  ForwardResult<T> r;
  r.e_c = content_encode(frame);
  r.e_h = hf_encode(frame);
  r.reconstruction = (*decoder_)(r.e_c, r.e_h);
  return r;
}

template <typename T>
ParameterList<T> VideoModel<T>::decoder_parameters() const {
  return ParameterList<T>(all_.begin() + static_cast<std::ptrdiff_t>(hf_end_), all_.end());
}

template <typename T>
ParameterCounts VideoModel<T>::parameter_counts() const {
  ParameterCounts c;
  for (std::size_t i = 0; i < all_.size(); ++i) {
    const Index n = all_[i].tensor.size();
    if (i < content_end_)
      c.content_encoder += n;
    else if (i < hf_end_)
      c.hf_encoder += n;
    else
      c.decoder += n;
  }
  return c;
}

template <typename T>
VideoModel<T> VideoModel<T>::clone() const {
  VideoModel copy(cfg_, 0);
  for (std::size_t i = 0; i < all_.size(); ++i) copy.all_[i].tensor.mutable_data() = all_[i].tensor.data();
  return copy;
}

template <typename T>
DecoderModel<T>::DecoderModel(const ModelConfig& cfg)
    : config(cfg), decoder([&] {
        ParamFactory<T> pf(params, 0);
        return Decoder<T>(cfg, pf);
      }()) {}

template <typename T>
void DecoderModel<T>::load(const std::vector<std::pair<std::string, Vec<T>>>& values) {
  std::map<std::string, const Vec<T>*> by_name;
  for (const auto& [name, v] : values) by_name[name] = &v;
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw InvalidArgument("missing decoder parameter " + p.name);
    if (it->second->size() != p.tensor.size())
      throw InvalidArgument("parameter " + p.name + " has " + std::to_string(it->second->size()) +
                            " values, expected " + std::to_string(p.tensor.size()));
    p.tensor.mutable_data() = *it->second;
  }
}

template <typename T>
Tensor<T> decode(const EmbeddingSet<T>& embeddings, Index t, const Decoder<T>& decoder) {
  if (t < 0 || t >= embeddings.frames())
    throw InvalidArgument("frame index " + std::to_string(t) + " out of range [0, " +
                          std::to_string(embeddings.frames()) + ")");
  Tensor<T> e_c = select0(embeddings.e_c, t);
  Tensor<T> e_h = embeddings.e_h.defined() ? select0(embeddings.e_h, t) : Tensor<T>();
  return decoder(e_c, e_h);
}

#define HFNRV_INSTANTIATE_MODEL(T)                                                      \
  template class ParamFactory<T>;                                                       \
  template struct Conv<T>;                                                              \
  template struct ConvNeXtBlock<T>;                                                     \
  template struct HarmonicBlock<T>;                                                     \
  template struct FeedForward<T>;                                                       \
  template struct HfmBlock<T>;                                                          \
  template struct InterAttention<T>;                                                    \
  template struct FusionBlock<T>;                                                       \
  template class ContentEncoder<T>;                                                     \
  template class WaveletEncoder<T>;                                                     \
  template class Decoder<T>;                                                            \
  template class VideoModel<T>;                                                         \
  template struct DecoderModel<T>;                                                      \
  template Tensor<T> decode(const EmbeddingSet<T>&, Index, const Decoder<T>&);

HFNRV_INSTANTIATE_MODEL(float)
HFNRV_INSTANTIATE_MODEL(double)

}  // namespace hfnrv
