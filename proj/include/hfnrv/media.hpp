#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hfnrv/tensor.hpp"

namespace hfnrv {

struct VideoSequence {
  std::vector<Tensor<float>> frames;  ///< 3×H×W, values in [0,1]
  double fps = 25.0;                  ///< informational only

  [[nodiscard]] Index height() const { return frames.empty() ? 0 : frames.front().dim(1); }
  [[nodiscard]] Index width() const { return frames.empty() ? 0 : frames.front().dim(2); }
};

enum class FrameFormat { Auto, Png, Raw };

/// PNG: a directory of `*.png` files ordered by numeric stem (`%06d.png` when
/// written). Raw: a single file, "RVID" + u32 T, H, W + planar RGB bytes.
/// Auto picks PNG for directories and raw for files.
VideoSequence load_frames(const std::filesystem::path& path, FrameFormat format = FrameFormat::Auto);
void save_frames(const VideoSequence& seq, const std::filesystem::path& path,
                 FrameFormat format = FrameFormat::Png);

/// 8-bit RGB image as a 3×H×W tensor in [0,1].
Tensor<float> read_png(const std::filesystem::path& file);
/// Writes round(255·clamp(x, 0, 1)). 1×H×W is written as grayscale, 3×H×W as RGB.
void write_png(const Tensor<float>& image, const std::filesystem::path& file);

/// Quantises to the 8-bit grid the file formats store.
std::vector<std::uint8_t> to_bytes(const Tensor<float>& image);

template <typename T>
Tensor<T> clamp01(const Tensor<T>& x);

inline constexpr double kPsnrCap = 100.0;

/// 10·log10(1/MSE), capped at 100 dB when MSE < 1e−10.
template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y);

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Number of scales used for H×W: those with min(H, W)/2^j ≥ 11, between 1 and 5.
int ms_ssim_scales(Index height, Index width);

/// Multi-scale SSIM (relu'd contrast-structure terms, 2×2 average pooling,
/// odd remainder dropped), per channel then averaged.
template <typename T>
double ms_ssim(const Tensor<T>& x, const Tensor<T>& y);

/// Log-magnitude spectrum averaged over channels, DC centred, min-max
/// normalised to [0,1]. Returns a 1×H×W tensor.
Tensor<float> freq_map(const Tensor<float>& frame);

struct FrameMetrics {
  double psnr = 0;
  double ms_ssim = 0;
};

struct MetricsReport {
  std::vector<FrameMetrics> frames;
  double mean_psnr = 0;
  double mean_ms_ssim = 0;
};

MetricsReport evaluate(const std::vector<Tensor<float>>& reference, const std::vector<Tensor<float>>& recon);

/// Synthetic test video: drifting sinusoidal gratings, moving hard-edged
/// shapes and smooth colour gradients.
VideoSequence make_fixture(Index frames = 16, Index height = 64, Index width = 128);

}  // namespace hfnrv
