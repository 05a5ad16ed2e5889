#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hfnrv/model.hpp"
#include "hfnrv/tensor.hpp"

namespace hfnrv {

// --- LAMP pruning -----------------------------------------------------------

/// score(w) = w² / Σ{v² : v² ≥ w²} within one tensor. Equal magnitudes share
/// the same denominator. A tensor of zeros scores 0 everywhere.
std::vector<double> lamp_scores(const Vec<float>& weights);

/// Conv weight tensors (rank 4). Biases, norm parameters and ω pairs are
/// never pruned.
bool is_prunable(const Parameter<float>& p);

/// Per-parameter keep bitmaps, aligned with the parameter list they were
/// computed from. Non-prunable tensors carry an empty bitmap.
struct PruneMask {
  std::vector<std::vector<std::uint8_t>> keep;  ///< 1 = kept
  Index prunable = 0;                          ///< weights eligible for pruning
  Index pruned = 0;

  [[nodiscard]] double kept_fraction() const {
    return prunable == 0 ? 1.0 : 1.0 - static_cast<double>(pruned) / static_cast<double>(prunable);
  }
};

/// Zeroes exactly round(ratio·N) of the N prunable weights, the ones with the
/// lowest LAMP scores (ties by parameter order, then position).
PruneMask prune(ParameterList<float>& params, double ratio);

/// All-ones mask for the same parameter list (ratio 0).
PruneMask full_mask(const ParameterList<float>& params);

// --- 8-bit quantization -----------------------------------------------------

/// Per-tensor min-max affine quantization. Value = offset + scale·code with
/// offset = min and scale = (max − min)/255; codes round half to even.
/// `zero_point` is the code nearest to 0.0, kept as metadata.
struct QuantizedTensor {
  Shape shape;
  float scale = 0;
  float offset = 0;
  std::uint8_t zero_point = 0;
  std::vector<std::uint8_t> codes;  ///< one per kept entry, in order

  bool operator==(const QuantizedTensor&) const = default;
};

/// `keep` empty means every entry is quantized.
QuantizedTensor quantize_8bit(const Tensor<float>& t, const std::vector<std::uint8_t>& keep = {});

/// Masked-out entries come back as exactly 0.
Tensor<float> dequantize(const QuantizedTensor& q, const std::vector<std::uint8_t>& keep = {});

/// offset + scale·code evaluated in double (the bound is stated against it).
double dequantized_value(const QuantizedTensor& q, std::uint8_t code);

// --- Huffman ----------------------------------------------------------------

/// Canonical code given by 256 code lengths (0 = unused symbol).
struct HuffmanTable {
  std::array<std::uint8_t, 256> lengths{};
  bool operator==(const HuffmanTable&) const = default;
};

inline constexpr int kMaxCodeLength = 32;

/// Code lengths from symbol frequencies; a single used symbol gets length 1.
HuffmanTable build_huffman(const std::array<std::uint64_t, 256>& freq);
HuffmanTable build_huffman(const std::vector<std::uint8_t>& symbols);

/// MSB-first bit packing, zero-padded to a whole byte.
std::vector<std::uint8_t> huffman_encode(const HuffmanTable& table, const std::vector<std::uint8_t>& symbols,
                                         std::uint64_t* bits = nullptr);

/// Decodes `count` symbols. Errors carry the byte offset at which decoding
/// failed, shifted by `base_offset`.
std::vector<std::uint8_t> huffman_decode(const HuffmanTable& table, const std::uint8_t* data, std::size_t size,
                                         std::size_t count, std::size_t base_offset = 0);

/// Empirical entropy in bits/symbol.
double entropy_bits(const std::vector<std::uint8_t>& symbols);
double mean_code_length(const HuffmanTable& table, const std::vector<std::uint8_t>& symbols);

// --- Rate -------------------------------------------------------------------

double measure_bpp(std::uint64_t stream_bytes, Index frames, Index height, Index width);

}  // namespace hfnrv
