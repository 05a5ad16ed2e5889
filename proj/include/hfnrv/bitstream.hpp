#pragma once

// Container formats.
//
// Compressed stream (little-endian):
//   "HFNR" | u16 version | u32 header_len | header | masks | 256 × u8 code
//   lengths | u32 payload_len | payload | u32 CRC-32 of the payload bytes
// header:
//   u32 json_len | json {model, frames, height, width} | u32 tensor_count |
//   per tensor: u16 name_len | name | u8 ndim | ndim × u32 dims | u8 kind |
//               u32 mask_offset (0xFFFFFFFF = unmasked) | u32 symbols |
//               f32 scale | u8 zero_point | f32 offset
// Masks are packed MSB-first, ceil(n/8) bytes per masked tensor, at
// mask_offset from the start of the mask section. The payload holds the codes
// of all tensors in directory order under one canonical Huffman table.
//
// Model file (unquantized):
//   "HFNM" | u16 version | u32 json_len | json {model, frames, height, width,
//   tensors: [{name, shape, kind}]} | raw f32 values of every tensor in order

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hfnrv/compress.hpp"
#include "hfnrv/model.hpp"

namespace hfnrv {

inline constexpr std::uint16_t kBitstreamVersion = 1;
inline constexpr std::uint16_t kModelFileVersion = 1;
inline constexpr std::uint32_t kNoMask = 0xFFFFFFFFu;

inline constexpr const char* kContentEmbeddingName = "embeddings.content";
inline constexpr const char* kHfEmbeddingName = "embeddings.hf";

enum class TensorKind : std::uint8_t { Weight = 0, Embedding = 1 };

struct StreamTensor {
  std::string name;
  TensorKind kind = TensorKind::Weight;
  std::vector<std::uint8_t> keep;  ///< empty = unmasked
  QuantizedTensor q;
  bool operator==(const StreamTensor&) const = default;
};

struct Bitstream {
  ModelConfig model;
  Index frames = 0, height = 0, width = 0;
  std::vector<StreamTensor> tensors;
  bool operator==(const Bitstream&) const = default;
};

/// Quantizes decoder parameters (masked by `mask`) and both embeddings.
Bitstream build_bitstream(const ModelConfig& cfg, const ParameterList<float>& decoder_params,
                          const EmbeddingSet<float>& embeddings, const PruneMask& mask, Index height, Index width);

std::vector<std::uint8_t> serialize(const Bitstream& b);
/// Throws ParseError (kind + byte offset) on malformed input.
Bitstream parse_bitstream(const std::vector<std::uint8_t>& bytes);

/// Decoder and embeddings rebuilt from the quantized values.
struct DecodedStream {
  DecoderModel<float> model;
  EmbeddingSet<float> embeddings;
  Index height = 0, width = 0;
};
DecodedStream materialize(const Bitstream& b);

/// Payload symbols in directory order.
std::vector<std::uint8_t> payload_symbols(const Bitstream& b);

struct ModelFile {
  ModelConfig model;
  Index frames = 0, height = 0, width = 0;
  std::vector<std::pair<std::string, Tensor<float>>> decoder;
  EmbeddingSet<float> embeddings;
};

std::vector<std::uint8_t> serialize_model(const ModelConfig& cfg, const ParameterList<float>& decoder_params,
                                          const EmbeddingSet<float>& embeddings, Index height, Index width);
ModelFile parse_model(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& p);
/// Writes via a temporary file and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes);

}  // namespace hfnrv
