#include "hfnrv/bitstream.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hfnrv/config.hpp"

namespace hfnrv {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "byte layout assumes a little-endian host");

class Writer {
public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }
  void bytes(const void* p, std::size_t n) { raw(p, n); }
  void str(const std::string& s) { raw(s.data(), s.size()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
public:
  Reader(const std::uint8_t* data, std::size_t size, std::size_t base = 0) : d_(data), n_(size), base_(base) {}
  std::uint8_t u8() { return take<std::uint8_t>(); }
  std::uint16_t u16() { return take<std::uint16_t>(); }
  std::uint32_t u32() { return take<std::uint32_t>(); }
  float f32() { return take<float>(); }
  const std::uint8_t* skip(std::size_t n, const char* what) {
    need(n, what);
    const std::uint8_t* p = d_ + pos_;
    pos_ += n;
    return p;
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }
  [[nodiscard]] std::size_t offset() const { return base_ + pos_; }
  [[nodiscard]] std::size_t remaining() const { return n_ - pos_; }

private:
  template <typename V>
  V take() {
    need(sizeof(V), "field");
    V v;
    std::memcpy(&v, d_ + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  void need(std::size_t n, const char* what) const {
    if (n > n_ - pos_)
      throw ParseError(ParseErrorKind::Truncated, base_ + pos_,
                       std::string("stream truncated while reading ") + what);
  }
  const std::uint8_t* d_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::size_t base_;
};

std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& keep) {
  std::vector<std::uint8_t> out((keep.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return out;
}

std::vector<std::uint8_t> unpack_bits(const std::uint8_t* p, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (p[i / 8] >> (7 - i % 8)) & 1u;
  return out;
}

std::size_t count_kept(const std::vector<std::uint8_t>& keep, Index n) {
  if (keep.empty()) return static_cast<std::size_t>(n);
  std::size_t k = 0;
  for (auto b : keep) k += b;
  return k;
}

json dims_json(const ModelConfig& cfg, Index frames, Index height, Index width) {
  return json{{"model", to_json(cfg)}, {"frames", frames}, {"height", height}, {"width", width}};
}

void read_dims(const json& j, ModelConfig& cfg, Index& frames, Index& height, Index& width, std::size_t at) {
  try {
    cfg = model_config_from_json(j.at("model"));
    frames = j.at("frames").get<Index>();
    height = j.at("height").get<Index>();
    width = j.at("width").get<Index>();
  } catch (const std::exception& e) {
    throw ParseError(ParseErrorKind::Malformed, at, std::string("bad header fields: ") + e.what());
  }
  if (frames <= 0 || height <= 0 || width <= 0)
    throw ParseError(ParseErrorKind::Malformed, at, "header dims must be positive");
}

json parse_json(const std::uint8_t* p, std::size_t n, std::size_t at) {
  try {
    return json::parse(p, p + n);
  } catch (const json::parse_error& e) {
    throw ParseError(ParseErrorKind::Malformed, at, std::string("header JSON: ") + e.what());
  }
}

void check_magic(Reader& r, const char* magic, std::uint16_t version) {
  const std::uint8_t* m = r.skip(4, "magic");
  if (std::memcmp(m, magic, 4) != 0) throw ParseError(ParseErrorKind::BadMagic, 0, std::string("expected magic ") + magic);
  const std::uint16_t v = r.u16();
  if (v != version)
    throw ParseError(ParseErrorKind::BadVersion, 4,
                     "unsupported version " + std::to_string(v) + " (expected " + std::to_string(version) + ")");
}

}  // namespace

Bitstream build_bitstream(const ModelConfig& cfg, const ParameterList<float>& params,
                          const EmbeddingSet<float>& emb, const PruneMask& mask, Index height, Index width) {
  if (mask.keep.size() != params.size()) throw InvalidArgument("build_bitstream: mask does not match parameters");
  Bitstream b;
  b.model = cfg;
  b.frames = emb.frames();
  b.height = height;
  b.width = width;
  for (std::size_t i = 0; i < params.size(); ++i)
    b.tensors.push_back({params[i].name, TensorKind::Weight, mask.keep[i], quantize_8bit(params[i].tensor, mask.keep[i])});
  b.tensors.push_back({kContentEmbeddingName, TensorKind::Embedding, {}, quantize_8bit(emb.e_c)});
  if (emb.e_h.defined()) b.tensors.push_back({kHfEmbeddingName, TensorKind::Embedding, {}, quantize_8bit(emb.e_h)});
  return b;
}

std::vector<std::uint8_t> payload_symbols(const Bitstream& b) {
  std::vector<std::uint8_t> s;
  for (const auto& t : b.tensors) s.insert(s.end(), t.q.codes.begin(), t.q.codes.end());
  return s;
}

std::vector<std::uint8_t> serialize(const Bitstream& b) {
  Writer header;
  const std::string js = dims_json(b.model, b.frames, b.height, b.width).dump();
  header.u32(static_cast<std::uint32_t>(js.size()));
  header.str(js);
  header.u32(static_cast<std::uint32_t>(b.tensors.size()));
  Writer masks;
  for (const auto& t : b.tensors) {
    const Index n = numel(t.q.shape);
    if (t.q.codes.size() != count_kept(t.keep, n))
      throw InvalidArgument("serialize: tensor " + t.name + " has a code count inconsistent with its mask");
    if (t.name.size() > 0xFFFF) throw InvalidArgument("serialize: tensor name too long");
    header.u16(static_cast<std::uint16_t>(t.name.size()));
    header.str(t.name);
    header.u8(static_cast<std::uint8_t>(t.q.shape.size()));
    for (Index d : t.q.shape) header.u32(static_cast<std::uint32_t>(d));
    header.u8(static_cast<std::uint8_t>(t.kind));
    if (t.keep.empty()) {
      header.u32(kNoMask);
    } else {
      header.u32(static_cast<std::uint32_t>(masks.buffer().size()));
      const auto packed = pack_bits(t.keep);
      masks.bytes(packed.data(), packed.size());
    }
    header.u32(static_cast<std::uint32_t>(t.q.codes.size()));
    header.f32(t.q.scale);
    header.u8(t.q.zero_point);
    header.f32(t.q.offset);
  }

  const auto symbols = payload_symbols(b);
  const HuffmanTable table = build_huffman(symbols);
  const auto payload = huffman_encode(table, symbols);

  Writer out;
  out.str("HFNR");
  out.u16(kBitstreamVersion);
  out.u32(static_cast<std::uint32_t>(header.buffer().size()));
  out.bytes(header.buffer().data(), header.buffer().size());
  out.bytes(masks.buffer().data(), masks.buffer().size());
  out.bytes(table.lengths.data(), table.lengths.size());
  out.u32(static_cast<std::uint32_t>(payload.size()));
  out.bytes(payload.data(), payload.size());
  out.u32(crc32_of(payload.data(), payload.size()));
  return std::move(out.buffer());
}

Bitstream parse_bitstream(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  check_magic(r, "HFNR", kBitstreamVersion);
  const std::uint32_t header_len = r.u32();
  const std::size_t header_at = r.pos();
  Reader h(r.skip(header_len, "header"), header_len, header_at);

  Bitstream b;
  const std::uint32_t js_len = h.u32();
  const std::size_t js_at = h.offset();
  const json j = parse_json(h.skip(js_len, "header JSON"), js_len, js_at);
  read_dims(j, b.model, b.frames, b.height, b.width, js_at);

  struct Dir {
    std::uint32_t mask_offset, symbols;
    std::size_t at;
  };
  std::vector<Dir> dir;
  const std::uint32_t count = h.u32();
  std::size_t mask_bytes = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    StreamTensor t;
    const std::size_t at = h.offset();
    const std::uint16_t name_len = h.u16();
    const std::uint8_t* name = h.skip(name_len, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const std::uint8_t ndim = h.u8();
    for (std::uint8_t d = 0; d < ndim; ++d) t.q.shape.push_back(static_cast<Index>(h.u32()));
    const std::uint8_t kind = h.u8();
    if (kind > 1) throw ParseError(ParseErrorKind::Malformed, at, "tensor " + t.name + ": unknown kind");
    t.kind = static_cast<TensorKind>(kind);
    Dir d{h.u32(), h.u32(), at};
    t.q.scale = h.f32();
    t.q.zero_point = h.u8();
    t.q.offset = h.f32();
    if (!std::isfinite(t.q.scale) || !std::isfinite(t.q.offset) || t.q.scale < 0)
      throw ParseError(ParseErrorKind::Malformed, at, "tensor " + t.name + ": bad quantization parameters");
    const Index n = numel(t.q.shape);
    if (d.mask_offset != kNoMask) {
      mask_bytes = std::max(mask_bytes, static_cast<std::size_t>(d.mask_offset) + (static_cast<std::size_t>(n) + 7) / 8);
    } else if (d.symbols != static_cast<std::uint64_t>(n)) {
      throw ParseError(ParseErrorKind::Malformed, at, "tensor " + t.name + ": symbol count does not match shape");
    }
    dir.push_back(d);
    b.tensors.push_back(std::move(t));
  }
  if (h.remaining() != 0) throw ParseError(ParseErrorKind::Malformed, h.offset(), "trailing bytes in header");

  const std::size_t masks_at = r.pos();
  const std::uint8_t* masks = r.skip(mask_bytes, "mask section");
  for (std::size_t i = 0; i < b.tensors.size(); ++i) {
    if (dir[i].mask_offset == kNoMask) continue;
    StreamTensor& t = b.tensors[i];
    t.keep = unpack_bits(masks + dir[i].mask_offset, static_cast<std::size_t>(numel(t.q.shape)));
    if (count_kept(t.keep, numel(t.q.shape)) != dir[i].symbols)
      throw ParseError(ParseErrorKind::Malformed, masks_at + dir[i].mask_offset,
                       "tensor " + t.name + ": mask popcount does not match symbol count");
  }

  HuffmanTable table;
  std::memcpy(table.lengths.data(), r.skip(256, "Huffman table"), 256);
  const std::size_t payload_len = r.u32();
  const std::size_t payload_at = r.pos();
  const std::uint8_t* payload = r.skip(payload_len, "payload");
  const std::uint32_t stored = r.u32();
  if (r.remaining() != 0) throw ParseError(ParseErrorKind::Malformed, r.offset(), "trailing bytes after checksum");
  if (crc32_of(payload, payload_len) != stored)
    throw ParseError(ParseErrorKind::Checksum, payload_at, "payload checksum mismatch");

  std::size_t total = 0;
  for (const auto& d : dir) total += d.symbols;
  try {
    const auto symbols = huffman_decode(table, payload, payload_len, total, payload_at);
    std::size_t k = 0;
    for (std::size_t i = 0; i < b.tensors.size(); ++i) {
      auto& codes = b.tensors[i].q.codes;
      codes.assign(symbols.begin() + static_cast<std::ptrdiff_t>(k),
                   symbols.begin() + static_cast<std::ptrdiff_t>(k + dir[i].symbols));
      k += dir[i].symbols;
    }
  } catch (const ParseError& e) {
    if (e.kind() == ParseErrorKind::BadCode && e.offset() == 0)
      throw ParseError(ParseErrorKind::BadCode, payload_at - 256, e.what());
    throw;
  }
  return b;
}

DecodedStream materialize(const Bitstream& b) {
  validate(b.model, b.height, b.width);
  DecodedStream out{DecoderModel<float>(b.model), {}, b.height, b.width};
  std::vector<std::pair<std::string, Vec<float>>> values;
  for (const auto& t : b.tensors) {
    Tensor<float> v = dequantize(t.q, t.keep);
    if (t.name == kContentEmbeddingName)
      out.embeddings.e_c = v;
    else if (t.name == kHfEmbeddingName)
      out.embeddings.e_h = v;
    else
      values.emplace_back(t.name, v.data());
  }
  out.model.load(values);
  if (!out.embeddings.e_c.defined()) throw InvalidArgument("stream has no content embeddings");
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> serialize_model(const ModelConfig& cfg, const ParameterList<float>& params,
                                          const EmbeddingSet<float>& emb, Index height, Index width) {
  std::vector<std::pair<std::string, const Tensor<float>*>> all;
  std::vector<TensorKind> kinds;
  for (const auto& p : params) {
    all.emplace_back(p.name, &p.tensor);
    kinds.push_back(TensorKind::Weight);
  }
  all.emplace_back(kContentEmbeddingName, &emb.e_c);
  kinds.push_back(TensorKind::Embedding);
  if (emb.e_h.defined()) {
    all.emplace_back(kHfEmbeddingName, &emb.e_h);
    kinds.push_back(TensorKind::Embedding);
  }
  json j = dims_json(cfg, emb.frames(), height, width);
  j["tensors"] = json::array();
  for (std::size_t i = 0; i < all.size(); ++i)
    j["tensors"].push_back({{"name", all[i].first},
                            {"shape", all[i].second->shape()},
                            {"kind", kinds[i] == TensorKind::Weight ? "weight" : "embedding"}});
  const std::string js = j.dump();
  Writer w;
  w.str("HFNM");
  w.u16(kModelFileVersion);
  w.u32(static_cast<std::uint32_t>(js.size()));
  w.str(js);
  for (const auto& [name, t] : all) w.bytes(t->data().data(), static_cast<std::size_t>(t->size()) * sizeof(float));
  return std::move(w.buffer());
}

ModelFile parse_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  check_magic(r, "HFNM", kModelFileVersion);
  const std::uint32_t js_len = r.u32();
  const std::size_t js_at = r.pos();
  const json j = parse_json(r.skip(js_len, "header JSON"), js_len, js_at);
  ModelFile m;
  read_dims(j, m.model, m.frames, m.height, m.width, js_at);
  if (!j.contains("tensors") || !j["tensors"].is_array())
    throw ParseError(ParseErrorKind::Malformed, js_at, "model header has no tensor list");
  for (const auto& e : j["tensors"]) {
    std::string name, kind;
    Shape shape;
    try {
      name = e.at("name").get<std::string>();
      kind = e.at("kind").get<std::string>();
      shape = e.at("shape").get<Shape>();
    } catch (const std::exception& ex) {
      throw ParseError(ParseErrorKind::Malformed, js_at, std::string("bad tensor entry: ") + ex.what());
    }
    const Index n = numel(shape);
    if (n < 0) throw ParseError(ParseErrorKind::Malformed, js_at, "tensor " + name + ": negative dims");
    const std::uint8_t* p = r.skip(static_cast<std::size_t>(n) * sizeof(float), "tensor data");
    Vec<float> v(n);
    std::memcpy(v.data(), p, static_cast<std::size_t>(n) * sizeof(float));
    Tensor<float> t;
    try {
      t = Tensor<float>(shape, std::move(v));
    } catch (const NumericError&) {
      throw ParseError(ParseErrorKind::Malformed, js_at, "tensor " + name + ": non-finite values");
    }
    if (name == kContentEmbeddingName)
      m.embeddings.e_c = t;
    else if (name == kHfEmbeddingName)
      m.embeddings.e_h = t;
    else if (kind == "weight")
      m.decoder.emplace_back(name, t);
    else
      throw ParseError(ParseErrorKind::Malformed, js_at, "unknown tensor " + name);
  }
  if (r.remaining() != 0) throw ParseError(ParseErrorKind::Malformed, r.offset(), "trailing bytes after tensor data");
  if (!m.embeddings.e_c.defined()) throw ParseError(ParseErrorKind::Malformed, js_at, "model file has no embeddings");
  return m;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  const std::filesystem::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace hfnrv
