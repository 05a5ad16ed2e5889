#include "hfnrv/compress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace hfnrv {

std::vector<double> lamp_scores(const Vec<float>& weights) {
  const std::size_t n = static_cast<std::size_t>(weights.size());
  std::vector<double> sq(n), scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) sq[i] = static_cast<double>(weights[static_cast<Index>(i)]) * weights[static_cast<Index>(i)];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sq[a] < sq[b]; });
  // Walk from the largest magnitude down, one tie group at a time.
  double suffix = 0;
  std::size_t hi = n;
  while (hi > 0) {
    std::size_t lo = hi - 1;
    while (lo > 0 && sq[order[lo - 1]] == sq[order[hi - 1]]) --lo;
    for (std::size_t k = lo; k < hi; ++k) suffix += sq[order[k]];
    for (std::size_t k = lo; k < hi; ++k) scores[order[k]] = suffix > 0 ? sq[order[k]] / suffix : 0.0;
    hi = lo;
  }
  return scores;
}

bool is_prunable(const Parameter<float>& p) { return p.tensor.rank() == 4; }

PruneMask full_mask(const ParameterList<float>& params) {
  PruneMask m;
  for (const auto& p : params) {
    if (is_prunable(p)) {
      m.keep.emplace_back(static_cast<std::size_t>(p.tensor.size()), 1);
      m.prunable += p.tensor.size();
    } else {
      m.keep.emplace_back();
    }
  }
  return m;
}

PruneMask prune(ParameterList<float>& params, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw InvalidArgument("prune ratio must lie in [0, 1), got " + std::to_string(ratio));
  PruneMask m = full_mask(params);
  struct Entry {
    double score;
    std::size_t param;
    Index pos;
  };
  std::vector<Entry> all;
  all.reserve(static_cast<std::size_t>(m.prunable));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!is_prunable(params[i])) continue;
    const auto s = lamp_scores(params[i].tensor.data());
    for (std::size_t k = 0; k < s.size(); ++k) all.push_back({s[k], i, static_cast<Index>(k)});
  }
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(all.size())));
  // Entries are already in (parameter, position) order, so a stable sort on
  // score alone gives the tie order.
  std::stable_sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });
  for (std::size_t j = 0; j < k; ++j) {
    m.keep[all[j].param][static_cast<std::size_t>(all[j].pos)] = 0;
    params[all[j].param].tensor.mutable_data()[all[j].pos] = 0.0f;
  }
  m.pruned = static_cast<Index>(k);
  return m;
}

namespace {

void check_mask(const std::vector<std::uint8_t>& keep, Index size) {
  if (!keep.empty() && static_cast<Index>(keep.size()) != size)
    throw InvalidArgument("mask length " + std::to_string(keep.size()) + " does not match tensor size " +
                          std::to_string(size));
}

}  // namespace

QuantizedTensor quantize_8bit(const Tensor<float>& t, const std::vector<std::uint8_t>& keep) {
  check_mask(keep, t.size());
  QuantizedTensor q;
  q.shape = t.shape();
  const auto& v = t.data();
  auto kept = [&](Index i) { return keep.empty() || keep[static_cast<std::size_t>(i)]; };
  float lo = std::numeric_limits<float>::infinity(), hi = -lo;
  for (Index i = 0; i < v.size(); ++i)
    if (kept(i)) {
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
  if (lo > hi) return q;  // nothing kept
  q.offset = lo;
  q.scale = static_cast<float>((static_cast<double>(hi) - static_cast<double>(lo)) / 255.0);
  if (q.scale > 0.0f) {
    const double zp = std::nearbyint(-static_cast<double>(lo) / q.scale);
    q.zero_point = static_cast<std::uint8_t>(std::clamp(zp, 0.0, 255.0));
  }
  for (Index i = 0; i < v.size(); ++i) {
    if (!kept(i)) continue;
    double code = 0;
    if (q.scale > 0.0f)
      // nearbyint under the default rounding mode is round-half-to-even.
      code = std::nearbyint((static_cast<double>(v[i]) - static_cast<double>(q.offset)) / static_cast<double>(q.scale));
    q.codes.push_back(static_cast<std::uint8_t>(std::clamp(code, 0.0, 255.0)));
  }
  return q;
}

double dequantized_value(const QuantizedTensor& q, std::uint8_t code) {
  return static_cast<double>(q.offset) + static_cast<double>(q.scale) * static_cast<double>(code);
}

Tensor<float> dequantize(const QuantizedTensor& q, const std::vector<std::uint8_t>& keep) {
  const Index n = numel(q.shape);
  check_mask(keep, n);
  Vec<float> v = Vec<float>::Zero(n);
  std::size_t c = 0;
  for (Index i = 0; i < n; ++i) {
    if (!keep.empty() && !keep[static_cast<std::size_t>(i)]) continue;
    if (c >= q.codes.size()) throw InvalidArgument("dequantize: fewer codes than kept entries");
    v[i] = static_cast<float>(dequantized_value(q, q.codes[c++]));
  }
  if (c != q.codes.size()) throw InvalidArgument("dequantize: more codes than kept entries");
  return Tensor<float>(q.shape, std::move(v));
}

// ---------------------------------------------------------------------------

namespace {

std::array<std::uint8_t, 256> huffman_lengths(const std::array<std::uint64_t, 256>& freq) {
  std::array<std::uint8_t, 256> len{};
  struct Node {
    std::uint64_t weight;
    int id;
  };
  auto cmp = [](const Node& a, const Node& b) { return a.weight != b.weight ? a.weight > b.weight : a.id > b.id; };
  std::priority_queue<Node, std::vector<Node>, decltype(cmp)> heap(cmp);
  std::vector<int> parent(512, -1);
  int used = 0;
  for (int s = 0; s < 256; ++s)
    if (freq[static_cast<std::size_t>(s)] > 0) {
      heap.push({freq[static_cast<std::size_t>(s)], s});
      ++used;
    }
  if (used == 0) return len;
  if (used == 1) {
    for (int s = 0; s < 256; ++s)
      if (freq[static_cast<std::size_t>(s)] > 0) len[static_cast<std::size_t>(s)] = 1;
    return len;
  }
  int next = 256;
  while (heap.size() > 1) {
    const Node a = heap.top();
    heap.pop();
    const Node b = heap.top();
    heap.pop();
    parent[static_cast<std::size_t>(a.id)] = next;
    parent[static_cast<std::size_t>(b.id)] = next;
    heap.push({a.weight + b.weight, next++});
  }
  for (int s = 0; s < 256; ++s) {
    if (freq[static_cast<std::size_t>(s)] == 0) continue;
    int depth = 0;
    for (int n = s; parent[static_cast<std::size_t>(n)] != -1; n = parent[static_cast<std::size_t>(n)]) ++depth;
    len[static_cast<std::size_t>(s)] = static_cast<std::uint8_t>(std::min(depth, 255));
  }
  return len;
}

struct Canonical {
  std::array<std::uint32_t, 256> code{};
  std::vector<std::uint8_t> sorted;                  // symbols by (length, value)
  std::array<std::uint32_t, kMaxCodeLength + 1> count{};
};

Canonical canonical(const HuffmanTable& t) {
  Canonical c;
  for (int s = 0; s < 256; ++s) {
    const int l = t.lengths[static_cast<std::size_t>(s)];
    if (l > kMaxCodeLength) throw ParseError(ParseErrorKind::BadCode, 0, "Huffman code length exceeds 32");
    if (l > 0) {
      c.sorted.push_back(static_cast<std::uint8_t>(s));
      ++c.count[static_cast<std::size_t>(l)];
    }
  }
  std::stable_sort(c.sorted.begin(), c.sorted.end(),
                   [&](std::uint8_t a, std::uint8_t b) { return t.lengths[a] < t.lengths[b]; });
  std::uint64_t code = 0;
  int prev = 0;
  for (std::uint8_t s : c.sorted) {
    const int l = t.lengths[s];
    code <<= (l - prev);
    prev = l;
    c.code[s] = static_cast<std::uint32_t>(code);
    ++code;
  }
  if (!c.sorted.empty() && code > (std::uint64_t{1} << prev))
    throw ParseError(ParseErrorKind::BadCode, 0, "Huffman code lengths are over-subscribed");
  return c;
}

}  // namespace

HuffmanTable build_huffman(const std::array<std::uint64_t, 256>& freq) {
  std::array<std::uint64_t, 256> f = freq;
  for (;;) {
    HuffmanTable t;
    t.lengths = huffman_lengths(f);
    if (*std::max_element(t.lengths.begin(), t.lengths.end()) <= kMaxCodeLength) return t;
    // Flatten the distribution until the tree fits the length limit.
    for (auto& x : f)
      if (x > 0) x = (x + 1) / 2;
  }
}

HuffmanTable build_huffman(const std::vector<std::uint8_t>& symbols) {
  std::array<std::uint64_t, 256> f{};
  for (std::uint8_t s : symbols) ++f[s];
  return build_huffman(f);
}

std::vector<std::uint8_t> huffman_encode(const HuffmanTable& table, const std::vector<std::uint8_t>& symbols,
                                         std::uint64_t* bits) {
  const Canonical c = canonical(table);
  std::vector<std::uint8_t> out;
  std::uint64_t acc = 0;
  int filled = 0;
  std::uint64_t total = 0;
  for (std::uint8_t s : symbols) {
    const int l = table.lengths[s];
    if (l == 0) throw InvalidArgument("huffman_encode: symbol " + std::to_string(s) + " has no code");
    acc = (acc << l) | c.code[s];
    filled += l;
    total += static_cast<std::uint64_t>(l);
    while (filled >= 8) {
      out.push_back(static_cast<std::uint8_t>(acc >> (filled - 8)));
      filled -= 8;
    }
    acc &= (std::uint64_t{1} << filled) - 1;
  }
  if (filled > 0) out.push_back(static_cast<std::uint8_t>(acc << (8 - filled)));
  if (bits) *bits = total;
  return out;
}

std::vector<std::uint8_t> huffman_decode(const HuffmanTable& table, const std::uint8_t* data, std::size_t size,
                                         std::size_t count, std::size_t base_offset) {
  const Canonical c = canonical(table);
  std::vector<std::uint8_t> out;
  out.reserve(count);
  if (count > 0 && c.sorted.empty())
    throw ParseError(ParseErrorKind::BadCode, base_offset, "Huffman table is empty but symbols are expected");
  std::size_t bit = 0;
  const std::size_t total_bits = size * 8;
  while (out.size() < count) {
    std::uint64_t code = 0, first = 0;
    std::size_t index = 0;
    bool done = false;
    for (int l = 1; l <= kMaxCodeLength; ++l) {
      if (bit >= total_bits)
        throw ParseError(ParseErrorKind::Truncated, base_offset + size,
                         "payload ended after " + std::to_string(out.size()) + " of " + std::to_string(count) +
                             " symbols");
      code |= (data[bit / 8] >> (7 - bit % 8)) & 1u;
      ++bit;
      const std::uint64_t n = c.count[static_cast<std::size_t>(l)];
      if (code - first < n) {
        out.push_back(c.sorted[index + static_cast<std::size_t>(code - first)]);
        done = true;
        break;
      }
      index += static_cast<std::size_t>(n);
      first = (first + n) << 1;
      code <<= 1;
    }
    if (!done)
      throw ParseError(ParseErrorKind::BadCode, base_offset + (bit - 1) / 8, "invalid Huffman code in payload");
  }
  return out;
}

double entropy_bits(const std::vector<std::uint8_t>& symbols) {
  if (symbols.empty()) return 0;
  std::array<std::uint64_t, 256> f{};
  for (std::uint8_t s : symbols) ++f[s];
  double h = 0;
  const double n = static_cast<double>(symbols.size());
  for (auto x : f)
    if (x > 0) {
      const double p = static_cast<double>(x) / n;
      h -= p * std::log2(p);
    }
  return h;
}

double mean_code_length(const HuffmanTable& table, const std::vector<std::uint8_t>& symbols) {
  if (symbols.empty()) return 0;
  double bits = 0;
  for (std::uint8_t s : symbols) bits += table.lengths[s];
  return bits / static_cast<double>(symbols.size());
}

double measure_bpp(std::uint64_t stream_bytes, Index frames, Index height, Index width) {
  if (frames <= 0 || height <= 0 || width <= 0) throw InvalidArgument("measure_bpp: dims must be positive");
  return 8.0 * static_cast<double>(stream_bytes) /
         (static_cast<double>(frames) * static_cast<double>(height) * static_cast<double>(width));
}

}  // namespace hfnrv
