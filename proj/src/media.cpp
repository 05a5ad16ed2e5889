#include "hfnrv/media.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "hfnrv/fft.hpp"
#include "hfnrv/loss.hpp"

namespace hfnrv {

namespace fs = std::filesystem;

namespace {

std::uint8_t quantize_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(255.0f * c));
}

Tensor<float> from_planar_bytes(const std::uint8_t* p, Index C, Index H, Index W) {
  Vec<float> v(C * H * W);
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(p[i]) / 255.0f;
  return Tensor<float>({C, H, W}, std::move(v));
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

VideoSequence load_raw(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "RVID", 4) != 0)
    throw IoError(file.string() + ": not a raw video (missing RVID header)");
  const std::uint64_t T = get_u32(&bytes[4]), H = get_u32(&bytes[8]), W = get_u32(&bytes[12]);
  if (T == 0 || H == 0 || W == 0) throw IoError(file.string() + ": header has a zero dimension");
  const std::uint64_t expect = T * 3 * H * W;
  if (bytes.size() - 16 != expect)
    throw IoError(file.string() + ": header says " + std::to_string(T) + "x3x" + std::to_string(H) + "x" +
                  std::to_string(W) + " (" + std::to_string(expect) + " bytes) but payload has " +
                  std::to_string(bytes.size() - 16));
  VideoSequence seq;
  const std::uint64_t frame = 3 * H * W;
  for (std::uint64_t t = 0; t < T; ++t)
    seq.frames.push_back(from_planar_bytes(bytes.data() + 16 + t * frame, 3, static_cast<Index>(H),
                                           static_cast<Index>(W)));
  return seq;
}

void save_raw(const VideoSequence& seq, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out.write("RVID", 4);
  put_u32(out, static_cast<std::uint32_t>(seq.frames.size()));
  put_u32(out, static_cast<std::uint32_t>(seq.height()));
  put_u32(out, static_cast<std::uint32_t>(seq.width()));
  for (const auto& f : seq.frames) {
    const auto b = to_bytes(f);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }
  if (!out) throw IoError("short write to " + file.string());
}

// Numeric stems first in numeric order, then anything else lexicographically.
bool frame_less(const fs::path& a, const fs::path& b) {
  auto key = [](const fs::path& p) {
    const std::string s = p.stem().string();
    const bool numeric = !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    return std::tuple(!numeric, numeric ? std::stoull(s.size() > 18 ? s.substr(s.size() - 18) : s) : 0ULL, s);
  };
  return key(a) < key(b);
}

}  // namespace

std::vector<std::uint8_t> to_bytes(const Tensor<float>& image) {
  std::vector<std::uint8_t> b(static_cast<std::size_t>(image.size()));
  for (Index i = 0; i < image.size(); ++i) b[static_cast<std::size_t>(i)] = quantize_byte(image.data()[i]);
  return b;
}

Tensor<float> read_png(const fs::path& file) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, file.string().c_str()))
    throw IoError(file.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(file.string() + ": " + msg);
  }
  const Index H = img.height, W = img.width;
  Vec<float> v(3 * H * W);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index c = 0; c < 3; ++c) v[(c * H + y) * W + x] = static_cast<float>(buf[(y * W + x) * 3 + c]) / 255.0f;
  return Tensor<float>({3, H, W}, std::move(v));
}

void write_png(const Tensor<float>& image, const fs::path& file) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
    throw InvalidArgument("write_png: expected 1×H×W or 3×H×W, got " + shape_str(image.shape()));
  const Index C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::vector<png_byte> buf(static_cast<std::size_t>(C * H * W));
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index c = 0; c < C; ++c) buf[(y * W + x) * C + c] = quantize_byte(image.data()[(c * H + y) * W + x]);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = C == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, file.string().c_str(), 0, buf.data(), 0, nullptr))
    throw IoError(file.string() + ": " + img.message);
}

VideoSequence load_frames(const fs::path& path, FrameFormat format) {
  if (format == FrameFormat::Auto) format = fs::is_directory(path) ? FrameFormat::Png : FrameFormat::Raw;
  if (format == FrameFormat::Raw) return load_raw(path);
  if (!fs::is_directory(path)) throw IoError(path.string() + ": not a directory of PNG frames");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  if (files.empty()) throw IoError(path.string() + ": no PNG frames found");
  std::sort(files.begin(), files.end(), frame_less);
  VideoSequence seq;
  for (const auto& f : files) {
    Tensor<float> frame = read_png(f);
    if (!seq.frames.empty() && frame.shape() != seq.frames.front().shape())
      throw IoError(f.string() + ": dims " + shape_str(frame.shape()) + " differ from first frame " +
                    shape_str(seq.frames.front().shape()));
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void save_frames(const VideoSequence& seq, const fs::path& path, FrameFormat format) {
  if (seq.frames.empty()) throw InvalidArgument("save_frames: empty sequence");
  if (format == FrameFormat::Raw) return save_raw(seq, path);
  fs::create_directories(path);
  char name[32];
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    std::snprintf(name, sizeof name, "%06zu.png", t);
    write_png(seq.frames[t], path / name);
  }
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& x) {
  return Tensor<T>(x.shape(), x.data().cwiseMax(T(0)).cwiseMin(T(1)));
}

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape())
    throw InvalidArgument("psnr: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  double se = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x.data()[i]) - static_cast<double>(y.data()[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(x.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

int ms_ssim_scales(Index height, Index width) {
  Index m = std::min(height, width);
  int scales = 0;
  while (scales < 5 && m >= kSsimWindow) {
    ++scales;
    m /= 2;
  }
  return std::max(scales, 1);
}

namespace {

using Plane = RealGrid<double>;

Plane filter_valid(const Plane& p, const std::vector<double>& gy, const std::vector<double>& gx) {
  const Index ky = static_cast<Index>(gy.size()), kx = static_cast<Index>(gx.size());
  Plane tmp(p.rows(), p.cols() - kx + 1);
  for (Index i = 0; i < tmp.rows(); ++i)
    for (Index j = 0; j < tmp.cols(); ++j) {
      double a = 0;
      for (Index b = 0; b < kx; ++b) a += gx[b] * p(i, j + b);
      tmp(i, j) = a;
    }
  Plane out(p.rows() - ky + 1, tmp.cols());
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) {
      double a = 0;
      for (Index k = 0; k < ky; ++k) a += gy[k] * tmp(i + k, j);
      out(i, j) = a;
    }
  return out;
}

// Mean SSIM and mean contrast-structure term of one plane pair.
std::pair<double, double> ssim_cs(const Plane& x, const Plane& y) {
  const auto gy = ssim_window(x.rows()), gx = ssim_window(x.cols());
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  const Plane mx = filter_valid(x, gy, gx), my = filter_valid(y, gy, gx);
  const Plane exx = filter_valid(x.cwiseProduct(x), gy, gx);
  const Plane eyy = filter_valid(y.cwiseProduct(y), gy, gx);
  const Plane exy = filter_valid(x.cwiseProduct(y), gy, gx);
  double s = 0, cs = 0;
  for (Index i = 0; i < mx.size(); ++i) {
    const double a = mx.data()[i], b = my.data()[i];
    const double sxx = exx.data()[i] - a * a, syy = eyy.data()[i] - b * b, sxy = exy.data()[i] - a * b;
    const double c = (2 * sxy + c2) / (sxx + syy + c2);
    cs += c;
    s += c * (2 * a * b + c1) / (a * a + b * b + c1);
  }
  const double n = static_cast<double>(mx.size());
  return {s / n, cs / n};
}

Plane pool2(const Plane& p) {
  Plane out(p.rows() / 2, p.cols() / 2);
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j)
      out(i, j) = 0.25 * (p(2 * i, 2 * j) + p(2 * i, 2 * j + 1) + p(2 * i + 1, 2 * j) + p(2 * i + 1, 2 * j + 1));
  return out;
}

template <typename T>
Plane plane(const Tensor<T>& t, Index c) {
  const Index H = t.dim(1), W = t.dim(2);
  Plane p(H, W);
  for (Index i = 0; i < H * W; ++i) p.data()[i] = static_cast<double>(t.data()[c * H * W + i]);
  return p;
}

}  // namespace

template <typename T>
double ms_ssim(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape())
    throw InvalidArgument("ms_ssim: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  if (x.rank() != 3) throw InvalidArgument("ms_ssim: expected C×H×W, got " + shape_str(x.shape()));
  const int M = ms_ssim_scales(x.dim(1), x.dim(2));
  double wsum = 0;
  for (int j = 0; j < M; ++j) wsum += kMsSsimWeights[j];
  double total = 0;
  for (Index c = 0; c < x.dim(0); ++c) {
    Plane a = plane(x, c), b = plane(y, c);
    double value = 1;
    for (int j = 0; j < M; ++j) {
      const auto [s, cs] = ssim_cs(a, b);
      const double term = std::max(0.0, j == M - 1 ? s : cs);
      value *= std::pow(term, kMsSsimWeights[j] / wsum);
      if (j + 1 < M) {
        a = pool2(a);
        b = pool2(b);
      }
    }
    total += value;
  }
  return total / static_cast<double>(x.dim(0));
}

Tensor<float> freq_map(const Tensor<float>& frame) {
  if (frame.rank() != 3) throw InvalidArgument("freq_map: expected C×H×W, got " + shape_str(frame.shape()));
  const Index C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  RealGrid<double> mag = RealGrid<double>::Zero(H, W);
  for (Index c = 0; c < C; ++c) {
    const RealGrid<double> p = plane(frame, c);
    mag += fft2d<double>(p).cwiseAbs();
  }
  mag /= static_cast<double>(C);
  RealGrid<double> m = fftshift<double>(mag).array().log1p().matrix();
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  Vec<float> v = Vec<float>::Zero(H * W);
  if (hi > lo)
    for (Index i = 0; i < H * W; ++i) v[i] = static_cast<float>((m.data()[i] - lo) / (hi - lo));
  return Tensor<float>({1, H, W}, std::move(v));
}

MetricsReport evaluate(const std::vector<Tensor<float>>& reference, const std::vector<Tensor<float>>& recon) {
  if (reference.size() != recon.size())
    throw InvalidArgument("evaluate: frame count " + std::to_string(reference.size()) + " vs " +
                          std::to_string(recon.size()));
  if (reference.empty()) throw InvalidArgument("evaluate: no frames");
  MetricsReport r;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    if (reference[t].shape() != recon[t].shape())
      throw InvalidArgument("evaluate: frame " + std::to_string(t) + " dims " + shape_str(reference[t].shape()) +
                            " vs " + shape_str(recon[t].shape()));
    FrameMetrics m{psnr(recon[t], reference[t]), ms_ssim(recon[t], reference[t])};
    r.mean_psnr += m.psnr;
    r.mean_ms_ssim += m.ms_ssim;
    r.frames.push_back(m);
  }
  r.mean_psnr /= static_cast<double>(r.frames.size());
  r.mean_ms_ssim /= static_cast<double>(r.frames.size());
  return r;
}

VideoSequence make_fixture(Index frames, Index height, Index width) {
  if (frames <= 0 || height <= 0 || width <= 0) throw InvalidArgument("make_fixture: dims must be positive");
  VideoSequence seq;
  const double pi = std::numbers::pi;
  for (Index t = 0; t < frames; ++t) {
    Vec<float> v(3 * height * width);
    const double tt = static_cast<double>(t);
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) {
        const double u = static_cast<double>(x) / static_cast<double>(width);
        const double w = static_cast<double>(y) / static_cast<double>(height);
        // Smooth background gradient.
        std::array<double, 3> rgb{0.25 + 0.5 * u, 0.3 + 0.4 * w, 0.6 - 0.3 * u * w};
        // Drifting oblique grating in the left half.
        if (u < 0.5) {
          const double g = std::sin(2 * pi * (static_cast<double>(x) / 10.0 + static_cast<double>(y) / 14.0 - tt / 8.0));
          for (double& c : rgb) c += 0.18 * g;
        }
        // Finer horizontal grating band at the bottom right.
        if (u >= 0.5 && w > 0.7) rgb[1] += 0.15 * std::sin(2 * pi * (static_cast<double>(x) / 5.0 + tt / 6.0));
        // Hard-edged moving square and a static bar.
        const double sx = 0.55 * static_cast<double>(width) + 2.0 * tt, sy = 0.15 * static_cast<double>(height) + tt;
        if (x >= sx && x < sx + 18 && y >= sy && y < sy + 18) rgb = {0.95, 0.85, 0.1};
        if (x >= 0.85 * static_cast<double>(width) && x < 0.85 * static_cast<double>(width) + 6 && w < 0.6)
          rgb = {0.05, 0.05, 0.3};
        for (Index c = 0; c < 3; ++c)
          v[(c * height + y) * width + x] = static_cast<float>(std::clamp(rgb[static_cast<std::size_t>(c)], 0.0, 1.0));
      }
    // Store on the 8-bit grid so file round trips are exact.
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(quantize_byte(v[i])) / 255.0f;
    seq.frames.emplace_back(Shape{3, height, width}, std::move(v));
  }
  return seq;
}

template Tensor<float> clamp01(const Tensor<float>&);
template Tensor<double> clamp01(const Tensor<double>&);
template double psnr(const Tensor<float>&, const Tensor<float>&);
template double psnr(const Tensor<double>&, const Tensor<double>&);
template double ms_ssim(const Tensor<float>&, const Tensor<float>&);
template double ms_ssim(const Tensor<double>&, const Tensor<double>&);

}  // namespace hfnrv
