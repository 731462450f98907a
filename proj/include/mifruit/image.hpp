#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <variant>
#include <vector>

#include "mifruit/error.hpp"
#include "mifruit/tensor.hpp"

namespace mifruit {

/// 8-bit raster, row-major, channels interleaved.
template <std::size_t Channels>
struct Image {
  static constexpr std::size_t channels = Channels;
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * Channels, fill) {
    require(w > 0 && h > 0, "image dimensions must be positive");
  }

  std::size_t size() const { return width * height; }
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * Channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * Channels + c];
  }
  bool operator==(const Image&) const = default;
};

using GrayImage = Image<1>;
using RgbImage = Image<3>;
/// Two-valued gray image: 0 background, 255 foreground.
using Mask = GrayImage;

inline constexpr std::uint8_t kForeground = 255;

// ---------------------------------------------------------------- PNM codec

namespace detail {

class PnmParser {
 public:
  PnmParser(const std::vector<char>& bytes, std::string source) : b_(bytes), src_(std::move(source)) {}

  std::string magic() {
    if (b_.size() < 2 || b_[0] != 'P' || (b_[1] != '5' && b_[1] != '6'))
      fail(ErrorKind::format_error, src_ + ": unknown image magic (expected binary P5 or P6)");
    pos_ = 2;
    return std::string(b_.data(), 2);
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(static_cast<unsigned char>(b_[pos_])))
      fail(ErrorKind::format_error, src_ + ": missing " + what + " in header");
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_++] - '0');
      if (v > (1u << 24)) fail(ErrorKind::format_error, src_ + ": " + what + " out of range");
    }
    return v;
  }

  /// Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_])))
      fail(ErrorKind::format_error, src_ + ": malformed header terminator");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n' && b_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& b_;
  std::string src_;
  std::size_t pos_ = 0;
};

template <std::size_t C>
Image<C> decode_raster(const std::vector<char>& bytes, std::size_t start, std::size_t w, std::size_t h,
                       const std::string& src) {
  Image<C> img(w, h);
  const std::size_t n = w * h * C;
  if (bytes.size() < start + n)
    fail(ErrorKind::format_error, src + ": short raster data (" + std::to_string(bytes.size() - start) + " of " +
                                      std::to_string(n) + " bytes)");
  std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data()) + start, n, img.pixels.begin());
  return img;
}

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_error, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& header,
                             const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string() + " for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorKind::io_error, "write failed for " + path.string());
}

}  // namespace detail

using AnyImage = std::variant<RgbImage, GrayImage>;

/// Parses binary P6 (RGB) or P5 (gray) data with maxval 255.
inline AnyImage decode_image(const std::vector<char>& bytes, const std::string& source = "image") {
  detail::PnmParser p(bytes, source);
  const auto magic = p.magic();
  const auto w = p.number("width");
  const auto h = p.number("height");
  const auto maxval = p.number("maxval");
  if (w == 0 || h == 0) fail(ErrorKind::format_error, source + ": zero image dimension");
  if (maxval != 255) fail(ErrorKind::format_error, source + ": unsupported maxval " + std::to_string(maxval));
  const auto start = p.raster_start();
  if (magic == "P6") return detail::decode_raster<3>(bytes, start, w, h, source);
  return detail::decode_raster<1>(bytes, start, w, h, source);
}

inline AnyImage read_image(const std::filesystem::path& path) {
  return decode_image(detail::read_file_bytes(path), path.string());
}

inline RgbImage gray_to_rgb(const GrayImage& g) {
  RgbImage out(g.width, g.height);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = g.pixels[i];
  return out;
}

/// Reads any supported image as RGB; gray images are replicated per channel.
inline RgbImage read_rgb(const std::filesystem::path& path) {
  auto img = read_image(path);
  if (auto* rgb = std::get_if<RgbImage>(&img)) return std::move(*rgb);
  return gray_to_rgb(std::get<GrayImage>(img));
}

inline GrayImage read_gray(const std::filesystem::path& path) {
  auto img = read_image(path);
  if (auto* g = std::get_if<GrayImage>(&img)) return std::move(*g);
  fail(ErrorKind::format_error, path.string() + ": expected a P5 gray image");
}

template <std::size_t C>
std::string pnm_header(const Image<C>& img) {
  static_assert(C == 1 || C == 3);
  return std::string(C == 3 ? "P6\n" : "P5\n") + std::to_string(img.width) + " " + std::to_string(img.height) +
         "\n255\n";
}

template <std::size_t C>
std::vector<std::uint8_t> encode_image(const Image<C>& img) {
  const auto header = pnm_header(img);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

template <std::size_t C>
void write_image(const std::filesystem::path& path, const Image<C>& img) {
  detail::write_file_bytes(path, pnm_header(img), img.pixels);
}

// ---------------------------------------------------------------- resampling

/// Bilinear resize with half-pixel centres: src = (i + 0.5) * in / out - 0.5,
/// clamped to the image; results rounded to nearest.
template <std::size_t C>
Image<C> resize_bilinear(const Image<C>& img, std::size_t out_h, std::size_t out_w) {
  require(out_h >= 1 && out_w >= 1, "resize_bilinear: output dimensions must be >= 1");
  if (out_h == img.height && out_w == img.width) return img;
  Image<C> out(out_w, out_h);
  struct Tap {
    std::size_t i0, i1;
    double f;
  };
  auto taps = [](std::size_t in, std::size_t n) {
    std::vector<Tap> t(n);
    const double scale = static_cast<double>(in) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      t[i] = {i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(img.height, out_h), tx = taps(img.width, out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        const auto& a = ty[y];
        const auto& b = tx[x];
        const double top = img.at(b.i0, a.i0, c) * (1.0 - b.f) + img.at(b.i1, a.i0, c) * b.f;
        const double bot = img.at(b.i0, a.i1, c) * (1.0 - b.f) + img.at(b.i1, a.i1, c) * b.f;
        const double v = top * (1.0 - a.f) + bot * a.f;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

/// Channel-first C x H x W tensor with values pixel / 255.
template <typename T, std::size_t C>
Tensor<T> normalize_to_tensor(const Image<C>& img) {
  std::vector<T> d(C * img.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < img.size(); ++i)
      d[c * img.size() + i] = static_cast<T>(img.pixels[i * C + c]) / T(255);
  return Tensor<T>(Shape{C, img.height, img.width}, std::move(d));
}

}  // namespace mifruit
