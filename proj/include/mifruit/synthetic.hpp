#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mifruit/dataset.hpp"
#include "mifruit/image.hpp"
#include "mifruit/prng.hpp"

namespace mifruit {

struct SyntheticParams {
  std::size_t image_size = 64;
  std::size_t per_class = 100;
  int background_min = 180, background_max = 235;  // background luminance
  int fruit_min = 60, fruit_max = 120;             // fruit luminance
  double axis_min_frac = 0.22, axis_max_frac = 0.34;  // fruit semi-axes over image size
  int blob_count_min = 1, blob_count_max = 3;
  double blob_radius_min_frac = 0.12, blob_radius_max_frac = 0.25;  // over the fruit's minor semi-axis
  double defect_contrast = 0.3;  // defect colour = fruit colour * contrast
  double corrupt_frac = 0.0;

  void validate() const {
    require(image_size >= 32, "synthetic image size must be at least 32");
    require(per_class >= 1, "per_class must be positive");
    require(0 <= background_min && background_min <= background_max && background_max <= 255,
            "background luminance range must lie in [0, 255]");
    require(0 <= fruit_min && fruit_min <= fruit_max && fruit_max <= 255, "fruit luminance range must lie in [0, 255]");
    require(fruit_max < background_min, "fruit must be darker than the background");
    require(0.0 < axis_min_frac && axis_min_frac <= axis_max_frac && axis_max_frac < 0.4,
            "fruit axis range must satisfy 0 < min <= max < 0.4");
    require(1 <= blob_count_min && blob_count_min <= blob_count_max, "blob count range must be non-empty");
    require(0.0 < blob_radius_min_frac && blob_radius_min_frac <= blob_radius_max_frac && blob_radius_max_frac < 0.5,
            "blob radius range must satisfy 0 < min <= max < 0.5");
    require(defect_contrast > 0.0 && defect_contrast < 1.0, "defect_contrast must lie in (0, 1)");
    require(corrupt_frac >= 0.0 && corrupt_frac <= 1.0, "corrupt_frac must lie in [0, 1]");
  }
};

using Rgb = std::array<std::uint8_t, 3>;

enum class Corruption { none, tiny, clipped };

/// Ground truth for one generated image.
struct SyntheticSample {
  Rgb background{}, fruit{}, defect{};
  Corruption corruption = Corruption::none;
  int blob_count = 0;
};

struct SyntheticCorpus {
  DatasetManifest manifest;
  std::vector<SyntheticSample> samples;  // parallel to manifest.records
};

namespace detail {

struct Ellipse {
  double cx, cy, a, b, theta;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy, c = std::cos(theta), s = std::sin(theta);
    const double u = (dx * c + dy * s) / a, v = (-dx * s + dy * c) / b;
    return u * u + v * v <= 1.0;
  }
  double extent_x() const { return std::hypot(a * std::cos(theta), b * std::sin(theta)); }
  double extent_y() const { return std::hypot(a * std::sin(theta), b * std::cos(theta)); }
};

struct Blob {
  double x, y, r;
  bool contains(double px, double py) const { return (px - x) * (px - x) + (py - y) * (py - y) <= r * r; }
};

inline double rgb_luminance(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

inline std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

inline Rgb fruit_colour(Prng& prng, int lum_min, int lum_max) {
  static constexpr std::array<Rgb, 4> kPalette{{{200, 40, 40}, {120, 180, 50}, {230, 170, 40}, {180, 90, 30}}};
  const Rgb& base = kPalette[prng.below(kPalette.size())];
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = std::max(8.0, base[k] + prng.uniform(-20.0, 20.0));
  const double target = static_cast<double>(prng.range(lum_min, lum_max));
  const double scale = target / (0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]);
  Rgb out{};
  for (int k = 0; k < 3; ++k) out[k] = clamp_byte(c[k] * scale);
  return out;
}

/// Every pixel centre within r + 1.5 of the blob centre lies inside the fruit.
inline bool blob_fits(const Ellipse& fruit, const Blob& blob, double S) {
  const double reach = blob.r + 1.5;
  for (double y = std::floor(blob.y - reach); y <= blob.y + reach; y += 1.0)
    for (double x = std::floor(blob.x - reach); x <= blob.x + reach; x += 1.0) {
      if ((x - blob.x) * (x - blob.x) + (y - blob.y) * (y - blob.y) > reach * reach) continue;
      if (x < 0 || y < 0 || x > S - 1 || y > S - 1 || !fruit.contains(x, y)) return false;
    }
  return true;
}

}  // namespace detail

/// Renders one image and fills its ground truth. Healthy and defective images
/// share the same layout process; defective ones add darker blobs inside the
/// fruit. Corrupted images carry a tiny or border-clipped fruit and no blobs.
inline RgbImage render_synthetic(const SyntheticParams& p, bool defective, Corruption corruption, Prng& prng,
                                 SyntheticSample& truth) {
  const double S = static_cast<double>(p.image_size);
  const int bg_lum = static_cast<int>(prng.range(p.background_min, p.background_max));
  for (int k = 0; k < 3; ++k)
    truth.background[k] = static_cast<std::uint8_t>(std::clamp(bg_lum + static_cast<int>(prng.range(-8, 8)), 0, 255));
  truth.fruit = detail::fruit_colour(prng, p.fruit_min, p.fruit_max);
  for (int k = 0; k < 3; ++k) truth.defect[k] = detail::clamp_byte(truth.fruit[k] * p.defect_contrast);
  truth.corruption = corruption;

  detail::Ellipse fruit{};
  if (corruption == Corruption::tiny) {
    fruit.a = prng.uniform(0.04, 0.07) * S;
    fruit.b = prng.uniform(0.04, 0.07) * S;
    fruit.theta = 0.0;
    fruit.cx = prng.uniform(fruit.a + 3, S - 4 - fruit.a);
    fruit.cy = prng.uniform(fruit.b + 3, S - 4 - fruit.b);
  } else if (corruption == Corruption::clipped) {
    // Centre close to the middle of one edge; corners stay clear.
    fruit.a = prng.uniform(p.axis_min_frac, p.axis_max_frac) * S;
    fruit.b = prng.uniform(p.axis_min_frac, p.axis_max_frac) * S;
    fruit.theta = 0.0;
    const auto side = prng.below(4);
    const double along_x = prng.uniform(fruit.a + 3, S - 4 - fruit.a);
    const double along_y = prng.uniform(fruit.b + 3, S - 4 - fruit.b);
    const double depth_x = prng.uniform(-0.3, 0.3) * fruit.a, depth_y = prng.uniform(-0.3, 0.3) * fruit.b;
    if (side == 0) fruit.cx = depth_x, fruit.cy = along_y;
    if (side == 1) fruit.cx = S - 1 - depth_x, fruit.cy = along_y;
    if (side == 2) fruit.cx = along_x, fruit.cy = depth_y;
    if (side == 3) fruit.cx = along_x, fruit.cy = S - 1 - depth_y;
  } else {
    fruit.a = prng.uniform(p.axis_min_frac, p.axis_max_frac) * S;
    fruit.b = prng.uniform(p.axis_min_frac, p.axis_max_frac) * S;
    fruit.theta = prng.uniform(0.0, std::numbers::pi);
    const double ex = fruit.extent_x(), ey = fruit.extent_y();
    fruit.cx = prng.uniform(ex + 2, S - 3 - ex);
    fruit.cy = prng.uniform(ey + 2, S - 3 - ey);
  }

  std::vector<detail::Blob> blobs;
  if (defective && corruption == Corruption::none) {
    const int count = static_cast<int>(prng.range(p.blob_count_min, p.blob_count_max));
    const double minor = std::min(fruit.a, fruit.b);
    for (int i = 0; i < count; ++i) {
      double r = std::max(2.0, prng.uniform(p.blob_radius_min_frac, p.blob_radius_max_frac) * minor);
      for (int attempt = 0;; ++attempt) {
        if (attempt == 200) {
          r = 2.0;
          attempt = 0;
        }
        const double reach = std::max(fruit.a, fruit.b);
        const detail::Blob b{prng.uniform(fruit.cx - reach, fruit.cx + reach),
                             prng.uniform(fruit.cy - reach, fruit.cy + reach), r};
        if (detail::blob_fits(fruit, b, S)) {
          blobs.push_back(b);
          break;
        }
      }
    }
  }
  truth.blob_count = static_cast<int>(blobs.size());

  RgbImage img(p.image_size, p.image_size);
  for (std::size_t y = 0; y < p.image_size; ++y)
    for (std::size_t x = 0; x < p.image_size; ++x) {
      const double px = static_cast<double>(x), py = static_cast<double>(y);
      const Rgb* c = &truth.background;
      if (fruit.contains(px, py)) {
        c = &truth.fruit;
        for (const auto& b : blobs)
          if (b.contains(px, py)) c = &truth.defect;
      }
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = (*c)[k];
    }
  return img;
}

/// Writes <out>/healthy/healthy_NNNN.ppm, <out>/defective/defective_NNNN.ppm
/// and <out>/manifest.jsonl. Fully determined by params and seed.
inline SyntheticCorpus generate_synthetic(const SyntheticParams& p, std::uint64_t seed,
                                          const std::filesystem::path& out_dir) {
  p.validate();
  std::error_code ec;
  SyntheticCorpus corpus;
  corpus.manifest.base_dir = out_dir;
  corpus.manifest.provenance.source = "synthetic";
  corpus.manifest.provenance.seed = seed;
  Prng prng(seed);

  const auto n_corrupt = static_cast<std::size_t>(std::llround(p.corrupt_frac * static_cast<double>(p.per_class)));
  for (Label label : kLabels) {
    const std::string cls(to_string(label));
    std::filesystem::create_directories(out_dir / cls, ec);
    if (ec) fail(ErrorKind::io_error, "cannot create " + (out_dir / cls).string() + ": " + ec.message());

    std::vector<std::size_t> order(p.per_class);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, prng);
    std::vector<bool> corrupt(p.per_class, false);
    for (std::size_t i = 0; i < n_corrupt; ++i) corrupt[order[i]] = true;

    for (std::size_t i = 0; i < p.per_class; ++i) {
      Corruption kind = Corruption::none;
      if (corrupt[i]) kind = prng.below(2) == 0 ? Corruption::tiny : Corruption::clipped;
      SyntheticSample truth;
      const auto img = render_synthetic(p, label == Label::defective, kind, prng, truth);
      char name[64];
      std::snprintf(name, sizeof name, "%s_%04zu.ppm", cls.c_str(), i);
      const std::string rel = cls + "/" + name;
      write_image(out_dir / rel, img);
      corpus.manifest.records.push_back({rel, "", label, Split::none, "synthetic"});
      corpus.samples.push_back(truth);
    }
  }
  write_manifest(corpus.manifest, out_dir / "manifest.jsonl");
  return corpus;
}

}  // namespace mifruit
