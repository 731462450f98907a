#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mifruit/image.hpp"

namespace mifruit {

struct SilhouetteParams {
  int morph_radius = 1;
  double defect_alpha = 0.5;
  double min_area_frac = 0.05;
  double max_area_frac = 0.90;
  double max_border_contact_frac = 0.05;

  void validate() const {
    require(morph_radius >= 0, "morph_radius must be >= 0");
    require(defect_alpha > 0.0 && defect_alpha < 1.0, "defect_alpha must lie in (0, 1)");
    require(min_area_frac > 0.0 && min_area_frac < max_area_frac && max_area_frac <= 1.0,
            "area fractions must satisfy 0 < min < max <= 1");
    require(max_border_contact_frac >= 0.0 && max_border_contact_frac <= 1.0,
            "max_border_contact_frac must lie in [0, 1]");
  }
};

enum class Verdict { accept, reject };
enum class RejectReason { ok, mask_too_small, mask_too_large, mask_touches_border, degenerate_image };

inline std::string_view to_string(Verdict v) { return v == Verdict::accept ? "accept" : "reject"; }
inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::ok: return "ok";
    case RejectReason::mask_too_small: return "mask_too_small";
    case RejectReason::mask_too_large: return "mask_too_large";
    case RejectReason::mask_touches_border: return "mask_touches_border";
    case RejectReason::degenerate_image: return "degenerate_image";
  }
  return "ok";
}

struct RefinementReport {
  Verdict verdict = Verdict::accept;
  RejectReason reason = RejectReason::ok;
  double area_frac = 0.0;
  double defect_frac = 0.0;

  bool accepted() const { return verdict == Verdict::accept; }
};

/// round(0.299 R + 0.587 G + 0.114 B), clamped to [0, 255].
inline GrayImage luminance(const RgbImage& rgb) {
  GrayImage g(rgb.width, rgb.height);
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const double l = 0.299 * rgb.pixels[3 * i] + 0.587 * rgb.pixels[3 * i + 1] + 0.114 * rgb.pixels[3 * i + 2];
    g.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(l), 0L, 255L));
  }
  return g;
}

/// Threshold maximising between-class variance with class0 = {p <= t}.
/// Scores are compared exactly in integer arithmetic; ties go to the smallest t.
inline std::uint8_t otsu_threshold(const GrayImage& gray) {
  std::array<std::uint64_t, 256> hist{};
  for (auto p : gray.pixels) ++hist[p];
  const auto distinct = std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; });
  if (distinct < 2) fail(ErrorKind::degenerate_image, "otsu_threshold: image has a single gray level");

  using i128 = __int128;
  const std::uint64_t total = gray.pixels.size();
  std::uint64_t total_sum = 0;
  for (std::size_t v = 0; v < 256; ++v) total_sum += v * hist[v];

  // Between-class variance is proportional to (n0*S1 - n1*S0)^2 / (n0*n1).
  i128 best_num = -1, best_den = 1;
  int best_t = 0;
  std::uint64_t n0 = 0, s0 = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += hist[t];
    s0 += static_cast<std::uint64_t>(t) * hist[t];
    const std::uint64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const i128 diff = static_cast<i128>(n0) * static_cast<i128>(total_sum - s0) - static_cast<i128>(n1) * s0;
    const i128 num = diff * diff;
    const i128 den = static_cast<i128>(n0) * n1;
    // num/den > best_num/best_den; the products stay far below 2^127.
    if (best_num < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_t = t;
    }
  }
  return static_cast<std::uint8_t>(best_t);
}

enum class Polarity { fg_above, fg_below };

inline Mask binarize(const GrayImage& gray, std::uint8_t t, Polarity polarity) {
  Mask m(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const bool above = gray.pixels[i] > t;
    m.pixels[i] = (above == (polarity == Polarity::fg_above)) ? kForeground : 0;
  }
  return m;
}

enum class MorphOp { open, close };

namespace detail {

/// Square min (erode) or max (dilate) filter with the window clipped to the
/// image, done as two separable passes.
inline Mask square_filter(const Mask& m, int r, bool erode) {
  const auto W = static_cast<long>(m.width), H = static_cast<long>(m.height);
  Mask tmp(m.width, m.height), out(m.width, m.height);
  auto reduce = [erode](std::uint8_t a, std::uint8_t b) { return erode ? std::min(a, b) : std::max(a, b); };
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      std::uint8_t v = m.pixels[y * W + x];
      for (long u = std::max(0L, x - r); u <= std::min(W - 1, x + r); ++u) v = reduce(v, m.pixels[y * W + u]);
      tmp.pixels[y * W + x] = v;
    }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      std::uint8_t v = tmp.pixels[y * W + x];
      for (long u = std::max(0L, y - r); u <= std::min(H - 1, y + r); ++u) v = reduce(v, tmp.pixels[u * W + x]);
      out.pixels[y * W + x] = v;
    }
  return out;
}

/// 4-connected component labels (0 = not in set), numbered in raster order of
/// each component's first pixel. Returns per-label sizes (index 0 unused).
inline std::vector<std::size_t> label_components(const Mask& m, bool foreground, std::vector<std::uint32_t>& labels) {
  const std::size_t W = m.width, H = m.height;
  labels.assign(W * H, 0);
  std::vector<std::size_t> sizes{0};
  std::vector<std::size_t> stack;
  auto member = [&](std::size_t i) { return (m.pixels[i] != 0) == foreground; };
  for (std::size_t start = 0; start < W * H; ++start) {
    if (!member(start) || labels[start] != 0) continue;
    const auto id = static_cast<std::uint32_t>(sizes.size());
    sizes.push_back(0);
    stack.push_back(start);
    labels[start] = id;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++sizes[id];
      const std::size_t x = i % W, y = i / W;
      auto visit = [&](std::size_t j) {
        if (member(j) && labels[j] == 0) {
          labels[j] = id;
          stack.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < W) visit(i + 1);
      if (y > 0) visit(i - W);
      if (y + 1 < H) visit(i + W);
    }
  }
  return sizes;
}

}  // namespace detail

/// Erosion/dilation with a (2r+1)^2 square. Out-of-image pixels are ignored,
/// so an all-foreground mask is a fixed point of both operations.
inline Mask morph(const Mask& m, MorphOp op, int radius) {
  require(radius >= 0, "morph: radius must be >= 0");
  if (radius == 0) return m;
  if (op == MorphOp::open) return detail::square_filter(detail::square_filter(m, radius, true), radius, false);
  return detail::square_filter(detail::square_filter(m, radius, false), radius, true);
}

/// Keeps the largest 4-connected foreground component; ties go to the
/// component containing the smallest flat index.
inline Mask largest_component(const Mask& m) {
  std::vector<std::uint32_t> labels;
  const auto sizes = detail::label_components(m, true, labels);
  if (sizes.size() < 2) fail(ErrorKind::degenerate_image, "largest_component: mask has no foreground");
  std::uint32_t best = 1;
  for (std::uint32_t id = 2; id < sizes.size(); ++id)
    if (sizes[id] > sizes[best]) best = id;
  Mask out(m.width, m.height);
  for (std::size_t i = 0; i < labels.size(); ++i) out.pixels[i] = labels[i] == best ? kForeground : 0;
  return out;
}

/// Background regions not 4-connected to the image border become foreground.
inline Mask fill_holes(const Mask& m) {
  std::vector<std::uint32_t> labels;
  const auto sizes = detail::label_components(m, false, labels);
  std::vector<bool> touches(sizes.size(), false);
  const std::size_t W = m.width, H = m.height;
  for (std::size_t x = 0; x < W; ++x) touches[labels[x]] = touches[labels[(H - 1) * W + x]] = true;
  for (std::size_t y = 0; y < H; ++y) touches[labels[y * W]] = touches[labels[y * W + W - 1]] = true;
  Mask out = m;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0 && !touches[labels[i]]) out.pixels[i] = kForeground;
  return out;
}

inline double foreground_fraction(const Mask& m) {
  const auto n = std::count_if(m.pixels.begin(), m.pixels.end(), [](auto p) { return p != 0; });
  return static_cast<double>(n) / static_cast<double>(m.size());
}

/// Fraction of the perimeter pixels that are foreground.
inline double border_contact_fraction(const Mask& m) {
  const std::size_t W = m.width, H = m.height;
  std::size_t fg = 0, total = 0;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      if (x != 0 && y != 0 && x + 1 != W && y + 1 != H) continue;
      ++total;
      fg += m.pixels[y * W + x] != 0;
    }
  return static_cast<double>(fg) / static_cast<double>(total);
}

/// Border contact is checked first, then the area bounds.
inline RefinementReport refine_check(const Mask& fruit_mask, const SilhouetteParams& params) {
  RefinementReport r;
  r.area_frac = foreground_fraction(fruit_mask);
  if (border_contact_fraction(fruit_mask) > params.max_border_contact_frac)
    r.reason = RejectReason::mask_touches_border;
  else if (r.area_frac < params.min_area_frac)
    r.reason = RejectReason::mask_too_small;
  else if (r.area_frac > params.max_area_frac)
    r.reason = RejectReason::mask_too_large;
  r.verdict = r.reason == RejectReason::ok ? Verdict::accept : Verdict::reject;
  return r;
}

/// Background polarity from the four corner pixels; a 2-2 split falls back to
/// the majority of all border pixels, then to a bright background.
inline Polarity foreground_polarity(const GrayImage& gray, std::uint8_t t) {
  const std::size_t W = gray.width, H = gray.height;
  const int corners_above = (gray.at(0, 0) > t) + (gray.at(W - 1, 0) > t) + (gray.at(0, H - 1) > t) +
                            (gray.at(W - 1, H - 1) > t);
  if (corners_above != 2) return corners_above > 2 ? Polarity::fg_below : Polarity::fg_above;
  std::size_t above = 0, total = 0;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      if (x != 0 && y != 0 && x + 1 != W && y + 1 != H) continue;
      ++total;
      above += gray.at(x, y) > t;
    }
  return 2 * above >= total ? Polarity::fg_below : Polarity::fg_above;
}

struct SilhouetteResult {
  GrayImage silhouette;
  Mask fruit_mask;
  RefinementReport report;
};

/// White fruit on black with defects (pixels darker than alpha times the mean
/// fruit luminance) rendered black, plus the refinement verdict.
inline SilhouetteResult extract_silhouette(const RgbImage& rgb, const SilhouetteParams& params = {}) {
  params.validate();
  SilhouetteResult res{GrayImage(rgb.width, rgb.height), Mask(rgb.width, rgb.height), {}};
  const GrayImage gray = luminance(rgb);
  try {
    const auto t = otsu_threshold(gray);
    Mask m = binarize(gray, t, foreground_polarity(gray, t));
    m = morph(morph(m, MorphOp::open, params.morph_radius), MorphOp::close, params.morph_radius);
    res.fruit_mask = fill_holes(largest_component(m));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::degenerate_image) throw;
    res.report = {Verdict::reject, RejectReason::degenerate_image, 0.0, 0.0};
    return res;
  }
  res.report = refine_check(res.fruit_mask, params);

  std::uint64_t sum = 0, count = 0;
  for (std::size_t i = 0; i < gray.size(); ++i)
    if (res.fruit_mask.pixels[i]) {
      sum += gray.pixels[i];
      ++count;
    }
  const double cutoff = params.defect_alpha * static_cast<double>(sum) / static_cast<double>(count);
  std::size_t defects = 0;
  for (std::size_t i = 0; i < gray.size(); ++i) {
    if (!res.fruit_mask.pixels[i]) continue;
    if (gray.pixels[i] < cutoff) {
      ++defects;
    } else {
      res.silhouette.pixels[i] = kForeground;
    }
  }
  res.report.defect_frac = static_cast<double>(defects) / static_cast<double>(count);
  return res;
}

}  // namespace mifruit
