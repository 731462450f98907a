#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "mifruit/prng.hpp"
#include "mifruit/silhouette.hpp"

using namespace mifruit;

namespace {

Mask mask_from(std::size_t w, std::size_t h, const std::vector<int>& bits) {
  Mask m(w, h);
  for (std::size_t i = 0; i < bits.size(); ++i) m.pixels[i] = bits[i] ? 255 : 0;
  return m;
}

std::size_t count_fg(const Mask& m) {
  return static_cast<std::size_t>(std::count(m.pixels.begin(), m.pixels.end(), 255));
}

Mask disk(std::size_t w, std::size_t h, double cx, double cy, double r) {
  Mask m(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = 255;
  return m;
}

Mask random_mask(std::size_t w, std::size_t h, double p, Prng& prng) {
  Mask m(w, h);
  for (auto& v : m.pixels) v = prng.uniform01() < p ? 255 : 0;
  return m;
}

// Scene of uniform gray levels: background, disk, optional inner blob.
RgbImage scene(std::uint8_t bg, std::uint8_t fruit, int blob_r, std::uint8_t blob) {
  RgbImage img(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      const double dx = x - 15.5, dy = y - 15.5, d2 = dx * dx + dy * dy;
      std::uint8_t v = bg;
      if (d2 <= 100.0) v = fruit;
      if (d2 <= blob_r * blob_r) v = blob;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
    }
  return img;
}

// Between-class variance over the histogram in floating point, all thresholds.
int brute_force_otsu(const GrayImage& g) {
  std::vector<double> score(256, -1.0);
  const double n = static_cast<double>(g.size());
  for (int t = 0; t < 256; ++t) {
    double n0 = 0, s0 = 0, n1 = 0, s1 = 0;
    for (auto p : g.pixels)
      if (p <= t) {
        n0 += 1;
        s0 += p;
      } else {
        n1 += 1;
        s1 += p;
      }
    if (n0 == 0 || n1 == 0) continue;
    const double w0 = n0 / n, w1 = n1 / n, m0 = s0 / n0, m1 = s1 / n1;
    score[t] = w0 * w1 * (m0 - m1) * (m0 - m1);
  }
  const double best = *std::max_element(score.begin(), score.end());
  for (int t = 0; t < 256; ++t)
    if (score[t] >= best * (1.0 - 1e-12)) return t;
  return -1;
}

}  // namespace

// ---------------------------------------------------------------- luminance

TEST(Luminance, Examples) {
  RgbImage img(3, 1);
  const std::uint8_t px[] = {255, 255, 255, 0, 0, 0, 255, 0, 0};
  std::copy(std::begin(px), std::end(px), img.pixels.begin());
  auto g = luminance(img);
  EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{255, 0, 76}));
}

// ---------------------------------------------------------------- otsu

TEST(Otsu, TwoLevelImageTiesToSmallest) {
  GrayImage g(4, 2);
  for (std::size_t i = 0; i < 8; ++i) g.pixels[i] = i < 4 ? 0 : 255;
  EXPECT_EQ(otsu_threshold(g), 0);
}

TEST(Otsu, NineAndSeven) {
  GrayImage g(4, 4);
  for (std::size_t i = 0; i < 16; ++i) g.pixels[i] = i < 9 ? 50 : 200;
  EXPECT_EQ(otsu_threshold(g), 50);
}

TEST(Otsu, ConstantImageIsDegenerate) {
  GrayImage g(5, 5, 77);
  try {
    otsu_threshold(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_image);
  }
}

TEST(Otsu, MatchesBruteForceOnRandomImages) {
  Prng p(31);
  for (int trial = 0; trial < 60; ++trial) {
    GrayImage g(9 + trial % 5, 7);
    const int levels = 2 + trial % 6;
    std::vector<std::uint8_t> palette(levels);
    for (auto& v : palette) v = static_cast<std::uint8_t>(p.below(256));
    for (auto& v : g.pixels) v = palette[p.below(levels)];
    if (std::all_of(g.pixels.begin(), g.pixels.end(), [&](auto v) { return v == g.pixels[0]; })) continue;
    EXPECT_EQ(otsu_threshold(g), brute_force_otsu(g)) << "trial " << trial;
  }
}

// ---------------------------------------------------------------- binarize

TEST(Binarize, Polarity) {
  GrayImage g(1, 1, 200);
  EXPECT_EQ(binarize(g, 127, Polarity::fg_above).pixels[0], 255);
  EXPECT_EQ(binarize(g, 127, Polarity::fg_below).pixels[0], 0);
}

TEST(Binarize, InvertingPolarityComplements) {
  Prng p(32);
  GrayImage g(13, 11);
  for (auto& v : g.pixels) v = static_cast<std::uint8_t>(p.below(256));
  for (int t : {0, 64, 127, 254, 255}) {
    auto a = binarize(g, static_cast<std::uint8_t>(t), Polarity::fg_above);
    auto b = binarize(g, static_cast<std::uint8_t>(t), Polarity::fg_below);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_EQ(a.pixels[i] + b.pixels[i], 255);
      EXPECT_TRUE(a.pixels[i] == 0 || a.pixels[i] == 255);
    }
  }
}

// ---------------------------------------------------------------- morphology

TEST(Morph, OpenRemovesSingleton) {
  Mask m(7, 7);
  m.at(3, 3) = 255;
  EXPECT_EQ(count_fg(morph(m, MorphOp::open, 1)), 0u);
}

TEST(Morph, CloseFillsSingleHole) {
  Mask m(7, 7, 255);
  m.at(3, 3) = 0;
  EXPECT_EQ(count_fg(morph(m, MorphOp::close, 1)), 49u);
}

TEST(Morph, AllForegroundIsFixedPoint) {
  Mask m(6, 5, 255);
  for (int r : {1, 2, 3}) {
    EXPECT_EQ(morph(m, MorphOp::open, r), m);
    EXPECT_EQ(morph(m, MorphOp::close, r), m);
  }
}

TEST(Morph, RadiusZeroIsIdentity) {
  Prng p(33);
  auto m = random_mask(9, 9, 0.5, p);
  EXPECT_EQ(morph(m, MorphOp::open, 0), m);
  EXPECT_EQ(morph(m, MorphOp::close, 0), m);
  EXPECT_THROW(morph(m, MorphOp::open, -1), Error);
}

TEST(Morph, OpenShrinksCloseGrowsBothIdempotent) {
  Prng p(34);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = random_mask(12, 10, 0.3 + 0.02 * trial, p);
    const int r = 1 + trial % 2;
    auto o = morph(m, MorphOp::open, r);
    auto c = morph(m, MorphOp::close, r);
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_LE(o.pixels[i], m.pixels[i]);
      EXPECT_GE(c.pixels[i], m.pixels[i]);
    }
    EXPECT_EQ(morph(o, MorphOp::open, r), o);
    EXPECT_EQ(morph(c, MorphOp::close, r), c);
  }
}

// ---------------------------------------------------------------- components

TEST(LargestComponent, KeepsBiggerBlob) {
  Mask m(8, 6);
  for (std::size_t x = 0; x < 5; ++x)
    for (std::size_t y = 0; y < 2; ++y) m.at(x, y) = 255;  // 10 pixels
  for (std::size_t x = 5; x < 8; ++x) m.at(x, 5) = 255;    // 3 pixels
  auto out = largest_component(m);
  EXPECT_EQ(count_fg(out), 10u);
  EXPECT_EQ(out.at(0, 0), 255);
  EXPECT_EQ(out.at(7, 5), 0);
}

TEST(LargestComponent, SingleBlobUnchanged) {
  auto m = disk(16, 16, 8, 8, 5);
  EXPECT_EQ(largest_component(m), m);
}

TEST(LargestComponent, DiagonalDoesNotConnect) {
  auto m = mask_from(4, 4, {1, 1, 0, 0,  //
                            1, 1, 0, 0,  //
                            0, 0, 1, 1,  //
                            0, 0, 1, 1});
  auto out = largest_component(m);
  EXPECT_EQ(count_fg(out), 4u);  // equal sizes: the top-left block wins
  EXPECT_EQ(out.at(0, 0), 255);
  EXPECT_EQ(out.at(3, 3), 0);
}

TEST(LargestComponent, TieGoesToSmallestIndex) {
  auto m = mask_from(5, 1, {0, 1, 0, 1, 0});
  auto out = largest_component(m);
  EXPECT_EQ(out.pixels, (std::vector<std::uint8_t>{0, 255, 0, 0, 0}));
}

TEST(LargestComponent, EmptyMaskIsDegenerate) {
  try {
    largest_component(Mask(4, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_image);
  }
}

TEST(FillHoles, RingBecomesDisk) {
  auto outer = disk(21, 21, 10, 10, 8);
  auto inner = disk(21, 21, 10, 10, 4);
  Mask ring = outer;
  for (std::size_t i = 0; i < ring.size(); ++i)
    if (inner.pixels[i]) ring.pixels[i] = 0;
  EXPECT_EQ(fill_holes(ring), outer);
}

TEST(FillHoles, SolidDiskUnchanged) {
  auto m = disk(21, 21, 10, 10, 8);
  EXPECT_EQ(fill_holes(m), m);
}

TEST(FillHoles, HoleOpenToBorderIsKept) {
  // C shape: the cavity reaches the right border through a channel.
  auto m = mask_from(6, 5, {1, 1, 1, 1, 1, 1,  //
                            1, 0, 0, 0, 0, 0,  //
                            1, 0, 0, 0, 0, 0,  //
                            1, 0, 0, 0, 0, 0,  //
                            1, 1, 1, 1, 1, 1});
  EXPECT_EQ(fill_holes(m), m);
}

// ---------------------------------------------------------------- refine_check

TEST(RefineCheck, TooSmall) {
  auto m = disk(50, 50, 25, 25, 3.9);  // about 2% of the image
  const auto r = refine_check(m, {});
  EXPECT_NEAR(r.area_frac, 0.02, 0.005);
  EXPECT_EQ(r.reason, RejectReason::mask_too_small);
  EXPECT_EQ(r.verdict, Verdict::reject);
}

TEST(RefineCheck, AllWhiteTouchesBorder) {
  const auto r = refine_check(Mask(16, 16, 255), {});
  EXPECT_EQ(r.reason, RejectReason::mask_touches_border);
}

TEST(RefineCheck, CentredDiskAccepted) {
  auto m = disk(64, 64, 31.5, 31.5, 19.7);  // about 30%
  const auto r = refine_check(m, {});
  EXPECT_NEAR(r.area_frac, 0.30, 0.01);
  EXPECT_EQ(r.reason, RejectReason::ok);
  EXPECT_TRUE(r.accepted());
}

TEST(RefineCheck, InteriorFillTooLarge) {
  Mask m(64, 64);
  for (std::size_t y = 1; y < 63; ++y)
    for (std::size_t x = 1; x < 63; ++x) m.at(x, y) = 255;
  EXPECT_EQ(refine_check(m, {}).reason, RejectReason::mask_too_large);
}

TEST(RefineCheck, ReasonOkIffAccept) {
  Prng p(35);
  for (int trial = 0; trial < 40; ++trial) {
    auto m = disk(40, 40, p.uniform(5, 35), p.uniform(5, 35), p.uniform(1, 30));
    const auto r = refine_check(m, {});
    EXPECT_EQ(r.reason == RejectReason::ok, r.verdict == Verdict::accept);
  }
}

TEST(SilhouetteParams, Validation) {
  SilhouetteParams p;
  EXPECT_NO_THROW(p.validate());
  p.min_area_frac = 0.95;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.defect_alpha = 1.0;
  EXPECT_THROW(p.validate(), Error);
}

// ---------------------------------------------------------------- extract_silhouette

TEST(ExtractSilhouette, DiskWithDarkBlob) {
  const auto img = scene(220, 140, 3, 30);
  const auto res = extract_silhouette(img);
  const auto fruit = disk(32, 32, 15.5, 15.5, 10);
  const auto blob = disk(32, 32, 15.5, 15.5, 3);
  EXPECT_EQ(res.fruit_mask, fruit);
  for (std::size_t i = 0; i < fruit.size(); ++i) {
    const std::uint8_t expected = fruit.pixels[i] && !blob.pixels[i] ? 255 : 0;
    EXPECT_EQ(res.silhouette.pixels[i], expected) << i;
  }
  EXPECT_NEAR(res.report.defect_frac, double(count_fg(blob)) / double(count_fg(fruit)), 1e-12);
  EXPECT_TRUE(res.report.accepted());
}

TEST(ExtractSilhouette, HealthyDiskIsSolid) {
  const auto res = extract_silhouette(scene(220, 140, 0, 140));
  EXPECT_EQ(res.report.defect_frac, 0.0);
  EXPECT_EQ(res.silhouette, disk(32, 32, 15.5, 15.5, 10));
}

TEST(ExtractSilhouette, DarkBackgroundFlipsPolarity) {
  const auto res = extract_silhouette(scene(20, 150, 0, 150));
  EXPECT_EQ(res.silhouette, disk(32, 32, 15.5, 15.5, 10));
}

TEST(ExtractSilhouette, ConstantImageRejectedAsDegenerate) {
  const auto res = extract_silhouette(RgbImage(16, 16, 90));
  EXPECT_EQ(res.report.verdict, Verdict::reject);
  EXPECT_EQ(res.report.reason, RejectReason::degenerate_image);
  EXPECT_EQ(count_fg(res.silhouette), 0u);
}

TEST(ExtractSilhouette, OutputInvariantsOnRandomScenes) {
  Prng p(36);
  for (int trial = 0; trial < 30; ++trial) {
    RgbImage img(40, 40);
    const auto bg = static_cast<std::uint8_t>(p.range(170, 230));
    const auto fr = static_cast<std::uint8_t>(p.range(60, 140));
    const double cx = p.uniform(12, 28), cy = p.uniform(12, 28), r = p.uniform(6, 11);
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 0; x < 40; ++x) {
        const bool in = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
        for (int c = 0; c < 3; ++c)
          img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp<int>((in ? fr : bg) + int(p.below(21)) - 10, 0, 255));
      }
    const auto a = extract_silhouette(img);
    const auto b = extract_silhouette(img);
    EXPECT_EQ(a.silhouette, b.silhouette);
    EXPECT_EQ(a.fruit_mask, b.fruit_mask);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const auto s = a.silhouette.pixels[i];
      EXPECT_TRUE(s == 0 || s == 255);
      if (!a.fruit_mask.pixels[i]) EXPECT_EQ(s, 0);  // background and defects only inside the mask
    }
    // Re-running on the white-on-black output reproduces the fruit mask.
    const auto again = extract_silhouette(gray_to_rgb(a.silhouette));
    EXPECT_EQ(again.fruit_mask, a.fruit_mask) << "trial " << trial;
  }
}
