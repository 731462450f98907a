#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mifruit/dataset.hpp"
#include "mifruit/silhouette.hpp"
#include "mifruit/synthetic.hpp"

using namespace mifruit;
namespace stdfs = std::filesystem;

namespace {

stdfs::path fresh_dir(const std::string& name) {
  auto d = stdfs::temp_directory_path() / ("mifruit_ds_" + name);
  stdfs::remove_all(d);
  stdfs::create_directories(d);
  return d;
}

std::vector<char> bytes_of(const stdfs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<char> to_chars(const std::string& s) { return {s.begin(), s.end()}; }

template <typename F>
void expect_kind(ErrorKind kind, F&& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

DatasetManifest synthetic_manifest(std::size_t healthy, std::size_t defective) {
  DatasetManifest m;
  for (std::size_t i = 0; i < healthy + defective; ++i)
    m.records.push_back({"img" + std::to_string(i) + ".ppm", "", i < healthy ? Label::healthy : Label::defective,
                         Split::none, "x"});
  return m;
}

std::map<std::pair<Label, Split>, std::size_t> tally(const DatasetManifest& m) {
  std::map<std::pair<Label, Split>, std::size_t> t;
  for (const auto& r : m.records) ++t[{r.label, r.split}];
  return t;
}

// Every file under dir, relative path -> bytes.
std::map<std::string, std::vector<char>> snapshot(const stdfs::path& dir) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : stdfs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[stdfs::relative(e.path(), dir).generic_string()] = bytes_of(e.path());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- PNM

TEST(Pnm, ParsesP5) {
  auto bytes = to_chars("P5 2 2 255\n");
  for (char c : {'\x01', '\x02', '\x03', '\xff'}) bytes.push_back(c);
  const auto img = std::get<GrayImage>(decode_image(bytes));
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{1, 2, 3, 255}));
}

TEST(Pnm, CommentsAndWhitespaceInHeader) {
  auto bytes = to_chars("P6\n# made by hand\n1\t# width\n 1\r\n255\n");
  for (char c : {'\x0a', '\x20', '\x09'}) bytes.push_back(c);  // data bytes that look like whitespace
  const auto img = std::get<RgbImage>(decode_image(bytes));
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{10, 32, 9}));
}

TEST(Pnm, RejectsUnsupportedInputs) {
  expect_kind(ErrorKind::format_error, [] { decode_image(to_chars("P5 1 1 65535\n\x01\x02")); });
  expect_kind(ErrorKind::format_error, [] { decode_image(to_chars("P3 1 1 255\n1 2 3")); });
  expect_kind(ErrorKind::format_error, [] { decode_image(to_chars("P5 2 2 255\n\x01")); });
  expect_kind(ErrorKind::format_error, [] { decode_image(to_chars("P5 0 2 255\n")); });
  expect_kind(ErrorKind::format_error, [] { decode_image(to_chars("P5 2 ")); });
  expect_kind(ErrorKind::format_error, [] { decode_image(to_chars("")); });
  expect_kind(ErrorKind::io_error, [] { read_image("/nonexistent/img.ppm"); });
}

TEST(Pnm, CanonicalHeaderLengths) {
  const auto dir = fresh_dir("pnm");
  write_image(dir / "w.pgm", GrayImage(1, 1, 255));
  const std::string canonical = "P5\n1 1\n255\n";
  ASSERT_EQ(canonical.size(), 11u);
  const auto gray = bytes_of(dir / "w.pgm");
  ASSERT_EQ(gray.size(), canonical.size() + 1);
  EXPECT_EQ(std::string(gray.begin(), gray.begin() + 11), canonical);
  EXPECT_EQ(static_cast<std::uint8_t>(gray.back()), 255);
  write_image(dir / "c.ppm", RgbImage(1, 1, 7));
  EXPECT_EQ(bytes_of(dir / "c.ppm").size(), 11u + 3u);
}

TEST(Pnm, RoundTripAndDeterministicWrites) {
  const auto dir = fresh_dir("rt");
  Prng p(41);
  RgbImage rgb(7, 5);
  GrayImage gray(3, 9);
  for (auto& v : rgb.pixels) v = static_cast<std::uint8_t>(p.below(256));
  for (auto& v : gray.pixels) v = static_cast<std::uint8_t>(p.below(256));
  write_image(dir / "a.ppm", rgb);
  write_image(dir / "b.ppm", rgb);
  write_image(dir / "g.pgm", gray);
  EXPECT_EQ(std::get<RgbImage>(read_image(dir / "a.ppm")), rgb);
  EXPECT_EQ(read_gray(dir / "g.pgm"), gray);
  EXPECT_EQ(bytes_of(dir / "a.ppm"), bytes_of(dir / "b.ppm"));
  EXPECT_EQ(read_rgb(dir / "g.pgm"), gray_to_rgb(gray));
  expect_kind(ErrorKind::format_error, [&] { read_gray(dir / "a.ppm"); });
}

// ---------------------------------------------------------------- resize / normalise

TEST(Resize, IdentityAndConstant) {
  Prng p(42);
  GrayImage g(6, 4);
  for (auto& v : g.pixels) v = static_cast<std::uint8_t>(p.below(256));
  EXPECT_EQ(resize_bilinear(g, 4, 6), g);
  const RgbImage c(5, 3, 123);
  const auto up = resize_bilinear(c, 17, 11);
  EXPECT_TRUE(std::all_of(up.pixels.begin(), up.pixels.end(), [](auto v) { return v == 123; }));
}

TEST(Resize, TwoByTwoToOne) {
  GrayImage g(2, 2);
  g.pixels = {0, 100, 200, 255};
  EXPECT_EQ(resize_bilinear(g, 1, 1).pixels[0], 139);
}

TEST(Resize, HalvingAveragesBlocks) {
  // Half-pixel centres put each output sample midway between a 2x2 block.
  Prng p(43);
  for (int trial = 0; trial < 10; ++trial) {
    RgbImage img(8, 6);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(p.below(256));
    const auto half = resize_bilinear(img, 3, 4);
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 4; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const double mean = (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) + img.at(2 * x, 2 * y + 1, c) +
                               img.at(2 * x + 1, 2 * y + 1, c)) /
                              4.0;
          EXPECT_EQ(half.at(x, y, c), static_cast<std::uint8_t>(std::lround(mean)));
        }
  }
}

TEST(Normalize, ValuesAndLayout) {
  RgbImage img(3, 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.pixels[3 * i] = 255;
    img.pixels[3 * i + 1] = 0;
    img.pixels[3 * i + 2] = static_cast<std::uint8_t>(i * 51);
  }
  const auto t = normalize_to_tensor<double>(img);
  EXPECT_EQ(t.shape(), (Shape{3, 2, 3}));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(t[i], 1.0);
    EXPECT_EQ(t[6 + i], 0.0);
    EXPECT_DOUBLE_EQ(t[12 + i], i * 51 / 255.0);
  }
}

// ---------------------------------------------------------------- scanning

TEST(ScanDataset, LabelsAndOrder) {
  const auto root = fresh_dir("scan");
  stdfs::create_directories(root / "healthy");
  stdfs::create_directories(root / "defective");
  for (auto n : {"b.ppm", "a.ppm"}) write_image(root / "healthy" / n, RgbImage(2, 2));
  for (auto n : {"z.ppm", "c.ppm", "m.ppm"}) write_image(root / "defective" / n, RgbImage(2, 2));
  std::ofstream(root / "healthy" / "notes.txt") << "ignored";
  const auto m = scan_dataset(root);
  ASSERT_EQ(m.records.size(), 5u);
  std::vector<int> labels;
  for (const auto& r : m.records) labels.push_back(static_cast<int>(r.label));
  EXPECT_EQ(labels, (std::vector<int>{0, 0, 1, 1, 1}));
  EXPECT_EQ(m.records[0].rgb, "healthy/a.ppm");
  EXPECT_EQ(m.records[2].rgb, "defective/c.ppm");
  EXPECT_EQ(m.records[0].fruit, "mifruit_ds_scan");
  EXPECT_EQ(encode_manifest(scan_dataset(root)), encode_manifest(m));
}

TEST(ScanDataset, MissingOrEmptyClass) {
  const auto root = fresh_dir("scan_bad");
  stdfs::create_directories(root / "healthy");
  write_image(root / "healthy" / "a.ppm", RgbImage(2, 2));
  expect_kind(ErrorKind::data_invalid, [&] { scan_dataset(root); });
  stdfs::create_directories(root / "defective");
  expect_kind(ErrorKind::data_invalid, [&] { scan_dataset(root); });
}

// ---------------------------------------------------------------- manifest

TEST(Manifest, RoundTrip) {
  auto m = split_manifest(synthetic_manifest(5, 4), kDefaultRatios, 3);
  m.records[1].sil = "sil/healthy/img1.pgm";
  m.provenance.source = "unit";
  const auto text = encode_manifest(m);
  const auto back = decode_manifest(text);
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.provenance, m.provenance);
  EXPECT_EQ(encode_manifest(back), text);
  // Records are one JSON object per line with the five keys.
  const auto second_line = text.substr(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n') - 1);
  const auto j = json::parse(second_line);
  for (auto key : {"rgb", "sil", "label", "split", "fruit"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j.size(), 5u);
}

TEST(Manifest, RejectsBadRecords) {
  expect_kind(ErrorKind::data_invalid, [] { decode_manifest("{\"rgb\":\"a\",\"label\":\"rotten\"}\n"); });
  expect_kind(ErrorKind::data_invalid, [] { decode_manifest("{\"label\":0}\n"); });
  expect_kind(ErrorKind::data_invalid, [] { decode_manifest("not json\n"); });
  expect_kind(ErrorKind::data_invalid,
              [] { decode_manifest("{\"rgb\":\"a\",\"label\":0}\n{\"rgb\":\"a\",\"label\":1}\n"); });
  const auto m = decode_manifest("{\"rgb\":\"a\",\"label\":1,\"split\":\"val\"}\n");
  EXPECT_EQ(m.records.at(0).label, Label::defective);
  EXPECT_EQ(m.records.at(0).split, Split::val);
}

// ---------------------------------------------------------------- split

TEST(SplitManifest, ExactRatiosAt100) {
  const auto t = tally(split_manifest(synthetic_manifest(100, 100), kDefaultRatios, 1));
  for (Label l : kLabels) {
    EXPECT_EQ((t.at({l, Split::train})), 80u);
    EXPECT_EQ((t.at({l, Split::val})), 10u);
    EXPECT_EQ((t.at({l, Split::test})), 10u);
  }
}

TEST(SplitManifest, FloorRuleAt87) {
  const auto t = tally(split_manifest(synthetic_manifest(87, 3), kDefaultRatios, 2));
  EXPECT_EQ((t.at({Label::healthy, Split::train})), 69u);
  EXPECT_EQ((t.at({Label::healthy, Split::val})), 8u);
  EXPECT_EQ((t.at({Label::healthy, Split::test})), 10u);
}

TEST(SplitManifest, RefinedCorpusSizesAreConserved) {
  // Refined class totals: apple 2255 + 1802 = 4057, mango 2048 + 1857 = 3905.
  for (auto [h, d] : {std::pair<std::size_t, std::size_t>{2255, 1802}, {2048, 1857}}) {
    const auto t = tally(split_manifest(synthetic_manifest(h, d), kDefaultRatios, 9));
    std::size_t total = 0;
    for (const auto& [key, n] : t) total += n;
    EXPECT_EQ(total, h + d);
    EXPECT_EQ((t.at({Label::healthy, Split::train}) + t.at({Label::healthy, Split::val}) +
               t.at({Label::healthy, Split::test})),
              h);
    EXPECT_EQ((t.at({Label::defective, Split::train}) + t.at({Label::defective, Split::val}) +
               t.at({Label::defective, Split::test})),
              d);
  }
}

TEST(SplitManifest, StratificationProperty) {
  Prng p(44);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t h = 3 + p.below(200), d = 3 + p.below(200);
    const auto m = split_manifest(synthetic_manifest(h, d), kDefaultRatios, trial);
    const auto t = tally(m);
    for (auto [label, n] : {std::pair{Label::healthy, h}, std::pair{Label::defective, d}}) {
      const auto expect = split_counts(n, kDefaultRatios);
      EXPECT_EQ(expect.train, static_cast<std::size_t>(std::floor(0.8 * n + 1e-9)));
      auto get = [&](Split s) { return t.count({label, s}) ? t.at({label, s}) : 0u; };
      EXPECT_EQ(get(Split::train), expect.train);
      EXPECT_EQ(get(Split::val), expect.val);
      EXPECT_EQ(get(Split::test), n - expect.train - expect.val);
      EXPECT_EQ(get(Split::none), 0u);
    }
  }
}

TEST(SplitManifest, DeterministicPerSeed) {
  const auto base = synthetic_manifest(40, 30);
  EXPECT_EQ(encode_manifest(split_manifest(base, kDefaultRatios, 5)), encode_manifest(split_manifest(base, kDefaultRatios, 5)));
  EXPECT_NE(encode_manifest(split_manifest(base, kDefaultRatios, 5)), encode_manifest(split_manifest(base, kDefaultRatios, 6)));
}

TEST(SplitManifest, Errors) {
  expect_kind(ErrorKind::data_invalid, [] { split_manifest(synthetic_manifest(2, 10), kDefaultRatios, 1); });
  expect_kind(ErrorKind::invalid_argument, [] { split_manifest(synthetic_manifest(5, 5), {0.5, 0.1, 0.1}, 1); });
  expect_kind(ErrorKind::invalid_argument, [] { split_manifest(synthetic_manifest(5, 5), {1.2, -0.1, -0.1}, 1); });
}

// ---------------------------------------------------------------- synthetic corpus

TEST(Synthetic, CountsAndDeterminism) {
  const auto a = fresh_dir("syn_a"), b = fresh_dir("syn_b");
  SyntheticParams p;
  p.per_class = 10;
  const auto ca = generate_synthetic(p, 7, a);
  generate_synthetic(p, 7, b);
  ASSERT_EQ(ca.manifest.records.size(), 20u);
  EXPECT_EQ(std::count_if(ca.manifest.records.begin(), ca.manifest.records.end(),
                          [](const auto& r) { return r.label == Label::healthy; }),
            10);
  EXPECT_EQ(snapshot(a), snapshot(b));
  EXPECT_EQ(encode_manifest(read_manifest(a / "manifest.jsonl")), encode_manifest(ca.manifest));
  const auto c = fresh_dir("syn_c");
  generate_synthetic(p, 8, c);
  EXPECT_NE(snapshot(a), snapshot(c));
}

TEST(Synthetic, DefectPixelsDarkerByContrast) {
  const auto dir = fresh_dir("syn_contrast");
  for (double contrast : {0.15, 0.3, 0.6}) {
    SyntheticParams p;
    p.per_class = 12;
    p.defect_contrast = contrast;
    const auto corpus = generate_synthetic(p, 17, dir);
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
      const auto& truth = corpus.samples[i];
      const auto img = read_rgb(corpus.manifest.resolve(corpus.manifest.records[i].rgb));
      std::size_t fruit_px = 0, defect_px = 0;
      for (std::size_t k = 0; k < img.size(); ++k) {
        const Rgb px{img.pixels[3 * k], img.pixels[3 * k + 1], img.pixels[3 * k + 2]};
        if (px == truth.fruit) ++fruit_px;
        else if (px == truth.defect) ++defect_px;
        else EXPECT_EQ(px, truth.background);
      }
      EXPECT_GT(fruit_px, 0u);
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(truth.defect[c], std::lround(truth.fruit[c] * contrast));
        EXPECT_LT(truth.defect[c], truth.fruit[c]);
      }
      if (corpus.manifest.records[i].label == Label::healthy) {
        EXPECT_EQ(defect_px, 0u);
      } else {
        EXPECT_GT(defect_px, 0u);
        EXPECT_GE(truth.blob_count, p.blob_count_min);
        // Every defect pixel is enclosed by fruit: its 4-neighbours are fruit or defect.
        for (std::size_t y = 0; y < img.height; ++y)
          for (std::size_t x = 0; x < img.width; ++x) {
            if (Rgb{img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)} != truth.defect) continue;
            ASSERT_TRUE(x > 0 && y > 0 && x + 1 < img.width && y + 1 < img.height);
            for (auto [nx, ny] : {std::pair{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}) {
              const Rgb n{img.at(nx, ny, 0), img.at(nx, ny, 1), img.at(nx, ny, 2)};
              EXPECT_TRUE(n == truth.fruit || n == truth.defect);
            }
          }
      }
    }
  }
}

TEST(Synthetic, CorruptedCountAndParams) {
  const auto dir = fresh_dir("syn_corrupt");
  SyntheticParams p;
  p.per_class = 20;
  p.corrupt_frac = 0.25;
  const auto corpus = generate_synthetic(p, 3, dir);
  std::size_t corrupted = 0;
  for (const auto& s : corpus.samples) corrupted += s.corruption != Corruption::none;
  EXPECT_EQ(corrupted, 10u);
  p.defect_contrast = 1.0;
  EXPECT_THROW(generate_synthetic(p, 3, dir), Error);
  p = {};
  p.image_size = 16;
  EXPECT_THROW(generate_synthetic(p, 3, dir), Error);
}

TEST(Synthetic, SilhouettePipelineSeparatesCleanAndCorrupted) {
  const auto dir = fresh_dir("syn_pipe");
  for (double contrast : {0.15, 0.3, 0.4}) {
    SyntheticParams p;
    p.per_class = 40;
    p.corrupt_frac = 0.25;
    p.defect_contrast = contrast;
    const auto corpus = generate_synthetic(p, 23, dir);
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
      const auto res = extract_silhouette(read_rgb(corpus.manifest.resolve(corpus.manifest.records[i].rgb)));
      const bool corrupt = corpus.samples[i].corruption != Corruption::none;
      EXPECT_EQ(res.report.accepted(), !corrupt) << "image " << i << " reason " << to_string(res.report.reason);
      if (corrupt) continue;
      if (corpus.manifest.records[i].label == Label::healthy) EXPECT_EQ(res.report.defect_frac, 0.0);
      else EXPECT_GT(res.report.defect_frac, 0.0) << "contrast " << contrast << " image " << i;
    }
  }
}

// ---------------------------------------------------------------- batches

class LoadBatch : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fresh_dir("batch");
    SyntheticParams p;
    p.per_class = 12;
    auto corpus = generate_synthetic(p, 5, dir_);
    manifest_ = split_manifest(corpus.manifest, {0.75, 0.25, 0.0}, 1);
    stdfs::create_directories(dir_ / "sil");
    for (auto& r : manifest_.records) {
      const auto res = extract_silhouette(read_rgb(manifest_.resolve(r.rgb)));
      r.sil = "sil/" + stdfs::path(r.rgb).stem().string() + ".pgm";
      write_image(manifest_.resolve(r.sil), res.silhouette);
    }
  }
  static inline stdfs::path dir_;
  static inline DatasetManifest manifest_;
};

TEST_F(LoadBatch, ShapesAndLabels) {
  std::vector<std::size_t> idx(16);
  for (std::size_t i = 0; i < 16; ++i) idx[i] = (i * 5) % 18;
  const auto b = load_batch<float>(manifest_, Split::train, idx, 64);
  EXPECT_EQ(b.rgb.shape(), (Shape{16, 3, 64, 64}));
  EXPECT_EQ(b.sil.shape(), (Shape{16, 1, 64, 64}));
  ASSERT_EQ(b.labels.size(), 16u);
  const auto members = manifest_.indices_of(Split::train);
  for (std::size_t i = 0; i < 16; ++i)
    EXPECT_EQ(b.labels[i], static_cast<int>(manifest_.records[members[idx[i]]].label));
  for (float v : b.sil.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  for (float v : b.rgb.data()) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
}

TEST_F(LoadBatch, DeterministicAndResizable) {
  const std::vector<std::size_t> idx{0, 3, 1};
  const auto a = load_batch<double>(manifest_, Split::val, idx, 32);
  const auto b = load_batch<double>(manifest_, Split::val, idx, 32);
  EXPECT_EQ(a.rgb.vec(), b.rgb.vec());
  EXPECT_EQ(a.sil.vec(), b.sil.vec());
  EXPECT_EQ(a.rgb.shape(), (Shape{3, 3, 32, 32}));
  const auto rgb_only = load_batch<double>(manifest_, Split::val, idx, 32, false);
  EXPECT_FALSE(rgb_only.sil.defined());
}

TEST_F(LoadBatch, Errors) {
  auto m = manifest_;
  const auto first_train = m.indices_of(Split::train).front();
  m.records[first_train].sil.clear();
  expect_kind(ErrorKind::data_invalid, [&] { load_batch<float>(m, Split::train, {0}, 64); });
  m.records[first_train].sil = "sil/does_not_exist.pgm";
  try {
    load_batch<float>(m, Split::train, {0}, 64);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data_invalid);
    EXPECT_NE(std::string(e.what()).find(m.records[first_train].rgb), std::string::npos);
  }
  expect_kind(ErrorKind::invalid_argument, [&] { load_batch<float>(manifest_, Split::val, {99}, 64); });
}
