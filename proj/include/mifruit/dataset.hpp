#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mifruit/image.hpp"
#include "mifruit/prng.hpp"
#include "mifruit/tensor.hpp"

namespace mifruit {

using json = nlohmann::json;

enum class Label : int { healthy = 0, defective = 1 };
enum class Split { none, train, val, test };

inline std::string_view to_string(Label l) { return l == Label::healthy ? "healthy" : "defective"; }
inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: break;
  }
  return "none";
}

inline Label parse_label(std::string_view s) {
  if (s == "healthy") return Label::healthy;
  if (s == "defective") return Label::defective;
  fail(ErrorKind::data_invalid, "unknown label '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail(ErrorKind::invalid_argument, "unknown split '" + std::string(s) + "' (expected train, val or test)");
}

inline constexpr std::array<Label, 2> kLabels{Label::healthy, Label::defective};

struct SampleRecord {
  std::string rgb;  // relative to the manifest directory
  std::string sil;  // empty until preprocessing
  Label label = Label::healthy;
  Split split = Split::none;
  std::string fruit;

  bool operator==(const SampleRecord&) const = default;
};

struct Provenance {
  std::string source;
  std::optional<std::uint64_t> seed;
  std::optional<std::array<double, 3>> ratios;

  bool operator==(const Provenance&) const = default;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  Provenance provenance;
  std::filesystem::path base_dir;  // directory the record paths are relative to; not serialised

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }

  std::vector<std::size_t> indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].split == s) out.push_back(i);
    return out;
  }
};

// ---------------------------------------------------------------- JSON Lines

inline json to_json(const SampleRecord& r) {
  json j;
  j["rgb"] = r.rgb;
  j["sil"] = r.sil.empty() ? json(nullptr) : json(r.sil);
  j["label"] = to_string(r.label);
  j["split"] = r.split == Split::none ? json(nullptr) : json(to_string(r.split));
  j["fruit"] = r.fruit;
  return j;
}

inline SampleRecord record_from_json(const json& j) {
  try {
    SampleRecord r;
    r.rgb = j.at("rgb").get<std::string>();
    if (j.contains("sil") && !j["sil"].is_null()) r.sil = j["sil"].get<std::string>();
    const auto& label = j.at("label");
    if (label.is_number_integer()) {
      const int v = label.get<int>();
      if (v != 0 && v != 1) fail(ErrorKind::data_invalid, "label must be 0 or 1");
      r.label = static_cast<Label>(v);
    } else {
      r.label = parse_label(label.get<std::string>());
    }
    if (j.contains("split") && !j["split"].is_null()) {
      const auto s = j["split"].get<std::string>();
      if (s != "train" && s != "val" && s != "test") fail(ErrorKind::data_invalid, "unknown split '" + s + "'");
      r.split = parse_split(s);
    }
    if (j.contains("fruit") && !j["fruit"].is_null()) r.fruit = j["fruit"].get<std::string>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::data_invalid, std::string("malformed manifest record: ") + e.what());
  }
}

/// First line: {"provenance": {...}}; then one record per line.
inline std::string encode_manifest(const DatasetManifest& m) {
  json prov;
  prov["source"] = m.provenance.source;
  prov["seed"] = m.provenance.seed ? json(*m.provenance.seed) : json(nullptr);
  prov["ratios"] = m.provenance.ratios ? json(*m.provenance.ratios) : json(nullptr);
  std::string out = json{{"provenance", prov}}.dump() + "\n";
  for (const auto& r : m.records) out += to_json(r).dump() + "\n";
  return out;
}

inline DatasetManifest decode_manifest(const std::string& text, const std::filesystem::path& base_dir = {}) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::data_invalid, "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.contains("provenance")) {
      const auto& p = j["provenance"];
      m.provenance.source = p.value("source", "");
      if (p.contains("seed") && !p["seed"].is_null()) m.provenance.seed = p["seed"].get<std::uint64_t>();
      if (p.contains("ratios") && !p["ratios"].is_null())
        m.provenance.ratios = p["ratios"].get<std::array<double, 3>>();
      continue;
    }
    m.records.push_back(record_from_json(j));
  }
  std::vector<std::string> paths;
  for (const auto& r : m.records) paths.push_back(r.rgb);
  std::sort(paths.begin(), paths.end());
  if (std::adjacent_find(paths.begin(), paths.end()) != paths.end())
    fail(ErrorKind::data_invalid, "manifest lists the same rgb path twice: " +
                                      *std::adjacent_find(paths.begin(), paths.end()));
  return m;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string() + " for writing");
  out << encode_manifest(m);
  if (!out) fail(ErrorKind::io_error, "write failed for " + path.string());
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_error, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_manifest(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------- scanning

inline bool is_pnm_file(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

/// One record per image under root/healthy and root/defective (healthy first,
/// lexicographic path order within each class).
inline DatasetManifest scan_dataset(const std::filesystem::path& root, const std::string& fruit = "") {
  DatasetManifest m;
  m.base_dir = root;
  m.provenance.source = root.string();
  auto abs = std::filesystem::absolute(root).lexically_normal();
  if (!abs.has_filename()) abs = abs.parent_path();
  const std::string tag = fruit.empty() ? abs.filename().string() : fruit;
  for (Label label : kLabels) {
    const std::filesystem::path dir = root / std::string(to_string(label));
    if (!std::filesystem::is_directory(dir)) fail(ErrorKind::data_invalid, "missing class directory " + dir.string());
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && is_pnm_file(e.path()))
        files.push_back((std::filesystem::path(std::string(to_string(label))) / e.path().filename()).generic_string());
    if (files.empty()) fail(ErrorKind::data_invalid, "class directory " + dir.string() + " has no images");
    std::sort(files.begin(), files.end());
    for (auto& f : files) m.records.push_back({std::move(f), "", label, Split::none, tag});
  }
  return m;
}

// ---------------------------------------------------------------- splitting

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

/// floor(r_train * n), floor(r_val * n), remainder to test. A 1e-9 guard keeps
/// products such as 0.29 * 100 from rounding down past an integer.
inline SplitCounts split_counts(std::size_t n, const std::array<double, 3>& ratios) {
  SplitCounts c;
  c.train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n) + 1e-9));
  c.val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9));
  c.train = std::min(c.train, n);
  c.val = std::min(c.val, n - c.train);
  c.test = n - c.train - c.val;
  return c;
}

inline constexpr std::array<double, 3> kDefaultRatios{0.8, 0.1, 0.1};

/// Stratified seeded split: per class (healthy, then defective) the record
/// positions are Fisher-Yates shuffled with one SplitMix64 stream.
inline DatasetManifest split_manifest(const DatasetManifest& in, const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios) require(r >= 0.0 && r <= 1.0, "split ratios must lie in [0, 1]");
  require(std::fabs(ratios[0] + ratios[1] + ratios[2] - 1.0) <= 1e-9, "split ratios must sum to 1");
  DatasetManifest out = in;
  out.provenance.seed = seed;
  out.provenance.ratios = ratios;
  Prng prng(seed);
  for (Label label : kLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < in.records.size(); ++i)
      if (in.records[i].label == label) idx.push_back(i);
    if (idx.size() < 3)
      fail(ErrorKind::data_invalid, "class " + std::string(to_string(label)) + " has " + std::to_string(idx.size()) +
                                        " samples; at least 3 are needed to split");
    shuffle(idx, prng);
    const auto c = split_counts(idx.size(), ratios);
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.records[idx[k]].split = k < c.train ? Split::train : k < c.train + c.val ? Split::val : Split::test;
  }
  return out;
}

// ---------------------------------------------------------------- batches

template <typename T>
struct Batch {
  Tensor<T> rgb;       // N x 3 x S x S
  Tensor<T> sil;       // N x 1 x S x S, undefined when not requested
  std::vector<int> labels;
};

/// Decoded, resized and normalised sample kept in memory.
template <typename T>
struct LoadedSample {
  std::vector<T> rgb;
  std::vector<T> sil;
  int label = 0;
};

template <typename T>
LoadedSample<T> load_sample(const DatasetManifest& m, std::size_t record, std::size_t image_size, bool with_sil) {
  const auto& r = m.records.at(record);
  LoadedSample<T> s;
  s.label = static_cast<int>(r.label);
  s.rgb = normalize_to_tensor<T>(resize_bilinear(read_rgb(m.resolve(r.rgb)), image_size, image_size)).vec();
  if (with_sil) {
    if (r.sil.empty()) fail(ErrorKind::data_invalid, "record " + r.rgb + " has no silhouette");
    const auto path = m.resolve(r.sil);
    if (!std::filesystem::exists(path)) fail(ErrorKind::data_invalid, "record " + r.rgb + ": silhouette file " + path.string() + " is missing");
    s.sil = normalize_to_tensor<T>(resize_bilinear(read_gray(path), image_size, image_size)).vec();
  }
  return s;
}

/// Stacks in-memory samples in the given order.
template <typename T>
Batch<T> stack_samples(const std::vector<LoadedSample<T>>& samples, const std::vector<std::size_t>& order,
                       std::size_t image_size) {
  require(!order.empty(), "batch must contain at least one sample");
  const std::size_t S = image_size, n = order.size();
  const bool with_sil = !samples[order[0]].sil.empty();
  std::vector<T> rgb, sil;
  rgb.reserve(n * 3 * S * S);
  if (with_sil) sil.reserve(n * S * S);
  Batch<T> b;
  for (auto i : order) {
    const auto& s = samples.at(i);
    rgb.insert(rgb.end(), s.rgb.begin(), s.rgb.end());
    if (with_sil) sil.insert(sil.end(), s.sil.begin(), s.sil.end());
    b.labels.push_back(s.label);
  }
  b.rgb = Tensor<T>(Shape{n, 3, S, S}, std::move(rgb));
  if (with_sil) b.sil = Tensor<T>(Shape{n, 1, S, S}, std::move(sil));
  return b;
}

/// Loads every record of a split, in manifest order.
template <typename T>
std::vector<LoadedSample<T>> load_split(const DatasetManifest& m, Split split, std::size_t image_size, bool with_sil) {
  std::vector<LoadedSample<T>> out;
  for (auto i : m.indices_of(split)) out.push_back(load_sample<T>(m, i, image_size, with_sil));
  return out;
}

/// indices address the split's records in manifest order.
template <typename T>
Batch<T> load_batch(const DatasetManifest& m, Split split, const std::vector<std::size_t>& indices,
                    std::size_t image_size, bool with_sil = true) {
  require(image_size >= 1, "image_size must be positive");
  const auto members = m.indices_of(split);
  std::vector<LoadedSample<T>> samples;
  for (auto i : indices) {
    if (i >= members.size())
      fail(ErrorKind::invalid_argument, "index " + std::to_string(i) + " out of range for split " +
                                            std::string(to_string(split)) + " of size " + std::to_string(members.size()));
    samples.push_back(load_sample<T>(m, members[i], image_size, with_sil));
  }
  std::vector<std::size_t> order(samples.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  return stack_samples(samples, order, image_size);
}

}  // namespace mifruit
