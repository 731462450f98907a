#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mifruit/dataset.hpp"
#include "mifruit/image.hpp"
#include "mifruit/silhouette.hpp"

namespace mifruit {

struct PreprocessEntry {
  SampleRecord record;  // as read from the input
  RefinementReport report;
};

struct PreprocessResult {
  DatasetManifest manifest;  // accepted images only
  std::vector<PreprocessEntry> entries;  // every input image, in input order
  std::size_t accepted = 0, rejected = 0;
};

inline json to_json(const PreprocessEntry& e) {
  return {{"rgb", e.record.rgb},
          {"label", to_string(e.record.label)},
          {"verdict", to_string(e.report.verdict)},
          {"reason", to_string(e.report.reason)},
          {"area_frac", e.report.area_frac},
          {"defect_frac", e.report.defect_frac}};
}

inline std::string encode_refinement_report(const PreprocessResult& r) {
  std::string out;
  for (const auto& e : r.entries) out += to_json(e).dump() + "\n";
  return out;
}

/// Writes a self-contained dataset under out_dir: each accepted rgb image is
/// copied to <out>/<rgb path> and its silhouette written to
/// <out>/sil/<rgb path with .pgm>. Rejected images are left out of the
/// returned manifest and recorded in the entries.
inline PreprocessResult preprocess_dataset(const DatasetManifest& in, const std::filesystem::path& out_dir,
                                           const SilhouetteParams& params = {}) {
  params.validate();
  PreprocessResult result;
  result.manifest.base_dir = out_dir;
  result.manifest.provenance = in.provenance;
  result.manifest.provenance.source = "preprocess(" + in.provenance.source + ")";
  for (const auto& rec : in.records) {
    const auto rgb = read_rgb(in.resolve(rec.rgb));
    const auto sil = extract_silhouette(rgb, params);
    result.entries.push_back({rec, sil.report});
    if (!sil.report.accepted()) {
      ++result.rejected;
      continue;
    }
    ++result.accepted;
    SampleRecord out = rec;
    out.sil = (std::filesystem::path("sil") / std::filesystem::path(rec.rgb).replace_extension(".pgm")).generic_string();
    std::error_code ec;
    std::filesystem::create_directories(result.manifest.resolve(out.rgb).parent_path(), ec);
    std::filesystem::create_directories(result.manifest.resolve(out.sil).parent_path(), ec);
    if (ec) fail(ErrorKind::io_error, "cannot create directories under " + out_dir.string() + ": " + ec.message());
    write_image(result.manifest.resolve(out.rgb), rgb);
    write_image(result.manifest.resolve(out.sil), sil.silhouette);
    result.manifest.records.push_back(std::move(out));
  }
  return result;
}

}  // namespace mifruit
