#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "mifruit/metrics.hpp"
#include "mifruit/model.hpp"

namespace mifruit {

struct ResultRow {
  Arch arch = Arch::multi;
  BackboneKind backbone = BackboneKind::mobilenet_lite;
  Metrics metrics;
  std::string source;  // where the row came from, e.g. an eval JSON path
};

inline std::string row_key(Arch a, BackboneKind b) { return std::string(to_string(a)) + "/" + std::string(to_string(b)); }

struct ComparisonReport {
  std::vector<ResultRow> rows;                // accuracy descending, ties by (arch, backbone) name
  std::map<std::string, double> mean_accuracy;  // keyed "arch/backbone"
  double tolerance = 0.0;
  bool multi_at_least_single = true;
  std::vector<std::string> compared_backbones;
};

/// Ranks rows and checks, per backbone with both variants present, that the
/// mean Multi-Input accuracy is at least the mean Single-Input accuracy minus
/// the tolerance.
inline ComparisonReport compare_report(std::vector<ResultRow> rows, double tolerance = 0.0) {
  require(rows.size() >= 2, "compare_report: need at least two result rows");
  require(tolerance >= 0.0, "compare_report: tolerance must be non-negative");
  ComparisonReport r;
  r.tolerance = tolerance;
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.metrics.accuracy != b.metrics.accuracy) return a.metrics.accuracy > b.metrics.accuracy;
    return std::make_tuple(to_string(a.arch), to_string(a.backbone)) <
           std::make_tuple(to_string(b.arch), to_string(b.backbone));
  });
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& row : rows) {
    auto& s = sums[row_key(row.arch, row.backbone)];
    s.first += row.metrics.accuracy;
    ++s.second;
  }
  for (const auto& [key, s] : sums) r.mean_accuracy[key] = s.first / static_cast<double>(s.second);
  for (BackboneKind b : {BackboneKind::mobilenet_lite, BackboneKind::vgg_lite}) {
    const auto multi = r.mean_accuracy.find(row_key(Arch::multi, b));
    const auto single = r.mean_accuracy.find(row_key(Arch::single, b));
    if (multi == r.mean_accuracy.end() || single == r.mean_accuracy.end()) continue;
    r.compared_backbones.emplace_back(to_string(b));
    if (multi->second < single->second - tolerance) r.multi_at_least_single = false;
  }
  r.rows = std::move(rows);
  return r;
}

inline json report_json(const ComparisonReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"arch", to_string(row.arch)},
                    {"backbone", to_string(row.backbone)},
                    {"accuracy", row.metrics.accuracy},
                    {"precision", row.metrics.precision},
                    {"recall", row.metrics.recall},
                    {"f1", row.metrics.f1},
                    {"source", row.source}});
  return {{"rows", rows},
          {"mean_accuracy", r.mean_accuracy},
          {"tolerance", r.tolerance},
          {"compared_backbones", r.compared_backbones},
          {"multi_at_least_single", r.multi_at_least_single},
          {"averaging", "macro"}};
}

inline std::string report_text(const ComparisonReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-4s %-7s %-15s %9s %9s %9s %9s\n", "rank", "arch", "backbone", "accuracy",
                "precision", "recall", "f1");
  out += line;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    std::snprintf(line, sizeof line, "%-4zu %-7s %-15s %9.4f %9.4f %9.4f %9.4f\n", i + 1,
                  std::string(to_string(row.arch)).c_str(), std::string(to_string(row.backbone)).c_str(),
                  row.metrics.accuracy, row.metrics.precision, row.metrics.recall, row.metrics.f1);
    out += line;
  }
  out += "precision, recall and f1 are macro-averaged over both classes\n";
  for (const auto& b : r.compared_backbones) {
    std::snprintf(line, sizeof line, "%s: multi mean %.4f, single mean %.4f\n", b.c_str(),
                  r.mean_accuracy.at("multi/" + b), r.mean_accuracy.at("single/" + b));
    out += line;
  }
  out += std::string("multi-input >= single-input") +
         (r.tolerance > 0 ? " (tolerance " + json(r.tolerance).dump() + ")" : std::string()) + ": " +
         (r.compared_backbones.empty() ? "n/a (no matched pairs)" : (r.multi_at_least_single ? "yes" : "no")) + "\n";
  return out;
}

/// Reads an eval JSON as produced by the CLI: evaluation fields plus
/// {"config": {"arch", "backbone", ...}}.
inline ResultRow result_row_from_json(const json& j, const std::string& source) {
  try {
    ResultRow row;
    row.arch = parse_arch(j.at("config").at("arch").get<std::string>());
    row.backbone = parse_backbone(j.at("config").at("backbone").get<std::string>());
    row.metrics = {j.at("accuracy").get<double>(), j.at("precision").get<double>(), j.at("recall").get<double>(),
                   j.at("f1").get<double>()};
    row.source = source;
    return row;
  } catch (const json::exception& e) {
    fail(ErrorKind::data_invalid, source + ": not an evaluation report: " + e.what());
  }
}

}  // namespace mifruit
