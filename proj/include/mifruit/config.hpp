#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mifruit/train.hpp"

namespace mifruit {

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{"profile", "lr",   "batch_size", "epochs",   "image_size",
                                          "seed",    "backbone", "arch",   "precision"};
  return keys;
}

/// Starts from the named profile (default "desk") and applies explicit keys.
inline TrainConfig resolve_config(const json& j) {
  if (!j.is_object()) fail(ErrorKind::invalid_argument, "config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!config_keys().count(key)) fail(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
  try {
    TrainConfig c;
    const std::string profile = j.value("profile", std::string("desk"));
    if (profile == "paper") c = TrainConfig::paper();
    else if (profile == "desk") c = TrainConfig::desk();
    else fail(ErrorKind::invalid_argument, "unknown profile '" + profile + "' (expected paper or desk)");
    auto positive_int = [&](const char* key, std::size_t& dst) {
      if (!j.contains(key)) return;
      const auto& v = j.at(key);
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0)
        fail(ErrorKind::invalid_argument, std::string("config key '") + key + "' must be a positive integer");
      dst = v.get<std::size_t>();
    };
    if (j.contains("lr")) {
      if (!j.at("lr").is_number()) fail(ErrorKind::invalid_argument, "config key 'lr' must be a number");
      c.learning_rate = j.at("lr").get<double>();
    }
    positive_int("batch_size", c.batch_size);
    positive_int("epochs", c.max_epochs);
    positive_int("image_size", c.image_size);
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned())
        fail(ErrorKind::invalid_argument, "config key 'seed' must be a non-negative integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("backbone")) c.backbone = parse_backbone(j.at("backbone").get<std::string>());
    if (j.contains("arch")) c.arch = parse_arch(j.at("arch").get<std::string>());
    if (j.contains("precision")) c.precision = parse_precision(j.at("precision").get<std::string>());
    c.validate();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_argument, std::string("config: ") + e.what());
  }
}

inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::format_error, source + ": invalid JSON: " + e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io_error, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorKind::io_error, "write failed for " + path.string());
}

inline TrainConfig read_config(const std::filesystem::path& path) {
  return resolve_config(parse_json_text(read_text_file(path), path.string()));
}

}  // namespace mifruit
