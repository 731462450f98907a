#pragma once

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mifruit/checkpoint.hpp"
#include "mifruit/config.hpp"
#include "mifruit/dataset.hpp"
#include "mifruit/preprocess.hpp"
#include "mifruit/report.hpp"
#include "mifruit/silhouette.hpp"
#include "mifruit/synthetic.hpp"
#include "mifruit/train.hpp"

namespace mifruit::cli {

namespace stdfs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kData = 3, kNumeric = 4 };

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::invalid_state:
      return kUsage;
    case ErrorKind::io_error:
      return kIo;
    case ErrorKind::data_invalid:
    case ErrorKind::format_error:
    case ErrorKind::degenerate_image:
      return kData;
    case ErrorKind::numeric_failure:
      return kNumeric;
  }
  return kUsage;
}

inline std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

template <typename F>
decltype(auto) with_precision(Precision p, F&& f) {
  if (p == Precision::f32) return f.template operator()<float>();
  return f.template operator()<double>();
}

/// Training configuration recorded in a checkpoint's metadata.
inline TrainConfig checkpoint_config(const Checkpoint& ckpt, json* metadata = nullptr) {
  auto meta = parse_json_text(ckpt.metadata, "checkpoint metadata");
  if (!meta.is_object() || !meta.contains("config"))
    fail(ErrorKind::format_error, "checkpoint metadata has no training config");
  auto cfg = resolve_config(meta.at("config"));
  if (metadata) *metadata = std::move(meta);
  return cfg;
}

template <typename T>
FruitNet<T> model_from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg) {
  auto model = make_model<T>(cfg);
  restore_checkpoint(model, ckpt);
  return model;
}

inline std::array<double, 3> parse_ratios(const std::string& text) {
  std::array<double, 3> r{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == 3) fail(ErrorKind::invalid_argument, "--ratios takes exactly three values");
    try {
      std::size_t used = 0;
      r[i] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::invalid_argument, "--ratios: '" + item + "' is not a number");
    }
    ++i;
  }
  if (i != 3) fail(ErrorKind::invalid_argument, "--ratios takes exactly three values");
  return r;
}

// ---------------------------------------------------------------- subcommands

struct SynthArgs {
  std::string out;
  std::size_t per_class = 0;
  std::uint64_t seed = 0;
  double contrast = SyntheticParams{}.defect_contrast;
  double corrupt = 0.0;
  std::size_t size = SyntheticParams{}.image_size;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SyntheticParams p;
  p.per_class = a.per_class;
  p.defect_contrast = a.contrast;
  p.corrupt_frac = a.corrupt;
  p.image_size = a.size;
  const auto corpus = generate_synthetic(p, a.seed, a.out);
  out << "synth: wrote " << corpus.manifest.records.size() << " images and "
      << (stdfs::path(a.out) / "manifest.jsonl").string() << "\n";
  return kOk;
}

struct PreprocessArgs {
  std::string in, out, report;
};

inline int cmd_preprocess(const PreprocessArgs& a, std::ostream& out) {
  const stdfs::path in(a.in);
  const auto manifest = stdfs::exists(in / "manifest.jsonl") ? read_manifest(in / "manifest.jsonl") : scan_dataset(in);
  stdfs::create_directories(a.out);
  const auto result = preprocess_dataset(manifest, a.out);
  write_manifest(result.manifest, stdfs::path(a.out) / "manifest.jsonl");
  const stdfs::path report = a.report.empty() ? stdfs::path(a.out) / "refinement.jsonl" : stdfs::path(a.report);
  write_text_file(report, encode_refinement_report(result));
  out << "preprocess: accepted " << result.accepted << ", rejected " << result.rejected << "; report "
      << report.string() << "\n";
  return kOk;
}

struct SplitArgs {
  std::string manifest, out, ratios = "0.8,0.1,0.1";
  std::uint64_t seed = 0;
};

inline int cmd_split(const SplitArgs& a, std::ostream& out) {
  const auto m = read_manifest(a.manifest);
  const auto split = split_manifest(m, parse_ratios(a.ratios), a.seed);
  const stdfs::path dst = a.out.empty() ? stdfs::path(a.manifest) : stdfs::path(a.out);
  if (!a.out.empty() && stdfs::absolute(dst).parent_path() != stdfs::absolute(a.manifest).parent_path())
    fail(ErrorKind::invalid_argument, "--out must sit next to the input manifest so record paths stay valid");
  write_manifest(split, dst);
  out << "split: train " << split.indices_of(Split::train).size() << ", val " << split.indices_of(Split::val).size()
      << ", test " << split.indices_of(Split::test).size() << " -> " << dst.string() << "\n";
  return kOk;
}

struct TrainArgs {
  std::string manifest, config, out, logs;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto cfg = read_config(a.config);
  const auto m = read_manifest(a.manifest);
  out << "train: config " << to_json(cfg).dump() << "\n";
  return with_precision(cfg.precision, [&]<typename T>() {
    auto model = make_model<T>(cfg);
    const auto result = train(model, m, cfg, [&](const EpochLog& e) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %3zu  loss %.6f  train_acc %.4f  val_acc %.4f\n", e.epoch,
                    e.train_loss, e.train_accuracy, e.val_accuracy);
      out << line << std::flush;
    });
    write_checkpoint(result.best, a.out);
    if (!a.logs.empty()) {
      std::string text = json{{"config", to_json(cfg)}}.dump() + "\n";
      for (const auto& e : result.logs) text += to_json(e).dump() + "\n";
      write_text_file(a.logs, text);
    }
    out << "train: best epoch " << result.best_epoch << " val_accuracy " << result.best_val_accuracy << " -> "
        << a.out << "\n";
    return static_cast<int>(kOk);
  });
}

struct EvalArgs {
  std::string manifest, ckpt, split = "test", json_out;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  json meta;
  const auto cfg = checkpoint_config(ckpt, &meta);
  const auto split = parse_split(a.split);
  if (split == Split::none) fail(ErrorKind::invalid_argument, "--split must be train, val or test");
  const auto m = read_manifest(a.manifest);
  const auto r = with_precision(cfg.precision, [&]<typename T>() {
    auto model = model_from_checkpoint<T>(ckpt, cfg);
    return evaluate(model, m, split);
  });
  auto j = evaluation_json(r.confusion, r.metrics);
  j["split"] = to_string(split);
  j["averaging"] = "macro";
  j["checkpoint_epoch"] = meta.value("epoch", json(nullptr));
  j["config"] = to_json(cfg);
  out << j.dump(2) << "\n";
  if (!a.json_out.empty()) write_text_file(a.json_out, j.dump(2) + "\n");
  return kOk;
}

struct PredictArgs {
  std::string ckpt, rgb, sil;
};

inline int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  const auto cfg = checkpoint_config(ckpt);
  const bool multi = cfg.arch == Arch::multi;
  if (!multi && !a.sil.empty()) fail(ErrorKind::invalid_argument, "--sil given but the model is single-input");
  const auto rgb = read_rgb(a.rgb);
  json j;
  GrayImage sil;
  if (multi) {
    if (!a.sil.empty()) {
      sil = read_gray(a.sil);
      j["silhouette"] = "provided";
    } else {
      const auto extracted = extract_silhouette(rgb);
      sil = extracted.silhouette;
      j["silhouette"] = "extracted";
      j["refinement"] = {{"verdict", to_string(extracted.report.verdict)},
                         {"reason", to_string(extracted.report.reason)},
                         {"defect_frac", extracted.report.defect_frac}};
    }
  } else {
    j["silhouette"] = "none";
  }
  const auto logits = with_precision(cfg.precision, [&]<typename T>() {
    auto model = model_from_checkpoint<T>(ckpt, cfg);
    const std::size_t S = cfg.image_size;
    const auto x = normalize_to_tensor<T>(resize_bilinear(rgb, S, S)).reshaped({1, 3, S, S});
    Tensor<T> s;
    if (multi) s = normalize_to_tensor<T>(resize_bilinear(sil, S, S)).reshaped({1, 1, S, S});
    NoGradGuard guard;
    const auto y = model.forward(x, multi ? &s : nullptr, NormMode::eval);
    return std::array<double, 2>{static_cast<double>(y[0]), static_cast<double>(y[1])};
  });
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
  const int label = argmax2(logits[0], logits[1]);
  j["label"] = to_string(static_cast<Label>(label));
  j["probabilities"] = {{"healthy", e0 / (e0 + e1)}, {"defective", e1 / (e0 + e1)}};
  out << j.dump() << "\n";
  return kOk;
}

struct CompareArgs {
  std::vector<std::string> results;
  std::string json_out;
  double tolerance = 0.0;
};

inline int cmd_compare(const CompareArgs& a, std::ostream& out) {
  std::vector<ResultRow> rows;
  for (const auto& path : a.results) rows.push_back(result_row_from_json(parse_json_text(read_text_file(path), path), path));
  const auto report = compare_report(rows, a.tolerance);
  out << report_text(report);
  if (!a.json_out.empty()) write_text_file(a.json_out, report_json(report).dump(2) + "\n");
  return kOk;
}

// ---------------------------------------------------------------- entry point

/// Parses argv (argv[0] is the program name) and runs one subcommand. Every
/// failure writes a single "error[<kind>] <message>" line to err.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fruit defect classification from RGB images and fruit silhouettes", "mifruit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic healthy/defective corpus");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--per-class", synth.per_class, "Images per class")->required();
  s->add_option("--seed", synth.seed, "Random seed")->required();
  s->add_option("--defect-contrast", synth.contrast, "Defect colour as a fraction of the fruit colour");
  s->add_option("--corrupt-frac", synth.corrupt, "Fraction of images with a tiny or clipped fruit");
  s->add_option("--size", synth.size, "Image side in pixels");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Extract silhouettes and drop images failing refinement");
  p->add_option("--in", pre.in, "Dataset directory (manifest.jsonl or healthy/ and defective/)")->required();
  p->add_option("--out", pre.out, "Output dataset directory")->required();
  p->add_option("--report", pre.report, "Refinement report (JSON Lines)");

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Assign stratified train/val/test splits");
  sp->add_option("--manifest", split.manifest, "Manifest to split")->required();
  sp->add_option("--seed", split.seed, "Random seed")->required();
  sp->add_option("--ratios", split.ratios, "train,val,test fractions");
  sp->add_option("--out", split.out, "Output manifest (default: overwrite the input)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model and keep the best validation epoch");
  t->add_option("--manifest", tr.manifest, "Split manifest with silhouettes")->required();
  t->add_option("--config", tr.config, "Training config JSON")->required();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--logs", tr.logs, "Epoch log (JSON Lines)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  e->add_option("--manifest", ev.manifest, "Split manifest")->required();
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--split", ev.split, "train, val or test");
  e->add_option("--json", ev.json_out, "Write the report here as well");

  PredictArgs pr;
  auto* pd = app.add_subcommand("predict", "Classify one image");
  pd->add_option("--ckpt", pr.ckpt, "Checkpoint")->required();
  pd->add_option("--rgb", pr.rgb, "RGB image (PPM)")->required();
  pd->add_option("--sil", pr.sil, "Silhouette (PGM); extracted automatically when absent");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Merge evaluation reports into a ranked comparison");
  c->add_option("--results", cmp.results, "Evaluation JSON files")->required()->expected(1, -1);
  c->add_option("--json", cmp.json_out, "Write the comparison JSON here");
  c->add_option("--tolerance", cmp.tolerance, "Allowed multi-input shortfall for the flag");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    err << "error[usage] " << one_line(ex.what()) << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (p->parsed()) return cmd_preprocess(pre, out);
    if (sp->parsed()) return cmd_split(split, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (pd->parsed()) return cmd_predict(pr, out);
    if (c->parsed()) return cmd_compare(cmp, out);
  } catch (const Error& ex) {
    err << "error[" << to_string(ex.kind()) << "] " << one_line(ex.what()) << "\n";
    return exit_code(ex.kind());
  } catch (const stdfs::filesystem_error& ex) {
    err << "error[io_error] " << one_line(ex.what()) << "\n";
    return kIo;
  } catch (const std::bad_alloc&) {
    err << "error[numeric_failure] out of memory\n";
    return kNumeric;
  }
  err << "error[usage] no subcommand\n";
  return kUsage;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"mifruit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mifruit::cli
