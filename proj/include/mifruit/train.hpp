#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"
#include "mifruit/adam.hpp"
#include "mifruit/checkpoint.hpp"
#include "mifruit/dataset.hpp"
#include "mifruit/metrics.hpp"
#include "mifruit/model.hpp"
#include "mifruit/ops.hpp"

namespace mifruit {

/// Keeps freed activation buffers in the heap instead of returning them to
/// the kernel after every step.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
}

enum class Precision { f32, f64 };

inline std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline Precision parse_precision(std::string_view s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  fail(ErrorKind::invalid_argument, "unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

struct TrainConfig {
  std::string profile = "desk";
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
  BackboneKind backbone = BackboneKind::mobilenet_lite;
  Arch arch = Arch::multi;
  Precision precision = Precision::f32;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t hidden = 128;

  /// 224 x 224, lr 1e-5, batch 16, up to 60 epochs.
  static TrainConfig paper() {
    TrainConfig c;
    c.profile = "paper";
    c.learning_rate = 1e-5;
    c.batch_size = 16;
    c.max_epochs = 60;
    c.image_size = 224;
    return c;
  }

  /// 64 x 64, lr 1e-3, batch 16, up to 30 epochs.
  static TrainConfig desk() { return TrainConfig{}; }

  void validate() const {
    require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning rate must be positive");
    require(batch_size >= 1, "batch_size must be positive");
    require(max_epochs >= 1, "epochs must be positive");
    require(image_size >= kMinInputSize, "image_size must be at least " + std::to_string(kMinInputSize));
    require(hidden >= 1, "hidden width must be positive");
    adam().validate();
  }

  ModelSpec model_spec() const { return ModelSpec{backbone, arch, image_size, hidden}; }
  AdamConfig adam() const { return AdamConfig{learning_rate, beta1, beta2, eps}; }
};

inline json to_json(const TrainConfig& c) {
  return {{"profile", c.profile},
          {"lr", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.max_epochs},
          {"image_size", c.image_size},
          {"seed", c.seed},
          {"backbone", std::string(to_string(c.backbone))},
          {"arch", std::string(to_string(c.arch))},
          {"precision", std::string(to_string(c.precision))}};
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const TrainConfig& c) { return fnv1a64(to_json(c).dump()); }

/// Independent stream for a named purpose, derived from the config seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  return prng_next(PrngState{seed ^ fnv1a64(purpose)}).value;
}

template <typename T>
FruitNet<T> make_model(const TrainConfig& c) {
  c.validate();
  Prng prng(c.seed);
  return FruitNet<T>(c.model_spec(), prng);
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0, train_accuracy = 0, val_accuracy = 0;
  bool operator==(const EpochLog&) const = default;
};

inline json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"train_accuracy", e.train_accuracy},
          {"val_accuracy", e.val_accuracy}};
}

/// 0-based index of the highest value; ties go to the earliest.
inline std::size_t select_best_epoch(std::span<const double> val_accuracy) {
  require(!val_accuracy.empty(), "select_best_epoch: no epochs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_accuracy.size(); ++i)
    if (val_accuracy[i] > val_accuracy[best]) best = i;
  return best;
}

/// Batch sizes covering n samples; the last partial batch is kept, but a
/// trailing batch of one is merged into its predecessor.
inline std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch) {
  require(batch >= 1, "batch size must be positive");
  std::vector<std::size_t> out(n / batch, batch);
  if (const auto rest = n % batch; rest > 0) {
    if (rest == 1 && !out.empty()) ++out.back();
    else out.push_back(rest);
  }
  return out;
}

// ---------------------------------------------------------------- evaluation

struct EvalResult {
  ConfusionMatrix confusion;
  Metrics metrics;
};

/// Predicted class per sample, eval mode, in sample order.
template <typename T>
std::vector<int> predict_classes(FruitNet<T>& model, const std::vector<LoadedSample<T>>& samples,
                                 std::size_t batch = 32) {
  NoGradGuard guard;
  std::vector<int> out;
  const std::size_t S = model.spec().image_size;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> order(std::min(batch, samples.size() - start));
    std::iota(order.begin(), order.end(), start);
    const auto b = stack_samples(samples, order, S);
    const auto logits = model.forward(b.rgb, model.is_multi_input() ? &b.sil : nullptr, NormMode::eval);
    for (std::size_t i = 0; i < order.size(); ++i) out.push_back(argmax2(logits[2 * i], logits[2 * i + 1]));
  }
  return out;
}

template <typename T>
EvalResult evaluate(FruitNet<T>& model, const std::vector<LoadedSample<T>>& samples, std::size_t batch = 32) {
  if (samples.empty()) fail(ErrorKind::data_invalid, "evaluate: split is empty");
  const auto predicted = predict_classes(model, samples, batch);
  EvalResult r;
  for (std::size_t i = 0; i < samples.size(); ++i) r.confusion.add(samples[i].label, predicted[i]);
  r.metrics = compute_metrics(r.confusion);
  return r;
}

template <typename T>
EvalResult evaluate(FruitNet<T>& model, const DatasetManifest& m, Split split, std::size_t batch = 32) {
  if (m.indices_of(split).empty())
    fail(ErrorKind::data_invalid, "evaluate: split '" + std::string(to_string(split)) + "' is empty");
  return evaluate(model, load_split<T>(m, split, model.spec().image_size, model.is_multi_input()), batch);
}

// ---------------------------------------------------------------- training

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> logs;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_accuracy = 0;
};

/// {epoch, val_accuracy, config_hash, config}
inline std::string checkpoint_metadata(const TrainConfig& c, std::size_t epoch, double val_accuracy) {
  return json{{"epoch", epoch}, {"val_accuracy", val_accuracy}, {"config_hash", config_hash(c)}, {"config", to_json(c)}}
      .dump();
}

using EpochCallback = std::function<void(const EpochLog&)>;

template <typename T>
TrainResult train(FruitNet<T>& model, const std::vector<LoadedSample<T>>& train_set,
                  const std::vector<LoadedSample<T>>& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(model.spec().image_size == cfg.image_size && model.spec().arch == cfg.arch &&
              model.spec().backbone == cfg.backbone,
          "train: model does not match the configuration");
  if (train_set.empty()) fail(ErrorKind::data_invalid, "train: training split is empty");
  if (val_set.empty()) fail(ErrorKind::data_invalid, "train: validation split is empty");
  require(cfg.batch_size <= train_set.size(), "batch_size " + std::to_string(cfg.batch_size) +
                                                  " exceeds the training split size " +
                                                  std::to_string(train_set.size()));
  const bool multi = model.is_multi_input();
  if (multi && (train_set.front().sil.empty() || val_set.front().sil.empty()))
    fail(ErrorKind::data_invalid, "train: multi-input model needs silhouettes for every sample");

  auto& params = model.parameters();
  auto state = make_adam_state(params);
  const auto adam = cfg.adam();
  Prng shuffle_prng(derive_seed(cfg.seed, "shuffle"));
  const auto sizes = batch_sizes(train_set.size(), cfg.batch_size);

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, shuffle_prng);
    double loss_sum = 0;
    std::size_t correct = 0, start = 0;
    for (auto n : sizes) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(start + n));
      start += n;
      const auto b = stack_samples(train_set, idx, cfg.image_size);
      const auto logits = model.forward(b.rgb, multi ? &b.sil : nullptr, NormMode::train);
      const auto [loss, probs] = softmax_cross_entropy(logits, b.labels);
      const double l = static_cast<double>(loss.item());
      if (!std::isfinite(l))
        fail(ErrorKind::numeric_failure, "train: non-finite loss in epoch " + std::to_string(epoch));
      params.zero_grad();
      backward(loss);
      try {
        adam_step(params, state, adam);
      } catch (const Error& e) {
        fail(e.kind(), "train: epoch " + std::to_string(epoch) + ": " + e.what());
      }
      loss_sum += l * static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) correct += argmax2(probs[2 * i], probs[2 * i + 1]) == b.labels[i];
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(train_set.size());
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    log.val_accuracy = evaluate(model, val_set).metrics.accuracy;
    result.logs.push_back(log);
    if (epoch == 1 || log.val_accuracy > result.best_val_accuracy) {
      result.best_epoch = epoch;
      result.best_val_accuracy = log.val_accuracy;
      result.best = capture_checkpoint(model, checkpoint_metadata(cfg, epoch, log.val_accuracy));
    }
    if (on_epoch) on_epoch(log);
  }
  return result;
}

template <typename T>
TrainResult train(FruitNet<T>& model, const DatasetManifest& m, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
  const bool multi = cfg.arch == Arch::multi;
  return train(model, load_split<T>(m, Split::train, cfg.image_size, multi),
               load_split<T>(m, Split::val, cfg.image_size, multi), cfg, on_epoch);
}

}  // namespace mifruit
