#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "json.hpp"
#include "mifruit/error.hpp"

namespace mifruit {

/// Rows are the true class, columns the predicted class; class 0 is healthy.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 2>, 2> counts{};

  void add(int truth, int predicted) {
    require(truth >= 0 && truth < 2 && predicted >= 0 && predicted < 2, "confusion matrix: class out of range");
    ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
  }
  std::uint64_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
  std::uint64_t row_sum(std::size_t r) const { return counts[r][0] + counts[r][1]; }
  std::uint64_t col_sum(std::size_t c) const { return counts[0][c] + counts[1][c]; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Macro-averaged over the two classes.
struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

inline Metrics compute_metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) fail(ErrorKind::data_invalid, "compute_metrics: confusion matrix is empty");
  auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.accuracy = ratio(cm.counts[0][0] + cm.counts[1][1], total);
  for (std::size_t c = 0; c < 2; ++c) {
    const double p = ratio(cm.counts[c][c], cm.col_sum(c));
    const double r = ratio(cm.counts[c][c], cm.row_sum(c));
    m.precision += p / 2;
    m.recall += r / 2;
    m.f1 += (p + r == 0.0 ? 0.0 : 2 * p * r / (p + r)) / 2;
  }
  return m;
}

/// Predicted class from two logits; ties go to class 0.
template <typename T>
int argmax2(T logit0, T logit1) {
  return logit1 > logit0 ? 1 : 0;
}

using json = nlohmann::json;

inline json to_json(const ConfusionMatrix& cm) {
  return json::array({json::array({cm.counts[0][0], cm.counts[0][1]}), json::array({cm.counts[1][0], cm.counts[1][1]})});
}

inline ConfusionMatrix confusion_from_json(const json& j) {
  ConfusionMatrix cm;
  try {
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c) cm.counts[r][c] = j.at(r).at(c).get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::data_invalid, std::string("confusion matrix must be [[a,b],[c,d]] of counts: ") + e.what());
  }
  return cm;
}

/// Evaluation report: {confusion, accuracy, precision, recall, f1, n}.
inline json evaluation_json(const ConfusionMatrix& cm, const Metrics& m) {
  return {{"confusion", to_json(cm)}, {"accuracy", m.accuracy}, {"precision", m.precision},
          {"recall", m.recall},       {"f1", m.f1},             {"n", cm.total()}};
}

}  // namespace mifruit
