#pragma once

#include <cstdint>
#include <vector>

namespace cgnn {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }

  bool operator==(const ConfusionCounts&) const = default;
};

// (TP + TN) / total. Throws ContractError on an empty count.
double accuracy(const ConfusionCounts& counts);

// 0.5*TPR + 0.5*TNR. When one class never occurs, its rate is undefined:
// the defined term is returned alone and `partial` is set so reports can
// flag the number.
struct BalancedAccuracy {
  double value = 0.0;
  bool partial = false;
};
BalancedAccuracy balanced_accuracy(const ConfusionCounts& counts);

// Mean L1 distance between integer predictions and truths.
double average_distance(const std::vector<std::int64_t>& predictions,
                        const std::vector<std::int64_t>& truths);

// Thresholds probabilities at 0.5 and tallies against binary truths.
ConfusionCounts confusion_from_binary(const std::vector<double>& probabilities,
                                      const std::vector<std::int64_t>& truths);

// Tallies already-decided binary predictions.
ConfusionCounts confusion_from_predictions(const std::vector<std::int64_t>& predictions,
                                           const std::vector<std::int64_t>& truths);

}  // namespace cgnn
