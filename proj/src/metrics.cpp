#include "cgnn/metrics.hpp"

#include <cmath>

#include "cgnn/errors.hpp"

namespace cgnn {

double accuracy(const ConfusionCounts& counts) {
  const std::int64_t total = counts.total();
  if (total <= 0) throw ContractError("accuracy needs at least one evaluated item");
  return static_cast<double>(counts.tp + counts.tn) / static_cast<double>(total);
}

BalancedAccuracy balanced_accuracy(const ConfusionCounts& counts) {
  const std::int64_t pos = counts.tp + counts.fn;
  const std::int64_t neg = counts.tn + counts.fp;
  if (pos <= 0 && neg <= 0) throw ContractError("balanced_accuracy needs at least one item");
  const double tpr = pos > 0 ? static_cast<double>(counts.tp) / static_cast<double>(pos) : 0.0;
  const double tnr = neg > 0 ? static_cast<double>(counts.tn) / static_cast<double>(neg) : 0.0;
  if (pos <= 0) return {tnr, true};
  if (neg <= 0) return {tpr, true};
  return {0.5 * tpr + 0.5 * tnr, false};
}

double average_distance(const std::vector<std::int64_t>& predictions,
                        const std::vector<std::int64_t>& truths) {
  if (predictions.size() != truths.size()) {
    throw ContractError("average_distance: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(truths.size()) + " truths");
  }
  if (predictions.empty()) throw ContractError("average_distance needs at least one item");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    sum += std::abs(static_cast<double>(predictions[i] - truths[i]));
  }
  return sum / static_cast<double>(predictions.size());
}

ConfusionCounts confusion_from_binary(const std::vector<double>& probabilities,
                                      const std::vector<std::int64_t>& truths) {
  if (probabilities.size() != truths.size()) {
    throw ContractError("confusion_from_binary: " + std::to_string(probabilities.size()) +
                        " probabilities vs " + std::to_string(truths.size()) + " truths");
  }
  std::vector<std::int64_t> decided(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) decided[i] = probabilities[i] > 0.5 ? 1 : 0;
  return confusion_from_predictions(decided, truths);
}

ConfusionCounts confusion_from_predictions(const std::vector<std::int64_t>& predictions,
                                           const std::vector<std::int64_t>& truths) {
  if (predictions.size() != truths.size()) {
    throw ContractError("confusion_from_predictions: size mismatch");
  }
  ConfusionCounts counts;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] != 0;
    const bool truth = truths[i] != 0;
    if (pred && truth) ++counts.tp;
    else if (!pred && !truth) ++counts.tn;
    else if (pred && !truth) ++counts.fp;
    else ++counts.fn;
  }
  return counts;
}

}  // namespace cgnn
