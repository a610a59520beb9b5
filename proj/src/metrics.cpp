#include "gpinet/metrics.hpp"

#include "gpinet/errors.hpp"

#include <string>

namespace gpinet {

ClassificationMetrics classification_metrics(std::span<const double> probs,
                                             const std::vector<bool>& labels, double threshold) {
  if (probs.size() != labels.size()) {
    throw DimensionError("classification_metrics: " + std::to_string(probs.size()) +
                         " probabilities for " + std::to_string(labels.size()) + " labels");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ContractError("classification_metrics: threshold must lie in (0, 1)");
  }
  ClassificationMetrics m;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    if (predicted && labels[i]) ++m.true_positives;
    if (predicted && !labels[i]) ++m.false_positives;
    if (!predicted && labels[i]) ++m.false_negatives;
    if (!predicted && !labels[i]) ++m.true_negatives;
  }
  const auto tp = static_cast<double>(m.true_positives);
  const std::size_t predicted = m.true_positives + m.false_positives;
  const std::size_t actual = m.true_positives + m.false_negatives;
  if (predicted == 0) {
    m.precision_undefined = true;
  } else {
    m.precision = tp / static_cast<double>(predicted);
  }
  if (actual == 0) {
    m.recall_undefined = true;
  } else {
    m.recall = tp / static_cast<double>(actual);
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1_undefined = true;
  }
  return m;
}

}  // namespace gpinet
