#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gpinet {

struct ClassificationMetrics {
  double precision = 0.0;  // IP
  double recall = 0.0;     // IR
  double f1 = 0.0;
  // Set when the corresponding denominator was zero; the value is then 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t true_negatives = 0;
};

inline constexpr double kClassificationThreshold = 0.5;

/// A correspondence is predicted inlier when its probability is >= threshold.
ClassificationMetrics classification_metrics(std::span<const double> probs,
                                             const std::vector<bool>& labels,
                                             double threshold = kClassificationThreshold);

}  // namespace gpinet
