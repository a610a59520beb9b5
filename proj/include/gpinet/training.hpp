#pragma once

// Toy training: plain gradient descent on binary cross-entropy between head
// output and ground-truth labels over a fixed pool of synthetic scenes.

#include "gpinet/blocks.hpp"
#include "gpinet/errors.hpp"
#include "gpinet/synthgen.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace gpinet {

struct TrainingConfig {
  ModelConfig model;
  SceneConfig scene;            // template; per-scene seeds are derived from `seed`
  std::size_t scene_count = 4;  // size of the fixed training pool
  std::size_t iterations = 200;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;       // drives initialization and scene seeds
  Ablation ablation;

  /// N = 256, d = 32, T = 3, 50% outliers, sigma = 1 cm, indoor extent.
  static TrainingConfig reference();
  void validate() const;
};

struct TrainingResult {
  Model model;
  /// Mean BCE over the pool before each update, plus the final value:
  /// iterations + 1 entries.
  std::vector<double> loss_curve;
};

/// Raised when a loss or gradient becomes non-finite during training.
class TrainingFault : public NumericFault {
 public:
  TrainingFault(std::size_t iteration, std::string dump);
  std::size_t iteration() const { return iteration_; }
  /// JSON text describing the offending step.
  const std::string& dump() const { return dump_; }

 private:
  std::size_t iteration_;
  std::string dump_;
};

std::vector<Scene> training_scenes(const TrainingConfig& cfg);

/// Mean BCE over `scenes`; differentiable with respect to the model parameters.
/// Batch-mode normalization; statistics are written to `record` if given.
ad::Var training_loss(const Model& model, const std::vector<Scene>& scenes, const Ablation& ablation,
                      std::vector<BatchStatsRecord>* records = nullptr);

/// Starts from `initial` when given, otherwise from Model::initialize(cfg.model, cfg.seed).
TrainingResult train_toy(const TrainingConfig& cfg, std::optional<Model> initial = std::nullopt);

}  // namespace gpinet
