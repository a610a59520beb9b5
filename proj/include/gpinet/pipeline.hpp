#pragma once

// Registration back-end: seed selection, consensus sets grown from each seed,
// a two-stage weighted fit per seed, and final selection of the hypothesis
// with the most inliers.
//
// The seed/consensus/two-stage mechanics are a reconstruction: probabilities
// pick seeds, pairwise length consistency grows consensus sets, and each set
// is fitted twice (consensus weights, then inliers of the first fit).

#include "gpinet/blocks.hpp"
#include "gpinet/geometry.hpp"

#include <string>
#include <vector>

namespace gpinet {

struct SeedSet {
  std::vector<std::size_t> indices;  // sorted by descending probability
  std::vector<double> probabilities;
};

/// Greedy sweep in descending probability (ties: lower index first). A
/// candidate is dropped if its source point lies strictly closer than
/// `nms_radius` to an already kept seed.
SeedSet select_seeds(std::span<const double> probs, const CorrespondenceSet& c, std::size_t k,
                     double nms_radius);

/// { j : SC(seed, j) >= tau }, ascending. Always contains the seed.
std::vector<std::size_t> build_consensus(std::size_t seed, const CorrespondenceSet& c,
                                         double sigma_d, double tau);

struct Hypothesis {
  RigidTransform transform;
  std::size_t seed_index = 0;
  std::vector<std::size_t> consensus;
  std::size_t inlier_count = 0;
};

struct EstimateOutcome {
  std::optional<Hypothesis> hypothesis;
  std::string diagnostic;  // set when the hypothesis was discarded or fell back
};

/// Stage 1: weighted fit over the consensus with weights probs_j * SC(seed, j).
/// Stage 2: inliers of the stage-1 transform over the whole set at `delta`,
/// refit with weights probs. If stage 2 is degenerate the stage-1 transform
/// is kept. A degenerate stage 1 discards the hypothesis.
EstimateOutcome two_stage_estimate(std::size_t seed, const std::vector<std::size_t>& consensus,
                                   const CorrespondenceSet& c, std::span<const double> probs,
                                   double sigma_d, double delta);

struct PipelineConfig {
  double delta = 0.10;       // inlier threshold, m
  double nms_radius = 0.5;   // m
  double tau = 0.5;
  double sigma_d = 0.10;     // m
  std::size_t num_seeds = 0; // 0: max(1, ceil(N / 10))

  /// δ = 0.10 / nms 0.5 m indoors, δ = 0.60 / nms 3 m outdoors, σ_d = δ.
  static PipelineConfig for_scene(SceneKind kind);
  void validate() const;
  std::size_t seed_count(std::size_t n) const;
};

enum class RegistrationStatus { success, all_degenerate };

struct RegistrationResult {
  RegistrationStatus status = RegistrationStatus::all_degenerate;
  Hypothesis best;
  std::vector<Hypothesis> hypotheses;
  std::vector<std::string> diagnostics;
  Eigen::VectorXd probabilities;
  double forward_seconds = 0.0;
  double estimate_seconds = 0.0;

  bool ok() const { return status == RegistrationStatus::success; }
};

/// Back-end only: registration from externally supplied probabilities.
RegistrationResult register_with_probabilities(const CorrespondenceSet& c,
                                               std::span<const double> probs,
                                               const PipelineConfig& cfg);

/// Network forward pass followed by the back-end.
RegistrationResult register_correspondences(const CorrespondenceSet& c, const Model& model,
                                            const PipelineConfig& cfg,
                                            const ForwardOptions& options = {});

}  // namespace gpinet
