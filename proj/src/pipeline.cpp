#include "gpinet/pipeline.hpp"

#include "gpinet/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace gpinet {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void require_probabilities(std::span<const double> probs, const CorrespondenceSet& c) {
  if (probs.size() != c.size()) {
    throw DimensionError("probabilities: " + std::to_string(probs.size()) + " values for " +
                         std::to_string(c.size()) + " correspondences");
  }
}

}  // namespace

SeedSet select_seeds(std::span<const double> probs, const CorrespondenceSet& c, std::size_t k,
                     double nms_radius) {
  require_probabilities(probs, c);
  if (k < 1) throw ContractError("select_seeds: k must be at least 1");
  if (!(nms_radius >= 0.0)) throw ContractError("select_seeds: nms_radius must be non-negative");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  SeedSet seeds;
  for (std::size_t i : order) {
    if (seeds.indices.size() >= k) break;
    const auto row = static_cast<Eigen::Index>(i);
    const bool suppressed = std::any_of(seeds.indices.begin(), seeds.indices.end(), [&](std::size_t s) {
      return (c.source.row(row) - c.source.row(static_cast<Eigen::Index>(s))).norm() < nms_radius;
    });
    if (suppressed) continue;
    seeds.indices.push_back(i);
    seeds.probabilities.push_back(probs[i]);
  }
  return seeds;
}

std::vector<std::size_t> build_consensus(std::size_t seed, const CorrespondenceSet& c,
                                         double sigma_d, double tau) {
  if (seed >= c.size()) throw ContractError("build_consensus: seed index out of range");
  if (!(sigma_d > 0.0)) throw ContractError("build_consensus: sigma_d must be positive");
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (j == seed || spatial_consistency(c, seed, j, sigma_d) >= tau) out.push_back(j);
  }
  return out;
}

EstimateOutcome two_stage_estimate(std::size_t seed, const std::vector<std::size_t>& consensus,
                                   const CorrespondenceSet& c, std::span<const double> probs,
                                   double sigma_d, double delta) {
  require_probabilities(probs, c);
  EstimateOutcome outcome;
  std::vector<double> weights(c.size(), 0.0);
  for (std::size_t j : consensus) weights.at(j) = probs[j] * spatial_consistency(c, seed, j, sigma_d);

  Hypothesis h;
  h.seed_index = seed;
  h.consensus = consensus;
  try {
    h.transform = weighted_kabsch(c, weights);
  } catch (const DegenerateInputError& e) {
    outcome.diagnostic = "seed " + std::to_string(seed) + ": stage 1 discarded (" + e.what() + ")";
    return outcome;
  } catch (const ContractError& e) {
    outcome.diagnostic = "seed " + std::to_string(seed) + ": stage 1 discarded (" + e.what() + ")";
    return outcome;
  }

  std::fill(weights.begin(), weights.end(), 0.0);
  for (std::size_t j : inlier_indices(h.transform, c, delta)) weights[j] = probs[j];
  try {
    h.transform = weighted_kabsch(c, weights);
  } catch (const Error& e) {
    outcome.diagnostic = "seed " + std::to_string(seed) + ": stage 2 kept stage-1 fit (" + e.what() + ")";
  }
  h.inlier_count = count_inliers(h.transform, c, delta);
  outcome.hypothesis = std::move(h);
  return outcome;
}

PipelineConfig PipelineConfig::for_scene(SceneKind kind) {
  PipelineConfig cfg;
  cfg.delta = default_inlier_threshold(kind);
  cfg.nms_radius = kind == SceneKind::indoor ? 0.5 : 3.0;
  cfg.sigma_d = cfg.delta;
  return cfg;
}

void PipelineConfig::validate() const {
  if (!(delta > 0.0)) throw ConfigError("pipeline: delta must be positive");
  if (!(nms_radius >= 0.0)) throw ConfigError("pipeline: nms radius must be non-negative");
  if (!(sigma_d > 0.0)) throw ConfigError("pipeline: sigma_d must be positive");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("pipeline: tau must lie in [0, 1]");
}

std::size_t PipelineConfig::seed_count(std::size_t n) const {
  if (num_seeds > 0) return std::min(num_seeds, n);
  return std::max<std::size_t>(1, (n + 9) / 10);
}

RegistrationResult register_with_probabilities(const CorrespondenceSet& c,
                                               std::span<const double> probs,
                                               const PipelineConfig& cfg) {
  cfg.validate();
  c.validate();
  if (c.size() < 4) throw DegenerateInputError("register: need at least 4 correspondences");
  require_probabilities(probs, c);
  const auto start = std::chrono::steady_clock::now();

  RegistrationResult result;
  result.probabilities = Eigen::Map<const Eigen::VectorXd>(probs.data(), static_cast<Eigen::Index>(probs.size()));
  const SeedSet seeds = select_seeds(probs, c, cfg.seed_count(c.size()), cfg.nms_radius);
  for (std::size_t seed : seeds.indices) {
    const auto consensus = build_consensus(seed, c, cfg.sigma_d, cfg.tau);
    EstimateOutcome outcome = two_stage_estimate(seed, consensus, c, probs, cfg.sigma_d, cfg.delta);
    if (!outcome.diagnostic.empty()) result.diagnostics.push_back(std::move(outcome.diagnostic));
    if (outcome.hypothesis) result.hypotheses.push_back(std::move(*outcome.hypothesis));
  }

  if (!result.hypotheses.empty()) {
    std::vector<RigidTransform> candidates;
    for (const auto& h : result.hypotheses) candidates.push_back(h.transform);
    const Selection best = select_best_transform(candidates, c, cfg.delta);
    result.best = result.hypotheses[best.index];
    result.status = RegistrationStatus::success;
  }
  result.estimate_seconds = seconds_since(start);
  return result;
}

RegistrationResult register_correspondences(const CorrespondenceSet& c, const Model& model,
                                            const PipelineConfig& cfg, const ForwardOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Eigen::VectorXd probs;
  {
    ad::NoGradGuard no_grad;
    probs = gpinet_forward(c, model, options).probabilities();
  }
  const double forward_seconds = seconds_since(start);
  RegistrationResult result =
      register_with_probabilities(c, std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())), cfg);
  result.forward_seconds = forward_seconds;
  return result;
}

}  // namespace gpinet
