#pragma once

#include "gpinet/geometry.hpp"
#include "gpinet/pipeline.hpp"

#include <cstdint>

namespace gpinet {

struct RansacOptions {
  std::size_t iterations = 1000;
  double delta = 0.10;
  std::uint64_t seed = 0;
  bool record_models = false;  // keep every sampled model (for auditing)
};

struct RansacResult {
  bool ok = false;
  Hypothesis best;
  std::size_t degenerate_samples = 0;
  std::size_t best_iteration = 0;
  /// Sampled (pre-refit) models when record_models is set; nullopt for a
  /// degenerate sample.
  std::vector<std::optional<RigidTransform>> models;
  /// Pre-refit winner.
  RigidTransform best_sample;
};

/// Plain RANSAC: three distinct correspondences per iteration, unit-weight
/// Kabsch, scoring by inlier count with the select_best_transform tie-break
/// (iteration index as candidate index), one refit on the winner's inliers.
/// Iteration i draws from Rng(derive_seed(seed, i)).
RansacResult ransac(const CorrespondenceSet& c, const RansacOptions& options);

struct SpectralOptions {
  double sigma_d = 0.10;
  double tau = 0.5;
  double tolerance = 1e-9;
  std::size_t max_iterations = 1000;
};

struct SpectralResult {
  Eigen::VectorXd eigenvector;  // unit norm, non-negative
  double eigenvalue = 0.0;
  std::size_t iterations = 0;
  Eigen::VectorXd confidences;          // eigenvector / max entry, in [0, 1]
  std::vector<std::size_t> selected;    // greedy discretization, in acceptance order
};

/// Leading eigenvector of a non-negative symmetric matrix by power iteration
/// on m + shift * I from the uniform vector; `value` is the Rayleigh quotient
/// of m itself. Throws ConvergenceError after `max_iterations`.
void power_iteration(const Eigen::MatrixXd& m, double tolerance, std::size_t max_iterations,
                     Eigen::VectorXd& vector, double& value, std::size_t& iterations,
                     double shift = 0.0);

/// Spectral matching on M_ij = SC(i, j) (i != j), M_ii = 0, followed by greedy
/// discretization: accept the highest remaining score, drop everything with
/// SC < tau to it, repeat until no positive score remains.
SpectralResult spectral_matching(const CorrespondenceSet& c, const SpectralOptions& options);

/// Spectral matching plus a unit-weight fit over the selected set.
struct SpectralRegistration {
  SpectralResult spectral;
  std::optional<RigidTransform> transform;
  std::size_t inlier_count = 0;
};
SpectralRegistration spectral_register(const CorrespondenceSet& c, const SpectralOptions& options,
                                       double delta);

}  // namespace gpinet
