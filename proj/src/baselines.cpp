#include "gpinet/baselines.hpp"

#include "gpinet/errors.hpp"
#include "gpinet/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace gpinet {

RansacResult ransac(const CorrespondenceSet& c, const RansacOptions& options) {
  c.validate();
  const std::size_t n = c.size();
  if (n < 3) throw DegenerateInputError("ransac: need at least 3 correspondences");
  if (options.iterations < 1) throw ConfigError("ransac: iterations must be at least 1");
  if (!(options.delta > 0.0)) throw ContractError("ransac: delta must be positive");

  RansacResult result;
  std::optional<Selection> best;
  std::array<std::size_t, 3> sample{};
  for (std::size_t it = 0; it < options.iterations; ++it) {
    Rng rng(derive_seed(options.seed, it));
    sample[0] = rng.index(n);
    do {
      sample[1] = rng.index(n);
    } while (sample[1] == sample[0]);
    do {
      sample[2] = rng.index(n);
    } while (sample[2] == sample[0] || sample[2] == sample[1]);

    RigidTransform model;
    try {
      model = fit_subset(c, sample);
    } catch (const DegenerateInputError&) {
      ++result.degenerate_samples;
      if (options.record_models) result.models.emplace_back(std::nullopt);
      continue;
    }
    if (options.record_models) result.models.emplace_back(model);
    Selection s = score_candidate(model, c, options.delta, it);
    if (!best || better_selection(s, *best)) best = s;
  }
  if (!best) return result;

  result.best_sample = best->transform;
  result.best_iteration = best->index;
  result.best.transform = best->transform;
  const auto inliers = inlier_indices(best->transform, c, options.delta);
  if (inliers.size() >= 3) {
    try {
      result.best.transform = fit_subset(c, inliers);
    } catch (const DegenerateInputError&) {
      // Keep the minimal-sample model.
    }
  }
  result.best.consensus = inliers;
  result.best.inlier_count = count_inliers(result.best.transform, c, options.delta);
  result.ok = true;
  return result;
}

void power_iteration(const Eigen::MatrixXd& m, double tolerance, std::size_t max_iterations,
                     Eigen::VectorXd& vector, double& value, std::size_t& iterations, double shift) {
  const Eigen::Index n = m.rows();
  vector = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  for (iterations = 1; iterations <= max_iterations; ++iterations) {
    Eigen::VectorXd next = m * vector + shift * vector;
    const double norm = next.norm();
    if (!(norm > 0.0)) {
      throw DegenerateInputError("power_iteration: matrix annihilates the iterate (no compatible pairs)");
    }
    next /= norm;
    const double change = (next - vector).norm();
    vector = std::move(next);
    if (change < tolerance) {
      value = vector.dot(m * vector);
      return;
    }
  }
  value = vector.dot(m * vector);
  throw ConvergenceError("power_iteration: no convergence after " + std::to_string(max_iterations) +
                         " iterations (last eigenvalue estimate " + std::to_string(value) + ")");
}

SpectralResult spectral_matching(const CorrespondenceSet& c, const SpectralOptions& options) {
  c.validate();
  if (c.size() < 2) throw DegenerateInputError("spectral_matching: need at least 2 correspondences");
  Eigen::MatrixXd m = spatial_consistency_matrix(c, options.sigma_d);
  m.diagonal().setZero();

  SpectralResult r;
  // Iterating on M + I (the SC matrix itself) keeps eigenvectors and breaks
  // the +-lambda symmetry of bipartite-like compatibility graphs.
  power_iteration(m, options.tolerance, options.max_iterations, r.eigenvector, r.eigenvalue,
                  r.iterations, 1.0);
  if (!(r.eigenvalue > 0.0)) {
    throw DegenerateInputError("spectral_matching: no mutually compatible correspondences");
  }
  r.eigenvector = r.eigenvector.cwiseMax(0.0);
  const double top = r.eigenvector.maxCoeff();
  r.confidences = top > 0.0 ? Eigen::VectorXd(r.eigenvector / top) : r.eigenvector;

  Eigen::VectorXd scores = r.eigenvector;
  while (true) {
    Eigen::Index best = 0;
    const double s = scores.maxCoeff(&best);
    if (!(s > 0.0)) break;
    r.selected.push_back(static_cast<std::size_t>(best));
    scores[best] = 0.0;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
      if (scores[j] > 0.0 && m(best, j) < options.tau) scores[j] = 0.0;
    }
  }
  return r;
}

SpectralRegistration spectral_register(const CorrespondenceSet& c, const SpectralOptions& options,
                                       double delta) {
  SpectralRegistration out;
  out.spectral = spectral_matching(c, options);
  try {
    out.transform = fit_subset(c, out.spectral.selected);
    out.inlier_count = count_inliers(*out.transform, c, delta);
  } catch (const DegenerateInputError&) {
    out.transform.reset();
  }
  return out;
}

}  // namespace gpinet
