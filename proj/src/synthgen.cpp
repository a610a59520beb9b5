#include "gpinet/synthgen.hpp"

#include "gpinet/errors.hpp"
#include "gpinet/random.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace gpinet {

double default_extent(SceneKind kind) { return kind == SceneKind::indoor ? 3.0 : 30.0; }

SceneConfig SceneConfig::for_scene(SceneKind kind) {
  SceneConfig cfg;
  cfg.scene = kind;
  cfg.extent = default_extent(kind);
  return cfg;
}

void SceneConfig::validate() const {
  if (n_correspondences < 4) throw ConfigError("scene: need at least 4 correspondences");
  if (!(outlier_ratio >= 0.0 && outlier_ratio <= 1.0)) {
    throw ConfigError("scene: outlier ratio must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("scene: noise sigma must be non-negative");
  }
  if (!(extent > 0.0) || !std::isfinite(extent)) throw ConfigError("scene: extent must be positive");
}

std::size_t SceneConfig::outlier_count() const {
  return static_cast<std::size_t>(std::lround(outlier_ratio * static_cast<double>(n_correspondences)));
}

Scene generate(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto n = static_cast<Eigen::Index>(cfg.n_correspondences);

  Eigen::Vector3d axis;
  do {
    axis = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
  } while (axis.norm() < 1e-12);
  const double angle = rng.uniform(0.0, std::numbers::pi);

  Scene scene;
  scene.ground_truth.rotation = rotation_about_axis(axis, angle);
  for (int k = 0; k < 3; ++k) scene.ground_truth.translation[k] = rng.uniform(-cfg.extent, cfg.extent);

  CorrespondenceSet& c = scene.correspondences;
  c.source.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) c.source(i, k) = rng.uniform(-cfg.extent, cfg.extent);
  }

  std::vector<std::size_t> order(cfg.n_correspondences);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng.index(i + 1)]);
  }
  std::vector<bool> labels(cfg.n_correspondences, true);
  const std::size_t n_out = cfg.outlier_count();
  for (std::size_t k = 0; k < n_out; ++k) labels[order[k]] = false;

  const Points clean = apply_transform(scene.ground_truth, c.source);
  c.target = clean;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!labels[static_cast<std::size_t>(i)]) continue;
    for (int k = 0; k < 3; ++k) c.target(i, k) += cfg.noise_sigma * rng.normal();
  }
  const Eigen::RowVector3d lo = clean.colwise().minCoeff();
  const Eigen::RowVector3d hi = clean.colwise().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)]) continue;
    for (int k = 0; k < 3; ++k) c.target(i, k) = rng.uniform(lo[k], hi[k]);
  }
  c.labels = std::move(labels);
  return scene;
}

}  // namespace gpinet
