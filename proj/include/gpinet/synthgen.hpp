#pragma once

// Seeded synthetic correspondence scenes with a known rigid transform.
//
// Draw order, all from one Rng(seed):
//   1. rotation axis (three normals, normalized), angle ~ U[0, pi]
//   2. translation ~ U[-extent, extent]^3
//   3. source points ~ U[-extent, extent]^3, row by row
//   4. Fisher-Yates shuffle of 0..N-1; the first round(ratio*N) are outliers
//   5. per inlier (ascending index): three N(0, sigma^2) noise draws
//   6. per outlier (ascending index): a point ~ U over the axis-aligned
//      bounding box of the noise-free transformed source points

#include "gpinet/geometry.hpp"

#include <cstdint>

namespace gpinet {

struct SceneConfig {
  std::size_t n_correspondences = 1000;
  double outlier_ratio = 0.5;
  double noise_sigma = 0.01;
  double extent = 3.0;
  std::uint64_t seed = 0;
  SceneKind scene = SceneKind::indoor;

  /// Extent 3 m indoors, 30 m outdoors.
  static SceneConfig for_scene(SceneKind kind);

  void validate() const;
  std::size_t outlier_count() const;
};

double default_extent(SceneKind kind);

struct Scene {
  CorrespondenceSet correspondences;
  RigidTransform ground_truth;
};

Scene generate(const SceneConfig& cfg);

}  // namespace gpinet
