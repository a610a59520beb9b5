#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gpinet {

/// N x 3 point coordinates in meters, one point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

enum class SceneKind { indoor, outdoor };

const char* to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& name);

/// Proper rigid motion x -> R x + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  /// True if R is orthonormal and det(R) = +1, both within `tol`.
  bool is_valid(double tol = 1e-9) const;

  RigidTransform inverse() const;
  /// (*this) after `other`: x -> R (R' x + t') + t.
  RigidTransform compose(const RigidTransform& other) const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
};

Eigen::Matrix3d rotation_about_axis(const Eigen::Vector3d& axis, double angle_rad);

/// Putative source/target point pairs with optional ground-truth inlier flags.
struct CorrespondenceSet {
  Points source;
  Points target;
  std::optional<std::vector<bool>> labels;

  std::size_t size() const { return static_cast<std::size_t>(source.rows()); }

  /// Throws DimensionError / NumericFault if the invariants do not hold.
  void validate() const;

  CorrespondenceSet subset(std::span<const std::size_t> indices) const;
};

Points apply_transform(const RigidTransform& t, const Points& points);

/// Residual norms ||R p_s + t - p_t|| for every correspondence.
Eigen::VectorXd residuals(const RigidTransform& t, const CorrespondenceSet& c);

/// Number of correspondences with residual strictly below `delta`.
std::size_t count_inliers(const RigidTransform& t, const CorrespondenceSet& c, double delta);

/// Indices with residual strictly below `delta`, ascending.
std::vector<std::size_t> inlier_indices(const RigidTransform& t, const CorrespondenceSet& c,
                                        double delta);

/// Weighted least-squares rigid fit (Procrustes/Kabsch by SVD). Minimizes
/// sum_i w_i ||R p_s + t - p_t||^2 and always returns a proper rotation.
///
/// Throws ContractError for a weight vector of the wrong length, negative
/// weights or a zero total, and DegenerateGeometryError when fewer than three
/// points carry weight or the weighted points are collinear.
RigidTransform weighted_kabsch(const CorrespondenceSet& c, std::span<const double> weights);

/// Unit weights restricted to `indices`.
RigidTransform fit_subset(const CorrespondenceSet& c, std::span<const std::size_t> indices);

struct Selection {
  RigidTransform transform;
  std::size_t index = 0;
  std::size_t inlier_count = 0;
  double mean_inlier_residual = 0.0;
};

/// Scores one candidate the way select_best_transform does.
Selection score_candidate(const RigidTransform& t, const CorrespondenceSet& c, double delta,
                          std::size_t index = 0);

/// True if `a` beats `b`: more inliers, then lower mean inlier residual, then
/// lower candidate index.
bool better_selection(const Selection& a, const Selection& b);

/// Candidate with the most inliers under `delta`, ties broken by better_selection.
Selection select_best_transform(std::span<const RigidTransform> candidates,
                                const CorrespondenceSet& c, double delta);

/// Geodesic angle between the two rotations, in degrees.
double rotation_error(const RigidTransform& est, const RigidTransform& gt);

/// Distance between the translations, in centimeters.
double translation_error(const RigidTransform& est, const RigidTransform& gt);

struct SuccessThresholds {
  double max_rotation_deg;
  double max_translation_cm;
};

SuccessThresholds success_thresholds(SceneKind scene);

/// RE < 15 deg and TE < 30 cm indoors, RE < 5 deg and TE < 60 cm outdoors.
bool registration_success(double re_deg, double te_cm, SceneKind scene);

/// Default inlier threshold delta: 0.10 m indoor, 0.60 m outdoor.
double default_inlier_threshold(SceneKind scene);

/// Pairwise length-preservation score
///   SC(i, j) = max(0, 1 - (||p_s_i - p_s_j|| - ||p_t_i - p_t_j||)^2 / sigma^2).
double spatial_consistency(const CorrespondenceSet& c, std::size_t i, std::size_t j, double sigma);

/// Dense N x N matrix of SC scores. The diagonal is 1.
Eigen::MatrixXd spatial_consistency_matrix(const CorrespondenceSet& c, double sigma);

}  // namespace gpinet
