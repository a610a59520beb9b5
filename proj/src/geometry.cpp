#include "gpinet/geometry.hpp"

#include "gpinet/errors.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <numbers>

namespace gpinet {

const char* to_string(SceneKind kind) { return kind == SceneKind::indoor ? "indoor" : "outdoor"; }

SceneKind scene_kind_from_string(const std::string& name) {
  if (name == "indoor") return SceneKind::indoor;
  if (name == "outdoor") return SceneKind::outdoor;
  throw ConfigError("unknown scene kind '" + name + "' (expected indoor or outdoor)");
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho < tol && std::abs(rotation.determinant() - 1.0) < tol;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

Eigen::Matrix3d rotation_about_axis(const Eigen::Vector3d& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

void CorrespondenceSet::validate() const {
  if (source.rows() != target.rows()) {
    throw DimensionError("correspondence set: " + std::to_string(source.rows()) +
                         " source points vs " + std::to_string(target.rows()) + " target points");
  }
  if (source.rows() < 1) throw DimensionError("correspondence set is empty");
  if (labels && labels->size() != size()) {
    throw DimensionError("correspondence set: label count does not match point count");
  }
  if (!source.allFinite() || !target.allFinite()) {
    throw NumericFault("correspondence set contains non-finite coordinates");
  }
}

CorrespondenceSet CorrespondenceSet::subset(std::span<const std::size_t> indices) const {
  CorrespondenceSet out;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.source.resize(n, 3);
  out.target.resize(n, 3);
  std::vector<bool> sub_labels;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(k)]);
    out.source.row(k) = source.row(i);
    out.target.row(k) = target.row(i);
    if (labels) sub_labels.push_back((*labels)[static_cast<std::size_t>(i)]);
  }
  if (labels) out.labels = std::move(sub_labels);
  return out;
}

Points apply_transform(const RigidTransform& t, const Points& points) {
  Points out = points * t.rotation.transpose();
  out.rowwise() += t.translation.transpose();
  return out;
}

Eigen::VectorXd residuals(const RigidTransform& t, const CorrespondenceSet& c) {
  return (apply_transform(t, c.source) - c.target).rowwise().norm();
}

std::size_t count_inliers(const RigidTransform& t, const CorrespondenceSet& c, double delta) {
  if (!(delta > 0.0)) throw ContractError("count_inliers: delta must be positive");
  const Eigen::VectorXd r = residuals(t, c);
  return static_cast<std::size_t>((r.array() < delta).count());
}

std::vector<std::size_t> inlier_indices(const RigidTransform& t, const CorrespondenceSet& c,
                                        double delta) {
  if (!(delta > 0.0)) throw ContractError("inlier_indices: delta must be positive");
  const Eigen::VectorXd r = residuals(t, c);
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r[i] < delta) out.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

RigidTransform weighted_kabsch(const CorrespondenceSet& c, std::span<const double> weights) {
  const std::size_t n = c.size();
  if (weights.size() != n) {
    throw ContractError("weighted_kabsch: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(n) + " correspondences");
  }
  double total = 0.0;
  std::size_t positive = 0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ContractError("weighted_kabsch: weights must be finite and non-negative");
    }
    total += w;
    positive += w > 0.0 ? 1 : 0;
  }
  if (!(total > 0.0)) throw ContractError("weighted_kabsch: weights sum to zero");
  if (positive < 3) {
    throw DegenerateGeometryError("weighted_kabsch: fewer than 3 correspondences carry weight");
  }

  Eigen::Vector3d source_centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d target_centroid = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i] / total;
    if (w == 0.0) continue;
    const auto row = static_cast<Eigen::Index>(i);
    source_centroid += w * c.source.row(row).transpose();
    target_centroid += w * c.target.row(row).transpose();
  }

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i] / total;
    if (w == 0.0) continue;
    const auto row = static_cast<Eigen::Index>(i);
    cross += w * (c.source.row(row).transpose() - source_centroid) *
             (c.target.row(row) - target_centroid.transpose());
  }

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  // Rank < 2 leaves the rotation about the remaining axis undetermined.
  if (!(sv[0] > std::numeric_limits<double>::min()) || sv[1] <= 1e-10 * sv[0]) {
    throw DegenerateGeometryError("weighted_kabsch: weighted covariance is rank deficient");
  }
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);

  RigidTransform out;
  out.rotation = v * d.asDiagonal() * u.transpose();
  out.translation = target_centroid - out.rotation * source_centroid;
  return out;
}

RigidTransform fit_subset(const CorrespondenceSet& c, std::span<const std::size_t> indices) {
  std::vector<double> w(c.size(), 0.0);
  for (std::size_t i : indices) w.at(i) = 1.0;
  return weighted_kabsch(c, w);
}

Selection score_candidate(const RigidTransform& t, const CorrespondenceSet& c, double delta,
                          std::size_t index) {
  if (!(delta > 0.0)) throw ContractError("score_candidate: delta must be positive");
  const Eigen::VectorXd r = residuals(t, c);
  Selection s{t, index, 0, 0.0};
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r[i] < delta) {
      ++s.inlier_count;
      total += r[i];
    }
  }
  s.mean_inlier_residual = s.inlier_count > 0 ? total / static_cast<double>(s.inlier_count)
                                              : std::numeric_limits<double>::infinity();
  return s;
}

bool better_selection(const Selection& a, const Selection& b) {
  if (a.inlier_count != b.inlier_count) return a.inlier_count > b.inlier_count;
  if (a.mean_inlier_residual != b.mean_inlier_residual) {
    return a.mean_inlier_residual < b.mean_inlier_residual;
  }
  return a.index < b.index;
}

Selection select_best_transform(std::span<const RigidTransform> candidates,
                                const CorrespondenceSet& c, double delta) {
  if (candidates.empty()) throw ContractError("select_best_transform: no candidates");
  Selection best = score_candidate(candidates[0], c, delta, 0);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    Selection s = score_candidate(candidates[k], c, delta, k);
    if (better_selection(s, best)) best = s;
  }
  return best;
}

double rotation_error(const RigidTransform& est, const RigidTransform& gt) {
  // Same angle as acos((tr - 1) / 2) but stable near 0 and pi.
  const Eigen::Matrix3d delta = gt.rotation.transpose() * est.rotation;
  const Eigen::Vector3d skew(delta(2, 1) - delta(1, 2), delta(0, 2) - delta(2, 0),
                             delta(1, 0) - delta(0, 1));
  const double angle = std::atan2(skew.norm(), delta.trace() - 1.0);
  return angle * 180.0 / std::numbers::pi;
}

double translation_error(const RigidTransform& est, const RigidTransform& gt) {
  return (est.translation - gt.translation).norm() * 100.0;
}

SuccessThresholds success_thresholds(SceneKind scene) {
  return scene == SceneKind::indoor ? SuccessThresholds{15.0, 30.0} : SuccessThresholds{5.0, 60.0};
}

bool registration_success(double re_deg, double te_cm, SceneKind scene) {
  const SuccessThresholds th = success_thresholds(scene);
  return re_deg < th.max_rotation_deg && te_cm < th.max_translation_cm;
}

double default_inlier_threshold(SceneKind scene) {
  return scene == SceneKind::indoor ? 0.10 : 0.60;
}

double spatial_consistency(const CorrespondenceSet& c, std::size_t i, std::size_t j, double sigma) {
  const auto a = static_cast<Eigen::Index>(i);
  const auto b = static_cast<Eigen::Index>(j);
  const double ds = (c.source.row(a) - c.source.row(b)).norm();
  const double dt = (c.target.row(a) - c.target.row(b)).norm();
  const double diff = ds - dt;
  return std::max(0.0, 1.0 - diff * diff / (sigma * sigma));
}

Eigen::MatrixXd spatial_consistency_matrix(const CorrespondenceSet& c, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("spatial_consistency: sigma must be positive");
  const std::size_t n = c.size();
  Eigen::MatrixXd sc(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    sc(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = spatial_consistency(c, i, j, sigma);
      sc(i, j) = v;
      sc(j, i) = v;
    }
  }
  return sc;
}

}  // namespace gpinet
