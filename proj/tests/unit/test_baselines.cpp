#include "doctest.h"

#include "gpinet/baselines.hpp"
#include "gpinet/errors.hpp"
#include "gpinet/synthgen.hpp"
#include "test_support.hpp"

#include <Eigen/Eigenvalues>

using namespace gpinet;

namespace {

Scene make_scene(std::size_t n, double ratio, std::uint64_t seed, double sigma = 0.01) {
  SceneConfig cfg;
  cfg.n_correspondences = n;
  cfg.outlier_ratio = ratio;
  cfg.noise_sigma = sigma;
  cfg.seed = seed;
  return generate(cfg);
}

bool succeeded(const RansacResult& r, const Scene& s) {
  return r.ok && registration_success(rotation_error(r.best.transform, s.ground_truth),
                                      translation_error(r.best.transform, s.ground_truth), SceneKind::indoor);
}

// Three points forming a rigid triangle plus one correspondence that breaks every distance.
CorrespondenceSet four_correspondences() {
  CorrespondenceSet c;
  c.source = Points(4, 3);
  c.source << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  c.target = c.source;
  c.target.row(3) << 5, 5, 5;
  return c;
}

}  // namespace

TEST_CASE("ransac on clean data succeeds in one iteration") {
  const Scene s = make_scene(200, 0.0, 1);
  RansacOptions opts;
  opts.iterations = 1;
  opts.seed = 3;
  const RansacResult r = ransac(s.correspondences, opts);
  CHECK(succeeded(r, s));
  CHECK(r.best.inlier_count == count_inliers(r.best.transform, s.correspondences, 0.1));
}

TEST_CASE("ransac is deterministic and agrees with exhaustive rescoring") {
  const Scene s = make_scene(300, 0.7, 2);
  RansacOptions opts;
  opts.iterations = 300;
  opts.seed = 77;
  opts.record_models = true;
  const RansacResult a = ransac(s.correspondences, opts);
  const RansacResult b = ransac(s.correspondences, opts);
  CHECK(a.best.transform.rotation == b.best.transform.rotation);
  CHECK(a.best_iteration == b.best_iteration);
  REQUIRE(a.models.size() == 300);

  std::size_t oracle = 0, best = 0;
  double best_mean = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t k = 0; k < a.models.size(); ++k) {
    if (!a.models[k]) continue;
    const Eigen::VectorXd res = residuals(*a.models[k], s.correspondences);
    std::size_t count = 0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < res.size(); ++i)
      if (res[i] < 0.1) {
        ++count;
        total += res[i];
      }
    const double mean = count ? total / count : std::numeric_limits<double>::infinity();
    if (!any || count > best || (count == best && mean < best_mean)) {
      any = true;
      oracle = k;
      best = count;
      best_mean = mean;
    }
  }
  CHECK(a.best_iteration == oracle);
  CHECK(a.best_sample.rotation == a.models[oracle]->rotation);
}

TEST_CASE("ransac success grows with the iteration budget") {
  int low = 0, high = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Scene s = make_scene(300, 0.8, 1000 + seed);
    RansacOptions opts;
    opts.seed = seed;
    opts.iterations = 20;
    low += succeeded(ransac(s.correspondences, opts), s);
    opts.iterations = 2000;
    high += succeeded(ransac(s.correspondences, opts), s);
  }
  CHECK(high >= low);
  CHECK(high >= 28);
}

TEST_CASE("ransac failure on fully degenerate data") {
  CorrespondenceSet line;
  line.source = Points(5, 3);
  for (int i = 0; i < 5; ++i) line.source.row(i) << i, 0, 0;
  line.target = line.source;
  RansacOptions opts;
  opts.iterations = 20;
  const RansacResult r = ransac(line, opts);
  CHECK_FALSE(r.ok);
  CHECK(r.degenerate_samples == 20);
  opts.iterations = 0;
  CHECK_THROWS_AS(ransac(line, opts), ConfigError);
}

TEST_CASE("spectral matching on four correspondences matches a dense eigensolver") {
  const CorrespondenceSet c = four_correspondences();
  const SpectralResult r = spectral_matching(c, SpectralOptions{});

  Eigen::MatrixXd m(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double ds = (c.source.row(static_cast<Eigen::Index>(i)) - c.source.row(static_cast<Eigen::Index>(j))).norm();
      const double dt = (c.target.row(static_cast<Eigen::Index>(i)) - c.target.row(static_cast<Eigen::Index>(j))).norm();
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          i == j ? 0.0 : std::max(0.0, 1.0 - (ds - dt) * (ds - dt) / 0.01);
    }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd top = es.eigenvectors().col(3);
  if (top.sum() < 0) top = -top;
  CHECK(std::abs(r.eigenvalue - es.eigenvalues()[3]) < 1e-8);
  CHECK((r.eigenvector - top).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(r.eigenvector[3] < 1e-8);
  std::vector<std::size_t> sel = r.selected;
  std::sort(sel.begin(), sel.end());
  CHECK(sel == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("spectral matching properties") {
  const Scene clean = make_scene(40, 0.0, 5, 0.0);
  const SpectralResult uniform = spectral_matching(clean.correspondences, SpectralOptions{});
  CHECK((uniform.eigenvector.array() - 1.0 / std::sqrt(40.0)).abs().maxCoeff() < 1e-6);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = make_scene(150, 0.5, 20 + seed);
    const SpectralResult r = spectral_matching(s.correspondences, SpectralOptions{});
    Eigen::MatrixXd m = spatial_consistency_matrix(s.correspondences, 0.1);
    m.diagonal().setZero();
    CHECK((m * r.eigenvector - r.eigenvalue * r.eigenvector).norm() < 1e-6 * r.eigenvalue);
    CHECK((r.confidences.array() >= 0.0).all());
    CHECK(r.confidences.maxCoeff() == doctest::Approx(1.0));

    Eigen::VectorXd v;
    double lambda = 0.0;
    std::size_t iters = 0;
    power_iteration(3.7 * m, 1e-9, 1000, v, lambda, iters, 3.7);
    CHECK((v - r.eigenvector).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(lambda == doctest::Approx(3.7 * r.eigenvalue));
  }
}

TEST_CASE("power iteration errors") {
  Eigen::VectorXd v;
  double lambda;
  std::size_t iters;
  CHECK_THROWS_AS(power_iteration(Eigen::MatrixXd::Zero(3, 3), 1e-9, 100, v, lambda, iters), DegenerateInputError);
  Eigen::MatrixXd rot(2, 2);
  rot << 0.0, 1.0, 1.0, 0.0;
  Eigen::MatrixXd slow = Eigen::MatrixXd::Identity(3, 3);
  slow(0, 0) = 1.0;
  slow(1, 1) = 0.999999;
  slow(0, 1) = slow(1, 0) = 0.0;
  CHECK_THROWS_AS(power_iteration(slow, 1e-15, 5, v, lambda, iters), ConvergenceError);
  power_iteration(rot, 1e-9, 10, v, lambda, iters);
  CHECK(lambda == doctest::Approx(1.0));
}

TEST_CASE("spectral registration recovers a moderately contaminated scene") {
  const Scene s = make_scene(400, 0.5, 9);
  const SpectralRegistration r = spectral_register(s.correspondences, SpectralOptions{}, 0.1);
  REQUIRE(r.transform);
  CHECK(registration_success(rotation_error(*r.transform, s.ground_truth),
                             translation_error(*r.transform, s.ground_truth), SceneKind::indoor));
  CHECK(r.inlier_count == count_inliers(*r.transform, s.correspondences, 0.1));
}
