// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Runtime budgets are part of each check.

#include "gpinet/baselines.hpp"
#include "gpinet/blocks.hpp"
#include "gpinet/errors.hpp"
#include "gpinet/experiment.hpp"
#include "gpinet/metrics.hpp"
#include "gpinet/pipeline.hpp"
#include "gpinet/synthgen.hpp"
#include "gpinet/training.hpp"
#include "test_support.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace gpinet;
using gpinet::testing::check_gradients;
using gpinet::testing::project_to_scalar;
using gpinet::testing::random_matrix;
using gpinet::testing::random_points;
using gpinet::testing::random_transform;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

Scene make_scene(std::size_t n, double ratio, double sigma, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.n_correspondences = n;
  cfg.outlier_ratio = ratio;
  cfg.noise_sigma = sigma;
  cfg.seed = seed;
  return generate(cfg);
}

bool indoor_success(const RigidTransform& est, const Scene& s) {
  return registration_success(rotation_error(est, s.ground_truth), translation_error(est, s.ground_truth),
                              SceneKind::indoor);
}

Outcome orthogonality() {
  Rng rng(0x0ace);
  const std::size_t widths[] = {8, 16, 32, 64, 128};
  double worst = 0.0;
  int degenerate = 0;
  const auto check_rows = [&](const Matrix& f, const Matrix& res, const Matrix& proj) {
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      const double scale = f.row(i).norm() * proj.row(i).norm();
      if (scale == 0.0) continue;
      worst = std::max(worst, std::abs(res.row(i).dot(proj.row(i))) / scale);
    }
  };
  for (int k = 0; k < 100; ++k) {
    ModelConfig mc;
    mc.channels = widths[rng.index(5)];
    mc.granularities = 3;
    const auto n = static_cast<Eigen::Index>(2 + rng.index(199));
    const Model model = Model::initialize(mc, 1000 + static_cast<std::uint64_t>(k));
    const Matrix f = random_matrix(rng, n, static_cast<Eigen::Index>(mc.channels), rng.uniform(0.1, 10.0));
    const OiResult r = orthogonal_integration(ad::constant(f), BlockContext{model});
    if (r.degenerate) {
      // Zero direction: exercise the projection on a random direction instead.
      ++degenerate;
      const ad::Var g = ad::constant(random_matrix(rng, 1, f.cols()));
      const Matrix proj = project_rows(ad::constant(f), g)->value();
      check_rows(f, f - proj, proj);
      continue;
    }
    check_rows(f, r.residual.value(), r.projection.value());
  }
  return {worst < 1e-9, fmt("worst |<r,p>|/(|F||p|) = %.3g over 100 configs (%d with a zero OI direction)",
                            worst, degenerate)};
}

Outcome gradients() {
  ModelConfig mc;
  mc.channels = 16;
  mc.granularities = 2;
  const Model model = Model::initialize(mc, 2024);
  const BlockContext ctx{model};
  const Scene scene = make_scene(16, 0.5, 0.01, 5);
  Rng rng(77);
  const Matrix proj = random_matrix(rng, 16, 16);
  const Matrix head_proj = random_matrix(rng, 16, 1);
  ad::Var x1 = ad::parameter(random_matrix(rng, 16, 16));
  ad::Var x2 = ad::parameter(random_matrix(rng, 16, 16));

  const auto params = [&](const std::string& prefix) {
    std::vector<std::pair<std::string, ad::Var>> leaves;
    for (const auto& name : model.parameters().names())
      if (prefix.empty() || name.rfind(prefix, 0) == 0) leaves.emplace_back(name, model.parameters().at(name));
    return leaves;
  };
  struct Case {
    std::string name;
    std::function<ad::Var()> loss;
    std::vector<std::pair<std::string, ad::Var>> leaves;
  };
  std::vector<Case> cases;
  cases.push_back({"embedding", [&] { return project_to_scalar(contextual_embedding(scene.correspondences, ctx), proj); },
                   params("embed.")});
  auto oi = params("oi.");
  oi.emplace_back("input", x1);
  cases.push_back({"oi", [&] { return project_to_scalar(orthogonal_integration(x1, ctx).output, proj); }, oi});
  auto gfa = params("gfa.");
  gfa.emplace_back("input", x1);
  cases.push_back({"gfa", [&] {
                     const GfaResult r = gestalt_feature_attention(x1, ctx);
                     return ad::add(project_to_scalar(r.out1, proj), project_to_scalar(r.out2, proj));
                   }, gfa});
  auto dmg = params("dmg.");
  dmg.emplace_back("input1", x1);
  dmg.emplace_back("input2", x2);
  cases.push_back({"dmg", [&] { return project_to_scalar(dmg_aggregate(x1, x2, ctx).output, proj); }, dmg});
  auto head = params("head");
  head.emplace_back("input", x1);
  cases.push_back({"head", [&] { return project_to_scalar(classification_head(x1, ctx).probabilities, head_proj); },
                   head});
  cases.push_back({"forward", [&] {
                     return project_to_scalar(gpinet_forward(scene.correspondences, model).head.probabilities, head_proj);
                   }, params("")});

  bool pass = true;
  std::ostringstream detail;
  for (const auto& c : cases) {
    const auto r = check_gradients(c.loss, c.leaves);
    pass = pass && r.worst < 1e-4;
    detail << c.name << "=" << fmt("%.2g", r.worst) << (r.worst < 1e-4 ? "" : "(" + r.worst_name + ")") << " ";
  }
  detail << "max rel err per block (" << params("").size() << " parameter tensors)";
  return {pass, detail.str()};
}

Outcome widths() {
  bool pass = true;
  std::ostringstream detail;
  for (std::size_t d : {8, 16, 32, 64, 128}) {
    ModelConfig mc;
    mc.channels = d;
    mc.granularities = 3;
    const Model model = Model::initialize(mc, 1);
    Rng rng(d);
    const DmgResult r = dmg_aggregate(ad::constant(random_matrix(rng, 5, static_cast<Eigen::Index>(d))),
                                      ad::constant(random_matrix(rng, 5, static_cast<Eigen::Index>(d))), BlockContext{model});
    const bool width_ok = static_cast<std::size_t>(r.fused_input.cols()) * 8 == 15 * d &&
                          mc.pre_fusion_width() * 8 == 15 * d && static_cast<std::size_t>(r.output.cols()) == d;
    bool levels_ok = r.bottom_up.size() == 4 && r.top_down.size() == 4;
    for (std::size_t t = 0; levels_ok && t <= 3; ++t) {
      levels_ok = static_cast<std::size_t>(r.bottom_up[t].cols()) == (d >> t) &&
                  static_cast<std::size_t>(r.top_down[t].cols()) == (d >> t) && mc.pyramid_widths()[t] == (d >> t);
    }
    pass = pass && width_ok && levels_ok;
    detail << "d=" << d << ":" << r.fused_input.cols() << " ";
  }
  detail << "(pre-fusion widths)";
  return {pass, detail.str()};
}

Outcome exact_recovery() {
  Rng rng(0x4ab5);
  double worst_re = 0.0, worst_te = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto n = static_cast<Eigen::Index>(3 + rng.index(198));
    const RigidTransform gt = random_transform(rng);
    CorrespondenceSet c;
    c.source = random_points(rng, n);
    c.target = apply_transform(gt, c.source);
    const RigidTransform est = weighted_kabsch(c, std::vector<double>(static_cast<std::size_t>(n), 1.0));
    worst_re = std::max(worst_re, rotation_error(est, gt));
    worst_te = std::max(worst_te, translation_error(est, gt) / 100.0);
  }
  return {worst_re < 1e-8 && worst_te < 1e-10,
          fmt("worst RE = %.3g deg, worst TE = %.3g m over 1000 transforms", worst_re, worst_te)};
}

Outcome selection_oracle() {
  Rng rng(0x5e1);
  int ties_exercised = 0;
  for (int set = 0; set < 100; ++set) {
    const Scene s = make_scene(50 + rng.index(100), rng.uniform(0.2, 0.8), 0.01, 500 + static_cast<std::uint64_t>(set));
    const double delta = 0.1;
    std::vector<RigidTransform> cands;
    const std::size_t count = 1 + rng.index(15);
    for (std::size_t k = 0; k < count; ++k) {
      const double u = rng.uniform();
      if (u < 0.3) {
        RigidTransform near = s.ground_truth;
        near.translation += Eigen::Vector3d(0.03 * rng.normal(), 0.03 * rng.normal(), 0.03 * rng.normal());
        cands.push_back(near);
      } else if (u < 0.5 && !cands.empty()) {
        cands.push_back(cands[rng.index(cands.size())]);  // exact duplicate
      } else {
        cands.push_back(random_transform(rng));
      }
    }
    std::size_t oracle = 0, best = 0;
    double best_mean = 0.0;
    bool tie = false;
    for (std::size_t k = 0; k < cands.size(); ++k) {
      std::size_t inl = 0;
      double total = 0.0;
      for (std::size_t i = 0; i < s.correspondences.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double res = (cands[k].rotation * s.correspondences.source.row(r).transpose() + cands[k].translation -
                            s.correspondences.target.row(r).transpose())
                               .norm();
        if (res < delta) {
          ++inl;
          total += res;
        }
      }
      const double mean = inl ? total / static_cast<double>(inl) : std::numeric_limits<double>::infinity();
      if (k > 0 && inl == best) tie = true;
      if (k == 0 || inl > best || (inl == best && mean < best_mean)) {
        oracle = k;
        best = inl;
        best_mean = mean;
      }
    }
    ties_exercised += tie;
    const Selection got = select_best_transform(cands, s.correspondences, delta);
    if (got.index != oracle || got.inlier_count != best) {
      return {false, fmt("set %d: selected %zu (%zu inliers), oracle %zu (%zu inliers)", set, got.index,
                         got.inlier_count, oracle, best)};
    }
  }
  return {true, fmt("100/100 sets match the brute-force oracle (%d sets with inlier-count ties)", ties_exercised)};
}

Outcome pipeline_robustness() {
  const double ratios[] = {0.0, 0.2, 0.4, 0.6, 0.8};
  std::ostringstream detail;
  bool pass = true;
  for (double ratio : ratios) {
    int ok = 0;
    for (int k = 0; k < 100; ++k) {
      const Scene s = make_scene(1000, ratio, 0.01, derive_seed(0x6a, static_cast<std::uint64_t>(ratio * 10), k));
      std::vector<double> probs;
      for (bool l : *s.correspondences.labels) probs.push_back(l ? 1.0 : 0.0);
      const RegistrationResult r = register_with_probabilities(s.correspondences, probs, PipelineConfig{});
      ok += r.ok() && indoor_success(r.best.transform, s);
    }
    pass = pass && ok == 100;
    detail << fmt("ratio %.1f: %d/100  ", ratio, ok);
  }
  detail << "(RR, N=1000, sigma=1 cm)";
  return {pass, detail.str()};
}

Outcome ransac_monte_carlo() {
  int ok = 0;
  for (int k = 0; k < 100; ++k) {
    const std::uint64_t seed = derive_seed(0x7a, static_cast<std::uint64_t>(k));
    const Scene s = make_scene(1000, 0.6, 0.01, seed);
    RansacOptions opts;
    opts.iterations = 10000;
    opts.delta = 0.10;
    opts.seed = derive_seed(seed, 1);
    const RansacResult r = ransac(s.correspondences, opts);
    ok += r.ok && indoor_success(r.best.transform, s);
  }
  return {ok >= 99, fmt("%d/100 trials succeeded", ok)};
}

Outcome spectral_oracle() {
  double worst = 0.0;
  int instances = 0;
  for (std::size_t n : {20, 100, 400, 1000}) {
    for (double ratio : {0.0, 0.5, 0.9}) {
      const Scene s = make_scene(n, ratio, 0.01, derive_seed(0x8a, n, static_cast<std::uint64_t>(ratio * 10)));
      const SpectralResult r = spectral_matching(s.correspondences, SpectralOptions{});
      Eigen::MatrixXd m = spatial_consistency_matrix(s.correspondences, 0.1);
      m.diagonal().setZero();
      worst = std::max(worst, (m * r.eigenvector - r.eigenvalue * r.eigenvector).norm() / r.eigenvalue);
      ++instances;
    }
  }
  CorrespondenceSet c;
  c.source = Points(4, 3);
  c.source << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  c.target = c.source;
  c.target.row(3) << 5, 5, 5;
  const SpectralResult r = spectral_matching(c, SpectralOptions{});
  Eigen::MatrixXd m = spatial_consistency_matrix(c, 0.1);
  m.diagonal().setZero();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd top = es.eigenvectors().col(3);
  if (top.sum() < 0) top = -top;
  worst = std::max(worst, (m * r.eigenvector - r.eigenvalue * r.eigenvector).norm() / r.eigenvalue);
  const double vec_err = (r.eigenvector - top).cwiseAbs().maxCoeff();
  const double val_err = std::abs(r.eigenvalue - es.eigenvalues()[3]);
  std::vector<std::size_t> sel = r.selected;
  std::sort(sel.begin(), sel.end());
  const bool four_ok = vec_err < 1e-8 && val_err < 1e-8 && sel == std::vector<std::size_t>{0, 1, 2};
  return {worst < 1e-6 && four_ok,
          fmt("worst residual/lambda = %.3g over %d instances; 4-correspondence case: |dv| = %.2g, |dlambda| = %.2g, "
              "selected %zu", worst, instances + 1, vec_err, val_err, sel.size())};
}

Outcome toy_training() {
  const TrainingConfig cfg = TrainingConfig::reference();
  const TrainingResult trained = train_toy(cfg);
  const double first = trained.loss_curve.front(), last = trained.loss_curve.back();
  const Model untrained = Model::initialize(cfg.model, cfg.seed);

  // Paired one-sided t-test on held-out F1 differences (df = 19, alpha = 0.05).
  std::vector<double> diff;
  double f1_trained = 0.0, f1_untrained = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    SceneConfig sc = cfg.scene;
    sc.seed = derive_seed(cfg.seed, 0x686f6c64, k);
    const Scene s = generate(sc);
    const auto score = [&](const Model& m) {
      const ForwardResult r = [&] {
        ad::NoGradGuard guard;
        return gpinet_forward(s.correspondences, m);
      }();
      const Eigen::VectorXd p = r.probabilities();
      return classification_metrics(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                    *s.correspondences.labels)
          .f1;
    };
    const double a = score(trained.model), b = score(untrained);
    f1_trained += a / 20.0;
    f1_untrained += b / 20.0;
    diff.push_back(a - b);
  }
  double mean = 0.0;
  for (double d : diff) mean += d / 20.0;
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean) / 19.0;
  const double t = var > 0.0 ? mean / std::sqrt(var / 20.0) : (mean > 0.0 ? 1e300 : 0.0);
  const bool loss_ok = last <= 0.5 * first;
  const bool f1_ok = t > 1.729;
  return {loss_ok && f1_ok, fmt("BCE %.4f -> %.4f (ratio %.3f); held-out F1 untrained %.3f, trained %.3f, paired t = %.2g",
                                first, last, last / first, f1_untrained, f1_trained, t)};
}

bool file_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  return !sa.empty() && sa == sb;
}

ExperimentConfig sweep_config() {
  ExperimentConfig cfg;
  cfg.methods = {Method::oracle, Method::ransac, Method::sm};
  cfg.outlier_ratios = {0.95};
  cfg.sizes = {250, 500, 1000, 2500, 5000};
  cfg.trials = 5;
  cfg.master_seed = 2023;
  cfg.ransac_iterations = 1000;
  cfg.threads = std::max(1u, std::thread::hardware_concurrency());
  return cfg;
}

const std::filesystem::path& out_root() {
  static const std::filesystem::path root = std::filesystem::temp_directory_path() / "gpinet_acceptance";
  return root;
}

Outcome sweep() {
  const MetricsReport r = run_experiment(sweep_config());
  const auto dir = out_root() / "sweep";
  std::filesystem::remove_all(dir);
  emit_reports(r, dir, {ReportFormat::csv, ReportFormat::json, ReportFormat::svg});

  std::ifstream csv(dir / "report.csv");
  std::string header, line;
  std::getline(csv, header);
  std::size_t rows = 0;
  bool fields_ok = true;
  while (std::getline(csv, line)) {
    ++rows;
    fields_ok = fields_ok && std::count(line.begin(), line.end(), ',') == std::count(header.begin(), header.end(), ',');
  }
  std::ifstream svg(dir / "rr_vs_n.svg");
  const std::string text((std::istreambuf_iterator<char>(svg)), {});
  std::size_t polylines = 0;
  for (auto pos = text.find("<polyline"); pos != std::string::npos; pos = text.find("<polyline", pos + 1)) ++polylines;
  const bool svg_ok = text.rfind("<svg", 0) == 0 && text.find("</svg>") != std::string::npos && polylines == 3;

  std::ostringstream rr;
  for (const auto& c : r.cells) rr << to_string(c.method) << "@" << c.n << "=" << fmt("%.0f", c.registration_recall) << " ";
  return {rows == 15 && fields_ok && svg_ok,
          fmt("%zu CSV rows, %zu SVG series; RR: ", rows, polylines) + rr.str()};
}

Outcome reproducibility() {
  ExperimentConfig cfg = sweep_config();
  cfg.sizes = {250, 1000};
  cfg.outlier_ratios = {0.3, 0.7};
  cfg.methods = {Method::oracle, Method::ransac, Method::sm, Method::gpinet};
  cfg.model_config.channels = 16;
  cfg.model_config.granularities = 2;
  const auto run = [&](const std::string& name, std::size_t threads) {
    ExperimentConfig c = cfg;
    c.threads = threads;
    const auto dir = out_root() / name;
    std::filesystem::remove_all(dir);
    emit_reports(run_experiment(c), dir, {ReportFormat::csv, ReportFormat::json});
    return dir;
  };
  const auto a = run("rerun_a", cfg.threads), b = run("rerun_b", cfg.threads), serial = run("rerun_serial", 1);
  bool pass = true;
  for (const char* f : {"report.csv", "report.json"}) {
    pass = pass && file_equal(a / f, b / f) && file_equal(a / f, serial / f);
  }
  return {pass, pass ? "report.csv and report.json byte-identical across two reruns and a single-threaded run"
                     : "outputs differ between reruns"};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria{
      {1, "OI orthogonality", 10.0, orthogonality},
      {2, "gradient suite", 60.0, gradients},
      {3, "DMG width contract", 0.0, widths},
      {4, "Kabsch exact recovery", 5.0, exact_recovery},
      {5, "selection oracle", 0.0, selection_oracle},
      {6, "oracle-probability pipeline", 120.0, pipeline_robustness},
      {7, "RANSAC Monte-Carlo", 300.0, ransac_monte_carlo},
      {8, "spectral matching oracle", 0.0, spectral_oracle},
      {9, "toy training", 0.0, toy_training},
      {10, "RR-vs-N sweep", 0.0, sweep},
      {11, "reproducibility", 0.0, reproducibility},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = c.budget_seconds <= 0.0 || secs < c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::string budget = c.budget_seconds > 0.0 ? fmt(" (%.2f s, budget %.0f s)", secs, c.budget_seconds)
                                                : fmt(" (%.2f s)", secs);
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << budget << std::endl;
  }
  std::filesystem::remove_all(out_root());
  return failures == 0 ? 0 : 1;
}
