#include "gpinet/experiment.hpp"

#include "gpinet/errors.hpp"
#include "gpinet/random.hpp"
#include "gpinet/synthgen.hpp"

#include <atomic>
#include <chrono>
#include <map>
#include <thread>
#include <tuple>

namespace gpinet {

const char* to_string(Method m) {
  switch (m) {
    case Method::gpinet: return "gpinet";
    case Method::ransac: return "ransac";
    case Method::sm: return "sm";
    case Method::oracle: return "oracle";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "gpinet") return Method::gpinet;
  if (name == "ransac") return Method::ransac;
  if (name == "sm") return Method::sm;
  if (name == "oracle") return Method::oracle;
  throw ConfigError("unknown method '" + name + "' (expected gpinet, ransac, sm or oracle)");
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("experiment: no methods");
  if (outlier_ratios.empty()) throw ConfigError("experiment: outlier-ratio sweep axis is empty");
  if (sizes.empty()) throw ConfigError("experiment: correspondence-count sweep axis is empty");
  if (trials < 1) throw ConfigError("experiment: trials must be at least 1");
  if (ablations.empty()) throw ConfigError("experiment: no gpinet variants");
  if (ransac_iterations < 1) throw ConfigError("experiment: ransac iterations must be at least 1");
  if (threads < 1) throw ConfigError("experiment: threads must be at least 1");
  if (!(classification_threshold > 0.0 && classification_threshold < 1.0)) {
    throw ConfigError("experiment: classification threshold must lie in (0, 1)");
  }
  pipeline.validate();
  for (double r : outlier_ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("experiment: outlier ratios must lie in [0, 1]");
  }
  for (std::size_t n : sizes) {
    if (n < 4) throw ConfigError("experiment: N must be at least 4");
  }
  if (params_file && !std::filesystem::exists(*params_file)) {
    throw ConfigError("experiment: parameter file '" + params_file->string() + "' does not exist");
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  std::vector<std::string> names;
  for (Method m : methods) names.emplace_back(to_string(m));
  std::vector<std::string> variants;
  for (const auto& a : ablations) variants.push_back(a.label());
  j["methods"] = names;
  j["scene"] = to_string(scene);
  j["noise_sigma"] = noise_sigma;
  j["extent"] = extent > 0.0 ? extent : default_extent(scene);
  j["outlier_ratios"] = outlier_ratios;
  j["sizes"] = sizes;
  j["trials"] = trials;
  j["master_seed"] = master_seed;
  j["delta"] = pipeline.delta;
  j["nms_radius"] = pipeline.nms_radius;
  j["tau"] = pipeline.tau;
  j["sigma_d"] = pipeline.sigma_d;
  j["num_seeds"] = pipeline.num_seeds;
  j["ransac_iterations"] = ransac_iterations;
  j["classification_threshold"] = classification_threshold;
  j["gpinet_variants"] = variants;
  j["model"] = model_config.to_json();
  j["model_seed"] = model_seed;
  j["params_file"] = params_file ? params_file->string() : std::string();
  return j;
}

namespace {

std::vector<double> indicator(std::size_t n, const std::vector<std::size_t>& selected) {
  std::vector<double> p(n, 0.0);
  for (std::size_t i : selected) p.at(i) = 1.0;
  return p;
}

void fill_classification(TrialRecord& rec, std::span<const double> probs, const CorrespondenceSet& c,
                         double threshold) {
  if (!c.labels) return;
  const ClassificationMetrics m = classification_metrics(probs, *c.labels, threshold);
  rec.precision = m.precision;
  rec.recall = m.recall;
  rec.f1 = m.f1;
}

void fill_pose(TrialRecord& rec, const RigidTransform& est, const RigidTransform& gt, SceneKind scene) {
  rec.rotation_error_deg = rotation_error(est, gt);
  rec.translation_error_cm = translation_error(est, gt);
  rec.success = registration_success(*rec.rotation_error_deg, *rec.translation_error_cm, scene);
  rec.status = "ok";
}

}  // namespace

TrialRecord run_trial(const ExperimentConfig& cfg, Method method, const Scene& scene,
                      std::uint64_t scene_seed, const Model* model, const Ablation& ablation) {
  const auto start = std::chrono::steady_clock::now();
  const CorrespondenceSet& c = scene.correspondences;
  TrialRecord rec;
  rec.method = method;
  rec.n = c.size();
  rec.seed = scene_seed;
  rec.status = "failed";
  try {
    switch (method) {
      case Method::oracle: {
        if (!c.labels) throw ConfigError("oracle method needs labeled correspondences");
        std::vector<double> probs;
        for (bool l : *c.labels) probs.push_back(l ? 1.0 : 0.0);
        fill_classification(rec, probs, c, cfg.classification_threshold);
        const RegistrationResult r = register_with_probabilities(c, probs, cfg.pipeline);
        if (r.ok()) {
          rec.inlier_count = r.best.inlier_count;
          fill_pose(rec, r.best.transform, scene.ground_truth, cfg.scene);
        } else {
          rec.status = "failed: all hypotheses degenerate";
        }
        break;
      }
      case Method::gpinet: {
        if (!model) throw ConfigError("gpinet method needs a model");
        rec.variant = ablation.label();
        ForwardOptions opts;
        opts.ablation = ablation;
        const RegistrationResult r = register_correspondences(c, *model, cfg.pipeline, opts);
        const auto& p = r.probabilities;
        fill_classification(rec, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), c,
                            cfg.classification_threshold);
        if (r.ok()) {
          rec.inlier_count = r.best.inlier_count;
          fill_pose(rec, r.best.transform, scene.ground_truth, cfg.scene);
        } else {
          rec.status = "failed: all hypotheses degenerate";
        }
        break;
      }
      case Method::ransac: {
        RansacOptions opts;
        opts.iterations = cfg.ransac_iterations;
        opts.delta = cfg.pipeline.delta;
        opts.seed = derive_seed(rec.seed, 1);
        const RansacResult r = ransac(c, opts);
        if (r.ok) {
          fill_classification(rec, indicator(c.size(), r.best.consensus), c, cfg.classification_threshold);
          rec.inlier_count = r.best.inlier_count;
          fill_pose(rec, r.best.transform, scene.ground_truth, cfg.scene);
        } else {
          rec.status = "failed: every sample degenerate";
        }
        break;
      }
      case Method::sm: {
        SpectralOptions opts;
        opts.sigma_d = cfg.pipeline.sigma_d;
        opts.tau = cfg.pipeline.tau;
        const SpectralRegistration r = spectral_register(c, opts, cfg.pipeline.delta);
        fill_classification(rec, indicator(c.size(), r.spectral.selected), c, cfg.classification_threshold);
        if (r.transform) {
          rec.inlier_count = r.inlier_count;
          fill_pose(rec, *r.transform, scene.ground_truth, cfg.scene);
        } else {
          rec.status = "failed: degenerate selection";
        }
        break;
      }
    }
  } catch (const Error& e) {
    rec.success = false;
    rec.status = std::string("failed: ") + e.what();
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<CellAggregate> aggregate(const std::vector<TrialRecord>& records) {
  using Key = std::tuple<Method, std::string, double, std::size_t>;
  std::map<Key, std::size_t> index;
  std::vector<CellAggregate> cells;
  std::vector<double> re_sum, te_sum;
  for (const auto& rec : records) {
    const Key key{rec.method, rec.variant, rec.outlier_ratio, rec.n};
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, cells.size()).first;
      CellAggregate cell;
      cell.method = rec.method;
      cell.variant = rec.variant;
      cell.outlier_ratio = rec.outlier_ratio;
      cell.n = rec.n;
      cells.push_back(cell);
      re_sum.push_back(0.0);
      te_sum.push_back(0.0);
    }
    const std::size_t k = it->second;
    CellAggregate& cell = cells[k];
    ++cell.trials;
    cell.mean_precision += rec.precision;
    cell.mean_recall += rec.recall;
    cell.mean_f1 += rec.f1;
    if (rec.success) {
      ++cell.successes;
      re_sum[k] += rec.rotation_error_deg.value_or(0.0);
      te_sum[k] += rec.translation_error_cm.value_or(0.0);
    }
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    CellAggregate& cell = cells[k];
    const auto trials = static_cast<double>(cell.trials);
    cell.registration_recall = 100.0 * static_cast<double>(cell.successes) / trials;
    cell.mean_precision /= trials;
    cell.mean_recall /= trials;
    cell.mean_f1 /= trials;
    if (cell.successes > 0) {
      cell.mean_rotation_error_deg = re_sum[k] / static_cast<double>(cell.successes);
      cell.mean_translation_error_cm = te_sum[k] / static_cast<double>(cell.successes);
    }
  }
  return cells;
}

MetricsReport run_experiment(const ExperimentConfig& cfg, const Model* model) {
  cfg.validate();
  std::optional<Model> owned;
  const bool needs_model =
      std::find(cfg.methods.begin(), cfg.methods.end(), Method::gpinet) != cfg.methods.end();
  if (needs_model && !model) {
    owned = cfg.params_file ? Model::load(*cfg.params_file) : Model::initialize(cfg.model_config, cfg.model_seed);
    model = &*owned;
  }

  struct Job {
    std::size_t cell;
    double ratio;
    std::size_t n;
    std::size_t trial;
  };
  std::vector<Job> jobs;
  for (std::size_t ri = 0; ri < cfg.outlier_ratios.size(); ++ri) {
    for (std::size_t ni = 0; ni < cfg.sizes.size(); ++ni) {
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        jobs.push_back({ri * cfg.sizes.size() + ni, cfg.outlier_ratios[ri], cfg.sizes[ni], t});
      }
    }
  }

  std::vector<std::vector<TrialRecord>> results(jobs.size());
  const auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    SceneConfig sc = SceneConfig::for_scene(cfg.scene);
    sc.n_correspondences = job.n;
    sc.outlier_ratio = job.ratio;
    sc.noise_sigma = cfg.noise_sigma;
    if (cfg.extent > 0.0) sc.extent = cfg.extent;
    sc.seed = derive_seed(cfg.master_seed, job.cell, job.trial);
    const Scene scene = generate(sc);
    for (Method m : cfg.methods) {
      const std::size_t variants = m == Method::gpinet ? cfg.ablations.size() : 1;
      for (std::size_t v = 0; v < variants; ++v) {
        TrialRecord rec = run_trial(cfg, m, scene, sc.seed, model,
                                    m == Method::gpinet ? cfg.ablations[v] : Ablation{});
        rec.outlier_ratio = job.ratio;
        rec.trial = job.trial;
        results[j].push_back(std::move(rec));
      }
    }
  };

  if (cfg.threads <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < cfg.threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) run_job(j);
      });
    }
  }

  MetricsReport report;
  report.config = cfg.to_json();
  for (auto& batch : results) {
    for (auto& rec : batch) report.records.push_back(std::move(rec));
  }
  report.cells = aggregate(report.records);
  return report;
}

}  // namespace gpinet
