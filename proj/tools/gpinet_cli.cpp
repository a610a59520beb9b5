// gpinet command-line driver.
//
// Exit codes: 0 success, 2 configuration error, 3 registration failure,
// 4 numeric fault.

#include "gpinet/baselines.hpp"
#include "gpinet/errors.hpp"
#include "gpinet/experiment.hpp"
#include "gpinet/io.hpp"
#include "gpinet/pipeline.hpp"
#include "gpinet/random.hpp"
#include "gpinet/synthgen.hpp"
#include "gpinet/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gpinet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRegistration = 3;
constexpr int kExitNumeric = 4;

class RegistrationFailure : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::vector<std::string> methods;
  std::vector<std::size_t> sizes{1000};
  std::vector<double> outlier_ratios{0.5};
  double noise_sigma = 0.01;
  std::optional<double> delta;
  std::string scene = "indoor";
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::string params;
  std::vector<std::string> ablate;
  std::string out = ".";
  std::vector<std::string> formats;
  std::size_t iterations = 0;  // 0: command default
  std::size_t threads = 1;
  std::size_t channels = 32;
  std::size_t granularities = 3;
  std::string input;
  std::string ground_truth;
  std::string source;
  std::string target;
  double learning_rate = 1e-2;
  std::size_t scene_count = 4;
};

SceneKind scene_kind(const Options& o) { return scene_kind_from_string(o.scene); }

PipelineConfig pipeline_config(const Options& o) {
  PipelineConfig p = PipelineConfig::for_scene(scene_kind(o));
  if (o.delta) {
    p.delta = *o.delta;
    p.sigma_d = *o.delta;
  }
  p.validate();
  return p;
}

ModelConfig model_config(const Options& o) {
  ModelConfig mc;
  mc.channels = o.channels;
  mc.granularities = o.granularities;
  mc.sc_sigma = pipeline_config(o).sigma_d;
  mc.validate();
  return mc;
}

Model load_model(const Options& o) {
  if (!o.params.empty()) return Model::load(o.params);
  return Model::initialize(model_config(o), o.seed);
}

Ablation ablation_from(const std::vector<std::string>& flags) {
  Ablation a;
  for (const auto& f : flags) {
    if (f == "oi") a.oi = true;
    else if (f == "gfa") a.gfa = true;
    else if (f == "dmg") a.dmg = true;
    else throw ConfigError("unknown block '" + f + "' for --ablate (expected oi, gfa or dmg)");
  }
  return a;
}

std::vector<ReportFormat> formats_from(const std::vector<std::string>& names) {
  if (names.empty()) return {ReportFormat::csv, ReportFormat::json, ReportFormat::svg};
  std::vector<ReportFormat> out;
  for (const auto& n : names) out.push_back(report_format_from_string(n));
  return out;
}

SceneConfig scene_config(const Options& o) {
  SceneConfig sc = SceneConfig::for_scene(scene_kind(o));
  sc.n_correspondences = o.sizes.front();
  sc.outlier_ratio = o.outlier_ratios.front();
  sc.noise_sigma = o.noise_sigma;
  sc.seed = o.seed;
  sc.validate();
  return sc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << text;
}

int cmd_generate(const Options& o) {
  const Scene s = generate(scene_config(o));
  fs::create_directories(o.out);
  io::save_correspondences_csv(fs::path(o.out) / "correspondences.csv", s.correspondences);
  io::save_transform_json(fs::path(o.out) / "ground_truth.json", s.ground_truth);
  std::cout << "wrote " << s.correspondences.size() << " correspondences to "
            << (fs::path(o.out) / "correspondences.csv").string() << "\n";
  return 0;
}

int cmd_register(const Options& o) {
  Scene scene;
  std::optional<RigidTransform> truth;
  if (!o.input.empty()) {
    scene.correspondences = io::load_correspondences_csv(o.input);
  } else if (!o.source.empty() || !o.target.empty()) {
    if (o.source.empty() || o.target.empty()) throw ConfigError("--source and --target must be given together");
    scene.correspondences = io::correspondences_from_ply(o.source, o.target);
  } else {
    scene = generate(scene_config(o));
    truth = scene.ground_truth;
  }
  if (!o.ground_truth.empty()) truth = io::load_transform_json(o.ground_truth);
  const CorrespondenceSet& c = scene.correspondences;

  const std::string method_name = o.methods.empty() ? "gpinet" : o.methods.front();
  const Method method = method_from_string(method_name);
  const PipelineConfig pipe = pipeline_config(o);

  std::optional<RigidTransform> estimate;
  std::size_t inliers = 0;
  nlohmann::json extra = nlohmann::json::object();
  switch (method) {
    case Method::gpinet:
    case Method::oracle: {
      RegistrationResult r;
      if (method == Method::oracle) {
        if (!c.labels) throw ConfigError("the oracle method needs labeled correspondences");
        std::vector<double> probs;
        for (bool l : *c.labels) probs.push_back(l ? 1.0 : 0.0);
        r = register_with_probabilities(c, probs, pipe);
      } else {
        const Model model = load_model(o);
        ForwardOptions opts;
        opts.ablation = ablation_from(o.ablate);
        r = register_correspondences(c, model, pipe, opts);
      }
      extra["hypotheses"] = r.hypotheses.size();
      extra["discarded"] = r.diagnostics.size();
      extra["forward_seconds"] = r.forward_seconds;
      extra["estimate_seconds"] = r.estimate_seconds;
      if (r.ok()) {
        estimate = r.best.transform;
        inliers = r.best.inlier_count;
      }
      break;
    }
    case Method::ransac: {
      RansacOptions opts;
      opts.iterations = o.iterations ? o.iterations : 1000;
      opts.delta = pipe.delta;
      opts.seed = derive_seed(o.seed, 1);
      const RansacResult r = ransac(c, opts);
      extra["degenerate_samples"] = r.degenerate_samples;
      if (r.ok) {
        estimate = r.best.transform;
        inliers = r.best.inlier_count;
      }
      break;
    }
    case Method::sm: {
      SpectralOptions opts;
      opts.sigma_d = pipe.sigma_d;
      opts.tau = pipe.tau;
      const SpectralRegistration r = spectral_register(c, opts, pipe.delta);
      extra["selected"] = r.spectral.selected.size();
      if (r.transform) {
        estimate = r.transform;
        inliers = r.inlier_count;
      }
      break;
    }
  }
  if (!estimate) throw RegistrationFailure("registration failed: no non-degenerate hypothesis");

  nlohmann::json summary{{"method", method_name}, {"n", c.size()}, {"inlier_count", inliers},
                         {"transform", io::transform_to_json(*estimate)}, {"details", extra}};
  if (truth) {
    const double re = rotation_error(*estimate, *truth);
    const double te = translation_error(*estimate, *truth);
    summary["rotation_error_deg"] = re;
    summary["translation_error_cm"] = te;
    summary["success"] = registration_success(re, te, scene_kind(o));
  }
  fs::create_directories(o.out);
  io::save_transform_json(fs::path(o.out) / "transform.json", *estimate);
  write_text(fs::path(o.out) / "registration.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

ExperimentConfig experiment_config(const Options& o) {
  ExperimentConfig cfg;
  cfg.methods.clear();
  for (const auto& m : o.methods.empty() ? std::vector<std::string>{"oracle", "ransac", "sm"} : o.methods) {
    cfg.methods.push_back(method_from_string(m));
  }
  cfg.scene = scene_kind(o);
  cfg.noise_sigma = o.noise_sigma;
  cfg.outlier_ratios = o.outlier_ratios;
  cfg.sizes = o.sizes;
  cfg.trials = o.trials;
  cfg.master_seed = o.seed;
  cfg.pipeline = pipeline_config(o);
  cfg.ransac_iterations = o.iterations ? o.iterations : 1000;
  cfg.ablations = {ablation_from(o.ablate)};
  cfg.model_config = model_config(o);
  cfg.model_seed = o.seed;
  if (!o.params.empty()) cfg.params_file = o.params;
  cfg.threads = o.threads;
  return cfg;
}

void emit(const MetricsReport& r, const Options& o) {
  const auto written = emit_reports(r, o.out, formats_from(o.formats));
  for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
  std::cout << report_csv(r);
}

int cmd_benchmark(const Options& o) {
  const ExperimentConfig cfg = experiment_config(o);
  cfg.validate();
  emit(run_experiment(cfg), o);
  return 0;
}

int cmd_ablate(const Options& o) {
  ExperimentConfig cfg = experiment_config(o);
  cfg.methods = {Method::gpinet};
  const std::vector<std::string> blocks = o.ablate.empty() ? std::vector<std::string>{"oi", "gfa", "dmg"} : o.ablate;
  cfg.ablations = {Ablation{}};
  for (const auto& b : blocks) cfg.ablations.push_back(ablation_from({b}));
  if (blocks.size() > 1) cfg.ablations.push_back(ablation_from(blocks));
  cfg.validate();
  emit(run_experiment(cfg), o);
  return 0;
}

int cmd_train(const Options& o) {
  TrainingConfig cfg = TrainingConfig::reference();
  cfg.model = model_config(o);
  cfg.scene = scene_config(o);
  cfg.iterations = o.iterations ? o.iterations : 200;
  cfg.learning_rate = o.learning_rate;
  cfg.scene_count = o.scene_count;
  cfg.seed = o.seed;
  cfg.ablation = ablation_from(o.ablate);
  cfg.validate();
  fs::create_directories(o.out);
  std::optional<Model> initial;
  if (!o.params.empty()) initial = Model::load(o.params);
  try {
    const TrainingResult r = train_toy(cfg, initial);
    std::string csv = "iteration,loss\n";
    for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, r.loss_curve[i]);
      csv += buf;
    }
    write_text(fs::path(o.out) / "loss.csv", csv);
    r.model.save(fs::path(o.out) / "params.json");
    std::printf("loss %.6f -> %.6f over %zu iterations; wrote %s\n", r.loss_curve.front(), r.loss_curve.back(),
                cfg.iterations, (fs::path(o.out) / "params.json").string().c_str());
  } catch (const TrainingFault& f) {
    write_text(fs::path(o.out) / "nan_dump.json", f.dump() + "\n");
    throw;
  }
  return 0;
}

int cmd_report(const Options& o) {
  if (o.input.empty()) throw ConfigError("report needs --input <report.json>");
  std::ifstream is(o.input);
  if (!is) throw ConfigError("cannot open '" + o.input + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(o.input + ": " + e.what());
  }
  emit(report_from_json(j), o);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gpinet: correspondence-based point cloud registration experiments"};
  app.require_subcommand(1);
  Options o;

  const auto add_scene = [&](CLI::App* cmd, bool sweep) {
    if (sweep) {
      cmd->add_option("--n", o.sizes, "correspondence counts (repeatable or comma-separated)")->delimiter(',');
      cmd->add_option("--outlier-ratio", o.outlier_ratios, "outlier ratios (repeatable or comma-separated)")
          ->delimiter(',');
    } else {
      cmd->add_option_function<std::size_t>("--n", [&](std::size_t n) { o.sizes = {n}; }, "correspondence count");
      cmd->add_option_function<double>("--outlier-ratio", [&](double r) { o.outlier_ratios = {r}; },
                                       "outlier ratio in [0, 1]");
    }
    cmd->add_option("--noise-sigma", o.noise_sigma, "inlier noise, meters");
    cmd->add_option("--scene", o.scene, "scene scale")->check(CLI::IsMember({"indoor", "outdoor"}));
    cmd->add_option("--seed", o.seed, "seed");
  };
  const auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--params", o.params, "model parameter JSON")->check(CLI::ExistingFile);
    cmd->add_option("--ablate", o.ablate, "replace a block by identity (repeatable)")
        ->check(CLI::IsMember({"oi", "gfa", "dmg"}));
    cmd->add_option("--channels", o.channels, "feature width d");
    cmd->add_option("--granularities", o.granularities, "pyramid depth T");
  };
  const auto add_pipeline = [&](CLI::App* cmd) {
    cmd->add_option_function<double>("--delta", [&](double d) { o.delta = d; }, "inlier threshold, meters");
  };
  const auto add_reports = [&](CLI::App* cmd) {
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--format", o.formats, "report formats (repeatable; default all)")
        ->check(CLI::IsMember({"csv", "json", "svg"}));
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic correspondence set and its ground truth");
  add_scene(gen, false);
  gen->add_option("--out", o.out, "output directory");

  auto* reg = app.add_subcommand("register", "register one correspondence set");
  add_scene(reg, false);
  add_model(reg);
  add_pipeline(reg);
  reg->add_option("--method", o.methods, "gpinet, ransac, sm or oracle")->expected(1);
  reg->add_option("--input", o.input, "correspondence CSV")->check(CLI::ExistingFile);
  reg->add_option("--ground-truth", o.ground_truth, "ground-truth transform JSON")->check(CLI::ExistingFile);
  reg->add_option("--source", o.source, "source ASCII PLY")->check(CLI::ExistingFile);
  reg->add_option("--target", o.target, "target ASCII PLY (vertex i matches source vertex i)")
      ->check(CLI::ExistingFile);
  reg->add_option("--iterations", o.iterations, "RANSAC iterations");
  reg->add_option("--out", o.out, "output directory");

  auto* bench = app.add_subcommand("benchmark", "sweep methods over outlier ratio and N");
  add_scene(bench, true);
  add_model(bench);
  add_pipeline(bench);
  add_reports(bench);
  bench->add_option("--method", o.methods, "methods (repeatable or comma-separated)")->delimiter(',');
  bench->add_option("--trials", o.trials, "trials per cell");
  bench->add_option("--iterations", o.iterations, "RANSAC iterations");
  bench->add_option("--threads", o.threads, "worker threads");

  auto* abl = app.add_subcommand("ablate", "compare the full network with block ablations");
  add_scene(abl, true);
  add_model(abl);
  add_pipeline(abl);
  add_reports(abl);
  abl->add_option("--trials", o.trials, "trials per cell");
  abl->add_option("--threads", o.threads, "worker threads");

  auto* train = app.add_subcommand("train", "toy gradient-descent training on synthetic scenes");
  add_scene(train, false);
  add_model(train);
  add_pipeline(train);
  train->add_option("--iterations", o.iterations, "gradient steps (default 200)");
  train->add_option("--learning-rate", o.learning_rate, "step size");
  train->add_option("--scenes", o.scene_count, "training scenes");
  train->add_option("--out", o.out, "output directory");

  auto* rep = app.add_subcommand("report", "re-emit reports from a report JSON");
  add_reports(rep);
  rep->add_option("--input", o.input, "report JSON")->required()->check(CLI::ExistingFile);

  // Defaults that differ per command.
  train->preparse_callback([&](std::size_t) {
    o.sizes = {256};
    o.outlier_ratios = {0.5};
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*reg) return cmd_register(o);
    if (*bench) return cmd_benchmark(o);
    if (*abl) return cmd_ablate(o);
    if (*train) return cmd_train(o);
    if (*rep) return cmd_report(o);
  } catch (const RegistrationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRegistration;
  } catch (const DegenerateInputError& e) {
    std::cerr << "registration failure: " << e.what() << "\n";
    return kExitRegistration;
  } catch (const NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
