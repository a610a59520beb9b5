#pragma once

// Experiment harness: sweeps over (outlier ratio, N) cells, several seeded
// trials per cell, one registration method per row of the report.
//
// Seeding: the scene of trial k in cell c is generated from
// derive_seed(master_seed, c, k) with c = ratio_index * |sizes| + size_index,
// so every method sees the same scenes and each cell is reproducible alone.
// Method-internal randomness (RANSAC) uses derive_seed(scene_seed, 1).

#include "gpinet/baselines.hpp"
#include "gpinet/blocks.hpp"
#include "gpinet/metrics.hpp"
#include "gpinet/pipeline.hpp"
#include "gpinet/synthgen.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gpinet {

enum class Method { gpinet, ransac, sm, oracle };

const char* to_string(Method m);
Method method_from_string(const std::string& name);

struct ExperimentConfig {
  std::vector<Method> methods{Method::oracle};
  SceneKind scene = SceneKind::indoor;
  double noise_sigma = 0.01;
  double extent = 0.0;  // 0: scene default
  std::vector<double> outlier_ratios{0.5};
  std::vector<std::size_t> sizes{1000};
  std::size_t trials = 10;
  std::uint64_t master_seed = 0;

  PipelineConfig pipeline = PipelineConfig::for_scene(SceneKind::indoor);
  std::size_t ransac_iterations = 1000;
  double classification_threshold = kClassificationThreshold;

  // gpinet method: one report row per entry of `ablations`.
  std::vector<Ablation> ablations{Ablation{}};
  ModelConfig model_config;
  std::uint64_t model_seed = 0;
  std::optional<std::filesystem::path> params_file;

  std::size_t threads = 1;

  /// Throws ConfigError; checks that a referenced parameter file exists.
  void validate() const;
  nlohmann::json to_json() const;
};

struct TrialRecord {
  Method method = Method::oracle;
  std::string variant;  // ablation label for gpinet, empty otherwise
  double outlier_ratio = 0.0;
  std::size_t n = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string status;  // "ok", "failed: ..."
  bool success = false;
  std::optional<double> rotation_error_deg;
  std::optional<double> translation_error_cm;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t inlier_count = 0;
  double wall_seconds = 0.0;  // not part of the reproducible report
};

struct CellAggregate {
  Method method = Method::oracle;
  std::string variant;
  double outlier_ratio = 0.0;
  std::size_t n = 0;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double registration_recall = 0.0;  // percent
  std::optional<double> mean_rotation_error_deg;   // over successes only
  std::optional<double> mean_translation_error_cm; // over successes only
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
};

struct MetricsReport {
  nlohmann::json config;
  std::vector<TrialRecord> records;
  std::vector<CellAggregate> cells;
};

/// Groups records by (method, variant, ratio, n) in first-appearance order.
std::vector<CellAggregate> aggregate(const std::vector<TrialRecord>& records);

/// Runs every method on every trial. A method failure marks the trial
/// unsuccessful; it never aborts the sweep. `model` overrides params_file
/// and model_seed for the gpinet method.
MetricsReport run_experiment(const ExperimentConfig& cfg, const Model* model = nullptr);

/// Runs one trial of one method on a scene generated from `scene_seed`.
TrialRecord run_trial(const ExperimentConfig& cfg, Method method, const Scene& scene,
                      std::uint64_t scene_seed, const Model* model, const Ablation& ablation = {});

// Reports -------------------------------------------------------------------

enum class ReportFormat { csv, json, svg };
ReportFormat report_format_from_string(const std::string& name);

/// Full report without timings; byte-stable for a fixed configuration.
nlohmann::json report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

/// One row per (method, variant, cell).
std::string report_csv(const MetricsReport& r);

enum class SweepAxis { n, outlier_ratio };
/// RR (y) against the axis variable (x), one polyline per method/variant and
/// value of the other axis.
std::string report_svg(const MetricsReport& r, SweepAxis axis);

/// Per-trial wall-clock times.
std::string timings_csv(const MetricsReport& r);

/// Writes report.{csv,json} and rr_vs_n.svg / rr_vs_outlier_ratio.svg into
/// `dir` for the requested formats, plus timings.csv. Returns written paths.
std::vector<std::filesystem::path> emit_reports(const MetricsReport& r, const std::filesystem::path& dir,
                                                const std::vector<ReportFormat>& formats);

}  // namespace gpinet
