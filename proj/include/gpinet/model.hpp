#pragma once

#include "gpinet/autodiff.hpp"
#include "gpinet/numerics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gpinet {

struct ModelConfig {
  std::size_t channels = 32;       // d
  std::size_t granularities = 3;   // T
  std::size_t bottleneck_ratio = 4;
  double sc_sigma = 0.10;          // embedding spatial-consistency width, meters
  bool top_down_includes_finest = false;

  /// Throws ConfigError unless d is divisible by 2^T, the bottleneck ratio and
  /// the shuffle group count.
  void validate() const;

  /// Channel widths d / 2^t for t = 0..T.
  std::vector<std::size_t> pyramid_widths() const;
  /// Concatenated width before fusion, d (2 - 2^-T); 15d/8 at T = 3.
  std::size_t pre_fusion_width() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Named trainable tensors. Iteration order is lexicographic by name.
class ParameterStore {
 public:
  ParameterStore() = default;
  /// Copies are deep: the copy owns fresh leaf nodes with equal values.
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  void add(const std::string& name, Matrix value);
  const ad::Var& at(const std::string& name) const;
  ad::Var& at(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

 private:
  std::map<std::string, ad::Var> params_;
};

/// Per-layer batch statistics observed during a training-mode forward pass.
struct BatchStatsRecord {
  std::map<std::string, std::pair<RowVector, RowVector>> stats;  // name -> (mean, var)
};

/// All learnable state of the network plus normalization running statistics.
class Model {
 public:
  /// Deterministic Glorot-uniform weights, biases uniform in +-1/sqrt(fan_in),
  /// unit norm scales and zero shifts. Parameters are drawn in name order.
  static Model initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }

  const std::vector<std::string>& norm_layers() const { return norm_layers_; }
  /// True once every normalization layer has running statistics.
  bool has_running_stats() const;
  const RunningStats& running_stats(const std::string& layer) const;
  void update_running_stats(const BatchStatsRecord& record);

  /// {"config": {...}, "parameters": {name: {"shape": [r, c], "data": [...]}}}.
  /// Running statistics appear as "<layer>.running_mean" / "<layer>.running_var".
  nlohmann::json to_json() const;
  /// Validates every shape against the stored config; unknown or missing
  /// names are rejected.
  static Model from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  explicit Model(ModelConfig config);
  void add_linear(const std::string& name, std::size_t in, std::size_t out);
  void add_norm(const std::string& name, std::size_t channels);

  ModelConfig config_;
  ParameterStore params_;
  std::vector<std::string> norm_layers_;
  std::map<std::string, RunningStats> stats_;
};

}  // namespace gpinet
