#include "gpinet/model.hpp"

#include "gpinet/errors.hpp"
#include "gpinet/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace gpinet {

void ModelConfig::validate() const {
  if (granularities < 1 || granularities > 16) throw ConfigError("model: granularities T must be in [1, 16]");
  const std::size_t coarsest = std::size_t{1} << granularities;
  if (channels == 0 || channels % coarsest != 0) {
    throw ConfigError("model: channel count " + std::to_string(channels) +
                      " is not divisible by 2^T = " + std::to_string(coarsest));
  }
  if (bottleneck_ratio == 0 || channels % bottleneck_ratio != 0) {
    throw ConfigError("model: channel count not divisible by the bottleneck ratio");
  }
  if (channels % kShuffleGroups != 0) throw ConfigError("model: channel count not divisible by shuffle groups");
  if (!(sc_sigma > 0.0)) throw ConfigError("model: sc_sigma must be positive");
}

std::vector<std::size_t> ModelConfig::pyramid_widths() const {
  std::vector<std::size_t> w;
  for (std::size_t t = 0; t <= granularities; ++t) w.push_back(channels >> t);
  return w;
}

std::size_t ModelConfig::pre_fusion_width() const {
  std::size_t total = 0;
  for (std::size_t w : pyramid_widths()) total += w;
  return total;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"channels", channels},
          {"granularities", granularities},
          {"bottleneck_ratio", bottleneck_ratio},
          {"sc_sigma", sc_sigma},
          {"top_down_includes_finest", top_down_includes_finest}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.channels = j.at("channels").get<std::size_t>();
    c.granularities = j.at("granularities").get<std::size_t>();
    c.bottleneck_ratio = j.value("bottleneck_ratio", c.bottleneck_ratio);
    c.sc_sigma = j.value("sc_sigma", c.sc_sigma);
    c.top_down_includes_finest = j.value("top_down_includes_finest", c.top_down_includes_finest);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ParameterStore::ParameterStore(const ParameterStore& other) {
  for (const auto& [name, var] : other.params_) params_.emplace(name, ad::parameter(var.value()));
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void ParameterStore::add(const std::string& name, Matrix value) {
  if (!params_.emplace(name, ad::parameter(std::move(value))).second) {
    throw ContractError("duplicate parameter '" + name + "'");
  }
}

const ad::Var& ParameterStore::at(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

ad::Var& ParameterStore::at(const std::string& name) {
  const auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : params_) n += static_cast<std::size_t>(v.value().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, v] : params_) v.zero_grad();
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.channels;
  const std::size_t t_max = config_.granularities;
  const auto widths = config_.pyramid_widths();

  add_linear("embed.fc1", 6, d);
  add_linear("embed.fc2", d, d);

  add_linear("oi.score", d, 1);
  add_linear("oi.bottleneck1", d, d / config_.bottleneck_ratio);
  add_linear("oi.bottleneck2", d / config_.bottleneck_ratio, d);
  add_linear("oi.fuse", 2 * d, d);

  add_linear("gfa.query", d, d);
  add_linear("gfa.key", d, d);
  add_linear("gfa.value", d, d);
  add_linear("gfa.pw_tokens", d, d);
  add_linear("gfa.pw_channels", d, d);
  add_linear("gfa.cross1", d, d);
  add_linear("gfa.cross2", d, d);

  for (std::size_t t = 1; t <= t_max; ++t) {
    const std::string name = "dmg.bottom_up." + std::to_string(t);
    add_norm(name + ".bn", widths[t - 1]);
    add_linear(name + ".fc", widths[t - 1], widths[t]);
  }
  const std::size_t finest = config_.top_down_includes_finest ? 0 : 1;
  for (std::size_t t = t_max; t-- > finest;) {
    const std::string name = "dmg.top_down." + std::to_string(t);
    add_norm(name + ".bn", widths[t + 1]);
    add_linear(name + ".fc", widths[t + 1], widths[t]);
  }
  add_norm("dmg.fuse.bn", config_.pre_fusion_width());
  add_linear("dmg.fuse.fc", config_.pre_fusion_width(), d);

  add_linear("head", d, 1);
}

void Model::add_linear(const std::string& name, std::size_t in, std::size_t out) {
  const auto i = static_cast<Eigen::Index>(in);
  const auto o = static_cast<Eigen::Index>(out);
  params_.add(name + ".weight", Matrix::Zero(i, o));
  params_.add(name + ".bias", Matrix::Zero(1, o));
}

void Model::add_norm(const std::string& name, std::size_t channels) {
  const auto c = static_cast<Eigen::Index>(channels);
  params_.add(name + ".scale", Matrix::Ones(1, c));
  params_.add(name + ".shift", Matrix::Zero(1, c));
  norm_layers_.push_back(name);
}

Model Model::initialize(const ModelConfig& config, std::uint64_t seed) {
  Model m(config);
  Rng rng(seed);
  // Lexicographic order keeps the draw sequence independent of construction order.
  const auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (auto& [name, var] : m.params_) {
    Matrix& v = var.mutable_value();
    double limit = 0.0;
    if (ends_with(name, ".weight")) {
      limit = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
    } else if (ends_with(name, ".bias")) {
      const std::string layer = name.substr(0, name.size() - 5);
      limit = 1.0 / std::sqrt(static_cast<double>(m.params_.at(layer + ".weight").rows()));
    } else {
      continue;
    }
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) = rng.uniform(-limit, limit);
    }
  }
  return m;
}

bool Model::has_running_stats() const {
  for (const auto& layer : norm_layers_) {
    const auto it = stats_.find(layer);
    if (it == stats_.end() || !it->second.initialized) return false;
  }
  return true;
}

const RunningStats& Model::running_stats(const std::string& layer) const {
  const auto it = stats_.find(layer);
  if (it == stats_.end() || !it->second.initialized) {
    throw UninitializedStatsError("no running statistics for normalization layer '" + layer + "'");
  }
  return it->second;
}

void Model::update_running_stats(const BatchStatsRecord& record) {
  for (const auto& [layer, ms] : record.stats) {
    if (std::find(norm_layers_.begin(), norm_layers_.end(), layer) == norm_layers_.end()) {
      throw ContractError("statistics for unknown normalization layer '" + layer + "'");
    }
    stats_[layer].update(ms.first, ms.second);
  }
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& name, Eigen::Index rows,
                        Eigen::Index cols) {
  try {
    const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
      throw ConfigError("parameter '" + name + "': expected shape " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    }
    if (data.size() != static_cast<std::size_t>(rows * cols)) {
      throw ConfigError("parameter '" + name + "': data length does not match its shape");
    }
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    require_finite(m, name.c_str());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("parameter '" + name + "': " + e.what());
  }
}

}  // namespace

nlohmann::json Model::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, var] : params_) params[name] = matrix_to_json(var.value());
  for (const auto& [layer, st] : stats_) {
    if (!st.initialized) continue;
    params[layer + ".running_mean"] = matrix_to_json(st.mean);
    params[layer + ".running_var"] = matrix_to_json(st.var);
  }
  return {{"config", config_.to_json()}, {"parameters", params}};
}

Model Model::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("config") || !j.contains("parameters")) {
    throw ParseError("parameter file needs 'config' and 'parameters'");
  }
  Model m(ModelConfig::from_json(j.at("config")));
  const auto& params = j.at("parameters");
  std::set<std::string> consumed;
  for (auto& [name, var] : m.params_) {
    if (!params.contains(name)) throw ConfigError("parameter file lacks '" + name + "'");
    var.mutable_value() = matrix_from_json(params.at(name), name, var.rows(), var.cols());
    consumed.insert(name);
  }
  for (const auto& layer : m.norm_layers_) {
    const std::string mean_key = layer + ".running_mean";
    const std::string var_key = layer + ".running_var";
    const bool has_mean = params.contains(mean_key);
    if (has_mean != params.contains(var_key)) {
      throw ConfigError("running statistics of '" + layer + "' are incomplete");
    }
    if (!has_mean) continue;
    const auto c = m.params_.at(layer + ".scale").cols();
    RunningStats st;
    st.mean = matrix_from_json(params.at(mean_key), mean_key, 1, c);
    st.var = matrix_from_json(params.at(var_key), var_key, 1, c);
    st.initialized = true;
    m.stats_[layer] = st;
    consumed.insert(mean_key);
    consumed.insert(var_key);
  }
  for (const auto& [name, _] : params.items()) {
    if (!consumed.count(name)) throw ConfigError("parameter file has unknown entry '" + name + "'");
  }
  return m;
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open '" + path.string() + "' for writing");
  os << to_json().dump() << '\n';
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open parameter file '" + path.string() + "'");
  try {
    return from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gpinet
