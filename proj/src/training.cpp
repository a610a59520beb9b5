#include "gpinet/training.hpp"

#include "gpinet/errors.hpp"
#include "gpinet/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace gpinet {

TrainingFault::TrainingFault(std::size_t iteration, std::string dump)
    : NumericFault("non-finite loss or gradient at training iteration " + std::to_string(iteration)),
      iteration_(iteration),
      dump_(std::move(dump)) {}

TrainingConfig TrainingConfig::reference() {
  TrainingConfig cfg;
  cfg.scene = SceneConfig::for_scene(SceneKind::indoor);
  cfg.scene.n_correspondences = 256;
  cfg.scene.outlier_ratio = 0.5;
  cfg.scene.noise_sigma = 0.01;
  return cfg;
}

void TrainingConfig::validate() const {
  model.validate();
  scene.validate();
  if (scene_count < 1) throw ConfigError("training: need at least one scene");
  if (!(learning_rate > 0.0)) throw ConfigError("training: learning rate must be positive");
}

std::vector<Scene> training_scenes(const TrainingConfig& cfg) {
  std::vector<Scene> scenes;
  for (std::size_t i = 0; i < cfg.scene_count; ++i) {
    SceneConfig sc = cfg.scene;
    sc.seed = derive_seed(cfg.seed, 0x7261696eULL, i);
    scenes.push_back(generate(sc));
  }
  return scenes;
}

ad::Var training_loss(const Model& model, const std::vector<Scene>& scenes, const Ablation& ablation,
                      std::vector<BatchStatsRecord>* records) {
  if (scenes.empty()) throw ContractError("training_loss: no scenes");
  ad::Var total;
  for (const Scene& s : scenes) {
    const auto& labels = s.correspondences.labels;
    if (!labels) throw ContractError("training_loss: scenes must be labeled");
    Matrix targets(static_cast<Eigen::Index>(labels->size()), 1);
    for (std::size_t i = 0; i < labels->size(); ++i) targets(static_cast<Eigen::Index>(i), 0) = (*labels)[i] ? 1.0 : 0.0;

    BatchStatsRecord record;
    ForwardOptions opts;
    opts.ablation = ablation;
    opts.mode = NormMode::batch;
    opts.record = records ? &record : nullptr;
    const ForwardResult fwd = gpinet_forward(s.correspondences, model, opts);
    const ad::Var loss = ad::bce_with_logits(fwd.head.logits, targets);
    total = total.defined() ? ad::add(total, loss) : loss;
    if (records) records->push_back(std::move(record));
  }
  return ad::scale(total, 1.0 / static_cast<double>(scenes.size()));
}

namespace {

nlohmann::json json_number(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(std::to_string(x));
}

std::string fault_dump(std::size_t iteration, double loss, const Model& model, const std::string& reason = {}) {
  nlohmann::json j;
  j["iteration"] = iteration;
  if (!reason.empty()) j["reason"] = reason;
  j["loss"] = json_number(loss);
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, var] : model.parameters()) {
    const Matrix g = var.grad();
    params[name] = {{"value_finite", var.value().allFinite()},
                    {"grad_finite", g.allFinite()},
                    {"value_norm", json_number(var.value().norm())},
                    {"grad_norm", json_number(g.norm())}};
  }
  j["parameters"] = params;
  return j.dump(2);
}

}  // namespace

TrainingResult train_toy(const TrainingConfig& cfg, std::optional<Model> initial) {
  cfg.validate();
  TrainingResult result{initial ? std::move(*initial) : Model::initialize(cfg.model, cfg.seed), {}};
  Model& model = result.model;
  const std::vector<Scene> scenes = training_scenes(cfg);

  for (std::size_t it = 0; it <= cfg.iterations; ++it) {
    const bool update = it < cfg.iterations;
    model.parameters().zero_grad();
    std::vector<BatchStatsRecord> records;
    ad::Var loss;
    try {
      loss = training_loss(model, scenes, cfg.ablation, update ? &records : nullptr);
    } catch (const NumericFault& e) {
      throw TrainingFault(it, fault_dump(it, std::nan(""), model, e.what()));
    } catch (const ContractError& e) {
      // Diverged parameters, e.g. every OI weight underflowing to zero.
      throw TrainingFault(it, fault_dump(it, std::nan(""), model, e.what()));
    }
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) throw TrainingFault(it, fault_dump(it, value, model));
    result.loss_curve.push_back(value);
    if (!update) break;

    ad::backward(loss);
    for (auto& [name, var] : model.parameters()) {
      const Matrix g = var.grad();
      if (!g.allFinite()) throw TrainingFault(it, fault_dump(it, value, model));
      var.mutable_value() -= cfg.learning_rate * g;
    }
    for (const auto& r : records) model.update_running_stats(r);
  }
  model.parameters().zero_grad();
  return result;
}

}  // namespace gpinet
