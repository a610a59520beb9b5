#include "gpinet/baselines.hpp"
#include "gpinet/blocks.hpp"
#include "gpinet/errors.hpp"
#include "gpinet/experiment.hpp"
#include "gpinet/geometry.hpp"
#include "gpinet/io.hpp"
#include "gpinet/metrics.hpp"
#include "gpinet/model.hpp"
#include "gpinet/pipeline.hpp"
#include "gpinet/synthgen.hpp"
#include "gpinet/training.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <vector>

namespace py = pybind11;
using namespace gpinet;

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

py::object json_to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json python_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Correspondence-based rigid registration: synthetic scenes, the gpinet network and baselines";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  auto degenerate = py::register_exception<DegenerateInputError>(m, "DegenerateInputError", error.ptr());
  py::register_exception<DegenerateGeometryError>(m, "DegenerateGeometryError", degenerate.ptr());
  py::register_exception<ContractError>(m, "ContractError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<UninitializedStatsError>(m, "UninitializedStatsError", error.ptr());
  auto numeric = py::register_exception<NumericFault>(m, "NumericFault", error.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", numeric.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());

  py::enum_<SceneKind>(m, "SceneKind").value("indoor", SceneKind::indoor).value("outdoor", SceneKind::outdoor);

  py::class_<RigidTransform>(m, "RigidTransform")
      .def(py::init<>())
      .def(py::init([](const Eigen::Matrix3d& r, const Eigen::Vector3d& t) { return RigidTransform{r, t}; }),
           py::arg("rotation"), py::arg("translation"))
      .def_readwrite("rotation", &RigidTransform::rotation)
      .def_readwrite("translation", &RigidTransform::translation)
      .def("is_valid", &RigidTransform::is_valid, py::arg("tol") = 1e-9)
      .def("inverse", &RigidTransform::inverse)
      .def("compose", &RigidTransform::compose)
      .def("apply", [](const RigidTransform& t, const Points& p) { return apply_transform(t, p); })
      .def("__repr__", [](const RigidTransform& t) { return "RigidTransform(" + io::transform_to_json(t).dump() + ")"; });

  py::class_<CorrespondenceSet>(m, "CorrespondenceSet")
      .def(py::init([](const Points& s, const Points& t, std::optional<std::vector<bool>> labels) {
             CorrespondenceSet c{s, t, std::move(labels)};
             c.validate();
             return c;
           }),
           py::arg("source"), py::arg("target"), py::arg("labels") = py::none())
      .def_readonly("source", &CorrespondenceSet::source)
      .def_readonly("target", &CorrespondenceSet::target)
      .def_readonly("labels", &CorrespondenceSet::labels)
      .def("__len__", &CorrespondenceSet::size)
      .def("subset", [](const CorrespondenceSet& c, const std::vector<std::size_t>& idx) { return c.subset(idx); });

  py::class_<SceneConfig>(m, "SceneConfig")
      .def(py::init([](std::size_t n, double ratio, double sigma, std::uint64_t seed, SceneKind scene,
                       std::optional<double> extent) {
             SceneConfig cfg = SceneConfig::for_scene(scene);
             cfg.n_correspondences = n;
             cfg.outlier_ratio = ratio;
             cfg.noise_sigma = sigma;
             cfg.seed = seed;
             if (extent) cfg.extent = *extent;
             return cfg;
           }),
           py::arg("n") = 1000, py::arg("outlier_ratio") = 0.5, py::arg("noise_sigma") = 0.01,
           py::arg("seed") = 0, py::arg("scene") = SceneKind::indoor, py::arg("extent") = py::none())
      .def_readwrite("n_correspondences", &SceneConfig::n_correspondences)
      .def_readwrite("outlier_ratio", &SceneConfig::outlier_ratio)
      .def_readwrite("noise_sigma", &SceneConfig::noise_sigma)
      .def_readwrite("extent", &SceneConfig::extent)
      .def_readwrite("seed", &SceneConfig::seed)
      .def_readwrite("scene", &SceneConfig::scene)
      .def("outlier_count", &SceneConfig::outlier_count);

  py::class_<Scene>(m, "Scene")
      .def_readonly("correspondences", &Scene::correspondences)
      .def_readonly("ground_truth", &Scene::ground_truth);

  m.def("generate", &generate, py::arg("config"));

  m.def("weighted_kabsch",
        [](const CorrespondenceSet& c, const std::vector<double>& w) { return weighted_kabsch(c, w); },
        py::arg("correspondences"), py::arg("weights"));
  m.def("residuals", &residuals, py::arg("transform"), py::arg("correspondences"));
  m.def("count_inliers", &count_inliers, py::arg("transform"), py::arg("correspondences"), py::arg("delta"));
  m.def("rotation_error", &rotation_error, py::arg("estimate"), py::arg("ground_truth"));
  m.def("translation_error", &translation_error, py::arg("estimate"), py::arg("ground_truth"));
  m.def("registration_success", &registration_success, py::arg("re_deg"), py::arg("te_cm"), py::arg("scene"));
  m.def("spatial_consistency_matrix", &spatial_consistency_matrix, py::arg("correspondences"), py::arg("sigma"));

  py::class_<ClassificationMetrics>(m, "ClassificationMetrics")
      .def_readonly("precision", &ClassificationMetrics::precision)
      .def_readonly("recall", &ClassificationMetrics::recall)
      .def_readonly("f1", &ClassificationMetrics::f1)
      .def_readonly("precision_undefined", &ClassificationMetrics::precision_undefined)
      .def_readonly("recall_undefined", &ClassificationMetrics::recall_undefined)
      .def_readonly("f1_undefined", &ClassificationMetrics::f1_undefined)
      .def_readonly("true_positives", &ClassificationMetrics::true_positives)
      .def_readonly("false_positives", &ClassificationMetrics::false_positives)
      .def_readonly("false_negatives", &ClassificationMetrics::false_negatives)
      .def_readonly("true_negatives", &ClassificationMetrics::true_negatives);
  m.def("classification_metrics",
        [](const std::vector<double>& p, const std::vector<bool>& labels, double threshold) {
          return classification_metrics(p, labels, threshold);
        },
        py::arg("probabilities"), py::arg("labels"), py::arg("threshold") = kClassificationThreshold);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](std::size_t d, std::size_t t) {
             ModelConfig cfg;
             cfg.channels = d;
             cfg.granularities = t;
             cfg.validate();
             return cfg;
           }),
           py::arg("channels") = 32, py::arg("granularities") = 3)
      .def_readwrite("channels", &ModelConfig::channels)
      .def_readwrite("granularities", &ModelConfig::granularities)
      .def_readwrite("bottleneck_ratio", &ModelConfig::bottleneck_ratio)
      .def_readwrite("sc_sigma", &ModelConfig::sc_sigma)
      .def_readwrite("top_down_includes_finest", &ModelConfig::top_down_includes_finest)
      .def("pyramid_widths", &ModelConfig::pyramid_widths);

  py::class_<Ablation>(m, "Ablation")
      .def(py::init([](bool oi, bool gfa, bool dmg) { return Ablation{oi, gfa, dmg}; }), py::arg("oi") = false,
           py::arg("gfa") = false, py::arg("dmg") = false)
      .def_readwrite("oi", &Ablation::oi)
      .def_readwrite("gfa", &Ablation::gfa)
      .def_readwrite("dmg", &Ablation::dmg)
      .def("label", &Ablation::label);

  py::class_<Model>(m, "Model")
      .def_static("initialize", &Model::initialize, py::arg("config"), py::arg("seed") = 0)
      .def_static("load", &Model::load, py::arg("path"))
      .def_static("from_dict", [](const py::object& o) { return Model::from_json(python_to_json(o)); })
      .def("save", &Model::save, py::arg("path"))
      .def("to_dict", [](const Model& model) { return json_to_python(model.to_json()); })
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("parameter_count", [](const Model& model) { return model.parameters().scalar_count(); })
      .def("parameter_names", [](const Model& model) { return model.parameters().names(); })
      .def(
          "probabilities",
          [](const Model& model, const CorrespondenceSet& c, const Ablation& ablation) {
            ForwardOptions opts;
            opts.ablation = ablation;
            return to_vector(gpinet_forward(c, model, opts).probabilities());
          },
          py::arg("correspondences"), py::arg("ablation") = Ablation{});

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def(py::init([](SceneKind scene) { return PipelineConfig::for_scene(scene); }),
           py::arg("scene") = SceneKind::indoor)
      .def_readwrite("delta", &PipelineConfig::delta)
      .def_readwrite("nms_radius", &PipelineConfig::nms_radius)
      .def_readwrite("tau", &PipelineConfig::tau)
      .def_readwrite("sigma_d", &PipelineConfig::sigma_d)
      .def_readwrite("num_seeds", &PipelineConfig::num_seeds);

  py::class_<RegistrationResult>(m, "RegistrationResult")
      .def_property_readonly("ok", &RegistrationResult::ok)
      .def_property_readonly("transform", [](const RegistrationResult& r) { return r.best.transform; })
      .def_property_readonly("inlier_count", [](const RegistrationResult& r) { return r.best.inlier_count; })
      .def_property_readonly("hypothesis_count", [](const RegistrationResult& r) { return r.hypotheses.size(); })
      .def_readonly("diagnostics", &RegistrationResult::diagnostics)
      .def_property_readonly("probabilities", [](const RegistrationResult& r) { return to_vector(r.probabilities); });

  m.def(
      "register",
      [](const CorrespondenceSet& c, const Model& model, const PipelineConfig& cfg, const Ablation& ablation) {
        ForwardOptions opts;
        opts.ablation = ablation;
        return register_correspondences(c, model, cfg, opts);
      },
      py::arg("correspondences"), py::arg("model"), py::arg("config") = PipelineConfig{},
      py::arg("ablation") = Ablation{});
  m.def(
      "register_with_probabilities",
      [](const CorrespondenceSet& c, const std::vector<double>& p, const PipelineConfig& cfg) {
        return register_with_probabilities(c, p, cfg);
      },
      py::arg("correspondences"), py::arg("probabilities"), py::arg("config") = PipelineConfig{});

  py::class_<RansacResult>(m, "RansacResult")
      .def_readonly("ok", &RansacResult::ok)
      .def_property_readonly("transform", [](const RansacResult& r) { return r.best.transform; })
      .def_property_readonly("inlier_count", [](const RansacResult& r) { return r.best.inlier_count; })
      .def_readonly("degenerate_samples", &RansacResult::degenerate_samples)
      .def_readonly("best_iteration", &RansacResult::best_iteration);
  m.def(
      "ransac",
      [](const CorrespondenceSet& c, std::size_t iterations, double delta, std::uint64_t seed) {
        RansacOptions opts;
        opts.iterations = iterations;
        opts.delta = delta;
        opts.seed = seed;
        return ransac(c, opts);
      },
      py::arg("correspondences"), py::arg("iterations") = 1000, py::arg("delta") = 0.10, py::arg("seed") = 0);

  py::class_<SpectralRegistration>(m, "SpectralRegistration")
      .def_readonly("transform", &SpectralRegistration::transform)
      .def_readonly("inlier_count", &SpectralRegistration::inlier_count)
      .def_property_readonly("eigenvalue", [](const SpectralRegistration& r) { return r.spectral.eigenvalue; })
      .def_property_readonly("eigenvector", [](const SpectralRegistration& r) { return r.spectral.eigenvector; })
      .def_property_readonly("selected", [](const SpectralRegistration& r) { return r.spectral.selected; });
  m.def(
      "spectral_matching",
      [](const CorrespondenceSet& c, double sigma_d, double tau, double delta) {
        SpectralOptions opts;
        opts.sigma_d = sigma_d;
        opts.tau = tau;
        return spectral_register(c, opts, delta);
      },
      py::arg("correspondences"), py::arg("sigma_d") = 0.10, py::arg("tau") = 0.5, py::arg("delta") = 0.10);

  m.def(
      "train",
      [](std::size_t n, double ratio, std::size_t channels, std::size_t granularities, std::size_t scenes,
         std::size_t iterations, double learning_rate, std::uint64_t seed) {
        TrainingConfig cfg = TrainingConfig::reference();
        cfg.scene.n_correspondences = n;
        cfg.scene.outlier_ratio = ratio;
        cfg.model.channels = channels;
        cfg.model.granularities = granularities;
        cfg.scene_count = scenes;
        cfg.iterations = iterations;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        TrainingResult r = train_toy(cfg);
        return py::make_tuple(std::move(r.model), r.loss_curve);
      },
      py::arg("n") = 256, py::arg("outlier_ratio") = 0.5, py::arg("channels") = 32, py::arg("granularities") = 3,
      py::arg("scenes") = 4, py::arg("iterations") = 200, py::arg("learning_rate") = 1e-2, py::arg("seed") = 0);

  m.def(
      "benchmark",
      [](const std::vector<std::string>& methods, const std::vector<std::size_t>& sizes,
         const std::vector<double>& ratios, std::size_t trials, std::size_t ransac_iterations,
         std::uint64_t seed, std::size_t threads, const Model* model) {
        ExperimentConfig cfg;
        cfg.methods.clear();
        for (const auto& name : methods) cfg.methods.push_back(method_from_string(name));
        cfg.sizes = sizes;
        cfg.outlier_ratios = ratios;
        cfg.trials = trials;
        cfg.ransac_iterations = ransac_iterations;
        cfg.master_seed = seed;
        cfg.threads = threads;
        if (model) cfg.model_config = model->config();
        MetricsReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg, model);
        }
        return json_to_python(report_to_json(r));
      },
      py::arg("methods"), py::arg("sizes"), py::arg("outlier_ratios"), py::arg("trials") = 10,
      py::arg("ransac_iterations") = 1000, py::arg("seed") = 0, py::arg("threads") = 1,
      py::arg("model") = nullptr);

  m.def("load_correspondences_csv", &io::load_correspondences_csv, py::arg("path"));
  m.def("save_correspondences_csv", &io::save_correspondences_csv, py::arg("path"), py::arg("correspondences"));
  m.def("load_transform_json", &io::load_transform_json, py::arg("path"));
  m.def("save_transform_json", &io::save_transform_json, py::arg("path"), py::arg("transform"));
}
