#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <sstream>

#include "firstdrive/adwin.hpp"
#include "firstdrive/errors.hpp"
#include "firstdrive/kll_sketch.hpp"
#include "firstdrive/models.hpp"
#include "firstdrive/pipeline.hpp"
#include "firstdrive/selection.hpp"

namespace py = pybind11;
using namespace firstdrive;

namespace {

// JSON crosses the boundary as text; the Python side wraps it with json.loads.
nlohmann::json parse_json(const std::string& text) { return nlohmann::json::parse(text); }

py::tuple interval_tuple(const PredictionInterval& pi) {
  return py::make_tuple(pi.point, pi.lower, pi.upper, pi.sigma ? py::cast(*pi.sigma) : py::none());
}

class Model {
 public:
  explicit Model(std::unique_ptr<OnlineRegressor> m) : m_(std::move(m)) {}
  double predict(const std::vector<double>& x) const { return m_->predict(x); }
  py::tuple predict_interval(const std::vector<double>& x) const { return interval_tuple(m_->predict_interval(x)); }
  void learn_one(const std::vector<double>& x, double y) { m_->learn_one(x, y); }
  std::string kind() const { return m_->kind(); }
  std::size_t num_features() const { return m_->num_features(); }
  std::string checkpoint() const { return m_->checkpoint().dump(); }
  Model clone() const { return Model(m_->clone()); }

 private:
  std::unique_ptr<OnlineRegressor> m_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Online first-drive prediction core";

  static py::exception<DataError> data_error(m, "DataError", PyExc_ValueError);
  static py::exception<InsufficientHistory> insufficient(m, "InsufficientHistory", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<MissingArtifact> missing(m, "MissingArtifact", PyExc_FileNotFoundError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::object exc = py::handle(config_error.ptr())(e.what());
      exc.attr("path") = e.path();
      PyErr_SetObject(config_error.ptr(), exc.ptr());
    } catch (const MissingArtifact& e) {
      py::object exc = py::handle(missing.ptr())(e.what());
      exc.attr("artifact") = e.artifact();
      PyErr_SetObject(missing.ptr(), exc.ptr());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const InsufficientHistory& e) {
      py::set_error(insufficient, e.what());
    }
  });

  m.def("model_kinds", &model_kinds);
  m.def("z_for_confidence", &z_for_confidence, py::arg("confidence"));
  m.def("pinball_loss", &pinball_loss, py::arg("y"), py::arg("yhat"), py::arg("tau"));

  py::class_<Model>(m, "Model")
      .def("predict", &Model::predict, py::arg("x"))
      .def("predict_interval", &Model::predict_interval, py::arg("x"),
           "(point, lower, upper, sigma); sigma is None for quantile regression")
      .def("learn_one", &Model::learn_one, py::arg("x"), py::arg("y"))
      .def("clone", &Model::clone)
      .def("checkpoint_json", &Model::checkpoint)
      .def_property_readonly("kind", &Model::kind)
      .def_property_readonly("num_features", &Model::num_features);

  m.def(
      "make_model",
      [](const std::string& kind, const std::string& params, std::uint64_t seed, std::size_t num_features,
         double confidence) {
        return Model(make_model(ModelSpec{kind, parse_json(params), seed}, num_features, confidence));
      },
      py::arg("kind"), py::arg("params_json"), py::arg("seed"), py::arg("num_features"), py::arg("confidence"));
  m.def(
      "load_model", [](const std::string& checkpoint) { return Model(load_model(parse_json(checkpoint))); },
      py::arg("checkpoint_json"));

  py::class_<KllSketch>(m, "KllSketch")
      .def(py::init<std::uint32_t, std::uint64_t>(), py::arg("k") = KllSketch::kDefaultK, py::arg("seed") = 0)
      .def("insert", &KllSketch::insert, py::arg("value"))
      .def("quantile", &KllSketch::quantile, py::arg("q"))
      .def("rank", &KllSketch::rank, py::arg("value"))
      .def("merge", &KllSketch::merge_from, py::arg("other"))
      .def("moments",
           [](const KllSketch& s) {
             const auto mo = s.moments();
             return py::make_tuple(mo.mean, mo.stddev);
           })
      .def_property_readonly("count", &KllSketch::count)
      .def_property_readonly("retained", &KllSketch::retained)
      .def_property_readonly("k", &KllSketch::k);

  py::class_<Adwin>(m, "Adwin")
      .def(py::init([](double delta) {
             Adwin::Options o;
             o.delta = delta;
             return Adwin(o);
           }),
           py::arg("delta") = 0.002)
      .def("update", &Adwin::update, py::arg("value"), "True when the window was cut")
      .def_property_readonly("width", &Adwin::width)
      .def_property_readonly("mean", [](const Adwin& a) { return a.width() ? a.total() / a.width() : 0.0; });

  m.def(
      "hopkins_statistic",
      [](const std::vector<std::array<double, 2>>& points, std::size_t m_samples, std::uint64_t seed) {
        return hopkins_statistic(points, m_samples, seed).statistic;
      },
      py::arg("points"), py::arg("m"), py::arg("seed"));

  m.def("stage_names", &stage_names);
  m.def(
      "run_stage",
      [](const std::string& stage, const std::string& config, std::optional<std::uint64_t> seed) {
        const auto parsed = parse_config(parse_json(config), seed);
        std::ostringstream log;
        {
          py::gil_scoped_release release;
          run_stage(stage, parsed, &log);
        }
        return log.str();
      },
      py::arg("stage"), py::arg("config_json"), py::arg("seed") = py::none());
  m.def(
      "validate_config", [](const std::string& config) { parse_config(parse_json(config)); },
      py::arg("config_json"));
  m.def("sha256_hex", &sha256_hex, py::arg("data"));
}
