#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "prefield/config.hpp"
#include "prefield/errors.hpp"
#include "prefield/io.hpp"
#include "prefield/matern.hpp"
#include "prefield/movement.hpp"
#include "prefield/predict.hpp"
#include "prefield/score.hpp"
#include "prefield/study.hpp"

namespace py = pybind11;
using namespace prefield;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMat points_array(const std::vector<Vec2>& pts) {
  RowMat out(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

std::vector<Vec2> points_from(const RowMat& a) {
  if (a.cols() != 2) throw DataError("points must be an (n, 2) array");
  std::vector<Vec2> out(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) out[static_cast<std::size_t>(i)] = a.row(i).transpose();
  return out;
}

py::dict track_dict(const Track& t) {
  py::dict d;
  d["id"] = t.id;
  d["t"] = Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(t.times.data(), static_cast<Eigen::Index>(t.size())));
  d["xy"] = points_array(t.locations);
  d["response"] =
      Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(t.responses.data(), static_cast<Eigen::Index>(t.size())));
  return d;
}

py::list tracks_list(const TrackSet& tracks) {
  py::list out;
  for (const auto& t : tracks) out.append(track_dict(t));
  return out;
}

TrackSet tracks_from(const py::list& list) {
  TrackSet out;
  for (const auto& item : list) {
    const auto d = item.cast<py::dict>();
    Track t;
    t.id = d["id"].cast<int>();
    const auto times = d["t"].cast<Eigen::VectorXd>();
    const auto ys = d["response"].cast<Eigen::VectorXd>();
    t.times.assign(times.data(), times.data() + times.size());
    t.responses.assign(ys.data(), ys.data() + ys.size());
    t.locations = points_from(d["xy"].cast<RowMat>());
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

py::dict prediction_dict(const PredictionGrid& g) {
  py::dict d;
  d["mean"] = g.mean;
  d["variance"] = g.variance;
  d["valid"] = g.valid;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Preferentially sampled Gaussian field models: simulation, fitting, prediction, scoring";

  auto base = py::register_exception<Error>(m, "PrefieldError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("canonical_config", [](const std::string& text, bool json) { return config_to_json(parse_config(text, json)); },
        py::arg("text"), py::arg("json"));
  m.def("config_hash", [](const std::string& text, bool json) { return config_hash(parse_config(text, json)); },
        py::arg("text"), py::arg("json"));

  m.def(
      "matern_cov",
      [](const Eigen::VectorXd& r, double phi, double sigma2) {
        const FieldParams p{0.0, 0.0, 2.0, phi, sigma2};
        return r.unaryExpr([&](double x) { return matern_cov(x, p); }).eval();
      },
      py::arg("r"), py::arg("phi"), py::arg("sigma2"));
  m.def("behaviour_weight", &behaviour_weight, py::arg("beta"));

  m.def(
      "simulate",
      [](const std::string& config_json, std::uint64_t seed) {
        const ExperimentConfig cfg = parse_config(config_json, true);
        cfg.validate();
        SimulatedData data;
        {
          py::gil_scoped_release release;
          data = Simulator(cfg).draw(seed);
        }
        py::dict field;
        field["xy"] = points_array(data.field.mesh->vertices());
        field["value"] = (data.field.values.array() + cfg.field.mu).matrix().eval();
        field["rows"] = data.field.mesh->rows();
        field["cols"] = data.field.mesh->cols();
        return py::make_tuple(field, tracks_list(data.tracks), data.reflections);
      },
      py::arg("config_json"), py::arg("seed"));

  m.def(
      "fit",
      [](const py::list& tracks_in, const std::string& config_json, std::optional<std::array<double, 4>> region) {
        const ExperimentConfig cfg = parse_config(config_json, true);
        cfg.validate();
        const TrackSet tracks = tracks_from(tracks_in);
        std::string std_report, pref_report;
        {
          py::gil_scoped_release release;
          const Rect r = region ? Rect{(*region)[0], (*region)[1], (*region)[2], (*region)[3]}
                                : cfg.prediction.region.value_or(tracks_extent(tracks));
          const ModelFits fits = fit_both(tracks, r, initial_theta(tracks, cfg), cfg);
          std_report = dump_json(fit_report(fits.standard));
          pref_report = dump_json(fit_report(fits.preferential, fits.mesh_info));
        }
        return py::make_tuple(std_report, pref_report);
      },
      py::arg("tracks"), py::arg("config_json"), py::arg("region") = py::none());

  m.def(
      "fit_predict",
      [](const py::list& tracks_in, const std::string& config_json, const RowMat& targets_in) {
        const ExperimentConfig cfg = parse_config(config_json, true);
        cfg.validate();
        const TrackSet tracks = tracks_from(tracks_in);
        const std::vector<Vec2> targets = points_from(targets_in);
        PredictionGrid pref, stdp;
        std::string std_report, pref_report;
        {
          py::gil_scoped_release release;
          const ModelFits fits =
              fit_both(tracks, cfg.prediction.region.value_or(tracks_extent(tracks)), initial_theta(tracks, cfg), cfg);
          pref = predict_preferential(*fits.model, fits.preferential, targets);
          stdp = krige(fits.standard.params, tracks, targets);
          std_report = dump_json(fit_report(fits.standard));
          pref_report = dump_json(fit_report(fits.preferential, fits.mesh_info));
        }
        return py::make_tuple(prediction_dict(stdp), prediction_dict(pref), std_report, pref_report);
      },
      py::arg("tracks"), py::arg("config_json"), py::arg("targets"));

  m.def(
      "krige",
      [](const py::list& tracks_in, double mu, double tau2, double phi, double sigma2, const RowMat& targets) {
        return prediction_dict(krige({mu, tau2, 2.0, phi, sigma2}, tracks_from(tracks_in), points_from(targets)));
      },
      py::arg("tracks"), py::arg("mu"), py::arg("tau2"), py::arg("phi"), py::arg("sigma2"), py::arg("targets"));

  m.def(
      "score",
      [](const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& var,
         const std::string& convention) {
        const ScoreReport r = score(truth, pred, var, convention_from_name(convention));
        py::dict d;
        d["rmspe"] = r.rmspe;
        d["mign"] = r.mign;
        d["lign"] = r.lign;
        return d;
      },
      py::arg("truth"), py::arg("pred"), py::arg("variance"), py::arg("convention") = "paper");

  m.def(
      "lattice_points",
      [](std::array<double, 4> region, int rows, int cols) {
        return points_array(lattice_points({region[0], region[1], region[2], region[3]}, rows, cols));
      },
      py::arg("region"), py::arg("rows"), py::arg("cols"));

  m.def("read_tracks", [](const std::filesystem::path& p) { return tracks_list(read_tracks(p)); }, py::arg("path"));
  m.def(
      "write_tracks", [](const std::filesystem::path& p, const py::list& t) { write_tracks(p, tracks_from(t)); },
      py::arg("path"), py::arg("tracks"));

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::filesystem::path& out_dir, int threads) {
        const ExperimentConfig cfg = parse_config(config_json, true);
        py::gil_scoped_release release;
        return run_simulation_study(cfg, out_dir, threads).manifest;
      },
      py::arg("config_json"), py::arg("out_dir"), py::arg("threads") = 1);

  m.def(
      "run_analysis",
      [](const py::list& tracks_in, const std::string& config_json, const std::filesystem::path& out_dir, int threads) {
        const ExperimentConfig cfg = parse_config(config_json, true);
        const TrackSet tracks = tracks_from(tracks_in);
        py::gil_scoped_release release;
        return run_data_analysis(tracks, cfg, out_dir, threads).manifest;
      },
      py::arg("tracks"), py::arg("config_json"), py::arg("out_dir"), py::arg("threads") = 1);
}
