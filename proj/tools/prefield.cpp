// prefield command line front end.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "prefield/config.hpp"
#include "prefield/errors.hpp"
#include "prefield/io.hpp"
#include "prefield/study.hpp"

namespace fs = std::filesystem;
using namespace prefield;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 1;
  std::string convention;
  bool quiet = false;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) {
    cfg.study.seed_base = *c.seed;
    cfg.protocol.seed = *c.seed;
  }
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  if (!c.convention.empty()) cfg.convention = convention_from_name(c.convention);
  cfg.study.threads = c.threads;
  cfg.validate();
  return cfg;
}

void say(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << msg << '\n';
}

Rect region_for(const ExperimentConfig& cfg, const TrackSet& tracks) {
  return cfg.prediction.region.value_or(tracks_extent(tracks));
}

TrackSet input_tracks(const ExperimentConfig& cfg, const std::string& path) {
  if (!path.empty()) return read_tracks(path);
  if (cfg.analysis.tracks.empty()) throw ConfigError("no track CSV given (--tracks or analysis.tracks)");
  if (cfg.analysis.projected) return read_tracks(cfg.analysis.tracks);
  return load_analysis_tracks(cfg);
}

int cmd_simulate(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Simulator sim(cfg);
  const SimulatedData data = sim.draw(cfg.study.seed_base);
  Manifest m(cfg.output_dir, "simulate");
  write_field(m.path("field.csv"), data.field, sim.margin(), cfg.field.mu);
  m.add("field.csv");
  m.add("field.json");
  write_tracks(m.path("tracks.csv"), data.tracks);
  m.add("tracks.csv");
  m.write_text("config.json", config_to_json(cfg) + "\n");
  m.set("config_hash", config_hash(cfg));
  m.set("seed", cfg.study.seed_base);
  m.set("reflections", data.reflections);
  m.finish();
  say(c, "wrote " + (fs::path(cfg.output_dir) / "tracks.csv").string());
  return 0;
}

int cmd_fit(const Common& c, const std::string& tracks_path) {
  const ExperimentConfig cfg = resolve(c);
  const TrackSet tracks = input_tracks(cfg, tracks_path);
  const ModelFits fits = fit_both(tracks, region_for(cfg, tracks), initial_theta(tracks, cfg), cfg);
  Manifest m(cfg.output_dir, "fit");
  m.write_json("fit_standard.json", fit_report(fits.standard));
  m.write_json("fit_preferential.json", fit_report(fits.preferential, fits.mesh_info));
  m.write_text("config.json", config_to_json(cfg) + "\n");
  m.set("config_hash", config_hash(cfg));
  m.set("seed", cfg.study.seed_base);
  m.finish();
  write_text(m.path("timings.json"),
             dump_json({{"standard_seconds", fits.standard.wall_seconds},
                        {"preferential_seconds", fits.preferential.wall_seconds}}));
  say(c, "standard nll " + format_double(fits.standard.nll) + ", preferential nll " +
             format_double(fits.preferential.nll()));
  return fits.preferential.converged && fits.standard.converged ? 0 : 4;
}

int cmd_predict(const Common& c, const std::string& tracks_path, const std::string& fit_dir) {
  const ExperimentConfig cfg = resolve(c);
  const TrackSet tracks = input_tracks(cfg, tracks_path);
  const Rect region = region_for(cfg, tracks);
  const auto targets = lattice_points(region, cfg.prediction.rows, cfg.prediction.cols);

  PredictionGrid pref, stdp;
  if (fit_dir.empty()) {
    const ModelFits fits = fit_both(tracks, region, initial_theta(tracks, cfg), cfg);
    pref = predict_preferential(*fits.model, fits.preferential, targets);
    stdp = krige(fits.standard.params, tracks, targets);
  } else {
    const json rp = json::parse(read_text(fs::path(fit_dir) / "fit_preferential.json"));
    const json rs = json::parse(read_text(fs::path(fit_dir) / "fit_standard.json"));
    const ThetaFull theta = theta_from_report(rp);
    const json& mj = rp.at("mesh");
    const Rect dom{mj["domain"][0], mj["domain"][1], mj["domain"][2], mj["domain"][3]};
    auto mesh = std::make_shared<const Mesh>(Mesh::lattice(dom, mj["rows"], mj["cols"]));
    auto model = std::make_shared<const PreferentialModel>(mesh, tracks, mesh->cell_width());
    LaplaceEngine engine(model, cfg.fit.options.laplace);
    const LaplaceResult lr = engine.laplace_nll(theta);
    if (!lr.converged) throw NumericalError("inner Newton did not converge at the reported estimates");
    pref = predict_preferential(*model, theta, lr.mode, targets);
    stdp = krige(theta_from_report(rs).field, tracks, targets);
  }
  Manifest m(cfg.output_dir, "predict");
  write_predictions(m.path("predictions_preferential.csv"), pref);
  m.add("predictions_preferential.csv");
  write_predictions(m.path("predictions_standard.csv"), stdp);
  m.add("predictions_standard.csv");
  m.set("config_hash", config_hash(cfg));
  m.finish();
  return 0;
}

// Truth values aligned with `locations`: either a lattice field file (interpolated) or an
// x,y,value table in the same order as the predictions.
Eigen::VectorXd read_truth(const fs::path& path, const std::vector<Vec2>& locations) {
  const std::string text = read_text(path);
  Eigen::VectorXd out(static_cast<Eigen::Index>(locations.size()));
  if (text.rfind("row,col", 0) == 0) {
    const FieldRealization f = read_field(path);
    for (std::size_t i = 0; i < locations.size(); ++i)
      out[static_cast<Eigen::Index>(i)] = interpolate_field(f, locations[i]);
    return out;
  }
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line.rfind("x,y,value", 0) != 0) throw DataError(path.string() + ": expected a field CSV or x,y,value");
  std::size_t i = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (i >= locations.size()) throw DataError(path.string() + ": more truth rows than predictions");
    double x, y, v;
    char c1, c2;
    std::istringstream ls(line);
    if (!(ls >> x >> c1 >> y >> c2 >> v)) throw DataError(path.string() + ": bad row " + std::to_string(i + 2));
    if ((Vec2(x, y) - locations[i]).norm() > 1e-6 * (1.0 + locations[i].norm()))
      throw DataError(path.string() + ": row " + std::to_string(i + 2) + " is not at the prediction location");
    out[static_cast<Eigen::Index>(i++)] = v;
  }
  if (i != locations.size()) throw DataError(path.string() + ": fewer truth rows than predictions");
  return out;
}

int cmd_score(const Common& c, const std::string& truth, const std::string& pref_path, const std::string& std_path) {
  const ExperimentConfig cfg = resolve(c);
  if (truth.empty() || pref_path.empty() || std_path.empty())
    throw ConfigError("score needs --truth, --preferential and --standard");
  const PredictionGrid p = read_predictions(pref_path);
  const PredictionGrid s = read_predictions(std_path);
  if (p.size() != s.size()) throw DataError("prediction files have different lengths");
  const Eigen::VectorXd t = read_truth(truth, p.locations);
  const ScoreReport rp = score(t.transpose(), p.mean.transpose(), p.variance.transpose(), cfg.convention);
  const ScoreReport rs = score(t.transpose(), s.mean.transpose(), s.variance.transpose(), cfg.convention);
  const ScoreDiffs d = score_diffs(rp, rs);
  Manifest m(cfg.output_dir, "score");
  m.write_json("scores.json", score_json(rp, rs, d));
  write_location_scores(m.path("scores_locations.csv"), p.locations, rp, rs, d);
  m.add("scores_locations.csv");
  m.finish();
  return 0;
}

int cmd_experiment(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const StudyReport r = run_simulation_study(cfg, cfg.output_dir, c.threads,
                                             [&](const std::string& msg) { say(c, msg); });
  say(c, "manifest: " + r.manifest.string());
  if (r.failed) {
    std::cerr << "study failed: " << r.failures << " of " << r.replicates.size() << " replicates failed\n";
    return 4;
  }
  return 0;
}

int cmd_analyze(const Common& c, const std::string& tracks_path) {
  ExperimentConfig cfg = resolve(c);
  if (!tracks_path.empty()) cfg.analysis.tracks = tracks_path;
  std::vector<std::string> warnings;
  const TrackSet tracks = load_analysis_tracks(cfg, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  const AnalysisReport r = run_data_analysis(tracks, cfg, cfg.output_dir, c.threads,
                                             [&](const std::string& msg) { say(c, msg); });
  say(c, "manifest: " + r.manifest.string());
  return r.failed ? 4 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preferential-sampling field estimation from animal tracks"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "TOML or JSON configuration file");
    sub->add_option("--seed", common.seed, "Seed (replicate seeds are seed + index)");
    sub->add_option("--out-dir", common.out_dir, "Output directory");
    sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--rmspe-convention", common.convention, "paper or rmse")
        ->check(CLI::IsMember({"paper", "rmse"}));
    sub->add_flag("--quiet", common.quiet, "No progress output");
  };

  std::string tracks, fit_dir, truth, pref, stdp;
  auto* sim = app.add_subcommand("simulate", "Draw a field and tracks");
  auto* fit = app.add_subcommand("fit", "Fit the standard and preferential models to a track CSV");
  auto* pred = app.add_subcommand("predict", "Predict the field on the lattice under both models");
  auto* sc = app.add_subcommand("score", "Score predictions against a known field");
  auto* exp = app.add_subcommand("experiment", "Run the replicated simulation study");
  auto* ana = app.add_subcommand("analyze", "Replicated subsample analysis of a track file");
  for (auto* s : {sim, fit, pred, sc, exp, ana}) add_common(s);
  for (auto* s : {fit, pred, ana}) s->add_option("--tracks", tracks, "Track CSV");
  pred->add_option("--fit-dir", fit_dir, "Directory holding fit_*.json from 'fit'");
  sc->add_option("--truth", truth, "Field CSV (with sidecar) or x,y,value table");
  sc->add_option("--preferential", pref, "Preferential prediction CSV");
  sc->add_option("--standard", stdp, "Standard prediction CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) return cmd_simulate(common);
    if (*fit) return cmd_fit(common, tracks);
    if (*pred) return cmd_predict(common, tracks, fit_dir);
    if (*sc) return cmd_score(common, truth, pref, stdp);
    if (*exp) return cmd_experiment(common);
    if (*ana) return cmd_analyze(common, tracks);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
