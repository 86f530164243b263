#include "prefield/study.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <iomanip>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "prefield/errors.hpp"
#include "prefield/linalg.hpp"

namespace prefield {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Stream ids keep the field draw and the subsampling independent of the per-track streams
// (0 .. n_tracks-1) that share the replicate seed.
constexpr std::uint64_t kFieldStream = 1000003;
constexpr std::uint64_t kSubsampleStream = 1000033;

// Runs job(i) for i in [0, n) on `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& job) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) job(i);
    });
  for (auto& th : pool) th.join();
}

std::string rep_dir(int index) {
  std::ostringstream os;
  os << "replicates/rep_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

std::string truth_csv(const std::vector<Vec2>& targets, const Eigen::VectorXd& truth) {
  std::ostringstream os;
  os << "x,y,value\n";
  for (std::size_t i = 0; i < targets.size(); ++i)
    os << format_double(targets[i].x()) << ',' << format_double(targets[i].y()) << ','
       << format_double(truth[static_cast<Eigen::Index>(i)]) << '\n';
  return os.str();
}

void estimate_rows(std::ostringstream& os, int index, std::uint64_t seed, const char* model,
                   const std::vector<Estimate>& est, bool converged) {
  for (const Estimate& e : est)
    os << index << ',' << seed << ',' << model << ',' << param_name(e.id) << ',' << format_double(e.value)
       << ',' << format_double(e.std_error) << ',' << (e.fixed ? 1 : 0) << ',' << (converged ? 1 : 0)
       << '\n';
}

constexpr const char* kEstimateHeader = "replicate,seed,model,param,value,std_error,fixed,converged\n";

// Mean, standard deviation and count of each parameter over the listed fits.
json estimate_summary(const std::vector<std::vector<Estimate>>& fits) {
  json out = json::object();
  if (fits.empty()) return out;
  for (std::size_t p = 0; p < fits.front().size(); ++p) {
    std::vector<double> v;
    for (const auto& f : fits) v.push_back(f[p].value);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : kNaN;
    out[std::string(param_name(fits.front()[p].id))] = {
        {"mean", mean}, {"sd", std::isfinite(sd) ? json(sd) : json(nullptr)}, {"n", v.size()}};
  }
  return out;
}

std::string quantile_name(double q) {
  std::ostringstream os;
  os << "difference_q" << q;
  return os.str();
}

Eigen::MatrixXd stack(const std::vector<const Eigen::VectorXd*>& rows, int cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t j = 0; j < rows.size(); ++j) m.row(static_cast<Eigen::Index>(j)) = rows[j]->transpose();
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrackSet subsample_tracks(const TrackSet& tracks, int per_track, std::uint64_t seed) {
  if (per_track < 3) throw DataError("subsampling needs at least 3 observations per track");
  Rng rng = make_rng(seed, kSubsampleStream);
  TrackSet out;
  for (const Track& t : tracks) {
    if (static_cast<std::size_t>(per_track) > t.size()) {
      std::ostringstream os;
      os << "track " << t.id << " has " << t.size() << " observations, fewer than the " << per_track
         << " requested per track";
      throw DataError(os.str());
    }
    std::vector<std::size_t> all(t.size()), pick;
    std::iota(all.begin(), all.end(), 0);
    std::sample(all.begin(), all.end(), std::back_inserter(pick), per_track, rng);
    std::sort(pick.begin(), pick.end());
    Track s;
    s.id = t.id;
    for (std::size_t k : pick) {
      s.times.push_back(t.times[k]);
      s.locations.push_back(t.locations[k]);
      s.responses.push_back(t.responses[k]);
      if (!t.betas.empty()) s.betas.push_back(t.betas[k]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Rect tracks_extent(const TrackSet& tracks) {
  if (tracks.empty()) throw DataError("no tracks");
  Rect box = tracks.front().bounding_box();
  for (const Track& t : tracks) box = box.united(t.bounding_box());
  return box;
}

MeshPtr fitting_mesh(const TrackSet& tracks, const Rect& region, double cell_width, double margin) {
  const Rect box = region.united(tracks_extent(tracks)).expanded(margin);
  return std::make_shared<const Mesh>(Mesh::covering(box, cell_width));
}

MeshPtr generation_mesh(const Rect& domain, int rows, int cols) {
  if (rows < 2 || cols < 2) throw ConfigError("generation grid needs at least 2 rows and columns");
  const double dx = domain.width() / (cols - 1);
  const double dy = domain.height() / (rows - 1);
  const Rect ext{domain.xmin - dx, domain.xmax + dx, domain.ymin - dy, domain.ymax + dy};
  return std::make_shared<const Mesh>(Mesh::lattice(ext, rows + 2, cols + 2));
}

ThetaFull initial_theta(const TrackSet& tracks, const ExperimentConfig& config) {
  ThetaFull theta{config.field, config.movement};
  const FitSettings& fs = config.fit;
  double sum = 0.0, sum2 = 0.0, incr = 0.0;
  int n = 0, ninc = 0;
  for (const Track& t : tracks)
    for (std::size_t k = 0; k < t.size(); ++k) {
      sum += t.responses[k];
      sum2 += t.responses[k] * t.responses[k];
      ++n;
      if (k > 0) {
        const double dt = t.times[k] - t.times[k - 1];
        incr += (t.locations[k] - t.locations[k - 1]).squaredNorm() / (2.0 * dt);
        ++ninc;
      }
    }
  if (!fs.init_at_truth) {
    const double mean = sum / std::max(1, n);
    const double var = n > 1 ? (sum2 - n * mean * mean) / (n - 1) : 1.0;
    const Rect box = tracks_extent(tracks);
    theta.field.mu = mean;
    theta.field.sigma2 = std::max(var, 1e-6);
    theta.field.phi = std::max(box.width(), box.height()) / 10.0;
  }
  // Generating movement values describe the raw time scale, not the observed one.
  const double s = ninc > 0 ? std::sqrt(incr / ninc) : 1.0;
  theta.movement.sigma = Eigen::Matrix2d::Identity() * std::max(s, 1e-6);
  theta.movement.alpha = 0.0;
  theta.movement.beta0 = 0.0;
  if (fs.init_mu) theta.field.mu = *fs.init_mu;
  if (fs.init_phi) theta.field.phi = *fs.init_phi;
  if (fs.init_sigma2) theta.field.sigma2 = *fs.init_sigma2;
  if (fs.init_alpha) theta.movement.alpha = *fs.init_alpha;
  if (fs.init_sigma_beta) theta.movement.sigma_beta = *fs.init_sigma_beta;
  if (fs.init_sigma_x) theta.movement.sigma(0, 0) = *fs.init_sigma_x;
  if (fs.init_sigma_y) theta.movement.sigma(1, 1) = *fs.init_sigma_y;
  if (fs.init_beta0) theta.movement.beta0 = *fs.init_beta0;
  return theta;
}

ModelFits fit_both(const TrackSet& tracks, const Rect& region, const ThetaFull& init,
                   const ExperimentConfig& config) {
  validate_tracks(tracks);
  const FitSettings& fs = config.fit;
  const double margin = fs.margin_phi * init.field.phi + fs.margin_cells * fs.cell_width;
  ModelFits out;
  out.mesh = fitting_mesh(tracks, region, fs.cell_width, margin);
  out.mesh_info = {out.mesh->domain(), out.mesh->rows(), out.mesh->cols(), margin};
  out.model = std::make_shared<const PreferentialModel>(out.mesh, tracks, out.mesh->cell_width());
  out.standard = fit_standard(tracks, init.field, fs.mask, fs.options);
  out.preferential = fit_preferential(out.model, init, fs.mask, fs.options);
  return out;
}

Simulator::Simulator(const ExperimentConfig& config)
    : config_(config),
      mesh_(generation_mesh(config.protocol.domain, config.study.generation_rows,
                            config.study.generation_cols)),
      sampler_(std::make_unique<DenseGaussianSampler>(mesh_->vertices(), config.field)) {}

double Simulator::margin() const { return mesh_->domain().xmax - config_.protocol.domain.xmax; }

SimulatedData Simulator::draw(std::uint64_t seed) const {
  Rng rng = make_rng(seed, kFieldStream);
  SimulatedData d;
  d.field = {mesh_, sampler_->draw(rng)};
  d.tracks = simulate_tracks(d.field, config_.movement, config_.field, config_.protocol, seed, &d.reflections);
  return d;
}

std::vector<Vec2> study_targets(const ExperimentConfig& config) {
  const Rect region = config.prediction.region.value_or(config.protocol.domain);
  return lattice_points(region, config.prediction.rows, config.prediction.cols);
}

StudyReport run_simulation_study(const ExperimentConfig& config, const fs::path& out_dir, int threads,
                                 const ProgressFn& progress) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const Simulator sim(config);
  const Rect region = config.prediction.region.value_or(config.protocol.domain);

  StudyReport report;
  report.targets = study_targets(config);
  const int n = config.study.replicates;
  report.replicates.resize(static_cast<std::size_t>(n));
  std::vector<double> wall(static_cast<std::size_t>(n), 0.0);
  std::mutex progress_mutex;

  parallel_for(n, threads, [&](int i) {
    const auto t0 = std::chrono::steady_clock::now();
    ReplicateOutcome& r = report.replicates[static_cast<std::size_t>(i)];
    r.index = i;
    r.seed = config.study.seed_base + static_cast<std::uint64_t>(i);
    try {
      const SimulatedData data = sim.draw(r.seed);
      r.reflections = data.reflections;
      for (const Track& t : data.tracks) r.observations += static_cast<int>(t.size());
      r.truth.resize(static_cast<Eigen::Index>(report.targets.size()));
      for (std::size_t k = 0; k < report.targets.size(); ++k)
        r.truth[static_cast<Eigen::Index>(k)] = config.field.mu + interpolate_field(data.field, report.targets[k]);
      ModelFits fits = fit_both(data.tracks, region, initial_theta(data.tracks, config), config);
      r.standard = std::move(fits.standard);
      r.preferential = std::move(fits.preferential);
      r.standard_prediction = krige(r.standard.params, data.tracks, report.targets);
      r.preferential_prediction = predict_preferential(*fits.model, r.preferential, report.targets);
      r.ok = true;
      if (config.study.write_replicates) {
        const fs::path dir = out_dir / rep_dir(i);
        write_tracks(dir / "tracks.csv", data.tracks);
        write_text(dir / "truth.csv", truth_csv(report.targets, r.truth));
        write_predictions(dir / "predictions_standard.csv", r.standard_prediction);
        write_predictions(dir / "predictions_preferential.csv", r.preferential_prediction);
        write_text(dir / "fit_standard.json", dump_json(fit_report(r.standard)));
        write_text(dir / "fit_preferential.json", dump_json(fit_report(r.preferential, fits.mesh_info)));
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    wall[static_cast<std::size_t>(i)] = seconds_since(t0);
    if (progress) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      std::ostringstream os;
      os << "replicate " << i << " (seed " << r.seed << "): " << (r.ok ? "ok" : "failed: " + r.error) << " ["
         << wall[static_cast<std::size_t>(i)] << " s]";
      progress(os.str());
    }
  });

  // Deterministic sequential reduce in replicate order.
  Manifest manifest(out_dir, "experiment");
  std::vector<const Eigen::VectorXd*> truth, pm, pv, sm, sv;
  std::ostringstream est, reps;
  est << kEstimateHeader;
  reps << "replicate,seed,status,observations,reflections,nll_standard,nll_preferential,converged_standard,"
          "converged_preferential,error\n";
  std::vector<std::vector<Estimate>> est_std, est_pref;
  json seeds = json::array();
  for (const ReplicateOutcome& r : report.replicates) {
    seeds.push_back(r.seed);
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    reps << r.index << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << r.observations << ','
         << r.reflections << ',' << format_double(r.ok ? r.standard.nll : kNaN) << ','
         << format_double(r.ok ? r.preferential.nll() : kNaN) << ',' << (r.ok && r.standard.converged ? 1 : 0)
         << ',' << (r.ok && r.preferential.converged ? 1 : 0) << ',' << err << '\n';
    if (!r.ok) {
      ++report.failures;
      continue;
    }
    report.scored.push_back(r.index);
    est_std.push_back(r.standard.estimates());
    est_pref.push_back(r.preferential.estimates());
    estimate_rows(est, r.index, r.seed, "standard", est_std.back(), r.standard.converged);
    estimate_rows(est, r.index, r.seed, "preferential", est_pref.back(), r.preferential.converged);
    truth.push_back(&r.truth);
    pm.push_back(&r.preferential_prediction.mean);
    pv.push_back(&r.preferential_prediction.variance);
    sm.push_back(&r.standard_prediction.mean);
    sv.push_back(&r.standard_prediction.variance);
  }
  report.failed = report.failures > config.study.max_failure_fraction * n;

  const int nt = static_cast<int>(report.targets.size());
  std::vector<std::pair<std::string, Eigen::VectorXd>> extra;
  if (!report.scored.empty()) {
    const Eigen::MatrixXd T = stack(truth, nt), PM = stack(pm, nt), PV = stack(pv, nt), SM = stack(sm, nt),
                          SV = stack(sv, nt);
    report.preferential = score(T, PM, PV, config.convention);
    report.standard = score(T, SM, SV, config.convention);
    report.diffs = score_diffs(report.preferential, report.standard);
    for (double q : config.study.quantiles) extra.emplace_back(quantile_name(q), quantile_of_differences(PM, SM, q));
    json scores = score_json(report.preferential, report.standard, report.diffs);
    scores["replicates"] = report.scored;
    manifest.write_json("scores.json", scores);
    write_location_scores(manifest.path("scores_locations.csv"), report.targets, report.preferential,
                          report.standard, report.diffs, extra);
    manifest.add("scores_locations.csv");
  }
  manifest.write_text("estimates.csv", est.str());
  manifest.write_text("replicates.csv", reps.str());
  manifest.write_text("config.json", config_to_json(config) + "\n");

  json summary = {{"replicates", n},
                  {"failures", report.failures},
                  {"failed", report.failed},
                  {"rmspe_convention", std::string(convention_name(config.convention))},
                  {"estimates", {{"standard", estimate_summary(est_std)}, {"preferential", estimate_summary(est_pref)}}}};
  if (!report.scored.empty()) summary["scores"] = score_json(report.preferential, report.standard, report.diffs)["summary"];
  manifest.write_json("summary.json", summary);

  if (config.study.write_replicates)
    for (const ReplicateOutcome& r : report.replicates)
      if (r.ok)
        for (const char* f : {"tracks.csv", "truth.csv", "predictions_standard.csv", "predictions_preferential.csv",
                              "fit_standard.json", "fit_preferential.json"})
          manifest.add(rep_dir(r.index) + "/" + f);

  manifest.set("config_hash", config_hash(config));
  manifest.set("seed_base", config.study.seed_base);
  manifest.set("seeds", seeds);
  manifest.set("failures", report.failures);
  report.manifest = manifest.finish();

  // Wall-clock times vary between runs; they live outside the manifest.
  json timings = {{"total_seconds", seconds_since(start)}, {"threads", threads}, {"replicate_seconds", wall}};
  json fit_times = json::array();
  for (const ReplicateOutcome& r : report.replicates)
    fit_times.push_back({{"standard", r.standard.wall_seconds}, {"preferential", r.preferential.wall_seconds}});
  timings["fit_seconds"] = fit_times;
  write_text(out_dir / "timings.json", dump_json(timings));
  return report;
}

TrackSet load_analysis_tracks(const ExperimentConfig& config, std::vector<std::string>* warnings) {
  const AnalysisSettings& a = config.analysis;
  if (a.tracks.empty()) throw ConfigError("analysis.tracks (input CSV) is not set");
  if (a.projected) {
    TrackSet t = read_tracks(a.tracks);
    if (a.time_scale != 1.0)
      for (Track& tr : t)
        for (double& v : tr.times) v *= a.time_scale;
    return t;
  }
  if (!a.projection) throw ConfigError("analysis.projection (zone, scale) is required for longitude/latitude input");
  const auto records = read_raw_records(a.tracks, a.time_scale);
  ProjectedTracks p = project_utm_scaled(records, *a.projection);
  if (warnings) *warnings = p.warnings;
  return p.tracks;
}

AnalysisReport run_data_analysis(const TrackSet& tracks, const ExperimentConfig& config, const fs::path& out_dir,
                                 int threads, const ProgressFn& progress) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  AnalysisReport report;
  report.tracks = tracks;
  const Rect region = config.prediction.region.value_or(tracks_extent(tracks));
  report.targets = lattice_points(region, config.prediction.rows, config.prediction.cols);
  const int n = config.analysis.replicates;
  report.replicates.resize(static_cast<std::size_t>(n));
  std::vector<double> wall(static_cast<std::size_t>(n), 0.0);
  std::mutex progress_mutex;

  parallel_for(n, threads, [&](int i) {
    const auto t0 = std::chrono::steady_clock::now();
    AnalysisReplicate& r = report.replicates[static_cast<std::size_t>(i)];
    r.index = i;
    r.seed = config.study.seed_base + static_cast<std::uint64_t>(i);
    try {
      const TrackSet sub = subsample_tracks(tracks, config.analysis.per_track, r.seed);
      ModelFits fits = fit_both(sub, region, initial_theta(sub, config), config);
      r.standard = std::move(fits.standard);
      r.preferential = std::move(fits.preferential);
      r.standard_prediction = krige(r.standard.params, sub, report.targets);
      r.preferential_prediction = predict_preferential(*fits.model, r.preferential, report.targets);
      r.ok = true;
      if (config.study.write_replicates) {
        const fs::path dir = out_dir / rep_dir(i);
        write_tracks(dir / "tracks.csv", sub);
        write_predictions(dir / "predictions_standard.csv", r.standard_prediction);
        write_predictions(dir / "predictions_preferential.csv", r.preferential_prediction);
        write_text(dir / "fit_standard.json", dump_json(fit_report(r.standard)));
        write_text(dir / "fit_preferential.json", dump_json(fit_report(r.preferential, fits.mesh_info)));
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    wall[static_cast<std::size_t>(i)] = seconds_since(t0);
    if (progress) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      progress("replicate " + std::to_string(i) + ": " + (r.ok ? std::string("ok") : "failed: " + r.error));
    }
  });

  Manifest manifest(out_dir, "analyze");
  std::ostringstream est;
  est << kEstimateHeader;
  std::vector<const Eigen::VectorXd*> pm, sm;
  json seeds = json::array(), errors = json::array();
  for (const AnalysisReplicate& r : report.replicates) {
    seeds.push_back(r.seed);
    if (!r.ok) {
      ++report.failures;
      errors.push_back({{"replicate", r.index}, {"error", r.error}});
      continue;
    }
    estimate_rows(est, r.index, r.seed, "standard", r.standard.estimates(), r.standard.converged);
    estimate_rows(est, r.index, r.seed, "preferential", r.preferential.estimates(), r.preferential.converged);
    pm.push_back(&r.preferential_prediction.mean);
    sm.push_back(&r.standard_prediction.mean);
  }
  report.failed = report.failures > config.study.max_failure_fraction * n;
  manifest.write_text("estimates.csv", est.str());
  manifest.write_text("config.json", config_to_json(config) + "\n");
  manifest.write_text("tracks_projected.csv", tracks_to_csv(tracks));

  if (!pm.empty()) {
    const int nt = static_cast<int>(report.targets.size());
    const Eigen::MatrixXd PM = stack(pm, nt), SM = stack(sm, nt);
    std::ostringstream q;
    q << "x,y";
    for (double qq : config.study.quantiles) {
      report.quantiles.emplace_back(qq, quantile_of_differences(PM, SM, qq));
      q << ',' << quantile_name(qq);
    }
    q << '\n';
    for (int i = 0; i < nt; ++i) {
      q << format_double(report.targets[static_cast<std::size_t>(i)].x()) << ','
        << format_double(report.targets[static_cast<std::size_t>(i)].y());
      for (const auto& [qq, v] : report.quantiles) q << ',' << format_double(v[i]);
      q << '\n';
    }
    manifest.write_text("difference_quantiles.csv", q.str());
  }
  if (config.study.write_replicates)
    for (const AnalysisReplicate& r : report.replicates)
      if (r.ok)
        for (const char* f : {"tracks.csv", "predictions_standard.csv", "predictions_preferential.csv",
                              "fit_standard.json", "fit_preferential.json"})
          manifest.add(rep_dir(r.index) + "/" + f);
  manifest.set("config_hash", config_hash(config));
  manifest.set("seeds", seeds);
  manifest.set("failures", report.failures);
  manifest.set("errors", errors);
  manifest.set("warnings", report.warnings);
  report.manifest = manifest.finish();
  write_text(out_dir / "timings.json",
             dump_json({{"total_seconds", seconds_since(start)}, {"replicate_seconds", wall}}));
  return report;
}

}  // namespace prefield
