#include "prefield/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "prefield/errors.hpp"
#include "prefield/io.hpp"

namespace prefield {

using nlohmann::json;

namespace {

// Object view that records which keys were read so leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a table");
  }
  ~Section() = default;

  std::string where() const { return path_.empty() ? "config" : "[" + path_ + "]"; }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Section sub(const std::string& key) {
    used_.insert(key);
    static const json kEmpty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? kEmpty : *it, key_path(key));
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(key_path(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(key_path(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        throw ConfigError(key_path(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(key_path(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(key_path(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(key_path(key) + " must be a number");
      out = v->get<double>();
    }
  }
  std::vector<double> numbers(const std::string& key, const json& v) const {
    if (!v.is_array()) throw ConfigError(key_path(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(key_path(key) + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) out = numbers(key, *v);
  }
  void get_rect(const std::string& key, std::optional<Rect>& out) {
    if (const json* v = find(key)) {
      const auto n = numbers(key, *v);
      if (n.size() != 4) throw ConfigError(key_path(key) + " must be [xmin, xmax, ymin, ymax]");
      if (!(n[0] < n[1] && n[2] < n[3])) throw ConfigError(key_path(key) + " is an empty rectangle");
      out = Rect{n[0], n[1], n[2], n[3]};
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) throw ConfigError("unknown key " + key_path(key));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_field(Section s, FieldParams& f) {
  s.get("mu", f.mu);
  s.get("tau2", f.tau2);
  s.get("kappa", f.kappa);
  s.get("phi", f.phi);
  s.get("sigma2", f.sigma2);
  s.finish();
}

void read_movement(Section s, MovementParams& m) {
  s.get("alpha", m.alpha);
  s.get("c", m.c);
  s.get("sigma_beta", m.sigma_beta);
  s.get("beta0", m.beta0);
  if (const json* v = s.find("sigma")) {
    if (v->is_number()) {
      m.sigma = v->get<double>() * Eigen::Matrix2d::Identity();
    } else if (v->is_array() && v->size() == 2 && (*v)[0].is_number()) {
      const auto d = s.numbers("sigma", *v);
      m.sigma = Eigen::Vector2d(d[0], d[1]).asDiagonal();
    } else if (v->is_array() && v->size() == 2) {
      for (int r = 0; r < 2; ++r) {
        const auto row = s.numbers("sigma", (*v)[static_cast<std::size_t>(r)]);
        if (row.size() != 2) throw ConfigError("movement.sigma must be a number, [sx, sy] or a 2x2 array");
        m.sigma(r, 0) = row[0];
        m.sigma(r, 1) = row[1];
      }
    } else {
      throw ConfigError("movement.sigma must be a number, [sx, sy] or a 2x2 array");
    }
  }
  s.finish();
}

void read_protocol(Section s, SimProtocol& p) {
  std::optional<Rect> domain;
  s.get_rect("domain", domain);
  if (domain) p.domain = *domain;
  s.get("n_raw", p.n_raw);
  s.get("burn_in", p.burn_in);
  s.get("thin", p.thin);
  s.get("lambda", p.lambda);
  s.get("n_tracks", p.n_tracks);
  s.get("grad_step", p.grad_step);
  s.finish();
}

void read_study(Section s, StudySettings& st) {
  s.get("replicates", st.replicates);
  s.get("seed_base", st.seed_base);
  s.get("generation_rows", st.generation_rows);
  s.get("generation_cols", st.generation_cols);
  s.get("threads", st.threads);
  s.get("max_failure_fraction", st.max_failure_fraction);
  s.get("quantiles", st.quantiles);
  s.get("write_replicates", st.write_replicates);
  s.finish();
}

void read_lattice(Section s, LatticeSpec& l) {
  s.get_rect("region", l.region);
  s.get("rows", l.rows);
  s.get("cols", l.cols);
  s.finish();
}

void read_fit(Section s, FitSettings& f) {
  if (const json* v = s.find("fixed")) {
    if (!v->is_array()) throw ConfigError("fit.fixed must be an array of parameter names");
    f.mask = ParamMask::all_free();
    for (const auto& e : *v) {
      if (!e.is_string()) throw ConfigError("fit.fixed must be an array of parameter names");
      const std::string name = e.get<std::string>();
      if (name == "kappa") continue;  // always fixed
      const auto id = param_from_name(name);
      if (!id) throw ConfigError("fit.fixed: unknown parameter '" + name + "'");
      f.mask.set_fixed(*id, true);
    }
  }
  s.get("cell_width", f.cell_width);
  s.get("margin_phi", f.margin_phi);
  s.get("margin_cells", f.margin_cells);
  s.get("log_transform", f.options.log_transform);
  s.get("compute_covariance", f.options.compute_covariance);
  s.get("init_at_truth", f.init_at_truth);
  s.get("inner_tol", f.options.laplace.tol);
  s.get("inner_max_iter", f.options.laplace.max_iter);
  s.get("outer_rel_tol", f.options.outer.rel_tol);
  s.get("outer_max_evals", f.options.outer.max_evals);
  s.get("fd_step", f.options.outer.fd_step);
  s.get("hessian_step", f.options.hessian_step);
  Section init = s.sub("init");
  init.get("mu", f.init_mu);
  init.get("phi", f.init_phi);
  init.get("sigma2", f.init_sigma2);
  init.get("alpha", f.init_alpha);
  init.get("sigma_beta", f.init_sigma_beta);
  init.get("sigma_x", f.init_sigma_x);
  init.get("sigma_y", f.init_sigma_y);
  init.get("beta0", f.init_beta0);
  init.finish();
  s.finish();
}

void read_analysis(Section s, AnalysisSettings& a) {
  s.get("tracks", a.tracks);
  s.get("projected", a.projected);
  s.get("per_track", a.per_track);
  s.get("replicates", a.replicates);
  s.get("time_scale", a.time_scale);
  if (s.has("projection")) {
    Section p = s.sub("projection");
    UtmSpec spec;
    p.get("zone", spec.zone);
    std::optional<double> scale;
    p.get("scale", scale);
    if (!scale) throw ConfigError("analysis.projection.scale is required (no default)");
    spec.scale = *scale;
    p.get("southern_false_northing", spec.southern_false_northing);
    p.finish();
    a.projection = spec;
  }
  s.finish();
}

json rect_json(const Rect& r) { return json::array({r.xmin, r.xmax, r.ymin, r.ymax}); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ExperimentConfig::ExperimentConfig() {
  movement.alpha = 100.0;
  movement.c = 0.0;
  movement.sigma_beta = 0.1;
  movement.sigma = 3.0 * Eigen::Matrix2d::Identity();
  movement.beta0 = -1.5;
}

void ExperimentConfig::validate() const {
  field.validate();
  if (field.kappa != 2.0) throw ConfigError("field.kappa must be 2 (the only smoothness supported by the GMRF)");
  movement.validate();
  protocol.validate();
  if (study.replicates < 1) throw ConfigError("study.replicates must be >= 1");
  if (study.generation_rows < 2 || study.generation_cols < 2)
    throw ConfigError("study.generation_rows/cols must be >= 2");
  if (study.threads < 1) throw ConfigError("study.threads must be >= 1");
  if (!(study.max_failure_fraction >= 0.0 && study.max_failure_fraction <= 1.0))
    throw ConfigError("study.max_failure_fraction must lie in [0, 1]");
  for (double q : study.quantiles)
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("study.quantiles must lie in [0, 1]");
  if (prediction.rows < 1 || prediction.cols < 1) throw ConfigError("prediction.rows/cols must be >= 1");
  if (!(fit.cell_width > 0.0)) throw ConfigError("fit.cell_width must be positive");
  if (fit.margin_phi < 0.0 || fit.margin_cells < 0.0) throw ConfigError("fit margins must be >= 0");
  if (!(fit.options.laplace.tol > 0.0) || fit.options.laplace.max_iter < 1)
    throw ConfigError("fit.inner_tol must be positive and fit.inner_max_iter >= 1");
  if (!(fit.options.outer.rel_tol > 0.0) || fit.options.outer.max_evals < 1)
    throw ConfigError("fit.outer_rel_tol must be positive and fit.outer_max_evals >= 1");
  if (!(fit.options.outer.fd_step > 0.0) || !(fit.options.hessian_step > 0.0))
    throw ConfigError("fit.fd_step and fit.hessian_step must be positive");
  if (analysis.per_track < 3) throw ConfigError("analysis.per_track must be >= 3");
  if (analysis.replicates < 1) throw ConfigError("analysis.replicates must be >= 1");
  if (!(analysis.time_scale > 0.0)) throw ConfigError("analysis.time_scale must be positive");
  if (analysis.projection) analysis.projection->validate();
}

ExperimentConfig parse_config(const std::string& text, bool is_json) {
  json root;
  if (is_json) {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
  } else {
    try {
      const toml::table table = toml::parse(text);
      std::ostringstream os;
      os << toml::json_formatter{table};
      root = json::parse(os.str());
    } catch (const toml::parse_error& e) {
      std::ostringstream os;
      os << "invalid TOML config at line " << e.source().begin.line << ", column "
         << e.source().begin.column << ": " << e.description();
      throw ConfigError(os.str());
    }
  }

  ExperimentConfig cfg;
  Section top(root, "");
  top.get("output_dir", cfg.output_dir);
  std::string convention(convention_name(cfg.convention));
  top.get("rmspe_convention", convention);
  cfg.convention = convention_from_name(convention);
  read_field(top.sub("field"), cfg.field);
  read_movement(top.sub("movement"), cfg.movement);
  read_protocol(top.sub("protocol"), cfg.protocol);
  read_study(top.sub("study"), cfg.study);
  read_lattice(top.sub("prediction"), cfg.prediction);
  read_fit(top.sub("fit"), cfg.fit);
  read_analysis(top.sub("analysis"), cfg.analysis);
  top.finish();
  cfg.protocol.seed = cfg.study.seed_base;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.extension() == ".json");
}

std::string config_to_json(const ExperimentConfig& c) {
  // output_dir and threads do not change results and are left out, so reruns elsewhere hash
  // identically.
  json j;
  j["rmspe_convention"] = std::string(convention_name(c.convention));
  j["field"] = {{"mu", c.field.mu}, {"tau2", c.field.tau2}, {"kappa", c.field.kappa},
                {"phi", c.field.phi}, {"sigma2", c.field.sigma2}};
  j["movement"] = {{"alpha", c.movement.alpha},
                   {"c", c.movement.c},
                   {"sigma_beta", c.movement.sigma_beta},
                   {"sigma", json::array({json::array({c.movement.sigma(0, 0), c.movement.sigma(0, 1)}),
                                          json::array({c.movement.sigma(1, 0), c.movement.sigma(1, 1)})})},
                   {"beta0", c.movement.beta0}};
  j["protocol"] = {{"domain", rect_json(c.protocol.domain)}, {"n_raw", c.protocol.n_raw},
                   {"burn_in", c.protocol.burn_in},          {"thin", c.protocol.thin},
                   {"lambda", c.protocol.lambda},            {"n_tracks", c.protocol.n_tracks},
                   {"grad_step", c.protocol.grad_step}};
  j["study"] = {{"replicates", c.study.replicates},
                {"seed_base", c.study.seed_base},
                {"generation_rows", c.study.generation_rows},
                {"generation_cols", c.study.generation_cols},
                {"max_failure_fraction", c.study.max_failure_fraction},
                {"quantiles", c.study.quantiles},
                {"write_replicates", c.study.write_replicates}};
  j["prediction"] = {{"region", c.prediction.region ? rect_json(*c.prediction.region) : json(nullptr)},
                     {"rows", c.prediction.rows},
                     {"cols", c.prediction.cols}};
  json fixed = json::array();
  for (int i = 0; i < kParamCount; ++i)
    if (c.fit.mask.fixed(static_cast<ParamId>(i)))
      fixed.push_back(std::string(param_name(static_cast<ParamId>(i))));
  j["fit"] = {{"fixed", fixed},
              {"cell_width", c.fit.cell_width},
              {"margin_phi", c.fit.margin_phi},
              {"margin_cells", c.fit.margin_cells},
              {"log_transform", c.fit.options.log_transform},
              {"compute_covariance", c.fit.options.compute_covariance},
              {"init_at_truth", c.fit.init_at_truth},
              {"inner_tol", c.fit.options.laplace.tol},
              {"inner_max_iter", c.fit.options.laplace.max_iter},
              {"outer_rel_tol", c.fit.options.outer.rel_tol},
              {"outer_max_evals", c.fit.options.outer.max_evals},
              {"fd_step", c.fit.options.outer.fd_step},
              {"hessian_step", c.fit.options.hessian_step},
              {"init",
               {{"mu", opt_json(c.fit.init_mu)},
                {"phi", opt_json(c.fit.init_phi)},
                {"sigma2", opt_json(c.fit.init_sigma2)},
                {"alpha", opt_json(c.fit.init_alpha)},
                {"sigma_beta", opt_json(c.fit.init_sigma_beta)},
                {"sigma_x", opt_json(c.fit.init_sigma_x)},
                {"sigma_y", opt_json(c.fit.init_sigma_y)},
                {"beta0", opt_json(c.fit.init_beta0)}}}};
  j["analysis"] = {{"tracks", c.analysis.tracks},
                   {"projected", c.analysis.projected},
                   {"per_track", c.analysis.per_track},
                   {"replicates", c.analysis.replicates},
                   {"time_scale", c.analysis.time_scale}};
  if (c.analysis.projection)
    j["analysis"]["projection"] = {{"zone", c.analysis.projection->zone},
                                   {"scale", c.analysis.projection->scale},
                                   {"southern_false_northing", c.analysis.projection->southern_false_northing}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(config_to_json(config)); }

}  // namespace prefield
