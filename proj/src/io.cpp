#include "prefield/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "prefield/errors.hpp"

namespace prefield {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string hex(const unsigned char* bytes, unsigned int n) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < n; ++i) os << std::setw(2) << static_cast<int>(bytes[i]);
  return os.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

[[noreturn]] void bad_line(const std::string& source, int line, const std::string& what) {
  std::ostringstream os;
  os << source << ", line " << line << ": " << what;
  throw DataError(os.str());
}

double parse_double(const std::string& s, const std::string& source, int line, const char* column) {
  if (s == "nan" || s == "NaN" || s == "NA") return kNaN;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    bad_line(source, line, std::string("column ") + column + ": '" + s + "' is not a number");
  return v;
}

int parse_int(const std::string& s, const std::string& source, int line, const char* column) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    bad_line(source, line, std::string("column ") + column + ": '" + s + "' is not an integer");
  return v;
}

// ISO-8601 "YYYY-MM-DD[Thh:mm[:ss[.fff]]][Z]" in days since the epoch; nullopt when s is not
// of that form.
std::optional<double> parse_iso_days(const std::string& s) {
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned mo = 0, d = 0, hh = 0, mm = 0;
  double ss = 0.0;
  char tail[8] = {0};
  const int n = std::sscanf(s.c_str(), "%d-%u-%u%*[T ]%u:%u:%lf%7s", &y, &mo, &d, &hh, &mm, &ss, tail);
  if (n < 3) return std::nullopt;
  if (n > 6 && !(tail[0] == 'Z' && tail[1] == 0)) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss < 0.0 || ss >= 61.0) return std::nullopt;
  const double days = static_cast<double>(sys_days{ymd}.time_since_epoch().count());
  return days + (hh * 3600.0 + mm * 60.0 + ss) / 86400.0;
}

void check_header(const std::string& header, const std::vector<std::string>& expected,
                  const std::string& source) {
  const auto cols = split(header);
  if (cols != expected) {
    std::ostringstream os;
    os << "expected header '";
    for (std::size_t i = 0; i < expected.size(); ++i) os << (i ? "," : "") << expected[i];
    os << "'";
    bad_line(source, 1, os.str());
  }
}

json rect_json(const Rect& r) { return json::array({r.xmin, r.xmax, r.ymin, r.ymax}); }

Rect rect_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("expected [xmin, xmax, ymin, ymax]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json estimates_json(const std::vector<Estimate>& est) {
  json j = json::object();
  for (const Estimate& e : est)
    j[std::string(param_name(e.id))] = {
        {"value", e.value}, {"std_error", number_or_null(e.std_error)}, {"fixed", e.fixed}};
  return j;
}

json names(const std::vector<ParamId>& ids) {
  json j = json::array();
  for (ParamId id : ids) j.push_back(std::string(param_name(id)));
  return j;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number_or_null(m(r, c)));
    j.push_back(row);
  }
  return j;
}

json vector_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(number_or_null(v[i]));
  return j;
}

double nan_mean(const Eigen::VectorXd& v) {
  double s = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::isfinite(v[i])) {
      s += v[i];
      ++n;
    }
  return n ? s / n : kNaN;
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  return hex(digest, len);
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".json");
  return p;
}

void write_field(const fs::path& csv, const FieldRealization& field, double margin, double level) {
  const Mesh& mesh = *field.mesh;
  if (!mesh.is_lattice()) throw DataError("only lattice fields can be written");
  std::ostringstream os;
  os << "row,col,x,y,value\n";
  for (int r = 0; r < mesh.rows(); ++r)
    for (int c = 0; c < mesh.cols(); ++c) {
      const int i = mesh.index(r, c);
      os << r << ',' << c << ',' << format_double(mesh.vertex(i).x()) << ','
         << format_double(mesh.vertex(i).y()) << ',' << format_double(level + field.values[i]) << '\n';
    }
  write_text(csv, os.str());
  const json side = {{"domain", rect_json(mesh.domain())},
                     {"rows", mesh.rows()},
                     {"cols", mesh.cols()},
                     {"margin", margin}};
  write_text(sidecar_path(csv), dump_json(side));
}

FieldRealization read_field(const fs::path& csv, MeshSidecar* sidecar) {
  const std::string source = csv.string();
  MeshSidecar side;
  try {
    const json j = json::parse(read_text(sidecar_path(csv)));
    side.domain = rect_from_json(j.at("domain"));
    side.rows = j.at("rows").get<int>();
    side.cols = j.at("cols").get<int>();
    side.margin = j.value("margin", 0.0);
  } catch (const json::exception& e) {
    throw DataError(sidecar_path(csv).string() + ": invalid mesh sidecar: " + e.what());
  }
  auto mesh = std::make_shared<const Mesh>(Mesh::lattice(side.domain, side.rows, side.cols));
  Eigen::VectorXd values = Eigen::VectorXd::Constant(mesh->vertex_count(), kNaN);

  std::istringstream in(read_text(csv));
  std::string line;
  std::getline(in, line);
  check_header(line, {"row", "col", "x", "y", "value"}, source);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != 5) bad_line(source, lineno, "expected 5 columns");
    const int r = parse_int(f[0], source, lineno, "row");
    const int c = parse_int(f[1], source, lineno, "col");
    if (r < 0 || r >= side.rows || c < 0 || c >= side.cols) bad_line(source, lineno, "row/col outside the mesh");
    values[mesh->index(r, c)] = parse_double(f[4], source, lineno, "value");
  }
  for (int i = 0; i < values.size(); ++i)
    if (std::isnan(values[i])) throw DataError(source + ": missing value for vertex " + std::to_string(i));
  if (sidecar) *sidecar = side;
  return {mesh, values};
}

std::string tracks_to_csv(const TrackSet& tracks) {
  std::ostringstream os;
  os << "track_id,t,x,y,response\n";
  for (const Track& t : tracks)
    for (std::size_t k = 0; k < t.size(); ++k)
      os << t.id << ',' << format_double(t.times[k]) << ',' << format_double(t.locations[k].x()) << ','
         << format_double(t.locations[k].y()) << ',' << format_double(t.responses[k]) << '\n';
  return os.str();
}

void write_tracks(const fs::path& path, const TrackSet& tracks) { write_text(path, tracks_to_csv(tracks)); }

TrackSet parse_tracks(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  check_header(line, {"track_id", "t", "x", "y", "response"}, source);
  TrackSet tracks;
  std::set<int> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != 5) bad_line(source, lineno, "expected 5 columns");
    const int id = parse_int(f[0], source, lineno, "track_id");
    if (tracks.empty() || tracks.back().id != id) {
      if (!seen.insert(id).second) bad_line(source, lineno, "records of track " + std::to_string(id) + " are not contiguous");
      tracks.emplace_back();
      tracks.back().id = id;
    }
    Track& t = tracks.back();
    const double time = parse_double(f[1], source, lineno, "t");
    if (!t.times.empty() && !(time > t.times.back())) bad_line(source, lineno, "times must increase within a track");
    t.times.push_back(time);
    t.locations.emplace_back(parse_double(f[2], source, lineno, "x"), parse_double(f[3], source, lineno, "y"));
    t.responses.push_back(parse_double(f[4], source, lineno, "response"));
    if (!std::isfinite(time) || !t.locations.back().allFinite() || !std::isfinite(t.responses.back()))
      bad_line(source, lineno, "non-finite value");
  }
  for (const Track& t : tracks)
    if (t.size() < 3)
      throw DataError(source + ": track " + std::to_string(t.id) + " has fewer than 3 observations");
  return tracks;
}

TrackSet read_tracks(const fs::path& path) { return parse_tracks(read_text(path), path.string()); }

std::vector<RawRecord> parse_raw_records(const std::string& text, double time_scale, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  check_header(line, {"track_id", "timestamp", "longitude", "latitude", "response"}, source);
  std::vector<RawRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != 5) bad_line(source, lineno, "expected 5 columns");
    RawRecord r;
    r.line = lineno;
    r.track_id = parse_int(f[0], source, lineno, "track_id");
    if (const auto days = parse_iso_days(f[1]))
      r.timestamp = *days;
    else
      r.timestamp = parse_double(f[1], source, lineno, "timestamp");
    r.timestamp *= time_scale;
    r.longitude = parse_double(f[2], source, lineno, "longitude");
    r.latitude = parse_double(f[3], source, lineno, "latitude");
    r.response = parse_double(f[4], source, lineno, "response");
    if (!std::isfinite(r.timestamp) || !std::isfinite(r.longitude) || !std::isfinite(r.latitude) ||
        !std::isfinite(r.response))
      bad_line(source, lineno, "non-finite value");
    out.push_back(r);
  }
  return out;
}

std::vector<RawRecord> read_raw_records(const fs::path& path, double time_scale) {
  return parse_raw_records(read_text(path), time_scale, path.string());
}

void write_predictions(const fs::path& path, const PredictionGrid& g) {
  std::ostringstream os;
  os << "x,y,mean,variance,model_tag\n";
  const std::string tag(model_tag_name(g.tag));
  for (int i = 0; i < g.size(); ++i)
    os << format_double(g.locations[static_cast<std::size_t>(i)].x()) << ','
       << format_double(g.locations[static_cast<std::size_t>(i)].y()) << ',' << format_double(g.mean[i])
       << ',' << format_double(g.variance[i]) << ',' << tag << '\n';
  write_text(path, os.str());
}

PredictionGrid read_predictions(const fs::path& path) {
  const std::string source = path.string();
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  check_header(line, {"x", "y", "mean", "variance", "model_tag"}, source);
  PredictionGrid g;
  std::vector<double> mean, var;
  int lineno = 1;
  bool tagged = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line);
    if (f.size() != 5) bad_line(source, lineno, "expected 5 columns");
    g.locations.emplace_back(parse_double(f[0], source, lineno, "x"), parse_double(f[1], source, lineno, "y"));
    mean.push_back(parse_double(f[2], source, lineno, "mean"));
    var.push_back(parse_double(f[3], source, lineno, "variance"));
    g.valid.push_back(std::isfinite(mean.back()) && std::isfinite(var.back()));
    ModelTag tag;
    if (f[4] == "preferential") tag = ModelTag::preferential;
    else if (f[4] == "standard") tag = ModelTag::standard;
    else bad_line(source, lineno, "model_tag must be preferential or standard");
    if (tagged && tag != g.tag) bad_line(source, lineno, "mixed model tags");
    g.tag = tag;
    tagged = true;
  }
  g.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  g.variance = Eigen::Map<Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size()));
  return g;
}

json fit_report(const PreferentialFit& fit, const MeshSidecar& mesh) {
  return {{"model", "preferential"},
          {"estimates", estimates_json(fit.estimates())},
          {"kappa", fit.theta.field.kappa},
          {"free", names(fit.free)},
          {"nll", fit.laplace.nll},
          {"converged", fit.converged},
          {"inner_converged", fit.laplace.converged},
          {"inner_gradient_norm", fit.laplace.grad_norm},
          {"outer_iterations", fit.outer_iterations},
          {"evaluations", fit.evaluations},
          {"inner_iterations", fit.inner_iterations},
          {"message", fit.message},
          {"covariance_ok", fit.covariance_ok},
          {"covariance", matrix_json(fit.covariance)},
          {"correlation", matrix_json(fit.correlation())},
          {"mesh", {{"domain", rect_json(mesh.domain)}, {"rows", mesh.rows}, {"cols", mesh.cols}, {"margin", mesh.margin}}}};
}

json fit_report(const StandardFit& fit) {
  return {{"model", "standard"},
          {"estimates", estimates_json(fit.estimates())},
          {"kappa", fit.params.kappa},
          {"free", names(fit.free)},
          {"nll", fit.nll},
          {"converged", fit.converged},
          {"outer_iterations", fit.outer_iterations},
          {"evaluations", fit.evaluations},
          {"message", fit.message},
          {"covariance_ok", fit.covariance_ok},
          {"covariance", matrix_json(fit.covariance)}};
}

ThetaFull theta_from_report(const json& report) {
  ThetaFull theta;
  theta.movement.sigma.setIdentity();
  try {
    const json& est = report.at("estimates");
    for (const auto& [name, entry] : est.items()) {
      const auto id = param_from_name(name);
      if (!id) throw DataError("fit report: unknown parameter '" + name + "'");
      set_param(theta, *id, entry.at("value").get<double>());
    }
    theta.field.kappa = report.value("kappa", 2.0);
  } catch (const json::exception& e) {
    throw DataError(std::string("fit report: ") + e.what());
  }
  return theta;
}

json score_json(const ScoreReport& pref, const ScoreReport& std_model, const ScoreDiffs& diffs) {
  return {{"rmspe_convention", std::string(convention_name(pref.convention))},
          {"mign", {{"preferential", vector_json(pref.mign)},
                    {"standard", vector_json(std_model.mign)},
                    {"difference", vector_json(diffs.mign)}}},
          {"summary",
           {{"mean_rmspe_preferential", number_or_null(nan_mean(pref.rmspe))},
            {"mean_rmspe_standard", number_or_null(nan_mean(std_model.rmspe))},
            {"mean_rmspe_difference", number_or_null(nan_mean(diffs.rmspe))},
            {"mean_mign_difference", number_or_null(nan_mean(diffs.mign))},
            {"mean_lign_difference", number_or_null(nan_mean(diffs.lign))},
            {"fraction_mign_difference_negative",
             number_or_null(diffs.mign.size() ? (diffs.mign.array() < 0.0).count() / double(diffs.mign.size()) : kNaN)}}},
          {"locations_file", "scores_locations.csv"}};
}

void write_location_scores(const fs::path& path, const std::vector<Vec2>& locations, const ScoreReport& pref,
                           const ScoreReport& std_model, const ScoreDiffs& diffs,
                           const std::vector<std::pair<std::string, Eigen::VectorXd>>& extra) {
  std::ostringstream os;
  os << "x,y,rmspe_preferential,rmspe_standard,rmspe_difference,lign_preferential,lign_standard,lign_difference";
  for (const auto& [name, v] : extra) os << ',' << name;
  os << '\n';
  for (std::size_t i = 0; i < locations.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    os << format_double(locations[i].x()) << ',' << format_double(locations[i].y()) << ','
       << format_double(pref.rmspe[k]) << ',' << format_double(std_model.rmspe[k]) << ','
       << format_double(diffs.rmspe[k]) << ',' << format_double(pref.lign[k]) << ','
       << format_double(std_model.lign[k]) << ',' << format_double(diffs.lign[k]);
    for (const auto& [name, v] : extra) os << ',' << format_double(v[k]);
    os << '\n';
  }
  write_text(path, os.str());
}

Manifest::Manifest(fs::path out_dir, std::string command)
    : out_dir_(std::move(out_dir)), command_(std::move(command)) {
  fs::create_directories(out_dir_);
}

void Manifest::add(const std::string& relative) { files_.push_back(relative); }

void Manifest::write_json(const std::string& relative, const json& j) {
  prefield::write_text(path(relative), dump_json(j));
  add(relative);
}

void Manifest::write_text(const std::string& relative, const std::string& text) {
  prefield::write_text(path(relative), text);
  add(relative);
}

fs::path Manifest::finish() {
  json files = json::array();
  std::vector<std::string> sorted = files_;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& rel : sorted) {
    const std::string content = read_text(path(rel));
    files.push_back({{"path", rel}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
  }
  json m = {{"tool", "prefield"}, {"version", "0.1.0"}, {"command", command_}, {"files", files}};
  for (const auto& [k, v] : extra_.items()) m[k] = v;
  const fs::path p = path("manifest.json");
  prefield::write_text(p, dump_json(m));
  return p;
}

}  // namespace prefield
