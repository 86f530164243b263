// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prefield/fem.hpp"
#include "prefield/gmrf.hpp"
#include "prefield/io.hpp"
#include "prefield/laplace.hpp"
#include "prefield/movement.hpp"
#include "prefield/score.hpp"
#include "prefield/study.hpp"
#include "toy_problem.hpp"

using namespace prefield;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  if (!o.pass) ++failures;
  std::cout << "criterion " << id << " [" << (o.pass ? "PASS" : "FAIL") << "] " << title << ": " << o.detail
            << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// One-sided p-value of H1: mean < mu0.
double t_test_below(const std::vector<double>& v, double mu0) {
  const double n = static_cast<double>(v.size());
  const double t = (mean(v) - mu0) / std::sqrt(sample_var(v) / n);
  return boost::math::cdf(boost::math::students_t(n - 1), t);
}

/// Two-sided Welch p-value for equal means.
double welch_p(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = sample_var(a) / na, vb = sample_var(b) / nb;
  if (va + vb == 0.0) return mean(a) == mean(b) ? 1.0 : 0.0;
  const double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / (na - 1) + vb * vb / (nb - 1));
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
}

/// Two-sided paired t-test p-value.
double paired_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double sd = std::sqrt(sample_var(d));
  if (sd == 0.0) return 1.0;
  const double t = mean(d) / (sd / std::sqrt(n));
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(n - 1), std::abs(t)));
}

double nan_mean(const Eigen::VectorXd& v) {
  double s = 0;
  int n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  return n ? s / n : std::nan("");
}

Outcome laplace_exactness() {
  const fixture::Toy toy(0.0);
  const auto t0 = std::chrono::steady_clock::now();
  const LaplaceResult r = laplace_nll(toy.theta, toy.model);
  const double secs = seconds_since(t0);
  const double exact = fixture::alpha_zero_reference(toy);
  const double rel = std::abs(r.nll - exact) / std::abs(exact);
  return {r.converged && rel <= 1e-4 && secs < 1.0,
          "m=" + std::to_string(toy.model->field_dim()) + ", n=" + std::to_string(toy.model->tracks()[0].size()) +
              ", laplace " + fmt(r.nll, 12) + " vs exact " + fmt(exact, 12) + ", rel err " + fmt(rel, 3) + ", " +
              fmt(secs, 3) + " s"};
}

Outcome matern_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  const double phi = 25.0, sigma2 = 1.5;
  const Mesh m = fixture::matern_check_mesh(phi);
  FieldParams p{5.0, 0.1, 2.0, phi, sigma2};
  const Eigen::MatrixXd cov = Eigen::MatrixXd(build_precision(assemble_fem(m), p).Q).inverse();
  double worst_var = 0.0, worst_corr = 0.0;
  for (int i = 0; i < m.vertex_count(); ++i) {
    if (!fixture::matern_check_interior(m.vertex(i), phi)) continue;
    worst_var = std::max(worst_var, std::abs(cov(i, i) - sigma2) / sigma2);
    for (int j = 0; j < m.vertex_count(); ++j) {
      if (!fixture::matern_check_interior(m.vertex(j), phi)) continue;
      const double r = (m.vertex(i) - m.vertex(j)).norm();
      if (r > 2.0 * phi) continue;
      const double corr = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
      worst_corr = std::max(worst_corr, std::abs(corr - oracle::matern2(r, phi, 1.0)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_var < 0.10 && worst_corr < 0.05 && secs < 10.0,
          std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " mesh, max variance error " +
              fmt(100 * worst_var, 3) + "%, max correlation error " + fmt(worst_corr, 3) + ", " + fmt(secs, 3) + " s"};
}

Outcome recursion_equivalence() {
  double worst = 0.0;
  for (int n : {3, 5, 9, 15}) {
    const Mesh m = Mesh::lattice({-70, 70, -70, 70}, n, n);
    const FemMatrices fem = assemble_fem(m);
    Eigen::MatrixXd g;
    Eigen::VectorXd c;
    oracle::dense_fem(m, g, c);
    for (double phi : {5.0, 25.0, 60.0}) {
      const Eigen::MatrixXd k = c.asDiagonal().toDenseMatrix() / (phi * phi) + g;
      const Eigen::MatrixXd cinv = c.cwiseInverse().asDiagonal();
      const Eigen::MatrixXd rec = k * cinv * k * cinv * k;
      worst = std::max(worst, (Eigen::MatrixXd(spde_operator(fem, phi)) - rec).norm() / rec.norm());
    }
  }
  return {worst <= 1e-10, "max relative Frobenius difference " + fmt(worst, 3) + " over 3..15 square meshes"};
}

Outcome gradient_check() {
  const fixture::Toy toy(30.0);
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Eigen::VectorXd z = toy.random_z(100 + seed);
    Eigen::VectorXd g;
    toy.model->evaluate(z, toy.theta, toy.bundle, &g, nullptr);
    const Eigen::VectorXd fd = oracle::fd_gradient(
        [&](const Eigen::VectorXd& x) { return toy.model->evaluate(x, toy.theta, toy.bundle, nullptr, nullptr); }, z,
        1e-5);
    worst = std::max(worst, (g - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, fd.lpNorm<Eigen::Infinity>()));
  }
  return {worst <= 1e-5, "20 points, max relative difference " + fmt(worst, 3)};
}

Outcome score_identities() {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  const Eigen::MatrixXd truth = Eigen::MatrixXd::Random(3, 4);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 4);
  check(rmspe(truth, truth) == Eigen::VectorXd::Zero(4), "rmspe zero error");
  check(((rmspe(truth, truth.array() - 0.5).array() - 0.5).abs() < 1e-14).all(), "rmspe constant error");
  Eigen::MatrixXd z2 = Eigen::MatrixXd::Zero(2, 1), p2(2, 1);
  p2 << -1.0, 3.0;
  check(rmspe(z2, p2)[0] == 2.0, "rmspe {1,-3}");
  check(mign(truth, truth, ones).cwiseAbs().maxCoeff() == 0.0, "mign zero error unit variance");
  check(((mign(truth, truth, ones * std::exp(2.0)).array() - 1.0).abs() < 1e-14).all(), "mign sd = e");
  check(((mign(truth, truth.array() + std::sqrt(2.0), ones).array() - 1.0).abs() < 1e-14).all(), "mign error^2 = 2 var");
  check(lign(truth, truth, ones).cwiseAbs().maxCoeff() == 0.0, "lign zero error unit variance");
  check(((lign(truth, truth, ones * std::exp(2.0)).array() - 1.0).abs() < 1e-14).all(), "lign sd = e");
  Eigen::MatrixXd t1(1, 2), q1(1, 2), v1(1, 2);
  t1 << 0.0, 1.0;
  q1 << 0.5, -1.0;
  v1 << 2.0, 0.5;
  const Eigen::VectorXd l1 = lign(t1, q1, v1);
  for (int i = 0; i < 2; ++i) {
    const double e = t1(0, i) - q1(0, i);
    check(std::abs(l1[i] - (e * e / (2 * v1(0, i)) + 0.5 * std::log(v1(0, i)))) < 1e-15, "lign single replicate");
  }
  const Eigen::MatrixXd pa = truth + 0.2 * Eigen::MatrixXd::Random(3, 4), var = ones * 0.7;
  const ScoreReport a = score(truth, pa, var), b = score(truth, truth, var);
  const ScoreDiffs same = score_diffs(a, a), ab = score_diffs(a, b), ba = score_diffs(b, a);
  check(same.mign.isZero(0) && same.lign.isZero(0) && same.rmspe.isZero(0), "diffs identical inputs");
  check(ab.mign == -ba.mign && ab.lign == -ba.lign && ab.rmspe == -ba.rmspe, "diffs antisymmetry");
  const double delta = 0.3;
  const ScoreDiffs shift = score_diffs(score(truth, truth, var * std::exp(-2 * delta)), b);
  check(((shift.mign.array() + delta).abs() < 1e-14).all(), "diffs shift by -delta");
  check(quantile({-1, 1, -1, 1}, 0.5) == 0.0, "quantile midpoint");
  check(quantile({2.5, 2.5, 2.5}, 0.9) == 2.5, "quantile constant");
  std::string detail = bad.empty() ? "all identities hold" : "failed:";
  for (const auto& s : bad) detail += " " + s + ";";
  return {bad.empty(), detail};
}

Outcome logistic_fixture() {
  const double w = behaviour_weight(-1.5);
  return {std::round(w * 100) / 100 == 0.18, "f(-1.5) = " + fmt(w, 6)};
}

struct StudyNumbers {
  std::vector<double> mu_pref, mu_std, phi_pref, phi_std, s2_pref, s2_std, alpha, alpha_se;
  std::vector<double> mign_diff;
  double mean_lign_diff = 0;
  int ok = 0, total = 0;
  bool failed = false;
  double seconds = 0;
};

StudyNumbers run_study(const ExperimentConfig& cfg, const fs::path& dir, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(dir);
  const StudyReport r = run_simulation_study(cfg, dir, threads, [](const std::string& msg) {
    std::cerr << "  " << msg << std::endl;
  });
  StudyNumbers s;
  s.total = static_cast<int>(r.replicates.size());
  s.failed = r.failed;
  for (const auto& rep : r.replicates) {
    if (!rep.ok) continue;
    ++s.ok;
    s.mu_pref.push_back(rep.preferential.theta.field.mu);
    s.mu_std.push_back(rep.standard.params.mu);
    s.phi_pref.push_back(rep.preferential.theta.field.phi);
    s.phi_std.push_back(rep.standard.params.phi);
    s.s2_pref.push_back(rep.preferential.theta.field.sigma2);
    s.s2_std.push_back(rep.standard.params.sigma2);
    s.alpha.push_back(rep.preferential.theta.movement.alpha);
    double se = std::nan("");
    for (const auto& e : rep.preferential.estimates())
      if (e.id == ParamId::alpha) se = e.std_error;
    s.alpha_se.push_back(se);
  }
  s.mign_diff.assign(r.diffs.mign.data(), r.diffs.mign.data() + r.diffs.mign.size());
  s.mean_lign_diff = nan_mean(r.diffs.lign);
  s.seconds = seconds_since(t0);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefield acceptance run"};
  std::string out_dir = "acceptance_out";
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  int replicates = 20;
  bool skip_studies = false;
  app.add_option("--out-dir", out_dir, "Directory for the study artifacts");
  app.add_option("--threads", threads, "Worker threads for the studies")->check(CLI::PositiveNumber);
  app.add_option("--replicates", replicates, "Replicates per study")->check(CLI::Range(3, 1000));
  app.add_flag("--skip-studies", skip_studies, "Only the exactness criteria (1-4, 8, 9)");
  CLI11_PARSE(app, argc, argv);

  report(1, "Laplace exactness oracle", laplace_exactness());
  report(2, "GMRF vs Matern agreement", matern_agreement());
  report(3, "four-term expansion equals recursion", recursion_equivalence());
  report(4, "inner gradient vs finite differences", gradient_check());
  report(8, "score function identities", score_identities());
  report(9, "logistic fixture", logistic_fixture());
  if (skip_studies) return failures ? 1 : 0;

  const fs::path root(out_dir);
  ExperimentConfig pref_cfg;
  pref_cfg.study.replicates = replicates;
  std::cerr << "study alpha=100, " << replicates << " replicates" << std::endl;
  const StudyNumbers a = run_study(pref_cfg, root / "alpha100", threads);

  {
    const double p = t_test_below(a.mu_std, 5.0);
    const double bias_std = mean(a.mu_std) - 5.0, bias_pref = mean(a.mu_pref) - 5.0;
    report(5, "bias direction",
           {!a.failed && p < 0.05 && std::abs(bias_pref) < std::abs(bias_std),
            std::to_string(a.ok) + "/" + std::to_string(a.total) + " replicates, mean mu standard " +
                fmt(mean(a.mu_std)) + " (one-sided p " + fmt(p, 3) + "), mean mu preferential " +
                fmt(mean(a.mu_pref)) + ", " + fmt(a.seconds / 60, 3) + " min"});
  }
  {
    int neg = 0;
    for (double d : a.mign_diff) neg += d < 0;
    const double frac = a.mign_diff.empty() ? 0.0 : static_cast<double>(neg) / a.mign_diff.size();
    report(6, "prediction gain",
           {!a.failed && frac >= 0.7 && a.mean_lign_diff < 0,
            "MIGN difference negative in " + std::to_string(neg) + "/" + std::to_string(a.mign_diff.size()) +
                " replicates, mean MIGN difference " + fmt(mean(a.mign_diff)) + ", mean LIGN difference " +
                fmt(a.mean_lign_diff)});
  }

  ExperimentConfig null_cfg = pref_cfg;
  null_cfg.movement.alpha = 0.0;
  std::cerr << "study alpha=0, " << replicates << " replicates" << std::endl;
  const StudyNumbers z = run_study(null_cfg, root / "alpha0", threads);
  {
    const double pm = welch_p(z.mu_pref, z.mu_std), pp = welch_p(z.phi_pref, z.phi_std);
    const double ps = welch_p(z.s2_pref, z.s2_std);
    const double ratio = std::abs(mean(z.mign_diff)) / std::abs(mean(a.mign_diff));
    report(7, "non-preferential control",
           {!z.failed && pm > 0.05 && pp > 0.05 && ps > 0.05 && ratio < 0.25,
            "Welch p mu " + fmt(pm, 3) + ", phi " + fmt(pp, 3) + ", sigma2 " + fmt(ps, 3) + "; paired p mu " +
                fmt(paired_p(z.mu_pref, z.mu_std), 3) + ", phi " + fmt(paired_p(z.phi_pref, z.phi_std), 3) +
                ", sigma2 " + fmt(paired_p(z.s2_pref, z.s2_std), 3) + "; |mean MIGN difference| " +
                fmt(std::abs(mean(z.mign_diff))) + " vs " + fmt(std::abs(mean(a.mign_diff))) + " (ratio " +
                fmt(ratio, 3) + ")"});
    int within = 0, with_se = 0;
    for (std::size_t i = 0; i < z.alpha.size(); ++i)
      if (std::isfinite(z.alpha_se[i])) {
        ++with_se;
        within += std::abs(z.alpha[i]) <= 2 * z.alpha_se[i];
      }
    std::cout << "info: alpha=0 study, alpha-hat mean " << fmt(mean(z.alpha)) << ", within 2 SE of 0 in " << within
              << "/" << with_se << " replicates" << std::endl;
  }

  std::cerr << "rerun of the alpha=100 study" << std::endl;
  run_study(pref_cfg, root / "alpha100_rerun", threads);
  {
    const std::string m1 = read_text(root / "alpha100" / "manifest.json");
    const std::string m2 = read_text(root / "alpha100_rerun" / "manifest.json");
    report(10, "determinism", {m1 == m2, std::string("manifests ") + (m1 == m2 ? "byte-identical" : "differ") +
                                             " (" + std::to_string(m1.size()) + " bytes)"});
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
