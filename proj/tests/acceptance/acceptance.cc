// Apache License, Version 2.0, refer to LICENSE.txt
//
// Acceptance run: one PASS/FAIL/SKIP line per criterion with its pinned
// tolerance and runtime limit. Exit status is nonzero when any gating
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "catmix/diagnostics.hh"
#include "catmix/errors.hh"
#include "catmix/kmodes.hh"
#include "catmix/lca.hh"
#include "catmix/selection.hh"
#include "catmix/threestep.hh"
#include "support/generators.hh"
#include "support/oracles.hh"

using namespace catmix;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Runner {
  int failures = 0;

  void run(int id, const std::string& name, double limit_s, const std::function<Verdict()>& body,
           bool gating = true) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.2f s", secs);
    if (limit_s > 0) {
      timing += " < " + fmt("%g s", limit_s);
      if (secs >= limit_s) {
        v.pass = false;
        v.detail += "; runtime limit exceeded";
      }
    }
    const char* tag = v.pass ? "PASS" : "FAIL";
    if (!v.pass && gating) ++failures;
    std::cout << tag << "  " << id << "  " << name << ": " << v.detail << " [" << timing << "]"
              << (gating ? "" : " (best effort, not gating)") << std::endl;
  }

  void skip(int id, const std::string& name, const std::string& why) {
    std::cout << "SKIP  " << id << "  " << name << ": " << why << std::endl;
  }
};

// Fit summary for K = 1..7 on N = 567, as printed.
struct PublishedRow {
  double ll, npar, bic, abic, caic, awe;
};
const PublishedRow kTable[] = {
    {-3840.13, 13, 7762.68, 7721.41, 7775.68, 7884.11}, {-3647.65, 27, 7466.49, 7380.77, 7493.49, 7718.68},
    {-3596.93, 41, 7453.81, 7323.65, 7494.81, 7836.76}, {-3576.71, 55, 7502.15, 7327.55, 7557.15, 8015.87},
    {-3558.81, 69, 7555.10, 7336.06, 7624.10, 8199.59}, {-3542.47, 83, 7611.19, 7347.71, 7694.19, 8386.44},
    {-3526.55, 97, 7668.12, 7360.19, 7765.12, 8574.14},
};

Verdict ic_reproduction() {
  int ok = 0;
  double worst = 0;
  for (const auto& r : kTable) {
    const double got[4] = {bic(r.ll, r.npar, 567), abic(r.ll, r.npar, 567), caic(r.ll, r.npar, 567),
                           awe(r.ll, r.npar, 567)};
    const double want[4] = {r.bic, r.abic, r.caic, r.awe};
    for (int c = 0; c < 4; ++c) {
      const double d = std::fabs(got[c] - want[c]);
      worst = std::max(worst, d);
      ok += d <= 0.05;
    }
  }
  return {ok == 28, std::to_string(ok) + "/28 values within 0.05, max |diff| " + fmt("%.4f", worst)};
}

Verdict occ_entropy() {
  const double a = occ(0.944, 0.497), b = occ(0.879, 0.229), c = occ(1.0, 0.273);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(50, 3);
  for (Eigen::Index i = 0; i < 50; ++i) onehot(i, i % 3) = 1;
  const double e1 = entropy(onehot);
  const double e0 = entropy(Eigen::MatrixXd::Constant(50, 3, 1.0 / 3));
  const bool pass = std::fabs(a - 17.06) <= 0.05 && std::fabs(b - 24.46) <= 0.05 && std::isinf(c) && c > 0 &&
                    e1 == 1.0 && e0 == 0.0;
  return {pass, "OCC " + fmt("%.3f", a) + ", " + fmt("%.3f", b) + ", " + (std::isinf(c) ? "Inf" : fmt("%g", c)) +
                    " (tol 0.05); entropy " + fmt("%.17g", e1) + " / " + fmt("%.17g", e0) + " (exact 1 / 0)"};
}

Verdict em_monotone() {
  std::mt19937_64 rng(3001);
  int checked = 0, degenerate = 0, attempts = 0;
  double worst = 0;
  while (checked < 200 && attempts < 2000) {
    ++attempts;
    const auto n = 10 + rng() % 191;
    const auto j = 1 + rng() % 8;
    const auto k = 1 + rng() % 4;
    const auto ds = testgen::random_dataset(rng, n, j, 0.2 + 0.6 * double(rng() % 100) / 100);
    try {
      const auto fit = fit_em(ds, k, rng());
      for (std::size_t t = 1; t < fit.ll_trace.size(); ++t)
        worst = std::min(worst, fit.ll_trace[t] - fit.ll_trace[t - 1]);
      ++checked;
    } catch (const DegenerateClassError&) {
      ++degenerate;
    }
  }
  return {checked == 200 && worst >= -1e-8, std::to_string(checked) + " runs (" + std::to_string(degenerate) +
                                                 " degenerate starts redrawn), min LL change " +
                                                 fmt("%.3g", worst) + " >= -1e-8"};
}

Verdict likelihood_oracle() {
  std::mt19937_64 rng(3002);
  double worst = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto k = 1 + rng() % 4;
    const auto j = 1 + rng() % 10;
    const auto ds = testgen::random_dataset(rng, 1 + rng() % 300, j);
    const auto p = testgen::random_params(rng, k, j);
    worst = std::max(worst, std::fabs(log_likelihood(p, ds) - oracle::loglik(p, ds)));
  }
  return {worst <= 1e-10, "100 pairs, max |collapsed - per-row| " + fmt("%.3g", worst) + " <= 1e-10"};
}

Verdict recovery() {
  const auto truth = testgen::three_class_params();
  int ok = 0;
  double worst_pi = 0, worst_rho = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sim = simulate(truth, 2000, 5000 + seed);
    const auto rep = fit_multistart(sim.data, 3, {50, 10, 20, {}}, 6000 + seed);
    const auto est = permute_classes(rep.best_fit.params, match_classes(truth.rho, rep.best_fit.params.rho));
    const double dp = (est.pi - truth.pi).cwiseAbs().maxCoeff();
    const double dr = (est.rho - truth.rho).cwiseAbs().maxCoeff();
    worst_pi = std::max(worst_pi, dp);
    worst_rho = std::max(worst_rho, dr);
    ok += dp <= 0.03 && dr <= 0.05;
  }
  return {ok >= 19, std::to_string(ok) + "/20 seeds within pi 0.03 and rho 0.05 (need 19); worst " +
                        fmt("%.4f", worst_pi) + " / " + fmt("%.4f", worst_rho)};
}

Verdict kmodes_brute_force() {
  std::mt19937_64 rng(3006);
  int ok = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto n = 2 + rng() % 5;
    const auto j = 1 + rng() % 4;
    const auto ds = testgen::random_dataset(rng, n, j);
    const auto m = fit_kmodes(ds, {2, 300, 50, rng()});
    ok += m.cost == oracle::brute_force_two(ds);
  }
  return {ok == 50, std::to_string(ok) + "/50 instances equal the exhaustive minimum"};
}

Verdict silhouette_case() {
  const auto ds = CategoricalDataset::from_rows({{0, 0, 0}, {0, 0, 0}, {1, 1, 1}, {1, 1, 0}});
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  const double s = silhouette_width(labels, ds).mean;
  return {std::fabs(s - 0.7917) <= 1e-4, "mean S " + fmt("%.6f", s) + ", target 0.7917 +- 1e-4"};
}

Verdict blrt_behavior() {
  const StartPolicy policy{20, 5, 20, {5000, 1e-6}};
  BlrtOptions opts;
  opts.bootstrap = 99;
  opts.replicate_policy = policy;

  const auto sep = simulate(testgen::pattern_params({0.5, 0.5}, {{1, 1, 1, 1, 1}, {0, 0, 0, 0, 0}}, 0.9, 0.1),
                            500, 8001);
  opts.seed = 8002;
  const auto s = blrt(sep.data, 2, policy, opts);
  const bool sep_ok = s.n_used == 99 && std::fabs(s.p_value - 0.01) <= 1e-12;

  LcaParams one;
  one.pi = Eigen::VectorXd::Ones(1);
  one.rho = Eigen::MatrixXd::Constant(1, 5, 0.4);
  int above = 0;
  std::size_t excluded = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto null = simulate(one, 300, 8100 + seed);
    opts.seed = 8200 + seed;
    const auto r = blrt(null.data, 2, policy, opts);
    above += r.p_value > 0.05;
    excluded += r.n_excluded;
  }
  return {sep_ok && above >= 17, "separated p " + fmt("%.4f", s.p_value) + " with " + std::to_string(s.n_used) +
                                     " replicates (need 1/100); null p > 0.05 in " + std::to_string(above) +
                                     "/20 (need 17), " + std::to_string(excluded) + " replicates excluded"};
}

Verdict threestep_reduction() {
  std::mt19937_64 rng(9001);
  std::bernoulli_distribution bx(0.45);
  std::discrete_distribution<std::size_t> c0({0.45, 0.35, 0.2}), c1({0.25, 0.3, 0.45});
  std::normal_distribution<double> e(0, 1.5);
  const double mu[3] = {-1.0, 0.5, 2.0};
  std::vector<std::size_t> cls;
  std::vector<std::uint8_t> x;
  std::vector<double> y;
  for (int i = 0; i < 1200; ++i) {
    const bool xi = bx(rng);
    const auto c = xi ? c1(rng) : c0(rng);
    cls.push_back(c);
    x.push_back(xi ? 1 : 0);
    y.push_back(mu[c] - 0.4 * (xi ? 1 : 0) + e(rng));
  }
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(1200, 3);
  for (std::size_t i = 0; i < cls.size(); ++i) post(Eigen::Index(i), Eigen::Index(cls[i])) = 1;
  const Eigen::VectorXd pi = post.colwise().mean().transpose();
  const double h = entropy(post);
  const auto r = fit_threestep(post, pi, x, y, 9002);
  const auto d = oracle::direct_fit(cls, x, y, 3, r.reference_class);
  double worst = 0;
  for (const auto& eff : r.covariate_logits) {
    worst = std::max(worst, std::fabs(eff.intercept.value - d.gamma0(Eigen::Index(eff.cls))));
    worst = std::max(worst, std::fabs(eff.slope.value - d.gamma1(Eigen::Index(eff.cls))));
  }
  for (Eigen::Index c = 0; c < 3; ++c) worst = std::max(worst, std::fabs(r.class_means[std::size_t(c)].value - d.means(c)));
  worst = std::max(worst, std::fabs(r.direct_effect.value - d.beta));
  return {h == 1.0 && r.covariate_logits.size() == 2 && worst <= 1e-4,
          "entropy " + fmt("%g", h) + ", max |three-step - direct| over logits and means " + fmt("%.3g", worst) +
              " <= 1e-4"};
}

Verdict selection_sanity() {
  int ok = 0;
  std::string picks;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sim = simulate(testgen::three_class_params(), 1000, 10000 + seed);
    const auto t = enumerate_classes(sim.data, 5, {20, 5, 20, {5000, 1e-6}}, 11000 + seed);
    const auto k = t.argmin(&FitSummary::bic);
    ok += k == 3;
    picks += k ? std::to_string(*k) : std::string("-");
  }
  return {ok >= 18, "BIC minimum at K = 3 in " + std::to_string(ok) + "/20 seeds (need 18); picks " + picks};
}

Verdict released_data(const std::string& path) {
  Schema schema;
  if (const char* s = std::getenv("CATMIX_STUDY_SCHEMA")) {
    std::ifstream in(s);
    schema = schema_from_json(nlohmann::json::parse(in));
  }
  const auto ds = load_csv(path, schema).data;
  bool sizes = false;
  for (std::uint64_t seed = 0; seed < 20 && !sizes; ++seed) {
    auto sz = fit_kmodes(ds, {2, 300, 10, seed}).sizes();
    std::sort(sz.begin(), sz.end());
    sizes = sz[0] == 241 && sz[1] == 326;
  }
  const auto rep = fit_multistart(ds, 3, {200, 100, 20, {}}, 1);
  const auto modal = modal_assignment(rep.best_fit.posteriors);
  std::vector<std::size_t> counts(3, 0);
  for (auto m : modal) ++counts[m];
  std::sort(counts.begin(), counts.end());
  const double h = entropy(rep.best_fit.posteriors);
  const bool ll = std::fabs(rep.best_fit.loglik + 3596.93) <= 0.5;
  const bool mc = counts == std::vector<std::size_t>{130, 155, 282};
  const bool en = std::fabs(h - 0.87) <= 0.01;
  return {sizes && ll && mc && en, std::string("k-modes 241/326 ") + (sizes ? "found" : "not found") +
                                       " in 20 seeds; LL " + fmt("%.2f", rep.best_fit.loglik) + "; modal counts " +
                                       std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
                                       std::to_string(counts[2]) + "; entropy " + fmt("%.3f", h)};
}

}  // namespace

int main() {
  Runner r;
  r.run(1, "information criteria reproduce the published fit summary", 1, ic_reproduction);
  r.run(2, "OCC and entropy reproduction", 1, occ_entropy);
  r.run(3, "EM monotonicity", 30, em_monotone);
  r.run(4, "collapsed likelihood equals the per-row oracle", 5, likelihood_oracle);
  r.run(5, "parameter recovery", 120, recovery);
  r.run(6, "k-modes equals the brute-force minimum", 10, kmodes_brute_force);
  r.run(7, "silhouette four-point case", 0, silhouette_case);
  r.run(8, "bootstrap likelihood ratio test behavior", 300, blrt_behavior);
  r.run(9, "three-step reduces to direct estimation", 0, threestep_reduction);
  r.run(10, "BIC selects the generating class count", 180, selection_sanity);
  if (const char* p = std::getenv("CATMIX_STUDY_DATA"))
    r.run(11, "published solution on the released data", 0, [&] { return released_data(p); }, false);
  else
    r.skip(11, "published solution on the released data",
           "released dataset not available; set CATMIX_STUDY_DATA to a CSV to run");
  std::cout << (r.failures == 0 ? "ALL GATING CRITERIA PASS" : std::to_string(r.failures) + " CRITERIA FAILED")
            << std::endl;
  return r.failures == 0 ? 0 : 1;
}
