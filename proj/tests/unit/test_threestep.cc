// Apache License, Version 2.0, refer to LICENSE.txt

#include <doctest.h>

#include <cmath>
#include <random>

#include "catmix/errors.hh"
#include "catmix/threestep.hh"
#include "support/generators.hh"
#include "support/oracles.hh"

using namespace catmix;

namespace {

struct StepData {
  std::vector<std::size_t> cls;
  std::vector<std::uint8_t> x;
  std::vector<double> y;
};

// Three classes whose shares shift with X, Y = M_c + 0.7 X + N(0, 1).
StepData make_step_data(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bx(0.4);
  std::discrete_distribution<std::size_t> c0({0.5, 0.3, 0.2}), c1({0.2, 0.3, 0.5});
  std::normal_distribution<double> e(0, 1);
  const double m[3] = {0.0, 1.0, 2.5};
  StepData d;
  for (std::size_t i = 0; i < n; ++i) {
    const bool xi = bx(rng);
    const auto c = xi ? c1(rng) : c0(rng);
    d.cls.push_back(c);
    d.x.push_back(xi ? 1 : 0);
    d.y.push_back(m[c] + 0.7 * (xi ? 1 : 0) + e(rng));
  }
  return d;
}

Eigen::MatrixXd one_hot(const std::vector<std::size_t>& cls, std::size_t k) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(Eigen::Index(cls.size()), Eigen::Index(k));
  for (std::size_t i = 0; i < cls.size(); ++i) p(Eigen::Index(i), Eigen::Index(cls[i])) = 1;
  return p;
}

// Posteriors that favour the true class without being certain.
Eigen::MatrixXd noisy(const std::vector<std::size_t>& cls, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return 0.75 * one_hot(cls, k) + 0.25 * testgen::random_posteriors(rng, cls.size(), k);
}

Eigen::VectorXd shares(const Eigen::MatrixXd& p) { return p.colwise().mean().transpose(); }

}  // namespace

TEST_CASE("error matrix of certain posteriors is the identity") {
  auto d = make_step_data(1, 50);
  auto p = one_hot(d.cls, 3);
  std::vector<std::size_t> w(d.cls.begin(), d.cls.end());
  auto e = classification_error_matrix(p, w);
  for (Eigen::Index a = 0; a < 3; ++a) {
    CHECK(e.q.row(a).sum() == doctest::Approx(1.0).epsilon(1e-14));
    for (Eigen::Index b = 0; b < 3; ++b) CHECK(e.q(a, b) == doctest::Approx(a == b ? 1.0 : 1e-10).epsilon(1e-9));
  }
  CHECK(e.fixed_logits.maxCoeff() <= kLogitCap);
  CHECK(e.fixed_logits.minCoeff() >= -kLogitCap);
}

TEST_CASE("error matrix hand example") {
  Eigen::MatrixXd p(2, 2);
  p << 0.8, 0.2, 0.6, 0.4;
  std::vector<std::size_t> w{0, 0};
  auto e = classification_error_matrix(p, w);
  CHECK(e.q(0, 0) == doctest::Approx(1.0));
  CHECK(e.q(1, 0) == doctest::Approx(1.0));
  CHECK(e.q(0, 1) == doctest::Approx(1e-10).epsilon(1e-6));
  CHECK(e.fixed_logits(0, 0) == kLogitCap);

  Eigen::MatrixXd r(4, 2);
  r << 0.9, 0.1, 0.3, 0.7, 0.6, 0.4, 0.2, 0.8;
  std::vector<std::size_t> wr{0, 1, 0, 1};
  auto f = classification_error_matrix(r, wr);
  // Class 1 mass 2.0, of which 1.5 lands on W = 1.
  CHECK(f.q(0, 0) == doctest::Approx(0.75));
  CHECK(f.q(1, 1) == doctest::Approx(1.5 / 2.0));
  CHECK(f.fixed_logits(0, 0) == doctest::Approx(std::log(3.0)));
  for (Eigen::Index a = 0; a < 2; ++a) CHECK(f.measurement.row(a).sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(classification_error_matrix(r, std::vector<std::size_t>{0, 1}), InputError);
}

TEST_CASE("Wald and pairwise tests") {
  Eigen::VectorXd same = Eigen::VectorXd::Constant(4, 2.5);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(4, 4) * 0.1;
  auto w0 = wald_omnibus(same, cov);
  CHECK(w0.statistic == doctest::Approx(0.0));
  CHECK(w0.p == doctest::Approx(1.0));
  CHECK(w0.df == 3);

  Eigen::VectorXd two(2);
  two << 1.0, 0.4;
  Eigen::MatrixXd c2(2, 2);
  c2 << 0.04, 0.01, 0.01, 0.09;
  const double var = 0.04 + 0.09 - 0.02;
  auto w = wald_omnibus(two, c2);
  CHECK(w.statistic == doctest::Approx(0.36 / var).epsilon(1e-12));
  CHECK(w.df == 1);
  auto pw = pairwise_differences(two, c2);
  REQUIRE(pw.size() == 2);
  const double z = 0.6 / std::sqrt(var);
  CHECK(pw[0].p == doctest::Approx(std::erfc(z / std::sqrt(2.0))).epsilon(1e-10));
  CHECK(w.p == doctest::Approx(pw[0].p).epsilon(1e-10));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 1);
  Eigen::VectorXd m(4);
  for (auto& v : m) v = g(rng);
  Eigen::MatrixXd a(4, 4);
  for (auto& v : a.reshaped()) v = g(rng);
  Eigen::MatrixXd v4 = a * a.transpose() + Eigen::MatrixXd::Identity(4, 4);
  auto all = pairwise_differences(m, v4);
  CHECK(all.size() == 12);
  for (const auto& d : all) {
    bool found = false;
    for (const auto& e : all)
      if (e.a == d.b && e.b == d.a) {
        found = true;
        CHECK(e.diff == doctest::Approx(-d.diff));
        CHECK(e.se == doctest::Approx(d.se));
        CHECK(e.p == doctest::Approx(d.p));
      }
    CHECK(found);
  }
  CHECK_THROWS_AS(wald_omnibus(m, Eigen::MatrixXd::Ones(4, 4)), NumericalError);
}

TEST_CASE("certain posteriors reduce to direct estimation") {
  auto d = make_step_data(11, 900);
  const std::size_t k = 3;
  auto p = one_hot(d.cls, k);
  auto r = fit_threestep(p, shares(p), d.x, d.y, 12);
  REQUIRE(r.converged);

  const auto ref = r.reference_class;
  Eigen::VectorXd pi = shares(p);
  Eigen::Index largest;
  pi.maxCoeff(&largest);
  CHECK(ref == std::size_t(largest));
  const auto direct = oracle::direct_fit(d.cls, d.x, d.y, k, ref);
  REQUIRE(r.covariate_logits.size() == k - 1);
  for (const auto& eff : r.covariate_logits) {
    const auto c = Eigen::Index(eff.cls);
    CHECK(std::fabs(eff.intercept.value - direct.gamma0(c)) <= 1e-4);
    CHECK(std::fabs(eff.slope.value - direct.gamma1(c)) <= 1e-4);
    CHECK(std::fabs(eff.slope.se - direct.gamma1_se(c)) <= 1e-4);
    CHECK(eff.odds_ratio == doctest::Approx(std::exp(eff.slope.value)));
  }
  for (std::size_t c = 0; c < k; ++c) {
    CHECK(std::fabs(r.class_means[c].value - direct.means(Eigen::Index(c))) <= 1e-4);
    CHECK(std::fabs(r.class_means[c].se - direct.means_se(Eigen::Index(c))) <= 1e-4);
  }
  CHECK(std::fabs(r.direct_effect.value - direct.beta) <= 1e-4);
  CHECK(std::fabs(r.direct_effect.se - direct.beta_se) <= 1e-4);
  CHECK(std::fabs(r.residual_variance - direct.sigma2) <= 1e-4);
  for (std::size_t c = 0; c < k; ++c)
    CHECK(r.class_means_at_mean[c].value ==
          doctest::Approx(r.class_means[c].value + r.direct_effect.value * r.covariate_mean).epsilon(1e-10));
  CHECK(!r.hessian_not_pd);
  CHECK(!r.separation);
}

TEST_CASE("step-3 log-likelihood never decreases") {
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    auto d = make_step_data(seed, 400);
    auto p = noisy(d.cls, 3, seed + 100);
    auto r = fit_threestep(p, shares(p), d.x, d.y, seed);
    REQUIRE(r.ll_trace.size() >= 2);
    for (std::size_t t = 1; t < r.ll_trace.size(); ++t) CHECK(r.ll_trace[t] - r.ll_trace[t - 1] >= -1e-8);
    CHECK(r.loglik == doctest::Approx(r.ll_trace.back()));
    CHECK(r.pairwise.size() == 6);
    CHECK(r.covariate_contrasts.size() == 3);
    CHECK(r.wald.df == 2);
  }
}

TEST_CASE("relabeling classes permutes the results") {
  auto d = make_step_data(31, 600);
  auto p = noisy(d.cls, 3, 32);
  auto base = fit_threestep(p, shares(p), d.x, d.y, 33);
  const std::size_t perm[3] = {2, 0, 1};  // new class c is old class perm[c]
  Eigen::MatrixXd q(p.rows(), 3);
  for (Eigen::Index c = 0; c < 3; ++c) q.col(c) = p.col(Eigen::Index(perm[c]));
  auto moved = fit_threestep(q, shares(q), d.x, d.y, 33);
  CHECK(moved.loglik == doctest::Approx(base.loglik).epsilon(1e-9));
  CHECK(perm[moved.reference_class] == base.reference_class);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(std::fabs(moved.class_means[c].value - base.class_means[perm[c]].value) <= 1e-5);
    CHECK(std::fabs(moved.class_means[c].se - base.class_means[perm[c]].se) <= 1e-4);
  }
  CHECK(moved.wald.statistic == doctest::Approx(base.wald.statistic).epsilon(1e-4));
  CHECK(std::fabs(moved.direct_effect.value - base.direct_effect.value) <= 1e-5);
}

TEST_CASE("constant covariate fixes its effects at zero") {
  auto d = make_step_data(41, 300);
  std::fill(d.x.begin(), d.x.end(), std::uint8_t{0});
  auto p = noisy(d.cls, 3, 42);
  auto r = fit_threestep(p, shares(p), d.x, d.y, 43);
  CHECK(r.covariate_constant);
  CHECK(!r.warnings.empty());
  for (const auto& eff : r.covariate_logits) {
    CHECK(eff.slope.value == 0.0);
    CHECK(eff.slope.se == 0.0);
    CHECK(eff.odds_ratio == 1.0);
  }
  CHECK(r.direct_effect.value == 0.0);
  CHECK(r.class_means.size() == 3);
}

TEST_CASE("input checks and output rendering") {
  auto d = make_step_data(51, 120);
  auto p = noisy(d.cls, 3, 52);
  std::vector<double> short_y(d.y.begin(), d.y.end() - 1);
  CHECK_THROWS_AS(fit_threestep(p, shares(p), d.x, short_y, 1), InputError);
  auto bad_x = d.x;
  bad_x[0] = 2;
  CHECK_THROWS_AS(fit_threestep(p, shares(p), bad_x, d.y, 1), InputError);

  auto r = fit_threestep(p, shares(p), d.x, d.y, 53);
  auto j = to_json(r);
  CHECK(j.contains("wald"));
  CHECK(j.contains("pairwise"));
  CHECK(to_text(r).find("reference") != std::string::npos);
  auto again = fit_threestep(p, shares(p), d.x, d.y, 53);
  CHECK(to_json(again).dump() == j.dump());
}
