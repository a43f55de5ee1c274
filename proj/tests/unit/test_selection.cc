// Apache License, Version 2.0, refer to LICENSE.txt

#include <doctest.h>

#include <cmath>
#include <random>

#include "catmix/errors.hh"
#include "catmix/selection.hh"
#include "support/generators.hh"

using namespace catmix;

namespace {

struct PublishedRow {
  double ll;
  double npar;
  double bic, abic, caic, awe;
};

// Fit summary for K = 1..7 on N = 567, as printed (LL rounded to 0.01).
const PublishedRow kPublished[] = {
    {-3840.13, 13, 7762.68, 7721.41, 7775.68, 7884.11},
    {-3647.65, 27, 7466.49, 7380.77, 7493.49, 7718.68},
    {-3596.93, 41, 7453.81, 7323.65, 7494.81, 7836.76},
    {-3576.71, 55, 7502.15, 7327.55, 7557.15, 8015.87},
    {-3558.81, 69, 7555.10, 7336.06, 7624.10, 8199.59},
    {-3542.47, 83, 7611.19, 7347.71, 7694.19, 8386.44},
    {-3526.55, 97, 7668.12, 7360.19, 7765.12, 8574.14},
};

}  // namespace

TEST_CASE("information criteria reproduce the published fit summary") {
  for (const auto& r : kPublished) {
    CHECK(std::fabs(bic(r.ll, r.npar, 567) - r.bic) <= 0.05);
    CHECK(std::fabs(abic(r.ll, r.npar, 567) - r.abic) <= 0.05);
    CHECK(std::fabs(caic(r.ll, r.npar, 567) - r.caic) <= 0.05);
    CHECK(std::fabs(awe(r.ll, r.npar, 567) - r.awe) <= 0.05);
  }
}

TEST_CASE("information criteria trivial values and monotonicity") {
  CHECK(bic(0, 0, 10) == 0.0);
  CHECK(abic(0, 0, 100) == 0.0);
  CHECK(caic(0, 0, 50) == 0.0);
  CHECK(awe(0, 0, 50) == 0.0);
  for (double ll : {-10.0, -1234.5}) {
    CHECK(bic(ll, 0, 80) == -2 * ll);
    CHECK(abic(ll, 0, 80) == -2 * ll);
    CHECK(caic(ll, 0, 80) == -2 * ll);
    CHECK(awe(ll, 0, 80) == -2 * ll);
    for (double p = 0; p < 20; ++p) {
      CHECK(bic(ll, p + 1, 80) > bic(ll, p, 80));
      CHECK(abic(ll, p + 1, 80) > abic(ll, p, 80));
      CHECK(caic(ll, p + 1, 80) > caic(ll, p, 80));
      CHECK(awe(ll, p + 1, 80) > awe(ll, p, 80));
    }
    for (double n = 30; n < 500; n += 37) {
      CHECK(bic(ll, 5, n + 1) > bic(ll, 5, n));
      CHECK(caic(ll, 5, n + 1) > caic(ll, 5, n));
      CHECK(awe(ll, 5, n + 1) > awe(ll, 5, n));
    }
  }
}

TEST_CASE("bootstrap test on separated two-class data") {
  auto truth = testgen::pattern_params({0.5, 0.5}, {{1, 1, 1, 1, 1}, {0, 0, 0, 0, 0}}, 0.9, 0.1);
  auto sim = simulate(truth, 500, 61);
  BlrtOptions opts;
  opts.bootstrap = 19;
  opts.seed = 62;
  auto r = blrt(sim.data, 2, {20, 5, 20, {5000, 1e-6}}, opts);
  CHECK(r.p_value == doctest::Approx(1.0 / double(r.n_used + 1)));
  CHECK(r.n_used + r.n_excluded == 19);
  CHECK(r.statistic > 0);
  auto again = blrt(sim.data, 2, {20, 5, 20, {5000, 1e-6}}, opts);
  CHECK(to_json(again).dump() == to_json(r).dump());
}

TEST_CASE("bootstrap p-value bounds on null data") {
  LcaParams one;
  one.pi = Eigen::VectorXd::Ones(1);
  one.rho = Eigen::MatrixXd::Constant(1, 5, 0.4);
  auto sim = simulate(one, 200, 63);
  BlrtOptions opts;
  opts.bootstrap = 19;
  opts.seed = 64;
  auto r = blrt(sim.data, 2, {20, 5, 20, {5000, 1e-6}}, opts);
  CHECK(r.p_value >= 1.0 / double(r.n_used + 1));
  CHECK(r.p_value <= 1.0);
  CHECK_THROWS_AS(blrt(sim.data, 1, {20, 5, 20, {5000, 1e-6}}, opts), InputError);
}

TEST_CASE("enumeration with a single class") {
  std::mt19937_64 rng(65);
  const auto ds = testgen::random_dataset(rng, 90, 4);
  auto t = enumerate_classes(ds, 1, {10, 5, 20, {}}, 1);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].npar == ds.j());
  CHECK(t.rows[0].smallest_class_n == ds.n());
  CHECK(t.argmin(&FitSummary::bic) == 1u);
}

TEST_CASE("enumeration table on three-class data") {
  auto sim = simulate(testgen::three_class_params(), 1000, 66);
  auto t = enumerate_classes(sim.data, 4, {30, 6, 20, {5000, 1e-6}}, 67);
  REQUIRE(t.rows.size() == 4);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    CHECK(row.classes == r + 1);
    CHECK(row.npar == lca_npar(r + 1, 10));
    CHECK(row.bic == doctest::Approx(bic(row.loglik, double(row.npar), 1000)));
    CHECK(row.awe == doctest::Approx(awe(row.loglik, double(row.npar), 1000)));
    CHECK(row.smallest_class_pct == doctest::Approx(100.0 * double(row.smallest_class_n) / 1000));
  }
  CHECK(t.argmin(&FitSummary::bic) == 3u);
  const auto csv = to_csv(t);
  CHECK(csv.find("classes,npar,loglik") == 0);
  const auto plot = ic_plot_csv(t);
  CHECK(plot.rfind("classes,bic,abic,caic,awe\n", 0) == 0);
  const auto j = to_json(t);
  CHECK(j["rows"].size() == 4);
  CHECK(j["rows"][0]["vlmr_p"] == "not computed");
  CHECK(to_text(t).find("*") != std::string::npos);
}
