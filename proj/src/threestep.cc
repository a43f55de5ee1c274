// Apache License, Version 2.0, refer to LICENSE.txt

#include "catmix/threestep.hh"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "catmix/diagnostics.hh"
#include "catmix/errors.hh"
#include "catmix/format.hh"
#include "catmix/random.hh"
#include "catmix/stats.hh"

namespace catmix {

namespace {

constexpr std::uint64_t kThreeStepStream = 0x337374657073ULL;
constexpr double kProbFloor = 1e-10;
constexpr double kSeparationBound = 10.0;
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);

using Eigen::Index;

Index ix(std::size_t v) { return static_cast<Index>(v); }

// Structural parameters. gamma0/gamma1 are stored for every class with the
// reference entries pinned at 0.
struct Structural {
  Eigen::VectorXd gamma0;
  Eigen::VectorXd gamma1;
  Eigen::VectorXd means;
  double beta = 0;
  double log_sigma = 0;
};

struct Problem {
  std::size_t k = 0;
  std::size_t ref = 0;
  std::span<const std::uint8_t> x;
  std::span<const double> y;
  std::vector<std::size_t> w;
  Eigen::MatrixXd log_q;  // K x K, log P(W = s | C = k)
  bool x_constant = false;

  std::size_t n() const { return y.size(); }
  std::size_t n_theta() const { return 2 * (k - 1) + k + 2; }

  // Layout: gamma0 (non-reference classes), gamma1 (same), means, beta, log sigma.
  Eigen::VectorXd pack(const Structural& s) const {
    Eigen::VectorXd t(ix(n_theta()));
    std::size_t p = 0;
    for (std::size_t c = 0; c < k; ++c)
      if (c != ref) t(ix(p++)) = s.gamma0(ix(c));
    for (std::size_t c = 0; c < k; ++c)
      if (c != ref) t(ix(p++)) = s.gamma1(ix(c));
    for (std::size_t c = 0; c < k; ++c) t(ix(p++)) = s.means(ix(c));
    t(ix(p++)) = s.beta;
    t(ix(p)) = s.log_sigma;
    return t;
  }

  Structural unpack(const Eigen::VectorXd& t) const {
    Structural s;
    s.gamma0 = Eigen::VectorXd::Zero(ix(k));
    s.gamma1 = Eigen::VectorXd::Zero(ix(k));
    s.means.resize(ix(k));
    std::size_t p = 0;
    for (std::size_t c = 0; c < k; ++c)
      if (c != ref) s.gamma0(ix(c)) = t(ix(p++));
    for (std::size_t c = 0; c < k; ++c)
      if (c != ref) s.gamma1(ix(c)) = t(ix(p++));
    for (std::size_t c = 0; c < k; ++c) s.means(ix(c)) = t(ix(p++));
    s.beta = t(ix(p++));
    s.log_sigma = t(ix(p));
    return s;
  }

  std::size_t gamma0_index(std::size_t c) const { return c < ref ? c : c - 1; }
  std::size_t gamma1_index(std::size_t c) const { return (k - 1) + gamma0_index(c); }
  std::size_t mean_index(std::size_t c) const { return 2 * (k - 1) + c; }
  std::size_t beta_index() const { return 2 * (k - 1) + k; }
  std::size_t log_sigma_index() const { return beta_index() + 1; }

  // Log class probabilities given covariate value.
  Eigen::VectorXd log_prior(const Structural& s, double xv) const {
    Eigen::VectorXd eta = s.gamma0 + s.gamma1 * xv;
    const double mx = eta.maxCoeff();
    const double lse = mx + std::log((eta.array() - mx).exp().sum());
    return eta.array() - lse;
  }

  // Posterior h (N x K) and log-likelihood.
  double posterior(const Structural& s, Eigen::MatrixXd& h) const {
    h.resize(ix(n()), ix(k));
    const double sigma = std::exp(s.log_sigma);
    const Eigen::VectorXd lp0 = log_prior(s, 0.0);
    const Eigen::VectorXd lp1 = log_prior(s, 1.0);
    double ll = 0;
    for (std::size_t i = 0; i < n(); ++i) {
      const auto& lp = x[i] ? lp1 : lp0;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double z = (y[i] - s.means(ix(c)) - s.beta * x[i]) / sigma;
        const double v = lp(ix(c)) + log_q(ix(c), ix(w[i])) - 0.5 * z * z - s.log_sigma - kLogSqrt2Pi;
        h(ix(i), ix(c)) = v;
        mx = std::max(mx, v);
      }
      double sum = 0;
      for (std::size_t c = 0; c < k; ++c) sum += std::exp(h(ix(i), ix(c)) - mx);
      const double lse = mx + std::log(sum);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) h(ix(i), ix(c)) = std::exp(h(ix(i), ix(c)) - lse);
    }
    return ll;
  }

  Structural m_step(const Eigen::MatrixXd& h) const {
    Structural s;
    s.gamma0 = Eigen::VectorXd::Zero(ix(k));
    s.gamma1 = Eigen::VectorXd::Zero(ix(k));

    // Saturated multinomial logit on a binary covariate: group-wise shares.
    Eigen::VectorXd share[2] = {Eigen::VectorXd::Zero(ix(k)), Eigen::VectorXd::Zero(ix(k))};
    double count[2] = {0, 0};
    for (std::size_t i = 0; i < n(); ++i) {
      share[x[i]] += h.row(ix(i)).transpose();
      count[x[i]] += 1;
    }
    Eigen::VectorXd lg[2];
    for (int g = 0; g < 2; ++g) {
      if (count[g] == 0) continue;
      Eigen::VectorXd p = (share[g] / count[g]).cwiseMax(kProbFloor);
      p /= p.sum();
      lg[g] = p.array().log() - std::log(p(ix(ref)));
    }
    if (count[0] > 0 && count[1] > 0) {
      s.gamma0 = lg[0];
      s.gamma1 = lg[1] - lg[0];
    } else {
      s.gamma0 = count[0] > 0 ? lg[0] : lg[1];
    }

    // Weighted least squares for the class means and common slope.
    Eigen::VectorXd hk = h.colwise().sum().transpose();
    Eigen::VectorXd ak = Eigen::VectorXd::Zero(ix(k));  // sum h x
    Eigen::VectorXd bk = Eigen::VectorXd::Zero(ix(k));  // sum h y
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n(); ++i) {
      ak += h.row(ix(i)).transpose() * static_cast<double>(x[i]);
      bk += h.row(ix(i)).transpose() * y[i];
      sxx += x[i];
      sxy += x[i] * y[i];
    }
    s.beta = 0;
    if (!x_constant) {
      double den = sxx, num = sxy;
      for (std::size_t c = 0; c < k; ++c) {
        if (hk(ix(c)) <= 0) continue;
        den -= ak(ix(c)) * ak(ix(c)) / hk(ix(c));
        num -= ak(ix(c)) * bk(ix(c)) / hk(ix(c));
      }
      if (den > 1e-12 * std::max(1.0, sxx)) s.beta = num / den;
    }
    s.means.resize(ix(k));
    double ybar = 0;
    for (double v : y) ybar += v;
    ybar /= static_cast<double>(n());
    for (std::size_t c = 0; c < k; ++c)
      s.means(ix(c)) = hk(ix(c)) > 0 ? (bk(ix(c)) - s.beta * ak(ix(c))) / hk(ix(c)) : ybar;

    double ss = 0;
    for (std::size_t i = 0; i < n(); ++i)
      for (std::size_t c = 0; c < k; ++c) {
        const double r = y[i] - s.means(ix(c)) - s.beta * x[i];
        ss += h(ix(i), ix(c)) * r * r;
      }
    const double var = std::max(ss / static_cast<double>(n()), 1e-300);
    s.log_sigma = 0.5 * std::log(var);
    return s;
  }

  // Analytic score via the Fisher identity.
  Eigen::VectorXd score(const Eigen::VectorXd& theta) const {
    const auto s = unpack(theta);
    Eigen::MatrixXd h;
    posterior(s, h);
    const double sigma2 = std::exp(2.0 * s.log_sigma);
    const Eigen::VectorXd p0 = log_prior(s, 0.0).array().exp();
    const Eigen::VectorXd p1 = log_prior(s, 1.0).array().exp();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(ix(n_theta()));
    for (std::size_t i = 0; i < n(); ++i) {
      const auto& pr = x[i] ? p1 : p0;
      for (std::size_t c = 0; c < k; ++c) {
        const double hic = h(ix(i), ix(c));
        if (c != ref) {
          g(ix(gamma0_index(c))) += hic - pr(ix(c));
          g(ix(gamma1_index(c))) += x[i] * (hic - pr(ix(c)));
        }
        const double r = y[i] - s.means(ix(c)) - s.beta * x[i];
        g(ix(mean_index(c))) += hic * r / sigma2;
        g(ix(beta_index())) += hic * r * x[i] / sigma2;
        g(ix(log_sigma_index())) += hic * (r * r / sigma2 - 1.0);
      }
    }
    return g;
  }

  std::vector<bool> free_mask() const {
    std::vector<bool> m(n_theta(), true);
    if (x_constant) {
      for (std::size_t c = 0; c < k; ++c)
        if (c != ref) m[gamma1_index(c)] = false;
      m[beta_index()] = false;
    }
    return m;
  }
};

struct EmResult {
  Structural s;
  double ll = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
};

EmResult run_em(const Problem& pr, Eigen::MatrixXd h, const ThreeStepOptions& opts) {
  EmResult r;
  r.s = pr.m_step(h);
  r.ll = pr.posterior(r.s, h);
  r.trace.push_back(r.ll);
  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    r.s = pr.m_step(h);
    const double ll = pr.posterior(r.s, h);
    r.trace.push_back(ll);
    r.iterations = it;
    const double gain = ll - r.ll;
    r.ll = ll;
    if (std::fabs(gain) < opts.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

Estimate make_estimate(double value, double var) {
  Estimate e;
  e.value = value;
  e.se = var >= 0 ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
  if (std::isnan(e.se))
    e.p = std::numeric_limits<double>::quiet_NaN();
  else if (e.se == 0)
    e.p = value == 0 ? 1.0 : 0.0;
  else
    e.p = stats::normal_two_sided_p(value / e.se);
  return e;
}

}  // namespace

ClassificationErrorMatrix classification_error_matrix(const Eigen::MatrixXd& posteriors,
                                                      std::span<const std::size_t> labels) {
  const auto k = static_cast<std::size_t>(posteriors.cols());
  if (labels.size() != static_cast<std::size_t>(posteriors.rows()))
    throw InputError("classification error matrix: label count differs from posterior rows");
  if (k < 2) throw InputError("classification error matrix needs at least 2 classes");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(ix(k), ix(k));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) throw InputError("classification error matrix: label out of range");
    q.col(ix(labels[i])) += posteriors.row(ix(i)).transpose();
  }
  ClassificationErrorMatrix out;
  for (std::size_t c = 0; c < k; ++c) {
    const double mass = q.row(ix(c)).sum();
    if (!(mass > 0))
      throw InputError("classification error matrix: class " + std::to_string(c + 1) +
                       " has zero posterior mass");
    q.row(ix(c)) /= mass;
  }
  q = q.cwiseMax(kErrorFloor);
  for (std::size_t c = 0; c < k; ++c) q.row(ix(c)) /= q.row(ix(c)).sum();
  out.q = q;
  out.fixed_logits.resize(ix(k), ix(k - 1));
  out.measurement.resize(ix(k), ix(k));
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::VectorXd eta(ix(k));
    for (std::size_t s = 0; s + 1 < k; ++s) {
      const double l = std::clamp(std::log(q(ix(c), ix(s)) / q(ix(c), ix(k - 1))), -kLogitCap, kLogitCap);
      out.fixed_logits(ix(c), ix(s)) = l;
      eta(ix(s)) = l;
    }
    eta(ix(k - 1)) = 0;
    const Eigen::VectorXd e = (eta.array() - eta.maxCoeff()).exp();
    out.measurement.row(ix(c)) = (e / e.sum()).transpose();
  }
  return out;
}

WaldTest wald_omnibus(const Eigen::VectorXd& means, const Eigen::MatrixXd& covariance) {
  const auto k = means.size();
  if (k < 2) throw InputError("Wald test needs at least 2 means");
  if (covariance.rows() != k || covariance.cols() != k)
    throw InputError("Wald test: covariance shape does not match means");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k - 1, k);
  for (Index r = 0; r + 1 < k; ++r) {
    c(r, r) = 1;
    c(r, r + 1) = -1;
  }
  const Eigen::VectorXd d = c * means;
  const Eigen::MatrixXd v = c * covariance * c.transpose();
  WaldTest t;
  t.df = static_cast<std::size_t>(k - 1);
  if (d.cwiseAbs().maxCoeff() == 0) {
    t.statistic = 0;
    t.p = 1;
    return t;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(v);
  if (!lu.isInvertible()) throw NumericalError("Wald test: singular contrast covariance");
  t.statistic = d.dot(lu.solve(d));
  t.p = stats::chi2_sf(t.statistic, static_cast<double>(t.df));
  return t;
}

std::vector<PairwiseDifference> pairwise_differences(const Eigen::VectorXd& means,
                                                     const Eigen::MatrixXd& covariance) {
  const auto k = static_cast<std::size_t>(means.size());
  if (covariance.rows() != means.size() || covariance.cols() != means.size())
    throw InputError("pairwise differences: covariance shape does not match means");
  std::vector<PairwiseDifference> out;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const double diff = means(ix(a)) - means(ix(b));
      const double var = covariance(ix(a), ix(a)) + covariance(ix(b), ix(b)) -
                         2.0 * covariance(ix(a), ix(b));
      const auto e = make_estimate(diff, var);
      out.push_back({a, b, diff, e.se, e.p});
    }
  return out;
}

ThreeStepResult fit_threestep(const Eigen::MatrixXd& posteriors, const Eigen::VectorXd& pi,
                              std::span<const std::uint8_t> x, std::span<const double> y,
                              std::uint64_t seed, const ThreeStepOptions& opts) {
  const auto k = static_cast<std::size_t>(posteriors.cols());
  const auto n = static_cast<std::size_t>(posteriors.rows());
  if (k < 2) throw InputError("three-step analysis needs at least 2 classes");
  if (x.size() != n || y.size() != n)
    throw InputError("three-step: covariate/outcome length differs from posterior rows");
  if (static_cast<std::size_t>(pi.size()) != k) throw InputError("three-step: pi has wrong size");
  for (auto v : x)
    if (v > 1) throw InputError("three-step: covariate must be binary");

  ThreeStepResult res;
  Problem pr;
  pr.k = k;
  pr.x = x;
  pr.y = y;
  pr.w = modal_assignment(posteriors);
  res.errors = classification_error_matrix(posteriors, pr.w);
  pr.log_q = res.errors.measurement.array().log();
  Index ref = 0;
  pi.maxCoeff(&ref);
  pr.ref = static_cast<std::size_t>(ref);
  res.reference_class = pr.ref;
  const auto n1 = static_cast<std::size_t>(std::count(x.begin(), x.end(), 1));
  pr.x_constant = n1 == 0 || n1 == n;
  res.covariate_constant = pr.x_constant;
  res.covariate_mean = static_cast<double>(n1) / static_cast<double>(n);
  if (pr.x_constant)
    res.warnings.push_back("covariate is constant; its effects are fixed at 0");

  // Start 0 from the step-1 posteriors, the rest from random posterior rows.
  EmResult best;
  auto rng = make_rng(derive_seed(seed, kThreeStepStream));
  for (std::size_t start = 0; start < std::max<std::size_t>(1, opts.n_starts); ++start) {
    Eigen::MatrixXd h = posteriors;
    if (start > 0) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) h(ix(i), ix(c)) = uniform01(rng) + 1e-12;
        h.row(ix(i)) /= h.row(ix(i)).sum();
      }
    }
    auto r = run_em(pr, std::move(h), opts);
    if (r.ll > best.ll + 1e-9) best = std::move(r);
  }
  res.loglik = best.ll;
  res.ll_trace = best.trace;
  res.iterations = best.iterations;
  res.converged = best.converged;
  if (!res.converged) res.warnings.push_back("step-3 EM reached the iteration limit");

  // Observed information from central differences of the score.
  const Eigen::VectorXd theta = pr.pack(best.s);
  const auto mask = pr.free_mask();
  std::vector<std::size_t> free;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask[p]) free.push_back(p);
  const auto nf = free.size();
  Eigen::MatrixXd hess(ix(nf), ix(nf));
  for (std::size_t a = 0; a < nf; ++a) {
    const double step = opts.fd_step * std::max(1.0, std::fabs(theta(ix(free[a]))));
    Eigen::VectorXd tp = theta, tm = theta;
    tp(ix(free[a])) += step;
    tm(ix(free[a])) -= step;
    const Eigen::VectorXd gp = pr.score(tp);
    const Eigen::VectorXd gm = pr.score(tm);
    for (std::size_t b = 0; b < nf; ++b)
      hess(ix(b), ix(a)) = (gp(ix(free[b])) - gm(ix(free[b]))) / (2.0 * step);
  }
  hess = 0.5 * (hess + hess.transpose()).eval();
  const Eigen::MatrixXd info = -hess;
  Eigen::MatrixXd cov_free;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() == Eigen::Success) {
    cov_free = llt.solve(Eigen::MatrixXd::Identity(ix(nf), ix(nf)));
  } else {
    res.hessian_not_pd = true;
    res.warnings.push_back("observed information is not positive definite; standard errors unreliable");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
    cov_free = lu.isInvertible()
                   ? Eigen::MatrixXd(lu.inverse())
                   : Eigen::MatrixXd::Constant(ix(nf), ix(nf), std::numeric_limits<double>::quiet_NaN());
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(theta.size(), theta.size());
  for (std::size_t a = 0; a < nf; ++a)
    for (std::size_t b = 0; b < nf; ++b) cov(ix(free[a]), ix(free[b])) = cov_free(ix(a), ix(b));

  auto var_of = [&](const Eigen::VectorXd& c) { return c.dot(cov * c); };
  auto unit = [&](std::size_t p) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(theta.size());
    c(ix(p)) = 1;
    return c;
  };

  const auto& s = best.s;
  for (std::size_t c = 0; c < k; ++c) {
    if (c == pr.ref) continue;
    CovariateEffect e;
    e.cls = c;
    e.intercept = make_estimate(s.gamma0(ix(c)), var_of(unit(pr.gamma0_index(c))));
    e.slope = make_estimate(s.gamma1(ix(c)), var_of(unit(pr.gamma1_index(c))));
    e.odds_ratio = std::exp(e.slope.value);
    if (std::fabs(e.intercept.value) > kSeparationBound || std::fabs(e.slope.value) > kSeparationBound)
      res.separation = true;
    res.covariate_logits.push_back(e);
  }
  if (res.separation)
    res.warnings.push_back("a multinomial logit coefficient exceeds 10 in magnitude (separation)");

  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(theta.size());
      if (a != pr.ref) c(ix(pr.gamma1_index(a))) += 1;
      if (b != pr.ref) c(ix(pr.gamma1_index(b))) -= 1;
      CovariateContrast con;
      con.a = a;
      con.b = b;
      con.logit = make_estimate(s.gamma1(ix(a)) - s.gamma1(ix(b)), var_of(c));
      con.odds_ratio = std::exp(con.logit.value);
      res.covariate_contrasts.push_back(con);
    }

  res.means_covariance.resize(ix(k), ix(k));
  Eigen::VectorXd means(ix(k));
  for (std::size_t a = 0; a < k; ++a) {
    means(ix(a)) = s.means(ix(a));
    for (std::size_t b = 0; b < k; ++b)
      res.means_covariance(ix(a), ix(b)) = cov(ix(pr.mean_index(a)), ix(pr.mean_index(b)));
    res.class_means.push_back(make_estimate(s.means(ix(a)), var_of(unit(pr.mean_index(a)))));
    Eigen::VectorXd c = unit(pr.mean_index(a));
    c(ix(pr.beta_index())) = res.covariate_mean;
    res.class_means_at_mean.push_back(
        make_estimate(s.means(ix(a)) + s.beta * res.covariate_mean, var_of(c)));
  }
  res.direct_effect = make_estimate(s.beta, var_of(unit(pr.beta_index())));
  res.residual_variance = std::exp(2.0 * s.log_sigma);

  try {
    res.wald = wald_omnibus(means, res.means_covariance);
  } catch (const NumericalError& e) {
    res.wald = {std::numeric_limits<double>::quiet_NaN(), k - 1,
                std::numeric_limits<double>::quiet_NaN()};
    res.warnings.push_back(e.what());
  }
  res.pairwise = pairwise_differences(means, res.means_covariance);
  return res;
}

ThreeStepResult fit_threestep(const CategoricalDataset& ds, const LcaFit& fit,
                              const std::string& covariate, const std::string& outcome,
                              std::uint64_t seed, const ThreeStepOptions& opts) {
  if (!fit.converged) throw InputError("three-step: the step-1 model did not converge");
  if (static_cast<std::size_t>(fit.posteriors.rows()) != ds.n())
    throw InputError("three-step: step-1 posteriors do not match the dataset");
  const auto& x = ds.covariate(covariate);
  const auto& y = ds.outcome(outcome);
  auto res = fit_threestep(fit.posteriors, fit.params.pi, x.values, y.values, seed, opts);
  res.covariate = covariate;
  res.outcome = outcome;
  return res;
}

namespace {

nlohmann::json est_json(const Estimate& e) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  return {{"estimate", e.value}, {"se", num(e.se)}, {"p", num(e.p)}};
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    out.push_back(row);
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const ThreeStepResult& r) {
  nlohmann::json logits = nlohmann::json::array();
  for (const auto& e : r.covariate_logits)
    logits.push_back({{"class", e.cls + 1},
                      {"reference", r.reference_class + 1},
                      {"intercept", est_json(e.intercept)},
                      {"logit", est_json(e.slope)},
                      {"odds_ratio", e.odds_ratio}});
  nlohmann::json contrasts = nlohmann::json::array();
  for (const auto& c : r.covariate_contrasts)
    contrasts.push_back({{"class", c.a + 1}, {"versus", c.b + 1},
                         {"logit", est_json(c.logit)}, {"odds_ratio", c.odds_ratio}});
  nlohmann::json means = nlohmann::json::array();
  for (std::size_t c = 0; c < r.class_means.size(); ++c)
    means.push_back({{"class", c + 1},
                     {"at_covariate_0", est_json(r.class_means[c])},
                     {"at_covariate_mean", est_json(r.class_means_at_mean[c])}});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.pairwise) {
    if (p.a > p.b) continue;
    pairs.push_back({{"class", p.a + 1}, {"versus", p.b + 1}, {"m_diff", p.diff},
                     {"se", p.se}, {"p", p.p}});
  }
  return {{"covariate", r.covariate},
          {"outcome", r.outcome},
          {"reference_class", r.reference_class + 1},
          {"classification_error_matrix", matrix_json(r.errors.q)},
          {"fixed_logits", matrix_json(r.errors.fixed_logits)},
          {"covariate_logits", logits},
          {"covariate_contrasts", contrasts},
          {"class_means", means},
          {"covariate_mean", r.covariate_mean},
          {"direct_effect", est_json(r.direct_effect)},
          {"residual_variance", r.residual_variance},
          {"wald", {{"statistic", r.wald.statistic}, {"df", r.wald.df}, {"p", r.wald.p}}},
          {"pairwise", pairs},
          {"loglik", r.loglik},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"hessian_not_pd", r.hessian_not_pd},
          {"separation", r.separation},
          {"warnings", r.warnings}};
}

std::string to_text(const ThreeStepResult& r) {
  using textfmt::fixed;
  std::string out = "Covariate '" + r.covariate + "' on class membership (reference: Class " +
                    std::to_string(r.reference_class + 1) + ")\n";
  std::vector<std::vector<std::string>> rows{{"Contrast", "logit", "SE", "p", "OR"}};
  for (const auto& c : r.covariate_contrasts)
    rows.push_back({"Class " + std::to_string(c.a + 1) + " vs " + std::to_string(c.b + 1),
                    fixed(c.logit.value, 3), fixed(c.logit.se, 3), fixed(c.logit.p, 3),
                    fixed(c.odds_ratio, 2)});
  out += textfmt::align_table(rows);
  out += "\nOutcome '" + r.outcome + "' by class (adjusted for the covariate)\n";
  rows = {{"Class", "M (x=0)", "SE", "M (x=mean)"}};
  for (std::size_t c = 0; c < r.class_means.size(); ++c)
    rows.push_back({"Class " + std::to_string(c + 1), fixed(r.class_means[c].value, 3),
                    fixed(r.class_means[c].se, 3), fixed(r.class_means_at_mean[c].value, 3)});
  out += textfmt::align_table(rows);
  out += "Direct effect: " + fixed(r.direct_effect.value, 3) + " (SE " +
         fixed(r.direct_effect.se, 3) + ", p " + fixed(r.direct_effect.p, 3) + ")\n";
  out += "Omnibus Wald chi2(" + std::to_string(r.wald.df) + ") = " + fixed(r.wald.statistic, 2) +
         ", p = " + fixed(r.wald.p, 3) + "\n";
  rows = {{"Pair", "M_diff", "SE", "p"}};
  for (const auto& p : r.pairwise) {
    if (p.a > p.b) continue;
    rows.push_back({"Class " + std::to_string(p.a + 1) + " - " + std::to_string(p.b + 1),
                    fixed(p.diff, 3), fixed(p.se, 3), fixed(p.p, 3)});
  }
  out += textfmt::align_table(rows);
  for (const auto& w : r.warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace catmix
