// Apache License, Version 2.0, refer to LICENSE.txt

#include "catmix/lca.hh"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "catmix/errors.hh"
#include "catmix/parallel.hh"
#include "catmix/random.hh"

namespace catmix {

namespace {

constexpr std::uint64_t kLcaStream = 0x6c6361ULL;
constexpr double kDegenerateMass = 1e-8;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_items(const LcaParams& params, std::size_t j) {
  if (params.items() != j)
    throw InputError("LCA parameters have " + std::to_string(params.items()) +
                     " items but the data has " + std::to_string(j));
}

// Per-pattern log joint: log pi_k + sum_j log P(u_pj | C = k).
Eigen::MatrixXd log_joint(const LcaParams& params, const PatternTable& t) {
  const auto k = params.classes();
  const Eigen::MatrixXd log_rho = params.rho.array().log();
  const Eigen::MatrixXd log_not = (1.0 - params.rho.array()).log();
  Eigen::MatrixXd lj(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(k));
  for (std::size_t p = 0; p < t.size(); ++p) {
    const auto u = t.pattern(p);
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      if (params.pi(ci) <= 0) {
        lj(static_cast<Eigen::Index>(p), ci) = kNegInf;
        continue;
      }
      double s = std::log(params.pi(ci));
      for (std::size_t v = 0; v < t.j; ++v) {
        const auto vi = static_cast<Eigen::Index>(v);
        s += u[v] ? log_rho(ci, vi) : log_not(ci, vi);
      }
      lj(static_cast<Eigen::Index>(p), ci) = s;
    }
  }
  return lj;
}

double log_sum_exp_row(const Eigen::MatrixXd& m, Eigen::Index r) {
  const double mx = m.row(r).maxCoeff();
  if (mx == kNegInf) return kNegInf;
  double s = 0;
  for (Eigen::Index c = 0; c < m.cols(); ++c) s += std::exp(m(r, c) - mx);
  return mx + std::log(s);
}

struct EmRun {
  LcaParams params;
  double loglik = kNegInf;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

EmRun run_em(const LcaParams& start, const PatternTable& t, const EmOptions& opts) {
  EmRun run;
  run.params = start;
  double ll = 0;
  Eigen::MatrixXd post = e_step(run.params, t, &ll);
  run.trace.push_back(ll);
  const double n = std::accumulate(t.weights.begin(), t.weights.end(), 0.0);
  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    run.params = m_step(post, t);
    for (Eigen::Index c = 0; c < run.params.pi.size(); ++c)
      if (run.params.pi(c) * n < kDegenerateMass)
        throw DegenerateClassError(static_cast<std::size_t>(c),
                                   "latent class " + std::to_string(c + 1) +
                                       " lost its posterior mass");
    double ll_new = 0;
    post = e_step(run.params, t, &ll_new);
    run.trace.push_back(ll_new);
    run.iterations = it;
    const double gain = ll_new - ll;
    ll = ll_new;
    if (gain < opts.tol) {
      run.converged = true;
      break;
    }
  }
  run.loglik = ll;
  return run;
}

LcaFit materialize(EmRun&& run, const CategoricalDataset& ds, const PatternTable& t) {
  LcaFit fit;
  const Eigen::MatrixXd post = e_step(run.params, t);
  fit.posteriors.resize(static_cast<Eigen::Index>(ds.n()), post.cols());
  for (std::size_t i = 0; i < ds.n(); ++i)
    fit.posteriors.row(static_cast<Eigen::Index>(i)) =
        post.row(static_cast<Eigen::Index>(t.row_pattern[i]));
  fit.npar = lca_npar(run.params.classes(), run.params.items());
  fit.params = std::move(run.params);
  fit.loglik = run.loglik;
  fit.iterations = run.iterations;
  fit.converged = run.converged;
  fit.ll_trace = std::move(run.trace);
  return fit;
}

}  // namespace

void LcaParams::validate() const {
  if (pi.size() < 1) throw InputError("LCA parameters need at least one class");
  if (rho.rows() != pi.size())
    throw InputError("rho has " + std::to_string(rho.rows()) + " rows for " +
                     std::to_string(pi.size()) + " classes");
  if (rho.cols() < 1) throw InputError("LCA parameters need at least one item");
  for (Eigen::Index c = 0; c < pi.size(); ++c)
    if (!(pi(c) >= 0.0 && pi(c) <= 1.0))
      throw InputError("class proportion " + std::to_string(c + 1) + " outside [0, 1]");
  if (std::fabs(pi.sum() - 1.0) > 1e-10)
    throw InputError("class proportions do not sum to 1");
  const double lo = kRhoClamp * (1 - 1e-9);
  const double hi = 1.0 - kRhoClamp * (1 - 1e-9);
  for (Eigen::Index c = 0; c < rho.rows(); ++c)
    for (Eigen::Index v = 0; v < rho.cols(); ++v)
      if (!(rho(c, v) >= lo && rho(c, v) <= hi))
        throw InputError("item probability rho(" + std::to_string(c + 1) + "," +
                         std::to_string(v + 1) + ") outside [1e-6, 1 - 1e-6]");
}

nlohmann::json to_json(const LcaParams& p) {
  nlohmann::json rho = nlohmann::json::array();
  for (Eigen::Index c = 0; c < p.rho.rows(); ++c) {
    std::vector<double> row(p.rho.cols());
    for (Eigen::Index v = 0; v < p.rho.cols(); ++v) row[v] = p.rho(c, v);
    rho.push_back(row);
  }
  return {{"pi", std::vector<double>(p.pi.data(), p.pi.data() + p.pi.size())},
          {"rho", rho}};
}

LcaParams params_from_json(const nlohmann::json& j) {
  LcaParams p;
  const auto pi = j.at("pi").get<std::vector<double>>();
  const auto rho = j.at("rho").get<std::vector<std::vector<double>>>();
  p.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), static_cast<Eigen::Index>(pi.size()));
  if (rho.size() != pi.size()) throw InputError("rho/pi class count mismatch");
  const std::size_t items = rho.empty() ? 0 : rho.front().size();
  p.rho.resize(static_cast<Eigen::Index>(rho.size()), static_cast<Eigen::Index>(items));
  for (std::size_t c = 0; c < rho.size(); ++c) {
    if (rho[c].size() != items) throw InputError("ragged rho matrix");
    for (std::size_t v = 0; v < items; ++v)
      p.rho(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(v)) = rho[c][v];
  }
  p.validate();
  return p;
}

double log_likelihood(const LcaParams& params, const PatternTable& patterns) {
  params.validate();
  check_items(params, patterns.j);
  const auto lj = log_joint(params, patterns);
  double ll = 0;
  for (std::size_t p = 0; p < patterns.size(); ++p)
    ll += patterns.weights[p] * log_sum_exp_row(lj, static_cast<Eigen::Index>(p));
  return ll;
}

double log_likelihood(const LcaParams& params, const CategoricalDataset& ds) {
  return log_likelihood(params, collapse_patterns(ds));
}

double log_likelihood_naive(const LcaParams& params, const CategoricalDataset& ds) {
  params.validate();
  check_items(params, ds.j());
  double ll = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    double lik = 0;
    for (Eigen::Index c = 0; c < params.pi.size(); ++c) {
      double prod = params.pi(c);
      for (std::size_t v = 0; v < ds.j(); ++v) {
        const double r = params.rho(c, static_cast<Eigen::Index>(v));
        prod *= ds.at(i, v) ? r : 1.0 - r;
      }
      lik += prod;
    }
    ll += std::log(lik);
  }
  return ll;
}

Eigen::MatrixXd e_step(const LcaParams& params, const PatternTable& patterns,
                       double* loglik) {
  check_items(params, patterns.j);
  Eigen::MatrixXd lj = log_joint(params, patterns);
  double ll = 0;
  for (Eigen::Index p = 0; p < lj.rows(); ++p) {
    const double lse = log_sum_exp_row(lj, p);
    if (!std::isfinite(lse)) throw NumericalError("E-step: pattern has zero likelihood");
    ll += patterns.weights[static_cast<std::size_t>(p)] * lse;
    for (Eigen::Index c = 0; c < lj.cols(); ++c) lj(p, c) = std::exp(lj(p, c) - lse);
    lj.row(p) /= lj.row(p).sum();
  }
  if (loglik) *loglik = ll;
  return lj;
}

Eigen::MatrixXd e_step(const LcaParams& params, const CategoricalDataset& ds) {
  const auto t = collapse_patterns(ds);
  const Eigen::MatrixXd post = e_step(params, t);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ds.n()), post.cols());
  for (std::size_t i = 0; i < ds.n(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = post.row(static_cast<Eigen::Index>(t.row_pattern[i]));
  return out;
}

LcaParams m_step(const Eigen::MatrixXd& posteriors, const PatternTable& patterns) {
  if (static_cast<std::size_t>(posteriors.rows()) != patterns.size())
    throw InputError("M-step: posterior rows do not match pattern count");
  const auto k = posteriors.cols();
  const auto j = static_cast<Eigen::Index>(patterns.j);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd ones = Eigen::MatrixXd::Zero(k, j);
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(j);
  double n = 0;
  for (std::size_t p = 0; p < patterns.size(); ++p) {
    const double w = patterns.weights[p];
    const auto u = patterns.pattern(p);
    const auto pi = static_cast<Eigen::Index>(p);
    n += w;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double wh = w * posteriors(pi, c);
      mass(c) += wh;
      for (Eigen::Index v = 0; v < j; ++v)
        if (u[static_cast<std::size_t>(v)]) ones(c, v) += wh;
    }
    for (Eigen::Index v = 0; v < j; ++v)
      if (u[static_cast<std::size_t>(v)]) pooled(v) += w;
  }
  LcaParams out;
  out.pi = mass / mass.sum();
  out.rho.resize(k, j);
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index v = 0; v < j; ++v) {
      const double r = mass(c) > 0 ? ones(c, v) / mass(c) : pooled(v) / n;
      out.rho(c, v) = std::clamp(r, kRhoClamp, 1.0 - kRhoClamp);
    }
  return out;
}

LcaParams m_step(const Eigen::MatrixXd& posteriors, const CategoricalDataset& ds) {
  if (static_cast<std::size_t>(posteriors.rows()) != ds.n())
    throw InputError("M-step: posterior rows do not match N");
  PatternTable rows;
  rows.j = ds.j();
  rows.patterns.assign(ds.indicators().begin(), ds.indicators().end());
  rows.weights.assign(ds.n(), 1.0);
  rows.row_pattern.resize(ds.n());
  std::iota(rows.row_pattern.begin(), rows.row_pattern.end(), 0);
  return m_step(posteriors, rows);
}

LcaParams random_start(const CategoricalDataset& ds, const PatternTable& patterns,
                       std::size_t k, std::uint64_t seed) {
  auto rng = make_rng(seed);
  // Random posterior rows per observation, pooled onto patterns.
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(patterns.size()),
                                               static_cast<Eigen::Index>(k));
  Eigen::VectorXd row(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (Eigen::Index c = 0; c < row.size(); ++c) row(c) = uniform01(rng) + 1e-12;
    post.row(static_cast<Eigen::Index>(patterns.row_pattern[i])) += row / row.sum();
  }
  for (std::size_t p = 0; p < patterns.size(); ++p)
    post.row(static_cast<Eigen::Index>(p)) /= patterns.weights[p];
  return m_step(post, patterns);
}

LcaFit fit_em_from(const LcaParams& start, const CategoricalDataset& ds,
                   const PatternTable& patterns, const EmOptions& opts) {
  start.validate();
  check_items(start, ds.j());
  return materialize(run_em(start, patterns, opts), ds, patterns);
}

LcaFit fit_em(const CategoricalDataset& ds, std::size_t k, std::uint64_t seed,
              const EmOptions& opts) {
  if (k < 1 || k > ds.n())
    throw InputError("number of classes must be in [1, N]");
  const auto t = collapse_patterns(ds);
  return materialize(run_em(random_start(ds, t, k, seed), t, opts), ds, t);
}

nlohmann::json to_json(const StartPolicy& p) {
  return {{"n_initial", p.n_initial},
          {"n_final", p.n_final},
          {"stage1_iter", p.stage1_iter},
          {"max_iter", p.em.max_iter},
          {"tol", p.em.tol}};
}

MultistartReport fit_multistart(const CategoricalDataset& ds, std::size_t k,
                                const StartPolicy& policy, std::uint64_t master_seed) {
  if (k < 1 || k > ds.n()) throw InputError("number of classes must be in [1, N]");
  if (policy.n_final < 1 || policy.n_final > policy.n_initial)
    throw InputError("start policy needs 1 <= n_final <= n_initial");
  const auto t = collapse_patterns(ds);

  struct Slot {
    bool ok = false;
    EmRun run;
  };
  std::vector<Slot> stage1(policy.n_initial);
  const EmOptions short_opts{policy.stage1_iter, policy.em.tol};
  parallel_for(policy.n_initial, [&](std::size_t r) {
    const auto start = random_start(ds, t, k, derive_seed(master_seed, kLcaStream, r));
    try {
      stage1[r].run = run_em(start, t, short_opts);
      stage1[r].ok = true;
    } catch (const DegenerateClassError&) {
    }
  });

  std::vector<std::size_t> order;
  for (std::size_t r = 0; r < stage1.size(); ++r)
    if (stage1[r].ok) order.push_back(r);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return stage1[a].run.loglik > stage1[b].run.loglik;
  });
  if (order.size() > policy.n_final) order.resize(policy.n_final);

  std::vector<Slot> stage2(order.size());
  parallel_for(order.size(), [&](std::size_t s) {
    const auto& first = stage1[order[s]].run;
    try {
      auto run = run_em(first.params, t, policy.em);
      run.iterations += first.iterations;
      std::vector<double> trace = first.trace;
      trace.insert(trace.end(), run.trace.begin() + 1, run.trace.end());
      run.trace = std::move(trace);
      stage2[s].run = std::move(run);
      stage2[s].ok = true;
    } catch (const DegenerateClassError&) {
    }
  });

  MultistartReport rep;
  rep.classes = k;
  rep.n_initial = policy.n_initial;
  rep.n_final = policy.n_final;
  rep.n_degenerate = (policy.n_initial - std::count_if(stage1.begin(), stage1.end(),
                                                       [](const Slot& s) { return s.ok; }));
  std::optional<std::size_t> best;
  for (std::size_t s = 0; s < stage2.size(); ++s) {
    const bool conv = stage2[s].ok && stage2[s].run.converged;
    if (!stage2[s].ok) ++rep.n_degenerate;
    rep.run_ids.push_back(order[s]);
    rep.run_converged.push_back(conv);
    rep.ll_values.push_back(stage2[s].ok ? stage2[s].run.loglik
                                         : std::numeric_limits<double>::quiet_NaN());
    if (conv) {
      ++rep.n_converged;
      if (!best || stage2[s].run.loglik > stage2[*best].run.loglik) best = s;
    }
  }
  if (!best)
    throw NumericalError(
        "no converged solution for " + std::to_string(k) + " classes: " +
        std::to_string(rep.n_degenerate) + " degenerate runs, " +
        std::to_string(stage2.size()) + " runs reached stage 2; raise max_iter or starts");
  const double best_ll = stage2[*best].run.loglik;
  for (std::size_t s = 0; s < stage2.size(); ++s)
    if (rep.run_converged[s] && std::fabs(stage2[s].run.loglik - best_ll) <= kReplicationTol)
      ++rep.n_replicated;
  rep.pct_converged = 100.0 * static_cast<double>(rep.n_converged) /
                      static_cast<double>(policy.n_final);
  rep.pct_replicated = 100.0 * static_cast<double>(rep.n_replicated) /
                       static_cast<double>(rep.n_converged);
  rep.best_run = order[*best];
  rep.best_fit = materialize(std::move(stage2[*best].run), ds, t);
  return rep;
}

nlohmann::json to_json(const MultistartReport& r) {
  nlohmann::json lls = nlohmann::json::array();
  for (double v : r.ll_values) {
    if (std::isnan(v))
      lls.push_back(nullptr);
    else
      lls.push_back(v);
  }
  return {{"classes", r.classes},
          {"n_initial", r.n_initial},
          {"n_final", r.n_final},
          {"n_converged", r.n_converged},
          {"pct_converged", r.pct_converged},
          {"n_replicated", r.n_replicated},
          {"pct_replicated", r.pct_replicated},
          {"n_degenerate", r.n_degenerate},
          {"best_run", r.best_run},
          {"best_loglik", r.best_fit.loglik},
          {"final_stage_loglik", lls}};
}

SimulatedData simulate(const LcaParams& params, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InputError("simulate: N must be at least 1");
  params.validate();
  auto rng = make_rng(seed);
  const auto k = params.classes();
  const auto j = params.items();
  std::vector<std::uint8_t> cells(n * j);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    std::size_t c = 0;
    double acc = params.pi(0);
    while (c + 1 < k && u >= acc) acc += params.pi(static_cast<Eigen::Index>(++c));
    // Never land in an empty class through rounding.
    while (params.pi(static_cast<Eigen::Index>(c)) <= 0 && c > 0) --c;
    labels[i] = c;
    for (std::size_t v = 0; v < j; ++v)
      cells[i * j + v] =
          uniform01(rng) < params.rho(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(v));
  }
  std::vector<std::string> names;
  for (std::size_t v = 0; v < j; ++v) names.push_back("u" + std::to_string(v + 1));
  return {CategoricalDataset(std::move(cells), std::move(names)), std::move(labels)};
}

std::vector<std::size_t> match_classes(const Eigen::MatrixXd& reference_rho,
                                       const Eigen::MatrixXd& candidate_rho) {
  const auto k = static_cast<std::size_t>(reference_rho.rows());
  if (candidate_rho.rows() != reference_rho.rows() || candidate_rho.cols() != reference_rho.cols())
    throw InputError("match_classes: shape mismatch");
  auto dist = [&](std::size_t a, std::size_t b) {
    return (reference_rho.row(static_cast<Eigen::Index>(a)) -
            candidate_rho.row(static_cast<Eigen::Index>(b)))
        .cwiseAbs()
        .sum();
  };
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  if (k <= 8) {
    auto best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double cost = 0;
      for (std::size_t c = 0; c < k; ++c) cost += dist(c, perm[c]);
      if (cost < best_cost) {
        best_cost = cost;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  std::vector<bool> used(k, false);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = k;
    for (std::size_t d = 0; d < k; ++d)
      if (!used[d] && (pick == k || dist(c, d) < dist(c, pick))) pick = d;
    used[pick] = true;
    perm[c] = pick;
  }
  return perm;
}

LcaParams permute_classes(const LcaParams& p, const std::vector<std::size_t>& perm) {
  LcaParams out = p;
  for (std::size_t c = 0; c < perm.size(); ++c) {
    out.pi(static_cast<Eigen::Index>(c)) = p.pi(static_cast<Eigen::Index>(perm[c]));
    out.rho.row(static_cast<Eigen::Index>(c)) = p.rho.row(static_cast<Eigen::Index>(perm[c]));
  }
  return out;
}

}  // namespace catmix
