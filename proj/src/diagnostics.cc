// Apache License, Version 2.0, refer to LICENSE.txt

#include "catmix/diagnostics.hh"

#include <algorithm>
#include <cmath>
#include <limits>

#include "catmix/errors.hh"
#include "catmix/format.hh"
#include "catmix/parallel.hh"
#include "catmix/random.hh"
#include "catmix/stats.hh"

namespace catmix {

namespace {
constexpr std::uint64_t kCiStream = 0x63692d626f6f74ULL;
}

double entropy(const Eigen::MatrixXd& posteriors) {
  const auto k = posteriors.cols();
  const auto n = posteriors.rows();
  if (k < 2) throw InputError("entropy needs at least 2 classes");
  if (n < 1) throw InputError("entropy needs at least one row");
  // Row entropies are summed relative to ln K. A row of equal entries is
  // uniform and contributes exactly 1, so uniform input gives exactly 0.
  const double log_k = std::log(static_cast<double>(k));
  double h = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (posteriors.row(i).maxCoeff() == posteriors.row(i).minCoeff()) {
      h += 1.0;
      continue;
    }
    double row = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double p = posteriors(i, c);
      if (p > 0) row -= p * std::log(p);
    }
    h += row / log_k;
  }
  return std::clamp(1.0 - h / static_cast<double>(n), 0.0, 1.0);
}

std::vector<std::size_t> modal_assignment(const Eigen::MatrixXd& posteriors) {
  std::vector<std::size_t> labels(static_cast<std::size_t>(posteriors.rows()));
  for (Eigen::Index i = 0; i < posteriors.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < posteriors.cols(); ++c)
      if (posteriors(i, c) > posteriors(i, best)) best = c;
    labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return labels;
}

std::vector<double> mcap(std::span<const std::size_t> labels, std::size_t k) {
  if (labels.empty()) throw InputError("mcap: no labels");
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels) {
    if (l >= k) throw InputError("mcap: label out of range");
    ++counts[l];
  }
  std::vector<double> out(k);
  for (std::size_t c = 0; c < k; ++c)
    out[c] = static_cast<double>(counts[c]) / static_cast<double>(labels.size());
  return out;
}

std::vector<std::optional<double>> avepp(const Eigen::MatrixXd& posteriors,
                                         std::span<const std::size_t> labels) {
  if (labels.size() != static_cast<std::size_t>(posteriors.rows()))
    throw InputError("avepp: label count differs from posterior rows");
  const auto k = static_cast<std::size_t>(posteriors.cols());
  std::vector<double> sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sum[labels[i]] += posteriors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i]));
    ++count[labels[i]];
  }
  std::vector<std::optional<double>> out(k);
  for (std::size_t c = 0; c < k; ++c)
    if (count[c] > 0) out[c] = sum[c] / static_cast<double>(count[c]);
  return out;
}

double occ(double avepp_k, double pi_k) {
  if (!(pi_k > 0 && pi_k < 1)) throw InputError("occ: class proportion must be in (0, 1)");
  if (avepp_k >= 1.0) return std::numeric_limits<double>::infinity();
  return (avepp_k / (1.0 - avepp_k)) / (pi_k / (1.0 - pi_k));
}

ProportionCi class_proportion_ci(const CategoricalDataset& ds, const LcaFit& fit,
                                 std::size_t bootstrap, std::uint64_t seed, double level,
                                 const EmOptions& em) {
  if (!(level > 0 && level < 1)) throw InputError("confidence level must be in (0, 1)");
  const auto k = fit.params.classes();
  ProportionCi out;
  out.level = level;
  if (k == 1) {
    out.intervals = {{1.0, 1.0}};
    out.n_used = bootstrap;
    return out;
  }
  std::vector<std::optional<Eigen::VectorXd>> draws(bootstrap);
  parallel_for(bootstrap, [&](std::size_t b) {
    auto rng = make_rng(derive_seed(seed, kCiStream, b));
    std::vector<std::size_t> rows(ds.n());
    for (auto& r : rows) r = uniform_index(rng, ds.n());
    const auto sample = ds.subset(rows);
    const auto t = collapse_patterns(sample);
    try {
      const auto rep = fit_em_from(fit.params, sample, t, em);
      if (!rep.converged) return;
      const auto perm = match_classes(fit.params.rho, rep.params.rho);
      Eigen::VectorXd pi(static_cast<Eigen::Index>(k));
      for (std::size_t c = 0; c < k; ++c)
        pi(static_cast<Eigen::Index>(c)) = rep.params.pi(static_cast<Eigen::Index>(perm[c]));
      draws[b] = pi;
    } catch (const NumericalError&) {
    }
  });
  std::vector<std::vector<double>> per_class(k);
  for (const auto& d : draws) {
    if (!d) {
      ++out.n_excluded;
      continue;
    }
    ++out.n_used;
    for (std::size_t c = 0; c < k; ++c) per_class[c].push_back((*d)(static_cast<Eigen::Index>(c)));
  }
  if (out.n_used == 0) throw NumericalError("class proportion bootstrap: every replicate failed");
  const double alpha = (1.0 - level) / 2.0;
  for (std::size_t c = 0; c < k; ++c)
    out.intervals.push_back({stats::quantile(per_class[c], alpha),
                             stats::quantile(per_class[c], 1.0 - alpha)});
  return out;
}

DiagnosticsReport diagnose(const Eigen::MatrixXd& posteriors, const Eigen::VectorXd& pi) {
  const auto k = static_cast<std::size_t>(posteriors.cols());
  if (static_cast<std::size_t>(pi.size()) != k)
    throw InputError("diagnose: class count differs between posteriors and pi");
  DiagnosticsReport rep;
  if (k >= 2) rep.entropy = entropy(posteriors);
  rep.modal = modal_assignment(posteriors);
  const auto shares = mcap(rep.modal, k);
  const auto pp = avepp(posteriors, rep.modal);
  for (std::size_t c = 0; c < k; ++c) {
    ClassDiagnostics d;
    d.proportion = pi(static_cast<Eigen::Index>(c));
    d.mcap = shares[c];
    d.avepp = pp[c];
    d.modal_n = static_cast<std::size_t>(std::llround(shares[c] * static_cast<double>(rep.modal.size())));
    if (pp[c] && d.proportion > 0 && d.proportion < 1) d.occ = occ(*pp[c], d.proportion);
    rep.classes.push_back(d);
  }
  return rep;
}

DiagnosticsReport diagnose(const CategoricalDataset& ds, const LcaFit& fit,
                           std::size_t bootstrap, std::uint64_t seed, double level) {
  auto rep = diagnose(fit.posteriors, fit.params.pi);
  if (bootstrap > 0) {
    const auto ci = class_proportion_ci(ds, fit, bootstrap, seed, level);
    for (std::size_t c = 0; c < rep.classes.size(); ++c) rep.classes[c].ci = ci.intervals[c];
    rep.ci_used = ci.n_used;
    rep.ci_excluded = ci.n_excluded;
  }
  return rep;
}

namespace {
nlohmann::json num_or_string(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return "Inf";
  return *v;
}
}  // namespace

nlohmann::json to_json(const DiagnosticsReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto& d = r.classes[c];
    nlohmann::json row = {{"class", c + 1},
                          {"proportion", d.proportion},
                          {"mcap", d.mcap},
                          {"modal_n", d.modal_n},
                          {"avepp", num_or_string(d.avepp)},
                          {"occ", num_or_string(d.occ)}};
    if (d.ci) row["ci"] = {d.ci->lower, d.ci->upper};
    classes.push_back(row);
  }
  return {{"entropy", num_or_string(r.entropy)},
          {"classes", classes},
          {"bootstrap_used", r.ci_used},
          {"bootstrap_excluded", r.ci_excluded}};
}

std::string to_csv(const DiagnosticsReport& r) {
  std::string out = "class,proportion,ci_lower,ci_upper,mcap,avepp,occ\n";
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto& d = r.classes[c];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out += std::to_string(c + 1) + "," + textfmt::exact(d.proportion) + "," +
           textfmt::exact(d.ci ? d.ci->lower : nan) + "," +
           textfmt::exact(d.ci ? d.ci->upper : nan) + "," + textfmt::exact(d.mcap) + "," +
           textfmt::exact(d.avepp.value_or(nan)) + "," + textfmt::exact(d.occ.value_or(nan)) +
           "\n";
  }
  return out;
}

std::string to_text(const DiagnosticsReport& r) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"k-class", "proportion", "95% CI", "mcaP", "AvePP", "OCC"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto& d = r.classes[c];
    rows.push_back({"Class " + std::to_string(c + 1), textfmt::fixed(d.proportion, 3),
                    d.ci ? "[" + textfmt::fixed(d.ci->lower, 3) + ", " +
                               textfmt::fixed(d.ci->upper, 3) + "]"
                         : "-",
                    textfmt::fixed(d.mcap, 3), textfmt::fixed(d.avepp.value_or(nan), 3),
                    textfmt::fixed(d.occ.value_or(nan), 2)});
  }
  return "Entropy: " + textfmt::fixed(r.entropy.value_or(nan), 3) + "\n" +
         textfmt::align_table(rows);
}

}  // namespace catmix
