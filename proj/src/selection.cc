// Apache License, Version 2.0, refer to LICENSE.txt

#include "catmix/selection.hh"

#include <algorithm>
#include <cmath>
#include <limits>

#include "catmix/diagnostics.hh"
#include "catmix/errors.hh"
#include "catmix/format.hh"
#include "catmix/parallel.hh"
#include "catmix/random.hh"

namespace catmix {

namespace {
constexpr std::uint64_t kBlrtStream = 0x626c7274ULL;
constexpr std::uint64_t kEnumStream = 0x656e756dULL;

void check_n(double n) {
  if (!(n >= 1)) throw InputError("information criteria need N >= 1");
}
}  // namespace

double bic(double loglik, double npar, double n) {
  check_n(n);
  return -2.0 * loglik + npar * std::log(n);
}

double abic(double loglik, double npar, double n) {
  check_n(n);
  return -2.0 * loglik + npar * std::log((n + 2.0) / 24.0);
}

double caic(double loglik, double npar, double n) {
  check_n(n);
  return -2.0 * loglik + npar * (std::log(n) + 1.0);
}

double awe(double loglik, double npar, double n) {
  check_n(n);
  return -2.0 * loglik + 2.0 * npar * (std::log(n) + 1.5);
}

BlrtResult blrt(const CategoricalDataset& ds, const LcaParams& null_fit,
                double null_loglik, double alt_loglik, const BlrtOptions& opts) {
  if (opts.bootstrap < 1) throw InputError("BLRT needs at least one bootstrap replicate");
  const std::size_t k_null = null_fit.classes();
  const std::size_t k = k_null + 1;
  BlrtResult res;
  res.classes = k;
  res.statistic = 2.0 * (alt_loglik - null_loglik);

  struct Replicate {
    std::optional<double> stat;
    bool retried = false;
  };
  std::vector<Replicate> reps(opts.bootstrap);
  parallel_for(opts.bootstrap, [&](std::size_t b) {
    for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
      const auto base = derive_seed(opts.seed, kBlrtStream, b * 2 + attempt);
      const auto sim = simulate(null_fit, ds.n(), derive_seed(base, 0));
      try {
        const auto f0 = fit_multistart(sim.data, k_null, opts.replicate_policy, derive_seed(base, 1));
        const auto f1 = fit_multistart(sim.data, k, opts.replicate_policy, derive_seed(base, 2));
        reps[b].stat = 2.0 * (f1.best_fit.loglik - f0.best_fit.loglik);
        return;
      } catch (const NumericalError&) {
        reps[b].retried = true;
      }
    }
  });

  std::size_t exceed = 0;
  for (const auto& r : reps) {
    if (r.retried) ++res.n_retried;
    if (!r.stat) {
      ++res.n_excluded;
      continue;
    }
    ++res.n_used;
    res.replicate_statistics.push_back(*r.stat);
    if (*r.stat >= res.statistic) ++exceed;
  }
  if (res.n_used == 0) throw NumericalError("BLRT: every bootstrap replicate failed to converge");
  res.p_value = static_cast<double>(1 + exceed) / static_cast<double>(res.n_used + 1);
  return res;
}

BlrtResult blrt(const CategoricalDataset& ds, std::size_t k,
                const StartPolicy& observed_policy, const BlrtOptions& opts) {
  if (k < 2) throw InputError("BLRT compares K against K - 1 and needs K >= 2");
  const auto f0 = fit_multistart(ds, k - 1, observed_policy, derive_seed(opts.seed, kEnumStream, k - 1));
  const auto f1 = fit_multistart(ds, k, observed_policy, derive_seed(opts.seed, kEnumStream, k));
  return blrt(ds, f0.best_fit.params, f0.best_fit.loglik, f1.best_fit.loglik, opts);
}

nlohmann::json to_json(const BlrtResult& r) {
  return {{"classes", r.classes},         {"statistic", r.statistic},
          {"p_value", r.p_value},         {"n_used", r.n_used},
          {"n_excluded", r.n_excluded},   {"n_retried", r.n_retried},
          {"replicate_statistics", r.replicate_statistics}};
}

std::optional<std::size_t> EnumerationTable::argmin(double FitSummary::*criterion) const {
  std::optional<std::size_t> best;
  double best_v = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (r.error) continue;
    if (r.*criterion < best_v) {
      best_v = r.*criterion;
      best = r.classes;
    }
  }
  return best;
}

EnumerationTable enumerate_classes(const CategoricalDataset& ds, std::size_t k_max,
                                   const StartPolicy& policy, std::uint64_t seed,
                                   std::optional<BlrtOptions> blrt_opts) {
  if (k_max < 1) throw InputError("enumerate: max classes must be at least 1");
  if (k_max > ds.n()) throw InputError("enumerate: max classes exceeds N");
  EnumerationTable table;
  table.n = ds.n();
  table.j = ds.j();
  table.policy = policy;
  table.blrt = blrt_opts;
  const double n = static_cast<double>(ds.n());

  for (std::size_t k = 1; k <= k_max; ++k) {
    FitSummary row;
    row.classes = k;
    row.npar = lca_npar(k, ds.j());
    try {
      auto rep = fit_multistart(ds, k, policy, derive_seed(seed, kEnumStream, k));
      const auto& fit = rep.best_fit;
      row.loglik = fit.loglik;
      row.pct_converged = rep.pct_converged;
      row.pct_replicated = rep.pct_replicated;
      row.bic = bic(fit.loglik, static_cast<double>(row.npar), n);
      row.abic = abic(fit.loglik, static_cast<double>(row.npar), n);
      row.caic = caic(fit.loglik, static_cast<double>(row.npar), n);
      row.awe = awe(fit.loglik, static_cast<double>(row.npar), n);
      std::vector<std::size_t> counts(k, 0);
      for (auto l : modal_assignment(fit.posteriors)) ++counts[l];
      row.smallest_class_n = *std::min_element(counts.begin(), counts.end());
      row.smallest_class_pct = 100.0 * static_cast<double>(row.smallest_class_n) / n;
      table.fits.push_back(std::move(rep));
    } catch (const NumericalError& e) {
      row.error = e.what();
      table.fits.emplace_back();
      table.warnings.push_back(std::to_string(k) + "-class model failed: " + e.what());
    }
    table.rows.push_back(std::move(row));
  }

  for (std::size_t r = 1; r < table.rows.size(); ++r) {
    const auto& prev = table.rows[r - 1];
    const auto& cur = table.rows[r];
    if (prev.error || cur.error) continue;
    if (cur.loglik < prev.loglik - kReplicationTol)
      table.warnings.push_back("log-likelihood decreases from " + std::to_string(prev.classes) +
                               " to " + std::to_string(cur.classes) +
                               " classes; the larger model is likely at a local optimum");
  }

  if (blrt_opts) {
    for (std::size_t r = 1; r < table.rows.size(); ++r) {
      auto& cur = table.rows[r];
      const auto& prev = table.rows[r - 1];
      if (prev.error || cur.error) continue;
      auto opts = *blrt_opts;
      opts.seed = derive_seed(blrt_opts->seed, kBlrtStream, cur.classes);
      try {
        const auto res = blrt(ds, table.fits[r - 1].best_fit.params, prev.loglik, cur.loglik, opts);
        cur.blrt_p = res.p_value;
        if (res.n_excluded > 0)
          table.warnings.push_back("BLRT " + std::to_string(cur.classes) + " vs " +
                                   std::to_string(prev.classes) + ": " +
                                   std::to_string(res.n_excluded) + " replicates excluded");
      } catch (const NumericalError& e) {
        table.warnings.push_back("BLRT " + std::to_string(cur.classes) + " failed: " + e.what());
      }
    }
  }
  return table;
}

nlohmann::json to_json(const EnumerationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json row = {{"classes", r.classes}, {"npar", r.npar}};
    if (r.error) {
      row["error"] = *r.error;
    } else {
      row.update({{"loglik", r.loglik},
                  {"pct_converged", r.pct_converged},
                  {"pct_replicated", r.pct_replicated},
                  {"bic", r.bic},
                  {"abic", r.abic},
                  {"caic", r.caic},
                  {"awe", r.awe},
                  {"vlmr_p", "not computed"},
                  {"blrt_p", r.blrt_p ? nlohmann::json(*r.blrt_p) : nlohmann::json(nullptr)},
                  {"smallest_class_n", r.smallest_class_n},
                  {"smallest_class_pct", r.smallest_class_pct}});
    }
    rows.push_back(row);
  }
  nlohmann::json out = {{"n", t.n}, {"j", t.j}, {"start_policy", to_json(t.policy)},
                        {"rows", rows}, {"warnings", t.warnings}};
  if (t.blrt) {
    out["blrt"] = {{"bootstrap", t.blrt->bootstrap},
                   {"seed", t.blrt->seed},
                   {"replicate_policy", to_json(t.blrt->replicate_policy)}};
  }
  nlohmann::json best = nlohmann::json::object();
  for (auto [name, member] : {std::pair{"bic", &FitSummary::bic}, std::pair{"abic", &FitSummary::abic},
                              std::pair{"caic", &FitSummary::caic}, std::pair{"awe", &FitSummary::awe}}) {
    if (auto k = t.argmin(member)) best[name] = *k;
  }
  out["minimized_at"] = best;
  return out;
}

std::string to_csv(const EnumerationTable& t) {
  std::string out =
      "classes,npar,loglik,pct_converged,pct_replicated,bic,abic,caic,awe,vlmr_p,blrt_p,"
      "smallest_class_n,smallest_class_pct\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : t.rows) {
    out += std::to_string(r.classes) + "," + std::to_string(r.npar) + ",";
    if (r.error) {
      out += "NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA\n";
      continue;
    }
    out += textfmt::exact(r.loglik) + "," + textfmt::exact(r.pct_converged) + "," +
           textfmt::exact(r.pct_replicated) + "," + textfmt::exact(r.bic) + "," +
           textfmt::exact(r.abic) + "," + textfmt::exact(r.caic) + "," + textfmt::exact(r.awe) +
           ",not computed," + textfmt::exact(r.blrt_p.value_or(nan)) + "," +
           std::to_string(r.smallest_class_n) + "," + textfmt::exact(r.smallest_class_pct) + "\n";
  }
  return out;
}

std::string ic_plot_csv(const EnumerationTable& t) {
  std::string out = "classes,bic,abic,caic,awe\n";
  for (const auto& r : t.rows) {
    if (r.error) continue;
    out += std::to_string(r.classes) + "," + textfmt::exact(r.bic) + "," +
           textfmt::exact(r.abic) + "," + textfmt::exact(r.caic) + "," + textfmt::exact(r.awe) +
           "\n";
  }
  return out;
}

std::string to_text(const EnumerationTable& t) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Classes", "npar", "LL", "%Conv", "%Repl", "BIC", "aBIC", "CAIC", "AWE",
                  "VLMR", "BLRT", "Smallest n (%)"});
  auto mark = [&](const FitSummary& r, double FitSummary::*m) {
    return textfmt::fixed(r.*m, 2) + (t.argmin(m) == r.classes ? "*" : "");
  };
  for (const auto& r : t.rows) {
    const auto label = std::to_string(r.classes) + "-Class";
    if (r.error) {
      rows.push_back({label, std::to_string(r.npar), "failed", "", "", "", "", "", "", "", "", ""});
      continue;
    }
    std::string blrt = "---";
    if (r.blrt_p) blrt = *r.blrt_p < 0.001 ? "<0.001" : textfmt::fixed(*r.blrt_p, 3);
    rows.push_back({label, std::to_string(r.npar), textfmt::fixed(r.loglik, 2),
                    textfmt::fixed(r.pct_converged, 0) + "%",
                    textfmt::fixed(r.pct_replicated, 0) + "%", mark(r, &FitSummary::bic),
                    mark(r, &FitSummary::abic), mark(r, &FitSummary::caic),
                    mark(r, &FitSummary::awe), "n/c", blrt,
                    std::to_string(r.smallest_class_n) + " (" +
                        textfmt::fixed(r.smallest_class_pct, 1) + "%)"});
  }
  std::string out = textfmt::align_table(rows);
  out += "* minimum of the criterion. VLMR not computed. Starts: " +
         std::to_string(t.policy.n_initial) + " initial / " + std::to_string(t.policy.n_final) +
         " final.\n";
  for (const auto& w : t.warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace catmix
