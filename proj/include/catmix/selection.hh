// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "catmix/dataset.hh"
#include "catmix/lca.hh"

namespace catmix {

// Penalized fit criteria; lower is better.
double bic(double loglik, double npar, double n);   // -2LL + npar ln N
double abic(double loglik, double npar, double n);  // -2LL + npar ln((N + 2) / 24)
double caic(double loglik, double npar, double n);  // -2LL + npar (ln N + 1)
double awe(double loglik, double npar, double n);   // -2LL + 2 npar (ln N + 1.5)

struct BlrtOptions {
  std::size_t bootstrap = 100;
  std::uint64_t seed = 0;
  // Replicate fits use a reduced start policy but a longer iteration limit:
  // under the null the larger model is over-parameterized and EM crawls.
  StartPolicy replicate_policy{20, 5, 20, {5000, 1e-6}};
};

struct BlrtResult {
  std::size_t classes = 0;  // K, tested against K - 1
  double statistic = 0;     // 2 (LL_K - LL_{K-1}) on the observed data
  double p_value = 1;
  std::size_t n_used = 0;      // replicates entering the p-value
  std::size_t n_excluded = 0;  // failed twice
  std::size_t n_retried = 0;
  std::vector<double> replicate_statistics;
};

// Parametric bootstrap likelihood ratio test of K against K - 1 classes.
// Replicate datasets are simulated from `null_fit` (the K - 1 model); both
// models are refit to each replicate. p = (1 + #{T_b >= T}) / (B_used + 1).
BlrtResult blrt(const CategoricalDataset& ds, const LcaParams& null_fit,
                double null_loglik, double alt_loglik, const BlrtOptions& opts);

// Fits K - 1 and K with `observed_policy`, then runs the bootstrap.
BlrtResult blrt(const CategoricalDataset& ds, std::size_t k,
                const StartPolicy& observed_policy, const BlrtOptions& opts);

nlohmann::json to_json(const BlrtResult& r);

struct FitSummary {
  std::size_t classes = 0;
  std::size_t npar = 0;
  double loglik = 0;
  double pct_converged = 0;
  double pct_replicated = 0;
  double bic = 0;
  double abic = 0;
  double caic = 0;
  double awe = 0;
  std::optional<double> blrt_p;
  std::size_t smallest_class_n = 0;
  double smallest_class_pct = 0;
  std::optional<std::string> error;  // set when the multistart failed for this K
};

struct EnumerationTable {
  std::size_t n = 0;
  std::size_t j = 0;
  StartPolicy policy;
  std::optional<BlrtOptions> blrt;
  std::vector<FitSummary> rows;
  std::vector<MultistartReport> fits;  // parallel to rows; empty entry on error
  std::vector<std::string> warnings;

  // K of the row minimizing the given criterion among successful rows.
  std::optional<std::size_t> argmin(double FitSummary::*criterion) const;
};

EnumerationTable enumerate_classes(const CategoricalDataset& ds, std::size_t k_max,
                                   const StartPolicy& policy, std::uint64_t seed,
                                   std::optional<BlrtOptions> blrt = std::nullopt);

nlohmann::json to_json(const EnumerationTable& t);
std::string to_csv(const EnumerationTable& t);
std::string ic_plot_csv(const EnumerationTable& t);
std::string to_text(const EnumerationTable& t);

}  // namespace catmix
