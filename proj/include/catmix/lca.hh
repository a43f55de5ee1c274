// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catmix/dataset.hh"

namespace catmix {

// Item probabilities are kept inside [kRhoClamp, 1 - kRhoClamp] so that
// boundary solutions have a finite log-likelihood.
inline constexpr double kRhoClamp = 1e-6;

// Latent class model for binary indicators.
//   pi(k)     = P(C = k)
//   rho(k, j) = P(u_j = 1 | C = k)
struct LcaParams {
  Eigen::VectorXd pi;
  Eigen::MatrixXd rho;

  std::size_t classes() const { return static_cast<std::size_t>(pi.size()); }
  std::size_t items() const { return static_cast<std::size_t>(rho.cols()); }

  // Throws InputError unless pi is a probability vector (sum within 1e-10)
  // and every rho lies in the clamp interval.
  void validate() const;
};

nlohmann::json to_json(const LcaParams& p);
LcaParams params_from_json(const nlohmann::json& j);

// Free parameters: (K - 1) class proportions plus K * J item probabilities.
inline std::size_t lca_npar(std::size_t k, std::size_t j) { return k - 1 + k * j; }

struct LcaFit {
  LcaParams params;
  double loglik = 0;
  Eigen::MatrixXd posteriors;  // N x K, rows sum to 1
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t npar = 0;
  std::vector<double> ll_trace;  // LL before the first M-step, then after each
};

struct EmOptions {
  std::size_t max_iter = 500;
  double tol = 1e-6;  // absolute LL change
};

// Pattern-collapsed log-likelihood:
//   sum_p w_p log sum_k pi_k prod_j rho_kj^u (1 - rho_kj)^(1 - u)
double log_likelihood(const LcaParams& params, const PatternTable& patterns);
double log_likelihood(const LcaParams& params, const CategoricalDataset& ds);

// Row-by-row evaluation of the same quantity without pattern collapsing.
double log_likelihood_naive(const LcaParams& params, const CategoricalDataset& ds);

// Posterior class probabilities per pattern (P x K), computed in log space.
// Returns the log-likelihood through `loglik` when non-null.
Eigen::MatrixXd e_step(const LcaParams& params, const PatternTable& patterns,
                       double* loglik = nullptr);
// Per observation (N x K).
Eigen::MatrixXd e_step(const LcaParams& params, const CategoricalDataset& ds);

// Weighted ML update. A class with zero posterior mass gets pi = 0 and the
// pooled item means as rho; fit_em treats that state as degenerate.
LcaParams m_step(const Eigen::MatrixXd& posteriors, const PatternTable& patterns);
LcaParams m_step(const Eigen::MatrixXd& posteriors, const CategoricalDataset& ds);

// Random start: each observation gets a normalized-uniform posterior row,
// followed by one M-step.
LcaParams random_start(const CategoricalDataset& ds, const PatternTable& patterns,
                       std::size_t k, std::uint64_t seed);

// EM from a given starting point. Stops when the LL gain drops below
// opts.tol (converged) or after opts.max_iter M-steps (not converged).
// Throws DegenerateClassError if a class's posterior mass falls below 1e-8.
LcaFit fit_em_from(const LcaParams& start, const CategoricalDataset& ds,
                   const PatternTable& patterns, const EmOptions& opts = {});

LcaFit fit_em(const CategoricalDataset& ds, std::size_t k, std::uint64_t seed,
              const EmOptions& opts = {});

struct StartPolicy {
  std::size_t n_initial = 200;
  std::size_t n_final = 100;
  std::size_t stage1_iter = 20;
  EmOptions em;
};

nlohmann::json to_json(const StartPolicy& p);

// Two-stage random-start estimation: all n_initial starts run stage1_iter EM
// iterations, the n_final best continue to convergence.
struct MultistartReport {
  std::size_t classes = 0;
  std::size_t n_initial = 0;
  std::size_t n_final = 0;
  std::size_t n_converged = 0;
  std::size_t n_replicated = 0;
  double pct_converged = 0;   // of n_final
  double pct_replicated = 0;  // of converged runs
  std::size_t n_degenerate = 0;
  LcaFit best_fit;
  std::size_t best_run = 0;
  std::vector<double> ll_values;     // final LL per stage-2 run (NaN if degenerate)
  std::vector<std::size_t> run_ids;  // stage-1 index of each stage-2 run
  std::vector<bool> run_converged;
};

inline constexpr double kReplicationTol = 1e-4;

// Throws NumericalError when no stage-2 run converges.
MultistartReport fit_multistart(const CategoricalDataset& ds, std::size_t k,
                                const StartPolicy& policy, std::uint64_t master_seed);

nlohmann::json to_json(const MultistartReport& r);

struct SimulatedData {
  CategoricalDataset data;
  std::vector<std::size_t> labels;  // 0-based true classes
};

SimulatedData simulate(const LcaParams& params, std::size_t n, std::uint64_t seed);

// perm[k] is the class of `candidate` matched to class k of `reference`,
// minimizing the summed absolute difference of item probabilities.
// Exhaustive for K <= 8, greedy beyond.
std::vector<std::size_t> match_classes(const Eigen::MatrixXd& reference_rho,
                                       const Eigen::MatrixXd& candidate_rho);

LcaParams permute_classes(const LcaParams& p, const std::vector<std::size_t>& perm);

}  // namespace catmix
