// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catmix/dataset.hh"
#include "catmix/lca.hh"

namespace catmix {

// Measurement part of the ML three-step model. q(k, s) = P(W = s | C = k),
// where W is the modal assignment from the step-1 model.
struct ClassificationErrorMatrix {
  Eigen::MatrixXd q;             // K x K, floored at 1e-10, rows sum to 1
  Eigen::MatrixXd fixed_logits;  // K x (K-1): log(q(k,s) / q(k,K)), capped at +-15
  Eigen::MatrixXd measurement;   // K x K: softmax of the capped logits, used in step 3
};

inline constexpr double kErrorFloor = 1e-10;
inline constexpr double kLogitCap = 15.0;

// q(k, s) = sum_{i: W_i = s} p_ik / sum_i p_ik.
ClassificationErrorMatrix classification_error_matrix(const Eigen::MatrixXd& posteriors,
                                                      std::span<const std::size_t> labels);

struct Estimate {
  double value = 0;
  double se = 0;
  double p = 1;  // two-sided normal test of value = 0
};

struct WaldTest {
  double statistic = 0;
  std::size_t df = 0;
  double p = 1;
};

struct PairwiseDifference {
  std::size_t a = 0;  // 0-based classes
  std::size_t b = 0;
  double diff = 0;  // mean_a - mean_b
  double se = 0;
  double p = 1;
};

// Equality of all K means through K - 1 successive differences.
WaldTest wald_omnibus(const Eigen::VectorXd& means, const Eigen::MatrixXd& covariance);

// z-tests for every ordered pair a != b, without multiplicity adjustment.
std::vector<PairwiseDifference> pairwise_differences(const Eigen::VectorXd& means,
                                                     const Eigen::MatrixXd& covariance);

struct CovariateEffect {
  std::size_t cls = 0;  // class compared with the reference
  Estimate intercept;
  Estimate slope;        // logit change for covariate = 1
  double odds_ratio = 1;  // exp(slope.value)
};

struct CovariateContrast {
  std::size_t a = 0;
  std::size_t b = 0;
  Estimate logit;  // log odds of class a versus b per unit covariate
  double odds_ratio = 1;
};

struct ThreeStepOptions {
  std::size_t n_starts = 10;  // one start from the step-1 posteriors, the rest random
  std::size_t max_iter = 5000;
  double tol = 1e-10;
  double fd_step = 1e-4;  // relative step for the numerical Hessian
};

struct ThreeStepResult {
  std::string covariate;
  std::string outcome;
  std::size_t reference_class = 0;
  ClassificationErrorMatrix errors;

  std::vector<CovariateEffect> covariate_logits;  // non-reference classes
  std::vector<CovariateContrast> covariate_contrasts;  // all pairs a < b
  std::vector<Estimate> class_means;          // at covariate = 0
  std::vector<Estimate> class_means_at_mean;  // at the sample covariate mean
  double covariate_mean = 0;
  Estimate direct_effect;
  double residual_variance = 0;
  Eigen::MatrixXd means_covariance;  // K x K, for the means at covariate = 0

  WaldTest wald;
  std::vector<PairwiseDifference> pairwise;

  double loglik = 0;
  std::vector<double> ll_trace;  // best start
  std::size_t iterations = 0;
  bool converged = false;
  bool hessian_not_pd = false;
  bool separation = false;  // some |logit coefficient| > 10
  bool covariate_constant = false;
  std::vector<std::string> warnings;
};

// Step 3 of the ML three-step approach: W is the single indicator of C with
// measurement logits fixed from the step-1 classification errors. The
// structural model is a multinomial logit of C on the binary covariate X,
// and Y | C = k, X ~ Normal(M_k + beta X, sigma^2) with a common variance.
// Estimated by EM; standard errors come from the observed information,
// obtained by central differences of the analytic score.
ThreeStepResult fit_threestep(const CategoricalDataset& ds, const LcaFit& fit,
                              const std::string& covariate, const std::string& outcome,
                              std::uint64_t seed, const ThreeStepOptions& opts = {});

// Same model on raw arrays; `posteriors` are the step-1 posteriors.
ThreeStepResult fit_threestep(const Eigen::MatrixXd& posteriors, const Eigen::VectorXd& pi,
                              std::span<const std::uint8_t> x, std::span<const double> y,
                              std::uint64_t seed, const ThreeStepOptions& opts = {});

nlohmann::json to_json(const ThreeStepResult& r);
std::string to_text(const ThreeStepResult& r);

}  // namespace catmix
