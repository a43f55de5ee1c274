// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catmix/dataset.hh"
#include "catmix/lca.hh"

namespace catmix {

// Relative entropy 1 - sum_ik(-p_ik ln p_ik) / (N ln K), with 0 ln 0 = 0.
// 1 means every posterior row is one-hot, 0 means every row is uniform.
double entropy(const Eigen::MatrixXd& posteriors);

// Row-wise argmax; ties go to the lowest class index. Labels are 0-based.
std::vector<std::size_t> modal_assignment(const Eigen::MatrixXd& posteriors);

// Share of observations modally assigned to each class.
std::vector<double> mcap(std::span<const std::size_t> labels, std::size_t k);

// Mean own-class posterior among the members modally assigned to each class;
// nullopt for classes with no members.
std::vector<std::optional<double>> avepp(const Eigen::MatrixXd& posteriors,
                                         std::span<const std::size_t> labels);

// Odds of correct classification: [AvePP/(1-AvePP)] / [pi/(1-pi)].
// +Inf when AvePP is 1.
double occ(double avepp_k, double pi_k);

struct Interval {
  double lower = 0;
  double upper = 0;
};

struct ProportionCi {
  std::vector<Interval> intervals;
  std::size_t n_used = 0;
  std::size_t n_excluded = 0;
  double level = 0.95;
};

// Nonparametric bootstrap percentile intervals for the class proportions.
// Each replicate resamples rows with replacement, refits by EM from
// fit.params, and is aligned to the original classes by item probabilities.
ProportionCi class_proportion_ci(const CategoricalDataset& ds, const LcaFit& fit,
                                 std::size_t bootstrap, std::uint64_t seed,
                                 double level = 0.95, const EmOptions& em = {});

struct ClassDiagnostics {
  double proportion = 0;  // model estimate pi_k
  std::optional<Interval> ci;
  double mcap = 0;
  std::optional<double> avepp;
  std::optional<double> occ;
  std::size_t modal_n = 0;
};

struct DiagnosticsReport {
  std::optional<double> entropy;  // undefined for single-class models
  std::vector<ClassDiagnostics> classes;
  std::vector<std::size_t> modal;
  std::size_t ci_used = 0;
  std::size_t ci_excluded = 0;
};

// Everything but the intervals is a function of (posteriors, pi) alone.
DiagnosticsReport diagnose(const Eigen::MatrixXd& posteriors, const Eigen::VectorXd& pi);

DiagnosticsReport diagnose(const CategoricalDataset& ds, const LcaFit& fit,
                           std::size_t bootstrap, std::uint64_t seed, double level = 0.95);

nlohmann::json to_json(const DiagnosticsReport& r);
std::string to_csv(const DiagnosticsReport& r);
std::string to_text(const DiagnosticsReport& r);

}  // namespace catmix
