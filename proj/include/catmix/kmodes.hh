// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "catmix/dataset.hh"

namespace catmix {

// Number of coordinates on which two binary vectors differ.
std::size_t simple_matching_distance(std::span<const std::uint8_t> a,
                                     std::span<const std::uint8_t> b);

struct KModesConfig {
  std::size_t k = 2;
  std::size_t max_iter = 300;
  std::size_t n_restarts = 10;
  std::uint64_t seed = 0;
};

// Labels are 0-based cluster indices.
struct KModesModel {
  std::size_t k = 0;
  std::size_t j = 0;
  std::vector<std::uint8_t> centroids;  // k x J row-major
  std::vector<std::size_t> assignment;
  std::size_t cost = 0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::size_t> cost_trace;  // cost after each iteration, best restart
  std::size_t best_restart = 0;

  std::span<const std::uint8_t> centroid(std::size_t c) const {
    return {centroids.data() + c * j, j};
  }
  std::vector<std::size_t> sizes() const;
};

// Huang-style k-modes. Each restart seeds the centroids with k random
// observations (distinct response patterns when enough exist), then
// alternates nearest-mode assignment and mode updates until no label
// changes. Policies:
//   - mode ties (equal 0/1 counts) pick 1;
//   - distance ties keep the current cluster, otherwise the lowest index;
//   - an empty cluster takes the observation farthest from its own mode.
// The lowest-cost restart wins, ties to the lowest restart index.
KModesModel fit_kmodes(const CategoricalDataset& ds, const KModesConfig& cfg);

// Mode vector of the given rows, ties to 1.
std::vector<std::uint8_t> cluster_mode(const CategoricalDataset& ds,
                                       std::span<const std::size_t> members);

// Sum over observations of the distance to their cluster's mode, with the
// modes recomputed from the assignment.
std::size_t total_within_cluster_dissimilarity(const KModesModel& model,
                                               const CategoricalDataset& ds);

struct Silhouette {
  double mean = 0;
  std::vector<double> scores;  // per observation
};

// Silhouette widths under simple matching distance. Observations in
// singleton clusters score 0. Requires at least 2 clusters.
Silhouette silhouette_width(std::span<const std::size_t> labels,
                            const CategoricalDataset& ds);
Silhouette silhouette_width(const KModesModel& model, const CategoricalDataset& ds);

struct SweepRow {
  std::size_t k = 0;
  std::size_t cost = 0;
  std::optional<double> silhouette;  // k >= 2 only
};

// Fits each k in [k_min, k_max] with cfg's restart policy. Every k reuses
// cfg.seed, as when a fixed seed is set before each fit.
std::vector<SweepRow> sweep_k(const CategoricalDataset& ds, std::size_t k_min,
                              std::size_t k_max, const KModesConfig& cfg);

}  // namespace catmix
