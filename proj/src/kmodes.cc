// Apache License, Version 2.0, refer to LICENSE.txt

#include "catmix/kmodes.hh"

#include <algorithm>
#include <limits>
#include <numeric>

#include "catmix/errors.hh"
#include "catmix/parallel.hh"
#include "catmix/random.hh"

namespace catmix {

namespace {

constexpr std::uint64_t kKModesStream = 0x6b6d6f646573ULL;
constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();

void update_modes(const CategoricalDataset& ds, const std::vector<std::size_t>& labels,
                  std::size_t k, std::vector<std::uint8_t>& centroids) {
  const std::size_t j = ds.j();
  std::vector<std::size_t> ones(k * j, 0);
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto c = labels[i];
    ++sizes[c];
    for (std::size_t v = 0; v < j; ++v) ones[c * j + v] += ds.at(i, v);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] == 0) continue;
    for (std::size_t v = 0; v < j; ++v)
      centroids[c * j + v] = 2 * ones[c * j + v] >= sizes[c] ? 1 : 0;
  }
}

KModesModel run_restart(const CategoricalDataset& ds, std::size_t k,
                        std::size_t max_iter, Rng& rng,
                        const std::vector<std::size_t>& distinct_rows) {
  const std::size_t n = ds.n();
  const std::size_t j = ds.j();

  // Partial Fisher-Yates over the candidate seed rows.
  std::vector<std::size_t> pool;
  if (distinct_rows.size() >= k) {
    pool = distinct_rows;
  } else {
    pool.resize(n);
    std::iota(pool.begin(), pool.end(), 0);
  }
  for (std::size_t c = 0; c < k; ++c) {
    const auto pick = c + uniform_index(rng, pool.size() - c);
    std::swap(pool[c], pool[pick]);
  }

  KModesModel m;
  m.k = k;
  m.j = j;
  m.centroids.resize(k * j);
  for (std::size_t c = 0; c < k; ++c) {
    auto r = ds.row(pool[c]);
    std::copy(r.begin(), r.end(), m.centroids.begin() + c * j);
  }
  m.assignment.assign(n, kUnassigned);

  std::vector<std::size_t> dist(k);
  std::vector<std::size_t> sizes(k);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    std::vector<std::size_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 0; c < k; ++c) {
        dist[c] = simple_matching_distance(ds.row(i), m.centroid(c));
        if (dist[c] < dist[best]) best = c;
      }
      const auto cur = m.assignment[i];
      next[i] = (cur != kUnassigned && dist[cur] == dist[best]) ? cur : best;
    }

    std::fill(sizes.begin(), sizes.end(), 0);
    for (auto c : next) ++sizes[c];
    for (std::size_t empty = 0; empty < k; ++empty) {
      if (sizes[empty] != 0) continue;
      std::size_t far = kUnassigned;
      std::size_t far_d = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[next[i]] < 2) continue;
        const auto d = simple_matching_distance(ds.row(i), m.centroid(next[i]));
        if (far == kUnassigned || d > far_d) {
          far = i;
          far_d = d;
        }
      }
      --sizes[next[far]];
      next[far] = empty;
      sizes[empty] = 1;
    }

    const bool changed = next != m.assignment;
    m.assignment = std::move(next);
    update_modes(ds, m.assignment, k, m.centroids);

    std::size_t cost = 0;
    for (std::size_t i = 0; i < n; ++i)
      cost += simple_matching_distance(ds.row(i), m.centroid(m.assignment[i]));
    m.cost = cost;
    m.cost_trace.push_back(cost);
    m.iterations = it;
    if (!changed) {
      m.converged = true;
      break;
    }
  }
  return m;
}

}  // namespace

std::size_t simple_matching_distance(std::span<const std::uint8_t> a,
                                     std::span<const std::uint8_t> b) {
  if (a.size() != b.size())
    throw InputError("simple_matching_distance: length mismatch (" +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  std::size_t d = 0;
  for (std::size_t v = 0; v < a.size(); ++v) d += a[v] != b[v];
  return d;
}

std::vector<std::size_t> KModesModel::sizes() const {
  std::vector<std::size_t> s(k, 0);
  for (auto c : assignment) ++s[c];
  return s;
}

KModesModel fit_kmodes(const CategoricalDataset& ds, const KModesConfig& cfg) {
  if (cfg.k < 1) throw InputError("k-modes: k must be at least 1");
  if (cfg.k > ds.n())
    throw InputError("k-modes: k = " + std::to_string(cfg.k) +
                     " exceeds the number of observations N = " + std::to_string(ds.n()));
  if (cfg.max_iter < 1) throw InputError("k-modes: max_iter must be at least 1");
  const std::size_t restarts = std::max<std::size_t>(1, cfg.n_restarts);

  const auto table = collapse_patterns(ds);
  std::vector<std::size_t> distinct_rows(table.size(), kUnassigned);
  for (std::size_t i = 0; i < ds.n(); ++i)
    if (distinct_rows[table.row_pattern[i]] == kUnassigned)
      distinct_rows[table.row_pattern[i]] = i;

  std::vector<KModesModel> fits(restarts);
  parallel_for(restarts, [&](std::size_t r) {
    auto rng = make_rng(derive_seed(cfg.seed, kKModesStream, r));
    fits[r] = run_restart(ds, cfg.k, cfg.max_iter, rng, distinct_rows);
    fits[r].best_restart = r;
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r)
    if (fits[r].cost < fits[best].cost) best = r;
  return std::move(fits[best]);
}

std::vector<std::uint8_t> cluster_mode(const CategoricalDataset& ds,
                                       std::span<const std::size_t> members) {
  std::vector<std::uint8_t> mode(ds.j(), 0);
  if (members.empty()) return mode;
  for (std::size_t v = 0; v < ds.j(); ++v) {
    std::size_t ones = 0;
    for (auto i : members) ones += ds.at(i, v);
    mode[v] = 2 * ones >= members.size() ? 1 : 0;
  }
  return mode;
}

std::size_t total_within_cluster_dissimilarity(const KModesModel& model,
                                               const CategoricalDataset& ds) {
  if (model.assignment.size() != ds.n() || model.j != ds.j())
    throw InputError("k-modes model does not match dataset shape");
  std::vector<std::vector<std::size_t>> members(model.k);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (model.assignment[i] >= model.k)
      throw InputError("k-modes assignment label out of range");
    members[model.assignment[i]].push_back(i);
  }
  std::size_t total = 0;
  for (const auto& mem : members) {
    const auto mode = cluster_mode(ds, mem);
    for (auto i : mem) total += simple_matching_distance(ds.row(i), mode);
  }
  return total;
}

Silhouette silhouette_width(std::span<const std::size_t> labels,
                            const CategoricalDataset& ds) {
  if (labels.size() != ds.n()) throw InputError("silhouette: label count differs from N");
  std::size_t k = 0;
  for (auto l : labels) k = std::max(k, l + 1);
  std::vector<std::size_t> sizes(k, 0);
  for (auto l : labels) ++sizes[l];
  const auto occupied = std::count_if(sizes.begin(), sizes.end(),
                                      [](std::size_t s) { return s > 0; });
  if (occupied < 2) throw InputError("silhouette: needs at least 2 non-empty clusters");

  Silhouette out;
  out.scores.assign(ds.n(), 0.0);
  std::vector<double> sum(k);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto own = labels[i];
    if (sizes[own] < 2) continue;
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t o = 0; o < ds.n(); ++o)
      if (o != i) sum[labels[o]] += static_cast<double>(simple_matching_distance(ds.row(i), ds.row(o)));
    const double a = sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, sum[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    out.scores[i] = denom > 0 ? (b - a) / denom : 0.0;
  }
  double total = 0;
  for (double s : out.scores) total += s;
  out.mean = total / static_cast<double>(ds.n());
  return out;
}

Silhouette silhouette_width(const KModesModel& model, const CategoricalDataset& ds) {
  if (model.k < 2) throw InputError("silhouette: needs k >= 2");
  return silhouette_width(model.assignment, ds);
}

std::vector<SweepRow> sweep_k(const CategoricalDataset& ds, std::size_t k_min,
                              std::size_t k_max, const KModesConfig& cfg) {
  if (k_min < 1 || k_min > k_max) throw InputError("sweep_k: empty k range");
  if (k_max > ds.n())
    throw InputError("sweep_k: k_max = " + std::to_string(k_max) + " exceeds N = " +
                     std::to_string(ds.n()));
  std::vector<SweepRow> rows;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    auto c = cfg;
    c.k = k;
    const auto model = fit_kmodes(ds, c);
    SweepRow row{k, model.cost, std::nullopt};
    if (k >= 2) {
      const auto sizes = model.sizes();
      if (std::count_if(sizes.begin(), sizes.end(), [](auto s) { return s > 0; }) >= 2)
        row.silhouette = silhouette_width(model, ds).mean;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace catmix
