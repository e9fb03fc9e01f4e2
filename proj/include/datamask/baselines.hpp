#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "datamask/analysis.hpp"
#include "datamask/corpus.hpp"
#include "datamask/errors.hpp"
#include "datamask/metrics.hpp"

namespace datamask {

inline std::uint64_t binomial_or_cap(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    if (c > cap) return cap + 1;  // early bail-out keeps the product small
    c = c * (n - k + i) / i;      // exact: every prefix is itself a binomial
  }
  return c;
}

struct ExhaustiveResult {
  std::vector<std::uint64_t> selected;
  double value = -std::numeric_limits<double>::infinity();
};

// Enumerates every budget-sized subset of the candidates in lexicographic
// order; ties keep the first (lexicographically smallest) subset.
inline ExhaustiveResult exhaustive_optimum(std::span<const std::uint64_t> candidates,
                                           std::uint64_t budget,
                                           const ObjectiveEvaluator& eval,
                                           std::uint64_t cap = 1000000) {
  const std::uint64_t n = candidates.size();
  if (budget > n) throw ConfigError("exhaustive_optimum: budget exceeds candidates");
  if (binomial_or_cap(n, budget, cap) > cap)
    throw ConfigError("exhaustive_optimum: combinatorial budget exceeded (C(n,S) > " +
                      std::to_string(cap) + ")");
  std::vector<std::uint64_t> comb(budget);
  std::iota(comb.begin(), comb.end(), 0);
  std::vector<std::uint64_t> subset(budget);
  ExhaustiveResult best;
  while (true) {
    for (std::uint64_t i = 0; i < budget; ++i) subset[i] = candidates[comb[i]];
    double v = eval(subset);
    if (v > best.value) {
      best.value = v;
      best.selected = subset;
    }
    // advance to the next lexicographic combination
    std::int64_t i = std::int64_t(budget) - 1;
    while (i >= 0 && comb[i] == n - budget + std::uint64_t(i)) --i;
    if (i < 0) break;
    ++comb[i];
    for (std::uint64_t j = std::uint64_t(i) + 1; j < budget; ++j) comb[j] = comb[j - 1] + 1;
  }
  return best;
}

struct GreedyResult {
  std::vector<std::uint64_t> selected;      // ascending
  std::vector<std::uint64_t> pick_order;    // in greedy pick order
  std::vector<double> value_trajectory;     // metric value after each pick
};

namespace detail {

inline double dot_rows(const EmbeddingMatrix& m, std::uint64_t a, std::uint64_t b) {
  double s = 0.0;
  const float *x = m.row(a), *y = m.row(b);
  for (std::uint32_t k = 0; k < m.d; ++k) s += double(x[k]) * double(y[k]);
  return s;
}

// fl_sum is modular: the optimum is exactly the top-S column sums.
inline GreedyResult greedy_fl_sum(std::uint64_t budget, const KernelCache& cache) {
  std::vector<std::uint64_t> idx(cache.n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::uint64_t a, std::uint64_t b) {
    if (cache.column_sums[a] != cache.column_sums[b])
      return cache.column_sums[a] > cache.column_sums[b];
    return a < b;
  });
  GreedyResult r;
  double running = 0.0;
  for (std::uint64_t s = 0; s < budget; ++s) {
    r.pick_order.push_back(idx[s]);
    running += cache.column_sums[idx[s]];
    r.value_trajectory.push_back(running / (2.0 * double(cache.n) * double(s + 1)));
  }
  r.selected = r.pick_order;
  std::sort(r.selected.begin(), r.selected.end());
  return r;
}

inline GreedyResult greedy_pws(std::uint64_t budget, const EmbeddingMatrix& m) {
  const std::uint64_t n = m.n;
  // similarity-to-chosen accumulator per candidate
  std::vector<double> sim_sum(n, 0.0);
  std::vector<bool> taken(n, false);
  GreedyResult r;
  double pair_mass = 0.0;  // sum over all pairs incl. diagonal
  for (std::uint64_t s = 0; s < budget; ++s) {
    std::uint64_t best = n;
    double best_inc = std::numeric_limits<double>::infinity();
    for (std::uint64_t c = 0; c < n; ++c) {
      if (taken[c]) continue;
      // adding c increases the double sum by 2*sim_sum[c] + K(z_c, z_c);
      // the self term is kept explicit so float32 rows audit exactly
      double inc = 2.0 * sim_sum[c] + dot_rows(m, c, c);
      if (inc < best_inc) { best_inc = inc; best = c; }
    }
    taken[best] = true;
    pair_mass += best_inc;
    r.pick_order.push_back(best);
    r.value_trajectory.push_back(-pair_mass / (2.0 * double(s + 1) * double(s + 1)));
    for (std::uint64_t c = 0; c < n; ++c)
      if (!taken[c]) sim_sum[c] += dot_rows(m, c, best);
  }
  r.selected = r.pick_order;
  std::sort(r.selected.begin(), r.selected.end());
  return r;
}

// Lazy greedy (stale-gain priority queue) for the max-coverage form.
inline GreedyResult greedy_fl_max(std::uint64_t budget, const KernelCache& cache) {
  const std::uint64_t n = cache.n;
  // coverage starts at the cosine lower bound -1, which keeps every marginal
  // gain nonnegative and non-increasing; stale queue entries then remain
  // valid upper bounds even when similarities are negative.
  std::vector<double> coverage(n, -1.0);
  auto gain_of = [&](std::uint64_t c) {
    double g = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      double s = cache.sim(i, c);
      if (s > coverage[i]) g += s - coverage[i];
    }
    return g;
  };

  struct Entry {
    double gain;
    std::uint64_t idx;
    std::uint64_t stamp;
    bool operator<(const Entry& o) const {
      if (gain != o.gain) return gain < o.gain;
      return idx > o.idx;  // ties resolve to the lowest index
    }
  };
  std::priority_queue<Entry> pq;
  for (std::uint64_t c = 0; c < n; ++c) pq.push({gain_of(c), c, 0});

  GreedyResult r;
  std::vector<bool> taken(n, false);
  double total_coverage = -double(n);  // sum of the -1 floors
  std::uint64_t step = 0;
  while (r.pick_order.size() < budget) {
    Entry top = pq.top();
    pq.pop();
    if (taken[top.idx]) continue;
    if (top.stamp != step) {
      top.gain = gain_of(top.idx);
      top.stamp = step;
      pq.push(top);
      continue;
    }
    taken[top.idx] = true;
    total_coverage += top.gain;
    for (std::uint64_t i = 0; i < n; ++i)
      coverage[i] = std::max(coverage[i], cache.sim(i, top.idx));
    r.pick_order.push_back(top.idx);
    r.value_trajectory.push_back(total_coverage / double(n));
    ++step;
  }
  r.selected = r.pick_order;
  std::sort(r.selected.begin(), r.selected.end());
  return r;
}

// Greedy DiSF: pick the candidate with the smallest increase of |A|_F^2,
// using |A + zz^T|_F^2 = |A|_F^2 + 2 z^T A z + |z|^4 and maintaining
// z_c^T A z_c incrementally.
inline GreedyResult greedy_disf(std::uint64_t budget, const EmbeddingMatrix& m,
                                std::uint64_t norm_n) {
  const std::uint64_t n = m.n;
  std::vector<double> zaz(n, 0.0);  // z_c^T A z_c for the running A
  std::vector<bool> taken(n, false);
  GreedyResult r;
  double fro_sq = 0.0;
  for (std::uint64_t s = 0; s < budget; ++s) {
    std::uint64_t best = n;
    double best_inc = std::numeric_limits<double>::infinity();
    for (std::uint64_t c = 0; c < n; ++c) {
      if (taken[c]) continue;
      double self = dot_rows(m, c, c);
      double inc = 2.0 * zaz[c] + self * self;
      if (inc < best_inc) { best_inc = inc; best = c; }
    }
    taken[best] = true;
    fro_sq += best_inc;
    r.pick_order.push_back(best);
    r.value_trajectory.push_back(-std::sqrt(fro_sq) / double(norm_n - 1));
    for (std::uint64_t c = 0; c < n; ++c) {
      if (taken[c]) continue;
      double dot = dot_rows(m, c, best);
      zaz[c] += dot * dot;
    }
  }
  r.selected = r.pick_order;
  std::sort(r.selected.begin(), r.selected.end());
  return r;
}

}  // namespace detail

inline GreedyResult greedy_select(DiversityKind kind, std::uint64_t budget,
                                  const EmbeddingMatrix& m, const KernelCache& cache,
                                  std::uint64_t disf_norm_n = 0) {
  if (budget > m.n) throw ConfigError("greedy_select: budget exceeds sample count");
  if (budget < 1) throw ConfigError("greedy_select: budget must be >= 1");
  switch (kind) {
    case DiversityKind::pws: return detail::greedy_pws(budget, m);
    case DiversityKind::fl_sum: return detail::greedy_fl_sum(budget, cache);
    case DiversityKind::fl_max: return detail::greedy_fl_max(budget, cache);
    case DiversityKind::disf:
      return detail::greedy_disf(budget, m, disf_norm_n ? disf_norm_n : m.n);
    case DiversityKind::none: break;
  }
  throw ConfigError("greedy_select: no diversity metric given");
}

inline std::vector<std::uint64_t> topk_quality(const QualityTable& q, std::uint64_t budget) {
  if (budget > q.n) throw ConfigError("topk_quality: budget exceeds sample count");
  std::vector<std::uint64_t> idx(q.n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::uint64_t a, std::uint64_t b) {
    if (q.composite[a] != q.composite[b]) return q.composite[a] > q.composite[b];
    return a < b;
  });
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Semdedup-style filter: k-means clusters, then within each cluster an
// ascending-index scan retains a point only if its cosine similarity to
// every already-retained point of the cluster stays <= threshold. If more
// than s_target points survive, the survivors with the lowest maximum
// intra-cluster similarity are kept.
inline std::vector<std::uint64_t> semdedup_filter(const EmbeddingMatrix& m,
                                                  std::uint32_t k_clusters, double threshold,
                                                  std::uint64_t s_target,
                                                  std::uint64_t seed = 0,
                                                  std::uint32_t kmeans_iters = 50) {
  if (!(threshold > -1.0) || threshold > 1.0)
    throw ConfigError("semdedup threshold must lie in (-1, 1]");
  if (k_clusters < 1) throw ConfigError("semdedup needs k_clusters >= 1");
  auto model = kmeans(m, std::min<std::uint32_t>(k_clusters, std::uint32_t(m.n)),
                      kmeans_iters, seed);

  std::vector<std::vector<std::uint64_t>> members(model.k);
  for (std::uint64_t i = 0; i < m.n; ++i) members[model.assignment[i]].push_back(i);

  struct Survivor {
    std::uint64_t idx;
    double max_sim;  // to other retained points of the same cluster
  };
  std::vector<Survivor> survivors;
  for (auto& cluster : members) {
    std::vector<std::uint64_t> retained;
    for (auto i : cluster) {  // members are already ascending
      bool ok = true;
      double worst = -1.0;
      for (auto rkept : retained) {
        double s = detail::dot_rows(m, i, rkept);
        worst = std::max(worst, s);
        if (s > threshold) { ok = false; break; }
      }
      if (ok) retained.push_back(i);
    }
    for (auto i : retained) {
      double worst = -1.0;
      for (auto j : retained)
        if (j != i) worst = std::max(worst, detail::dot_rows(m, i, j));
      survivors.push_back({i, worst});
    }
  }
  if (survivors.size() > s_target) {
    std::stable_sort(survivors.begin(), survivors.end(), [](const Survivor& a, const Survivor& b) {
      if (a.max_sim != b.max_sim) return a.max_sim < b.max_sim;
      return a.idx < b.idx;
    });
    survivors.resize(s_target);
  }
  std::vector<std::uint64_t> out;
  out.reserve(survivors.size());
  for (const auto& s : survivors) out.push_back(s.idx);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace datamask
