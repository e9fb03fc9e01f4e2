#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "datamask/corpus.hpp"
#include "datamask/errors.hpp"
#include "datamask/masklearn.hpp"
#include "datamask/metrics.hpp"
#include "datamask/rng.hpp"

namespace datamask {

struct ClusterModel {
  std::uint32_t k = 0;
  std::uint32_t d = 0;
  std::vector<double> centers;          // k * d
  std::vector<std::uint32_t> assignment;  // per sample
  double inertia = 0.0;
};

namespace detail {

inline double sq_dist(const float* x, const double* c, std::uint32_t d) {
  double s = 0.0;
  for (std::uint32_t j = 0; j < d; ++j) {
    double diff = double(x[j]) - c[j];
    s += diff * diff;
  }
  return s;
}

}  // namespace detail

// Lloyd iterations with k-means++ seeding. Empty clusters are re-seeded from
// the point farthest from its current center.
inline ClusterModel kmeans(const EmbeddingMatrix& m, std::uint32_t k, std::uint32_t iters,
                           std::uint64_t seed) {
  if (k > m.n) throw ConfigError("kmeans: k exceeds sample count");
  if (k < 1 || iters < 1) throw ConfigError("kmeans: k and iters must be >= 1");
  ClusterModel model;
  model.k = k;
  model.d = m.d;
  model.centers.resize(std::size_t(k) * m.d);
  model.assignment.resize(m.n);

  auto rng = make_rng(seed, /*a=*/0x6b3a);

  // k-means++ seeding
  std::vector<double> min_dist(m.n, std::numeric_limits<double>::infinity());
  {
    std::uniform_int_distribution<std::uint64_t> first(0, m.n - 1);
    std::uint64_t c0 = first(rng);
    for (std::uint32_t j = 0; j < m.d; ++j) model.centers[j] = m.row(c0)[j];
    for (std::uint32_t c = 1; c < k; ++c) {
      const double* prev = model.centers.data() + std::size_t(c - 1) * m.d;
      double total = 0.0;
      for (std::uint64_t i = 0; i < m.n; ++i) {
        min_dist[i] = std::min(min_dist[i], detail::sq_dist(m.row(i), prev, m.d));
        total += min_dist[i];
      }
      std::uint64_t chosen = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng), run = 0.0;
        for (std::uint64_t i = 0; i < m.n; ++i) {
          run += min_dist[i];
          if (run >= target) { chosen = i; break; }
        }
      } else {
        std::uniform_int_distribution<std::uint64_t> any(0, m.n - 1);
        chosen = any(rng);
      }
      double* dst = model.centers.data() + std::size_t(c) * m.d;
      for (std::uint32_t j = 0; j < m.d; ++j) dst[j] = m.row(chosen)[j];
    }
  }

  std::vector<double> new_centers(model.centers.size());
  std::vector<std::uint64_t> counts(k);
  for (std::uint32_t it = 0; it < iters; ++it) {
    // assignment
    model.inertia = 0.0;
    for (std::uint64_t i = 0; i < m.n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::uint32_t c = 0; c < k; ++c) {
        double d2 = detail::sq_dist(m.row(i), model.centers.data() + std::size_t(c) * m.d, m.d);
        if (d2 < best) { best = d2; arg = c; }
      }
      model.assignment[i] = arg;
      model.inertia += best;
    }
    // center update (ordered reduction)
    std::fill(new_centers.begin(), new_centers.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::uint64_t i = 0; i < m.n; ++i) {
      double* dst = new_centers.data() + std::size_t(model.assignment[i]) * m.d;
      const float* r = m.row(i);
      for (std::uint32_t j = 0; j < m.d; ++j) dst[j] += r[j];
      ++counts[model.assignment[i]];
    }
    for (std::uint32_t c = 0; c < k; ++c) {
      double* dst = new_centers.data() + std::size_t(c) * m.d;
      if (counts[c] > 0) {
        for (std::uint32_t j = 0; j < m.d; ++j) dst[j] /= double(counts[c]);
      } else {
        // re-seed from the farthest point
        std::uint64_t far_idx = 0;
        double far_d = -1.0;
        for (std::uint64_t i = 0; i < m.n; ++i) {
          double d2 = detail::sq_dist(
              m.row(i), model.centers.data() + std::size_t(model.assignment[i]) * m.d, m.d);
          if (d2 > far_d) { far_d = d2; far_idx = i; }
        }
        for (std::uint32_t j = 0; j < m.d; ++j) dst[j] = m.row(far_idx)[j];
      }
    }
    double movement = 0.0;
    for (std::size_t i = 0; i < model.centers.size(); ++i) {
      double diff = new_centers[i] - model.centers[i];
      movement += diff * diff;
    }
    model.centers = new_centers;
    if (std::sqrt(movement) < 1e-6) break;
  }

  // final assignment against the converged centers
  model.inertia = 0.0;
  for (std::uint64_t i = 0; i < m.n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::uint32_t c = 0; c < k; ++c) {
      double d2 = detail::sq_dist(m.row(i), model.centers.data() + std::size_t(c) * m.d, m.d);
      if (d2 < best) { best = d2; arg = c; }
    }
    model.assignment[i] = arg;
    model.inertia += best;
  }
  return model;
}

struct HeatmapRow {
  std::uint32_t cluster_id = 0;
  std::uint64_t size = 0;
  double mean_quality = 0.0;  // NaN when the cluster is empty
  double diversity = 0.0;     // NaN when the cluster is empty
};

inline std::vector<HeatmapRow> cluster_heatmap(const ClusterModel& model,
                                               const QualityTable& q,
                                               const EmbeddingMatrix& m,
                                               DiversityKind metric,
                                               const KernelCache* cache = nullptr) {
  std::vector<std::vector<std::uint64_t>> members(model.k);
  for (std::uint64_t i = 0; i < model.assignment.size(); ++i)
    members[model.assignment[i]].push_back(i);

  std::vector<HeatmapRow> rows;
  rows.reserve(model.k);
  for (std::uint32_t c = 0; c < model.k; ++c) {
    HeatmapRow r;
    r.cluster_id = c;
    r.size = members[c].size();
    if (members[c].empty()) {
      r.mean_quality = std::numeric_limits<double>::quiet_NaN();
      r.diversity = std::numeric_limits<double>::quiet_NaN();
    } else {
      r.mean_quality = quality_metric(members[c], q);
      switch (metric) {
        case DiversityKind::pws: r.diversity = pws_metric(members[c], m); break;
        case DiversityKind::disf: r.diversity = disf_metric(members[c], m, m.n); break;
        case DiversityKind::fl_sum:
          if (!cache) throw ConfigError("cluster_heatmap: fl_sum needs a kernel cache");
          r.diversity = fl_sum_metric(members[c], *cache);
          break;
        case DiversityKind::fl_max:
          if (!cache) throw ConfigError("cluster_heatmap: fl_max needs a kernel cache");
          r.diversity = fl_max_metric(members[c], *cache);
          break;
        case DiversityKind::none:
          r.diversity = std::numeric_limits<double>::quiet_NaN();
          break;
      }
    }
    rows.push_back(r);
  }
  return rows;
}

inline void write_heatmap(const std::vector<HeatmapRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "cluster_id,size,mean_quality,diversity\n";
  for (const auto& r : rows) {
    out << r.cluster_id << ',' << r.size << ',';
    if (r.size > 0)
      out << csv::format_value(r.mean_quality) << ',' << csv::format_value(r.diversity);
    else
      out << ',';
    out << '\n';
  }
  if (!out) throw IoError("write failure on " + path);
}

struct LengthSummary {
  double mean = 0.0;
  double median = 0.0;
  std::array<double, 9> deciles{};  // 10%..90%
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  double pos = p * double(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - double(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

inline LengthSummary summarize(std::vector<double> values) {
  if (values.empty()) throw ConfigError("selection_stats: empty length list");
  LengthSummary s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  std::sort(values.begin(), values.end());
  s.median = quantile_sorted(values, 0.5);
  for (int i = 1; i <= 9; ++i) s.deciles[i - 1] = quantile_sorted(values, i / 10.0);
  return s;
}

}  // namespace detail

struct SelectionStats {
  LengthSummary selected;
  LengthSummary corpus;
};

inline SelectionStats selection_stats(std::span<const std::uint64_t> selected,
                                      std::span<const double> lengths) {
  std::vector<double> sel;
  sel.reserve(selected.size());
  for (auto i : selected) {
    if (i >= lengths.size())
      throw ConfigError("selection_stats: missing length for index " + std::to_string(i));
    sel.push_back(lengths[i]);
  }
  SelectionStats st;
  st.selected = detail::summarize(std::move(sel));
  st.corpus = detail::summarize(std::vector<double>(lengths.begin(), lengths.end()));
  return st;
}

inline void write_selection_stats(const SelectionStats& st, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "stat,selected,corpus\n";
  out << "mean," << csv::format_value(st.selected.mean) << ','
      << csv::format_value(st.corpus.mean) << '\n';
  out << "median," << csv::format_value(st.selected.median) << ','
      << csv::format_value(st.corpus.median) << '\n';
  for (int i = 0; i < 9; ++i)
    out << "decile_" << (i + 1) * 10 << ',' << csv::format_value(st.selected.deciles[i]) << ','
        << csv::format_value(st.corpus.deciles[i]) << '\n';
  if (!out) throw IoError("write failure on " + path);
}

struct VarianceReport {
  // variance[0] is the vanilla single-sample estimator; variance[1+i]
  // corresponds to group_sizes[i].
  std::vector<std::uint64_t> group_sizes;
  std::vector<std::vector<double>> variance;
  std::vector<std::vector<double>> mean_gradient;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  std::vector<double> phi;  // per group size, from the observed mu/sigma
};

// Empirical per-coordinate variance of the vanilla estimator f * grad(ln P)
// versus the group-relative estimator, over independent repetitions.
inline VarianceReport estimator_variance_probe(const Logits& logits,
                                               const ObjectiveEvaluator& eval,
                                               std::uint64_t budget,
                                               std::span<const std::uint64_t> group_sizes,
                                               std::uint64_t repetitions,
                                               std::uint64_t seed) {
  if (repetitions < 100) throw ConfigError("estimator_variance_probe needs >= 100 repetitions");
  const std::size_t n = logits.size();
  VarianceReport rep;
  rep.group_sizes.assign(group_sizes.begin(), group_sizes.end());
  const std::size_t n_est = 1 + group_sizes.size();
  std::vector<std::vector<double>> sum(n_est, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> sum_sq(n_est, std::vector<double>(n, 0.0));

  double reward_sum = 0.0, reward_sq = 0.0;
  std::uint64_t reward_count = 0;
  std::vector<std::uint64_t> global(budget);

  auto draw = [&](std::mt19937_64& rng) {
    MaskSample s = sample_mask(logits.values, budget, rng);
    for (std::size_t i = 0; i < budget; ++i) global[i] = logits.candidate_map[s.order[i]];
    s.reward = eval(global);
    reward_sum += s.reward;
    reward_sq += s.reward * s.reward;
    ++reward_count;
    return s;
  };

  for (std::uint64_t r = 0; r < repetitions; ++r) {
    {  // vanilla: single sample, no baseline
      auto rng = make_rng(seed, r + 1, 0);
      auto s = draw(rng);
      auto g = grad_order_log_prob(logits.values, s.order);
      for (std::size_t i = 0; i < n; ++i) {
        double v = s.reward * g[i];
        sum[0][i] += v;
        sum_sq[0][i] += v * v;
      }
    }
    for (std::size_t gi = 0; gi < group_sizes.size(); ++gi) {
      auto rng = make_rng(seed, r + 1, gi + 1);
      std::vector<MaskSample> group(group_sizes[gi]);
      for (auto& s : group) s = draw(rng);
      auto g = group_relative_gradient(group, logits.values);
      for (std::size_t i = 0; i < n; ++i) {
        sum[1 + gi][i] += g[i];
        sum_sq[1 + gi][i] += g[i] * g[i];
      }
    }
  }

  rep.variance.resize(n_est);
  rep.mean_gradient.resize(n_est);
  for (std::size_t e = 0; e < n_est; ++e) {
    rep.variance[e].resize(n);
    rep.mean_gradient[e].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double mean = sum[e][i] / double(repetitions);
      rep.mean_gradient[e][i] = mean;
      rep.variance[e][i] = std::max(sum_sq[e][i] / double(repetitions) - mean * mean, 0.0);
    }
  }
  rep.reward_mean = reward_sum / double(reward_count);
  rep.reward_std = std::sqrt(
      std::max(reward_sq / double(reward_count) - rep.reward_mean * rep.reward_mean, 0.0));
  for (auto g : group_sizes)
    rep.phi.push_back(rep.reward_std > 0.0
                          ? variance_reduction_probability(rep.reward_mean, rep.reward_std, g)
                          : 1.0);
  return rep;
}

inline void write_variance_report(const VarianceReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "estimator,G,coordinate,variance\n";
  for (std::size_t i = 0; i < rep.variance[0].size(); ++i)
    out << "vanilla,1," << i << ',' << csv::format_value(rep.variance[0][i]) << '\n';
  for (std::size_t e = 0; e < rep.group_sizes.size(); ++e)
    for (std::size_t i = 0; i < rep.variance[1 + e].size(); ++i)
      out << "group_relative," << rep.group_sizes[e] << ',' << i << ','
          << csv::format_value(rep.variance[1 + e][i]) << '\n';
  if (!out) throw IoError("write failure on " + path);
}

}  // namespace datamask
