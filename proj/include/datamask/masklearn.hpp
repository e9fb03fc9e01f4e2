#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "datamask/corpus.hpp"
#include "datamask/errors.hpp"
#include "datamask/metrics.hpp"
#include "datamask/rng.hpp"

namespace datamask {

// Learnable per-candidate sampling logits over the active (post-pruning)
// candidate set. candidate_map translates active position -> global index.
struct Logits {
  std::vector<double> values;
  std::vector<std::uint64_t> candidate_map;

  std::size_t size() const { return values.size(); }
};

// One realized without-replacement draw: positions in draw order plus the
// log-probability of that order under the current logits.
struct MaskSample {
  std::vector<std::uint32_t> order;
  double log_prob = 0.0;
  double reward = 0.0;
};

struct OptimizerConfig {
  std::uint64_t budget = 1;
  std::uint64_t group_size = 128;
  double learning_rate = 10.0;
  std::uint64_t epochs = 1;
  double batch_ratio = 1.0;
  std::uint64_t seed = 0;
  double sigma_floor = 1e-8;

  enum class Init { uniform, quality_aware };
  Init init = Init::uniform;
  double l_min = -5.0;
  double l_max = 5.0;

  bool sample_final = false;  // literal stochastic final draw instead of top-S
  unsigned threads = 1;

  // Optional early stop for matched-target benchmarking: every
  // target_check_interval epochs the deterministic top-S selection is
  // scored and the run stops once it reaches target_value.
  double target_value = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t target_check_interval = 0;

  void validate() const {
    if (budget < 1) throw ConfigError("budget must be >= 1");
    if (group_size < 2) throw ConfigError("group size must be >= 2");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(batch_ratio > 0.0) || batch_ratio > 1.0)
      throw ConfigError("batch ratio must lie in (0,1]");
    if (!(l_min < l_max)) throw ConfigError("l_min must be < l_max");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning rate must be finite and >= 0");
  }
};

inline std::vector<double> softmax_probs(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

inline std::vector<double> softmax_probs(const Logits& l) {
  return softmax_probs(std::span<const double>(l.values));
}

// Draws S distinct positions via the Gumbel-top-S trick: standard Gumbel
// noise added to each logit, the S largest keys taken in descending order.
// The resulting order is distributed exactly as sequential softmax sampling
// without replacement (Plackett-Luce).
inline MaskSample sample_mask(std::span<const double> logits, std::uint64_t budget,
                              std::mt19937_64& rng) {
  const std::size_t n = logits.size();
  if (budget > n) throw ConfigError("budget exceeds candidate count");
  std::uniform_real_distribution<double> unit(std::numeric_limits<double>::min(), 1.0);
  std::vector<std::pair<double, std::uint32_t>> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    double g = -std::log(-std::log(unit(rng)));
    keys[i] = {logits[i] + g, static_cast<std::uint32_t>(i)};
  }
  auto mid = keys.begin() + static_cast<std::ptrdiff_t>(budget);
  std::partial_sort(keys.begin(), mid, keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  MaskSample s;
  s.order.reserve(budget);
  for (auto it = keys.begin(); it != mid; ++it) s.order.push_back(it->second);
  return s;
}

// Realized-order Plackett-Luce log-probability:
// sum_k [ ln p_{pi(k)} - ln(1 - sum_{m<k} p_{pi(m)}) ].
inline double order_log_prob(std::span<const double> logits,
                             std::span<const std::uint32_t> order) {
  auto p = softmax_probs(logits);
  double lp = 0.0, consumed = 0.0;
  for (auto idx : order) {
    double tail = 1.0 - consumed;
    if (tail < 1e-300)
      throw NumericError("order_log_prob: vanishing tail probability mass");
    lp += std::log(p[idx]) - std::log(tail);
    consumed += p[idx];
  }
  return lp;
}

// Analytic gradient of order_log_prob w.r.t. every logit. Writing
// C_k = sum_{m<k} p_{pi(m)} and r_k = 1/(1-C_k):
//   d/dL_i = -p_i (S + sum_k r_k C_k)
//            + [i == pi(m)] * (1 + p_i * sum_{k>m} r_k).
inline std::vector<double> grad_order_log_prob(std::span<const double> logits,
                                               std::span<const std::uint32_t> order) {
  auto p = softmax_probs(logits);
  const std::size_t s = order.size();
  std::vector<double> r(s);
  double consumed = 0.0, rc_total = 0.0;
  for (std::size_t k = 0; k < s; ++k) {
    double tail = 1.0 - consumed;
    if (tail < 1e-300)
      throw NumericError("grad_order_log_prob: vanishing tail probability mass");
    r[k] = 1.0 / tail;
    rc_total += r[k] * consumed;
    consumed += p[order[k]];
  }
  std::vector<double> grad(logits.size());
  const double dense = double(s) + rc_total;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = -p[i] * dense;
  double r_suffix = 0.0;  // sum_{k>m} r_k, built back-to-front
  for (std::size_t m = s; m-- > 0;) {
    grad[order[m]] += 1.0 + p[order[m]] * r_suffix;
    r_suffix += r[m];
  }
  return grad;
}

// Group-relative policy gradient: rewards standardized by the group mean and
// population standard deviation (floored), averaged over the group.
inline std::vector<double> group_relative_gradient(std::span<const MaskSample> samples,
                                                   std::span<const double> logits,
                                                   double sigma_floor = 1e-8) {
  if (samples.size() < 2) throw ConfigError("group gradient needs >= 2 samples");
  const double g = double(samples.size());
  double mu = 0.0;
  for (const auto& s : samples) mu += s.reward;
  mu /= g;
  double var = 0.0;
  for (const auto& s : samples) var += (s.reward - mu) * (s.reward - mu);
  double sigma = std::sqrt(var / g);

  std::vector<double> grad(logits.size(), 0.0);
  // a group whose spread sits at or under the floor is treated as constant;
  // standardizing it would amplify summation dust into full advantages
  if (sigma <= sigma_floor) return grad;
  for (const auto& s : samples) {
    double adv = (s.reward - mu) / sigma;
    if (adv == 0.0) continue;
    auto gj = grad_order_log_prob(logits, s.order);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += adv * gj[i];
  }
  for (auto& v : grad) v /= g;
  return grad;
}

// L' = L + eta * grad, re-centered to zero mean (softmax shift invariance).
inline void update_logits(Logits& l, std::span<const double> grad, double eta) {
  if (grad.size() != l.values.size()) throw ConfigError("gradient/logit shape mismatch");
  double mean = 0.0;
  for (std::size_t i = 0; i < l.values.size(); ++i) {
    l.values[i] += eta * grad[i];
    if (!std::isfinite(l.values[i]))
      throw NumericError("non-finite logit at index " + std::to_string(i));
    mean += l.values[i];
  }
  mean /= double(l.values.size());
  for (auto& v : l.values) v -= mean;
}

inline Logits uniform_init(std::span<const std::uint64_t> active) {
  Logits l;
  l.values.assign(active.size(), 0.0);
  l.candidate_map.assign(active.begin(), active.end());
  return l;
}

// logit_i = (composite_i - 0)/(15 - 0) * (l_max - l_min) + l_min.
inline Logits quality_init(const QualityTable& q, std::span<const std::uint64_t> active,
                           double l_min, double l_max) {
  if (!(l_min < l_max)) throw ConfigError("quality_init: l_min must be < l_max");
  Logits l;
  l.values.reserve(active.size());
  l.candidate_map.assign(active.begin(), active.end());
  for (auto idx : active)
    l.values.push_back(q.composite[idx] / 15.0 * (l_max - l_min) + l_min);
  return l;
}

struct TrajectoryRow {
  std::uint64_t epoch = 0;
  double mean_reward = 0.0;
  double best_reward = 0.0;
  double grad_norm = 0.0;
  double wallclock_ms = 0.0;
};

inline void write_trajectory(const std::vector<TrajectoryRow>& rows, const std::string& path) {
  csv::Table t;
  t.header = {"epoch", "mean_reward", "best_reward", "grad_norm", "wallclock_ms"};
  for (const auto& r : rows)
    t.rows.push_back({double(r.epoch), r.mean_reward, r.best_reward, r.grad_norm, r.wallclock_ms});
  csv::write_table(path, t);
}

// Logits checkpoint: same container discipline as the embedding file but
// with magic "DMLG", a float64 payload, and the epoch counter in the header.
inline void write_logits_checkpoint(const Logits& l, std::uint64_t epoch,
                                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("DMLG", 4);
  detail::write_le<std::uint32_t>(out, 1);
  detail::write_le<std::uint64_t>(out, l.values.size());
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(epoch));
  detail::write_le<std::uint32_t>(out, 0);
  out.write(reinterpret_cast<const char*>(l.values.data()),
            static_cast<std::streamsize>(l.values.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(l.candidate_map.data()),
            static_cast<std::streamsize>(l.candidate_map.size() * sizeof(std::uint64_t)));
  if (!out) throw IoError("write failure on " + path);
}

inline std::pair<Logits, std::uint64_t> read_logits_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  std::uint64_t offset = 4;
  if (in.gcount() != 4 || std::memcmp(magic, "DMLG", 4) != 0)
    throw IoError(path + ": bad magic at byte offset 0");
  auto version = detail::read_le<std::uint32_t>(in, offset, path);
  if (version != 1) throw IoError(path + ": unsupported version");
  auto n = detail::read_le<std::uint64_t>(in, offset, path);
  auto epoch = detail::read_le<std::uint32_t>(in, offset, path);
  detail::read_le<std::uint32_t>(in, offset, path);  // flags, reserved
  Logits l;
  l.values.resize(n);
  l.candidate_map.resize(n);
  in.read(reinterpret_cast<char*>(l.values.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
    throw IoError(path + ": truncated payload at byte offset " + std::to_string(offset));
  in.read(reinterpret_cast<char*>(l.candidate_map.data()),
          static_cast<std::streamsize>(n * sizeof(std::uint64_t)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(std::uint64_t)))
    throw IoError(path + ": truncated candidate map");
  return {std::move(l), epoch};
}

// Deterministic final extraction: top-S positions by logit value, ties by
// ascending global index.
inline std::vector<std::uint64_t> extract_top_budget(const Logits& l, std::uint64_t budget) {
  std::vector<std::uint32_t> pos(l.size());
  std::iota(pos.begin(), pos.end(), 0);
  auto mid = pos.begin() + static_cast<std::ptrdiff_t>(budget);
  std::partial_sort(pos.begin(), mid, pos.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (l.values[a] != l.values[b]) return l.values[a] > l.values[b];
    return l.candidate_map[a] < l.candidate_map[b];
  });
  std::vector<std::uint64_t> sel;
  sel.reserve(budget);
  for (auto it = pos.begin(); it != mid; ++it) sel.push_back(l.candidate_map[*it]);
  std::sort(sel.begin(), sel.end());
  return sel;
}

struct RunResult {
  SelectionResult selection;
  std::vector<TrajectoryRow> trajectory;
  Logits final_logits;
  std::uint64_t epochs_run = 0;
};

namespace detail {

inline void rollout_range(std::span<const double> logits,
                          std::span<const std::uint32_t> universe,
                          std::span<const std::uint64_t> candidate_map,
                          const ObjectiveEvaluator& eval, std::uint64_t budget,
                          std::uint64_t seed, std::uint64_t epoch, std::size_t begin,
                          std::size_t end, std::span<MaskSample> out) {
  std::vector<std::uint64_t> global;
  global.reserve(budget);
  for (std::size_t j = begin; j < end; ++j) {
    auto rng = make_rng(seed, epoch + 1, j + 1);
    out[j] = sample_mask(logits, budget, rng);
    global.clear();
    for (auto pos : out[j].order) global.push_back(candidate_map[universe[pos]]);
    out[j].reward = eval(global);
    if (!std::isfinite(out[j].reward))
      throw NumericError("non-finite reward at epoch " + std::to_string(epoch) +
                         ", rollout " + std::to_string(j));
  }
}

}  // namespace detail

// Algorithm: E epochs of G parallel rollouts over a frozen logits snapshot,
// group-relative policy-gradient update, deterministic top-S extraction.
// With batch_ratio < 1 each epoch restricts sampling and the update to a
// fresh random candidate subset with a proportionally scaled budget.
inline RunResult run_datamask(const Logits& init, const ObjectiveEvaluator& eval,
                              const OptimizerConfig& cfg) {
  cfg.validate();
  const std::size_t n_active = init.size();
  if (cfg.budget > n_active) throw ConfigError("budget exceeds active candidate count");

  Logits logits = init;
  RunResult result;
  result.trajectory.reserve(cfg.epochs);
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::uint32_t> all_positions(n_active);
  std::iota(all_positions.begin(), all_positions.end(), 0);

  std::vector<MaskSample> group(cfg.group_size);
  std::uint64_t epochs_run = 0;

  for (std::uint64_t t = 0; t < cfg.epochs; ++t) {
    // Epoch universe B and its proportional budget.
    std::vector<std::uint32_t> universe;
    std::uint64_t epoch_budget = cfg.budget;
    if (cfg.batch_ratio < 1.0) {
      auto b = static_cast<std::size_t>(std::ceil(cfg.batch_ratio * double(n_active)));
      b = std::max<std::size_t>(b, 1);
      universe = all_positions;
      auto urng = make_rng(cfg.seed, t + 1, 0);
      for (std::size_t i = 0; i < b; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, universe.size() - 1);
        std::swap(universe[i], universe[pick(urng)]);
      }
      universe.resize(b);
      epoch_budget = std::max<std::uint64_t>(
          1, static_cast<std::uint64_t>(std::llround(cfg.batch_ratio * double(cfg.budget))));
      epoch_budget = std::min<std::uint64_t>(epoch_budget, b);
    }
    const std::span<const std::uint32_t> uni =
        cfg.batch_ratio < 1.0 ? std::span<const std::uint32_t>(universe)
                              : std::span<const std::uint32_t>(all_positions);

    std::vector<double> sub_logits(uni.size());
    for (std::size_t i = 0; i < uni.size(); ++i) sub_logits[i] = logits.values[uni[i]];

    const unsigned threads = std::max(1u, cfg.threads);
    if (threads == 1 || cfg.group_size < 2 * threads) {
      detail::rollout_range(sub_logits, uni, logits.candidate_map, eval, epoch_budget,
                            cfg.seed, t, 0, cfg.group_size, group);
    } else {
      std::vector<std::thread> pool;
      std::size_t chunk = (cfg.group_size + threads - 1) / threads;
      std::exception_ptr first_error;
      std::mutex err_mutex;
      for (unsigned w = 0; w < threads; ++w) {
        std::size_t b = w * chunk, e = std::min<std::size_t>(b + chunk, cfg.group_size);
        if (b >= e) break;
        pool.emplace_back([&, b, e] {
          try {
            detail::rollout_range(sub_logits, uni, logits.candidate_map, eval, epoch_budget,
                                  cfg.seed, t, b, e, group);
          } catch (...) {
            std::lock_guard lock(err_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      if (first_error) std::rethrow_exception(first_error);
    }

    auto grad = group_relative_gradient(group, sub_logits, cfg.sigma_floor);

    // Scatter the restricted gradient back onto the full logit vector.
    std::vector<double> full_grad;
    const std::vector<double>* gptr = &grad;
    if (uni.size() != n_active) {
      full_grad.assign(n_active, 0.0);
      for (std::size_t i = 0; i < uni.size(); ++i) full_grad[uni[i]] = grad[i];
      gptr = &full_grad;
    }
    update_logits(logits, *gptr, cfg.learning_rate);

    TrajectoryRow row;
    row.epoch = t;
    row.best_reward = group.front().reward;
    for (const auto& s : group) {
      row.mean_reward += s.reward;
      row.best_reward = std::max(row.best_reward, s.reward);
    }
    row.mean_reward /= double(cfg.group_size);
    double gn = 0.0;
    for (double v : grad) gn += v * v;
    row.grad_norm = std::sqrt(gn);
    row.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.trajectory.push_back(row);
    epochs_run = t + 1;

    if (cfg.target_check_interval > 0 && std::isfinite(cfg.target_value) &&
        (t + 1) % cfg.target_check_interval == 0) {
      auto sel = extract_top_budget(logits, cfg.budget);
      if (eval(sel) >= cfg.target_value) break;
    }
  }

  std::vector<std::uint64_t> selected;
  if (cfg.sample_final) {
    auto rng = make_rng(cfg.seed, cfg.epochs + 1, 0xF17A1);
    auto final_mask = sample_mask(logits.values, cfg.budget, rng);
    for (auto pos : final_mask.order) selected.push_back(logits.candidate_map[pos]);
    std::sort(selected.begin(), selected.end());
  } else {
    selected = extract_top_budget(logits, cfg.budget);
  }

  result.selection.selected = std::move(selected);
  result.selection.budget = cfg.budget;
  result.selection.seed = cfg.seed;
  result.selection.epochs = epochs_run;
  result.selection.lambda = eval.spec().lambda;
  result.selection.method = "datamask";
  result.selection.achieved["objective"] = eval(result.selection.selected);
  result.final_logits = std::move(logits);
  result.epochs_run = epochs_run;
  return result;
}

struct ProbeReport {
  std::vector<double> mean;
  std::vector<double> standard_error;
};

// Monte-Carlo mean of the score function over independent masks; the
// expectation is identically zero for any logit setting.
inline ProbeReport score_function_probe(std::span<const double> logits, std::uint64_t budget,
                                        std::uint64_t trials, std::uint64_t seed) {
  if (trials < 1000) throw ConfigError("score_function_probe needs >= 1000 trials");
  const std::size_t n = logits.size();
  std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
  for (std::uint64_t t = 0; t < trials; ++t) {
    auto rng = make_rng(seed, t + 1, 0x9b0be);
    auto mask = sample_mask(logits, budget, rng);
    auto g = grad_order_log_prob(logits, mask.order);
    for (std::size_t i = 0; i < n; ++i) {
      sum[i] += g[i];
      sum_sq[i] += g[i] * g[i];
    }
  }
  ProbeReport rep;
  rep.mean.resize(n);
  rep.standard_error.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rep.mean[i] = sum[i] / double(trials);
    double var = sum_sq[i] / double(trials) - rep.mean[i] * rep.mean[i];
    rep.standard_error[i] = std::sqrt(std::max(var, 0.0) / double(trials));
  }
  return rep;
}

// Phi(mu * sqrt(G) / (2 sigma)), the probability that the group-relative
// update has lower variance than the vanilla estimator under the Gaussian
// reward model.
inline double variance_reduction_probability(double mu, double sigma, std::uint64_t g) {
  if (!(sigma > 0.0)) throw ConfigError("variance_reduction_probability: sigma must be > 0");
  if (g < 1) throw ConfigError("variance_reduction_probability: G must be >= 1");
  double x = mu * std::sqrt(double(g)) / (2.0 * sigma);
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

}  // namespace datamask
