#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "datamask/corpus.hpp"
#include "datamask/errors.hpp"
#include "datamask/rng.hpp"

namespace datamask {

enum class DiversityKind { pws, fl_sum, fl_max, disf, none };
enum class QualityKind { composite, none };

inline DiversityKind parse_diversity(const std::string& s) {
  if (s == "pws") return DiversityKind::pws;
  if (s == "fl_sum") return DiversityKind::fl_sum;
  if (s == "fl_max") return DiversityKind::fl_max;
  if (s == "disf") return DiversityKind::disf;
  if (s == "none") return DiversityKind::none;
  throw ConfigError("unknown diversity metric '" + s + "'");
}

inline std::string diversity_name(DiversityKind k) {
  switch (k) {
    case DiversityKind::pws: return "pws";
    case DiversityKind::fl_sum: return "fl_sum";
    case DiversityKind::fl_max: return "fl_max";
    case DiversityKind::disf: return "disf";
    case DiversityKind::none: return "none";
  }
  return "none";
}

// Metric specification for the lambda-mixed objective. When rescale is set,
// quality is divided by 15 and the diversity value is affinely mapped from
// its theoretical range onto [0,1] before mixing, so lambda means the same
// thing across metrics. rescale=false mixes raw values.
struct Objective {
  double lambda = 0.5;
  DiversityKind diversity = DiversityKind::pws;
  QualityKind quality = QualityKind::composite;
  bool rescale = true;
  std::uint64_t disf_norm_n = 0;  // 0: use the corpus N (the literal 1/(N-1))

  void validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    if (lambda < 1.0 && diversity == DiversityKind::none)
      throw ConfigError("lambda < 1 requires a diversity metric");
    if (lambda > 0.0 && quality == QualityKind::none)
      throw ConfigError("lambda > 0 requires a quality metric");
  }
};

// Cosine-kernel cache. The full n*n gram is materialized only below the
// configured cap; column sums collapse to one dot with the embedding sum
// because the kernel is a plain dot product on unit rows.
struct KernelCache {
  enum class Mode { full_gram, on_the_fly };

  Mode mode = Mode::on_the_fly;
  std::uint64_t n = 0;
  const EmbeddingMatrix* m = nullptr;
  std::vector<double> gram;         // n*n when mode == full_gram
  std::vector<double> column_sums;  // length n
  std::vector<double> sum_embedding;  // length d

  static KernelCache build(const EmbeddingMatrix& mat, std::uint64_t gram_cap = 20000) {
    if (!mat.normalized) throw ConfigError("KernelCache requires normalized embeddings");
    KernelCache c;
    c.n = mat.n;
    c.m = &mat;
    c.sum_embedding.assign(mat.d, 0.0);
    for (std::uint64_t i = 0; i < mat.n; ++i) {
      const float* r = mat.row(i);
      for (std::uint32_t j = 0; j < mat.d; ++j) c.sum_embedding[j] += r[j];
    }
    c.column_sums.resize(mat.n);
    for (std::uint64_t i = 0; i < mat.n; ++i) {
      const float* r = mat.row(i);
      double s = 0.0;
      for (std::uint32_t j = 0; j < mat.d; ++j) s += c.sum_embedding[j] * double(r[j]);
      c.column_sums[i] = s;
    }
    if (mat.n <= gram_cap) {
      c.mode = Mode::full_gram;
      c.gram.resize(mat.n * mat.n);
      for (std::uint64_t i = 0; i < mat.n; ++i) {
        for (std::uint64_t j = i; j < mat.n; ++j) {
          double s = 0.0;
          const float *a = mat.row(i), *b = mat.row(j);
          for (std::uint32_t k = 0; k < mat.d; ++k) s += double(a[k]) * double(b[k]);
          c.gram[i * mat.n + j] = s;
          c.gram[j * mat.n + i] = s;
        }
      }
    }
    return c;
  }

  double sim(std::uint64_t i, std::uint64_t j) const {
    if (mode == Mode::full_gram) return gram[i * n + j];
    double s = 0.0;
    const float *a = m->row(i), *b = m->row(j);
    for (std::uint32_t k = 0; k < m->d; ++k) s += double(a[k]) * double(b[k]);
    return s;
  }
};

inline double quality_metric(std::span<const std::uint64_t> U, const QualityTable& q) {
  if (U.empty()) throw ConfigError("quality_metric: empty selection");
  double s = 0.0;
  for (auto i : U) s += q.composite[i];
  return s / double(U.size());
}

// -(1/(2S^2)) sum_{i,j in U} K(z_i,z_j), diagonal included. With a dot
// kernel on unit rows the double sum is |sum_{i in U} z_i|^2.
inline double pws_metric(std::span<const std::uint64_t> U, const EmbeddingMatrix& m) {
  if (U.empty()) throw ConfigError("pws_metric: empty selection");
  if (!m.normalized) throw ConfigError("pws_metric requires normalized embeddings");
  std::vector<double> acc(m.d, 0.0);
  for (auto i : U) {
    const float* r = m.row(i);
    for (std::uint32_t j = 0; j < m.d; ++j) acc[j] += r[j];
  }
  double sq = 0.0;
  for (double v : acc) sq += v * v;
  const double s = double(U.size());
  return -sq / (2.0 * s * s);
}

// (1/(2NS)) sum_{i in D} sum_{j in U} K(z_i,z_j), modular in U.
inline double fl_sum_metric(std::span<const std::uint64_t> U, const KernelCache& cache) {
  if (U.empty()) throw ConfigError("fl_sum_metric: empty selection");
  if (cache.column_sums.empty()) throw ConfigError("fl_sum_metric: column sums not built");
  double s = 0.0;
  for (auto j : U) s += cache.column_sums[j];
  return s / (2.0 * double(cache.n) * double(U.size()));
}

// Classic max-coverage facility location: (1/N) sum_{i in D} max_{j in U} K.
inline double fl_max_metric(std::span<const std::uint64_t> U, const KernelCache& cache) {
  if (U.empty()) throw ConfigError("fl_max_metric: empty selection");
  double total = 0.0;
  for (std::uint64_t i = 0; i < cache.n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (auto j : U) best = std::max(best, cache.sim(i, j));
    total += best;
  }
  return total / double(cache.n);
}

// -|(1/(norm_n-1)) sum_{i in U} z_i z_i^T|_F via the d x d accumulation;
// falls back to the pairwise identity |A|_F^2 = sum (z_i . z_j)^2 when the
// selection is smaller than the embedding dimension.
inline double disf_metric(std::span<const std::uint64_t> U, const EmbeddingMatrix& m,
                          std::uint64_t norm_n) {
  if (U.empty()) throw ConfigError("disf_metric: empty selection");
  if (!m.normalized) throw ConfigError("disf_metric requires normalized embeddings");
  if (norm_n < 2) throw ConfigError("disf_metric: norm_n must be >= 2");
  double fro_sq = 0.0;
  if (U.size() >= m.d) {
    std::vector<double> a(std::size_t(m.d) * m.d, 0.0);
    for (auto i : U) {
      const float* r = m.row(i);
      for (std::uint32_t p = 0; p < m.d; ++p)
        for (std::uint32_t q = 0; q < m.d; ++q) a[p * m.d + q] += double(r[p]) * double(r[q]);
    }
    for (double v : a) fro_sq += v * v;
  } else {
    for (auto i : U)
      for (auto j : U) {
        double dot = 0.0;
        const float *a = m.row(i), *b = m.row(j);
        for (std::uint32_t k = 0; k < m.d; ++k) dot += double(a[k]) * double(b[k]);
        fro_sq += dot * dot;
      }
  }
  return -std::sqrt(fro_sq) / double(norm_n - 1);
}

// Data-dependent affine range for rescaling DiSF, estimated over 32 random
// budget-sized subsets of the candidate pool.
struct DisfScale {
  double lo = 0.0;
  double hi = 1.0;
};

inline DisfScale estimate_disf_scale(const EmbeddingMatrix& m,
                                     std::span<const std::uint64_t> candidates,
                                     std::uint64_t budget, std::uint64_t norm_n,
                                     std::uint64_t seed) {
  auto rng = make_rng(seed, /*a=*/0xd15f);
  std::vector<std::uint64_t> pool(candidates.begin(), candidates.end());
  DisfScale sc{std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity()};
  const std::uint64_t s = std::min<std::uint64_t>(budget, pool.size());
  for (int t = 0; t < 32; ++t) {
    for (std::uint64_t i = 0; i < s; ++i) {
      std::uniform_int_distribution<std::uint64_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    double v = disf_metric(std::span(pool.data(), s), m, norm_n);
    sc.lo = std::min(sc.lo, v);
    sc.hi = std::max(sc.hi, v);
  }
  if (!(sc.hi > sc.lo)) sc.hi = sc.lo + 1.0;  // constant warm-up values
  return sc;
}

// Binds an Objective to concrete corpus views and evaluates subsets.
class ObjectiveEvaluator {
 public:
  ObjectiveEvaluator(Objective obj, const QualityTable* q, const EmbeddingMatrix* m,
                     const KernelCache* cache, std::span<const std::uint64_t> candidates = {},
                     std::uint64_t budget = 0, std::uint64_t seed = 0)
      : obj_(obj), q_(q), m_(m), cache_(cache) {
    obj_.validate();
    if (obj_.rescale && obj_.lambda < 1.0 && obj_.diversity == DiversityKind::disf) {
      if (candidates.empty() || budget == 0)
        throw ConfigError("rescaled disf objective needs candidates and budget for warm-up");
      disf_scale_ = estimate_disf_scale(*m_, candidates, budget, disf_norm_n(), seed);
    }
  }

  double operator()(std::span<const std::uint64_t> U) const {
    const double lam = obj_.lambda;
    double quality = 0.0, diversity = 0.0;
    if (lam > 0.0) {
      quality = quality_metric(U, *q_);
      if (obj_.rescale) quality /= 15.0;
    }
    if (lam < 1.0) {
      switch (obj_.diversity) {
        case DiversityKind::pws:
          diversity = pws_metric(U, *m_);
          if (obj_.rescale) diversity += 0.5;
          break;
        case DiversityKind::fl_sum:
          diversity = fl_sum_metric(U, *cache_);
          if (obj_.rescale) diversity += 0.5;
          break;
        case DiversityKind::fl_max:
          diversity = fl_max_metric(U, *cache_);
          if (obj_.rescale) diversity = (diversity + 1.0) / 2.0;
          break;
        case DiversityKind::disf:
          diversity = disf_metric(U, *m_, disf_norm_n());
          if (obj_.rescale)
            diversity = (diversity - disf_scale_.lo) / (disf_scale_.hi - disf_scale_.lo);
          break;
        case DiversityKind::none:
          break;
      }
    }
    if (lam >= 1.0) return quality;
    if (lam <= 0.0) return diversity;
    return lam * quality + (1.0 - lam) * diversity;
  }

  const Objective& spec() const { return obj_; }
  std::uint64_t disf_norm_n() const {
    return obj_.disf_norm_n ? obj_.disf_norm_n : (m_ ? m_->n : 0);
  }

 private:
  Objective obj_;
  const QualityTable* q_;
  const EmbeddingMatrix* m_;
  const KernelCache* cache_;
  DisfScale disf_scale_;
};

inline double combined_objective(std::span<const std::uint64_t> U, const Objective& obj,
                                 const QualityTable* q, const EmbeddingMatrix* m,
                                 const KernelCache* cache,
                                 std::span<const std::uint64_t> candidates = {},
                                 std::uint64_t budget = 0, std::uint64_t seed = 0) {
  return ObjectiveEvaluator(obj, q, m, cache, candidates, budget, seed)(U);
}

}  // namespace datamask
