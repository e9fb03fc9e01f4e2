#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "datamask/config.hpp"
#include "datamask/csv.hpp"
#include "datamask/errors.hpp"
#include "datamask/rng.hpp"

namespace datamask {

// Row-major dense matrix of per-sample embeddings. Payload is float32 on
// disk; everything downstream accumulates in double.
struct EmbeddingMatrix {
  std::uint64_t n = 0;
  std::uint32_t d = 0;
  std::vector<float> data;  // n * d, row-major
  bool normalized = false;

  const float* row(std::uint64_t i) const { return data.data() + i * d; }
};

struct QualityTable {
  std::uint64_t n = 0;
  std::vector<double> dclm, edu, wiki;  // raw scores
  std::vector<double> composite;        // in [0, 15]
};

struct Shard {
  std::uint64_t parent_offset = 0;
  std::vector<std::uint64_t> indices;  // global indices
  std::uint64_t size() const { return indices.size(); }
};

struct SelectionResult {
  std::vector<std::uint64_t> selected;  // strictly ascending global indices
  std::uint64_t budget = 0;
  std::map<std::string, double> achieved;
  std::uint64_t seed = 0;
  std::uint64_t epochs = 0;
  double lambda = 0.0;
  std::string method;
};

namespace detail {

constexpr char kEmbeddingMagic[4] = {'D', 'M', 'E', 'B'};

template <typename T>
void write_le(std::ofstream& out, T v) {
  // little-endian host assumed; payload layout is byte-exact on x86/arm.
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in, std::uint64_t& offset, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
    throw IoError(path + ": truncated payload at byte offset " + std::to_string(offset));
  offset += sizeof(T);
  return v;
}

}  // namespace detail

inline void write_embeddings(const EmbeddingMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(detail::kEmbeddingMagic, 4);
  detail::write_le<std::uint32_t>(out, 1);  // version
  detail::write_le<std::uint64_t>(out, m.n);
  detail::write_le<std::uint32_t>(out, m.d);
  detail::write_le<std::uint32_t>(out, m.normalized ? 1u : 0u);
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!out) throw IoError("write failure on " + path);
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t offset = 0;
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, detail::kEmbeddingMagic, 4) != 0)
    throw IoError(path + ": bad magic at byte offset 0");
  offset = 4;
  auto version = detail::read_le<std::uint32_t>(in, offset, path);
  if (version != 1)
    throw IoError(path + ": unsupported version " + std::to_string(version));
  EmbeddingMatrix m;
  m.n = detail::read_le<std::uint64_t>(in, offset, path);
  m.d = detail::read_le<std::uint32_t>(in, offset, path);
  auto flags = detail::read_le<std::uint32_t>(in, offset, path);
  m.normalized = (flags & 1u) != 0;
  if (m.n < 1 || m.d < 1)
    throw IoError(path + ": header declares empty matrix (n=" + std::to_string(m.n) +
                  ", d=" + std::to_string(m.d) + ")");
  m.data.resize(m.n * m.d);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(m.data.size() * sizeof(float)))
    throw IoError(path + ": truncated payload at byte offset " +
                  std::to_string(offset + static_cast<std::uint64_t>(std::max<std::streamsize>(in.gcount(), 0))));
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    if (!std::isfinite(m.data[i]))
      throw IoError(path + ": non-finite entry at byte offset " +
                    std::to_string(offset + i * sizeof(float)));
  }
  return m;
}

inline EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  for (std::uint64_t i = 0; i < m.n; ++i) {
    double sq = 0.0;
    const float* r = m.row(i);
    for (std::uint32_t j = 0; j < m.d; ++j) sq += double(r[j]) * double(r[j]);
    if (sq == 0.0) throw NumericError("zero-norm embedding row " + std::to_string(i));
    double inv = 1.0 / std::sqrt(sq);
    float* o = out.data.data() + i * m.d;
    for (std::uint32_t j = 0; j < m.d; ++j) o[j] = static_cast<float>(double(r[j]) * inv);
  }
  out.normalized = true;
  return out;
}

namespace detail {

// Average (midpoint-of-ties) 0-based rank of each value in its own series.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    double mid = (double(i) + double(j)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  return rank;
}

// Value of the sorted reference series at a fractional 0-based rank.
inline double quantile_at(const std::vector<double>& sorted_ref, double rank) {
  std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
  hi = std::min(hi, sorted_ref.size() - 1);
  double frac = rank - double(lo);
  return sorted_ref[lo] * (1.0 - frac) + sorted_ref[hi] * frac;
}

}  // namespace detail

// Quantile-map a score series onto the empirical reference distribution:
// each sample's rank in its own series is mapped to the same-rank value of
// the reference, clamped to [lo, hi].
inline std::vector<double> quantile_map(const std::vector<double>& x,
                                        const std::vector<double>& reference,
                                        double lo, double hi) {
  if (x.empty()) throw ConfigError("quantile_map: empty input");
  std::vector<double> sorted_ref = reference;
  std::sort(sorted_ref.begin(), sorted_ref.end());
  auto ranks = detail::average_ranks(x);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = std::clamp(detail::quantile_at(sorted_ref, ranks[i]), lo, hi);
  return out;
}

// Composite quality: edu + dclm and wiki each quantile-mapped onto the edu
// distribution's 0-5 scale, giving a total in [0, 15].
inline QualityTable compose_quality(const QualityTable& raw) {
  if (raw.n == 0) throw ConfigError("compose_quality: empty table");
  for (std::uint64_t i = 0; i < raw.n; ++i) {
    if (!std::isfinite(raw.dclm[i]) || !std::isfinite(raw.edu[i]) || !std::isfinite(raw.wiki[i]))
      throw NumericError("non-finite raw quality score at index " + std::to_string(i));
    if (raw.edu[i] < 0.0 || raw.edu[i] > 5.0)
      throw ConfigError("edu score out of [0,5] at index " + std::to_string(i));
  }
  QualityTable out = raw;
  auto mapped_dclm = quantile_map(raw.dclm, raw.edu, 0.0, 5.0);
  auto mapped_wiki = quantile_map(raw.wiki, raw.edu, 0.0, 5.0);
  out.composite.resize(raw.n);
  for (std::uint64_t i = 0; i < raw.n; ++i)
    out.composite[i] = raw.edu[i] + mapped_dclm[i] + mapped_wiki[i];
  return out;
}

inline std::vector<std::uint64_t> prune_by_quality(const QualityTable& q, double threshold) {
  if (threshold < 0.0 || threshold > 15.0)
    throw ConfigError("prune threshold must lie in [0,15]");
  std::vector<std::uint64_t> kept;
  for (std::uint64_t i = 0; i < q.n; ++i)
    if (q.composite[i] >= threshold) kept.push_back(i);
  return kept;
}

// Uniform random permutation of 0..n-1 cut into ceil(n/shard_size) pieces;
// the last shard may be short.
inline std::vector<Shard> split_shards(std::uint64_t n, std::uint64_t shard_size,
                                       std::uint64_t seed) {
  if (shard_size < 1) throw ConfigError("shard_size must be >= 1");
  std::vector<std::uint64_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_rng(seed, /*a=*/0x5a5a);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Shard> shards;
  for (std::uint64_t start = 0; start < n; start += shard_size) {
    Shard s;
    s.parent_offset = start;
    auto end = std::min(start + shard_size, n);
    s.indices.assign(perm.begin() + start, perm.begin() + end);
    shards.push_back(std::move(s));
  }
  return shards;
}

inline QualityTable load_raw_scores(const std::string& path) {
  auto t = csv::read_table(path);
  int ci = t.column("index"), cd = t.column("dclm"), ce = t.column("edu"), cw = t.column("wiki");
  if (ci < 0 || cd < 0 || ce < 0 || cw < 0)
    throw IoError(path + ": expected header index,dclm,edu,wiki");
  QualityTable q;
  q.n = t.rows.size();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (static_cast<std::uint64_t>(t.rows[i][ci]) != i)
      throw IoError(path + ": indices must run 0..n-1 in order (row " + std::to_string(i) + ")");
    q.dclm.push_back(t.rows[i][cd]);
    q.edu.push_back(t.rows[i][ce]);
    q.wiki.push_back(t.rows[i][cw]);
  }
  return q;
}

inline void write_composite_scores(const QualityTable& q, const std::string& path) {
  csv::Table t;
  t.header = {"index", "quality"};
  for (std::uint64_t i = 0; i < q.n; ++i)
    t.rows.push_back({double(i), q.composite[i]});
  csv::write_table(path, t);
}

inline QualityTable load_composite_scores(const std::string& path) {
  auto t = csv::read_table(path);
  int ci = t.column("index"), cq = t.column("quality");
  if (ci < 0 || cq < 0) throw IoError(path + ": expected header index,quality");
  QualityTable q;
  q.n = t.rows.size();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (static_cast<std::uint64_t>(t.rows[i][ci]) != i)
      throw IoError(path + ": indices must run 0..n-1 in order (row " + std::to_string(i) + ")");
    q.composite.push_back(t.rows[i][cq]);
  }
  return q;
}

inline void validate_selection(const SelectionResult& r) {
  if (r.selected.size() != r.budget)
    throw ConfigError("selection size " + std::to_string(r.selected.size()) +
                      " does not match budget " + std::to_string(r.budget));
  if (r.budget < 1) throw ConfigError("selection budget must be >= 1");
  for (std::size_t i = 1; i < r.selected.size(); ++i)
    if (r.selected[i] <= r.selected[i - 1])
      throw ConfigError("selection indices must be strictly ascending");
}

// Selection file: one decimal index per line, ascending. A metadata sidecar
// in the key=value format goes to path + ".meta".
inline void write_selection(const SelectionResult& r, const std::string& path) {
  validate_selection(r);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (auto idx : r.selected) out << idx << '\n';
  if (!out) throw IoError("write failure on " + path);

  KeyValueFile meta;
  meta.set("budget", std::to_string(r.budget));
  meta.set("seed", std::to_string(r.seed));
  meta.set("epochs", std::to_string(r.epochs));
  meta.set("lambda", csv::format_value(r.lambda));
  meta.set("method", r.method.empty() ? "unknown" : r.method);
  for (const auto& [k, v] : r.achieved) meta.set("achieved." + k, csv::format_value(v));
  meta.save(path + ".meta");
}

inline std::vector<std::uint64_t> read_selection(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint64_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(std::stoull(line));
  }
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i] <= out[i - 1]) throw IoError(path + ": indices not strictly ascending");
  return out;
}

}  // namespace datamask
