#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "datamask/corpus.hpp"
#include "datamask/rng.hpp"

namespace datamask {

// Unit vectors grouped around orthogonal axes: sample i belongs to cluster
// i % clusters and is cos(theta)*axis + sin(theta)*noise with noise in the
// orthogonal complement. noise_level = 0 collapses each cluster to its axis.
inline EmbeddingMatrix make_clustered_embeddings(std::uint64_t n, std::uint32_t d,
                                                 std::uint32_t clusters, double noise_level,
                                                 std::uint64_t seed) {
  EmbeddingMatrix m;
  m.n = n;
  m.d = d;
  m.data.assign(n * d, 0.0f);
  auto rng = make_rng(seed, 0x5e7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t axis = static_cast<std::uint32_t>(i % clusters) % d;
    std::vector<double> v(d, 0.0);
    v[axis] = 1.0;
    if (noise_level > 0.0) {
      std::vector<double> u(d);
      double nn = 0.0;
      for (auto& x : u) x = gauss(rng);
      u[axis] = 0.0;  // keep noise orthogonal to the axis
      for (auto x : u) nn += x * x;
      if (nn > 0.0) {
        double inv = 1.0 / std::sqrt(nn);
        double c = std::sqrt(1.0 - noise_level * noise_level);
        for (std::uint32_t j = 0; j < d; ++j) v[j] = c * v[j] + noise_level * u[j] * inv;
      }
    }
    for (std::uint32_t j = 0; j < d; ++j) m.data[i * d + j] = static_cast<float>(v[j]);
  }
  m.normalized = true;
  return normalize_rows(m);  // re-normalize to kill float32 rounding drift
}

inline QualityTable make_random_quality(std::uint64_t n, std::uint64_t seed) {
  QualityTable q;
  q.n = n;
  auto rng = make_rng(seed, 0x9a1);
  std::uniform_real_distribution<double> edu(0.0, 5.0);
  std::normal_distribution<double> dclm(0.0, 1.0);
  std::uniform_real_distribution<double> wiki(-3.0, 7.0);
  for (std::uint64_t i = 0; i < n; ++i) {
    q.edu.push_back(edu(rng));
    q.dclm.push_back(dclm(rng));
    q.wiki.push_back(wiki(rng));
  }
  return compose_quality(q);
}

}  // namespace datamask
