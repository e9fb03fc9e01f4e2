#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "datamask/datamask.hpp"
#include "doctest.h"

namespace dm = datamask;

namespace {

dm::EmbeddingMatrix random_unit(std::uint64_t n, std::uint32_t d, std::uint64_t seed) {
  dm::EmbeddingMatrix m;
  m.n = n;
  m.d = d;
  m.data.resize(n * d);
  auto rng = dm::make_rng(seed, 0xabc);
  std::normal_distribution<double> g;
  for (auto& v : m.data) v = float(g(rng));
  return dm::normalize_rows(m);
}

}  // namespace

TEST_CASE("binomial counting with cap") {
  CHECK(dm::binomial_or_cap(12, 4, 1000000) == 495);
  CHECK(dm::binomial_or_cap(5, 0, 10) == 1);
  CHECK(dm::binomial_or_cap(4, 5, 10) == 0);
  CHECK(dm::binomial_or_cap(100, 10, 1000000) > 1000000);
}

TEST_CASE("exhaustive optimum on forced and argmax instances") {
  auto m = random_unit(4, 3, 1);
  auto cache = dm::KernelCache::build(m);
  std::vector<std::uint64_t> all = {0, 1, 2, 3};
  dm::Objective obj{0.0, dm::DiversityKind::pws, dm::QualityKind::none, false};
  dm::ObjectiveEvaluator eval(obj, nullptr, &m, &cache);
  auto full = dm::exhaustive_optimum(all, 4, eval);
  CHECK(full.selected == all);

  dm::QualityTable q;
  q.n = 3;
  q.composite = {1.0, 5.0, 2.0};
  dm::Objective qobj{1.0, dm::DiversityKind::none, dm::QualityKind::composite, false};
  auto m3 = random_unit(3, 3, 2);
  dm::ObjectiveEvaluator qe(qobj, &q, &m3, nullptr);
  std::vector<std::uint64_t> three = {0, 1, 2};
  auto best = dm::exhaustive_optimum(three, 1, qe);
  CHECK(best.selected == std::vector<std::uint64_t>{1});
}

TEST_CASE("exhaustive optimum enforces the combinatorial cap") {
  auto m = random_unit(100, 4, 3);
  auto cache = dm::KernelCache::build(m);
  std::vector<std::uint64_t> all(100);
  std::iota(all.begin(), all.end(), 0);
  dm::Objective obj{0.0, dm::DiversityKind::pws, dm::QualityKind::none, false};
  dm::ObjectiveEvaluator eval(obj, nullptr, &m, &cache);
  CHECK_THROWS_AS(dm::exhaustive_optimum(all, 10, eval), dm::ConfigError);
}

TEST_CASE("greedy fl_sum equals the top column sums") {
  auto m = random_unit(50, 8, 4);
  auto cache = dm::KernelCache::build(m);
  auto g = dm::greedy_select(dm::DiversityKind::fl_sum, 10, m, cache);
  std::vector<std::uint64_t> idx(50);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::uint64_t a, std::uint64_t b) {
    if (cache.column_sums[a] != cache.column_sums[b])
      return cache.column_sums[a] > cache.column_sums[b];
    return a < b;
  });
  idx.resize(10);
  std::sort(idx.begin(), idx.end());
  CHECK(g.selected == idx);
  CHECK(g.value_trajectory.back() ==
        doctest::Approx(dm::fl_sum_metric(g.selected, cache)).epsilon(1e-12));
}

TEST_CASE("greedy disf breaks the all-equal first pick toward index 0") {
  // exactly-unit rows: every first-step increment is exactly 1
  dm::EmbeddingMatrix m;
  m.n = 8;
  m.d = 8;
  m.normalized = true;
  m.data.assign(64, 0.0f);
  for (int i = 0; i < 8; ++i) m.data[i * 8 + (7 - i)] = 1.0f;
  auto cache = dm::KernelCache::build(m);
  auto g = dm::greedy_select(dm::DiversityKind::disf, 3, m, cache);
  CHECK(g.pick_order[0] == 0);
}

TEST_CASE("greedy trajectories agree with from-scratch recomputation") {
  auto m = random_unit(48, 6, 6);
  auto cache = dm::KernelCache::build(m);
  for (auto kind : {dm::DiversityKind::pws, dm::DiversityKind::fl_sum,
                    dm::DiversityKind::fl_max, dm::DiversityKind::disf}) {
    auto g = dm::greedy_select(kind, 12, m, cache);
    REQUIRE(g.value_trajectory.size() == 12);
    std::vector<std::uint64_t> prefix;
    for (std::size_t step = 0; step < 12; ++step) {
      prefix.push_back(g.pick_order[step]);
      std::vector<std::uint64_t> sorted = prefix;
      std::sort(sorted.begin(), sorted.end());
      double fresh = 0.0;
      switch (kind) {
        case dm::DiversityKind::pws: fresh = dm::pws_metric(sorted, m); break;
        case dm::DiversityKind::fl_sum: fresh = dm::fl_sum_metric(sorted, cache); break;
        case dm::DiversityKind::fl_max: fresh = dm::fl_max_metric(sorted, cache); break;
        case dm::DiversityKind::disf: fresh = dm::disf_metric(sorted, m, m.n); break;
        case dm::DiversityKind::none: break;
      }
      CHECK(g.value_trajectory[step] == doctest::Approx(fresh).epsilon(1e-9));
    }
  }
}

TEST_CASE("greedy fl_max picks the true marginal argmax each step") {
  auto m = random_unit(20, 4, 7);
  auto cache = dm::KernelCache::build(m);
  auto g = dm::greedy_select(dm::DiversityKind::fl_max, 5, m, cache);
  std::vector<std::uint64_t> chosen;
  for (std::size_t step = 0; step < 5; ++step) {
    double best_gain = -1e300;
    std::uint64_t best_idx = 0;
    double base = chosen.empty() ? 0.0 : dm::fl_max_metric(chosen, cache);
    for (std::uint64_t c = 0; c < 20; ++c) {
      if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
      auto with = chosen;
      with.push_back(c);
      double gain = dm::fl_max_metric(with, cache) - base;
      if (gain > best_gain + 1e-15) {
        best_gain = gain;
        best_idx = c;
      }
    }
    CHECK(g.pick_order[step] == best_idx);
    chosen.push_back(best_idx);
  }
}

TEST_CASE("greedy fl_max clears the submodular approximation bound") {
  for (int t = 0; t < 5; ++t) {
    auto m = random_unit(12, 4, 100 + t);
    auto cache = dm::KernelCache::build(m);
    std::vector<std::uint64_t> all(12);
    std::iota(all.begin(), all.end(), 0);
    dm::Objective obj{0.0, dm::DiversityKind::fl_max, dm::QualityKind::none, false};
    dm::ObjectiveEvaluator eval(obj, nullptr, &m, &cache);
    auto opt = dm::exhaustive_optimum(all, 4, eval);
    auto g = dm::greedy_select(dm::DiversityKind::fl_max, 4, m, cache);
    // shift to a nonnegative scale: fl_max >= -1 on unit vectors
    double shifted_greedy = g.value_trajectory.back() + 1.0;
    double shifted_opt = opt.value + 1.0;
    CHECK(shifted_greedy >= (1.0 - 1.0 / std::exp(1.0)) * shifted_opt - 1e-12);
  }
}

TEST_CASE("topk quality ordering") {
  dm::QualityTable q;
  q.n = 3;
  q.composite = {1.0, 5.0, 2.0};
  CHECK(dm::topk_quality(q, 2) == std::vector<std::uint64_t>{1, 2});
  CHECK(dm::topk_quality(q, 3) == std::vector<std::uint64_t>{0, 1, 2});

  auto big = dm::make_random_quality(10000, 8);
  auto top = dm::topk_quality(big, 100);
  REQUIRE(top.size() == 100);
  std::set<std::uint64_t> in_top(top.begin(), top.end());
  double worst_in = 1e300;
  for (auto i : top) worst_in = std::min(worst_in, big.composite[i]);
  for (std::uint64_t i = 0; i < big.n; ++i)
    if (!in_top.count(i)) CHECK(big.composite[i] <= worst_in);
}

TEST_CASE("semdedup collapses duplicates and keeps orthogonal sets") {
  dm::EmbeddingMatrix dup;
  dup.n = 2;
  dup.d = 2;
  dup.normalized = true;
  dup.data = {0.6f, 0.8f, 0.6f, 0.8f};
  auto kept = dm::semdedup_filter(dup, 1, 0.99, 2, 3);
  CHECK(kept.size() == 1);

  dm::EmbeddingMatrix ortho;
  ortho.n = 4;
  ortho.d = 4;
  ortho.normalized = true;
  ortho.data.assign(16, 0.0f);
  for (int i = 0; i < 4; ++i) ortho.data[i * 4 + i] = 1.0f;
  auto all = dm::semdedup_filter(ortho, 2, 0.5, 4, 3);
  CHECK(all.size() == 4);
}

TEST_CASE("semdedup survivors satisfy the within-cluster threshold") {
  auto m = dm::make_clustered_embeddings(500, 8, 8, 0.25, 13);
  const double threshold = 0.93;
  auto kept = dm::semdedup_filter(m, 8, threshold, 500, 13);
  CHECK(!kept.empty());
  CHECK(kept.size() < 500);
  auto model = dm::kmeans(m, 8, 50, 13);
  auto cache = dm::KernelCache::build(m);
  for (std::size_t a = 0; a < kept.size(); ++a)
    for (std::size_t b = a + 1; b < kept.size(); ++b)
      if (model.assignment[kept[a]] == model.assignment[kept[b]])
        CHECK(cache.sim(kept[a], kept[b]) <= threshold);
}
