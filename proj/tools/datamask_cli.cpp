// Command-line front end: selection runs, baseline selectors, analysis
// reports, and the greedy-vs-mask-learning benchmark.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "datamask/datamask.hpp"

namespace dm = datamask;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

dm::EmbeddingMatrix load_normalized(const std::string& path) {
  auto m = dm::load_embeddings(path);
  return m.normalized ? m : dm::normalize_rows(m);
}

// Accepts either the raw triple CSV (index,dclm,edu,wiki), composing the
// 0-15 scale on the fly, or an already composed index,quality CSV.
dm::QualityTable load_scores(const std::string& path) {
  auto t = dm::csv::read_table(path);
  if (t.column("quality") >= 0) return dm::load_composite_scores(path);
  return dm::compose_quality(dm::load_raw_scores(path));
}

struct CommonOptions {
  std::string embeddings_path;
  std::string scores_path;
  std::string out_path = "selection.txt";
  std::string trajectory_path;
  std::uint64_t budget = 0;
  std::uint64_t seed = 0;
  unsigned threads = std::thread::hardware_concurrency();
  double lambda = 0.5;
  std::string diversity = "pws";
  bool raw_mixing = false;
  std::uint64_t disf_norm = 0;
  std::uint64_t gram_cap = 20000;
};

dm::Objective make_objective(const CommonOptions& opt) {
  dm::Objective obj;
  obj.lambda = opt.lambda;
  obj.diversity = dm::parse_diversity(opt.diversity);
  obj.quality = opt.lambda > 0.0 ? dm::QualityKind::composite : dm::QualityKind::none;
  obj.rescale = !opt.raw_mixing;
  obj.disf_norm_n = opt.disf_norm;
  obj.validate();
  return obj;
}

void append_meta(const std::string& selection_path,
                 const std::vector<std::pair<std::string, std::string>>& extra) {
  auto meta = dm::KeyValueFile::load(selection_path + ".meta");
  for (const auto& [k, v] : extra) meta.set(k, v);
  meta.save(selection_path + ".meta");
}

std::vector<dm::TrajectoryRow> greedy_trajectory(const dm::GreedyResult& g) {
  std::vector<dm::TrajectoryRow> rows;
  rows.reserve(g.value_trajectory.size());
  for (std::size_t i = 0; i < g.value_trajectory.size(); ++i) {
    dm::TrajectoryRow r;
    r.epoch = i;
    r.mean_reward = r.best_reward = g.value_trajectory[i];
    rows.push_back(r);
  }
  return rows;
}

int cmd_select(const CommonOptions& opt, const dm::OptimizerConfig& base_cfg,
               double prune_below, std::uint64_t shard_size) {
  auto obj = make_objective(opt);
  base_cfg.validate();

  auto m = load_normalized(opt.embeddings_path);
  auto q = load_scores(opt.scores_path);
  if (q.n != m.n) throw dm::ConfigError("embedding and score counts differ");

  std::vector<std::uint64_t> active;
  if (prune_below >= 0.0) {
    active = dm::prune_by_quality(q, prune_below);
    if (active.empty()) throw dm::ConfigError("pruning removed every candidate");
  } else {
    active.resize(m.n);
    std::iota(active.begin(), active.end(), 0);
  }
  if (base_cfg.budget > active.size())
    throw dm::ConfigError("budget exceeds active candidates after pruning");

  dm::KernelCache cache;
  bool needs_cache = obj.lambda < 1.0 && (obj.diversity == dm::DiversityKind::fl_sum ||
                                          obj.diversity == dm::DiversityKind::fl_max);
  if (needs_cache) cache = dm::KernelCache::build(m, opt.gram_cap);

  // Shard the active candidates; shard_size 0 keeps one shard.
  std::vector<std::vector<std::uint64_t>> shard_members;
  if (shard_size == 0 || shard_size >= active.size()) {
    shard_members.push_back(active);
  } else {
    auto shards = dm::split_shards(active.size(), shard_size, opt.seed);
    for (const auto& s : shards) {
      std::vector<std::uint64_t> members;
      members.reserve(s.indices.size());
      for (auto pos : s.indices) members.push_back(active[pos]);
      std::sort(members.begin(), members.end());
      shard_members.push_back(std::move(members));
    }
  }

  std::vector<std::uint64_t> selected;
  std::uint64_t budget_left = base_cfg.budget, samples_left = active.size();
  for (std::size_t si = 0; si < shard_members.size(); ++si) {
    const auto& members = shard_members[si];
    std::uint64_t shard_budget =
        si + 1 == shard_members.size()
            ? budget_left
            : std::uint64_t(std::llround(double(base_cfg.budget) * double(members.size()) /
                                         double(active.size())));
    shard_budget = std::min(shard_budget, budget_left);
    shard_budget = std::min<std::uint64_t>(shard_budget, members.size());
    budget_left -= shard_budget;
    samples_left -= members.size();
    if (shard_budget == 0) continue;

    dm::OptimizerConfig cfg = base_cfg;
    cfg.budget = shard_budget;
    cfg.seed = dm::mix_seed(opt.seed, 0x5ade, si);
    dm::ObjectiveEvaluator eval(obj, &q, &m, needs_cache ? &cache : nullptr, members,
                                shard_budget, cfg.seed);
    dm::Logits init = cfg.init == dm::OptimizerConfig::Init::quality_aware
                          ? dm::quality_init(q, members, cfg.l_min, cfg.l_max)
                          : dm::uniform_init(members);
    auto result = dm::run_datamask(init, eval, cfg);
    selected.insert(selected.end(), result.selection.selected.begin(),
                    result.selection.selected.end());
    if (!opt.trajectory_path.empty()) {
      std::string path = shard_members.size() == 1
                             ? opt.trajectory_path
                             : opt.trajectory_path + ".shard" + std::to_string(si);
      dm::write_trajectory(result.trajectory, path);
    }
  }
  std::sort(selected.begin(), selected.end());

  dm::SelectionResult result;
  result.selected = std::move(selected);
  result.budget = base_cfg.budget;
  result.seed = opt.seed;
  result.epochs = base_cfg.epochs;
  result.lambda = obj.lambda;
  result.method = "datamask";
  {
    dm::ObjectiveEvaluator eval(obj, &q, &m, needs_cache ? &cache : nullptr, active,
                                base_cfg.budget, opt.seed);
    result.achieved["objective"] = eval(result.selected);
    result.achieved["quality"] = dm::quality_metric(result.selected, q);
    if (obj.lambda < 1.0 && obj.diversity == dm::DiversityKind::pws)
      result.achieved["pws"] = dm::pws_metric(result.selected, m);
  }
  dm::write_selection(result, opt.out_path);
  append_meta(opt.out_path,
              {{"diversity", opt.diversity},
               {"group_size", std::to_string(base_cfg.group_size)},
               {"learning_rate", dm::csv::format_value(base_cfg.learning_rate)},
               {"batch_ratio", dm::csv::format_value(base_cfg.batch_ratio)},
               {"prune_below", dm::csv::format_value(prune_below)},
               {"shard_size", std::to_string(shard_size)},
               {"init", base_cfg.init == dm::OptimizerConfig::Init::quality_aware ? "quality"
                                                                                  : "uniform"},
               {"rescale", opt.raw_mixing ? "false" : "true"},
               {"threads", std::to_string(opt.threads)}});
  std::cout << "selected " << result.selected.size() << " samples -> " << opt.out_path
            << " (objective " << dm::csv::format_value(result.achieved["objective"]) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-constrained corpus subset selection by policy-gradient mask learning"};
  app.require_subcommand(1);

  CommonOptions opt;
  dm::OptimizerConfig cfg;
  double prune_below = -1.0;
  std::uint64_t shard_size = 0;
  std::string init_kind = "uniform";
  std::string config_path;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", opt.seed, "master RNG seed (required; no wall-clock seeding)")
        ->required();
  };

  // ---- select ----
  auto* select = app.add_subcommand("select", "run the mask-learning optimizer");
  select->add_option("--embeddings", opt.embeddings_path)->required();
  select->add_option("--scores", opt.scores_path)->required();
  select->add_option("--out", opt.out_path);
  select->add_option("--trajectory", opt.trajectory_path);
  select->add_option("--budget", cfg.budget)->required()->check(CLI::PositiveNumber);
  select->add_option("--lambda", opt.lambda)->check(CLI::Range(0.0, 1.0));
  select->add_option("--diversity", opt.diversity);
  select->add_option("--G", cfg.group_size)->check(CLI::Range(std::uint64_t(2), std::uint64_t(1) << 20));
  select->add_option("--lr", cfg.learning_rate);
  select->add_option("--epochs", cfg.epochs)->check(CLI::PositiveNumber);
  select->add_option("--batch-ratio", cfg.batch_ratio)->check(CLI::Range(1e-9, 1.0));
  select->add_option("--prune-below", prune_below)->check(CLI::Range(0.0, 15.0));
  select->add_option("--init", init_kind)->check(CLI::IsMember({"uniform", "quality"}));
  select->add_option("--l-min", cfg.l_min);
  select->add_option("--l-max", cfg.l_max);
  select->add_option("--shard-size", shard_size);
  select->add_option("--threads", opt.threads);
  select->add_option("--disf-norm", opt.disf_norm);
  select->add_option("--gram-cap", opt.gram_cap);
  select->add_flag("--raw", opt.raw_mixing, "mix raw metric values instead of rescaled ones");
  select->add_flag("--sample-final", cfg.sample_final,
                   "draw the final mask stochastically instead of top-S extraction");
  select->add_option("--config", config_path, "key = value config file; flags override");
  add_seed(select);

  // ---- greedy ----
  auto* greedy = app.add_subcommand("greedy", "greedy diversity maximizer baseline");
  greedy->add_option("--embeddings", opt.embeddings_path)->required();
  greedy->add_option("--diversity", opt.diversity);
  greedy->add_option("--budget", cfg.budget)->required()->check(CLI::PositiveNumber);
  greedy->add_option("--out", opt.out_path);
  greedy->add_option("--trajectory", opt.trajectory_path);
  greedy->add_option("--disf-norm", opt.disf_norm);
  greedy->add_option("--gram-cap", opt.gram_cap);

  // ---- oracle ----
  auto* oracle = app.add_subcommand("oracle", "exhaustive optimum (small instances)");
  oracle->add_option("--embeddings", opt.embeddings_path)->required();
  oracle->add_option("--scores", opt.scores_path);
  oracle->add_option("--budget", cfg.budget)->required()->check(CLI::PositiveNumber);
  oracle->add_option("--lambda", opt.lambda)->check(CLI::Range(0.0, 1.0));
  oracle->add_option("--diversity", opt.diversity);
  oracle->add_option("--out", opt.out_path);
  oracle->add_flag("--raw", opt.raw_mixing);
  add_seed(oracle);

  // ---- topk ----
  auto* topk = app.add_subcommand("topk", "top-k by composite quality");
  topk->add_option("--scores", opt.scores_path)->required();
  topk->add_option("--budget", cfg.budget)->required()->check(CLI::PositiveNumber);
  topk->add_option("--out", opt.out_path);

  // ---- semdedup ----
  std::uint32_t clusters = 0;
  double threshold = 0.95;
  std::uint64_t s_target = 0;
  auto* semdedup = app.add_subcommand("semdedup", "near-duplicate filter baseline");
  semdedup->add_option("--embeddings", opt.embeddings_path)->required();
  semdedup->add_option("--clusters", clusters, "k-means cluster count (default n/100)");
  semdedup->add_option("--threshold", threshold)->check(CLI::Range(-0.999999, 1.0));
  semdedup->add_option("--target", s_target, "cap on retained samples (default: no cap)");
  semdedup->add_option("--out", opt.out_path);
  add_seed(semdedup);

  // ---- analyze ----
  auto* analyze = app.add_subcommand("analyze", "clustering, stats, and estimator probes");
  analyze->require_subcommand(1);
  std::uint32_t heat_k = 100, heat_iters = 50;
  auto* heatmap = analyze->add_subcommand("heatmap", "per-cluster quality/diversity CSV");
  heatmap->add_option("--embeddings", opt.embeddings_path)->required();
  heatmap->add_option("--scores", opt.scores_path)->required();
  heatmap->add_option("--k", heat_k)->check(CLI::PositiveNumber);
  heatmap->add_option("--iters", heat_iters)->check(CLI::PositiveNumber);
  heatmap->add_option("--diversity", opt.diversity);
  heatmap->add_option("--out", opt.out_path);
  heatmap->add_option("--gram-cap", opt.gram_cap);
  add_seed(heatmap);

  std::string selection_path, lengths_path;
  auto* stats = analyze->add_subcommand("stats", "length summary of a selection");
  stats->add_option("--selection", selection_path)->required();
  stats->add_option("--lengths", lengths_path)->required();
  stats->add_option("--out", opt.out_path);

  std::uint64_t reps = 2000;
  std::vector<std::uint64_t> g_list{64};
  auto* variance = analyze->add_subcommand("variance", "estimator variance report");
  variance->add_option("--embeddings", opt.embeddings_path)->required();
  variance->add_option("--scores", opt.scores_path);
  variance->add_option("--budget", cfg.budget)->required()->check(CLI::PositiveNumber);
  variance->add_option("--G", g_list);
  variance->add_option("--reps", reps)->check(CLI::Range(std::uint64_t(100), std::uint64_t(1) << 32));
  variance->add_option("--lambda", opt.lambda)->check(CLI::Range(0.0, 1.0));
  variance->add_option("--diversity", opt.diversity);
  variance->add_option("--out", opt.out_path);
  add_seed(variance);

  // ---- bench ----
  std::vector<std::uint64_t> sizes;
  double budget_ratio = 0.1;
  std::uint32_t bench_dim = 10, bench_clusters = 10;
  double bench_noise = 0.0;
  std::uint64_t check_interval = 25;
  auto* bench = app.add_subcommand("bench", "greedy vs mask-learning wall-clock comparison");
  bench->add_option("--sizes", sizes, "corpus sizes to benchmark")->required();
  bench->add_option("--budget-ratio", budget_ratio)->check(CLI::Range(1e-9, 1.0));
  bench->add_option("--diversity", opt.diversity);
  bench->add_option("--dim", bench_dim)->check(CLI::PositiveNumber);
  bench->add_option("--clusters", bench_clusters)->check(CLI::PositiveNumber);
  bench->add_option("--noise", bench_noise)->check(CLI::Range(0.0, 1.0));
  bench->add_option("--embeddings", opt.embeddings_path,
                    "optional real embedding file; prefixes of it are benchmarked");
  bench->add_option("--G", cfg.group_size);
  bench->add_option("--lr", cfg.learning_rate);
  bench->add_option("--epochs", cfg.epochs, "epoch cap for the matched-target run");
  bench->add_option("--check-interval", check_interval)->check(CLI::PositiveNumber);
  bench->add_option("--threads", opt.threads);
  bench->add_option("--out", opt.out_path);
  add_seed(bench);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << e.what() << '\n';
      return kExitConfig;
    }

    if (*select) {
      // config file fills in flags the command line left at their defaults
      if (!config_path.empty()) {
        auto kv = dm::KeyValueFile::load(config_path);
        auto fill = [&](const char* flag, const char* key, auto& target) {
          if (select->count(flag) == 0 && kv.has(key)) {
            std::istringstream ss(kv.get(key));
            ss >> target;
          }
        };
        fill("--budget", "budget", cfg.budget);
        fill("--lambda", "lambda", opt.lambda);
        fill("--diversity", "diversity", opt.diversity);
        fill("--G", "group_size", cfg.group_size);
        fill("--lr", "learning_rate", cfg.learning_rate);
        fill("--epochs", "epochs", cfg.epochs);
        fill("--batch-ratio", "batch_ratio", cfg.batch_ratio);
        fill("--prune-below", "prune_below", prune_below);
        fill("--init", "init", init_kind);
        fill("--shard-size", "shard_size", shard_size);
        if (opt.lambda < 0.0 || opt.lambda > 1.0)
          throw dm::ConfigError("lambda must lie in [0,1]");
      }
      cfg.init = init_kind == "quality" ? dm::OptimizerConfig::Init::quality_aware
                                        : dm::OptimizerConfig::Init::uniform;
      cfg.seed = opt.seed;
      cfg.threads = std::max(1u, opt.threads);
      return cmd_select(opt, cfg, prune_below, shard_size);
    }

    if (*greedy) {
      auto kind = dm::parse_diversity(opt.diversity);
      if (kind == dm::DiversityKind::none)
        throw dm::ConfigError("greedy requires a diversity metric");
      auto m = load_normalized(opt.embeddings_path);
      auto cache = dm::KernelCache::build(m, opt.gram_cap);
      auto t0 = std::chrono::steady_clock::now();
      auto g = dm::greedy_select(kind, cfg.budget, m, cache, opt.disf_norm);
      double ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0).count();
      dm::SelectionResult r;
      r.selected = g.selected;
      r.budget = cfg.budget;
      r.method = "greedy_" + opt.diversity;
      r.achieved["value"] = g.value_trajectory.back();
      r.achieved["wallclock_ms"] = ms;
      dm::write_selection(r, opt.out_path);
      if (!opt.trajectory_path.empty()) {
        auto rows = greedy_trajectory(g);
        for (auto& row : rows) row.wallclock_ms = ms;
        dm::write_trajectory(rows, opt.trajectory_path);
      }
      std::cout << "greedy value " << dm::csv::format_value(g.value_trajectory.back()) << " in "
                << ms << " ms -> " << opt.out_path << '\n';
      return 0;
    }

    if (*oracle) {
      auto obj = make_objective(opt);
      auto m = load_normalized(opt.embeddings_path);
      dm::QualityTable q;
      if (obj.lambda > 0.0) {
        if (opt.scores_path.empty()) throw dm::ConfigError("lambda > 0 needs --scores");
        q = load_scores(opt.scores_path);
      }
      auto cache = dm::KernelCache::build(m, opt.gram_cap);
      std::vector<std::uint64_t> all(m.n);
      std::iota(all.begin(), all.end(), 0);
      dm::ObjectiveEvaluator eval(obj, &q, &m, &cache, all, cfg.budget, opt.seed);
      auto best = dm::exhaustive_optimum(all, cfg.budget, eval);
      std::cout << "optimum " << dm::csv::format_value(best.value) << " at {";
      for (std::size_t i = 0; i < best.selected.size(); ++i)
        std::cout << (i ? "," : "") << best.selected[i];
      std::cout << "}\n";
      if (oracle->count("--out")) {
        dm::SelectionResult r;
        r.selected = best.selected;
        r.budget = cfg.budget;
        r.seed = opt.seed;
        r.lambda = obj.lambda;
        r.method = "oracle";
        r.achieved["objective"] = best.value;
        dm::write_selection(r, opt.out_path);
      }
      return 0;
    }

    if (*topk) {
      auto q = load_scores(opt.scores_path);
      auto sel = dm::topk_quality(q, cfg.budget);
      dm::SelectionResult r;
      r.selected = std::move(sel);
      r.budget = cfg.budget;
      r.method = "topk_quality";
      r.achieved["quality"] = dm::quality_metric(r.selected, q);
      dm::write_selection(r, opt.out_path);
      std::cout << "topk quality " << dm::csv::format_value(r.achieved["quality"]) << " -> "
                << opt.out_path << '\n';
      return 0;
    }

    if (*semdedup) {
      auto m = load_normalized(opt.embeddings_path);
      if (clusters == 0) clusters = std::max<std::uint32_t>(1, std::uint32_t(m.n / 100));
      if (s_target == 0) s_target = m.n;  // no cap
      auto sel = dm::semdedup_filter(m, clusters, threshold, s_target, opt.seed);
      if (sel.empty()) throw dm::ConfigError("semdedup retained no samples");
      dm::SelectionResult r;
      r.selected = std::move(sel);
      r.budget = r.selected.size();
      r.seed = opt.seed;
      r.method = "semdedup";
      r.achieved["retained"] = double(r.selected.size());
      dm::write_selection(r, opt.out_path);
      std::cout << "semdedup retained " << r.selected.size() << " -> " << opt.out_path << '\n';
      return 0;
    }

    if (*heatmap) {
      auto m = load_normalized(opt.embeddings_path);
      auto q = load_scores(opt.scores_path);
      auto kind = dm::parse_diversity(opt.diversity);
      dm::KernelCache cache;
      bool needs_cache =
          kind == dm::DiversityKind::fl_sum || kind == dm::DiversityKind::fl_max;
      if (needs_cache) cache = dm::KernelCache::build(m, opt.gram_cap);
      auto model = dm::kmeans(m, heat_k, heat_iters, opt.seed);
      auto rows = dm::cluster_heatmap(model, q, m, kind, needs_cache ? &cache : nullptr);
      dm::write_heatmap(rows, opt.out_path);
      std::cout << rows.size() << " cluster rows -> " << opt.out_path << '\n';
      return 0;
    }

    if (*stats) {
      auto sel = dm::read_selection(selection_path);
      auto t = dm::csv::read_table(lengths_path);
      int col = t.column("length");
      if (col < 0) throw dm::IoError(lengths_path + ": expected a 'length' column");
      std::vector<double> lengths;
      lengths.reserve(t.rows.size());
      for (const auto& row : t.rows) lengths.push_back(row[col]);
      auto st = dm::selection_stats(sel, lengths);
      dm::write_selection_stats(st, opt.out_path);
      std::cout << "length stats -> " << opt.out_path << '\n';
      return 0;
    }

    if (*variance) {
      auto obj = make_objective(opt);
      auto m = load_normalized(opt.embeddings_path);
      dm::QualityTable q;
      if (obj.lambda > 0.0) {
        if (opt.scores_path.empty()) throw dm::ConfigError("lambda > 0 needs --scores");
        q = load_scores(opt.scores_path);
      }
      auto cache = dm::KernelCache::build(m, opt.gram_cap);
      std::vector<std::uint64_t> all(m.n);
      std::iota(all.begin(), all.end(), 0);
      dm::ObjectiveEvaluator eval(obj, &q, &m, &cache, all, cfg.budget, opt.seed);
      auto logits = dm::uniform_init(all);
      auto rep = dm::estimator_variance_probe(logits, eval, cfg.budget, g_list, reps, opt.seed);
      dm::write_variance_report(rep, opt.out_path);
      for (std::size_t i = 0; i < g_list.size(); ++i)
        std::cout << "G=" << g_list[i] << " phi=" << dm::csv::format_value(rep.phi[i]) << '\n';
      std::cout << "variance report -> " << opt.out_path << '\n';
      return 0;
    }

    if (*bench) {
      if (sizes.empty()) throw dm::ConfigError("bench needs a non-empty --sizes list");
      auto kind = dm::parse_diversity(opt.diversity);
      if (kind == dm::DiversityKind::none)
        throw dm::ConfigError("bench requires a diversity metric");
      dm::EmbeddingMatrix source;
      if (!opt.embeddings_path.empty()) source = load_normalized(opt.embeddings_path);

      dm::csv::Table out;
      out.header = {"size", "greedy_value", "greedy_ms", "datamask_value", "datamask_ms"};
      for (auto n : sizes) {
        dm::EmbeddingMatrix m;
        if (!opt.embeddings_path.empty()) {
          if (n > source.n) throw dm::ConfigError("bench size exceeds embedding file rows");
          m.n = n;
          m.d = source.d;
          m.normalized = true;
          m.data.assign(source.data.begin(), source.data.begin() + n * source.d);
        } else {
          m = dm::make_clustered_embeddings(n, bench_dim, bench_clusters, bench_noise,
                                            opt.seed);
        }
        std::uint64_t budget = std::max<std::uint64_t>(
            1, std::uint64_t(std::llround(budget_ratio * double(n))));
        auto cache = dm::KernelCache::build(m, opt.gram_cap);

        auto t0 = std::chrono::steady_clock::now();
        auto g = dm::greedy_select(kind, budget, m, cache, opt.disf_norm);
        double greedy_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0).count();
        double greedy_value = g.value_trajectory.back();

        dm::Objective obj;
        obj.lambda = 0.0;
        obj.quality = dm::QualityKind::none;
        obj.diversity = kind;
        obj.rescale = false;  // matched target is in raw metric units
        obj.disf_norm_n = opt.disf_norm;
        std::vector<std::uint64_t> all(m.n);
        std::iota(all.begin(), all.end(), 0);
        dm::ObjectiveEvaluator eval(obj, nullptr, &m, &cache, all, budget, opt.seed);

        dm::OptimizerConfig run_cfg = cfg;
        run_cfg.budget = budget;
        run_cfg.seed = opt.seed;
        run_cfg.threads = std::max(1u, opt.threads);
        run_cfg.target_value = greedy_value;
        run_cfg.target_check_interval = check_interval;
        auto t1 = std::chrono::steady_clock::now();
        auto result = dm::run_datamask(dm::uniform_init(all), eval, run_cfg);
        double mask_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t1).count();
        double mask_value = result.selection.achieved["objective"];
        out.rows.push_back({double(n), greedy_value, greedy_ms, mask_value, mask_ms});
        std::cout << "size " << n << ": greedy " << dm::csv::format_value(greedy_value) << " ("
                  << greedy_ms << " ms), datamask " << dm::csv::format_value(mask_value) << " ("
                  << mask_ms << " ms, " << result.epochs_run << " epochs)\n";
      }
      dm::csv::write_table(opt.out_path, out);
      return 0;
    }
    return kExitConfig;
  } catch (const dm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const dm::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const dm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}
