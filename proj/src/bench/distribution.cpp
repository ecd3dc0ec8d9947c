#include "ikd/bench/harness.hpp"

#include <chrono>

namespace ikd::bench {
namespace {

struct InsertRun {
  double ms = 0;
  std::size_t rebuilds = 0;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

InsertRun time_inserts(const BenchPoints& base, const BenchPoints& incoming, bool parallel) {
  TreeConfig cfg;
  cfg.parallel_enabled = parallel;
  BenchTree tree(cfg);
  InsertRun run;
  if (base.empty()) {
    // Nothing to insert into: the batch becomes a bulk build.
    const auto t0 = std::chrono::steady_clock::now();
    tree.build(incoming);
    run.ms = ms_since(t0);
    return run;
  }
  tree.build(base);
  const RebuildStats before = tree.stats();
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& p : incoming) tree.insert_point(p);
  run.ms = ms_since(t0);
  const RebuildStats after = tree.stats();
  run.rebuilds = (after.sync_rebuilds - before.sync_rebuilds) + (after.parallel_started - before.parallel_started);
  return run;
}

}  // namespace

std::vector<DistributionRecord> run_distribution_study(const std::vector<std::size_t>& tree_sizes, double cluster_edge,
                                                       const DistributionOptions& opts) {
  if (!(cluster_edge > 0)) throw std::invalid_argument("distribution: cluster edge must be positive");
  if (opts.trials == 0 || opts.new_points == 0) throw std::invalid_argument("distribution: need trials and points");
  Rng rng(opts.seed);
  std::vector<DistributionRecord> out;
  for (const std::size_t n : tree_sizes) {
    for (std::size_t trial = 0; trial < opts.trials; ++trial) {
      BenchPoints base;
      base.reserve(n);
      for (std::size_t i = 0; i < n; ++i) base.push_back(rng.point_in(opts.workspace));

      BenchPoints sparse;
      BenchPoints compact;
      const BenchBox cluster = rng.cube_in(opts.workspace, cluster_edge);
      for (std::size_t i = 0; i < opts.new_points; ++i) {
        sparse.push_back(rng.point_in(opts.workspace));
        compact.push_back(rng.point_in(cluster));
      }

      const InsertRun s = time_inserts(base, sparse, opts.parallel);
      const InsertRun c = time_inserts(base, compact, opts.parallel);
      out.push_back({n, trial, s.ms, c.ms, s.rebuilds, c.rebuilds});
    }
  }
  return out;
}

}  // namespace ikd::bench
