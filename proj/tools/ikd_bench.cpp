// Benchmark driver: randomized workload, point-distribution study, stress runs.
#include "ikd/bench/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>

namespace {

using namespace ikd::bench;

bool parse_flag(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw CLI::ValidationError("--parallel", "expected on or off");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_randomized(WorkloadSpec spec, const std::string& out) {
  try {
    const RandomizedReport rep = run_randomized(spec);
    if (!out.empty()) emit_csv(rep.records, out);
    double inc = 0, stat = 0, q = 0, sq = 0;
    for (const auto& r : rep.records) {
      inc += r.incremental_update_time;
      stat += r.static_rebuild_time;
      q += r.query_time;
      sq += r.static_query_time;
    }
    const auto n = static_cast<double>(std::max<std::size_t>(rep.records.size(), 1));
    std::cout << "ops: " << rep.records.size() << "\n"
              << "mean incremental update (ms): " << inc / n << "\n"
              << "mean static rebuild (ms): " << stat / n << "\n"
              << "mean ikd query batch (ms): " << q / n << "\n"
              << "mean static query batch (ms): " << sq / n << "\n"
              << "final valid points: " << rep.final_valid << "\n"
              << "gated ops: " << rep.gated_ops << " (skipped during rebuild: " << rep.gate_skipped_ops << ")\n"
              << "rebuilds: " << rep.stats.sync_rebuilds << " synchronous, " << rep.stats.parallel_completed
              << " background\n";
    return 0;
  } catch (const GateFailure& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
}

int cmd_distribution(const std::vector<std::size_t>& sizes, double edge, const DistributionOptions& opts,
                     const std::string& out) {
  const auto recs = run_distribution_study(sizes, edge, opts);
  if (!out.empty()) emit_csv(recs, out);
  std::cout << "tree_size  sparse_ms  compact_ms  (median of " << opts.trials << ")\n";
  for (const std::size_t n : sizes) {
    std::vector<double> s, c;
    for (const auto& r : recs) {
      if (r.tree_size != n) continue;
      s.push_back(r.sparse_time);
      c.push_back(r.compact_time);
    }
    std::cout << n << "  " << median(s) << "  " << median(c) << "\n";
  }
  return 0;
}

int cmd_stress(const StressSpec& base, std::size_t schedules) {
  std::size_t failures = 0;
  for (std::size_t i = 0; i < schedules; ++i) {
    StressSpec spec = base;
    spec.seed = base.seed + i;
    const StressReport rep = run_stress(spec);
    if (!rep.ok) {
      ++failures;
      std::cerr << "seed " << spec.seed << ": " << rep.failure << "\n";
    }
    std::cout << "seed " << spec.seed << ": " << (rep.ok ? "ok" : "FAILED") << ", " << rep.parallel_rebuilds
              << " background rebuilds, " << rep.logged_ops << " logged ops\n";
  }
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ikd-tree benchmark harness"};
  app.require_subcommand(1);

  WorkloadSpec spec;
  std::string config_path, out, parallel = "on";
  std::uint64_t seed = 1;
  std::size_t ops = spec.ops;
  double downsample = 0;

  auto* rnd = app.add_subcommand("randomized", "insert/query/box-delete workload vs a static tree");
  rnd->add_option("--config", config_path, "key=value workload file (flags below override it)")->check(CLI::ExistingFile);
  rnd->add_option("--seed", seed, "RNG seed");
  rnd->add_option("--ops", ops, "number of operations");
  rnd->add_option("--parallel", parallel, "background rebuilds (on|off)");
  rnd->add_option("--downsample", downsample, "insert through downsampling with this cube edge");
  rnd->add_option("--out", out, "per-op CSV output");

  DistributionOptions dopts;
  std::vector<std::size_t> sizes{0, 10000, 50000, 100000};
  double edge = 1.0;
  std::string dparallel = "on";
  auto* dist = app.add_subcommand("distribution", "insertion cost of spread vs clustered points");
  dist->add_option("--sizes", sizes, "pre-built tree sizes")->delimiter(',');
  dist->add_option("--edge", edge, "edge of the cube holding clustered points");
  dist->add_option("--points", dopts.new_points, "points inserted per trial");
  dist->add_option("--trials", dopts.trials, "trials per size");
  dist->add_option("--seed", dopts.seed, "RNG seed");
  dist->add_option("--parallel", dparallel, "background rebuilds (on|off)");
  dist->add_option("--out", out, "CSV output");

  StressSpec sspec;
  std::size_t schedules = 10;
  auto* stress = app.add_subcommand("stress", "randomized schedules with background rebuilds");
  stress->add_option("--seed", sspec.seed, "first seed");
  stress->add_option("--schedules", schedules, "number of schedules");
  stress->add_option("--steps", sspec.steps, "steps per schedule");
  stress->add_option("--nmax", sspec.n_max, "background rebuild threshold");
  stress->add_option("--hold", sspec.hold_steps, "writer steps to hold each rebuild in its build phase");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rnd) {
      if (!config_path.empty()) load_config(spec, config_path);
      if (rnd->count("--seed")) spec.seed = seed;
      if (rnd->count("--ops")) spec.ops = ops;
      if (rnd->count("--parallel")) spec.parallel = parse_flag(parallel);
      if (rnd->count("--downsample")) spec.downsample = downsample;
      return cmd_randomized(spec, out);
    }
    if (*dist) {
      dopts.parallel = parse_flag(dparallel);
      return cmd_distribution(sizes, edge, dopts, out);
    }
    return cmd_stress(sspec, schedules);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
