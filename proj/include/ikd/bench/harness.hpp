#pragma once

#include "ikd/ikd_tree.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ikd::bench {

using Scalar = float;
using BenchPoint = Point<Scalar, 3>;
using BenchBox = AlignedBox<Scalar, 3>;
using BenchPoints = PointVector<Scalar, 3>;
using BenchTree = IkdTree<Scalar, 3>;

/// mt19937_64 with an explicit bits-to-double mapping, so a seed yields the
/// same stream on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  BenchPoint point_in(const BenchBox& box) {
    BenchPoint p;
    for (int i = 0; i < 3; ++i) p.coords[i] = static_cast<Scalar>(uniform(box.min(i), box.max(i)));
    return p;
  }

  /// Axis-aligned cube of the given edge placed uniformly inside `box`.
  BenchBox cube_in(const BenchBox& box, double edge) {
    BenchBox::Vector lo;
    for (int i = 0; i < 3; ++i) {
      const double hi = std::max<double>(box.min(i), box.max(i) - edge);
      lo[i] = static_cast<Scalar>(uniform(box.min(i), hi));
    }
    return BenchBox(lo, (lo.array() + static_cast<Scalar>(edge)).matrix());
  }

 private:
  std::mt19937_64 engine_;
};

struct WorkloadSpec {
  std::uint64_t seed = 1;
  BenchBox workspace{BenchBox::Vector::Zero(), BenchBox::Vector::Constant(10.0f)};
  std::size_t initial_points = 5000;
  std::size_t ops = 1000;
  std::size_t inserts_per_op = 200;
  std::size_t queries_per_op = 200;
  std::size_t query_k = 5;
  std::size_t box_delete_every = 50;
  std::size_t boxes_per_delete = 4;
  double delete_box_edge = 1.5;
  std::size_t bulk_insert_every = 100;
  std::size_t bulk_insert_count = 2000;

  // Harness knobs.
  bool parallel = true;
  std::optional<double> downsample;
  /// Compare ikd-tree and static answers every `gate_every` ops (1 = all).
  std::size_t gate_every = 10;
  /// Queries per gated op also checked against the exhaustive scan.
  std::size_t gate_brute_force_queries = 5;

  void validate() const;
};

/// Apply one `key=value` assignment (WorkloadSpec field names).
void apply_config_entry(WorkloadSpec& spec, const std::string& key, const std::string& value);
/// Parse a key=value text file; blank lines and '#' comments are skipped.
void load_config(WorkloadSpec& spec, const std::string& path);
void parse_config(WorkloadSpec& spec, const std::string& text);

/// Times are milliseconds.
struct TimingRecord {
  std::size_t op_index = 0;
  double incremental_update_time = 0;
  double query_time = 0;
  double static_rebuild_time = 0;
  double static_query_time = 0;
  std::size_t tree_size = 0;
  double alpha_bal_observed = 0;
  double alpha_del_observed = 0;
};

struct RandomizedReport {
  std::vector<TimingRecord> records;
  std::size_t final_valid = 0;
  std::size_t oracle_valid = 0;
  std::size_t gated_ops = 0;
  std::size_t gate_skipped_ops = 0;
  RebuildStats stats;
};

class GateFailure : public std::runtime_error {
 public:
  GateFailure(std::size_t op, const std::string& what)
      : std::runtime_error("correctness gate failed at op " + std::to_string(op) + ": " + what), op_index(op) {}
  std::size_t op_index;
};

/// Called after each op's updates are applied, outside the timed sections.
using OpObserver = std::function<void(std::size_t op, BenchTree& tree)>;

/// Randomized insert/query/box-delete workload run against both the
/// incremental tree and a static tree rebuilt from scratch every op.
/// Throws GateFailure when the two disagree.
RandomizedReport run_randomized(const WorkloadSpec& spec, const OpObserver& after_update = {});

struct DistributionOptions {
  std::uint64_t seed = 7;
  BenchBox workspace{BenchBox::Vector::Zero(), BenchBox::Vector::Constant(10.0f)};
  std::size_t new_points = 4000;
  std::size_t trials = 5;
  bool parallel = true;
};

struct DistributionRecord {
  std::size_t tree_size = 0;
  std::size_t trial = 0;
  double sparse_time = 0;
  double compact_time = 0;
  std::size_t sparse_rebuilds = 0;
  std::size_t compact_rebuilds = 0;
};

/// Insertion cost of evenly spread vs clustered points on pre-built trees.
std::vector<DistributionRecord> run_distribution_study(const std::vector<std::size_t>& tree_sizes, double cluster_edge,
                                                       const DistributionOptions& opts = {});

struct StressSpec {
  std::uint64_t seed = 1;
  std::size_t initial_points = 2000;
  std::size_t steps = 600;
  std::size_t n_max = 300;
  /// Hold the rebuild thread in its build phase until this many writer
  /// steps have run, so the operation log is exercised. 0 = free running.
  std::size_t hold_steps = 0;
};

struct StressReport {
  bool ok = true;
  std::string failure;
  std::size_t queries = 0;
  std::size_t parallel_rebuilds = 0;
  std::size_t logged_ops = 0;
  std::size_t exclusive_windows = 0;
  std::size_t exclusive_reference_stores = 0;
  std::int64_t max_exclusive_ns = 0;
};

/// One randomized schedule of updates and queries with background rebuilds
/// enabled, checked against a sequential oracle.
StressReport run_stress(const StressSpec& spec);

void emit_csv(const std::vector<TimingRecord>& records, const std::string& path);
void emit_csv(const std::vector<DistributionRecord>& records, const std::string& path);
std::vector<TimingRecord> read_timing_csv(const std::string& path);
std::vector<DistributionRecord> read_distribution_csv(const std::string& path);

/// Least-squares slope of ys against xs.
double regression_slope(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace ikd::bench
