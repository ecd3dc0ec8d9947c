#include "ikd/bench/harness.hpp"
#include "ikd/static_tree.hpp"
#include "point_set.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <tuple>

namespace ikd::bench {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Valid-set oracle; with a downsample length it also keeps one survivor per
/// grid cube, replaying the nearest-to-centre rule independently.
class WorkloadOracle {
 public:
  explicit WorkloadOracle(std::optional<double> downsample) : len_(downsample) {}

  void insert(const BenchPoint& p) {
    if (!len_) {
      set_.insert(p);
      return;
    }
    const auto cube = cube_of(p);
    auto it = cells_.find(cube);
    if (it == cells_.end()) {
      cells_.emplace(cube, p);
      set_.insert(p);
      return;
    }
    const BenchPoint& q = it->second;
    if (prefer(p, q, cube)) {
      set_.erase(q);
      set_.insert(p);
      it->second = p;
    }
  }

  void erase_in(const BenchBox& box) {
    for (const auto& p : set_.erase_in(box)) {
      if (len_) cells_.erase(cube_of(p));
    }
  }

  const BenchPoints& points() const { return set_.points(); }
  std::size_t size() const { return set_.size(); }

 private:
  using Cube = std::tuple<Scalar, Scalar, Scalar>;

  Cube cube_of(const BenchPoint& p) const {
    const auto len = static_cast<Scalar>(*len_);
    return {std::floor(p.coords[0] / len), std::floor(p.coords[1] / len), std::floor(p.coords[2] / len)};
  }

  bool prefer(const BenchPoint& cand, const BenchPoint& incumbent, const Cube& cube) const {
    const auto len = static_cast<Scalar>(*len_);
    const Scalar idx[3] = {std::get<0>(cube), std::get<1>(cube), std::get<2>(cube)};
    Scalar dc = 0, di = 0;
    for (int i = 0; i < 3; ++i) {
      const Scalar lo = idx[i] * len;
      const Scalar c = (lo + (lo + len)) / Scalar(2);
      dc += (cand.coords[i] - c) * (cand.coords[i] - c);
      di += (incumbent.coords[i] - c) * (incumbent.coords[i] - c);
    }
    if (dc != di) return dc < di;
    return lex_less(cand, incumbent);
  }

  std::optional<double> len_;
  PointSet set_;
  std::map<Cube, BenchPoint> cells_;
};

bool same_result(const KnnResult<Scalar, 3>& a, const KnnResult<Scalar, 3>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].squared_distance != b[i].squared_distance || !same_coords(a[i].point, b[i].point)) return false;
  }
  return true;
}

BenchPoints sorted(BenchPoints pts) {
  std::sort(pts.begin(), pts.end(), lex_less<Scalar, 3>);
  return pts;
}

}  // namespace

RandomizedReport run_randomized(const WorkloadSpec& spec, const OpObserver& after_update) {
  spec.validate();
  Rng rng(spec.seed);

  TreeConfig cfg;
  cfg.parallel_enabled = spec.parallel;
  if (spec.downsample) cfg.downsample_len = *spec.downsample;
  BenchTree tree(cfg);
  WorkloadOracle oracle(spec.downsample);

  auto insert_into_tree = [&](const BenchPoint& p) {
    if (spec.downsample) {
      tree.downsample_insert(p);
    } else {
      tree.insert_point(p);
    }
  };

  {
    BenchPoints initial;
    for (std::size_t i = 0; i < spec.initial_points; ++i) initial.push_back(rng.point_in(spec.workspace));
    for (const auto& p : initial) oracle.insert(p);
    if (spec.downsample) {
      for (const auto& p : initial) insert_into_tree(p);
    } else {
      tree.build(oracle.points());
    }
  }

  RandomizedReport report;
  report.records.reserve(spec.ops);
  BenchPoints batch;
  BenchPoints queries;
  std::vector<BenchBox> boxes;
  std::vector<KnnResult<Scalar, 3>> ikd_answers(spec.queries_per_op);
  std::vector<KnnResult<Scalar, 3>> static_answers(spec.queries_per_op);

  for (std::size_t op = 0; op < spec.ops; ++op) {
    batch.clear();
    queries.clear();
    boxes.clear();
    std::size_t count = spec.inserts_per_op;
    if ((op + 1) % spec.bulk_insert_every == 0) count += spec.bulk_insert_count;
    for (std::size_t i = 0; i < count; ++i) batch.push_back(rng.point_in(spec.workspace));
    if ((op + 1) % spec.box_delete_every == 0) {
      for (std::size_t i = 0; i < spec.boxes_per_delete; ++i) boxes.push_back(rng.cube_in(spec.workspace, spec.delete_box_edge));
    }
    for (std::size_t i = 0; i < spec.queries_per_op; ++i) queries.push_back(rng.point_in(spec.workspace));

    TimingRecord rec;
    rec.op_index = op;

    auto t0 = Clock::now();
    for (const auto& p : batch) insert_into_tree(p);
    for (const auto& b : boxes) tree.box_delete(b);
    rec.incremental_update_time = ms_since(t0);

    for (const auto& p : batch) oracle.insert(p);
    for (const auto& b : boxes) oracle.erase_in(b);
    if (after_update) after_update(op, tree);

    const bool consistent = !tree.rebuild_active();
    t0 = Clock::now();
    for (std::size_t i = 0; i < queries.size(); ++i) ikd_answers[i] = tree.knn(queries[i], spec.query_k);
    rec.query_time = ms_since(t0);

    t0 = Clock::now();
    const StaticTree<Scalar, 3> baseline = static_build<Scalar, 3>(oracle.points());
    rec.static_rebuild_time = ms_since(t0);

    t0 = Clock::now();
    for (std::size_t i = 0; i < queries.size(); ++i) static_answers[i] = static_knn(baseline, queries[i], spec.query_k);
    rec.static_query_time = ms_since(t0);

    if (op % spec.gate_every == 0) {
      if (!consistent) {
        ++report.gate_skipped_ops;
      } else {
        ++report.gated_ops;
        for (std::size_t i = 0; i < queries.size(); ++i) {
          if (!same_result(ikd_answers[i], static_answers[i])) {
            throw GateFailure(op, "ikd-tree and static tree disagree on query " + std::to_string(i));
          }
          if (i < spec.gate_brute_force_queries &&
              !same_result(static_answers[i], brute_force_knn(oracle.points(), queries[i], spec.query_k))) {
            throw GateFailure(op, "static tree disagrees with exhaustive scan on query " + std::to_string(i));
          }
        }
      }
    }

    rec.tree_size = tree.treesize();
    const BalanceMetrics m = tree.metrics();
    rec.alpha_bal_observed = m.alpha_bal_observed;
    rec.alpha_del_observed = m.alpha_del_observed;
    report.records.push_back(rec);
  }

  tree.wait_for_rebuild();
  const BenchPoints got = sorted(tree.valid_points());
  const BenchPoints want = sorted(oracle.points());
  report.final_valid = got.size();
  report.oracle_valid = want.size();
  if (got.size() != want.size() ||
      !std::equal(got.begin(), got.end(), want.begin(), [](const auto& a, const auto& b) { return same_coords(a, b); })) {
    throw GateFailure(spec.ops, "final valid sets differ (" + std::to_string(got.size()) + " vs " +
                                    std::to_string(want.size()) + " points)");
  }
  report.stats = tree.stats();
  return report;
}

double regression_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("regression_slope: need two or more samples");
  const auto n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0) throw std::invalid_argument("regression_slope: xs are all equal");
  return sxy / sxx;
}

}  // namespace ikd::bench
