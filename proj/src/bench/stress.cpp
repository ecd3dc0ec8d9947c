#include "ikd/bench/harness.hpp"
#include "ikd/static_tree.hpp"
#include "point_set.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>

namespace ikd::bench {
namespace {

/// Parks the rebuild thread at the start of its build phase until the writer
/// releases it. Disabled around writer calls that may block on the rebuild.
class PhaseGate {
 public:
  void on_phase(RebuildPhase phase) {
    if (phase != RebuildPhase::build) return;
    std::unique_lock lk(m_);
    if (!enabled_) return;
    const std::uint64_t mine = ++held_;
    holding_ = true;
    cv_.wait_for(lk, std::chrono::seconds(10), [&] { return !enabled_ || released_ >= mine; });
    holding_ = false;
  }

  bool holding() {
    std::lock_guard lk(m_);
    return holding_;
  }

  void release() {
    {
      std::lock_guard lk(m_);
      released_ = held_;
    }
    cv_.notify_all();
  }

  void set_enabled(bool on) {
    {
      std::lock_guard lk(m_);
      enabled_ = on;
    }
    cv_.notify_all();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  bool enabled_ = true;
  bool holding_ = false;
  std::uint64_t held_ = 0;
  std::uint64_t released_ = 0;
};

class StressRun {
 public:
  explicit StressRun(const StressSpec& spec) : spec_(spec), rng_(spec.seed), tree_(make_config(spec)) {
    if (spec_.hold_steps > 0) {
      tree_.set_phase_observer([this](RebuildPhase ph) { gate_.on_phase(ph); });
    } else {
      gate_.set_enabled(false);
    }
  }

  ~StressRun() {
    gate_.set_enabled(false);
    tree_.set_phase_observer(nullptr);
  }

  StressReport run() {
    StressReport rep;
    try {
      BenchPoints initial;
      for (std::size_t i = 0; i < spec_.initial_points; ++i) {
        const BenchPoint p = fresh_point();
        if (oracle_.insert(p)) initial.push_back(p);
      }
      tree_.build(initial);

      for (std::size_t step = 0; step < spec_.steps; ++step) {
        if (!tree_.rebuild_active()) stale_ok_ = PointSet{};
        one_step(rep, step);
        advance_gate();
        if ((step + 1) % 100 == 0) checkpoint(step);
      }
      gate_.set_enabled(false);
      checkpoint(spec_.steps);
    } catch (const std::exception& e) {
      rep.ok = false;
      rep.failure = e.what();
    }
    gate_.set_enabled(false);
    const RebuildStats st = tree_.stats();
    rep.parallel_rebuilds = st.parallel_completed;
    rep.logged_ops = st.logged_ops;
    rep.exclusive_windows = st.exclusive_windows;
    rep.exclusive_reference_stores = st.exclusive_reference_stores;
    rep.max_exclusive_ns = st.max_exclusive_ns;
    return rep;
  }

 private:
  static TreeConfig make_config(const StressSpec& spec) {
    TreeConfig cfg;
    cfg.n_max = spec.n_max;
    cfg.parallel_enabled = true;
    cfg.downsample_len = 0.5;
    return cfg;
  }

  [[noreturn]] void fail(std::size_t step, const std::string& what) {
    throw std::runtime_error("step " + std::to_string(step) + ": " + what);
  }

  BenchPoint fresh_point() {
    BenchPoint p = rng_.point_in(workspace_);
    if (rng_.uniform() < 0.3) {
      // Snap to a coarse grid so split coordinates tie often.
      for (int i = 0; i < 3; ++i) p.coords[i] = std::round(p.coords[i] * 4.0f) / 4.0f;
    }
    return p;
  }

  BenchPoint pick_known() {
    const auto& pts = oracle_.points();
    const auto& gone = removed_.points();
    if (!gone.empty() && (pts.empty() || rng_.uniform() < 0.3)) return gone[rng_.below(gone.size())];
    if (pts.empty()) return fresh_point();
    return pts[rng_.below(pts.size())];
  }

  /// Points removed by a queued update stay visible to queries until the
  /// rebuild swaps; anything removed directly must disappear at once.
  void note_removed(const BenchPoint& p, bool deferred) {
    removed_.insert(p);
    if (deferred) stale_ok_.insert(p);
  }

  void note_inserted(const BenchPoint& p) {
    oracle_.insert(p);
    removed_.erase(p);
  }

  static bool deferred(const UpdateOutcome& out) { return out.deferred; }

  /// Ops that can block on the rebuild run with the gate open.
  template <typename Fn>
  void ungated(Fn&& fn) {
    gate_.set_enabled(false);
    fn();
    if (spec_.hold_steps > 0) gate_.set_enabled(true);
  }

  void advance_gate() {
    if (spec_.hold_steps == 0) return;
    if (!gate_.holding()) {
      held_for_ = 0;
      return;
    }
    if (++held_for_ >= spec_.hold_steps) {
      gate_.release();
      held_for_ = 0;
    }
  }

  void one_step(StressReport& rep, std::size_t step) {
    const double r = rng_.uniform();
    if (r < 0.05) {
      // A burst of clustered points skews large subtrees.
      const BenchBox spot = rng_.cube_in(workspace_, 0.4);
      const std::size_t n = 20 + rng_.below(60);
      for (std::size_t i = 0; i < n; ++i) {
        const BenchPoint p = rng_.point_in(spot);
        tree_.insert_point(p);
        note_inserted(p);
      }
    } else if (r < 0.35) {
      const BenchPoint p = rng_.uniform() < 0.8 ? fresh_point() : pick_known();
      tree_.insert_point(p);
      note_inserted(p);
    } else if (r < 0.50) {
      const BenchPoint p = rng_.uniform() < 0.95 ? pick_known() : fresh_point();
      const bool d = deferred(tree_.delete_point(p));
      if (oracle_.erase(p)) note_removed(p, d);
    } else if (r < 0.55) {
      const BenchBox box = rng_.cube_in(workspace_, rng_.uniform(0.5, 3.0));
      const bool d = deferred(tree_.box_delete(box));
      for (const auto& p : oracle_.erase_in(box)) note_removed(p, d);
    } else if (r < 0.58) {
      const BenchBox box = rng_.cube_in(workspace_, rng_.uniform(0.5, 3.0));
      ungated([&] {
        // Tombstones inside a subtree under rebuild may be purged, so only
        // reinsert against a quiescent tree.
        tree_.wait_for_rebuild();
        for (const auto& p : tree_.tombstones()) {
          if (box.contains(p)) note_inserted(p);
        }
        tree_.box_reinsert(box);
      });
    } else if (r < 0.63) {
      const BenchPoint p = fresh_point();
      bool d = false;
      ungated([&] { d = deferred(tree_.downsample_insert(p)); });
      downsample_oracle(p, d);
    } else if (r < 0.93) {
      check_knn(rep, step);
    } else {
      check_box(rep, step);
    }
  }

  void downsample_oracle(const BenchPoint& p, bool deferred) {
    const auto len = static_cast<Scalar>(0.5);
    BenchBox::Vector center;
    for (int i = 0; i < 3; ++i) {
      const Scalar lo = std::floor(p.coords[i] / len) * len;
      center[i] = (lo + (lo + len)) / Scalar(2);
    }
    auto same_cube = [&](const BenchPoint& q) {
      for (int i = 0; i < 3; ++i) {
        if (std::floor(q.coords[i] / len) != std::floor(p.coords[i] / len)) return false;
      }
      return true;
    };
    auto dist = [&](const BenchPoint& q) {
      Scalar s = 0;
      for (int i = 0; i < 3; ++i) s += (q.coords[i] - center[i]) * (q.coords[i] - center[i]);
      return s;
    };
    BenchPoints members;
    for (const auto& q : oracle_.points()) {
      if (same_cube(q)) members.push_back(q);
    }
    BenchPoint winner = p;
    for (const auto& q : members) {
      const Scalar dq = dist(q), dw = dist(winner);
      if (dq < dw || (dq == dw && lex_less(q, winner))) winner = q;
    }
    for (const auto& q : members) {
      if (!same_coords(q, winner)) {
        oracle_.erase(q);
        note_removed(q, deferred);
      }
    }
    if (same_coords(winner, p)) note_inserted(p);
  }

  void check_knn(StressReport& rep, std::size_t step) {
    const BenchPoint q = rng_.point_in(workspace_);
    const std::size_t k = 1 + rng_.below(8);
    std::optional<Scalar> max_dist;
    if (rng_.uniform() < 0.3) max_dist = static_cast<Scalar>(rng_.uniform(0.2, 2.0));
    const bool quiescent = !tree_.rebuild_active();
    const auto got = tree_.knn(q, k, max_dist);
    ++rep.queries;
    if (quiescent) {
      const auto want = brute_force_knn(oracle_.points(), q, k, max_dist);
      if (got.size() != want.size()) fail(step, "knn size mismatch");
      for (std::size_t i = 0; i < got.size(); ++i) {
        if (!same_coords(got[i].point, want[i].point)) fail(step, "knn result differs from exhaustive scan");
      }
      return;
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
      const auto& n = got[i];
      if (n.squared_distance != squared_distance(n.point, q)) fail(step, "knn reported a wrong distance");
      if (i > 0 && neighbor_less(n, got[i - 1])) fail(step, "knn result not ordered");
      if (!oracle_.contains(n.point) && !stale_ok_.contains(n.point)) {
        fail(step, "knn returned a deleted point");
      }
    }
  }

  void check_box(StressReport& rep, std::size_t step) {
    const BenchBox box = rng_.cube_in(workspace_, rng_.uniform(0.5, 4.0));
    const bool quiescent = !tree_.rebuild_active();
    auto got = tree_.box_search(box);
    ++rep.queries;
    for (const auto& p : got) {
      if (!box.contains(p)) fail(step, "box search returned a point outside the box");
      if (!oracle_.contains(p) && !(stale_ok_.contains(p) && !quiescent)) {
        fail(step, "box search returned a deleted point");
      }
    }
    if (quiescent && got.size() != brute_force_box(oracle_.points(), box).size()) {
      fail(step, "box search size differs from exhaustive scan");
    }
  }

  void checkpoint(std::size_t step) {
    ungated([&] {
      if (auto err = tree_.audit()) fail(step, "audit: " + *err);
      auto got = tree_.valid_points();
      if (got.size() != oracle_.size()) {
        fail(step, "valid set size " + std::to_string(got.size()) + " vs oracle " + std::to_string(oracle_.size()));
      }
      for (const auto& p : got) {
        if (!oracle_.contains(p)) fail(step, "tree holds a point the oracle does not");
      }
    });
  }

  StressSpec spec_;
  Rng rng_;
  BenchBox workspace_{BenchBox::Vector::Zero(), BenchBox::Vector::Constant(10.0f)};
  PhaseGate gate_;
  BenchTree tree_;
  PointSet oracle_;
  PointSet removed_;
  PointSet stale_ok_;
  std::size_t held_for_ = 0;
};

}  // namespace

StressReport run_stress(const StressSpec& spec) {
  if (spec.n_max == 0) throw std::invalid_argument("stress: n_max must be positive");
  StressRun run(spec);
  return run.run();
}

}  // namespace ikd::bench
