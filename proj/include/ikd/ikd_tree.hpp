#pragma once

#include "ikd/balance.hpp"
#include "ikd/knn.hpp"
#include "ikd/tree_node.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ikd {

struct UpdateOutcome {
  /// Points whose logical membership changed.
  std::size_t affected = 0;
  /// Subtree rebuilds started by this update (synchronous or background).
  std::size_t rebuilds_triggered = 0;
  /// The update targeted a subtree under background rebuild and was queued
  /// in the operation log; `affected` is not known yet.
  bool deferred = false;

  UpdateOutcome& operator+=(const UpdateOutcome& o) {
    affected += o.affected;
    rebuilds_triggered += o.rebuilds_triggered;
    deferred = deferred || o.deferred;
    return *this;
  }
};

enum class OpKind { insert_point, delete_point, box_delete, box_reinsert, downsample_insert };

/// Stages of a background rebuild, reported to an optional observer.
enum class RebuildPhase { flatten, build, replay, swapped, reclaimed };

struct RebuildStats {
  std::size_t sync_rebuilds = 0;
  std::size_t parallel_started = 0;
  std::size_t parallel_completed = 0;
  std::size_t deferred_triggers = 0;
  std::size_t logged_ops = 0;
  std::size_t replayed_ops = 0;
  /// Number of updates-and-queries exclusive sections entered.
  std::size_t exclusive_windows = 0;
  /// Child-reference stores performed inside those sections.
  std::size_t exclusive_reference_stores = 0;
  std::int64_t max_exclusive_ns = 0;
};

/// Incremental k-d tree.
///
/// One writer context calls every public member. Large violating subtrees
/// are rebuilt by an internal worker thread; while that runs, updates that
/// target the subtree are queued in an operation log and replayed on the new
/// subtree, and queries keep reading the old one.
template <typename Scalar, int Dim = 3>
class IkdTree {
 public:
  using PointType = Point<Scalar, Dim>;
  using Box = AlignedBox<Scalar, Dim>;
  using Node = TreeNode<Scalar, Dim>;
  using Points = PointVector<Scalar, Dim>;
  using Result = KnnResult<Scalar, Dim>;

  struct OperationLogEntry {
    OpKind kind;
    PointType point;
    Box box;
    std::uint64_t sequence;

    EIGEN_MAKE_ALIGNED_OPERATOR_NEW
  };

  explicit IkdTree(TreeConfig cfg = {}) : cfg_(cfg) {
    cfg_.validate();
    worker_ = std::thread([this] { worker_loop(); });
  }

  IkdTree(const IkdTree&) = delete;
  IkdTree& operator=(const IkdTree&) = delete;

  ~IkdTree() {
    {
      std::lock_guard lk(state_mutex_);
      stop_ = true;
    }
    state_cv_.notify_all();
    worker_.join();
  }

  const TreeConfig& config() const { return cfg_; }

  /// Replace the contents with a balanced tree over `points`.
  void build(Points points) {
    check_points(points);
    wait_for_rebuild();
    std::unique_lock upd(update_mutex_);
    std::unique_lock all(access_mutex_);
    reconcile();
    root_ = ikd::build<Scalar, Dim>(std::move(points));
  }

  UpdateOutcome insert_point(const PointType& p) {
    check_point(p);
    return locked_update([&](Ctx& ctx) { insert_impl(root_, p, ctx); });
  }

  /// Box-wise insertion: the points go in one by one.
  UpdateOutcome insert_points(std::span<const PointType> pts) {
    for (const auto& p : pts) check_point(p);
    return locked_update([&](Ctx& ctx) {
      for (const auto& p : pts) insert_impl(root_, p, ctx);
    });
  }

  UpdateOutcome delete_point(const PointType& p) {
    check_point(p);
    return locked_update([&](Ctx& ctx) { delete_impl(root_, p, ctx); });
  }

  UpdateOutcome box_delete(const Box& box) {
    return locked_update([&](Ctx& ctx) { box_update(root_, box, true, ctx); });
  }

  UpdateOutcome box_reinsert(const Box& box) {
    return locked_update([&](Ctx& ctx) { box_update(root_, box, false, ctx); });
  }

  /// Insert `p` keeping at most one valid point per grid cube of edge
  /// downsample_len: the one nearest the cube centre.
  UpdateOutcome downsample_insert(const PointType& p) {
    check_point(p);
    for (;;) {
      std::unique_lock upd(update_mutex_);
      std::shared_lock acc(access_mutex_);
      reconcile();
      if (target_ != nullptr) {
        const Box search = downsample_search_box(p);
        if (cell_.strictly_contains(search)) {
          UpdateOutcome out;
          out.deferred = true;
          log_op(OpKind::downsample_insert, p, search);
          return out;
        }
        if (cell_.intersects(search)) {
          // Straddles the rebuilding subtree: neither side can decide alone.
          acc.unlock();
          upd.unlock();
          wait_for_rebuild();
          continue;
        }
      }
      UpdateOutcome out;
      Ctx ctx{cfg_, out, true, {}};
      downsample_impl(root_, p, ctx);
      return out;
    }
  }

  Result knn(const PointType& query, std::size_t k, std::optional<Scalar> max_dist = std::nullopt,
             SearchOptions opts = {}) {
    std::shared_lock acc(access_mutex_);
    reconcile();
    return knn_search(root_.get(), query, k, max_dist, opts);
  }

  Points box_search(const Box& box) {
    std::shared_lock acc(access_mutex_);
    reconcile();
    return ikd::box_search(root_.get(), box);
  }

  /// Valid points currently visible to queries.
  Points valid_points() {
    std::shared_lock acc(access_mutex_);
    reconcile();
    Points out;
    collect_valid<Scalar, Dim>(root_.get(), out);
    return out;
  }

  /// Deleted-labeled points that have not been purged by a rebuild yet.
  Points tombstones() {
    std::shared_lock acc(access_mutex_);
    reconcile();
    Points out;
    collect_tombstones<Scalar, Dim>(root_.get(), out);
    return out;
  }

  std::size_t size() {
    std::shared_lock acc(access_mutex_);
    reconcile();
    return root_ ? root_->valid_count() : 0;
  }

  std::size_t treesize() {
    std::shared_lock acc(access_mutex_);
    reconcile();
    return root_ ? root_->treesize : 0;
  }

  std::size_t height() {
    std::shared_lock acc(access_mutex_);
    reconcile();
    return ikd::height<Scalar, Dim>(root_.get());
  }

  BalanceMetrics metrics() {
    std::shared_lock acc(access_mutex_);
    reconcile();
    return ikd::metrics<Scalar, Dim>(root_.get());
  }

  /// Structural invariant check; waits for any background rebuild first.
  std::optional<std::string> audit() {
    wait_for_rebuild();
    std::shared_lock acc(access_mutex_);
    reconcile();
    return ikd::audit<Scalar, Dim>(root_.get());
  }

  /// Root for inspection. Only meaningful while no rebuild is active.
  const Node* root() const { return root_.get(); }

  bool rebuild_active() const {
    const State s = state_.load();
    return s == State::requested || s == State::running;
  }

  void wait_for_rebuild() {
    {
      std::unique_lock lk(state_mutex_);
      state_cv_.wait(lk, [&] {
        const State s = state_.load();
        return s == State::idle || s == State::swapped;
      });
    }
    std::shared_lock acc(access_mutex_);
    reconcile();
  }

  RebuildStats stats() const {
    RebuildStats s;
    s.sync_rebuilds = sync_rebuilds_.load();
    s.parallel_started = parallel_started_.load();
    s.parallel_completed = parallel_completed_.load();
    s.deferred_triggers = deferred_triggers_.load();
    s.logged_ops = logged_ops_.load();
    s.replayed_ops = replayed_ops_.load();
    s.exclusive_windows = exclusive_windows_.load();
    s.exclusive_reference_stores = exclusive_reference_stores_.load();
    s.max_exclusive_ns = max_exclusive_ns_.load();
    return s;
  }

  /// Called from the rebuild thread at each phase boundary, with no lock
  /// held. Test instrumentation; may block to hold the rebuild in a phase.
  void set_phase_observer(std::function<void(RebuildPhase)> fn) {
    std::lock_guard lk(observer_mutex_);
    observer_ = std::move(fn);
  }

  /// Index of the downsample cube containing `p` along `axis`.
  Scalar cube_index(const PointType& p, int axis) const {
    return std::floor(p[axis] / static_cast<Scalar>(cfg_.downsample_len));
  }

 private:
  enum class State { idle, requested, running, swapped };

  struct Ctx {
    const TreeConfig& cfg;
    UpdateOutcome& out;
    /// Writer context on the live tree (as opposed to replay on a private subtree).
    bool coordinated;
    /// Ancestors of the current recursion, root first.
    std::vector<Node*> stack;
  };

  static void check_point(const PointType& p) {
    if (!is_finite(p)) throw std::invalid_argument("non-finite coordinate");
  }
  static void check_points(const Points& pts) {
    for (const auto& p : pts) check_point(p);
  }

  template <typename Fn>
  UpdateOutcome locked_update(Fn&& fn) {
    std::unique_lock upd(update_mutex_);
    std::shared_lock acc(access_mutex_);
    reconcile();
    UpdateOutcome out;
    Ctx ctx{cfg_, out, true, {}};
    fn(ctx);
    return out;
  }

  // ---- rebuild coordination (writer side) ----

  bool is_target(const Node* n, const Ctx& ctx) const { return ctx.coordinated && target_ != nullptr && n == target_; }

  bool on_rebuild_path(const Node* n, const Ctx& ctx) const {
    if (!ctx.coordinated || target_ == nullptr) return false;
    for (const Node* a : path_) {
      if (a == n) return true;
    }
    return false;
  }

  void log_op(OpKind kind, const PointType& p, const Box& box) {
    std::lock_guard lk(log_mutex_);
    log_.push_back(OperationLogEntry{kind, p, box, next_sequence_++});
    logged_ops_.fetch_add(1);
  }

  /// After a swap, refresh ancestors of the replaced subtree and return to idle.
  void reconcile() {
    if (state_.load() != State::swapped) return;
    for (auto it = path_.rbegin(); it != path_.rend(); ++it) pullup(**it);
    target_ = nullptr;
    target_slot_ = nullptr;
    path_.clear();
    {
      std::lock_guard lk(state_mutex_);
      state_ = State::idle;
    }
    state_cv_.notify_all();
  }

  void request_parallel_rebuild(NodePtr<Scalar, Dim>& slot, const Ctx& ctx) {
    target_ = slot.get();
    target_slot_ = &slot;
    path_.assign(ctx.stack.begin(), ctx.stack.end() - 1);
    cell_ = Box::unbounded();
    for (std::size_t i = 0; i < path_.size(); ++i) {
      const Node* a = path_[i];
      const Node* next = i + 1 < path_.size() ? path_[i + 1] : target_;
      if (a->left.get() == next) {
        cell_.clamp_max(a->axis, a->point[a->axis]);
      } else {
        cell_.clamp_min(a->axis, a->point[a->axis]);
      }
    }
    parallel_started_.fetch_add(1);
    {
      std::lock_guard lk(state_mutex_);
      state_ = State::requested;
    }
    state_cv_.notify_all();
  }

  void maybe_rebalance(NodePtr<Scalar, Dim>& slot, Ctx& ctx) {
    if (!ctx.cfg.auto_rebalance || !slot || !violate_criterion(*slot, ctx.cfg)) return;
    const bool background = ctx.coordinated && ctx.cfg.parallel_enabled && slot->treesize >= ctx.cfg.n_max;
    if (!background) {
      rebuild(slot);
      sync_rebuilds_.fetch_add(1);
      ++ctx.out.rebuilds_triggered;
      return;
    }
    if (target_ != nullptr) {
      deferred_triggers_.fetch_add(1);
      return;
    }
    request_parallel_rebuild(slot, ctx);
    ++ctx.out.rebuilds_triggered;
  }

  // ---- point-wise updates ----

  /// Search for a node storing exactly `p`, exploring both children when the
  /// split coordinate ties. `path` records left(false)/right(true) steps.
  bool find_path(Node* n, const PointType& p, std::vector<bool>& path, bool& touched_target, const Ctx& ctx) {
    if (n == nullptr) return false;
    if (is_target(n, ctx)) {
      touched_target = true;
      return false;
    }
    pushdown(*n);
    if (same_coords(n->point, p)) return true;
    const Scalar v = n->point[n->axis];
    if (p[n->axis] <= v) {
      path.push_back(false);
      if (find_path(n->left.get(), p, path, touched_target, ctx)) return true;
      path.pop_back();
    }
    if (p[n->axis] >= v) {
      path.push_back(true);
      if (find_path(n->right.get(), p, path, touched_target, ctx)) return true;
      path.pop_back();
    }
    return false;
  }

  /// Follow `path` from `slot`, apply `action` to the final node, then
  /// pull summaries up and check the criterion on the way back.
  template <typename Action>
  void walk(NodePtr<Scalar, Dim>& slot, const std::vector<bool>& path, std::size_t i, Action&& action, Ctx& ctx) {
    Node& n = *slot;
    ctx.stack.push_back(&n);
    pushdown(n);
    if (i == path.size()) {
      action(n);
    } else {
      walk(path[i] ? n.right : n.left, path, i + 1, action, ctx);
    }
    pullup(n);
    maybe_rebalance(slot, ctx);
    ctx.stack.pop_back();
  }

  void append(NodePtr<Scalar, Dim>& slot, const PointType& p, int axis, Ctx& ctx) {
    if (!slot) {
      slot = std::make_unique<Node>(p, axis);
      ++ctx.out.affected;
      return;
    }
    Node& n = *slot;
    ctx.stack.push_back(&n);
    pushdown(n);
    const int next_axis = (n.axis + 1) % Dim;
    if (p[n.axis] < n.point[n.axis]) {
      append(n.left, p, next_axis, ctx);
    } else {
      append(n.right, p, next_axis, ctx);
    }
    pullup(n);
    maybe_rebalance(slot, ctx);
    ctx.stack.pop_back();
  }

  void insert_impl(NodePtr<Scalar, Dim>& root, const PointType& p, Ctx& ctx) {
    std::vector<bool> path;
    bool touched = false;
    if (find_path(root.get(), p, path, touched, ctx)) {
      walk(root, path, 0, [&](Node& n) {
        if (n.deleted) {
          n.deleted = false;
          ++ctx.out.affected;
        }
      }, ctx);
      return;
    }
    if (touched) {
      log_op(OpKind::insert_point, p, Box(p.coords));
      ctx.out.deferred = true;
      return;
    }
    append(root, p, 0, ctx);
  }

  void delete_impl(NodePtr<Scalar, Dim>& root, const PointType& p, Ctx& ctx) {
    std::vector<bool> path;
    bool touched = false;
    if (find_path(root.get(), p, path, touched, ctx)) {
      walk(root, path, 0, [&](Node& n) {
        if (!n.deleted) {
          n.deleted = true;
          ++ctx.out.affected;
        }
      }, ctx);
      return;
    }
    if (touched) {
      log_op(OpKind::delete_point, p, Box(p.coords));
      ctx.out.deferred = true;
    }
  }

  // ---- box-wise updates ----

  void box_update(NodePtr<Scalar, Dim>& slot, const Box& box, bool remove, Ctx& ctx) {
    if (!slot) return;
    Node& n = *slot;
    if (is_target(&n, ctx)) {
      if (cell_.intersects(box)) {
        log_op(remove ? OpKind::box_delete : OpKind::box_reinsert, PointType(box.center()), box);
        ctx.out.deferred = true;
      }
      return;
    }
    const bool on_path = on_rebuild_path(&n, ctx);
    pushdown(n);
    if (!on_path) {
      if (remove ? n.treedeleted : n.invalidnum == 0) return;
      if (!box.intersects(n.range)) return;
      if (box.contains(n.range)) {
        if (remove) {
          ctx.out.affected += n.valid_count();
          n.invalidnum = n.treesize;
        } else {
          ctx.out.affected += n.invalidnum;
          n.invalidnum = 0;
        }
        n.deleted = remove;
        n.treedeleted = remove;
        n.pushdown = true;
        // A fully deleted subtree always breaks the alpha-deleted bound.
        if (remove) {
          ctx.stack.push_back(&n);
          maybe_rebalance(slot, ctx);
          ctx.stack.pop_back();
        }
        return;
      }
    } else if (!box.intersects(n.range) && !box.intersects(cell_)) {
      return;
    }
    ctx.stack.push_back(&n);
    if (box.contains(n.point) && n.deleted != remove) {
      n.deleted = remove;
      ++ctx.out.affected;
    }
    box_update(n.left, box, remove, ctx);
    box_update(n.right, box, remove, ctx);
    pullup(n);
    maybe_rebalance(slot, ctx);
    ctx.stack.pop_back();
  }

  // ---- downsampling ----

  Box downsample_cube(const PointType& p) const {
    const Scalar len = static_cast<Scalar>(cfg_.downsample_len);
    typename Box::Vector lo;
    for (int i = 0; i < Dim; ++i) lo[i] = cube_index(p, i) * len;
    return Box::cube(lo, len);
  }

  /// Cube padded slightly so rounding in floor(x / L) cannot hide a member.
  Box downsample_search_box(const PointType& p) const {
    const Box cube = downsample_cube(p);
    const Scalar pad = static_cast<Scalar>(cfg_.downsample_len) * Scalar(1e-3);
    return Box((cube.min().array() - pad).matrix(), (cube.max().array() + pad).matrix());
  }

  bool same_cube(const PointType& a, const PointType& b) const {
    for (int i = 0; i < Dim; ++i) {
      if (cube_index(a, i) != cube_index(b, i)) return false;
    }
    return true;
  }

  void downsample_impl(NodePtr<Scalar, Dim>& root, const PointType& p, Ctx& ctx) {
    const typename Box::Vector center = downsample_cube(p).center();
    Points members;
    for (const auto& q : ikd::box_search(root.get(), downsample_search_box(p))) {
      if (same_cube(q, p)) members.push_back(q);
    }
    PointType winner = p;
    Scalar best = squared_distance<Scalar, Dim>(p.coords, center);
    for (const auto& q : members) {
      const Scalar d = squared_distance<Scalar, Dim>(q.coords, center);
      if (d < best || (d == best && lex_less(q, winner))) {
        winner = q;
        best = d;
      }
    }
    for (const auto& q : members) {
      if (!same_coords(q, winner)) delete_impl(root, q, ctx);
    }
    if (same_coords(winner, p)) insert_impl(root, p, ctx);
  }

  // ---- rebuild thread ----

  void notify_phase(RebuildPhase phase) {
    std::function<void(RebuildPhase)> fn;
    {
      std::lock_guard lk(observer_mutex_);
      fn = observer_;
    }
    if (fn) fn(phase);
  }

  void worker_loop() {
    for (;;) {
      {
        std::unique_lock lk(state_mutex_);
        state_cv_.wait(lk, [&] { return stop_ || state_.load() == State::requested; });
        if (state_.load() != State::requested) return;
        state_ = State::running;
      }
      run_parallel_rebuild();
    }
  }

  void apply_logged(NodePtr<Scalar, Dim>& subtree, const OperationLogEntry& e, Ctx& ctx) {
    switch (e.kind) {
      case OpKind::insert_point: insert_impl(subtree, e.point, ctx); break;
      case OpKind::delete_point: delete_impl(subtree, e.point, ctx); break;
      case OpKind::box_delete: box_update(subtree, e.box, true, ctx); break;
      case OpKind::box_reinsert: box_update(subtree, e.box, false, ctx); break;
      case OpKind::downsample_insert: downsample_impl(subtree, e.point, ctx); break;
    }
    replayed_ops_.fetch_add(1);
  }

  void drain_log(NodePtr<Scalar, Dim>& subtree, Ctx& ctx) {
    for (;;) {
      OperationLogEntry e;
      {
        std::lock_guard lk(log_mutex_);
        if (log_.empty()) return;
        e = log_.front();
        log_.pop_front();
      }
      apply_logged(subtree, e, ctx);
    }
  }

  void run_parallel_rebuild() {
    notify_phase(RebuildPhase::flatten);
    Points points;
    {
      // Updates wait here; queries keep reading the subtree.
      std::lock_guard upd(update_mutex_);
      collect_valid<Scalar, Dim>(target_, points);
    }
    notify_phase(RebuildPhase::build);
    NodePtr<Scalar, Dim> fresh = ikd::build<Scalar, Dim>(std::move(points));

    notify_phase(RebuildPhase::replay);
    UpdateOutcome replay_out;
    Ctx ctx{cfg_, replay_out, false, {}};
    drain_log(fresh, ctx);
    {
      std::lock_guard upd(update_mutex_);
      drain_log(fresh, ctx);
      const auto t0 = std::chrono::steady_clock::now();
      {
        std::unique_lock all(access_mutex_);
        std::swap(*target_slot_, fresh);
        exclusive_reference_stores_.fetch_add(1);
        {
          std::lock_guard lk(state_mutex_);
          state_ = State::swapped;
        }
      }
      const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
      exclusive_windows_.fetch_add(1);
      std::int64_t prev = max_exclusive_ns_.load();
      while (ns > prev && !max_exclusive_ns_.compare_exchange_weak(prev, ns)) {
      }
    }
    state_cv_.notify_all();
    notify_phase(RebuildPhase::swapped);
    // `fresh` now owns the replaced subtree; no query can still reach it.
    fresh.reset();
    parallel_completed_.fetch_add(1);
    notify_phase(RebuildPhase::reclaimed);
  }

  TreeConfig cfg_;
  NodePtr<Scalar, Dim> root_;

  // Writer-owned description of the subtree under background rebuild.
  Node* target_ = nullptr;
  NodePtr<Scalar, Dim>* target_slot_ = nullptr;
  std::vector<Node*> path_;
  Box cell_ = Box::unbounded();

  std::shared_mutex access_mutex_;  // exclusive only for the reference swap
  std::mutex update_mutex_;         // held by every update and by flatten
  std::mutex log_mutex_;
  std::deque<OperationLogEntry> log_;
  std::uint64_t next_sequence_ = 0;

  std::mutex state_mutex_;
  std::condition_variable state_cv_;
  std::atomic<State> state_{State::idle};
  bool stop_ = false;

  std::mutex observer_mutex_;
  std::function<void(RebuildPhase)> observer_;

  std::atomic<std::size_t> sync_rebuilds_{0};
  std::atomic<std::size_t> parallel_started_{0};
  std::atomic<std::size_t> parallel_completed_{0};
  std::atomic<std::size_t> deferred_triggers_{0};
  std::atomic<std::size_t> logged_ops_{0};
  std::atomic<std::size_t> replayed_ops_{0};
  std::atomic<std::size_t> exclusive_windows_{0};
  std::atomic<std::size_t> exclusive_reference_stores_{0};
  std::atomic<std::int64_t> max_exclusive_ns_{0};

  std::thread worker_;
};

using IkdTree3f = IkdTree<float, 3>;
using IkdTree3d = IkdTree<double, 3>;

}  // namespace ikd
