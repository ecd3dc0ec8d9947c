#pragma once

#include "ikd/point.hpp"

#include <algorithm>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ikd {

template <typename Scalar, int Dim>
using PointVector = std::vector<Point<Scalar, Dim>, Eigen::aligned_allocator<Point<Scalar, Dim>>>;

/// One vertex of the incremental tree. Holds a single point plus the lazy
/// labels and subtree summaries used by incremental updates.
template <typename Scalar, int Dim = 3>
struct TreeNode {
  using PointType = Point<Scalar, Dim>;
  using Box = AlignedBox<Scalar, Dim>;

  PointType point;
  int axis = 0;
  std::unique_ptr<TreeNode> left;
  std::unique_ptr<TreeNode> right;

  std::size_t treesize = 1;
  std::size_t invalidnum = 0;
  bool deleted = false;
  bool treedeleted = false;
  bool pushdown = false;
  Box range;

  explicit TreeNode(const PointType& p, int split_axis = 0) : point(p), axis(split_axis), range(p.coords) {}

  std::size_t valid_count() const { return treesize - invalidnum; }

  EIGEN_MAKE_ALIGNED_OPERATOR_NEW
};

template <typename Scalar, int Dim>
using NodePtr = std::unique_ptr<TreeNode<Scalar, Dim>>;

/// Recompute treesize, invalidnum, treedeleted and range from the node's own
/// state and its children's summaries.
template <typename Scalar, int Dim>
void pullup(TreeNode<Scalar, Dim>& node) {
  std::size_t size = 1;
  std::size_t invalid = node.deleted ? 1 : 0;
  AlignedBox<Scalar, Dim> range(node.point.coords);
  for (const auto* child : {node.left.get(), node.right.get()}) {
    if (child == nullptr) continue;
    size += child->treesize;
    invalid += child->invalidnum;
    range.extend(child->range);
  }
  node.treesize = size;
  node.invalidnum = invalid;
  node.treedeleted = invalid == size;
  node.range = range;
}

/// Hand the node's pending labels one level down. The propagated value is the
/// node's treedeleted flag: true after a whole-subtree delete, false after a
/// whole-subtree re-insert.
template <typename Scalar, int Dim>
void pushdown(TreeNode<Scalar, Dim>& node) {
  if (!node.pushdown) return;
  const bool value = node.treedeleted;
  for (auto* child : {node.left.get(), node.right.get()}) {
    if (child == nullptr) continue;
    child->deleted = value;
    child->treedeleted = value;
    child->pushdown = true;
    child->invalidnum = value ? child->treesize : 0;
  }
  node.pushdown = false;
}

namespace detail {

/// Axis of maximal coordinate variance over [first, last); lowest index wins ties.
template <typename Scalar, int Dim, typename It>
int max_variance_axis(It first, It last) {
  const auto n = static_cast<double>(std::distance(first, last));
  if (n <= 1) return 0;
  Eigen::Matrix<double, Dim, 1> mean = Eigen::Matrix<double, Dim, 1>::Zero();
  for (auto it = first; it != last; ++it) mean += it->coords.template cast<double>();
  mean /= n;
  Eigen::Matrix<double, Dim, 1> var = Eigen::Matrix<double, Dim, 1>::Zero();
  for (auto it = first; it != last; ++it) {
    var += (it->coords.template cast<double>() - mean).array().square().matrix();
  }
  int best = 0;
  for (int i = 1; i < Dim; ++i) {
    if (var[i] > var[best]) best = i;
  }
  return best;
}

/// Ordering used for median selection: split coordinate first, then the
/// remaining coordinates lexicographically.
template <typename Scalar, int Dim>
struct SplitLess {
  int axis;
  bool operator()(const Point<Scalar, Dim>& a, const Point<Scalar, Dim>& b) const {
    if (a.coords[axis] != b.coords[axis]) return a.coords[axis] < b.coords[axis];
    for (int i = 0; i < Dim; ++i) {
      if (i == axis) continue;
      if (a.coords[i] != b.coords[i]) return a.coords[i] < b.coords[i];
    }
    return false;
  }
};

template <typename Scalar, int Dim>
NodePtr<Scalar, Dim> build_range(std::span<Point<Scalar, Dim>> pts) {
  if (pts.empty()) return nullptr;
  const int axis = max_variance_axis<Scalar, Dim>(pts.begin(), pts.end());
  const std::size_t mid = (pts.size() - 1) / 2;
  std::nth_element(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(mid), pts.end(),
                   SplitLess<Scalar, Dim>{axis});
  auto node = std::make_unique<TreeNode<Scalar, Dim>>(pts[mid], axis);
  node->left = build_range<Scalar, Dim>(pts.first(mid));
  node->right = build_range<Scalar, Dim>(pts.subspan(mid + 1));
  pullup(*node);
  return node;
}

}  // namespace detail

/// Build a perfectly balanced tree over `points`. The median element of each
/// recursion range becomes the node; lazy labels start cleared.
template <typename Scalar, int Dim>
NodePtr<Scalar, Dim> build(PointVector<Scalar, Dim> points) {
  for (const auto& p : points) {
    if (!is_finite(p)) throw std::invalid_argument("build: non-finite coordinate");
  }
  return detail::build_range<Scalar, Dim>(std::span<Point<Scalar, Dim>>(points.data(), points.size()));
}

/// Collect the valid points of a subtree, resolving lazy labels as it goes.
template <typename Scalar, int Dim>
void flatten(TreeNode<Scalar, Dim>* node, PointVector<Scalar, Dim>& out) {
  if (node == nullptr) return;
  pushdown(*node);
  if (node->treedeleted) return;
  flatten(node->left.get(), out);
  if (!node->deleted) out.push_back(node->point);
  flatten(node->right.get(), out);
}

template <typename Scalar, int Dim>
PointVector<Scalar, Dim> flatten(TreeNode<Scalar, Dim>* node) {
  PointVector<Scalar, Dim> out;
  if (node != nullptr) out.reserve(node->valid_count());
  flatten(node, out);
  return out;
}

/// Effective label state while walking a subtree without mutating it. A
/// pending pushdown above the current node forces every descendant to the
/// same deleted value.
struct LabelView {
  std::optional<bool> forced;

  template <typename Scalar, int Dim>
  bool deleted(const TreeNode<Scalar, Dim>& n) const {
    return forced ? *forced : n.deleted;
  }
  template <typename Scalar, int Dim>
  bool treedeleted(const TreeNode<Scalar, Dim>& n) const {
    return forced ? *forced : n.treedeleted;
  }
  template <typename Scalar, int Dim>
  std::size_t invalidnum(const TreeNode<Scalar, Dim>& n) const {
    return forced ? (*forced ? n.treesize : 0) : n.invalidnum;
  }
  template <typename Scalar, int Dim>
  LabelView child(const TreeNode<Scalar, Dim>& n) const {
    if (forced) return *this;
    if (n.pushdown) return LabelView{n.treedeleted};
    return LabelView{};
  }
};

/// Read-only flatten: same result as flatten() but leaves labels untouched,
/// so it may run while other readers traverse the subtree.
template <typename Scalar, int Dim>
void collect_valid(const TreeNode<Scalar, Dim>* node, PointVector<Scalar, Dim>& out, LabelView view = {}) {
  if (node == nullptr || view.treedeleted(*node)) return;
  const LabelView sub = view.child(*node);
  collect_valid(node->left.get(), out, sub);
  if (!view.deleted(*node)) out.push_back(node->point);
  collect_valid(node->right.get(), out, sub);
}

/// Deleted-labeled points still physically present in the subtree.
template <typename Scalar, int Dim>
void collect_tombstones(const TreeNode<Scalar, Dim>* node, PointVector<Scalar, Dim>& out, LabelView view = {}) {
  if (node == nullptr || view.invalidnum(*node) == 0) return;
  const LabelView sub = view.child(*node);
  collect_tombstones(node->left.get(), out, sub);
  if (view.deleted(*node)) out.push_back(node->point);
  collect_tombstones(node->right.get(), out, sub);
}

template <typename Scalar, int Dim>
std::size_t height(const TreeNode<Scalar, Dim>* node) {
  if (node == nullptr) return 0;
  return 1 + std::max(height(node->left.get()), height(node->right.get()));
}

/// Walk the subtree with labels resolved and verify every structural
/// invariant. Returns a description of the first violation found.
template <typename Scalar, int Dim>
std::optional<std::string> audit(const TreeNode<Scalar, Dim>* root) {
  struct Summary {
    std::size_t size = 0;
    std::size_t invalid = 0;
  };
  std::optional<std::string> error;

  auto fail = [&](const TreeNode<Scalar, Dim>& n, const std::string& what) {
    if (error) return;
    std::ostringstream os;
    os << what << " at node (" << n.point.coords.transpose() << ")";
    error = os.str();
  };

  // Checks k-d ordering against bounds inherited from ancestors.
  auto walk = [&](auto&& self, const TreeNode<Scalar, Dim>* n, LabelView view,
                  const AlignedBox<Scalar, Dim>& cell) -> Summary {
    if (n == nullptr || error) return {};
    if (n->axis < 0 || n->axis >= Dim) fail(*n, "axis out of bounds");
    if (!cell.contains(n->point)) fail(*n, "k-d ordering violated");
    AlignedBox<Scalar, Dim> lcell = cell;
    AlignedBox<Scalar, Dim> rcell = cell;
    lcell.clamp_max(n->axis, n->point[n->axis]);
    rcell.clamp_min(n->axis, n->point[n->axis]);
    const LabelView sub = view.child(*n);
    const Summary l = self(self, n->left.get(), sub, lcell);
    const Summary r = self(self, n->right.get(), sub, rcell);
    Summary s{1 + l.size + r.size, (view.deleted(*n) ? 1u : 0u) + l.invalid + r.invalid};
    if (s.size != n->treesize) fail(*n, "treesize mismatch");
    if (s.invalid != view.invalidnum(*n)) fail(*n, "invalidnum mismatch");
    if (view.treedeleted(*n) != (s.invalid == s.size)) fail(*n, "treedeleted inconsistent");
    if (!n->range.contains(n->point)) fail(*n, "range misses node point");
    for (const auto* c : {n->left.get(), n->right.get()}) {
      if (c != nullptr && !n->range.contains(c->range)) fail(*n, "range misses child range");
    }
    return s;
  };
  walk(walk, root, LabelView{}, AlignedBox<Scalar, Dim>::unbounded());
  return error;
}

}  // namespace ikd
