#pragma once

#include "ikd/tree_node.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

namespace ikd {

template <typename Scalar, int Dim>
struct Neighbor {
  Point<Scalar, Dim> point;
  Scalar squared_distance;

  EIGEN_MAKE_ALIGNED_OPERATOR_NEW
};

/// Nearer first; equal distances fall back to lexicographic coordinates.
template <typename Scalar, int Dim>
bool neighbor_less(const Neighbor<Scalar, Dim>& a, const Neighbor<Scalar, Dim>& b) {
  if (a.squared_distance != b.squared_distance) return a.squared_distance < b.squared_distance;
  return lex_less(a.point, b.point);
}

template <typename Scalar, int Dim>
struct KnnResult {
  std::vector<Neighbor<Scalar, Dim>, Eigen::aligned_allocator<Neighbor<Scalar, Dim>>> neighbors;

  std::size_t size() const { return neighbors.size(); }
  bool empty() const { return neighbors.empty(); }
  const Neighbor<Scalar, Dim>& operator[](std::size_t i) const { return neighbors[i]; }
};

struct SearchOptions {
  /// Disables range-box pruning; results must not change.
  bool prune = true;
};

namespace detail {

/// Bounded candidate set kept as a max-heap on neighbor_less.
template <typename Scalar, int Dim>
class CandidateHeap {
 public:
  CandidateHeap(std::size_t k, std::optional<Scalar> max_sq) : k_(k), max_sq_(max_sq) { heap_.reserve(k + 1); }

  bool full() const { return heap_.size() >= k_; }

  /// Squared distance a subtree must not exceed to still be worth visiting.
  bool worth_visiting(Scalar box_sq) const {
    if (max_sq_ && box_sq > *max_sq_) return false;
    return !full() || box_sq <= heap_.front().squared_distance;
  }

  void offer(const Point<Scalar, Dim>& p, Scalar sq) {
    if (max_sq_ && sq > *max_sq_) return;
    Neighbor<Scalar, Dim> cand{p, sq};
    if (!full()) {
      heap_.push_back(cand);
      std::push_heap(heap_.begin(), heap_.end(), neighbor_less<Scalar, Dim>);
      return;
    }
    if (neighbor_less(cand, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), neighbor_less<Scalar, Dim>);
      heap_.back() = cand;
      std::push_heap(heap_.begin(), heap_.end(), neighbor_less<Scalar, Dim>);
    }
  }

  KnnResult<Scalar, Dim> take() {
    KnnResult<Scalar, Dim> out;
    std::sort_heap(heap_.begin(), heap_.end(), neighbor_less<Scalar, Dim>);
    out.neighbors.assign(heap_.begin(), heap_.end());
    return out;
  }

 private:
  std::size_t k_;
  std::optional<Scalar> max_sq_;
  std::vector<Neighbor<Scalar, Dim>, Eigen::aligned_allocator<Neighbor<Scalar, Dim>>> heap_;
};

template <typename Scalar, int Dim>
void knn_visit(const TreeNode<Scalar, Dim>* node, const Point<Scalar, Dim>& query, LabelView view,
               CandidateHeap<Scalar, Dim>& heap, const SearchOptions& opts) {
  if (node == nullptr || view.treedeleted(*node)) return;
  if (opts.prune && !heap.worth_visiting(node->range.squared_distance(query.coords))) return;

  if (!view.deleted(*node)) heap.offer(node->point, squared_distance(node->point, query));

  const LabelView sub = view.child(*node);
  const TreeNode<Scalar, Dim>* near = node->left.get();
  const TreeNode<Scalar, Dim>* far = node->right.get();
  if (query[node->axis] >= node->point[node->axis]) std::swap(near, far);
  knn_visit(near, query, sub, heap, opts);
  knn_visit(far, query, sub, heap, opts);
}

template <typename Scalar, int Dim>
void box_visit(const TreeNode<Scalar, Dim>* node, const AlignedBox<Scalar, Dim>& box, LabelView view,
               PointVector<Scalar, Dim>& out) {
  if (node == nullptr || view.treedeleted(*node)) return;
  if (!box.intersects(node->range)) return;
  if (box.contains(node->range)) {
    collect_valid(node, out, view);
    return;
  }
  const LabelView sub = view.child(*node);
  box_visit(node->left.get(), box, sub, out);
  if (!view.deleted(*node) && box.contains(node->point)) out.push_back(node->point);
  box_visit(node->right.get(), box, sub, out);
}

}  // namespace detail

/// Exact k-nearest-neighbour search over the valid points of a subtree.
/// Depth-first branch and bound: the child on the query's side of the split
/// goes first, and a subtree is skipped once its range box is farther than
/// the current k-th candidate. `max_dist` is a hard radius filter.
template <typename Scalar, int Dim>
KnnResult<Scalar, Dim> knn_search(const TreeNode<Scalar, Dim>* root, const Point<Scalar, Dim>& query, std::size_t k,
                                  std::optional<Scalar> max_dist = std::nullopt, SearchOptions opts = {}) {
  if (k < 1) throw std::invalid_argument("knn: k must be at least 1");
  if (!is_finite(query)) throw std::invalid_argument("knn: non-finite query");
  std::optional<Scalar> max_sq;
  if (max_dist) {
    if (*max_dist < Scalar(0)) throw std::invalid_argument("knn: max_dist must be non-negative");
    max_sq = *max_dist * *max_dist;
  }
  detail::CandidateHeap<Scalar, Dim> heap(k, max_sq);
  detail::knn_visit(root, query, LabelView{}, heap, opts);
  return heap.take();
}

/// Valid points of the subtree contained in `box` (closed bounds).
template <typename Scalar, int Dim>
PointVector<Scalar, Dim> box_search(const TreeNode<Scalar, Dim>* root, const AlignedBox<Scalar, Dim>& box) {
  PointVector<Scalar, Dim> out;
  detail::box_visit(root, box, LabelView{}, out);
  return out;
}

}  // namespace ikd
