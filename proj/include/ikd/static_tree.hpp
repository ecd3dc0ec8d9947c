#pragma once

#include "ikd/knn.hpp"
#include "ikd/tree_node.hpp"

#include <algorithm>
#include <optional>

namespace ikd {

/// Build-once k-d tree used as the comparison baseline. One point per node,
/// no lazy labels in play; rebuilding means constructing a new instance.
template <typename Scalar, int Dim = 3>
class StaticTree {
 public:
  using Node = TreeNode<Scalar, Dim>;
  using PointType = Point<Scalar, Dim>;

  StaticTree() = default;
  explicit StaticTree(PointVector<Scalar, Dim> points) : root_(ikd::build<Scalar, Dim>(std::move(points))) {}

  const Node* root() const { return root_.get(); }
  std::size_t size() const { return root_ ? root_->treesize : 0; }
  std::size_t height() const { return ikd::height<Scalar, Dim>(root_.get()); }

 private:
  NodePtr<Scalar, Dim> root_;
};

template <typename Scalar, int Dim>
StaticTree<Scalar, Dim> static_build(PointVector<Scalar, Dim> points) {
  return StaticTree<Scalar, Dim>(std::move(points));
}

namespace detail {

template <typename Scalar, int Dim>
void static_visit(const TreeNode<Scalar, Dim>* node, const Point<Scalar, Dim>& query, CandidateHeap<Scalar, Dim>& heap) {
  if (node == nullptr) return;
  if (!heap.worth_visiting(node->range.squared_distance(query.coords))) return;
  heap.offer(node->point, squared_distance(node->point, query));
  const TreeNode<Scalar, Dim>* near = node->left.get();
  const TreeNode<Scalar, Dim>* far = node->right.get();
  if (query[node->axis] >= node->point[node->axis]) std::swap(near, far);
  static_visit(near, query, heap);
  static_visit(far, query, heap);
}

}  // namespace detail

template <typename Scalar, int Dim>
KnnResult<Scalar, Dim> static_knn(const StaticTree<Scalar, Dim>& tree, const Point<Scalar, Dim>& query, std::size_t k,
                                  std::optional<Scalar> max_dist = std::nullopt) {
  if (k < 1) throw std::invalid_argument("static_knn: k must be at least 1");
  std::optional<Scalar> max_sq;
  if (max_dist) max_sq = *max_dist * *max_dist;
  detail::CandidateHeap<Scalar, Dim> heap(k, max_sq);
  detail::static_visit(tree.root(), query, heap);
  return heap.take();
}

/// Exhaustive scan with the same distance arithmetic and tie order as the
/// tree searches. Ground truth for tests and the benchmark gate.
template <typename Scalar, int Dim>
KnnResult<Scalar, Dim> brute_force_knn(const PointVector<Scalar, Dim>& points, const Point<Scalar, Dim>& query,
                                       std::size_t k, std::optional<Scalar> max_dist = std::nullopt) {
  if (k < 1) throw std::invalid_argument("brute_force_knn: k must be at least 1");
  KnnResult<Scalar, Dim> all;
  all.neighbors.reserve(points.size());
  for (const auto& p : points) {
    Scalar sq(0);
    for (int i = 0; i < Dim; ++i) {
      const Scalar d = p.coords[i] - query.coords[i];
      sq += d * d;
    }
    if (max_dist && sq > *max_dist * *max_dist) continue;
    all.neighbors.push_back({p, sq});
  }
  const std::size_t keep = std::min(k, all.neighbors.size());
  std::partial_sort(all.neighbors.begin(), all.neighbors.begin() + static_cast<std::ptrdiff_t>(keep),
                    all.neighbors.end(), neighbor_less<Scalar, Dim>);
  all.neighbors.resize(keep);
  return all;
}

template <typename Scalar, int Dim>
PointVector<Scalar, Dim> brute_force_box(const PointVector<Scalar, Dim>& points, const AlignedBox<Scalar, Dim>& box) {
  PointVector<Scalar, Dim> out;
  for (const auto& p : points) {
    bool inside = true;
    for (int i = 0; i < Dim; ++i) {
      if (p.coords[i] < box.min(i) || p.coords[i] > box.max(i)) {
        inside = false;
        break;
      }
    }
    if (inside) out.push_back(p);
  }
  return out;
}

}  // namespace ikd
