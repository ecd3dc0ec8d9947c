#pragma once

#include "ikd/tree_node.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace ikd {

struct TreeConfig {
  double alpha_bal = 0.6;
  double alpha_del = 0.5;
  /// Subtrees at least this large are rebuilt in the background context.
  std::size_t n_max = 1500;
  bool parallel_enabled = true;
  double downsample_len = 0.2;
  /// Turning this off freezes the structure so lazy labels can be inspected.
  bool auto_rebalance = true;

  void validate() const {
    if (!(alpha_bal > 0.5 && alpha_bal < 1.0)) throw std::invalid_argument("alpha_bal must lie in (0.5, 1)");
    if (!(alpha_del > 0.0 && alpha_del < 1.0)) throw std::invalid_argument("alpha_del must lie in (0, 1)");
    if (n_max < 1) throw std::invalid_argument("n_max must be positive");
    if (!(downsample_len > 0.0) || !std::isfinite(downsample_len)) {
      throw std::invalid_argument("downsample_len must be positive");
    }
  }
};

struct BalanceMetrics {
  double alpha_bal_observed = 0.0;
  double alpha_del_observed = 0.0;
};

namespace detail {

inline bool size_violates_balance(std::size_t left, std::size_t right, std::size_t total, double alpha_bal) {
  const double limit = alpha_bal * static_cast<double>(total - 1);
  return static_cast<double>(left) >= limit || static_cast<double>(right) >= limit;
}

}  // namespace detail

/// Sizes for which even a perfectly balanced split breaks the alpha-balanced
/// inequality (S <= 3 always, plus e.g. 4 and 6 at alpha_bal = 0.6). The
/// balance check skips them; rebuilding could not fix them anyway.
inline bool balance_exempt(std::size_t treesize, double alpha_bal) {
  if (treesize <= 3) return true;
  const std::size_t rest = treesize - 1;
  return detail::size_violates_balance(rest / 2, rest - rest / 2, treesize, alpha_bal);
}

template <typename Scalar, int Dim>
bool violates_balance(const TreeNode<Scalar, Dim>& node, double alpha_bal) {
  const std::size_t l = node.left ? node.left->treesize : 0;
  const std::size_t r = node.right ? node.right->treesize : 0;
  if (balance_exempt(node.treesize, alpha_bal)) return false;
  return detail::size_violates_balance(l, r, node.treesize, alpha_bal);
}

template <typename Scalar, int Dim>
bool violates_deleted(const TreeNode<Scalar, Dim>& node, double alpha_del) {
  return static_cast<double>(node.invalidnum) >= alpha_del * static_cast<double>(node.treesize);
}

/// True when the subtree breaks either the alpha-balanced or the
/// alpha-deleted criterion and should be rebuilt.
template <typename Scalar, int Dim>
bool violate_criterion(const TreeNode<Scalar, Dim>& node, const TreeConfig& cfg) {
  return violates_balance(node, cfg.alpha_bal) || violates_deleted(node, cfg.alpha_del);
}

template <typename Scalar, int Dim>
BalanceMetrics metrics(const TreeNode<Scalar, Dim>* node) {
  BalanceMetrics m;
  if (node == nullptr) return m;
  if (node->treesize > 1) {
    const std::size_t l = node->left ? node->left->treesize : 0;
    const std::size_t r = node->right ? node->right->treesize : 0;
    m.alpha_bal_observed = static_cast<double>(std::max(l, r)) / static_cast<double>(node->treesize - 1);
    m.alpha_del_observed = static_cast<double>(node->invalidnum) / static_cast<double>(node->treesize);
  }
  return m;
}

/// Replace the subtree in `slot` by a perfectly balanced one over its valid
/// points. Deleted-labeled nodes are dropped; an all-deleted subtree leaves
/// the slot empty.
template <typename Scalar, int Dim>
void rebuild(NodePtr<Scalar, Dim>& slot) {
  if (!slot) return;
  auto points = flatten(slot.get());
  slot.reset();
  slot = build<Scalar, Dim>(std::move(points));
}

}  // namespace ikd
