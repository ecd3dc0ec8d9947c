#pragma once

#include "ikd/bench/harness.hpp"

#include <bit>
#include <cstdint>
#include <unordered_map>

namespace ikd::bench {

struct CoordKey {
  std::uint32_t x, y, z;
  bool operator==(const CoordKey&) const = default;
};

struct CoordKeyHash {
  std::size_t operator()(const CoordKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint32_t v : {k.x, k.y, k.z}) {
      h ^= v;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

inline CoordKey key_of(const BenchPoint& p) {
  // Adding +0 folds -0 onto +0 so equal coordinates share a key.
  return {std::bit_cast<std::uint32_t>(p.coords[0] + 0.0f), std::bit_cast<std::uint32_t>(p.coords[1] + 0.0f),
          std::bit_cast<std::uint32_t>(p.coords[2] + 0.0f)};
}

/// Set of points keyed by exact coordinates with O(1) insert/erase and a
/// dense vector view. Oracle for the benchmark gate and the stress runs.
class PointSet {
 public:
  bool contains(const BenchPoint& p) const { return index_.count(key_of(p)) != 0; }

  bool insert(const BenchPoint& p) {
    auto [it, fresh] = index_.try_emplace(key_of(p), points_.size());
    if (!fresh) return false;
    points_.push_back(p);
    return true;
  }

  bool erase(const BenchPoint& p) {
    auto it = index_.find(key_of(p));
    if (it == index_.end()) return false;
    const std::size_t slot = it->second;
    index_.erase(it);
    if (slot + 1 != points_.size()) {
      points_[slot] = points_.back();
      index_[key_of(points_[slot])] = slot;
    }
    points_.pop_back();
    return true;
  }

  /// Remove every member inside the closed box; returns the removed points.
  BenchPoints erase_in(const BenchBox& box) {
    BenchPoints removed;
    for (const auto& p : points_) {
      if (box.contains(p)) removed.push_back(p);
    }
    for (const auto& p : removed) erase(p);
    return removed;
  }

  const BenchPoints& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  BenchPoints points_;
  std::unordered_map<CoordKey, std::size_t, CoordKeyHash> index_;
};

}  // namespace ikd::bench
