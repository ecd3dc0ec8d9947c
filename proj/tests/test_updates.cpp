#include "ikd/ikd_tree.hpp"
#include "ikd/static_tree.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

namespace ikd {
namespace {

using Tree = IkdTree<double, 3>;
using test::P;

TreeConfig sequential() {
  TreeConfig cfg;
  cfg.parallel_enabled = false;
  return cfg;
}

TreeConfig frozen() {
  TreeConfig cfg = sequential();
  cfg.auto_rebalance = false;
  return cfg;
}

std::size_t height_bound(std::size_t n, double alpha) {
  return static_cast<std::size_t>(std::ceil(std::log(static_cast<double>(n)) / std::log(1.0 / alpha))) + 2;
}

TEST(InsertPoint, IntoEmptyTree) {
  Tree t(sequential());
  const auto out = t.insert_point(P(1, 2, 3));
  EXPECT_EQ(out.affected, 1u);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.treesize(), 1u);
}

TEST(InsertPoint, RevalidatesDeletedNode) {
  Tree t(frozen());
  t.build({P(0, 0, 0), P(1, 2, 3), P(2, 0, 0)});
  t.delete_point(P(1, 2, 3));
  ASSERT_EQ(t.root()->invalidnum, 1u);
  const auto out = t.insert_point(P(1, 2, 3));
  EXPECT_EQ(out.affected, 1u);
  EXPECT_EQ(t.treesize(), 3u);
  EXPECT_EQ(t.root()->invalidnum, 0u);
}

TEST(InsertPoint, DuplicateOfValidPointIsNoop) {
  Tree t(sequential());
  t.insert_point(P(1, 1, 1));
  const auto out = t.insert_point(P(1, 1, 1));
  EXPECT_EQ(out.affected, 0u);
  EXPECT_EQ(t.treesize(), 1u);
}

TEST(InsertPoint, OneByOneMatchesInputAndStaysShallow) {
  Tree t(sequential());
  const auto pts = test::random_points(1000, 42);
  for (const auto& p : pts) {
    t.insert_point(p);
    ASSERT_FALSE(t.audit().has_value());
  }
  EXPECT_TRUE(test::same_multiset(t.valid_points(), pts));
  EXPECT_LE(t.height(), height_bound(1000, 0.6));
}

TEST(InsertPoint, SortedStreamIsRebalanced) {
  Tree t(sequential());
  for (int i = 0; i < 2000; ++i) t.insert_point(P(i, 0, 0));
  EXPECT_LE(t.height(), height_bound(2000, 0.6));
  EXPECT_FALSE(t.audit().has_value());
}

TEST(InsertPoint, RejectsNonFinite) {
  Tree t(sequential());
  EXPECT_THROW(t.insert_point(P(0, INFINITY, 0)), std::invalid_argument);
}

TEST(DeletePoint, FromEmptyTree) {
  Tree t(sequential());
  EXPECT_EQ(t.delete_point(P(0, 0, 0)).affected, 0u);
}

TEST(DeletePoint, SingletonBecomesTreeDeleted) {
  Tree t(frozen());
  t.insert_point(P(1, 1, 1));
  EXPECT_EQ(t.delete_point(P(1, 1, 1)).affected, 1u);
  const auto* r = t.root();
  ASSERT_NE(r, nullptr);
  EXPECT_TRUE(r->deleted);
  EXPECT_TRUE(r->treedeleted);
  EXPECT_EQ(r->invalidnum, 1u);
  EXPECT_EQ(r->treesize, 1u);
}

TEST(DeletePoint, SingletonIsPurgedWhenRebalancing) {
  Tree t(sequential());
  t.insert_point(P(1, 1, 1));
  t.delete_point(P(1, 1, 1));
  EXPECT_EQ(t.root(), nullptr);
}

TEST(DeletePoint, AllOfSevenNodes) {
  Tree t(frozen());
  const auto pts = test::random_points(7, 3);
  t.build(pts);
  for (const auto& p : pts) EXPECT_EQ(t.delete_point(p).affected, 1u);
  EXPECT_TRUE(t.root()->treedeleted);
  EXPECT_EQ(t.root()->invalidnum, 7u);
  EXPECT_FALSE(t.audit().has_value());
}

TEST(DeletePoint, AbsentPointIsNoop) {
  Tree t(sequential());
  t.build(test::random_points(50, 1));
  EXPECT_EQ(t.delete_point(P(-1, -1, -1)).affected, 0u);
  EXPECT_EQ(t.size(), 50u);
}

TEST(DeletePoint, FindsTiesOnBothSides) {
  // Many equal split coordinates: the target may sit on either side.
  Tree t(sequential());
  PointVector<double, 3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back(P(1, i % 7, i));
  t.build(pts);
  for (const auto& p : pts) ASSERT_EQ(t.delete_point(p).affected, 1u) << p.coords.transpose();
  EXPECT_EQ(t.size(), 0u);
}

TEST(BoxDelete, DisjointBoxChangesNothing) {
  Tree t(sequential());
  const auto pts = test::random_points(100, 5);
  t.build(pts);
  const auto out = t.box_delete(Box3d(Box3d::Vector(20, 20, 20), Box3d::Vector(30, 30, 30)));
  EXPECT_EQ(out.affected, 0u);
  EXPECT_TRUE(test::same_multiset(t.valid_points(), pts));
}

TEST(BoxDelete, CoveringBoxDeletesEverything) {
  Tree t(frozen());
  t.build(test::random_points(100, 6));
  const auto out = t.box_delete(Box3d(Box3d::Vector(-1, -1, -1), Box3d::Vector(11, 11, 11)));
  EXPECT_EQ(out.affected, 100u);
  EXPECT_TRUE(t.root()->treedeleted);
  EXPECT_EQ(t.size(), 0u);
  EXPECT_FALSE(t.audit().has_value());

  Tree purged(sequential());
  purged.build(test::random_points(100, 6));
  purged.box_delete(Box3d(Box3d::Vector(-1, -1, -1), Box3d::Vector(11, 11, 11)));
  EXPECT_EQ(purged.root(), nullptr);
}

TEST(BoxDelete, MatchesContainmentFilter) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Tree t(frozen());
    const auto pts = test::random_points(500, 100 + trial);
    t.build(pts);
    const auto box = test::random_box<double>(rng, 10, 1, 6);
    const auto expected = brute_force_box(pts, box);
    EXPECT_EQ(t.box_delete(box).affected, expected.size());
    EXPECT_TRUE(test::same_multiset(t.tombstones(), expected));
    EXPECT_TRUE(t.box_search(box).empty());
    EXPECT_FALSE(t.audit().has_value());
  }
}

TEST(BoxDelete, RootInvalidCountIsMonotone) {
  Tree t(frozen());
  t.build(test::random_points(400, 8));
  std::mt19937_64 rng(8);
  std::size_t last = 0;
  for (int i = 0; i < 30; ++i) {
    t.box_delete(test::random_box<double>(rng, 10, 0.5, 3));
    EXPECT_GE(t.root()->invalidnum, last);
    last = t.root()->invalidnum;
  }
  for (int i = 0; i < 30; ++i) {
    t.box_reinsert(test::random_box<double>(rng, 10, 0.5, 3));
    EXPECT_LE(t.root()->invalidnum, last);
    last = t.root()->invalidnum;
  }
}

TEST(BoxReinsert, NothingDeleted) {
  Tree t(sequential());
  t.build(test::random_points(100, 9));
  EXPECT_EQ(t.box_reinsert(Box3d(Box3d::Vector(0, 0, 0), Box3d::Vector(10, 10, 10))).affected, 0u);
}

TEST(BoxReinsert, RoundTrip) {
  Tree t(frozen());
  const auto pts = test::random_points(300, 10);
  t.build(pts);
  const Box3d box(Box3d::Vector(2, 2, 2), Box3d::Vector(7, 7, 7));
  const auto n = t.box_delete(box).affected;
  EXPECT_GT(n, 0u);
  EXPECT_EQ(t.box_reinsert(box).affected, n);
  EXPECT_TRUE(test::same_multiset(t.valid_points(), pts));
  EXPECT_FALSE(t.audit().has_value());
}

TEST(BoxReinsert, PartialOverlap) {
  Tree t(frozen());
  const auto pts = test::random_points(600, 11);
  t.build(pts);
  const Box3d b1(Box3d::Vector(1, 1, 1), Box3d::Vector(8, 8, 8));
  const Box3d b2(Box3d::Vector(3, 2, 4), Box3d::Vector(5, 6, 7));
  t.box_delete(b1);
  t.box_reinsert(b2);
  PointVector<double, 3> expected;
  for (const auto& p : pts) {
    if (!b1.contains(p) || b2.contains(p)) expected.push_back(p);
  }
  EXPECT_TRUE(test::same_multiset(t.valid_points(), expected));
  EXPECT_FALSE(t.audit().has_value());
}

TEST(BoxSearch, EmptyTree) {
  Tree t(sequential());
  EXPECT_TRUE(t.box_search(Box3d(Box3d::Vector(0, 0, 0), Box3d::Vector(1, 1, 1))).empty());
}

TEST(BoxSearch, WholeRange) {
  Tree t(sequential());
  const auto pts = test::random_points(300, 12);
  t.build(pts);
  t.delete_point(pts[0]);
  auto expected = pts;
  expected.erase(expected.begin());
  EXPECT_TRUE(test::same_multiset(t.box_search(t.root()->range), expected));
}

TEST(BoxSearch, MatchesContainmentFilter) {
  Tree t(sequential());
  const auto pts = test::random_points(1000, 13);
  t.build(pts);
  std::mt19937_64 rng(13);
  for (int i = 0; i < 20; ++i) {
    const auto box = test::random_box<double>(rng, 10, 0.2, 5);
    EXPECT_TRUE(test::same_multiset(t.box_search(box), brute_force_box(pts, box)));
  }
}

TEST(Downsample, EmptyTreeKeepsPoint) {
  Tree t(sequential());
  const auto out = t.downsample_insert(P(0.05, 0.05, 0.05));
  EXPECT_EQ(out.affected, 1u);
  EXPECT_EQ(t.size(), 1u);
}

TEST(Downsample, CentrePointDominates) {
  Tree t(sequential());
  t.downsample_insert(P(0.1, 0.1, 0.1));
  t.downsample_insert(P(0.15, 0.02, 0.19));
  const auto pts = t.valid_points();
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_TRUE(same_coords(pts[0], P(0.1, 0.1, 0.1)));
}

TEST(Downsample, CloserPointReplacesIncumbent) {
  Tree t(sequential());
  t.downsample_insert(P(0.01, 0.01, 0.01));
  t.downsample_insert(P(0.11, 0.09, 0.1));
  const auto pts = t.valid_points();
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_TRUE(same_coords(pts[0], P(0.11, 0.09, 0.1)));
}

TEST(Downsample, TieGoesToLexicographicallySmaller) {
  TreeConfig cfg = sequential();
  cfg.downsample_len = 0.5;
  // Mirror images about the centre (0.25, 0.25, 0.25); every value is exact
  // in binary, so the two distances tie exactly.
  const Point3d a = P(0.125, 0.25, 0.25);
  const Point3d b = P(0.375, 0.25, 0.25);
  for (const bool a_first : {true, false}) {
    Tree t(cfg);
    t.downsample_insert(a_first ? a : b);
    t.downsample_insert(a_first ? b : a);
    const auto pts = t.valid_points();
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_TRUE(same_coords(pts[0], a));
  }
}

TEST(Downsample, UpperFaceBelongsToNextCube) {
  Tree t(sequential());
  t.downsample_insert(P(0.1, 0.1, 0.1));
  // x = 0.4 indexes cube 2 along x; it must not compete with cube 1 members.
  t.downsample_insert(P(0.3, 0.1, 0.1));
  t.downsample_insert(P(0.4, 0.1, 0.1));
  EXPECT_EQ(t.size(), 3u);
}

TEST(Downsample, StreamMatchesGridReplay) {
  Tree t(sequential());
  test::ModelOracle<double> oracle(0.2);
  for (const auto& p : test::random_points(10000, 14)) {
    t.downsample_insert(p);
    oracle.downsample_insert(p);
  }
  EXPECT_TRUE(test::same_multiset(t.valid_points(), oracle.points()));
  std::set<std::array<double, 3>> cubes;
  for (const auto& p : t.valid_points()) {
    EXPECT_TRUE(cubes.insert(oracle.cube(p)).second) << "two valid points share a cube";
  }
  EXPECT_FALSE(t.audit().has_value());
}

TEST(Interleaving, MatchesSequentialModel) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    test::ModelOracle<double> oracle(0.5);
    TreeConfig cfg = sequential();
    cfg.downsample_len = 0.5;
    Tree ds(cfg);
    std::vector<Point3d, Eigen::aligned_allocator<Point3d>> seen;
    for (int step = 0; step < 10000; ++step) {
      const double r = u(rng);
      if (r < 0.45) {
        Point3d p = test::random_points(1, rng())[0];
        if (!seen.empty() && u(rng) < 0.2) p = seen[rng() % seen.size()];
        seen.push_back(p);
        ds.insert_point(p);
        oracle.insert(p);
      } else if (r < 0.70) {
        if (seen.empty()) continue;
        const Point3d p = seen[rng() % seen.size()];
        ds.delete_point(p);
        oracle.erase(p);
      } else if (r < 0.73) {
        const auto box = test::random_box<double>(rng, 10, 0.5, 3);
        ds.box_delete(box);
        oracle.erase_in(box);
      } else if (r < 0.75) {
        // Reinsert revives tombstones still present; the model follows the tree.
        const auto box = test::random_box<double>(rng, 10, 0.5, 3);
        for (const auto& p : ds.tombstones()) {
          if (box.contains(p)) oracle.insert(p);
        }
        ds.box_reinsert(box);
      } else {
        const Point3d p = test::random_points(1, rng())[0];
        seen.push_back(p);
        ds.downsample_insert(p);
        oracle.downsample_insert(p);
      }
    }
    ASSERT_TRUE(test::same_multiset(ds.valid_points(), oracle.points())) << "seed " << seed;
    ASSERT_FALSE(ds.audit().has_value()) << "seed " << seed;
  }
}

TEST(Interleaving, SameSeedSameResult) {
  auto run = [] {
    Tree t(sequential());
    std::mt19937_64 rng(99);
    for (int i = 0; i < 3000; ++i) {
      const auto p = test::random_points(1, rng())[0];
      if (i % 3 == 0) {
        t.downsample_insert(p);
      } else {
        t.insert_point(p);
      }
      if (i % 500 == 0) t.box_delete(test::random_box<double>(rng, 10, 1, 2));
    }
    return test::sorted(t.valid_points());
  };
  EXPECT_TRUE(test::same_multiset(run(), run()));
}

TEST(Rebalance, NoViolationAfterEachOperation) {
  Tree t(sequential());
  t.build(test::random_points(500, 15));
  std::mt19937_64 rng(15);
  auto check = [&] {
    std::vector<const TreeNode<double, 3>*> stack{t.root()};
    while (!stack.empty()) {
      const auto* n = stack.back();
      stack.pop_back();
      if (!n) continue;
      ASSERT_FALSE(violate_criterion(*n, t.config()));
      stack.push_back(n->left.get());
      stack.push_back(n->right.get());
    }
  };
  for (int i = 0; i < 500; ++i) {
    const auto p = test::random_points(1, rng())[0];
    t.insert_point(Point3d(Point3d::Vector(p[0] * 0.1, p[1], p[2] * 0.1)));
    check();
    if (i % 50 == 0) {
      t.box_delete(test::random_box<double>(rng, 10, 1, 4));
      check();
    }
  }
}

TEST(Rebalance, RebuildKeepsValidSet) {
  Tree t(sequential());
  test::ModelOracle<double> oracle;
  std::mt19937_64 rng(16);
  std::size_t rebuilds = 0;
  for (int i = 0; i < 3000; ++i) {
    const auto p = test::random_points(1, rng(), 1.0)[0];
    rebuilds += t.insert_point(p).rebuilds_triggered;
    oracle.insert(p);
  }
  EXPECT_GT(rebuilds, 0u);
  EXPECT_TRUE(test::same_multiset(t.valid_points(), oracle.points()));
}

TEST(Rebalance, SynchronousBelowThreshold) {
  TreeConfig cfg;
  cfg.n_max = 1500;
  Tree t(cfg);
  for (int i = 0; i < 100; ++i) t.insert_point(P(i, 0, 0));
  const auto st = t.stats();
  EXPECT_GT(st.sync_rebuilds, 0u);
  EXPECT_EQ(st.parallel_started, 0u);
}

}  // namespace
}  // namespace ikd
