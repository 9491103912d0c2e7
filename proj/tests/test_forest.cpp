#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "besov/model_io.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>
#include <set>

using namespace besov;
namespace bt = besov::testing;

namespace {

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

struct BruteSplit {
  std::size_t feature = 0;
  double threshold = 0.0;
  double cost = 0.0;
  bool found = false;
};

// Tries every midpoint of every candidate feature, recomputing both SSEs from scratch.
BruteSplit brute_best(const std::vector<std::size_t>& ids, const MatrixXd& X, const MatrixXd& Y,
                      const std::vector<std::size_t>& features, std::size_t min_leaf) {
  BruteSplit best;
  for (auto f : features) {
    std::vector<double> values;
    for (auto i : ids) values.push_back(X(Eigen::Index(i), Eigen::Index(f)));
    std::ranges::sort(values);
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t k = 0; k + 1 < values.size(); ++k) {
      const double t = 0.5 * (values[k] + values[k + 1]);
      std::vector<std::size_t> l, r;
      for (auto i : ids) (X(Eigen::Index(i), Eigen::Index(f)) <= t ? l : r).push_back(i);
      if (l.size() < min_leaf || r.size() < min_leaf) continue;
      const double c = bt::brute_sse(l, Y) + bt::brute_sse(r, Y);
      if (!best.found || c < best.cost - 1e-12 * std::max(1.0, c)) best = {f, t, c, true};
    }
  }
  return best;
}

double wavelet_energy(const Split& s) {
  // sum over children of count * ||E_child - E_parent||^2
  const VectorXd parent = (double(s.left_count) * s.left_mean + double(s.right_count) * s.right_mean) /
                          double(s.left_count + s.right_count);
  return double(s.left_count) * (s.left_mean - parent).squaredNorm() +
         double(s.right_count) * (s.right_mean - parent).squaredNorm();
}

}  // namespace

TEST_CASE("best_split on the 1-D four-point example") {
  MatrixXd X(4, 1);
  X << 0.1, 0.2, 0.8, 0.9;
  MatrixXd Y(4, 1);
  Y << 0, 0, 1, 1;
  const auto s = best_split(iota_ids(4), X, Y, std::vector<std::size_t>{0});
  REQUIRE(s);
  CHECK(s->feature == 0);
  CHECK(s->threshold == doctest::Approx(0.5));
  CHECK(s->cost == doctest::Approx(0.0));
  CHECK(s->left_count == 2);
  CHECK(enumerate_splits(iota_ids(4), X, Y, std::vector<std::size_t>{0}).size() == 3);
}

TEST_CASE("best_split of a pure node is none") {
  const MatrixXd X = bt::uniform_points(10, 2, 1);
  const MatrixXd Y = MatrixXd::Constant(10, 2, 0.3);
  CHECK_FALSE(best_split(iota_ids(10), X, Y, std::vector<std::size_t>{0, 1}));
}

TEST_CASE("best_split picks the informative feature") {
  MatrixXd X(6, 2);
  X << 0.3, 0.1,  //
      0.9, 0.2,   //
      0.1, 0.3,   //
      0.7, 0.7,   //
      0.2, 0.8,   //
      0.5, 0.9;
  MatrixXd Y(6, 1);
  Y << 0, 0, 0, 1, 1, 1;
  const auto s = best_split(iota_ids(6), X, Y, std::vector<std::size_t>{0, 1});
  REQUIRE(s);
  CHECK(s->feature == 1);
  CHECK(s->threshold == doctest::Approx(0.5));
  const auto brute = brute_best(iota_ids(6), X, Y, {0, 1}, 1);
  CHECK(brute.feature == 1);
}

TEST_CASE("best_split ties go to the lower feature, then the lower threshold") {
  // both features carry the same ordering
  MatrixXd X(4, 2);
  X << 0.1, 0.1, 0.2, 0.2, 0.3, 0.3, 0.4, 0.4;
  MatrixXd Y(4, 1);
  Y << 0, 1, 0, 1;
  const auto s = best_split(iota_ids(4), X, Y, std::vector<std::size_t>{1, 0});
  REQUIRE(s);
  CHECK(s->feature == 0);
  // cut 0.15 and 0.35 both leave cost 2/3; the lower threshold wins
  CHECK(s->threshold == doctest::Approx(0.15));
}

TEST_CASE("best_split respects min_leaf_size") {
  MatrixXd X(5, 1);
  X << 0.1, 0.2, 0.3, 0.4, 0.5;
  MatrixXd Y(5, 1);
  Y << 5, 0, 0, 0, 0;
  const auto free = best_split(iota_ids(5), X, Y, std::vector<std::size_t>{0}, 1);
  REQUIRE(free);
  CHECK(free->left_count == 1);
  const auto held = best_split(iota_ids(5), X, Y, std::vector<std::size_t>{0}, 2);
  REQUIRE(held);
  CHECK(held->left_count == 2);
  CHECK_FALSE(best_split(iota_ids(5), X, Y, std::vector<std::size_t>{0}, 3));
}

TEST_CASE("best_split agrees with brute force on random nodes") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t rows = 5 + rng() % 40;
    const std::size_t n = 1 + rng() % 4;
    MatrixXd X = bt::uniform_points(rows, n, rng());
    // coarse grid creates repeated values
    if (trial % 3 == 0) X = (X * 5).array().round() / 5;
    MatrixXd Y = bt::uniform_points(rows, 1 + rng() % 3, rng());
    std::vector<std::size_t> feats = iota_ids(n);
    const std::size_t min_leaf = 1 + rng() % 3;
    const auto s = best_split(iota_ids(rows), X, Y, feats, min_leaf);
    const auto b = brute_best(iota_ids(rows), X, Y, feats, min_leaf);
    REQUIRE(bool(s) == b.found);
    if (!s) continue;
    CHECK(bt::rel_close(s->cost, b.cost, 1e-9));
    CHECK(s->feature == b.feature);
    CHECK(s->threshold == doctest::Approx(b.threshold));
    CHECK(bt::rel_close(s->parent_sse, bt::brute_sse(iota_ids(rows), Y), 1e-10));
  }
}

TEST_CASE("split cost equals parent SSE minus wavelet energy") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = 3 + rng() % 50;
    const MatrixXd X = bt::uniform_points(rows, 3, rng());
    const MatrixXd Y = bt::uniform_points(rows, 2, rng()) * 4.0;
    const auto splits = enumerate_splits(iota_ids(rows), X, Y, std::vector<std::size_t>{0, 1, 2});
    for (const Split& s : splits) {
      const double sse = bt::brute_sse(iota_ids(rows), Y);
      CHECK(bt::rel_close(s.cost, sse - wavelet_energy(s), 1e-8));
    }
  }
}

TEST_CASE("max_depth 0 gives a single node holding the bag mean") {
  const LabeledDataset d = bt::random_classification(40, 3, 3, 2);
  TrainParams p;
  p.max_depth = 0;
  const Tree t = grow_tree(d, iota_ids(40), p, 1);
  REQUIRE(t.nodes.size() == 1);
  CHECK((t.root().mean - d.Y.colwise().mean().transpose()).norm() < 1e-12);
  CHECK(t.root().box.log_volume() == 0.0);
}

TEST_CASE("two constant boxes give exactly two leaves") {
  MatrixXd X = bt::uniform_points(80, 3, 4);
  std::vector<int> ids(80);
  for (Eigen::Index i = 0; i < 80; ++i) ids[std::size_t(i)] = X(i, 1) <= 0.4 ? 0 : 1;
  const LabeledDataset d = make_dataset(bt::classification_table(X, ids, 2));
  TrainParams p;
  p.feature_subsample = 3;
  p.trees = 1;
  p.bagging_fraction = 1.0;
  const Forest f = train_forest(d, p);
  REQUIRE(f.trees[0].nodes.size() == 3);
  CHECK(f.trees[0].root().feature == 1);
  CHECK((predict(f, d.X) - d.Y).norm() == 0.0);
}

TEST_CASE("partition and mean consistency on random forests") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LabeledDataset d = bt::random_classification(150, 4, 3, seed);
    TrainParams p;
    p.trees = 3;
    p.seed = seed;
    p.min_leaf_size = 1 + seed % 3;
    p.bootstrap = seed % 2 == 1;
    const Forest f = train_forest(d, p, 1);
    for (const Tree& t : f.trees) {
      CHECK(t.root().box.log_volume() == 0.0);
      CHECK(t.root().sample_count == t.bag.size());
      for (const TreeNode& node : t.nodes) {
        VectorXd mean = VectorXd::Zero(d.Y.cols());
        for (auto i : node.sample_ids) mean += d.Y.row(Eigen::Index(i)).transpose();
        mean /= double(node.sample_ids.size());
        CHECK((mean - node.mean).norm() < 1e-10);
        CHECK(node.sample_count == node.sample_ids.size());
        if (node.is_leaf()) {
          CHECK(node.sample_count >= p.min_leaf_size);
          continue;
        }
        const TreeNode& l = t.nodes[std::size_t(node.left)];
        const TreeNode& r = t.nodes[std::size_t(node.right)];
        CHECK(l.parent == node.id);
        CHECK(l.depth == node.depth + 1);
        CHECK(l.sample_count + r.sample_count == node.sample_count);
        std::multiset<std::size_t> parent(node.sample_ids.begin(), node.sample_ids.end());
        std::multiset<std::size_t> kids(l.sample_ids.begin(), l.sample_ids.end());
        kids.insert(r.sample_ids.begin(), r.sample_ids.end());
        CHECK(parent == kids);
        const auto fd = std::size_t(node.feature);
        for (std::size_t dim = 0; dim < f.n; ++dim) {
          if (dim == fd) {
            CHECK(l.box.lo(dim) == node.box.lo(dim));
            CHECK(l.box.hi(dim) == node.threshold);
            CHECK(r.box.lo(dim) == node.threshold);
            CHECK(r.box.hi(dim) == node.box.hi(dim));
          } else {
            CHECK(l.box.lo(dim) == node.box.lo(dim));
            CHECK(r.box.hi(dim) == node.box.hi(dim));
          }
        }
        // volumes add up
        CHECK(bt::rel_close(std::exp(l.box.log_volume()) + std::exp(r.box.log_volume()),
                            std::exp(node.box.log_volume()), 1e-12));
        for (auto i : l.sample_ids) CHECK(l.box.contains(d.X.row(Eigen::Index(i)).transpose()));
        for (auto i : r.sample_ids) CHECK(r.box.contains(d.X.row(Eigen::Index(i)).transpose()));
      }
    }
  }
}

TEST_CASE("bags follow the sampling rule") {
  TrainParams p;
  p.seed = 3;
  const auto full = [&] {
    TrainParams q = p;
    q.bagging_fraction = 1.0;
    return draw_bag(50, q, 0);
  }();
  CHECK(full == iota_ids(50));
  for (std::size_t j = 0; j < 10; ++j) {
    const auto bag = draw_bag(100, p, j);
    CHECK(bag.size() == 80);
    CHECK(std::set<std::size_t>(bag.begin(), bag.end()).size() == 80);
    CHECK(std::ranges::is_sorted(bag));
  }
  CHECK(draw_bag(100, p, 0) != draw_bag(100, p, 1));
  p.bootstrap = true;
  const auto boot = draw_bag(100, p, 0);
  CHECK(boot.size() == 80);
  CHECK(std::set<std::size_t>(boot.begin(), boot.end()).size() < 80);

  TrainParams tiny;
  tiny.bagging_fraction = 0.001;
  CHECK_THROWS_AS(draw_bag(100, tiny, 0), ConfigError);
  const LabeledDataset d = bt::random_classification(100, 2, 2, 0);
  CHECK_THROWS_AS(train_forest(d, tiny), ConfigError);
}

TEST_CASE("parameter validation") {
  const LabeledDataset d = bt::random_classification(20, 3, 2, 0);
  TrainParams p;
  CHECK(p.features_per_split(10) == 4);
  CHECK(p.features_per_split(9) == 3);
  p.trees = 0;
  CHECK_THROWS_AS(train_forest(d, p), ConfigError);
  p = {};
  p.feature_subsample = 4;
  CHECK_THROWS_AS(train_forest(d, p), ConfigError);
  p = {};
  p.weights = {0.5, 0.5};
  CHECK_THROWS_AS(train_forest(d, p), ConfigError);
  p.trees = 2;
  CHECK_NOTHROW(train_forest(d, p));
  p.weights = {0.5, 0.6};
  CHECK_THROWS_AS(train_forest(d, p), ConfigError);
  p = {};
  p.bagging_fraction = 1.5;
  CHECK_THROWS_AS(train_forest(d, p), ConfigError);
  p = {};
  p.min_leaf_size = 0;
  CHECK_THROWS_AS(train_forest(d, p), ConfigError);
}

TEST_CASE("predict is the weighted average of leaf means") {
  const LabeledDataset d = bt::random_classification(60, 2, 3, 8);
  TrainParams p;
  p.trees = 2;
  p.weights = {0.25, 0.75};
  const Forest f = train_forest(d, p, 1);
  for (Eigen::Index i = 0; i < 10; ++i) {
    const VectorXd x = d.X.row(i).transpose();
    const VectorXd expect = 0.25 * f.trees[0].nodes[std::size_t(f.trees[0].leaf_for(x))].mean +
                            0.75 * f.trees[1].nodes[std::size_t(f.trees[1].leaf_for(x))].mean;
    CHECK((predict(f, x) - expect).norm() < 1e-15);
  }
  // out-of-cube queries are clamped
  VectorXd far(2);
  far << 5.0, -3.0;
  VectorXd edge(2);
  edge << 1.0, 0.0;
  CHECK(predict(f, far) == predict(f, edge));

  TrainParams stump;
  stump.max_depth = 0;
  stump.trees = 1;
  stump.bagging_fraction = 1.0;
  const Forest s = train_forest(d, stump);
  CHECK((predict(s, far) - d.Y.colwise().mean().transpose()).norm() < 1e-12);
  CHECK_FALSE(empirical_rho(s));
}

TEST_CASE("two-leaf routing and rho") {
  MatrixXd X(4, 1);
  X << 0.0, 0.2, 0.8, 1.0;
  std::vector<int> ids{0, 0, 1, 1};
  const LabeledDataset d = make_dataset(bt::classification_table(X, ids, 2));
  TrainParams p;
  p.trees = 1;
  p.bagging_fraction = 1.0;
  const Forest f = train_forest(d, p);
  REQUIRE(f.trees[0].nodes.size() == 3);
  CHECK(f.trees[0].root().threshold == doctest::Approx(0.5));
  VectorXd x(1);
  x << 0.15;
  CHECK(predict(f, x) == build_simplex(2).vertex(0));
  CHECK(*empirical_rho(f) == doctest::Approx(0.5));

  MatrixXd X9(4, 1);
  X9 << 0.0, 0.85, 0.95, 1.0;
  const LabeledDataset d9 = make_dataset(bt::classification_table(X9, ids, 2));
  const Forest f9 = train_forest(d9, p);
  CHECK(*empirical_rho(f9) == doctest::Approx(0.9));
}

TEST_CASE("rho stays in (0,1)") {
  const LabeledDataset d = bt::random_classification(200, 3, 4, 21);
  const Forest f = train_forest(d, TrainParams{});
  const auto rho = empirical_rho(f);
  REQUIRE(rho);
  CHECK(*rho > 0.0);
  CHECK(*rho < 1.0);
}

TEST_CASE("training is deterministic and independent of thread count") {
  const LabeledDataset d = bt::random_classification(300, 5, 3, 17);
  TrainParams p;
  p.trees = 7;
  p.seed = 99;
  const std::string one = serialize_forest(train_forest(d, p, 1));
  CHECK(serialize_forest(train_forest(d, p, 1)) == one);
  CHECK(serialize_forest(train_forest(d, p, 3)) == one);
  CHECK(serialize_forest(train_forest(d, p, 8)) == one);
  p.seed = 100;
  CHECK(serialize_forest(train_forest(d, p, 1)) != one);
}

TEST_CASE("zero padding keeps the partitions") {
  const LabeledDataset d = bt::random_classification(120, 3, 3, 6);
  const Forest f = train_forest(d, TrainParams{});
  const Forest padded = pad_forest(f, 4);
  const LabeledDataset pd = pad_dataset(d, 4);
  CHECK(padded.n == 7);
  CHECK(pd.X.cols() == 7);
  CHECK(pd.X.rightCols(4).isZero());
  CHECK(predict(padded, pd.X) == predict(f, d.X));
  for (std::size_t j = 0; j < f.trees.size(); ++j)
    for (std::size_t k = 0; k < f.trees[j].nodes.size(); ++k)
      CHECK(padded.trees[j].nodes[k].box.log_volume() == f.trees[j].nodes[k].box.log_volume());
  CHECK_NOTHROW(padded.params.validate(padded.n));
}

TEST_CASE("Box geometry") {
  Box root(3);
  CHECK(root.log_volume() == 0.0);
  const auto [a, b] = root.split(1, 0.25);
  CHECK(a.hi(1) == 0.25);
  CHECK(b.lo(1) == 0.25);
  CHECK(a.lo(0) == 0.0);
  CHECK(a.hi(2) == 1.0);
  CHECK(std::exp(a.log_volume()) == doctest::Approx(0.25));
  VectorXd on_cut(3);
  on_cut << 0.5, 0.25, 0.5;
  CHECK(a.contains(on_cut));
  CHECK_FALSE(b.contains(on_cut));
  VectorXd corner = VectorXd::Zero(3);
  CHECK(a.contains(corner));
  CHECK(bt::rel_close(b.split(1, 0.5).second.log_volume(), std::log(0.5), 1e-15));
  CHECK_THROWS_AS(Box::from_sides(2, {{3, 0.0, 1.0}}), InputError);
  CHECK_THROWS_AS(Box::from_sides(2, {{0, 0.5, 0.5}}), InputError);
}

TEST_CASE("THREADS environment variable") {
  ::setenv("THREADS", "3", 1);
  CHECK(threads_from_env() == 3);
  ::unsetenv("THREADS");
  CHECK(threads_from_env() == 0);
}
