#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <variant>

#include <catch2/catch_amalgamated.hpp>

#include "das/pct.hpp"
#include "helpers.hpp"

using das::Bytes;
using das::PctTree;
using das::Triple;

namespace {

using Tree = PctTree<std::monostate>;

// Tags are irrelevant to tree shape; fill them with noise.
std::vector<Triple> random_set(std::size_t n, std::uint64_t seed, std::size_t key_width = 8) {
  std::mt19937_64 rng(seed);
  std::set<Bytes> seen;
  std::vector<Triple> out;
  while (out.size() < n) {
    Bytes key = das::random_bytes(rng, key_width);
    if (!seen.insert(key).second) continue;
    out.push_back(Triple{key, das::random_bytes(rng, 8), das::random_bytes(rng, 8)});
  }
  return out;
}

Bytes test_salt() { return Bytes{9, 9, 9}; }

Tree oracle_tree(std::vector<Triple> set, std::size_t beta) {
  return Tree::build(std::move(set), beta, test_salt());
}

void leaf_bounds(const Tree::Node* u, std::size_t beta, bool is_root, std::size_t& min_leaf,
                 std::size_t& max_leaf) {
  if (u == nullptr) return;
  if (u->is_leaf()) {
    min_leaf = std::min(min_leaf, u->bucket.size());
    max_leaf = std::max(max_leaf, u->bucket.size());
    if (!is_root) REQUIRE(u->bucket.size() >= (beta + 1) / 2);
    REQUIRE(u->bucket.size() <= beta);
    return;
  }
  leaf_bounds(u->left.get(), beta, false, min_leaf, max_leaf);
  leaf_bounds(u->right.get(), beta, false, min_leaf, max_leaf);
}

double mean_leaf_depth(const Tree::Node* u, std::size_t depth, std::size_t& leaves,
                       std::size_t& total) {
  if (u->is_leaf()) {
    leaves += 1;
    total += depth;
    return 0;
  }
  mean_leaf_depth(u->left.get(), depth + 1, leaves, total);
  mean_leaf_depth(u->right.get(), depth + 1, leaves, total);
  return double(total) / double(leaves);
}

}  // namespace

TEST_CASE("protected split boundaries") {
  auto set = random_set(10, 1);
  std::sort(set.begin(), set.end(), [](const Triple& a, const Triple& b) { return a.key < b.key; });

  SECTION("n=10 beta=4: ranks 0-1 / 2-7 / 8-9") {
    auto sp = das::protected_split(std::span<const Triple>(set.data(), set.size()), 4);
    REQUIRE(sp.prefix.size() == 2);
    REQUIRE(sp.middle.size() == 6);
    REQUIRE(sp.suffix.size() == 2);
    REQUIRE(sp.prefix[0] == set[0]);
    REQUIRE(sp.middle[0] == set[2]);
    REQUIRE(sp.suffix[0] == set[8]);
  }
  SECTION("n <= beta: everything protected") {
    auto sp = das::protected_split(std::span<const Triple>(set.data(), 4), 4);
    REQUIRE(sp.middle.empty());
  }
  SECTION("n = 2*ceil(beta/2) + 1: middle of exactly one") {
    auto sp = das::protected_split(std::span<const Triple>(set.data(), 5), 4);
    REQUIRE(sp.middle.size() == 1);
    REQUIRE(sp.middle[0] == set[2]);
  }
}

TEST_CASE("build: single leaf at or below beta, beta must be even") {
  auto set = random_set(4, 2);
  Tree t = oracle_tree(set, 4);
  REQUIRE(t.root() != nullptr);
  REQUIRE(t.root()->is_leaf());
  REQUIRE(t.root()->bucket.size() == 4);
  REQUIRE(t.check_structure());

  CHECK_THROWS_AS(Tree(3, test_salt()), das::Error);
  CHECK_THROWS_AS(Tree(0, test_salt()), das::Error);

  auto dup = set;
  dup.push_back(set[0]);
  CHECK_THROWS_AS(oracle_tree(dup, 4), das::Error);
}

TEST_CASE("build invariants at scale") {
  const std::size_t n = 10000;
  auto set = random_set(n, 3);
  for (std::size_t beta : {32u, 64u, 256u}) {
    Tree t = oracle_tree(set, beta);
    REQUIRE(t.size() == n);
    REQUIRE(t.check_structure());

    std::size_t min_leaf = n, max_leaf = 0;
    leaf_bounds(t.root(), beta, true, min_leaf, max_leaf);
    REQUIRE(max_leaf <= beta);
    REQUIRE(min_leaf >= (beta + 1) / 2);

    // node-count bound asserted at acceptance scale too
    REQUIRE(t.node_count() <= 4 * ((n + beta - 1) / beta) + 1);
  }
}

TEST_CASE("mean root-to-leaf path stays logarithmic") {
  const std::size_t n = 10000, beta = 64;
  Tree t = oracle_tree(random_set(n, 4), beta);
  std::size_t leaves = 0, total = 0;
  double mean = mean_leaf_depth(t.root(), 0, leaves, total);
  REQUIRE(mean <= 4.0 * std::log2(double(n) / double(beta)));
}

TEST_CASE("insert matches the rebuild oracle at every step") {
  const std::size_t beta = 8;
  auto set = random_set(300, 5);
  Tree t(beta, test_salt());
  std::vector<Triple> have;
  for (const Triple& tr : set) {
    t.insert(tr);
    have.push_back(tr);
    REQUIRE(t.size() == have.size());
    REQUIRE(Tree::same_shape(t, oracle_tree(have, beta)));
  }
  REQUIRE(t.check_structure());
}

TEST_CASE("insert below capacity extends the leaf; overflow splits it") {
  auto set = random_set(5, 6);
  Tree t(4, test_salt());
  for (int i = 0; i < 3; ++i) t.insert(set[i]);
  REQUIRE(t.root()->is_leaf());

  auto ch = t.insert(set[3]);
  REQUIRE(ch.rebuilt == nullptr);
  REQUIRE(ch.updated.size() == 1);
  REQUIRE(t.root()->is_leaf());

  ch = t.insert(set[4]);  // 5 > beta
  REQUIRE(ch.rebuilt != nullptr);
  REQUIRE_FALSE(t.root()->is_leaf());
  REQUIRE(Tree::same_shape(t, oracle_tree(set, 4)));
}

TEST_CASE("duplicate insert and missing erase are rejected without change") {
  auto set = random_set(50, 7);
  Tree t = oracle_tree(set, 8);
  CHECK_THROWS_AS(t.insert(set[10]), das::Error);
  Bytes ghost(8, 0x5a);
  CHECK_THROWS_AS(t.erase(ghost), das::Error);
  REQUIRE(Tree::same_shape(t, oracle_tree(set, 8)));
}

TEST_CASE("erase matches the rebuild oracle at every step") {
  const std::size_t beta = 8;
  auto set = random_set(200, 8);
  Tree t = oracle_tree(set, beta);
  std::mt19937_64 rng(9);
  std::vector<Triple> have = set;
  while (!have.empty()) {
    std::size_t pick = rng() % have.size();
    t.erase(have[pick].key);
    have.erase(have.begin() + std::ptrdiff_t(pick));
    REQUIRE(Tree::same_shape(t, oracle_tree(have, beta)));
  }
  REQUIRE(t.empty());
}

TEST_CASE("erase of a mid-bucket element touches only that leaf") {
  // build until some leaf is strictly above the half bound, then delete there
  const std::size_t beta = 8;
  auto set = random_set(100, 10);
  Tree t = oracle_tree(set, beta);

  const Tree::Node* fat_leaf = nullptr;
  std::function<void(const Tree::Node*)> scan = [&](const Tree::Node* u) {
    if (u->is_leaf()) {
      if (u->bucket.size() > (beta + 1) / 2) fat_leaf = u;
      return;
    }
    scan(u->left.get());
    scan(u->right.get());
  };
  scan(t.root());
  REQUIRE(fat_leaf != nullptr);

  auto ch = t.erase(fat_leaf->bucket[1].key);
  REQUIRE(ch.rebuilt == nullptr);
  REQUIRE(ch.updated.back()->is_leaf());
}

TEST_CASE("erase down to a single root leaf and to empty") {
  auto set = random_set(1, 11);
  Tree t(4, test_salt());
  t.insert(set[0]);
  auto ch = t.erase(set[0].key);
  REQUIRE(t.empty());
  REQUIRE(ch.updated.empty());
  REQUIRE(ch.triple == set[0]);
}

TEST_CASE("locate") {
  auto set = random_set(120, 12);
  Tree t = oracle_tree(set, 8);

  SECTION("single leaf tree has a one-node path") {
    Tree small(8, test_salt());
    small.insert(set[0]);
    REQUIRE(small.locate(set[0].key).size() == 1);
  }
  SECTION("pivot keys end at their internal node") {
    REQUIRE_FALSE(t.root()->is_leaf());
    auto path = t.locate(t.root()->pivot.key);
    REQUIRE(path.size() == 1);
    REQUIRE(path[0] == t.root());
  }
  SECTION("every key is found where enumeration predicts") {
    for (const Triple& tr : set) {
      auto path = t.locate(tr.key);
      REQUIRE_FALSE(path.empty());
      const auto* last = path.back();
      if (last->is_leaf()) {
        bool in_bucket = std::any_of(last->bucket.begin(), last->bucket.end(),
                                     [&](const Triple& x) { return x.key == tr.key; });
        REQUIRE(in_bucket);
      } else {
        REQUIRE(last->pivot.key == tr.key);
      }
      REQUIRE(t.find(tr.key) != nullptr);
      REQUIRE(*t.find(tr.key) == tr);
    }
  }
}

TEST_CASE("history independence: any op interleaving matches the direct build") {
  std::mt19937_64 rng(13);
  for (int round = 0; round < 25; ++round) {
    const std::size_t beta = (round % 2 == 0) ? 4 : 8;
    auto set = random_set(20 + rng() % 150, 1000 + round);
    auto extra = random_set(10, 5000 + round, 9);  // distinct width avoids key clashes

    // order A: shuffled inserts
    Tree a(beta, test_salt());
    auto perm = set;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (const Triple& tr : perm) a.insert(tr);

    // order B: different shuffle with transient extras inserted and removed
    Tree b(beta, test_salt());
    std::shuffle(perm.begin(), perm.end(), rng);
    std::size_t half = perm.size() / 2;
    for (std::size_t i = 0; i < half; ++i) b.insert(perm[i]);
    for (const Triple& tr : extra) b.insert(tr);
    for (std::size_t i = half; i < perm.size(); ++i) b.insert(perm[i]);
    for (const Triple& tr : extra) b.erase(tr.key);

    Tree direct = oracle_tree(set, beta);
    REQUIRE(Tree::same_shape(a, direct));
    REQUIRE(Tree::same_shape(b, direct));
  }
}
