#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "das/bytes.hpp"
#include "das/errors.hpp"
#include "das/hashing.hpp"
#include "das/iblt.hpp"

namespace das {

// Per-key priority in [0, 2^64), a fixed-point stand-in for the random hash
// into [0,1). Ties are broken by key order, so tree shape is a pure function
// of (key set, salt, beta).
inline std::uint64_t key_priority(const Bytes& salt, const Bytes& key) {
  return hash64(salt, "pri", 0, key);
}

// Protected split of a key-sorted range of size n: the first and last
// ceil(beta/2) ranks are protected; the middle is where pivots come from.
// Empty middle iff n <= 2*ceil(beta/2).
struct ProtectedSplit {
  std::span<const Triple> prefix;
  std::span<const Triple> middle;
  std::span<const Triple> suffix;
};

inline ProtectedSplit protected_split(std::span<const Triple> sorted, std::size_t beta) {
  const std::size_t half = (beta + 1) / 2;
  const std::size_t n = sorted.size();
  if (n <= 2 * half) return {sorted.first(std::min(n, half)),
                             sorted.subspan(std::min(n, half), 0),
                             sorted.last(n - std::min(n, half))};
  return {sorted.first(half), sorted.subspan(half, n - 2 * half), sorted.last(half)};
}

template <typename Aug>
struct PctNode {
  std::vector<Triple> bucket;            // leaf storage, sorted by key
  Triple pivot;                          // internal nodes only
  std::unique_ptr<PctNode> left, right;  // both set iff internal
  std::size_t size = 0;                  // triples in this subtree (buckets + pivots)
  Aug aug{};

  bool is_leaf() const { return left == nullptr; }
};

// History-independent randomized BST with Theta(beta)-sized leaf buckets.
// A subtree's pivot is the minimum-priority element of its unprotected
// middle; sets of size <= beta live in a single leaf. Leaves hold between
// ceil(beta/2) and beta elements except when the whole tree is one leaf.
//
// insert/erase rebuild the smallest subtree whose pivot assignment changes
// and report both the untouched path (for O(1) sketch maintenance by the
// embedding layer) and the rebuilt subtree root (for full recomputation).
template <typename Aug>
class PctTree {
 public:
  using Node = PctNode<Aug>;

  struct Change {
    std::vector<Node*> updated;  // surviving nodes whose membership changed, root-down
    Node* rebuilt = nullptr;     // root of the freshly rebuilt subtree, if any
    Triple triple;               // the inserted or removed triple
  };

  PctTree() = default;
  PctTree(std::size_t beta, Bytes salt) : beta_(beta), salt_(std::move(salt)) {
    if (beta_ < 2 || beta_ % 2 != 0) fail(Errc::invalid_params, "beta must be even and >= 2");
  }

  static PctTree build(std::vector<Triple> triples, std::size_t beta, Bytes salt) {
    PctTree t(beta, std::move(salt));
    sort_unique(triples);
    t.root_ = t.build_sorted(triples);
    return t;
  }

  std::size_t beta() const { return beta_; }
  const Bytes& salt() const { return salt_; }
  std::size_t size() const { return root_ ? root_->size : 0; }
  bool empty() const { return root_ == nullptr; }
  Node* root() { return root_.get(); }
  const Node* root() const { return root_.get(); }

  const Triple* find(const Bytes& key) const {
    const Node* u = root_.get();
    while (u != nullptr) {
      if (u->is_leaf()) {
        auto it = bucket_find(u->bucket, key);
        return it == u->bucket.end() ? nullptr : &*it;
      }
      if (key == u->pivot.key) return &u->pivot;
      u = key < u->pivot.key ? u->left.get() : u->right.get();
    }
    return nullptr;
  }

  // Root-to-node search path; ends at the pivot node holding the key or at
  // the leaf where the key lives (or would live).
  std::vector<const Node*> locate(const Bytes& key) const {
    std::vector<const Node*> path;
    const Node* u = root_.get();
    while (u != nullptr) {
      path.push_back(u);
      if (u->is_leaf() || key == u->pivot.key) break;
      u = key < u->pivot.key ? u->left.get() : u->right.get();
    }
    return path;
  }

  Change insert(Triple t) {
    if (find(t.key) != nullptr) fail(Errc::duplicate_key, "key already present");
    Change ch;
    ch.triple = t;
    if (!root_) {
      root_ = leaf_of({std::move(t)});
      ch.rebuilt = root_.get();
      return ch;
    }
    std::unique_ptr<Node>* slot = &root_;
    for (;;) {
      Node* u = slot->get();
      if (u->is_leaf()) {
        if (u->size + 1 > beta_) {
          rebuild_with(*slot, std::move(t), nullptr);
          ch.rebuilt = slot->get();
          return ch;
        }
        auto pos = std::lower_bound(u->bucket.begin(), u->bucket.end(), t.key,
                                    [](const Triple& a, const Bytes& k) { return a.key < k; });
        u->bucket.insert(pos, std::move(t));
        u->size += 1;
        ch.updated.push_back(u);
        return ch;
      }

      // The middle of the enlarged subtree gains exactly one element: the
      // inserted triple, or the boundary element it pushes out of a
      // protected region. The pivot changes iff that element beats it.
      const std::size_t half = beta_ / 2;
      const std::size_t rank_new = rank_below(*u, t.key);
      const Triple* enterer;
      if (rank_new < half)
        enterer = &select(*u, half - 1);
      else if (rank_new >= u->size + 1 - half)
        enterer = &select(*u, u->size - half);
      else
        enterer = &t;
      if (beats(*enterer, u->pivot)) {
        rebuild_with(*slot, std::move(t), nullptr);
        ch.rebuilt = slot->get();
        return ch;
      }
      u->size += 1;
      ch.updated.push_back(u);
      slot = t.key < u->pivot.key ? &u->left : &u->right;
    }
  }

  Change erase(const Bytes& key) {
    const Triple* found = find(key);
    if (found == nullptr) fail(Errc::key_not_found, "key not present");
    Change ch;
    ch.triple = *found;
    std::unique_ptr<Node>* slot = &root_;
    for (;;) {
      Node* u = slot->get();
      if (u->is_leaf()) {
        auto it = bucket_find(u->bucket, key);
        u->bucket.erase(it);
        u->size -= 1;
        if (u->size == 0)
          slot->reset();  // only reachable for a root-level leaf
        else
          ch.updated.push_back(u);
        return ch;
      }

      // A deletion can only shrink the middle. Rebuild when the pivot itself
      // goes (removed, pushed below the prefix boundary, or past the new
      // suffix boundary) or when the subtree collapses to leaf size.
      const std::size_t half = beta_ / 2;
      const std::size_t pivot_rank = u->left->size;
      bool rebuild = u->size - 1 <= beta_ || key == u->pivot.key ||
                     (key < u->pivot.key && pivot_rank == half) ||
                     (key > u->pivot.key && pivot_rank == u->size - half - 1);
      if (rebuild) {
        rebuild_with(*slot, Triple{}, &key);
        ch.rebuilt = slot->get();
        return ch;
      }
      u->size -= 1;
      ch.updated.push_back(u);
      slot = key < u->pivot.key ? &u->left : &u->right;
    }
  }

  template <typename F>
  void for_each(F&& fn) const {
    walk_inorder(root_.get(), fn);
  }

  std::vector<Triple> collect() const {
    std::vector<Triple> out;
    out.reserve(size());
    for_each([&](const Triple& t) { out.push_back(t); });
    return out;
  }

  std::size_t node_count() const { return count_nodes(root_.get()); }
  std::size_t leaf_count() const { return count_leaves(root_.get()); }

  // Verifies BST order, pivot choice, leaf bounds and size bookkeeping
  // against the construction rules. Quiet on success.
  bool check_structure() const {
    if (!root_) return true;
    std::vector<Triple> sorted = collect();
    for (std::size_t i = 1; i < sorted.size(); ++i)
      if (!(sorted[i - 1].key < sorted[i].key)) return false;
    return check_node(root_.get(), sorted, 0, sorted.size(), /*is_root=*/true);
  }

  static bool same_shape(const PctTree& a, const PctTree& b) {
    return a.beta_ == b.beta_ && a.salt_ == b.salt_ && same_node(a.root_.get(), b.root_.get());
  }

  // Restore plumbing: installs an externally reconstructed subtree.
  void adopt(std::unique_ptr<Node> root) { root_ = std::move(root); }

 private:
  static void sort_unique(std::vector<Triple>& v) {
    std::sort(v.begin(), v.end(), [](const Triple& a, const Triple& b) { return a.key < b.key; });
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i - 1].key == v[i].key) fail(Errc::duplicate_key, "duplicate key in set");
  }

  static typename std::vector<Triple>::const_iterator bucket_find(const std::vector<Triple>& b,
                                                                  const Bytes& key) {
    auto it = std::lower_bound(b.begin(), b.end(), key,
                               [](const Triple& a, const Bytes& k) { return a.key < k; });
    if (it != b.end() && it->key == key) return it;
    return b.end();
  }

  bool beats(const Triple& a, const Triple& b) const {
    std::uint64_t pa = key_priority(salt_, a.key), pb = key_priority(salt_, b.key);
    return pa < pb || (pa == pb && a.key < b.key);
  }

  std::unique_ptr<Node> leaf_of(std::vector<Triple> bucket) const {
    auto n = std::make_unique<Node>();
    n->size = bucket.size();
    n->bucket = std::move(bucket);
    return n;
  }

  std::unique_ptr<Node> build_sorted(const std::vector<Triple>& sorted) const {
    if (sorted.empty()) return nullptr;
    std::vector<std::uint64_t> prio(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) prio[i] = key_priority(salt_, sorted[i].key);
    return build_range(sorted, prio, 0, sorted.size());
  }

  std::unique_ptr<Node> build_range(const std::vector<Triple>& s,
                                    const std::vector<std::uint64_t>& prio, std::size_t lo,
                                    std::size_t hi) const {
    const std::size_t n = hi - lo;
    auto node = std::make_unique<Node>();
    node->size = n;
    if (n <= beta_) {
      node->bucket.assign(s.begin() + lo, s.begin() + hi);
      return node;
    }
    const std::size_t half = beta_ / 2;
    std::size_t best = lo + half;
    for (std::size_t i = lo + half + 1; i < hi - half; ++i)
      if (prio[i] < prio[best] || (prio[i] == prio[best] && s[i].key < s[best].key)) best = i;
    node->pivot = s[best];
    node->left = build_range(s, prio, lo, best);
    node->right = build_range(s, prio, best + 1, hi);
    return node;
  }

  // Rebuild the subtree at slot from its own elements, either with `add`
  // inserted or with `remove_key` dropped.
  void rebuild_with(std::unique_ptr<Node>& slot, Triple add, const Bytes* remove_key) const {
    std::vector<Triple> elems;
    elems.reserve(slot->size + 1);
    collect_subtree(slot.get(), elems);
    if (remove_key != nullptr) {
      auto it = std::find_if(elems.begin(), elems.end(),
                             [&](const Triple& t) { return t.key == *remove_key; });
      elems.erase(it);
    } else {
      auto pos = std::lower_bound(elems.begin(), elems.end(), add.key,
                                  [](const Triple& a, const Bytes& k) { return a.key < k; });
      elems.insert(pos, std::move(add));
    }
    std::vector<std::uint64_t> prio(elems.size());
    for (std::size_t i = 0; i < elems.size(); ++i) prio[i] = key_priority(salt_, elems[i].key);
    slot = build_range(elems, prio, 0, elems.size());
  }

  static void collect_subtree(const Node* u, std::vector<Triple>& out) {
    if (u == nullptr) return;
    if (u->is_leaf()) {
      out.insert(out.end(), u->bucket.begin(), u->bucket.end());
      return;
    }
    collect_subtree(u->left.get(), out);
    out.push_back(u->pivot);
    collect_subtree(u->right.get(), out);
  }

  // Order statistics over a subtree; pivots count as elements.
  static const Triple& select(const Node& u, std::size_t r) {
    if (u.is_leaf()) return u.bucket[r];
    const std::size_t ls = u.left->size;
    if (r < ls) return select(*u.left, r);
    if (r == ls) return u.pivot;
    return select(*u.right, r - ls - 1);
  }

  static std::size_t rank_below(const Node& u, const Bytes& key) {
    if (u.is_leaf()) {
      auto it = std::lower_bound(u.bucket.begin(), u.bucket.end(), key,
                                 [](const Triple& a, const Bytes& k) { return a.key < k; });
      return std::size_t(it - u.bucket.begin());
    }
    if (key < u.pivot.key) return rank_below(*u.left, key);
    if (key == u.pivot.key) return u.left->size;
    return u.left->size + 1 + rank_below(*u.right, key);
  }

  template <typename F>
  static void walk_inorder(const Node* u, F& fn) {
    if (u == nullptr) return;
    if (u->is_leaf()) {
      for (const Triple& t : u->bucket) fn(t);
      return;
    }
    walk_inorder(u->left.get(), fn);
    fn(u->pivot);
    walk_inorder(u->right.get(), fn);
  }

  static std::size_t count_nodes(const Node* u) {
    if (u == nullptr) return 0;
    return 1 + count_nodes(u->left.get()) + count_nodes(u->right.get());
  }
  static std::size_t count_leaves(const Node* u) {
    if (u == nullptr) return 0;
    if (u->is_leaf()) return 1;
    return count_leaves(u->left.get()) + count_leaves(u->right.get());
  }

  bool check_node(const Node* u, const std::vector<Triple>& sorted, std::size_t lo, std::size_t hi,
                  bool is_root) const {
    const std::size_t n = hi - lo;
    if (u == nullptr || u->size != n) return false;
    const std::size_t half = beta_ / 2;
    if (n <= beta_) {
      if (!u->is_leaf()) return false;
      if (!is_root && n < half) return false;
      if (u->bucket.size() != n) return false;
      for (std::size_t i = 0; i < n; ++i)
        if (u->bucket[i] != sorted[lo + i]) return false;
      return true;
    }
    if (u->is_leaf()) return false;
    std::size_t best = lo + half;
    for (std::size_t i = lo + half + 1; i < hi - half; ++i) {
      std::uint64_t pi = key_priority(salt_, sorted[i].key);
      std::uint64_t pb = key_priority(salt_, sorted[best].key);
      if (pi < pb || (pi == pb && sorted[i].key < sorted[best].key)) best = i;
    }
    if (u->pivot != sorted[best]) return false;
    return check_node(u->left.get(), sorted, lo, best, false) &&
           check_node(u->right.get(), sorted, best + 1, hi, false);
  }

  static bool same_node(const Node* a, const Node* b) {
    if (a == nullptr || b == nullptr) return a == b;
    if (a->is_leaf() != b->is_leaf() || a->size != b->size) return false;
    if (a->is_leaf()) return a->bucket == b->bucket;
    return a->pivot == b->pivot && same_node(a->left.get(), b->left.get()) &&
           same_node(a->right.get(), b->right.get());
  }

  std::size_t beta_ = 0;
  Bytes salt_;
  std::unique_ptr<Node> root_;
};

}  // namespace das
