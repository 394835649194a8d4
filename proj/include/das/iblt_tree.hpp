#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "das/bytes.hpp"
#include "das/errors.hpp"
#include "das/iblt.hpp"
#include "das/pct.hpp"
#include "das/serial.hpp"
#include "das/tag_crypto.hpp"

namespace das {

inline constexpr std::uint16_t kTreeFormatVersion = 1;

// Protected Cartesian tree in which every node carries a sketch of its whole
// subtree: leaves fold their bucket, internal nodes combine their children
// and add the pivot. The root sketch therefore represents the full stored
// set. Tree priorities reuse the sketch salt (domain-separated).
class IbltTree {
 public:
  using Node = PctNode<std::optional<Iblt>>;

  IbltTree(IbltParams params, PublicParams pp, std::size_t beta)
      : params_(std::move(params)), pp_(std::move(pp)), tree_(beta, params_.salt) {
    params_.validate();
  }

  // Tags are the caller's responsibility here (Setup verifies on ingest).
  static IbltTree init(std::vector<Triple> triples, IbltParams params, PublicParams pp,
                       std::size_t beta) {
    IbltTree t(std::move(params), std::move(pp), beta);
    for (const Triple& tr : triples) t.check_widths(tr);
    auto pct = PctTree<std::optional<Iblt>>::build(std::move(triples), beta, t.params_.salt);
    t.tree_ = std::move(pct);
    if (t.tree_.root() != nullptr) t.recompute(t.tree_.root());
    return t;
  }

  const IbltParams& params() const { return params_; }
  const PublicParams& public_params() const { return pp_; }
  std::size_t beta() const { return tree_.beta(); }
  std::size_t size() const { return tree_.size(); }
  bool empty() const { return tree_.empty(); }
  std::size_t node_count() const { return tree_.node_count(); }
  std::size_t leaf_count() const { return tree_.leaf_count(); }
  const PctTree<std::optional<Iblt>>& pct() const { return tree_; }

  const Triple* find(const Bytes& key) const { return tree_.find(key); }

  std::vector<Bytes> keys() const {
    std::vector<Bytes> out;
    out.reserve(size());
    tree_.for_each([&](const Triple& t) { out.push_back(t.key); });
    return out;
  }

  void insert(const Triple& t) {
    check_widths(t);
    if (!verify_tag(t.key, t.block, t.tag, pp_)) fail(Errc::bad_tag, "tag does not verify");
    apply(tree_.insert(t));
  }

  Triple erase(const Bytes& key) {
    auto ch = tree_.erase(key);
    Triple removed = ch.triple;
    apply(std::move(ch));
    return removed;
  }

  Iblt root_iblt() const {
    if (tree_.empty()) fail(Errc::empty_tree, "no root sketch for an empty tree");
    return *tree_.root()->aug;
  }

  struct ConstructRequest {
    std::vector<Bytes> excluded;  // keys to leave out of the result
    std::vector<Bytes> invalid;   // known corrupted/missing keys; drive descent
    // Live verified read used when an affected node is re-resolved; nullopt
    // drops the triple and bumps `skipped`. When absent, the tree's own
    // metadata triples are trusted.
    std::function<std::optional<Triple>(const Bytes&)> fetch;
  };

  struct ConstructResult {
    Iblt iblt;
    std::size_t skipped = 0;        // triples dropped by fetch
    std::size_t leaf_rebuilds = 0;  // affected leaves re-folded
    std::size_t pruned = 0;         // whole subtrees taken from their sketch
  };

  // Sketch of {stored set} minus {excluded} minus {triples fetch rejects}.
  // Subtrees whose key range holds no excluded or known-invalid key
  // contribute their stored sketch unchanged; affected leaves are re-folded
  // through fetch, and an affected internal node re-resolves its pivot the
  // same way.
  ConstructResult construct(const ConstructRequest& req) const {
    ConstructResult res{Iblt(params_)};
    std::vector<Bytes> descend;
    descend.reserve(req.excluded.size() + req.invalid.size());
    descend.insert(descend.end(), req.excluded.begin(), req.excluded.end());
    descend.insert(descend.end(), req.invalid.begin(), req.invalid.end());
    std::sort(descend.begin(), descend.end());
    descend.erase(std::unique(descend.begin(), descend.end()), descend.end());
    std::vector<Bytes> excluded = req.excluded;
    std::sort(excluded.begin(), excluded.end());
    if (tree_.root() != nullptr)
      construct_walk(tree_.root(), descend.begin(), descend.end(), excluded, req.fetch, res);
    return res;
  }

  // Snapshot layout: "DAST" | version u16 | beta u32 | n u64 | parameter
  // block (as in the sketch header, magic/version omitted) | pre-order node
  // stream. Each node: tag byte (0 leaf, 1 internal) | leaf: count u16 +
  // triples / internal: pivot triple | node sketch cell array; children
  // follow in pre-order. Byte-identical for equal stored sets.
  Bytes snapshot() const {
    ByteWriter w;
    w.magic("DAST");
    w.u16(kTreeFormatVersion);
    w.u32(std::uint32_t(tree_.beta()));
    w.u64(tree_.size());
    Iblt::write_params(w, params_);
    write_node(w, tree_.root());
    return w.take();
  }

  static IbltTree restore(std::span<const std::uint8_t> raw, PublicParams pp) {
    ByteReader r(raw);
    r.expect_magic("DAST");
    if (r.u16() != kTreeFormatVersion) fail(Errc::version_mismatch, "tree snapshot version");
    const std::size_t beta = r.u32();
    const std::uint64_t n = r.u64();
    IbltParams params = Iblt::read_params(r);
    IbltTree t(std::move(params), std::move(pp), beta);
    if (n > 0) {
      auto root = t.read_node(r);
      if (root->size != n) fail(Errc::malformed_bytes, "element count mismatch");
      t.tree_.adopt(std::move(root));
    }
    r.expect_done();
    return t;
  }

  // Every node sketch must equal the from-scratch sketch of its subtree.
  bool check_consistency() const {
    if (tree_.empty()) return true;
    bool ok = true;
    verify_node(tree_.root(), ok);
    return ok;
  }

  // Bytes held in node sketches alone (cells, not counting structure).
  std::size_t sketch_bytes() const {
    return node_count() * std::size_t(params_.num_cells) * params_.cell_bytes();
  }

 private:
  void check_widths(const Triple& t) const {
    if (t.key.size() != params_.key_width || t.block.size() != params_.block_width ||
        t.tag.size() != params_.tag_width)
      fail(Errc::width_mismatch, "triple widths do not match tree parameters");
  }

  void apply(PctTree<std::optional<Iblt>>::Change ch) {
    for (Node* u : ch.updated) u->aug->update(ch.triple);
    if (ch.rebuilt != nullptr) recompute(ch.rebuilt);
  }

  void recompute(Node* u) {
    Iblt fresh(params_);
    if (u->is_leaf()) {
      for (const Triple& t : u->bucket) fresh.update(t);
    } else {
      recompute(u->left.get());
      recompute(u->right.get());
      fresh.combine(*u->left->aug);
      fresh.combine(*u->right->aug);
      fresh.update(u->pivot);
    }
    u->aug = std::move(fresh);
  }

  using KeyIt = std::vector<Bytes>::const_iterator;
  using Fetch = std::function<std::optional<Triple>(const Bytes&)>;

  void resolve_into(const Triple& t, const std::vector<Bytes>& excluded, const Fetch& fetch,
                    ConstructResult& res) const {
    if (std::binary_search(excluded.begin(), excluded.end(), t.key)) return;
    if (fetch) {
      auto live = fetch(t.key);
      if (!live.has_value()) {
        res.skipped += 1;
        return;
      }
      res.iblt.update(*live);
    } else {
      res.iblt.update(t);
    }
  }

  void construct_walk(const Node* u, KeyIt dlo, KeyIt dhi, const std::vector<Bytes>& excluded,
                      const Fetch& fetch, ConstructResult& res) const {
    if (dlo == dhi) {
      res.iblt.combine(*u->aug);
      res.pruned += 1;
      return;
    }
    if (u->is_leaf()) {
      res.leaf_rebuilds += 1;
      for (const Triple& t : u->bucket) resolve_into(t, excluded, fetch, res);
      return;
    }
    KeyIt mid_lo = std::lower_bound(dlo, dhi, u->pivot.key);
    KeyIt mid_hi = std::upper_bound(mid_lo, dhi, u->pivot.key);
    construct_walk(u->left.get(), dlo, mid_lo, excluded, fetch, res);
    resolve_into(u->pivot, excluded, fetch, res);
    construct_walk(u->right.get(), mid_hi, dhi, excluded, fetch, res);
  }

  void write_node(ByteWriter& w, const Node* u) const {
    if (u == nullptr) return;
    if (u->is_leaf()) {
      w.u8(0);
      w.u16(std::uint16_t(u->bucket.size()));
      for (const Triple& t : u->bucket) {
        w.raw(t.key);
        w.raw(t.block);
        w.raw(t.tag);
      }
    } else {
      w.u8(1);
      w.raw(u->pivot.key);
      w.raw(u->pivot.block);
      w.raw(u->pivot.tag);
    }
    u->aug->write_cells(w);
    if (!u->is_leaf()) {
      write_node(w, u->left.get());
      write_node(w, u->right.get());
    }
  }

  Triple read_triple(ByteReader& r) const {
    Triple t;
    t.key = r.raw(params_.key_width);
    t.block = r.raw(params_.block_width);
    t.tag = r.raw(params_.tag_width);
    return t;
  }

  std::unique_ptr<Node> read_node(ByteReader& r) {
    auto node = std::make_unique<Node>();
    const std::uint8_t kind = r.u8();
    if (kind == 0) {
      const std::size_t count = r.u16();
      if (count == 0) fail(Errc::malformed_bytes, "empty leaf bucket");
      node->bucket.reserve(count);
      for (std::size_t i = 0; i < count; ++i) node->bucket.push_back(read_triple(r));
      node->aug = Iblt::read_cells(r, params_);
      node->size = count;
    } else if (kind == 1) {
      node->pivot = read_triple(r);
      node->aug = Iblt::read_cells(r, params_);
      node->left = read_node(r);
      node->right = read_node(r);
      node->size = node->left->size + node->right->size + 1;
    } else {
      fail(Errc::malformed_bytes, "unknown node kind");
    }
    return node;
  }

  Iblt verify_node(const Node* u, bool& ok) const {
    Iblt fresh(params_);
    if (u->is_leaf()) {
      for (const Triple& t : u->bucket) fresh.update(t);
    } else {
      fresh.combine(verify_node(u->left.get(), ok));
      fresh.combine(verify_node(u->right.get(), ok));
      fresh.update(u->pivot);
    }
    if (!u->aug.has_value() || *u->aug != fresh) ok = false;
    return fresh;
  }

  IbltParams params_;
  PublicParams pp_;
  PctTree<std::optional<Iblt>> tree_;
};

}  // namespace das
