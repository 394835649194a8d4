#include <algorithm>
#include <map>
#include <optional>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "das/iblt_tree.hpp"
#include "helpers.hpp"

using das::Bytes;
using das::Iblt;
using das::IbltTree;
using das::Triple;

namespace {

IbltTree tree_of(const dastest::Corpus& c, std::size_t beta) {
  return IbltTree::init(c.triples, c.params, dastest::cached_keypair().pub, beta);
}

Iblt direct_iblt(const std::vector<Triple>& ts, const das::IbltParams& p) {
  Iblt out(p);
  for (const Triple& t : ts) out.update(t);
  return out;
}

}  // namespace

TEST_CASE("init: empty set") {
  auto corpus = dastest::make_corpus(0, 1, 8);
  IbltTree t = tree_of(corpus, 8);
  REQUIRE(t.empty());
  REQUIRE(t.size() == 0);
  CHECK_THROWS_AS(t.root_iblt(), das::Error);
  REQUIRE(t.check_consistency());
  REQUIRE(t.construct({}).iblt.is_empty());
}

TEST_CASE("init: one leaf peels back to the whole set") {
  const auto& kp = dastest::cached_keypair();
  auto corpus = dastest::make_corpus(8, 2, 16);  // beta = 8 <= delta = 16
  IbltTree t = tree_of(corpus, 8);
  REQUIRE(t.node_count() == 1);
  auto pr = das::peel(t.root_iblt(), das::public_oracle(kp.pub));
  REQUIRE(pr.success);
  auto sort_key = [](const Triple& a, const Triple& b) { return a.key < b.key; };
  std::sort(pr.recovered.begin(), pr.recovered.end(), sort_key);
  auto want = corpus.triples;
  std::sort(want.begin(), want.end(), sort_key);
  REQUIRE(pr.recovered == want);
}

TEST_CASE("init: every node sketch equals its from-scratch rebuild") {
  auto corpus = dastest::make_corpus(500, 3, 16);
  IbltTree t = tree_of(corpus, 32);
  REQUIRE(t.check_consistency());
  REQUIRE(t.root_iblt() == direct_iblt(corpus.triples, corpus.params));
}

TEST_CASE("insert updates the root by exactly one triple contribution") {
  auto corpus = dastest::make_corpus(120, 4, 16);
  std::vector<Triple> base(corpus.triples.begin(), corpus.triples.end() - 1);
  const Triple extra = corpus.triples.back();

  auto sub = corpus;
  sub.triples = base;
  IbltTree t = tree_of(sub, 16);

  Iblt before = t.root_iblt();
  t.insert(extra);
  Iblt after = t.root_iblt();
  before.update(extra);
  REQUIRE(before == after);
  REQUIRE(t.check_consistency());
}

TEST_CASE("insert into empty tree; duplicate and bad tags rejected") {
  const auto& kp = dastest::cached_keypair();
  auto corpus = dastest::make_corpus(2, 5, 8);
  IbltTree t = IbltTree::init({}, corpus.params, kp.pub, 8);

  t.insert(corpus.triples[0]);
  REQUIRE(t.size() == 1);
  REQUIRE(t.root_iblt() == direct_iblt({corpus.triples[0]}, corpus.params));

  CHECK_THROWS_AS(t.insert(corpus.triples[0]), das::Error);

  Triple bad = corpus.triples[1];
  bad.tag[0] ^= 1;
  try {
    t.insert(bad);
    FAIL("expected bad-tag");
  } catch (const das::Error& e) {
    CHECK(e.code() == das::Errc::bad_tag);
  }
  REQUIRE(t.size() == 1);
  REQUIRE(t.check_consistency());
}

TEST_CASE("random inserts keep the whole tree consistent") {
  auto corpus = dastest::make_corpus(400, 6, 16);
  auto sub = corpus;
  sub.triples.clear();
  IbltTree t = tree_of(sub, 16);
  for (std::size_t i = 0; i < corpus.triples.size(); ++i) {
    t.insert(corpus.triples[i]);
    if (i % 25 == 24) REQUIRE(t.check_consistency());
  }
  REQUIRE(t.size() == corpus.triples.size());
  REQUIRE(t.check_consistency());
}

TEST_CASE("insert then erase restores the exact snapshot") {
  auto corpus = dastest::make_corpus(150, 7, 16);
  std::vector<Triple> base(corpus.triples.begin(), corpus.triples.end() - 1);
  const Triple extra = corpus.triples.back();

  auto sub = corpus;
  sub.triples = base;
  IbltTree t = tree_of(sub, 8);
  Bytes before = t.snapshot();
  t.insert(extra);
  Triple removed = t.erase(extra.key);
  REQUIRE(removed == extra);
  REQUIRE(t.snapshot() == before);
}

TEST_CASE("erase of a pivot rebuilds consistently; unknown key refused") {
  auto corpus = dastest::make_corpus(200, 8, 16);
  IbltTree t = tree_of(corpus, 8);
  REQUIRE_FALSE(t.pct().root()->is_leaf());
  Bytes pivot_key = t.pct().root()->pivot.key;
  t.erase(pivot_key);
  REQUIRE(t.check_consistency());
  CHECK_THROWS_AS(t.erase(pivot_key), das::Error);
}

TEST_CASE("mixed workload stays consistent at checkpoints") {
  auto corpus = dastest::make_corpus(600, 9, 16);
  std::vector<Triple> pool = corpus.triples;
  auto sub = corpus;
  sub.triples.assign(pool.begin(), pool.begin() + 300);
  IbltTree t = tree_of(sub, 16);

  std::mt19937_64 rng(10);
  std::vector<Triple> in(pool.begin(), pool.begin() + 300);
  std::vector<Triple> out(pool.begin() + 300, pool.end());
  for (int step = 0; step < 1000; ++step) {
    bool do_insert = out.empty() ? false : (in.empty() ? true : rng() % 2 == 0);
    if (do_insert) {
      std::size_t pick = rng() % out.size();
      t.insert(out[pick]);
      in.push_back(out[pick]);
      out.erase(out.begin() + std::ptrdiff_t(pick));
    } else {
      std::size_t pick = rng() % in.size();
      Triple removed = t.erase(in[pick].key);
      REQUIRE(removed == in[pick]);
      out.push_back(in[pick]);
      in.erase(in.begin() + std::ptrdiff_t(pick));
    }
    if (step % 50 == 49) REQUIRE(t.check_consistency());
  }
  REQUIRE(t.check_consistency());
  REQUIRE(t.root_iblt() == direct_iblt(in, corpus.params));
}

TEST_CASE("construct with nothing excluded returns the root sketch") {
  auto corpus = dastest::make_corpus(300, 11, 16);
  IbltTree t = tree_of(corpus, 16);
  auto res = t.construct({});
  REQUIRE(res.iblt == t.root_iblt());
  REQUIRE(res.leaf_rebuilds == 0);
  REQUIRE(res.skipped == 0);
}

TEST_CASE("construct excluding one key differs from the root by that triple") {
  const auto& kp = dastest::cached_keypair();
  auto corpus = dastest::make_corpus(300, 12, 16);
  IbltTree t = tree_of(corpus, 16);
  const Triple& victim = corpus.triples[123];

  IbltTree::ConstructRequest req;
  req.excluded = {victim.key};
  auto res = t.construct(req);
  REQUIRE(res.leaf_rebuilds >= 1);

  auto pr = das::peel(Iblt::combined(t.root_iblt(), res.iblt), das::public_oracle(kp.pub));
  REQUIRE(pr.success);
  REQUIRE(pr.recovered.size() == 1);
  REQUIRE(pr.recovered[0] == victim);
}

TEST_CASE("construct excluding delta keys equals the independent reference") {
  auto corpus = dastest::make_corpus(400, 13, 16);
  IbltTree t = tree_of(corpus, 16);
  std::mt19937_64 rng(14);

  IbltTree::ConstructRequest req;
  std::vector<Triple> kept = corpus.triples;
  for (int i = 0; i < 16; ++i) {
    std::size_t pick = rng() % kept.size();
    req.excluded.push_back(kept[pick].key);
    kept.erase(kept.begin() + std::ptrdiff_t(pick));
  }
  auto res = t.construct(req);
  REQUIRE(Iblt::combined(res.iblt, direct_iblt(kept, corpus.params)).is_empty());
}

TEST_CASE("construct consults the live source for affected nodes") {
  auto corpus = dastest::make_corpus(200, 15, 16);
  IbltTree t = tree_of(corpus, 8);

  // emulate a store where one block is corrupted and one record lost
  std::map<Bytes, Triple> live;
  for (const Triple& tr : corpus.triples) live[tr.key] = tr;
  const Bytes corrupted = corpus.triples[17].key;
  const Bytes missing = corpus.triples[90].key;
  live.erase(missing);

  IbltTree::ConstructRequest req;
  req.invalid = {corrupted, missing};
  req.fetch = [&](const Bytes& key) -> std::optional<Triple> {
    auto it = live.find(key);
    if (it == live.end() || it->first == corrupted) return std::nullopt;
    return it->second;
  };
  auto res = t.construct(req);
  REQUIRE(res.skipped == 2);

  std::vector<Triple> kept;
  for (const Triple& tr : corpus.triples)
    if (tr.key != corrupted && tr.key != missing) kept.push_back(tr);
  REQUIRE(Iblt::combined(res.iblt, direct_iblt(kept, corpus.params)).is_empty());
}

TEST_CASE("snapshot round trips and is order independent") {
  auto corpus = dastest::make_corpus(250, 16, 16);
  IbltTree a = tree_of(corpus, 8);

  Bytes snap = a.snapshot();
  IbltTree b = IbltTree::restore(snap, dastest::cached_keypair().pub);
  REQUIRE(b.snapshot() == snap);
  REQUIRE(b.size() == a.size());
  REQUIRE(b.check_consistency());
  REQUIRE(b.root_iblt() == a.root_iblt());

  // different ingestion order, identical bytes
  auto shuffled = corpus;
  std::mt19937_64 rng(17);
  std::shuffle(shuffled.triples.begin(), shuffled.triples.end(), rng);
  IbltTree c = IbltTree::init({}, corpus.params, dastest::cached_keypair().pub, 8);
  for (const Triple& tr : shuffled.triples) c.insert(tr);
  REQUIRE(c.snapshot() == snap);

  SECTION("corrupting one sketch byte is caught by the invariant walk, not restore") {
    Bytes bad = snap;
    bad[bad.size() - 3] ^= 0x40;  // inside the last node's cell array
    IbltTree d = IbltTree::restore(bad, dastest::cached_keypair().pub);
    REQUIRE_FALSE(d.check_consistency());
  }
  SECTION("truncation and version skew are structural errors") {
    Bytes cut(snap.begin(), snap.end() - 1);
    CHECK_THROWS_AS(IbltTree::restore(cut, dastest::cached_keypair().pub), das::Error);
    Bytes skew = snap;
    skew[4] = 9;  // version field
    try {
      IbltTree::restore(skew, dastest::cached_keypair().pub);
      FAIL("expected version mismatch");
    } catch (const das::Error& e) {
      CHECK(e.code() == das::Errc::version_mismatch);
    }
  }
}

TEST_CASE("node count and sketch byte bounds") {
  const std::size_t n = 10000;
  auto corpus = dastest::make_corpus(n, 18, 16);
  const std::size_t beta = 64;
  IbltTree t = tree_of(corpus, beta);
  const std::size_t bound = 4 * ((n + beta - 1) / beta) + 1;
  REQUIRE(t.node_count() <= bound);
  REQUIRE(t.sketch_bytes() <= bound * corpus.params.num_cells * corpus.params.cell_bytes());
}
