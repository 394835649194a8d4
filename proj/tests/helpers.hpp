#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "das/iblt.hpp"
#include "das/protocol.hpp"
#include "das/tag_crypto.hpp"

namespace dastest {

using das::Bytes;
using das::Triple;

// keygen is the slowest fixture step; share pairs across test cases.
inline const das::KeyPair& cached_keypair(std::uint16_t tau = 128, std::uint64_t seed = 7) {
  static std::map<std::pair<std::uint16_t, std::uint64_t>, das::KeyPair> cache;
  auto it = cache.find({tau, seed});
  if (it == cache.end()) it = cache.emplace(std::make_pair(tau, seed), das::keygen(tau, seed)).first;
  return it->second;
}

struct Corpus {
  das::IbltParams params;
  std::vector<Triple> triples;
};

// n distinct random keys with valid tags under the cached keypair.
inline Corpus make_corpus(std::size_t n, std::uint64_t seed, std::uint32_t delta, std::uint16_t q = 4,
                          std::uint16_t key_width = 8, std::uint32_t block_width = 16,
                          std::uint16_t tau = 128) {
  const auto& kp = cached_keypair(tau);
  std::mt19937_64 rng(seed);
  das::IbltParams params = das::IbltParams::sized_for(delta, q, key_width, block_width,
                                                      kp.pub.tag_width(),
                                                      das::random_bytes(rng, 16));
  Corpus c{params, {}};
  std::map<Bytes, bool> seen;
  while (c.triples.size() < n) {
    Bytes key = das::random_bytes(rng, key_width);
    if (seen.count(key) != 0) continue;
    seen[key] = true;
    Bytes block = das::random_bytes(rng, block_width);
    Bytes tag = das::make_tag(key, block, kp.sec, kp.pub);
    c.triples.push_back(Triple{key, block, tag});
  }
  return c;
}

// Purity oracle that runs the secret and public tests side by side and
// records any disagreement; used to assert their equivalence on every cell
// a peel actually visits.
inline das::PurityOracle dual_oracle(const das::KeyPair& kp, std::size_t* disagreements) {
  return das::PurityOracle{
      das::OracleRole::client_secret,
      [&kp, disagreements](const Bytes& k, const Bytes& v, const Bytes& t) {
        bool secret = das::purity_secret(k, v, t, kp.sec, kp.pub);
        bool pub = das::purity_public(k, v, t, kp.pub);
        if (secret != pub && disagreements != nullptr) ++*disagreements;
        return secret;
      }};
}

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& stem) {
    static std::atomic<unsigned> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("das_test_" + stem + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// Canonical digest of both protocol states; equality means byte-identical
// client sketch/keys, tree snapshot, store contents and tag index.
inline Bytes state_digest(const das::ClientState& c, const das::ServerState& s) {
  das::Sha256 h;
  h.feed(c.serialize_state());
  h.feed(c.serialize_keys());
  h.feed(s.tree.snapshot());
  for (const Bytes& key : s.store.keys()) {
    const auto rec = s.store.get(key);
    h.feed(key);
    h.feed_u32(std::uint32_t(rec.status));
    h.feed(rec.block);
    h.feed(rec.tag);
  }
  for (const auto& [k, t] : s.tagset) {
    h.feed(k);
    h.feed(t);
  }
  auto d = h.digest();
  return Bytes(d.begin(), d.end());
}

}  // namespace dastest
