#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "das/bytes.hpp"
#include "das/errors.hpp"
#include "das/iblt.hpp"
#include "das/iblt_tree.hpp"
#include "das/serial.hpp"
#include "das/store.hpp"
#include "das/tag_crypto.hpp"

namespace das {

inline constexpr std::uint16_t kClientFormatVersion = 1;

struct ProtocolConfig {
  std::uint32_t delta = 16;
  std::uint16_t q = 4;
  std::size_t beta = 64;
  std::uint16_t tau = 512;
  std::uint16_t key_width = 16;
  std::uint32_t block_width = 256;
  std::uint64_t seed = 0;
};

// Alice's whole state: her key set, one fixed-size sketch of everything she
// has stored, and her keys. The sketch never grows with n.
struct ClientState {
  std::set<Bytes> keys;
  Iblt sketch;
  SecretKey sk;
  PublicParams pp;
  std::uint32_t delta = 0;
  std::size_t beta = 0;

  ClientState(Iblt sketch_, SecretKey sk_, PublicParams pp_, std::uint32_t delta_,
              std::size_t beta_)
      : sketch(std::move(sketch_)), sk(std::move(sk_)), pp(std::move(pp_)), delta(delta_),
        beta(beta_) {}

  // "DASC" | version u16 | delta u32 | beta u32 | sketch blob. The key list
  // is serialized separately so the n-independent part can be measured.
  Bytes serialize_state() const {
    ByteWriter w;
    w.magic("DASC");
    w.u16(kClientFormatVersion);
    w.u32(delta);
    w.u32(std::uint32_t(beta));
    w.raw(sketch.serialize());
    return w.take();
  }

  // "DASL" | version u16 | kappa u16 | count u64 | keys
  Bytes serialize_keys() const {
    ByteWriter w;
    w.magic("DASL");
    w.u16(kClientFormatVersion);
    w.u16(sketch.params().key_width);
    w.u64(keys.size());
    for (const Bytes& k : keys) w.raw(k);
    return w.take();
  }

  static ClientState load(std::span<const std::uint8_t> state_raw,
                          std::span<const std::uint8_t> keys_raw, SecretKey sk, PublicParams pp,
                          const IbltParams& expected) {
    ByteReader r(state_raw);
    r.expect_magic("DASC");
    if (r.u16() != kClientFormatVersion) fail(Errc::version_mismatch, "client state version");
    const std::uint32_t delta = r.u32();
    const std::size_t beta = r.u32();
    Iblt sketch = Iblt::deserialize(state_raw.subspan(state_raw.size() - r.remaining()), expected);
    ClientState c(std::move(sketch), std::move(sk), std::move(pp), delta, beta);

    ByteReader kr(keys_raw);
    kr.expect_magic("DASL");
    if (kr.u16() != kClientFormatVersion) fail(Errc::version_mismatch, "key list version");
    const std::uint16_t kappa = kr.u16();
    if (kappa != expected.key_width) fail(Errc::params_mismatch, "key list width");
    const std::uint64_t count = kr.u64();
    for (std::uint64_t i = 0; i < count; ++i) c.keys.insert(kr.raw(kappa));
    kr.expect_done();
    return c;
  }
};

// Bob's state: the authoritative block store on disk, a tag index for the
// recovery-time purity test, and the sketch tree. The tag index mirrors the
// tree metadata, so record loss in the store never erases it.
struct ServerState {
  BlockStore store;
  std::map<Bytes, Bytes> tagset;
  IbltTree tree;
  PublicParams pp;
  std::size_t audits_run = 0;

  ServerState(BlockStore store_, IbltTree tree_, PublicParams pp_)
      : store(std::move(store_)), tree(std::move(tree_)), pp(std::move(pp_)) {
    tree.pct().for_each([&](const Triple& t) { tagset[t.key] = t.tag; });
  }
};

struct SetupResult {
  ClientState client;
  ServerState server;
  std::vector<Bytes> tags;  // in input key order
};

inline IbltParams protocol_iblt_params(const ProtocolConfig& cfg, const PublicParams& pp) {
  // One protocol salt drives both cell indexing and tree priorities; derive
  // it from the key-generation salt so a seed pins every artifact.
  Bytes salt(16);
  auto d = Sha256().feed(pp.salt).feed("iblt").digest();
  std::copy(d.begin(), d.begin() + 16, salt.begin());
  return IbltParams::sized_for(cfg.delta, cfg.q, cfg.key_width, cfg.block_width, pp.tag_width(),
                               std::move(salt));
}

inline SetupResult setup(const std::vector<Bytes>& keys, const std::vector<Bytes>& blocks,
                         const ProtocolConfig& cfg, const std::filesystem::path& store_dir) {
  if (keys.size() != blocks.size()) fail(Errc::size_mismatch, "key/block count mismatch");
  {
    std::set<Bytes> seen;
    for (const Bytes& k : keys) {
      if (k.size() != cfg.key_width) fail(Errc::width_mismatch, "key width");
      if (!seen.insert(k).second) fail(Errc::duplicate_key, "duplicate key in setup");
    }
    for (const Bytes& b : blocks)
      if (b.size() != cfg.block_width) fail(Errc::width_mismatch, "block width");
  }

  KeyPair kp = keygen(cfg.tau, cfg.seed);
  IbltParams params = protocol_iblt_params(cfg, kp.pub);

  std::vector<Triple> triples;
  triples.reserve(keys.size());
  std::vector<Bytes> tags;
  tags.reserve(keys.size());
  ClientState client(Iblt(params), kp.sec, kp.pub, cfg.delta, cfg.beta);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    Bytes tag = make_tag(keys[i], blocks[i], kp.sec, kp.pub);
    client.sketch.update(Triple{keys[i], blocks[i], tag});
    client.keys.insert(keys[i]);
    triples.push_back(Triple{keys[i], blocks[i], tag});
    tags.push_back(std::move(tag));
  }

  BlockStore store = BlockStore::create(
      store_dir, BlockStore::Widths{cfg.key_width, cfg.block_width, kp.pub.tag_width()});
  for (const Triple& t : triples) store.put(t.key, t.block, t.tag);
  IbltTree tree = IbltTree::init(std::move(triples), params, kp.pub, cfg.beta);
  ServerState server(std::move(store), std::move(tree), kp.pub);
  return SetupResult{std::move(client), std::move(server), std::move(tags)};
}

// ---------------------------------------------------------------------------
// server-side message handlers

inline void server_put(ServerState& s, const Triple& t) {
  if (s.store.contains(t.key) || s.tree.find(t.key) != nullptr)
    fail(Errc::duplicate_key, "server already holds this key");
  s.tree.insert(t);  // verifies the tag; aborts before any state change
  s.store.put(t.key, t.block, t.tag);
  s.tagset[t.key] = t.tag;
}

inline Triple server_remove(ServerState& s, const Bytes& key) {
  Triple removed = s.tree.erase(key);
  s.store.erase(key);
  s.tagset.erase(key);
  return removed;
}

struct DetectReport {
  std::vector<Bytes> corrupted;
  std::vector<Bytes> missing;
};

// Full scan: a stored record is corrupted when it is malformed or its tag
// does not verify; a key the metadata knows but the store lacks is missing.
inline DetectReport detect_corrupted(const ServerState& s) {
  DetectReport rep;
  for (const Bytes& key : s.store.keys()) {
    const auto rec = s.store.get(key);
    if (rec.status != BlockStore::RecStatus::ok || !verify_tag(key, rec.block, rec.tag, s.pp))
      rep.corrupted.push_back(key);
  }
  for (const auto& [key, _] : s.tagset)
    if (!s.store.contains(key)) rep.missing.push_back(key);
  return rep;
}

// The audit sketch T_K: everything the server still holds intact, minus the
// requested keys. Detection steers the descent; affected nodes are re-read
// from the live store and re-verified.
inline IbltTree::ConstructResult server_construct_kept(const ServerState& s,
                                                       std::vector<Bytes> excluded,
                                                       const DetectReport& det) {
  IbltTree::ConstructRequest req;
  req.excluded = std::move(excluded);
  req.invalid = det.corrupted;
  req.invalid.insert(req.invalid.end(), det.missing.begin(), det.missing.end());
  req.fetch = [&s](const Bytes& key) -> std::optional<Triple> {
    const auto rec = s.store.get(key);
    if (rec.status != BlockStore::RecStatus::ok) return std::nullopt;
    if (!verify_tag(key, rec.block, rec.tag, s.pp)) return std::nullopt;
    return Triple{key, rec.block, rec.tag};
  };
  return s.tree.construct(req);
}

enum class AuditStatus { success, reject, failure };

struct AuditOutcome {
  AuditStatus status = AuditStatus::failure;
  std::vector<Triple> recovered;
  std::size_t proof_bytes = 0;
  std::size_t tagset_misses = 0;  // candidate pure cells whose tag was unknown
};

// Peel oracle for server-side recovery: the public tag equation plus a
// lookup in the server's own tag set. A candidate whose tag is not on file
// is treated as a collision, not as pure.
inline PurityOracle tagset_oracle(const PublicParams& pp, const std::map<Bytes, Bytes>& tagset,
                                  std::size_t* misses) {
  return PurityOracle{OracleRole::server_public_tagset,
                      [&pp, &tagset, misses](const Bytes& k, const Bytes& v, const Bytes& t) {
                        if (!purity_public(k, v, t, pp)) return false;
                        auto it = tagset.find(k);
                        if (it == tagset.end() || it->second != t) {
                          if (misses != nullptr) ++*misses;
                          return false;
                        }
                        return true;
                      }};
}

inline AuditOutcome server_audit(ServerState& s, std::vector<Bytes> keys) {
  s.audits_run += 1;
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  const DetectReport det = detect_corrupted(s);
  auto kept = server_construct_kept(s, keys, det);
  Iblt all = s.tree.empty() ? Iblt(s.tree.params()) : s.tree.root_iblt();
  Iblt diff = Iblt::combined(std::move(all), kept.iblt);

  AuditOutcome out;
  out.proof_bytes = kept.iblt.serialize().size();
  PeelResult pr = peel(std::move(diff), tagset_oracle(s.pp, s.tagset, &out.tagset_misses));
  if (!pr.success) {
    out.status = AuditStatus::failure;
    return out;
  }
  for (Triple& t : pr.recovered)
    if (verify_tag(t.key, t.block, t.tag, s.pp)) out.recovered.push_back(std::move(t));
  out.status = AuditStatus::success;
  return out;
}

// Writes verified originals back into the store and tag index. All tags are
// checked before the first write, so a bad input leaves no trace.
inline void restore_triples(ServerState& s, const std::vector<Triple>& recovered) {
  for (const Triple& t : recovered)
    if (!verify_tag(t.key, t.block, t.tag, s.pp)) fail(Errc::bad_tag, "restore of unverified triple");
  for (const Triple& t : recovered) {
    s.store.put(t.key, t.block, t.tag);
    s.tagset[t.key] = t.tag;
    const Triple* held = s.tree.find(t.key);
    if (held == nullptr) {
      s.tree.insert(t);
    } else if (*held != t) {
      s.tree.erase(t.key);
      s.tree.insert(t);
    }
  }
}

// Serve a block: answer from the store when the record verifies, otherwise
// audit ourselves for that one key, repair, and answer from the recovery.
inline std::optional<Bytes> server_get(ServerState& s, const Bytes& key) {
  const auto rec = s.store.get(key);
  if (rec.status == BlockStore::RecStatus::ok && verify_tag(key, rec.block, rec.tag, s.pp))
    return rec.block;
  AuditOutcome audit = server_audit(s, {key});
  if (audit.status != AuditStatus::success) return std::nullopt;
  restore_triples(s, audit.recovered);
  for (const Triple& t : audit.recovered)
    if (t.key == key) return t.block;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// client-facing operations

inline void put(ClientState& c, ServerState& s, const Bytes& key, const Bytes& block) {
  if (key.size() != c.sketch.params().key_width || block.size() != c.sketch.params().block_width)
    fail(Errc::width_mismatch, "key or block width");
  if (c.keys.count(key) != 0) fail(Errc::duplicate_key, "client already owns this key");
  Triple t{key, block, make_tag(key, block, c.sk, c.pp)};
  server_put(s, t);  // server verifies and stores first; client commits after
  c.sketch.update(t);
  c.keys.insert(key);
}

inline std::optional<Bytes> get(ClientState& c, ServerState& s, const Bytes& key) {
  if (c.keys.count(key) == 0) fail(Errc::unknown_key, "client does not own this key");
  // honest-but-curious: the client takes the returned block as-is
  return server_get(s, key);
}

inline bool remove(ClientState& c, ServerState& s, const Bytes& key) {
  if (c.keys.count(key) == 0) fail(Errc::unknown_key, "client does not own this key");
  std::optional<Bytes> block = server_get(s, key);
  if (!block.has_value()) return false;  // failure; neither side changed
  server_remove(s, key);
  Triple t{key, *block, make_tag(key, *block, c.sk, c.pp)};
  c.sketch.update(t);  // self-cancelling: this deletes the pair
  c.keys.erase(key);
  return true;
}

inline Bytes server_audit_sketch(ServerState& s, std::vector<Bytes> excluded) {
  const DetectReport det = detect_corrupted(s);
  return server_construct_kept(s, std::move(excluded), det).iblt.serialize();
}

inline AuditOutcome client_audit(ClientState& c, ServerState& s, std::vector<Bytes> keys) {
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (const Bytes& k : keys)
    if (c.keys.count(k) == 0) fail(Errc::unknown_key, "audit of a key the client does not own");
  if (keys.size() > c.delta) fail(Errc::audit_too_large, "more than delta keys requested");

  const Bytes wire = server_audit_sketch(s, keys);
  Iblt kept = Iblt::deserialize(wire, c.sketch.params());

  AuditOutcome out;
  out.proof_bytes = wire.size();
  PeelResult pr = peel(Iblt::combined(c.sketch, kept), secret_oracle(c.sk, c.pp));
  if (!pr.success) {
    out.status = AuditStatus::reject;
    return out;
  }
  for (Triple& t : pr.recovered)
    if (c.keys.count(t.key) != 0) out.recovered.push_back(std::move(t));
  out.status = AuditStatus::success;
  return out;
}

struct ChallengeReport {
  AuditStatus outcome = AuditStatus::reject;
  std::vector<Triple> recovered;  // originals of every corrupted or missing block
  std::vector<Bytes> corrupted_keys;
  std::vector<Bytes> missing_keys;
  std::size_t proof_bytes = 0;
};

// Whole-database audit. The server builds T_kept over everything that still
// verifies; what survives the combine with the client sketch is exactly the
// damage, which the client peels back to originals.
inline ChallengeReport accountability_challenge(ClientState& c, ServerState& s) {
  const DetectReport det = detect_corrupted(s);
  auto kept = server_construct_kept(s, {}, det);
  const Bytes wire = kept.iblt.serialize();

  ChallengeReport rep;
  rep.corrupted_keys = det.corrupted;
  rep.missing_keys = det.missing;
  rep.proof_bytes = wire.size();

  Iblt kept_rx = Iblt::deserialize(wire, c.sketch.params());
  PeelResult pr = peel(Iblt::combined(c.sketch, kept_rx), secret_oracle(c.sk, c.pp));
  if (!pr.success) {
    rep.outcome = AuditStatus::reject;
    return rep;
  }
  for (Triple& t : pr.recovered)
    if (c.keys.count(t.key) != 0) rep.recovered.push_back(std::move(t));
  rep.outcome = AuditStatus::success;
  return rep;
}

}  // namespace das
