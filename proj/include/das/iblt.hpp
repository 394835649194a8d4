#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "das/bytes.hpp"
#include "das/errors.hpp"
#include "das/hashing.hpp"
#include "das/serial.hpp"

namespace das {

inline constexpr std::uint16_t kIbltFormatVersion = 1;

// Table geometry plus the widths of everything stored in it. Two tables are
// combinable only when every field here matches, salt included.
struct IbltParams {
  std::uint32_t num_cells = 0;   // m, a positive multiple of num_hashes
  std::uint16_t num_hashes = 0;  // q
  std::uint16_t key_width = 0;   // bytes per key
  std::uint32_t block_width = 0; // bytes per block
  std::uint16_t tag_width = 0;   // bytes per tag (modulus width)
  Bytes salt;                    // seeds cell-index derivation

  friend bool operator==(const IbltParams&, const IbltParams&) = default;

  void validate() const {
    if (num_hashes < 2) fail(Errc::invalid_params, "need at least 2 hash functions");
    if (num_cells == 0 || num_cells % num_hashes != 0)
      fail(Errc::invalid_params, "cell count must be a positive multiple of the hash count");
    if (key_width == 0 || block_width == 0 || tag_width == 0)
      fail(Errc::invalid_params, "zero field width");
  }

  std::uint32_t subtable_cells() const { return num_cells / num_hashes; }
  std::size_t cell_bytes() const {
    return std::size_t(key_width) + block_width + tag_width;
  }

  // Smallest table with >= (q+1)*delta cells that still divides evenly into
  // q subtables.
  static IbltParams sized_for(std::uint32_t delta, std::uint16_t q, std::uint16_t key_width,
                              std::uint32_t block_width, std::uint16_t tag_width, Bytes salt) {
    if (q < 2) fail(Errc::invalid_params, "need at least 2 hash functions");
    std::uint64_t want = std::uint64_t(q + 1) * std::max<std::uint32_t>(delta, 1);
    auto m = std::uint32_t(q * ((want + q - 1) / q));
    IbltParams p{m, q, key_width, block_width, tag_width, std::move(salt)};
    p.validate();
    return p;
  }
};

struct Triple {
  Bytes key;
  Bytes block;
  Bytes tag;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct IbltCell {
  Bytes key_sum;
  Bytes value_sum;
  Bytes tag_sum;

  friend bool operator==(const IbltCell&, const IbltCell&) = default;

  // The all-zero cell is the empty cell.
  bool is_empty() const { return all_zero(key_sum) && all_zero(value_sum) && all_zero(tag_sum); }
};

// One index per subtable: index i lies in [i*m/q, (i+1)*m/q), which
// guarantees the q cells of a key are distinct.
inline std::vector<std::uint32_t> cell_indices(const Bytes& key, const IbltParams& p) {
  if (key.size() != p.key_width) fail(Errc::width_mismatch, "key width");
  const std::uint32_t sub = p.subtable_cells();
  std::vector<std::uint32_t> out(p.num_hashes);
  for (std::uint32_t i = 0; i < p.num_hashes; ++i)
    out[i] = i * sub + std::uint32_t(hash64(p.salt, "cell", i, key) % sub);
  return out;
}

class Iblt {
 public:
  explicit Iblt(IbltParams params) : params_(std::move(params)) {
    params_.validate();
    cells_.assign(params_.num_cells,
                  IbltCell{Bytes(params_.key_width), Bytes(params_.block_width),
                           Bytes(params_.tag_width)});
  }

  const IbltParams& params() const { return params_; }
  const std::vector<IbltCell>& cells() const { return cells_; }

  friend bool operator==(const Iblt&, const Iblt&) = default;

  // XOR is self-cancelling, so insert and delete are the same operation.
  void update(const Triple& t) {
    if (t.key.size() != params_.key_width || t.block.size() != params_.block_width ||
        t.tag.size() != params_.tag_width)
      fail(Errc::width_mismatch, "triple widths do not match table parameters");
    if (all_zero(t.key) && all_zero(t.block) && all_zero(t.tag))
      fail(Errc::zero_triple, "all-zero triple is indistinguishable from absence");
    for (auto i : cell_indices(t.key, params_)) {
      xor_into(cells_[i].key_sum, t.key);
      xor_into(cells_[i].value_sum, t.block);
      xor_into(cells_[i].tag_sum, t.tag);
    }
  }

  // Cell-wise XOR; the result represents the symmetric difference of the two
  // represented sets.
  void combine(const Iblt& other) {
    if (params_ != other.params_) fail(Errc::params_mismatch, "combining incompatible tables");
    for (std::uint32_t i = 0; i < params_.num_cells; ++i) {
      xor_into(cells_[i].key_sum, other.cells_[i].key_sum);
      xor_into(cells_[i].value_sum, other.cells_[i].value_sum);
      xor_into(cells_[i].tag_sum, other.cells_[i].tag_sum);
    }
  }

  static Iblt combined(Iblt a, const Iblt& b) {
    a.combine(b);
    return a;
  }

  bool is_empty() const {
    return std::all_of(cells_.begin(), cells_.end(), [](const IbltCell& c) { return c.is_empty(); });
  }

  // Layout: "DASI" | version u16 | m u32 | q u16 | kappa u16 | B u32 | w u16 |
  // salt_len u16 | salt | m cells, each keySum||valueSum||tagSum, no padding.
  Bytes serialize() const {
    ByteWriter w;
    w.magic("DASI");
    w.u16(kIbltFormatVersion);
    write_params(w, params_);
    for (const auto& c : cells_) {
      w.raw(c.key_sum);
      w.raw(c.value_sum);
      w.raw(c.tag_sum);
    }
    return w.take();
  }

  static Iblt deserialize(std::span<const std::uint8_t> raw, const IbltParams& expected) {
    ByteReader r(raw);
    r.expect_magic("DASI");
    if (r.u16() != kIbltFormatVersion) fail(Errc::version_mismatch, "iblt format version");
    IbltParams p = read_params(r);
    if (p != expected) fail(Errc::params_mismatch, "serialized table has different parameters");
    Iblt out = read_cells(r, p);
    r.expect_done();
    return out;
  }

  // Shared by deserialize and the tree-snapshot reader, which stores bare
  // cell arrays.
  static Iblt read_cells(ByteReader& r, const IbltParams& p) {
    Iblt out{p};
    for (std::uint32_t i = 0; i < p.num_cells; ++i) {
      out.cells_[i].key_sum = r.raw(p.key_width);
      out.cells_[i].value_sum = r.raw(p.block_width);
      out.cells_[i].tag_sum = r.raw(p.tag_width);
    }
    return out;
  }

  void write_cells(ByteWriter& w) const {
    for (const auto& c : cells_) {
      w.raw(c.key_sum);
      w.raw(c.value_sum);
      w.raw(c.tag_sum);
    }
  }

  static void write_params(ByteWriter& w, const IbltParams& p) {
    w.u32(p.num_cells);
    w.u16(p.num_hashes);
    w.u16(p.key_width);
    w.u32(p.block_width);
    w.u16(p.tag_width);
    w.sized16(p.salt);
  }

  static IbltParams read_params(ByteReader& r) {
    IbltParams p;
    p.num_cells = r.u32();
    p.num_hashes = r.u16();
    p.key_width = r.u16();
    p.block_width = r.u32();
    p.tag_width = r.u16();
    p.salt = r.sized16();
    p.validate();
    return p;
  }

 private:
  IbltParams params_;
  std::vector<IbltCell> cells_;
};

enum class OracleRole { client_secret, server_public, server_public_tagset };

// Purity predicate over a cell's three sums. Deterministic for fixed inputs;
// never called on empty cells.
struct PurityOracle {
  OracleRole role = OracleRole::server_public;
  std::function<bool(const Bytes& key_sum, const Bytes& value_sum, const Bytes& tag_sum)> is_pure;
};

struct PeelResult {
  bool success = false;
  std::vector<Triple> recovered;
  Iblt residual;
};

// Worklist-driven peel: after a deletion only the q touched cells are
// re-examined. Emits whatever the oracle declares pure; callers filter.
// Failure (nonempty residual) is a normal return.
inline PeelResult peel(Iblt table, const PurityOracle& oracle) {
  const IbltParams& p = table.params();
  std::vector<std::uint32_t> work(p.num_cells);
  std::iota(work.begin(), work.end(), 0);
  std::vector<char> queued(p.num_cells, 1);
  std::vector<Triple> out;

  while (!work.empty()) {
    std::uint32_t i = work.back();
    work.pop_back();
    queued[i] = 0;
    const IbltCell& cell = table.cells()[i];
    if (cell.is_empty()) continue;
    if (!oracle.is_pure(cell.key_sum, cell.value_sum, cell.tag_sum)) continue;

    Triple t{cell.key_sum, cell.value_sum, cell.tag_sum};
    table.update(t);  // deletes the pair just emitted
    for (auto j : cell_indices(t.key, p)) {
      if (!queued[j]) {
        queued[j] = 1;
        work.push_back(j);
      }
    }
    out.push_back(std::move(t));
  }

  bool ok = table.is_empty();
  return PeelResult{ok, std::move(out), std::move(table)};
}

}  // namespace das
