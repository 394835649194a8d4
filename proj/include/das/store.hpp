#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "das/bytes.hpp"
#include "das/errors.hpp"

namespace das {

// One fault-injection action. Selectors pick target records, modes say what
// happens to them. Only block bytes are ever touched by flip/zero; drop and
// truncate act on the whole record file.
struct FaultAction {
  enum class Selector { key, index, random };
  enum class Mode { flip, zero, drop, truncate };

  Selector selector = Selector::key;
  Bytes key;                 // selector == key
  std::size_t index = 0;     // selector == index (rank in sorted key order)
  std::size_t random_n = 0;  // selector == random (n distinct keys)
  Mode mode = Mode::flip;
  std::uint32_t flip_bits = 1;

  std::string mode_name() const {
    switch (mode) {
      case Mode::flip: return "flip";
      case Mode::zero: return "zero";
      case Mode::drop: return "drop";
      case Mode::truncate: return "truncate";
    }
    return "?";
  }
};

// Text format:
//   seed=<u64>
//   key=<hex|index:<i>|random:<n>> mode=<flip:<c>|zero|drop|truncate>
struct FaultPlan {
  std::uint64_t seed = 0;
  std::vector<FaultAction> actions;

  static FaultPlan parse(const std::string& text) {
    FaultPlan plan;
    std::istringstream in(text);
    std::string line;
    bool have_seed = false;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty()) continue;
      if (!have_seed) {
        if (line.rfind("seed=", 0) != 0) fail(Errc::malformed_bytes, "fault plan must start with seed=");
        plan.seed = std::stoull(line.substr(5));
        have_seed = true;
        continue;
      }
      auto sp = line.find(' ');
      if (sp == std::string::npos || line.rfind("key=", 0) != 0 ||
          line.compare(sp + 1, 5, "mode=") != 0)
        fail(Errc::malformed_bytes, "bad fault plan line: " + line);
      std::string sel = line.substr(4, sp - 4);
      std::string mode = line.substr(sp + 6);

      FaultAction a;
      if (sel.rfind("index:", 0) == 0) {
        a.selector = FaultAction::Selector::index;
        a.index = std::stoull(sel.substr(6));
      } else if (sel.rfind("random:", 0) == 0) {
        a.selector = FaultAction::Selector::random;
        a.random_n = std::stoull(sel.substr(7));
      } else {
        a.selector = FaultAction::Selector::key;
        a.key = from_hex(sel);
      }
      if (mode.rfind("flip:", 0) == 0) {
        a.mode = FaultAction::Mode::flip;
        a.flip_bits = std::uint32_t(std::stoul(mode.substr(5)));
      } else if (mode == "zero") {
        a.mode = FaultAction::Mode::zero;
      } else if (mode == "drop") {
        a.mode = FaultAction::Mode::drop;
      } else if (mode == "truncate") {
        a.mode = FaultAction::Mode::truncate;
      } else {
        fail(Errc::malformed_bytes, "bad fault mode: " + mode);
      }
      plan.actions.push_back(std::move(a));
    }
    if (!have_seed) fail(Errc::malformed_bytes, "fault plan missing seed line");
    return plan;
  }

  std::string serialize() const {
    std::ostringstream out;
    out << "seed=" << seed << "\n";
    for (const auto& a : actions) {
      out << "key=";
      switch (a.selector) {
        case FaultAction::Selector::key: out << to_hex(a.key); break;
        case FaultAction::Selector::index: out << "index:" << a.index; break;
        case FaultAction::Selector::random: out << "random:" << a.random_n; break;
      }
      out << " mode=";
      if (a.mode == FaultAction::Mode::flip)
        out << "flip:" << a.flip_bits;
      else
        out << a.mode_name();
      out << "\n";
    }
    return out.str();
  }
};

// One file per key (lowercase hex name, ".rec" suffix), record = block||tag
// with widths from the manifest. Mutations write a temp file and rename, so
// readers only ever see whole records. A full in-memory mirror backs reads;
// fault injection goes through the same object and keeps the mirror honest.
class BlockStore {
 public:
  struct Widths {
    std::uint16_t key = 0;
    std::uint32_t block = 0;
    std::uint16_t tag = 0;
  };

  enum class RecStatus { absent, ok, malformed };

  struct Record {
    RecStatus status = RecStatus::absent;
    Bytes block;
    Bytes tag;
  };

  struct InjectEntry {
    Bytes key;
    std::string mode;
  };

  BlockStore(BlockStore&&) = default;
  BlockStore& operator=(BlockStore&&) = default;

  static BlockStore create(const std::filesystem::path& dir, Widths w) {
    if (w.key == 0 || w.block == 0 || w.tag == 0) fail(Errc::invalid_params, "zero record width");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(Errc::io_error, "cannot create store directory: " + dir.string());
    if (std::filesystem::exists(dir / "manifest.das"))
      fail(Errc::io_error, "store already exists at " + dir.string());
    BlockStore s(dir, w);
    s.write_manifest();
    return s;
  }

  static BlockStore open(const std::filesystem::path& dir) {
    Widths w;
    std::size_t manifest_count = 0;
    read_manifest(dir / "manifest.das", w, manifest_count);
    BlockStore s(dir, w);
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (entry.path().extension() == ".tmp") {
        // leftover from an interrupted write; the rename never happened
        std::filesystem::remove(entry.path());
        continue;
      }
      if (entry.path().extension() != ".rec") continue;
      Bytes key = from_hex(name.substr(0, name.size() - 4));
      if (key.size() != w.key) fail(Errc::io_error, "record name width mismatch: " + name);
      s.cache_[key] = s.read_record_file(entry.path());
    }
    return s;
  }

  const Widths& widths() const { return w_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::size_t count() const { return cache_.size(); }

  bool contains(const Bytes& key) const { return cache_.find(key) != cache_.end(); }

  std::vector<Bytes> keys() const {
    std::vector<Bytes> out;
    out.reserve(cache_.size());
    for (const auto& [k, _] : cache_) out.push_back(k);
    return out;
  }

  Record get(const Bytes& key) const {
    auto it = cache_.find(key);
    if (it == cache_.end()) return Record{};
    return it->second;
  }

  void put(const Bytes& key, const Bytes& block, const Bytes& tag) {
    if (key.size() != w_.key || block.size() != w_.block || tag.size() != w_.tag)
      fail(Errc::width_mismatch, "record widths do not match manifest");
    Bytes raw;
    raw.reserve(block.size() + tag.size());
    raw.insert(raw.end(), block.begin(), block.end());
    raw.insert(raw.end(), tag.begin(), tag.end());
    write_file_atomic(record_path(key), raw);
    cache_[key] = Record{RecStatus::ok, block, tag};
    write_manifest();
  }

  bool erase(const Bytes& key) {
    auto it = cache_.find(key);
    if (it == cache_.end()) return false;
    std::filesystem::remove(record_path(key));
    cache_.erase(it);
    write_manifest();
    return true;
  }

  // Applies the plan once. Touches record files only; the manifest and any
  // tree snapshot in the directory stay as they are.
  std::vector<InjectEntry> inject(const FaultPlan& plan) {
    std::mt19937_64 rng(plan.seed);
    std::vector<InjectEntry> report;
    for (const auto& a : plan.actions) {
      std::vector<Bytes> targets;
      switch (a.selector) {
        case FaultAction::Selector::key:
          if (contains(a.key)) targets.push_back(a.key);
          break;
        case FaultAction::Selector::index: {
          auto ks = keys();
          if (a.index < ks.size()) targets.push_back(ks[a.index]);
          break;
        }
        case FaultAction::Selector::random: {
          auto ks = keys();
          for (std::size_t want = std::min(a.random_n, ks.size()); want > 0; --want) {
            std::size_t pick = std::size_t(rng() % ks.size());
            targets.push_back(ks[pick]);
            ks.erase(ks.begin() + std::ptrdiff_t(pick));
          }
          break;
        }
      }
      for (const Bytes& key : targets) {
        apply_fault(key, a, rng);
        report.push_back({key, a.mode_name()});
      }
    }
    return report;
  }

 private:
  BlockStore(std::filesystem::path dir, Widths w) : dir_(std::move(dir)), w_(w) {}

  std::filesystem::path record_path(const Bytes& key) const { return dir_ / (to_hex(key) + ".rec"); }

  Record read_record_file(const std::filesystem::path& p) const {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot read " + p.string());
    Bytes raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() != std::size_t(w_.block) + w_.tag) return Record{RecStatus::malformed, {}, {}};
    Record r;
    r.status = RecStatus::ok;
    r.block.assign(raw.begin(), raw.begin() + w_.block);
    r.tag.assign(raw.begin() + w_.block, raw.end());
    return r;
  }

  void write_file_atomic(const std::filesystem::path& p, const Bytes& raw) const {
    auto tmp = p;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) fail(Errc::io_error, "cannot write " + tmp.string());
      out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
      if (!out) fail(Errc::io_error, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
  }

  void write_manifest() const {
    std::ostringstream out;
    out << "version=1\n"
        << "kappa=" << w_.key << "\n"
        << "block=" << w_.block << "\n"
        << "tagw=" << w_.tag << "\n"
        << "count=" << cache_.size() << "\n";
    const std::string text = out.str();
    Bytes raw(text.begin(), text.end());
    write_file_atomic(dir_ / "manifest.das", raw);
  }

  static void read_manifest(const std::filesystem::path& p, Widths& w, std::size_t& count) {
    std::ifstream in(p);
    if (!in) fail(Errc::io_error, "cannot open manifest " + p.string());
    std::string line;
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (kv["version"] != "1") fail(Errc::version_mismatch, "manifest version");
    w.key = std::uint16_t(std::stoul(kv.at("kappa")));
    w.block = std::uint32_t(std::stoul(kv.at("block")));
    w.tag = std::uint16_t(std::stoul(kv.at("tagw")));
    count = std::stoull(kv.at("count"));
  }

  void apply_fault(const Bytes& key, const FaultAction& a, std::mt19937_64& rng) {
    auto it = cache_.find(key);
    if (it == cache_.end()) return;
    Record& rec = it->second;
    switch (a.mode) {
      case FaultAction::Mode::flip: {
        if (rec.status != RecStatus::ok) return;
        const std::size_t nbits = std::size_t(w_.block) * 8;
        std::vector<std::size_t> picked;
        for (std::size_t want = std::min<std::size_t>(a.flip_bits, nbits); picked.size() < want;) {
          std::size_t bit = std::size_t(rng() % nbits);
          if (std::find(picked.begin(), picked.end(), bit) == picked.end()) picked.push_back(bit);
        }
        for (auto bit : picked) rec.block[bit / 8] ^= std::uint8_t(1u << (bit % 8));
        rewrite(key, rec);
        break;
      }
      case FaultAction::Mode::zero:
        if (rec.status != RecStatus::ok) return;
        std::fill(rec.block.begin(), rec.block.end(), 0);
        rewrite(key, rec);
        break;
      case FaultAction::Mode::drop:
        std::filesystem::remove(record_path(key));
        cache_.erase(it);
        break;
      case FaultAction::Mode::truncate: {
        Bytes raw;
        raw.insert(raw.end(), rec.block.begin(), rec.block.end());
        raw.insert(raw.end(), rec.tag.begin(), rec.tag.end());
        raw.resize(raw.size() / 2);
        write_file_atomic(record_path(key), raw);
        rec = Record{RecStatus::malformed, {}, {}};
        break;
      }
    }
  }

  void rewrite(const Bytes& key, const Record& rec) {
    Bytes raw;
    raw.reserve(rec.block.size() + rec.tag.size());
    raw.insert(raw.end(), rec.block.begin(), rec.block.end());
    raw.insert(raw.end(), rec.tag.begin(), rec.tag.end());
    write_file_atomic(record_path(key), raw);
  }

  std::filesystem::path dir_;
  Widths w_;
  std::map<Bytes, Record> cache_;
};

}  // namespace das
