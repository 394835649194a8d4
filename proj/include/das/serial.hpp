#pragma once

#include <cstdint>
#include <cstring>
#include <span>

#include "das/bytes.hpp"
#include "das/errors.hpp"

namespace das {

// Little-endian primitive writer for the on-disk formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void raw(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  void raw(const Bytes& data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  void magic(const char (&m)[5]) { buf_.insert(buf_.end(), m, m + 4); }
  // u16 length prefix + bytes; used for salts
  void sized16(const Bytes& data) {
    if (data.size() > 0xffff) fail(Errc::invalid_params, "field too long for u16 prefix");
    u16(std::uint16_t(data.size()));
    raw(data);
  }
  // u32 length prefix + bytes; used for big integers
  void sized32(const Bytes& data) {
    u32(std::uint32_t(data.size()));
    raw(data);
  }

  std::size_t size() const { return buf_.size(); }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto p = take(2);
    return std::uint16_t(p[0] | p[1] << 8);
  }
  std::uint32_t u32() {
    auto p = take(4);
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
  }
  std::uint64_t u64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return lo | hi << 32;
  }
  Bytes raw(std::size_t n) {
    auto p = take(n);
    return Bytes(p.begin(), p.end());
  }
  void expect_magic(const char (&m)[5]) {
    auto p = take(4);
    if (std::memcmp(p.data(), m, 4) != 0) fail(Errc::malformed_bytes, "bad magic");
  }
  Bytes sized16() { return raw(u16()); }
  Bytes sized32() { return raw(u32()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return remaining() == 0; }
  void expect_done() const {
    if (!done()) fail(Errc::malformed_bytes, "trailing bytes");
  }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (remaining() < n) fail(Errc::malformed_bytes, "truncated input");
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace das
