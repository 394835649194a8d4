#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <span>

#include "das/bytes.hpp"
#include "das/errors.hpp"

namespace das {

// Thin incremental SHA-256. All deterministic derivations in the library
// (cell indices, tree priorities, hash-to-group expansion) go through this so
// that serialized artifacts are bit-identical across platforms.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      fail(Errc::io_error, "sha256 init");
  }
  ~Sha256() {
    if (ctx_ != nullptr) EVP_MD_CTX_free(ctx_);
  }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& feed(std::span<const std::uint8_t> data) {
    EVP_DigestUpdate(ctx_, data.data(), data.size());
    return *this;
  }
  Sha256& feed(const Bytes& data) {
    EVP_DigestUpdate(ctx_, data.data(), data.size());
    return *this;
  }
  Sha256& feed(const char* tag) {
    EVP_DigestUpdate(ctx_, tag, std::strlen(tag));
    return *this;
  }
  Sha256& feed_u32(std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = std::uint8_t(v >> (8 * i));
    EVP_DigestUpdate(ctx_, b, 4);
    return *this;
  }

  std::array<std::uint8_t, 32> digest() {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, out.data(), &len) != 1 || len != 32)
      fail(Errc::io_error, "sha256 final");
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

// First eight digest bytes of SHA-256(salt | domain | counter | data),
// interpreted big-endian.
inline std::uint64_t hash64(const Bytes& salt, const char* domain, std::uint32_t counter,
                            std::span<const std::uint8_t> data) {
  auto d = Sha256().feed(salt).feed(domain).feed_u32(counter).feed(data).digest();
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | d[i];
  return v;
}

inline std::uint64_t hash64(const Bytes& salt, const char* domain, std::uint32_t counter,
                            const Bytes& data) {
  return hash64(salt, domain, counter, std::span<const std::uint8_t>(data.data(), data.size()));
}

}  // namespace das
