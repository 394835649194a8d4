#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <span>
#include <utility>

#include "das/bytes.hpp"
#include "das/errors.hpp"
#include "das/hashing.hpp"
#include "das/iblt.hpp"
#include "das/serial.hpp"

namespace das {

inline constexpr std::uint16_t kKeyFormatVersion = 1;

inline Bytes mpz_to_fixed(const mpz_class& v, std::size_t width) {
  if (sgn(v) < 0) fail(Errc::invalid_params, "negative integer");
  Bytes out(width, 0);
  if (v != 0) {
    std::size_t need = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
    if (need > width) fail(Errc::invalid_params, "integer exceeds field width");
    std::size_t count = 0;
    mpz_export(out.data() + (width - need), &count, 1, 1, 0, 0, v.get_mpz_t());
  }
  return out;
}

inline Bytes mpz_to_min_bytes(const mpz_class& v) {
  if (v == 0) return {};
  return mpz_to_fixed(v, (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8);
}

inline mpz_class mpz_from_bytes(std::span<const std::uint8_t> raw) {
  mpz_class v = 0;
  if (!raw.empty()) mpz_import(v.get_mpz_t(), raw.size(), 1, 1, 0, 0, raw.data());
  return v;
}

inline mpz_class mpz_from_bytes(const Bytes& raw) {
  return mpz_from_bytes(std::span<const std::uint8_t>(raw.data(), raw.size()));
}

inline mpz_class powm(const mpz_class& base, const mpz_class& exp, const mpz_class& mod) {
  mpz_class out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return out;
}

// pk = (N, e, g, salt). N is a 2*tau-bit RSA modulus, g a quadratic residue
// mod N, salt the domain salt for the hash-to-group map.
struct PublicParams {
  mpz_class modulus;  // N
  mpz_class pub_exp;  // e
  mpz_class qr_gen;   // g
  Bytes salt;
  std::uint16_t tau = 0;

  std::uint16_t tag_width() const { return std::uint16_t((2 * std::uint32_t(tau) + 7) / 8); }

  // "DASK" | version u16 | tau u16 | length-prefixed big-endian N, e, g | salt
  Bytes serialize() const {
    ByteWriter w;
    w.magic("DASK");
    w.u16(kKeyFormatVersion);
    w.u16(tau);
    w.sized32(mpz_to_min_bytes(modulus));
    w.sized32(mpz_to_min_bytes(pub_exp));
    w.sized32(mpz_to_min_bytes(qr_gen));
    w.sized16(salt);
    return w.take();
  }

  static PublicParams deserialize(std::span<const std::uint8_t> raw) {
    ByteReader r(raw);
    r.expect_magic("DASK");
    if (r.u16() != kKeyFormatVersion) fail(Errc::version_mismatch, "public params version");
    PublicParams pp;
    pp.tau = r.u16();
    pp.modulus = mpz_from_bytes(r.sized32());
    pp.pub_exp = mpz_from_bytes(r.sized32());
    pp.qr_gen = mpz_from_bytes(r.sized32());
    pp.salt = r.sized16();
    r.expect_done();
    if (pp.modulus < 3 || mpz_even_p(pp.modulus.get_mpz_t()))
      fail(Errc::malformed_bytes, "modulus not an odd integer > 2");
    if (pp.qr_gen <= 1 || pp.qr_gen >= pp.modulus) fail(Errc::malformed_bytes, "generator range");
    return pp;
  }
};

struct SecretKey {
  mpz_class d;
  // Factors and the QR witness are retained for test-time verification only;
  // the key file format stores d alone.
  mpz_class p;
  mpz_class q;
  mpz_class qr_witness;  // x with x^2 = g (mod N)

  Bytes serialize() const {
    ByteWriter w;
    w.magic("DASS");
    w.u16(kKeyFormatVersion);
    w.sized32(mpz_to_min_bytes(d));
    return w.take();
  }

  static SecretKey deserialize(std::span<const std::uint8_t> raw) {
    ByteReader r(raw);
    r.expect_magic("DASS");
    if (r.u16() != kKeyFormatVersion) fail(Errc::version_mismatch, "secret key version");
    SecretKey sk;
    sk.d = mpz_from_bytes(r.sized32());
    r.expect_done();
    return sk;
  }
};

struct KeyPair {
  PublicParams pub;
  SecretKey sec;
};

// Deterministic in the seed. tau-bit primes get their top two bits forced so
// N = p*q has exactly 2*tau bits; primes are re-drawn until gcd(e, phi) = 1.
inline KeyPair keygen(std::uint16_t tau, std::uint64_t seed) {
  if (tau < 128) fail(Errc::invalid_params, "tau below 128 bits");
  gmp_randclass rng(gmp_randinit_mt);
  {
    std::uint8_t raw[8];
    for (int i = 0; i < 8; ++i) raw[i] = std::uint8_t(seed >> (8 * (7 - i)));
    rng.seed(mpz_from_bytes(std::span<const std::uint8_t>(raw, 8)));
  }

  auto draw_prime = [&]() {
    for (;;) {
      mpz_class c = rng.get_z_bits(tau);
      mpz_setbit(c.get_mpz_t(), tau - 1);
      mpz_setbit(c.get_mpz_t(), tau - 2);
      mpz_setbit(c.get_mpz_t(), 0);
      // error probability <= 4^-40
      if (mpz_probab_prime_p(c.get_mpz_t(), 40) != 0) return c;
    }
  };

  const mpz_class e = 65537;
  mpz_class p, q, n, phi, d;
  for (;;) {
    p = draw_prime();
    q = draw_prime();
    if (p == q) continue;
    n = p * q;
    phi = (p - 1) * (q - 1);
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), e.get_mpz_t(), phi.get_mpz_t());
    if (g != 1) continue;
    if (mpz_invert(d.get_mpz_t(), e.get_mpz_t(), phi.get_mpz_t()) == 0) continue;
    break;
  }

  mpz_class x, g;
  for (;;) {
    x = rng.get_z_range(n);
    if (x <= 1) continue;
    mpz_class gc;
    mpz_gcd(gc.get_mpz_t(), x.get_mpz_t(), n.get_mpz_t());
    if (gc != 1) continue;
    g = x * x % n;
    if (g > 1) break;
  }

  Bytes salt = mpz_to_fixed(rng.get_z_bits(128), 16);

  PublicParams pp{n, e, g, std::move(salt), tau};
  SecretKey sk{d, p, q, x};
  return KeyPair{std::move(pp), std::move(sk)};
}

// Expand the key to 2*tau + 64 bits with SHA-256 in counter mode, reduce mod
// N, then square to land in QR_N.
inline mpz_class hash_to_group(const Bytes& key, const PublicParams& pp) {
  const std::size_t nbytes = (2 * std::size_t(pp.tau) + 64 + 7) / 8;
  Bytes stream;
  stream.reserve(nbytes + 32);
  for (std::uint32_t ctr = 0; stream.size() < nbytes; ++ctr) {
    auto d = Sha256().feed(pp.salt).feed("h2g").feed_u32(ctr).feed(key).digest();
    stream.insert(stream.end(), d.begin(), d.end());
  }
  stream.resize(nbytes);
  mpz_class r = mpz_from_bytes(stream) % pp.modulus;
  return r * r % pp.modulus;
}

// rho(k, v) = (h(k) * g^v)^d mod N, encoded in tag_width bytes big-endian.
// The block is the exponent directly; it is an XOR-combined quantity, so no
// modular reduction of it is permitted.
inline Bytes make_tag(const Bytes& key, const Bytes& block, const SecretKey& sk,
                      const PublicParams& pp) {
  mpz_class base = hash_to_group(key, pp) * powm(pp.qr_gen, mpz_from_bytes(block), pp.modulus) %
                   pp.modulus;
  return mpz_to_fixed(powm(base, sk.d, pp.modulus), pp.tag_width());
}

// Public check: tag^e mod N == h(key) * g^block mod N.
inline bool verify_tag(const Bytes& key, const Bytes& block, const Bytes& tag,
                       const PublicParams& pp) {
  mpz_class lhs = powm(mpz_from_bytes(tag), pp.pub_exp, pp.modulus);
  mpz_class rhs = hash_to_group(key, pp) * powm(pp.qr_gen, mpz_from_bytes(block), pp.modulus) %
                  pp.modulus;
  return lhs == rhs;
}

// Client-side purity test: recompute the tag with the secret exponent and
// compare byte strings.
inline bool purity_secret(const Bytes& key_sum, const Bytes& value_sum, const Bytes& tag_sum,
                          const SecretKey& sk, const PublicParams& pp) {
  if (tag_sum.size() != pp.tag_width()) return false;
  return make_tag(key_sum, value_sum, sk, pp) == tag_sum;
}

inline bool purity_public(const Bytes& key_sum, const Bytes& value_sum, const Bytes& tag_sum,
                          const PublicParams& pp) {
  return verify_tag(key_sum, value_sum, tag_sum, pp);
}

inline PurityOracle secret_oracle(SecretKey sk, PublicParams pp) {
  return PurityOracle{OracleRole::client_secret,
                      [sk = std::move(sk), pp = std::move(pp)](const Bytes& k, const Bytes& v,
                                                               const Bytes& t) {
                        return purity_secret(k, v, t, sk, pp);
                      }};
}

inline PurityOracle public_oracle(PublicParams pp) {
  return PurityOracle{OracleRole::server_public,
                      [pp = std::move(pp)](const Bytes& k, const Bytes& v, const Bytes& t) {
                        return purity_public(k, v, t, pp);
                      }};
}

}  // namespace das
