#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>

namespace gcx {

/// 128-bit value used for wire labels, the global offset and cipher blocks.
struct Block {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  constexpr Block operator^(const Block& o) const { return {lo ^ o.lo, hi ^ o.hi}; }
  constexpr Block& operator^=(const Block& o) {
    lo ^= o.lo;
    hi ^= o.hi;
    return *this;
  }
  constexpr bool operator==(const Block&) const = default;

  /// Point-and-permute color bit.
  constexpr bool color() const { return (lo & 1) != 0; }
  constexpr Block select(bool b) const { return b ? *this : Block{}; }

  std::array<std::uint8_t, 16> to_bytes() const;
  static Block from_bytes(const std::uint8_t* p);
  std::string hex() const;
};

/// Multiplication by x in GF(2^128) modulo x^128 + x^7 + x^2 + x + 1.
constexpr Block gf_double(const Block& b) {
  const std::uint64_t carry = b.hi >> 63;
  Block r{b.lo << 1, (b.hi << 1) | (b.lo >> 63)};
  r.lo ^= carry * 0x87u;
  return r;
}

/// AES-128 encryption under a fixed key (AES-NI through OpenSSL when present).
class Aes128 {
 public:
  explicit Aes128(const Block& key);
  ~Aes128();
  Aes128(Aes128&&) noexcept;
  Aes128& operator=(Aes128&&) noexcept;
  Aes128(const Aes128&) = delete;
  Aes128& operator=(const Aes128&) = delete;

  Block encrypt(const Block& in) const;
  void encrypt(const Block* in, Block* out, std::size_t n) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/*
 * Tweakable correlation-robust hash built from fixed-key AES:
 *   H(x, j) = E_k(2x ^ j) ^ 2x ^ j
 * Every call is counted so callers can audit per-gate hash budgets.
 */
class FixedKeyHash {
 public:
  FixedKeyHash();
  explicit FixedKeyHash(const Block& key);

  Block operator()(const Block& x, std::uint64_t tweak) {
    ++calls_;
    const Block t = gf_double(x) ^ Block{tweak, 0};
    return aes_.encrypt(t) ^ t;
  }

  std::uint64_t calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }

 private:
  Aes128 aes_;
  std::uint64_t calls_ = 0;
};

/// Deterministic block generator: AES-128 in counter mode keyed by the seed.
class Prg {
 public:
  explicit Prg(std::uint64_t seed);
  /// Seeds from std::random_device; only for explicitly non-reproducible runs.
  static Prg from_entropy();

  Block next();
  std::uint64_t next_u64() { return next().lo; }

 private:
  Aes128 aes_;
  std::uint64_t counter_ = 0;
};

}  // namespace gcx
