#include "gcx/block.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <random>
#include <stdexcept>

namespace gcx {

std::array<std::uint8_t, 16> Block::to_bytes() const {
  std::array<std::uint8_t, 16> b{};
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<std::uint8_t>(lo >> (8 * i));
    b[8 + i] = static_cast<std::uint8_t>(hi >> (8 * i));
  }
  return b;
}

Block Block::from_bytes(const std::uint8_t* p) {
  Block r;
  for (int i = 0; i < 8; ++i) {
    r.lo |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    r.hi |= static_cast<std::uint64_t>(p[8 + i]) << (8 * i);
  }
  return r;
}

std::string Block::hex() const {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

struct Aes128::Impl {
  EVP_CIPHER_CTX* ctx = nullptr;
  ~Impl() {
    if (ctx) EVP_CIPHER_CTX_free(ctx);
  }
};

Aes128::Aes128(const Block& key) : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_CIPHER_CTX_new();
  const auto k = key.to_bytes();
  if (!impl_->ctx || EVP_EncryptInit_ex(impl_->ctx, EVP_aes_128_ecb(), nullptr, k.data(), nullptr) != 1)
    throw std::runtime_error("AES-128 initialisation failed");
  EVP_CIPHER_CTX_set_padding(impl_->ctx, 0);
}

Aes128::~Aes128() = default;
Aes128::Aes128(Aes128&&) noexcept = default;
Aes128& Aes128::operator=(Aes128&&) noexcept = default;

Block Aes128::encrypt(const Block& in) const {
  Block out;
  encrypt(&in, &out, 1);
  return out;
}

void Aes128::encrypt(const Block* in, Block* out, std::size_t n) const {
  // Blocks are stored little-endian in memory on every supported target.
  static_assert(sizeof(Block) == 16);
  int len = 0;
  if (EVP_EncryptUpdate(impl_->ctx, reinterpret_cast<unsigned char*>(out), &len,
                        reinterpret_cast<const unsigned char*>(in), static_cast<int>(16 * n)) != 1)
    throw std::runtime_error("AES-128 encryption failed");
}

namespace {
// Fixed public key of the garbling hash (digits of pi).
constexpr Block kHashKey{0x243f6a8885a308d3ull, 0x13198a2e03707344ull};
}  // namespace

FixedKeyHash::FixedKeyHash() : aes_(kHashKey) {}
FixedKeyHash::FixedKeyHash(const Block& key) : aes_(key) {}

Prg::Prg(std::uint64_t seed) : aes_(Block{seed, 0x9e3779b97f4a7c15ull}) {}

Prg Prg::from_entropy() {
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return Prg(s);
}

Block Prg::next() { return aes_.encrypt(Block{counter_++, 0}); }

}  // namespace gcx
