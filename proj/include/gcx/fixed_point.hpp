#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gcx {

/// Two's-complement (or unsigned) binary fixed point: raw / 2^frac_bits.
struct FixedPointFormat {
  unsigned total_bits = 16;
  unsigned frac_bits = 11;
  bool is_signed = true;

  void validate() const {
    if (total_bits < 2 || total_bits > 64) throw std::invalid_argument("total_bits must be in [2, 64]");
    if (frac_bits >= total_bits) throw std::invalid_argument("frac_bits must be below total_bits");
  }

  std::int64_t min_raw() const { return is_signed ? -(std::int64_t{1} << (total_bits - 1)) : 0; }
  std::int64_t max_raw() const {
    if (!is_signed && total_bits == 64) return INT64_MAX;
    return is_signed ? (std::int64_t{1} << (total_bits - 1)) - 1 : (std::int64_t{1} << total_bits) - 1;
  }
  std::uint64_t mask() const { return total_bits == 64 ? ~0ull : (1ull << total_bits) - 1; }
  double ulp() const { return std::ldexp(1.0, -static_cast<int>(frac_bits)); }

  /// Reduces an integer modulo 2^total_bits into the representable range.
  std::int64_t wrap(std::int64_t v) const { return decode(static_cast<std::uint64_t>(v)); }
  std::int64_t saturate(std::int64_t v) const { return v < min_raw() ? min_raw() : (v > max_raw() ? max_raw() : v); }

  /// Bit pattern of a raw value (low total_bits bits).
  std::uint64_t encode(std::int64_t raw) const { return static_cast<std::uint64_t>(raw) & mask(); }
  std::int64_t decode(std::uint64_t bits) const {
    bits &= mask();
    if (is_signed && total_bits < 64 && (bits >> (total_bits - 1)) & 1) return static_cast<std::int64_t>(bits | ~mask());
    return static_cast<std::int64_t>(bits);
  }

  /// Round to nearest (ties away from zero), saturating.
  std::int64_t from_double(double v) const {
    const double scaled = std::round(std::ldexp(v, static_cast<int>(frac_bits)));
    if (scaled <= static_cast<double>(min_raw())) return min_raw();
    if (scaled >= static_cast<double>(max_raw())) return max_raw();
    return static_cast<std::int64_t>(scaled);
  }
  double to_double(std::int64_t raw) const { return std::ldexp(static_cast<double>(raw), -static_cast<int>(frac_bits)); }

  std::string describe() const {
    return std::string(is_signed ? "s" : "u") + std::to_string(total_bits) + "." + std::to_string(frac_bits);
  }
  bool operator==(const FixedPointFormat&) const = default;
};

}  // namespace gcx
