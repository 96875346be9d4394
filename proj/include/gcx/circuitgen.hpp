#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcx/builder.hpp"
#include "gcx/fixed_point.hpp"
#include "gcx/netlist.hpp"

namespace gcx {

struct GateCensus {
  std::size_t and_count = 0;
  std::size_t xor_count = 0;
  std::size_t inv_count = 0;
  std::size_t total = 0;
  bool operator==(const GateCensus&) const = default;
};

GateCensus census(const Netlist& n);
/// {"and":..,"xor":..,"inv":..,"total":..}
std::string census_json(const GateCensus& c);

/*
 * Two-operand integer generators over the raw bits of `fmt` (the binary
 * point does not matter for these). Party A holds the first operand, party B
 * the second; both are total_bits wide, little-endian.
 */
Netlist gen_adder(const FixedPointFormat& fmt);       // a + b mod 2^n
Netlist gen_sub(const FixedPointFormat& fmt);         // a - b mod 2^n
Netlist gen_comparator(const FixedPointFormat& fmt);  // outputs [a < b, a == b]
Netlist gen_mul_conventional(const FixedPointFormat& fmt);
/// `full_width` keeps all 2n product bits instead of the low word.
Netlist gen_mul_xfbq(const FixedPointFormat& fmt, bool qerror_correction, bool full_width = false);
Netlist gen_mul_conventional_full(const FixedPointFormat& fmt);
/// The correction subcircuit alone: inputs a, b (party A) and bits 1.. of the core product (party B).
Netlist gen_xfbq_correction_block(const FixedPointFormat& fmt, bool full_width = false);

/// A: x, out: x (buffers only, no AND gates).
Netlist gen_identity(const FixedPointFormat& fmt);

/// Re-emits `f` inside `b` with its inputs driven by `inputs` (A then B); returns f's outputs.
std::vector<Sig> embed_netlist(CircuitBuilder& b, const Netlist& f, std::span<const Sig> inputs);

/*
 * Share wrapper around an element function f (A: x of `width` bits, out: `width` bits),
 * applied to `count` elements. Input shares are added mod 2^width; the signed result is
 * widened to `share_bits` and masked there:
 *   A: xa[count] (width), mask[count] (share_bits)    B: xb[count] (width)
 *   out: sext(f(xa + xb)) - mask
 */
Netlist gen_shared_unary(const Netlist& f, unsigned width, unsigned count, unsigned share_bits = 0);

/// ±1-digit encoding of an unsigned value: bit i stands for +2^i if set, -2^i if clear.
struct XfbqNumber {
  std::uint64_t bits = 0;
  unsigned width = 0;
  /// sum_i (2 b_i - 1) 2^i
  std::int64_t value() const;
};

/// Right shift with the MSB set; value() == a + (1 - lsb(a)).
XfbqNumber xfbq_convert_value(std::uint64_t a, unsigned width);
/// Q error of the conversion, i.e. the inverted LSB.
inline unsigned xfbq_qerror(std::uint64_t a) { return static_cast<unsigned>(~a & 1); }

}  // namespace gcx
