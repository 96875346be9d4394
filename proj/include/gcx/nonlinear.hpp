#pragma once

#include <cstdint>
#include <vector>

#include "gcx/builder.hpp"
#include "gcx/fixed_point.hpp"
#include "gcx/lut.hpp"
#include "gcx/netlist.hpp"

namespace gcx {

/*
 * Nonlinear blocks. Each generator has a software model built from the same
 * tables and integer steps, so circuit and model agree bit for bit.
 */

/// GeLU clipped to [-4, 4], 32 chords.
LutTable gelu_table(const FixedPointFormat& fmt);
std::int64_t gelu_model(const FixedPointFormat& fmt, std::int64_t x);
Netlist gen_gelu(const FixedPointFormat& fmt);

/*
 * exp(x) for x <= 0 (positive inputs clip to 0):
 *   t = -x / ln 2 via a constant multiply, t = q + u with integer q and
 *   fraction u, exp(x) = 2^-u >> q, where 2^-u comes from a chord table.
 */
struct ExpParams {
  unsigned const_frac = 14;  // precision of the 1/ln2 constant
  unsigned segments = 16;
  unsigned slope_frac = 12;
};
LutTable exp2_frac_table(const FixedPointFormat& fmt, const ExpParams& p = {});
std::int64_t exp_model(const FixedPointFormat& fmt, std::int64_t x, const ExpParams& p = {});
/// Output has frac_bits + 1 bits (unsigned, value <= 1.0).
Word exp_circuit(CircuitBuilder& b, const Word& x, const FixedPointFormat& fmt, const ExpParams& p = {});
Netlist gen_softmax_exp(const FixedPointFormat& fmt, const ExpParams& p = {});

/// One softmax row of length n: max-subtract, exp, sum, reciprocal table, scale.
std::vector<std::int64_t> softmax_model(const FixedPointFormat& fmt, const std::vector<std::int64_t>& row);
Netlist gen_softmax(const FixedPointFormat& fmt, unsigned n);

}  // namespace gcx
