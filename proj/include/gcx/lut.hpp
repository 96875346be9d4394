#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gcx/builder.hpp"
#include "gcx/fixed_point.hpp"
#include "gcx/netlist.hpp"

namespace gcx {

/// One linear piece: y = slope * x / 2^slope_frac + intercept (raw units).
struct LutSegment {
  std::int64_t start = 0;  // first input covered (raw)
  std::int64_t slope = 0;
  std::int64_t intercept = 0;  // raw, output format
  bool operator==(const LutSegment&) const = default;
};

/*
 * Piecewise-linear table over the clamped input domain [lo, hi]. Segment k
 * covers [start_k, start_{k+1}); the last one runs to hi. Products are
 * rounded half away from zero before the intercept is added, and the result
 * wraps to the output format.
 */
struct LutTable {
  FixedPointFormat out;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  unsigned slope_frac = 0;
  std::vector<LutSegment> segments;

  /// Throws std::invalid_argument for a table that does not cover [lo, hi].
  void validate(const FixedPointFormat& in) const;
};

std::int64_t lut_eval_model(const FixedPointFormat& in, const LutTable& t, std::int64_t x);

/// Circuit for a table over input word `x` in format `in`; returns out.total_bits bits.
Word lut_interp(CircuitBuilder& b, const Word& x, const FixedPointFormat& in, const LutTable& t);

/// Stand-alone circuit: party A supplies x, outputs the table value.
Netlist gen_lut_interp(const FixedPointFormat& in, const LutTable& t);

/*
 * Uniform chord table for f on [lo, hi] (real units): breakpoints are evenly
 * spaced in raw units and each chord passes through (start_k, f(start_k)).
 */
LutTable make_chord_table(const FixedPointFormat& in, const FixedPointFormat& out,
                          const std::function<double(double)>& f, double lo, double hi, unsigned segments,
                          unsigned slope_frac);

}  // namespace gcx
