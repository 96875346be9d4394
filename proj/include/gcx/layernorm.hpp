#pragma once

#include <cstdint>
#include <vector>

#include "gcx/builder.hpp"
#include "gcx/fixed_point.hpp"
#include "gcx/netlist.hpp"

namespace gcx {

/*
 * Fixed-point LayerNorm over a row of n values, y_i = beta_i z_i + gamma_i.
 *
 * Everything before the inverse square root stays in exact integers:
 *   d_i = n x_i - sum(x)          (n times the centred value)
 *   D   = sum d_i^2               (n^3 times the variance, in raw units)
 *   z_i = d_i sqrt(n) / sqrt(D)
 * so the only approximation is the reciprocal square root. D is clamped to
 * at least 1 (a constant row gives d = 0 and hence z = 0). D is normalized to
 * m 4^e with m in [1, 4), and sqrt(n / m) comes from a chord table indexed
 * by the leading bits of m.
 */
struct LayerNormConfig {
  FixedPointFormat fmt{16, 11, true};
  unsigned n = 8;
  unsigned rsqrt_frac = 20;  // fraction bits of the table output
  unsigned index_bits = 8;   // leading bits of m that pick a chord
  unsigned slope_frac = 12;

  void validate() const;
  unsigned d_bits() const;    // signed width of d_i
  unsigned var_bits() const;  // unsigned width of D (even)
  unsigned bd_bits() const;   // signed width of beta_i d_i
  bool operator==(const LayerNormConfig&) const = default;
};

/// Chord coefficients: value = base[i] - ((slope[i] * u) >> slope_frac).
struct RsqrtTable {
  std::vector<std::uint64_t> base;
  std::vector<std::uint64_t> slope;
  unsigned value_bits = 0;
  unsigned slope_bits = 0;
};
RsqrtTable rsqrt_table(const LayerNormConfig& cfg);

struct LayerNormStats {
  std::vector<std::int64_t> d;
  std::uint64_t var_sum = 0;  // D
};
LayerNormStats layernorm_stats(const LayerNormConfig& cfg, const std::vector<std::int64_t>& x);

/// beta_i z_i in raw output units from D and bd = beta_i d_i, wrapped to fmt.
std::int64_t layernorm_core_model(const LayerNormConfig& cfg, std::uint64_t var_sum, std::int64_t bd);

/// Full fixed-point pipeline (raw in, raw out).
std::vector<std::int64_t> layernorm_model(const LayerNormConfig& cfg, const std::vector<std::int64_t>& x,
                                          const std::vector<std::int64_t>& beta,
                                          const std::vector<std::int64_t>& gamma);

/*
 * Circuit variants (w = fmt.total_bits, values little-endian, row order):
 *   Full        A: x[n]                      B: beta[n], gamma[n]
 *               out: y[n]
 *   FullShared  A: xa[n], mask[n]            B: xb[n], beta[n], gamma[n]
 *               x = xa + xb mod 2^w, out: y - mask
 *   Reduced     A: r_var (var_bits), r_bd[n] (bd_bits), mask[n] (w)
 *               B: var - r_var, bd[n] - r_bd[n]
 *               out: beta z - mask (gamma is added outside the circuit)
 */
enum class LayerNormVariant { Full, FullShared, Reduced };

Netlist gen_layernorm(const LayerNormConfig& cfg, LayerNormVariant variant);

/// beta_i z_i from D (unsigned, var_bits) and each |bd_i| with its sign; words of fmt.total_bits.
std::vector<Word> layernorm_core(CircuitBuilder& b, const LayerNormConfig& cfg, const Word& var_sum,
                                 const std::vector<Word>& bd_mag, const std::vector<Sig>& bd_neg);

}  // namespace gcx
