#include "gcx/nonlinear.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace gcx {

namespace {

constexpr unsigned kGeluSegments = 32;
constexpr unsigned kGeluSlopeFrac = 12;
constexpr unsigned kRecipSegments = 16;
constexpr unsigned kRecipSlopeFrac = 12;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

void require_signed_fraction(const FixedPointFormat& fmt, const char* what) {
  fmt.validate();
  if (!fmt.is_signed || fmt.frac_bits == 0 || fmt.frac_bits + 2 > fmt.total_bits)
    throw std::invalid_argument(std::string(what) + ": needs a signed format with fraction and integer bits");
}

std::uint64_t inv_ln2_const(unsigned frac) {
  return static_cast<std::uint64_t>(std::llround(std::ldexp(1.0 / std::log(2.0), static_cast<int>(frac))));
}

FixedPointFormat frac_format(unsigned frac) { return {frac + 1, frac, false}; }

unsigned ceil_log2(unsigned n) { return n <= 1 ? 0 : static_cast<unsigned>(std::bit_width(n - 1)); }

FixedPointFormat sum_format(const FixedPointFormat& fmt, unsigned n) {
  return {fmt.frac_bits + 1 + ceil_log2(n), fmt.frac_bits, false};
}

LutTable recip_table(const FixedPointFormat& fmt, unsigned n) {
  return make_chord_table(sum_format(fmt, n), frac_format(fmt.frac_bits), [](double v) { return 1.0 / v; }, 1.0,
                          static_cast<double>(n), kRecipSegments, kRecipSlopeFrac);
}

}  // namespace

LutTable gelu_table(const FixedPointFormat& fmt) {
  require_signed_fraction(fmt, "gelu");
  if (fmt.to_double(fmt.max_raw()) < 4.0) throw std::invalid_argument("gelu: format cannot represent the clip range");
  return make_chord_table(fmt, fmt, gelu, -4.0, 4.0, kGeluSegments, kGeluSlopeFrac);
}

std::int64_t gelu_model(const FixedPointFormat& fmt, std::int64_t x) {
  return lut_eval_model(fmt, gelu_table(fmt), x);
}

Netlist gen_gelu(const FixedPointFormat& fmt) { return gen_lut_interp(fmt, gelu_table(fmt)); }

LutTable exp2_frac_table(const FixedPointFormat& fmt, const ExpParams& p) {
  const FixedPointFormat uf = frac_format(fmt.frac_bits);
  return make_chord_table(uf, uf, [](double u) { return std::exp2(-u); }, 0.0, 1.0, p.segments, p.slope_frac);
}

std::int64_t exp_model(const FixedPointFormat& fmt, std::int64_t x, const ExpParams& p) {
  require_signed_fraction(fmt, "exp");
  const unsigned f = fmt.frac_bits;
  const auto m = static_cast<std::uint64_t>(-std::min<std::int64_t>(x, 0));
  const auto t = static_cast<std::uint64_t>((static_cast<unsigned __int128>(m) * inv_ln2_const(p.const_frac)) >>
                                            p.const_frac);
  const std::uint64_t q = t >> f;
  const auto u = static_cast<std::int64_t>(t & ((std::uint64_t{1} << f) - 1));
  const std::int64_t v = lut_eval_model(frac_format(f), exp2_frac_table(fmt, p), u);
  return q >= 63 ? 0 : (v >> q);
}

Word exp_circuit(CircuitBuilder& b, const Word& x, const FixedPointFormat& fmt, const ExpParams& p) {
  require_signed_fraction(fmt, "exp");
  const unsigned n = fmt.total_bits, f = fmt.frac_bits;
  if (x.size() != n) throw std::invalid_argument("exp: input width mismatch");
  const Word m = b.and_bit(b.neg(x), x.back());
  const std::uint64_t c = inv_ln2_const(p.const_frac);
  const auto cw = static_cast<unsigned>(std::bit_width(c));
  const Word prod = b.mul_conventional(m, const_word(c, cw), n + cw);
  const Word t = slice(prod, p.const_frac, n + cw - p.const_frac);
  const Word u = zext(slice(t, 0, f), f + 1);
  const Word q = slice(t, f, static_cast<unsigned>(t.size()) - f);
  const Word v = lut_interp(b, u, frac_format(f), exp2_frac_table(fmt, p));
  return b.shr_var(v, q);
}

Netlist gen_softmax_exp(const FixedPointFormat& fmt, const ExpParams& p) {
  CircuitBuilder b(fmt.total_bits, 0);
  const Word y = exp_circuit(b, b.input_a(0, fmt.total_bits), fmt, p);
  return b.build(zext(y, fmt.total_bits));
}

std::vector<std::int64_t> softmax_model(const FixedPointFormat& fmt, const std::vector<std::int64_t>& row) {
  require_signed_fraction(fmt, "softmax");
  if (row.empty()) throw std::invalid_argument("softmax: empty row");
  const auto n = static_cast<unsigned>(row.size());
  const FixedPointFormat dfmt{fmt.total_bits + 1, fmt.frac_bits, true};
  const std::int64_t mx = *std::max_element(row.begin(), row.end());
  std::vector<std::int64_t> e(n);
  std::int64_t s = 0;
  for (unsigned i = 0; i < n; ++i) {
    e[i] = exp_model(dfmt, row[i] - mx);
    s += e[i];
  }
  const std::int64_t r = lut_eval_model(sum_format(fmt, n), recip_table(fmt, n), s);
  const unsigned f = fmt.frac_bits;
  std::vector<std::int64_t> y(n);
  for (unsigned i = 0; i < n; ++i) y[i] = (e[i] * r + (std::int64_t{1} << (f - 1))) >> f;
  return y;
}

Netlist gen_softmax(const FixedPointFormat& fmt, unsigned n) {
  require_signed_fraction(fmt, "softmax");
  if (n == 0) throw std::invalid_argument("softmax: empty row");
  const unsigned w = fmt.total_bits, f = fmt.frac_bits;
  CircuitBuilder b(w * n, 0);
  std::vector<Word> x(n);
  for (unsigned i = 0; i < n; ++i) x[i] = b.input_a(i * w, w);

  std::vector<Word> level = x;
  while (level.size() > 1) {
    std::vector<Word> next;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(b.max_signed(level[i], level[i + 1]));
    if (level.size() % 2) next.push_back(level.back());
    level.swap(next);
  }
  const Word mx = sext(level[0], w + 1);

  const FixedPointFormat dfmt{w + 1, f, true};
  const FixedPointFormat sfmt = sum_format(fmt, n);
  std::vector<Word> e(n);
  Word s(sfmt.total_bits);
  for (unsigned i = 0; i < n; ++i) {
    e[i] = exp_circuit(b, b.sub(sext(x[i], w + 1), mx), dfmt);
    s = b.add(s, zext(e[i], sfmt.total_bits));
  }
  const Word r = lut_interp(b, s, sfmt, recip_table(fmt, n));
  Word outs;
  const unsigned pw = 2 * (f + 1) + 1;
  for (unsigned i = 0; i < n; ++i) {
    Word prod = b.mul_xfbq(e[i], r, pw);
    prod = b.add(prod, const_word(std::uint64_t{1} << (f - 1), pw));
    const Word y = zext(slice(prod, f, pw - f), w);
    outs.insert(outs.end(), y.begin(), y.end());
  }
  return b.build(outs);
}

}  // namespace gcx
