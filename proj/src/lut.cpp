#include "gcx/lut.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace gcx {

namespace {

std::int64_t signed_min(unsigned w) { return w >= 64 ? INT64_MIN : -(std::int64_t{1} << (w - 1)); }
std::int64_t signed_max(unsigned w) { return w >= 64 ? INT64_MAX : (std::int64_t{1} << (w - 1)) - 1; }

unsigned bit_width_u(std::uint64_t v) { return static_cast<unsigned>(std::bit_width(v)); }

// sign(x) sign(s) round(|x| |s| / 2^frac), ties away from zero.
std::int64_t scaled_product(std::int64_t x, std::int64_t s, unsigned frac) {
  const unsigned __int128 mag = static_cast<unsigned __int128>(x < 0 ? -static_cast<__int128>(x) : x) *
                                static_cast<unsigned __int128>(s < 0 ? -static_cast<__int128>(s) : s);
  const unsigned __int128 q = frac ? (mag + (static_cast<unsigned __int128>(1) << (frac - 1))) >> frac : mag;
  const auto r = static_cast<std::int64_t>(static_cast<std::uint64_t>(q));
  return ((x < 0) != (s < 0)) ? -r : r;
}

}  // namespace

void LutTable::validate(const FixedPointFormat& in) const {
  in.validate();
  out.validate();
  if (segments.empty()) throw std::invalid_argument("lookup table has no segments");
  if (lo > hi) throw std::invalid_argument("lookup table domain is empty");
  if (lo < in.min_raw() || hi > in.max_raw()) throw std::invalid_argument("lookup table domain exceeds the input format");
  if (segments.front().start != lo) throw std::invalid_argument("lookup table does not cover the start of its domain");
  for (std::size_t k = 1; k < segments.size(); ++k) {
    if (segments[k].start <= segments[k - 1].start) throw std::invalid_argument("segment starts must increase");
    if (segments[k].start > hi) throw std::invalid_argument("segment starts beyond the domain");
  }
  if (slope_frac > 62) throw std::invalid_argument("slope_frac too large");
}

std::int64_t lut_eval_model(const FixedPointFormat& in, const LutTable& t, std::int64_t x) {
  (void)in;
  const std::int64_t xc = std::clamp(x, t.lo, t.hi);
  auto it = std::upper_bound(t.segments.begin(), t.segments.end(), xc,
                             [](std::int64_t v, const LutSegment& s) { return v < s.start; });
  const LutSegment& seg = *(it - 1);
  return t.out.wrap(scaled_product(xc, seg.slope, t.slope_frac) + seg.intercept);
}

Word lut_interp(CircuitBuilder& b, const Word& x, const FixedPointFormat& in, const LutTable& t) {
  t.validate(in);
  if (x.size() != in.total_bits) throw std::invalid_argument("lut input width mismatch");
  Word xs = in.is_signed ? x : zext(x, in.total_bits + 1);
  const auto w = static_cast<unsigned>(xs.size());

  if (t.lo > signed_min(w)) {
    const Sig below = !b.ge_const_signed(xs, t.lo);
    xs = b.mux(below, xs, const_word(static_cast<std::uint64_t>(t.lo), w));
  }
  if (t.hi < signed_max(w)) {
    const Sig above = b.ge_const_signed(xs, t.hi + 1);
    xs = b.mux(above, xs, const_word(static_cast<std::uint64_t>(t.hi), w));
  }

  // One-hot segment lines.
  const std::size_t k_count = t.segments.size();
  std::vector<Sig> onehot(k_count);
  const std::int64_t step = k_count > 1 ? t.segments[1].start - t.segments[0].start : 0;
  bool uniform = k_count > 1 && std::has_single_bit(static_cast<std::uint64_t>(step));
  for (std::size_t k = 0; uniform && k < k_count; ++k)
    uniform = t.segments[k].start == t.lo + static_cast<std::int64_t>(k) * step;
  if (k_count == 1) {
    onehot[0] = Sig::constant(true);
  } else if (uniform) {
    // Segment index is a bit field of (x - lo).
    const unsigned s = static_cast<unsigned>(std::countr_zero(static_cast<std::uint64_t>(step)));
    const auto max_idx = static_cast<std::uint64_t>(t.hi - t.lo) >> s;
    const Word off = b.sub(xs, const_word(static_cast<std::uint64_t>(t.lo), w));
    const auto lines = b.decode(slice(off, s, bit_width_u(max_idx)));
    for (std::size_t k = 0; k < k_count; ++k) onehot[k] = lines[k];
    for (std::size_t k = k_count; k <= max_idx; ++k) onehot[k_count - 1] = b.XOR(onehot[k_count - 1], lines[k]);
  } else {
    std::vector<Sig> therm(k_count);
    for (std::size_t k = 1; k < k_count; ++k) therm[k] = b.ge_const_signed(xs, t.segments[k].start);
    onehot[0] = !therm[1];
    for (std::size_t k = 1; k + 1 < k_count; ++k) onehot[k] = b.XOR(therm[k], therm[k + 1]);
    onehot[k_count - 1] = therm[k_count - 1];
  }

  const unsigned nout = t.out.total_bits;
  std::vector<std::uint64_t> slope_mag(k_count), slope_neg(k_count), icpt(k_count);
  std::uint64_t max_mag = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    const std::int64_t a = t.segments[k].slope;
    slope_mag[k] = a < 0 ? static_cast<std::uint64_t>(-a) : static_cast<std::uint64_t>(a);
    slope_neg[k] = a < 0;
    icpt[k] = static_cast<std::uint64_t>(t.segments[k].intercept);
    max_mag = std::max(max_mag, slope_mag[k]);
  }
  const Word intercept = b.select_const(onehot, icpt, nout);
  if (max_mag == 0) return intercept;

  const unsigned sw = bit_width_u(max_mag);
  const Word amag = b.select_const(onehot, slope_mag, sw);
  const Sig aneg = b.select_const(onehot, slope_neg, 1)[0];

  Word mag;
  Sig xneg;
  if (t.lo >= 0) {
    mag = slice(xs, 0, w - 1);
  } else {
    mag = b.abs_signed(xs);
    xneg = xs.back();
  }
  const auto pw = static_cast<unsigned>(mag.size()) + sw + 1;
  Word prod = b.mul_xfbq(mag, amag, pw);
  if (t.slope_frac) prod = b.add(prod, const_word(std::uint64_t{1} << (t.slope_frac - 1), pw));
  const Word q = slice(prod, t.slope_frac, nout);
  const Word r = b.cond_negate(q, b.XOR(xneg, aneg));
  return b.add(r, intercept);
}

Netlist gen_lut_interp(const FixedPointFormat& in, const LutTable& t) {
  CircuitBuilder b(in.total_bits, 0);
  return b.build(lut_interp(b, b.input_a(0, in.total_bits), in, t));
}

LutTable make_chord_table(const FixedPointFormat& in, const FixedPointFormat& out,
                          const std::function<double(double)>& f, double lo, double hi, unsigned segments,
                          unsigned slope_frac) {
  if (segments == 0) throw std::invalid_argument("chord table needs at least one segment");
  LutTable t;
  t.out = out;
  t.lo = in.from_double(lo);
  t.hi = in.from_double(hi);
  t.slope_frac = slope_frac;
  const std::int64_t span = t.hi - t.lo;
  std::vector<std::int64_t> starts(segments + 1);
  for (unsigned k = 0; k <= segments; ++k)
    starts[k] = t.lo + static_cast<std::int64_t>(static_cast<__int128>(span) * k / segments);
  for (unsigned k = 0; k < segments; ++k) {
    const double x0 = in.to_double(starts[k]), x1 = in.to_double(starts[k + 1]);
    const double y0 = f(x0), y1 = f(x1);
    const double a = x1 > x0 ? (y1 - y0) / (x1 - x0) : 0.0;
    const double raw_slope = std::ldexp(a, static_cast<int>(out.frac_bits) - static_cast<int>(in.frac_bits));
    LutSegment s;
    s.start = starts[k];
    s.slope = static_cast<std::int64_t>(std::llround(std::ldexp(raw_slope, static_cast<int>(slope_frac))));
    s.intercept = std::llround(std::ldexp(y0, static_cast<int>(out.frac_bits))) -
                  scaled_product(s.start, s.slope, slope_frac);
    t.segments.push_back(s);
  }
  return t;
}

}  // namespace gcx
