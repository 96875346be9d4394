#include "gcx/layernorm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace gcx {

namespace {

using u128 = unsigned __int128;

unsigned width_of(u128 v) {
  unsigned w = 0;
  while (v) {
    ++w;
    v >>= 1;
  }
  return w;
}

std::uint64_t d_max(const LayerNormConfig& cfg) {
  return static_cast<std::uint64_t>(cfg.n - 1) * cfg.fmt.mask();
}

unsigned u_bits(const LayerNormConfig& cfg) { return cfg.rsqrt_frac + 2 - cfg.index_bits; }

// Number of leading zero bit pairs of a nonzero D, and the normalized value.
struct Normalized {
  unsigned pairs;
  std::uint64_t shifted;
};

Normalized normalize(const LayerNormConfig& cfg, std::uint64_t v) {
  const unsigned wd = cfg.var_bits();
  unsigned k = 0;
  while (k + 1 < wd / 2 && ((v >> (wd - 2 - 2 * k)) & 3) == 0) ++k;
  return {k, v << (2 * k)};
}

unsigned stage_count(unsigned pairs) { return pairs <= 1 ? 0 : static_cast<unsigned>(std::bit_width(pairs - 1)); }

}  // namespace

void LayerNormConfig::validate() const {
  fmt.validate();
  if (!fmt.is_signed) throw std::invalid_argument("layernorm: format must be signed");
  if (n < 2) throw std::invalid_argument("layernorm: vector length must be at least 2");
  if (index_bits < 3 || index_bits > rsqrt_frac + 1) throw std::invalid_argument("layernorm: bad index_bits");
  if (rsqrt_frac < 2 || rsqrt_frac > 30) throw std::invalid_argument("layernorm: bad rsqrt_frac");
  if (slope_frac > 30) throw std::invalid_argument("layernorm: bad slope_frac");
  if (var_bits() > 64 || bd_bits() > 63) throw std::invalid_argument("layernorm: format too wide for 64-bit statistics");
}

unsigned LayerNormConfig::d_bits() const { return width_of(d_max(*this)) + 1; }

unsigned LayerNormConfig::var_bits() const {
  const u128 dm = d_max(*this);
  unsigned w = std::max(width_of(dm * dm * n), rsqrt_frac + 2);
  return w + (w & 1);
}

unsigned LayerNormConfig::bd_bits() const {
  const u128 beta_max = u128{1} << (fmt.total_bits - 1);
  return width_of(beta_max * d_max(*this)) + 1;
}

RsqrtTable rsqrt_table(const LayerNormConfig& cfg) {
  const unsigned ib = cfg.index_bits, ub = u_bits(cfg);
  const double scale = std::ldexp(1.0, static_cast<int>(cfg.rsqrt_frac));
  const double root_n = std::sqrt(static_cast<double>(cfg.n));
  const double h = std::ldexp(1.0, -static_cast<int>(ib - 2));
  const double u_span = std::ldexp(1.0, static_cast<int>(ub));
  auto g = [&](double m) { return root_n * scale / std::sqrt(m); };

  RsqrtTable t;
  const std::size_t count = std::size_t{1} << ib;
  t.base.assign(count, 0);
  t.slope.assign(count, 0);
  for (std::size_t i = count / 4; i < count; ++i) {
    const double m0 = static_cast<double>(i) * h;
    const double a = std::nearbyint((g(m0) - g(m0 + h)) / u_span * std::ldexp(1.0, static_cast<int>(cfg.slope_frac)));
    // The curve is convex, so the secant lies above it; centre the error.
    double lo_gap = 1e300, hi_gap = -1e300;
    for (int s = 0; s <= 256; ++s) {
      const double u = u_span * s / 256.0;
      const double gap = g(m0) - a * u / std::ldexp(1.0, static_cast<int>(cfg.slope_frac)) - g(m0 + u / scale);
      lo_gap = std::min(lo_gap, gap);
      hi_gap = std::max(hi_gap, gap);
    }
    t.base[i] = static_cast<std::uint64_t>(std::llround(g(m0) - 0.5 * (lo_gap + hi_gap)));
    t.slope[i] = static_cast<std::uint64_t>(a);
  }
  t.value_bits = static_cast<unsigned>(std::bit_width(*std::max_element(t.base.begin(), t.base.end())));
  t.slope_bits = std::max(1u, static_cast<unsigned>(std::bit_width(*std::max_element(t.slope.begin(), t.slope.end()))));
  return t;
}

LayerNormStats layernorm_stats(const LayerNormConfig& cfg, const std::vector<std::int64_t>& x) {
  cfg.validate();
  if (x.size() != cfg.n) throw std::invalid_argument("layernorm: row length mismatch");
  std::int64_t sum = 0;
  for (auto v : x) sum += v;
  LayerNormStats s;
  for (auto v : x) {
    const std::int64_t d = static_cast<std::int64_t>(cfg.n) * v - sum;
    s.d.push_back(d);
    s.var_sum += static_cast<std::uint64_t>(d * d);
  }
  return s;
}

std::int64_t layernorm_core_model(const LayerNormConfig& cfg, std::uint64_t var_sum, std::int64_t bd) {
  static thread_local std::optional<std::pair<LayerNormConfig, RsqrtTable>> cache;
  if (!cache || !(cache->first == cfg)) cache.emplace(cfg, rsqrt_table(cfg));
  const RsqrtTable& t = cache->second;

  const unsigned wd = cfg.var_bits(), r = cfg.rsqrt_frac, ub = u_bits(cfg);
  const std::uint64_t mask_wd = wd == 64 ? ~0ull : (1ull << wd) - 1;
  const Normalized nz = normalize(cfg, std::max<std::uint64_t>(var_sum & mask_wd, 1));
  const std::uint64_t mq = (nz.shifted & mask_wd) >> (wd - r - 2);
  const std::uint64_t idx = mq >> ub, u = mq & ((1ull << ub) - 1);
  const std::uint64_t lval = t.base[idx] - ((t.slope[idx] * u) >> cfg.slope_frac);
  const unsigned e = wd / 2 - 1 - nz.pairs;

  const u128 mag = bd < 0 ? static_cast<u128>(-static_cast<__int128>(bd)) : static_cast<u128>(bd);
  const u128 p = (mag * lval) >> e;
  const auto q = static_cast<std::int64_t>(static_cast<std::uint64_t>((p + (u128{1} << (r - 1))) >> r));
  return cfg.fmt.wrap(bd < 0 ? -q : q);
}

std::vector<std::int64_t> layernorm_model(const LayerNormConfig& cfg, const std::vector<std::int64_t>& x,
                                          const std::vector<std::int64_t>& beta,
                                          const std::vector<std::int64_t>& gamma) {
  if (beta.size() != cfg.n || gamma.size() != cfg.n) throw std::invalid_argument("layernorm: parameter length mismatch");
  const LayerNormStats s = layernorm_stats(cfg, x);
  std::vector<std::int64_t> y(cfg.n);
  for (unsigned i = 0; i < cfg.n; ++i)
    y[i] = cfg.fmt.wrap(layernorm_core_model(cfg, s.var_sum, beta[i] * s.d[i]) + gamma[i]);
  return y;
}

std::vector<Word> layernorm_core(CircuitBuilder& b, const LayerNormConfig& cfg, const Word& var_sum,
                                 const std::vector<Word>& bd_mag, const std::vector<Sig>& bd_neg) {
  const unsigned wd = cfg.var_bits(), r = cfg.rsqrt_frac, ub = u_bits(cfg), w = cfg.fmt.total_bits;
  if (var_sum.size() != wd) throw std::invalid_argument("layernorm: variance width mismatch");
  if (bd_mag.size() != bd_neg.size()) throw std::invalid_argument("layernorm: sign count mismatch");

  // Clamp D >= 1: a zero D has bit 0 clear, so flipping it gives 1.
  Word v = var_sum;
  v[0] = b.XOR(v[0], b.is_zero(var_sum));

  // Leading-zero pairs by binary search, shifting as we go.
  const unsigned pairs = wd / 2;
  const unsigned stages = stage_count(pairs);
  Word k(stages);
  for (unsigned s = stages; s-- > 0;) {
    const unsigned sh = 2u << s;
    const Sig z = b.is_zero(slice(v, wd - sh, sh));
    v = b.mux(z, v, shl(v, sh));
    k[s] = z;
  }
  const unsigned ew = std::max(1u, static_cast<unsigned>(std::bit_width(pairs - 1)));
  const Word e = b.sub(const_word(pairs - 1, ew), zext(k, ew));

  const RsqrtTable t = rsqrt_table(cfg);
  const Word mq = slice(v, wd - r - 2, r + 2);
  const auto onehot = b.decode(slice(mq, ub, cfg.index_bits));
  const Word base = b.select_const(onehot, t.base, t.value_bits);
  const Word slope = b.select_const(onehot, t.slope, t.slope_bits);
  const Word au = b.mul_xfbq(slope, slice(mq, 0, ub), t.slope_bits + ub);
  const Word lval = b.sub(base, zext(shr(au, cfg.slope_frac), t.value_bits));

  std::vector<Word> out;
  for (std::size_t i = 0; i < bd_mag.size(); ++i) {
    const auto pw = static_cast<unsigned>(bd_mag[i].size()) + t.value_bits;
    const Word prod = b.mul_xfbq(bd_mag[i], lval, pw);
    const Word shifted = zext(b.shr_var(prod, e), std::max(pw, r + w));
    const Word rounded = b.add(slice(shifted, 0, r + w), const_word(std::uint64_t{1} << (r - 1), r + w));
    out.push_back(b.cond_negate(slice(rounded, r, w), bd_neg[i]));
  }
  return out;
}

Netlist gen_layernorm(const LayerNormConfig& cfg, LayerNormVariant variant) {
  cfg.validate();
  const unsigned n = cfg.n, w = cfg.fmt.total_bits, wdv = cfg.d_bits(), wd = cfg.var_bits(), wbd = cfg.bd_bits();

  if (variant == LayerNormVariant::Reduced) {
    CircuitBuilder b(wd + n * (wbd + w), wd + n * wbd);
    const Word var = b.add(b.input_a(0, wd), b.input_b(0, wd));
    std::vector<Word> mags(n);
    std::vector<Sig> negs(n);
    for (unsigned i = 0; i < n; ++i) {
      const Word bd = b.add(b.input_a(wd + i * wbd, wbd), b.input_b(wd + i * wbd, wbd));
      mags[i] = slice(b.abs_signed(bd), 0, wbd - 1);
      negs[i] = bd.back();
    }
    const auto y = layernorm_core(b, cfg, var, mags, negs);
    Word outs;
    for (unsigned i = 0; i < n; ++i) {
      const Word out = b.sub(y[i], b.input_a(wd + n * wbd + i * w, w));
      outs.insert(outs.end(), out.begin(), out.end());
    }
    return b.build(outs);
  }

  const bool shared = variant == LayerNormVariant::FullShared;
  const unsigned a_bits = shared ? 2 * n * w : n * w;
  const unsigned b_bits = shared ? 3 * n * w : 2 * n * w;
  const unsigned b_param = shared ? n * w : 0;
  CircuitBuilder b(a_bits, b_bits);

  std::vector<Word> x(n);
  for (unsigned i = 0; i < n; ++i) {
    x[i] = b.input_a(i * w, w);
    if (shared) x[i] = b.add(x[i], b.input_b(i * w, w));
  }

  Word sum(wdv);
  for (unsigned i = 0; i < n; ++i) sum = b.add(sum, sext(x[i], wdv));
  const Word n_word = const_word(n, static_cast<unsigned>(std::bit_width(n)));
  Word var(wd);
  std::vector<Word> d(n), dmag(n);
  for (unsigned i = 0; i < n; ++i) {
    d[i] = b.sub(b.mul_conventional(sext(x[i], wdv), n_word, wdv), sum);
    dmag[i] = slice(b.abs_signed(d[i]), 0, wdv - 1);
    var = b.add(var, b.mul_xfbq(dmag[i], dmag[i], wd));
  }

  std::vector<Word> mags(n);
  std::vector<Sig> negs(n);
  for (unsigned i = 0; i < n; ++i) {
    const Word beta = b.input_b(b_param + i * w, w);
    mags[i] = b.mul_xfbq(b.abs_signed(beta), dmag[i], wbd - 1);
    negs[i] = b.XOR(beta.back(), d[i].back());
  }
  const auto core = layernorm_core(b, cfg, var, mags, negs);
  Word outs;
  for (unsigned i = 0; i < n; ++i) {
    Word y = b.add(core[i], b.input_b(b_param + (n + i) * w, w));
    if (shared) y = b.sub(y, b.input_a(n * w + i * w, w));
    outs.insert(outs.end(), y.begin(), y.end());
  }
  return b.build(outs);
}

}  // namespace gcx
