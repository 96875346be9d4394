#include "gcx/builder.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>
#include <unordered_set>

namespace gcx {

Word const_word(std::uint64_t value, unsigned width) {
  Word w(width);
  for (unsigned i = 0; i < width; ++i) w[i] = Sig::constant(i < 64 && ((value >> i) & 1));
  return w;
}

Word zext(const Word& x, unsigned width) {
  Word w(width);
  for (unsigned i = 0; i < width && i < x.size(); ++i) w[i] = x[i];
  return w;
}

Word sext(const Word& x, unsigned width) {
  Word w(width, x.empty() ? Sig{} : x.back());
  for (unsigned i = 0; i < width && i < x.size(); ++i) w[i] = x[i];
  return w;
}

Word slice(const Word& x, unsigned lo, unsigned width) {
  Word w(width);
  for (unsigned i = 0; i < width; ++i) w[i] = lo + i < x.size() ? x[lo + i] : Sig{};
  return w;
}

Word concat(const Word& lo, const Word& hi) {
  Word w = lo;
  w.insert(w.end(), hi.begin(), hi.end());
  return w;
}

Word shl(const Word& x, unsigned k) {
  Word w(x.size());
  for (std::size_t i = k; i < x.size(); ++i) w[i] = x[i - k];
  return w;
}

Word shr(const Word& x, unsigned k) { return slice(x, k, static_cast<unsigned>(x.size())); }

Word not_word(const Word& x) {
  Word w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = !x[i];
  return w;
}

CircuitBuilder::CircuitBuilder(std::uint32_t inputs_a, std::uint32_t inputs_b)
    : inputs_a_(inputs_a), inputs_b_(inputs_b) {}

Sig CircuitBuilder::input(std::uint32_t index) const {
  if (index >= input_count()) throw std::out_of_range("builder input index");
  return Sig::wire(index);
}

Word CircuitBuilder::input_a(std::uint32_t offset, unsigned width) const {
  if (offset + width > inputs_a_) throw std::out_of_range("party A input range");
  Word w(width);
  for (unsigned i = 0; i < width; ++i) w[i] = Sig::wire(offset + i);
  return w;
}

Word CircuitBuilder::input_b(std::uint32_t offset, unsigned width) const {
  if (offset + width > inputs_b_) throw std::out_of_range("party B input range");
  Word w(width);
  for (unsigned i = 0; i < width; ++i) w[i] = Sig::wire(inputs_a_ + offset + i);
  return w;
}

WireId CircuitBuilder::emit(GateKind kind, WireId a, WireId b) {
  const auto out = static_cast<WireId>(input_count() + gates_.size());
  gates_.push_back({kind, a, b, out});
  return out;
}

WireId CircuitBuilder::materialize(Sig s) {
  if (!s.negated()) return s.wire_id();
  auto [it, fresh] = inverted_.try_emplace(s.wire_id(), 0);
  if (fresh) it->second = emit(GateKind::Inv, s.wire_id(), kNoWire);
  return it->second;
}

Sig CircuitBuilder::XOR(Sig a, Sig b) {
  if (a.is_const()) return a.const_value() ? !b : b;
  if (b.is_const()) return b.const_value() ? !a : a;
  const bool neg = a.negated() != b.negated();
  if (a.wire_id() == b.wire_id()) return Sig::constant(neg);
  return Sig::wire(emit(GateKind::Xor, a.wire_id(), b.wire_id()), neg);
}

Sig CircuitBuilder::AND(Sig a, Sig b) {
  if (a.is_const()) return a.const_value() ? b : Sig{};
  if (b.is_const()) return b.const_value() ? a : Sig{};
  if (a.wire_id() == b.wire_id()) return a.negated() == b.negated() ? a : Sig{};
  const WireId wa = materialize(a);
  const WireId wb = materialize(b);
  return Sig::wire(emit(GateKind::And, wa, wb));
}

Word CircuitBuilder::xor_words(const Word& x, const Word& y) {
  assert(x.size() == y.size());
  Word w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = XOR(x[i], y[i]);
  return w;
}

Word CircuitBuilder::and_bit(const Word& x, Sig s) {
  Word w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = AND(x[i], s);
  return w;
}

// Full adder with one AND: cout = c ^ ((a ^ c) & (b ^ c)).
Word CircuitBuilder::add(const Word& x, const Word& y, Sig carry_in, Sig* carry_out) {
  if (x.size() != y.size()) throw std::invalid_argument("add: width mismatch");
  const std::size_t n = x.size();
  Word s(n);
  Sig c = carry_in;
  for (std::size_t i = 0; i < n; ++i) {
    const Sig t1 = XOR(x[i], c);
    s[i] = XOR(t1, y[i]);
    if (i + 1 < n || carry_out) c = XOR(c, AND(t1, XOR(y[i], c)));
  }
  if (carry_out) *carry_out = c;
  return s;
}

Word CircuitBuilder::sub(const Word& x, const Word& y, Sig* borrow_out) {
  Sig carry;
  Word d = add(x, not_word(y), Sig::constant(true), borrow_out ? &carry : nullptr);
  if (borrow_out) *borrow_out = !carry;
  return d;
}

Word CircuitBuilder::neg(const Word& x) { return cond_negate(x, Sig::constant(true)); }

Word CircuitBuilder::cond_negate(const Word& x, Sig s) {
  Word flipped(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) flipped[i] = XOR(x[i], s);
  return add(flipped, Word(x.size()), s);
}

Word CircuitBuilder::mux(Sig s, const Word& if0, const Word& if1) {
  if (if0.size() != if1.size()) throw std::invalid_argument("mux: width mismatch");
  Word w(if0.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = MUX(s, if0[i], if1[i]);
  return w;
}

Sig CircuitBuilder::lt_unsigned(const Word& x, const Word& y) {
  if (x.size() != y.size()) throw std::invalid_argument("compare: width mismatch");
  // Carry out of x + ~y + 1 is set iff x >= y.
  Sig c = Sig::constant(true);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Sig ny = !y[i];
    c = XOR(c, AND(XOR(x[i], c), XOR(ny, c)));
  }
  return !c;
}

Sig CircuitBuilder::lt_signed(const Word& x, const Word& y) {
  Word xs = x, ys = y;
  xs.back() = !xs.back();
  ys.back() = !ys.back();
  return lt_unsigned(xs, ys);
}

Sig CircuitBuilder::ge_const_unsigned(const Word& x, std::uint64_t c) {
  const unsigned n = static_cast<unsigned>(x.size());
  if (n < 64 && c >> n) return Sig::constant(false);
  return !lt_unsigned(x, const_word(c, n));
}

Sig CircuitBuilder::ge_const_signed(const Word& x, std::int64_t c) {
  const unsigned n = static_cast<unsigned>(x.size());
  const std::int64_t lo = n >= 64 ? INT64_MIN : -(std::int64_t{1} << (n - 1));
  const std::int64_t hi = n >= 64 ? INT64_MAX : (std::int64_t{1} << (n - 1)) - 1;
  if (c <= lo) return Sig::constant(true);
  if (c > hi) return Sig::constant(false);
  return !lt_signed(x, const_word(static_cast<std::uint64_t>(c), n));
}

Sig CircuitBuilder::is_zero(const Word& x) {
  std::vector<Sig> level;
  for (Sig s : x) level.push_back(!s);
  if (level.empty()) return Sig::constant(true);
  while (level.size() > 1) {
    std::vector<Sig> next;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(AND(level[i], level[i + 1]));
    if (level.size() % 2) next.push_back(level.back());
    level.swap(next);
  }
  return level[0];
}

Sig CircuitBuilder::eq(const Word& x, const Word& y) { return is_zero(xor_words(x, y)); }

Word CircuitBuilder::shr_var(const Word& x, const Word& amount, bool arithmetic) {
  const std::size_t n = x.size();
  const Sig fill = arithmetic && n ? x.back() : Sig{};
  Word cur = x;
  for (std::size_t k = 0; k < amount.size(); ++k) {
    Word shifted(n, fill);
    if (k < 63) {
      const std::size_t sh = std::size_t{1} << k;
      for (std::size_t i = 0; i + sh < n; ++i) shifted[i] = cur[i + sh];
    }
    cur = mux(amount[k], cur, shifted);
  }
  return cur;
}

Word CircuitBuilder::shl_var(const Word& x, const Word& amount) {
  const std::size_t n = x.size();
  Word cur = x;
  for (std::size_t k = 0; k < amount.size(); ++k) {
    Word shifted(n);
    if (k < 63) {
      const std::size_t sh = std::size_t{1} << k;
      for (std::size_t i = sh; i < n; ++i) shifted[i] = cur[i - sh];
    }
    cur = mux(amount[k], cur, shifted);
  }
  return cur;
}

std::vector<Sig> CircuitBuilder::decode(const Word& sel) {
  if (sel.empty()) return {Sig::constant(true)};
  if (sel.size() == 1) return {!sel[0], sel[0]};
  const std::size_t half = sel.size() / 2;
  const auto lo = decode(Word(sel.begin(), sel.begin() + static_cast<std::ptrdiff_t>(half)));
  const auto hi = decode(Word(sel.begin() + static_cast<std::ptrdiff_t>(half), sel.end()));
  std::vector<Sig> out(lo.size() * hi.size());
  for (std::size_t j = 0; j < hi.size(); ++j)
    for (std::size_t i = 0; i < lo.size(); ++i) out[j * lo.size() + i] = AND(lo[i], hi[j]);
  return out;
}

Word CircuitBuilder::select_const(std::span<const Sig> onehot, std::span<const std::uint64_t> values,
                                  unsigned width) {
  if (onehot.size() != values.size()) throw std::invalid_argument("select_const: size mismatch");
  Word w(width);
  for (unsigned b = 0; b < width; ++b)
    for (std::size_t k = 0; k < values.size(); ++k)
      if (b < 64 && ((values[k] >> b) & 1)) w[b] = XOR(w[b], onehot[k]);
  return w;
}

// Accumulates rows[j] << j into an out_width accumulator. Zero bits fold away,
// so only the live span of each row costs gates.
static Word accumulate_rows(CircuitBuilder& b, const std::vector<Word>& rows, unsigned out_width) {
  Word acc(out_width);
  for (std::size_t j = 0; j < rows.size() && j < out_width; ++j) {
    const unsigned len = out_width - static_cast<unsigned>(j);
    Word part = b.add(slice(acc, static_cast<unsigned>(j), len), zext(rows[j], len));
    for (unsigned i = 0; i < len; ++i) acc[j + i] = part[i];
  }
  return acc;
}

Word CircuitBuilder::mul_conventional(const Word& x, const Word& y, unsigned out_width) {
  std::vector<Word> rows;
  for (std::size_t j = 0; j < y.size() && j < out_width; ++j) {
    const std::size_t len = std::min<std::size_t>(x.size(), out_width - j);
    Word r(len);
    for (std::size_t i = 0; i < len; ++i) r[i] = AND(x[i], y[j]);
    rows.push_back(r);
  }
  return accumulate_rows(*this, rows, out_width);
}

/*
 * With digits d = (v >> 1) | msb, the converted operand is
 * v' = sum (2 d_i - 1) 2^i = v | 1. For two such operands the partial
 * products are d_i XNOR e_j (no AND), and
 *   x' y' = 2 P - (2^n - 1)(2^m - 1),   P = sum_{i,j} xnor(d_i, e_j) 2^{i+j}.
 */
Word CircuitBuilder::mul_xfbq_core(const Word& x, const Word& y, unsigned out_width) {
  if (x.empty() || y.empty() || out_width == 0) throw std::invalid_argument("mul_xfbq: empty operand");
  const std::size_t n = x.size(), m = y.size();
  auto digits = [](const Word& v) {
    Word d(v.size());
    for (std::size_t i = 0; i + 1 < v.size(); ++i) d[i] = v[i + 1];
    d.back() = Sig::constant(true);
    return d;
  };
  const Word dx = digits(x), dy = digits(y);
  const unsigned pw = out_width - 1;  // 2P only needs P mod 2^(out_width-1)
  std::vector<Word> rows;
  for (std::size_t j = 0; j < m && j < pw; ++j) {
    const std::size_t len = std::min<std::size_t>(n, pw - j);
    Word r(len);
    for (std::size_t i = 0; i < len; ++i) r[i] = !XOR(dx[i], dy[j]);
    rows.push_back(r);
  }
  Word p2 = shl(zext(accumulate_rows(*this, rows, pw), out_width), 1);
  // Subtract (2^n - 1)(2^m - 1) modulo 2^out_width.
  const unsigned __int128 c = ((static_cast<unsigned __int128>(1) << n) - 1) * ((static_cast<unsigned __int128>(1) << m) - 1);
  const unsigned __int128 negc = -c;
  Word k(out_width);
  for (unsigned i = 0; i < out_width && i < 128; ++i) k[i] = Sig::constant((negc >> i) & 1);
  return add(p2, k);
}

// x y = x'y' - eps_x y' - eps_y x, with eps = !lsb and y' = y | 1.
Word CircuitBuilder::xfbq_correction(const Word& x, const Word& y, const Word& core) {
  const unsigned w = static_cast<unsigned>(core.size());
  Word yhat = y;
  yhat[0] = Sig::constant(true);
  const Word t1 = and_bit(zext(yhat, w), !x[0]);
  const Word t2 = and_bit(zext(x, w), !y[0]);
  return sub(sub(core, t1), t2);
}

Word CircuitBuilder::mul_xfbq(const Word& x, const Word& y, unsigned out_width, bool qerror_correction) {
  Word core = mul_xfbq_core(x, y, out_width);
  return qerror_correction ? xfbq_correction(x, y, core) : core;
}

Netlist CircuitBuilder::build(std::span<const Sig> outputs) const {
  std::vector<Gate> gates = gates_;
  const std::uint32_t nin = input_count();
  auto emit_local = [&](GateKind k, WireId a, WireId b) {
    const auto out = static_cast<WireId>(nin + gates.size());
    gates.push_back({k, a, b, out});
    return out;
  };
  WireId zero = kNoWire;
  auto zero_wire = [&] {
    if (zero == kNoWire) {
      if (nin == 0) throw NetlistError("constant output in a circuit without inputs");
      zero = emit_local(GateKind::Xor, 0, 0);
    }
    return zero;
  };

  std::vector<WireId> outs;
  std::unordered_set<WireId> used;
  for (Sig s : outputs) {
    WireId w;
    if (s.is_const()) {
      w = s.const_value() ? emit_local(GateKind::Inv, zero_wire(), kNoWire) : zero_wire();
      if (used.count(w)) w = emit_local(GateKind::Inv, emit_local(GateKind::Inv, w, kNoWire), kNoWire);
    } else if (s.negated()) {
      w = emit_local(GateKind::Inv, s.wire_id(), kNoWire);
    } else {
      w = s.wire_id();
      if (w < nin || used.count(w)) w = emit_local(GateKind::Inv, emit_local(GateKind::Inv, w, kNoWire), kNoWire);
    }
    used.insert(w);
    outs.push_back(w);
  }

  // Keep only gates that reach an output.
  std::vector<std::uint8_t> live(gates.size(), 0);
  for (WireId w : outs)
    if (w >= nin) live[w - nin] = 1;
  for (std::size_t k = gates.size(); k-- > 0;) {
    if (!live[k]) continue;
    const Gate& g = gates[k];
    if (g.in0 != kNoWire && g.in0 >= nin) live[g.in0 - nin] = 1;
    if (g.in1 != kNoWire && g.in1 >= nin) live[g.in1 - nin] = 1;
  }
  std::vector<Gate> kept;
  for (std::size_t k = 0; k < gates.size(); ++k)
    if (live[k]) kept.push_back(gates[k]);
  return Netlist::from_raw(inputs_a_, inputs_b_, outs, kept);
}

}  // namespace gcx
