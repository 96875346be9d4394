#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "gcx/netlist.hpp"

namespace gcx {

/// A boolean signal during construction: a constant or a wire, possibly inverted.
class Sig {
 public:
  constexpr Sig() = default;
  static constexpr Sig constant(bool v) { return Sig(v ? 1 : 0); }
  static constexpr Sig wire(WireId w, bool negated = false) {
    return Sig(((static_cast<std::uint64_t>(w) + 1) << 1) | (negated ? 1 : 0));
  }

  constexpr bool is_const() const { return (code_ >> 1) == 0; }
  constexpr bool const_value() const { return (code_ & 1) != 0; }
  constexpr WireId wire_id() const { return static_cast<WireId>((code_ >> 1) - 1); }
  constexpr bool negated() const { return (code_ & 1) != 0; }

  constexpr Sig operator!() const { return Sig(code_ ^ 1); }
  constexpr bool operator==(const Sig&) const = default;

 private:
  constexpr explicit Sig(std::uint64_t code) : code_(code) {}
  std::uint64_t code_ = 0;
};

/// Little-endian bit vector of signals.
using Word = std::vector<Sig>;

Word const_word(std::uint64_t value, unsigned width);
Word zext(const Word& x, unsigned width);
Word sext(const Word& x, unsigned width);
Word slice(const Word& x, unsigned lo, unsigned width);
Word concat(const Word& lo, const Word& hi);
/// Logical shifts by a constant, width preserved.
Word shl(const Word& x, unsigned k);
Word shr(const Word& x, unsigned k);
Word not_word(const Word& x);

/*
 * Incremental netlist construction with constant folding. Negation is free:
 * it is carried on the signal and only materialized as an INV gate where an
 * AND input or a circuit output needs the inverted value. XOR of constants
 * and of a wire with itself fold away. build() drops gates that do not reach
 * an output.
 */
class CircuitBuilder {
 public:
  CircuitBuilder(std::uint32_t inputs_a, std::uint32_t inputs_b);

  std::uint32_t input_count() const { return inputs_a_ + inputs_b_; }
  Sig input(std::uint32_t index) const;
  Word input_a(std::uint32_t offset, unsigned width) const;
  Word input_b(std::uint32_t offset, unsigned width) const;

  Sig XOR(Sig a, Sig b);
  Sig AND(Sig a, Sig b);
  Sig OR(Sig a, Sig b) { return !AND(!a, !b); }
  /// s ? b : a
  Sig MUX(Sig s, Sig a, Sig b) { return XOR(a, AND(s, XOR(a, b))); }

  // Word arithmetic. Widths of the two operands must match unless noted.
  Word xor_words(const Word& x, const Word& y);
  Word and_bit(const Word& x, Sig s);
  Word add(const Word& x, const Word& y, Sig carry_in = Sig{}, Sig* carry_out = nullptr);
  Word sub(const Word& x, const Word& y, Sig* borrow_out = nullptr);
  Word neg(const Word& x);
  /// s ? -x : x
  Word cond_negate(const Word& x, Sig s);
  /// Magnitude of a two's-complement word (same width, unsigned result).
  Word abs_signed(const Word& x) { return cond_negate(x, x.back()); }
  Word mux(Sig s, const Word& if0, const Word& if1);
  Sig lt_unsigned(const Word& x, const Word& y);
  Sig lt_signed(const Word& x, const Word& y);
  Sig ge_const_signed(const Word& x, std::int64_t c);
  Sig ge_const_unsigned(const Word& x, std::uint64_t c);
  Sig eq(const Word& x, const Word& y);
  Sig is_zero(const Word& x);
  Sig any(const Word& x) { return !is_zero(x); }
  Word max_signed(const Word& x, const Word& y) { return mux(lt_signed(x, y), x, y); }

  /// Barrel shifts by a variable unsigned amount; bits shifted out are dropped.
  Word shr_var(const Word& x, const Word& amount, bool arithmetic = false);
  Word shl_var(const Word& x, const Word& amount);

  /// One-hot decode of an unsigned selector (2^width outputs).
  std::vector<Sig> decode(const Word& sel);
  /// Selects a constant per one-hot line: XOR of the lines whose constant has bit i set.
  Word select_const(std::span<const Sig> onehot, std::span<const std::uint64_t> values, unsigned width);

  /// Unsigned array multiplier with AND partial products; product mod 2^out_width.
  Word mul_conventional(const Word& x, const Word& y, unsigned out_width);
  /// Unsigned multiplier with XOR-friendly (±1 digit) partial products; see xfbq.hpp.
  Word mul_xfbq(const Word& x, const Word& y, unsigned out_width, bool qerror_correction = true);
  /// Core of mul_xfbq: the product of the converted operands, mod 2^out_width.
  Word mul_xfbq_core(const Word& x, const Word& y, unsigned out_width);
  /// Correction from the converted-operand product to the exact product.
  Word xfbq_correction(const Word& x, const Word& y, const Word& core);

  std::size_t gate_count() const { return gates_.size(); }

  /// Finalizes; constant, input, inverted or repeated outputs get buffer gates.
  Netlist build(std::span<const Sig> outputs) const;

 private:
  WireId emit(GateKind kind, WireId a, WireId b);
  WireId materialize(Sig s);

  std::uint32_t inputs_a_;
  std::uint32_t inputs_b_;
  std::vector<Gate> gates_;
  std::unordered_map<WireId, WireId> inverted_;
};

}  // namespace gcx
