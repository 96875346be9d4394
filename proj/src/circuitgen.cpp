#include "gcx/circuitgen.hpp"

#include <algorithm>
#include <stdexcept>

#include "gcx/builder.hpp"

namespace gcx {

GateCensus census(const Netlist& n) {
  GateCensus c;
  for (const Gate& g : n.gates()) {
    switch (g.kind) {
      case GateKind::And: ++c.and_count; break;
      case GateKind::Xor: ++c.xor_count; break;
      case GateKind::Inv: ++c.inv_count; break;
    }
  }
  c.total = c.and_count + c.xor_count + c.inv_count;
  return c;
}

std::string census_json(const GateCensus& c) {
  return "{\"and\":" + std::to_string(c.and_count) + ",\"xor\":" + std::to_string(c.xor_count) +
         ",\"inv\":" + std::to_string(c.inv_count) + ",\"total\":" + std::to_string(c.total) + "}";
}

namespace {

unsigned checked_width(const FixedPointFormat& fmt) {
  fmt.validate();
  return fmt.total_bits;
}

template <class F>
Netlist binary_op(const FixedPointFormat& fmt, F&& body) {
  const unsigned n = checked_width(fmt);
  CircuitBuilder b(n, n);
  const Word x = b.input_a(0, n);
  const Word y = b.input_b(0, n);
  const Word out = body(b, x, y);
  return b.build(out);
}

}  // namespace

Netlist gen_adder(const FixedPointFormat& fmt) {
  return binary_op(fmt, [](CircuitBuilder& b, const Word& x, const Word& y) { return b.add(x, y); });
}

Netlist gen_sub(const FixedPointFormat& fmt) {
  return binary_op(fmt, [](CircuitBuilder& b, const Word& x, const Word& y) { return b.sub(x, y); });
}

Netlist gen_comparator(const FixedPointFormat& fmt) {
  return binary_op(fmt, [&](CircuitBuilder& b, const Word& x, const Word& y) {
    const Sig lt = fmt.is_signed ? b.lt_signed(x, y) : b.lt_unsigned(x, y);
    return Word{lt, b.eq(x, y)};
  });
}

Netlist gen_mul_conventional(const FixedPointFormat& fmt) {
  return binary_op(fmt, [](CircuitBuilder& b, const Word& x, const Word& y) {
    return b.mul_conventional(x, y, static_cast<unsigned>(x.size()));
  });
}

Netlist gen_mul_conventional_full(const FixedPointFormat& fmt) {
  return binary_op(fmt, [](CircuitBuilder& b, const Word& x, const Word& y) {
    return b.mul_conventional(x, y, static_cast<unsigned>(2 * x.size()));
  });
}

Netlist gen_mul_xfbq(const FixedPointFormat& fmt, bool qerror_correction, bool full_width) {
  return binary_op(fmt, [&](CircuitBuilder& b, const Word& x, const Word& y) {
    const auto w = static_cast<unsigned>(full_width ? 2 * x.size() : x.size());
    return b.mul_xfbq(x, y, w, qerror_correction);
  });
}

Netlist gen_xfbq_correction_block(const FixedPointFormat& fmt, bool full_width) {
  const unsigned n = checked_width(fmt);
  const unsigned w = full_width ? 2 * n : n;
  // The converted operands are odd, so bit 0 of their product is always set.
  CircuitBuilder b(2 * n, w - 1);
  const Word x = b.input_a(0, n);
  const Word y = b.input_a(n, n);
  const Word core = concat({Sig::constant(true)}, b.input_b(0, w - 1));
  return b.build(b.xfbq_correction(x, y, core));
}

std::int64_t XfbqNumber::value() const {
  std::int64_t v = 0;
  for (unsigned i = 0; i < width; ++i) v += ((bits >> i) & 1) ? (std::int64_t{1} << i) : -(std::int64_t{1} << i);
  return v;
}

XfbqNumber xfbq_convert_value(std::uint64_t a, unsigned width) {
  if (width < 1 || width > 62) throw std::invalid_argument("xfbq width must be in [1, 62]");
  if (a >> width) throw std::out_of_range("value does not fit the width");
  return {(a >> 1) | (std::uint64_t{1} << (width - 1)), width};
}

Netlist gen_identity(const FixedPointFormat& fmt) {
  const unsigned n = checked_width(fmt);
  CircuitBuilder b(n, 0);
  return b.build(b.input_a(0, n));
}

std::vector<Sig> embed_netlist(CircuitBuilder& b, const Netlist& f, std::span<const Sig> inputs) {
  if (inputs.size() != f.input_count()) throw std::invalid_argument("embed: input count mismatch");
  std::vector<Sig> wire(f.wire_count());
  std::copy(inputs.begin(), inputs.end(), wire.begin());
  for (const Gate& g : f.gates()) {
    switch (g.kind) {
      case GateKind::And: wire[g.out] = b.AND(wire[g.in0], wire[g.in1]); break;
      case GateKind::Xor: wire[g.out] = b.XOR(wire[g.in0], wire[g.in1]); break;
      case GateKind::Inv: wire[g.out] = !wire[g.in0]; break;
    }
  }
  std::vector<Sig> out;
  for (WireId w : f.output_wires()) out.push_back(wire[w]);
  return out;
}

Netlist gen_shared_unary(const Netlist& f, unsigned width, unsigned count, unsigned share_bits) {
  if (share_bits == 0) share_bits = width;
  if (width == 0 || share_bits < width || share_bits > 64)
    throw std::invalid_argument("shared wrapper: need 0 < width <= share_bits <= 64");
  if (f.inputs_a() != width || f.inputs_b() != 0 || f.output_count() != width)
    throw std::invalid_argument("shared wrapper: element function must map A:" + std::to_string(width) + " bits to " +
                                std::to_string(width) + " bits");
  CircuitBuilder b(count * (width + share_bits), width * count);
  Word out;
  for (unsigned k = 0; k < count; ++k) {
    const Word x = b.add(b.input_a(k * width, width), b.input_b(k * width, width));
    const Word y = sext(embed_netlist(b, f, x), share_bits);
    const Word r = b.sub(y, b.input_a(count * width + k * share_bits, share_bits));
    out.insert(out.end(), r.begin(), r.end());
  }
  return b.build(out);
}

}  // namespace gcx
