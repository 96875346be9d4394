#include "gcx/garble.hpp"

#include <algorithm>
#include <cstring>
#include <istream>
#include <ostream>

namespace gcx {

std::size_t FoldedNetlist::and_count() const {
  return static_cast<std::size_t>(
      std::count_if(gates.begin(), gates.end(), [](const Gate& g) { return g.kind == GateKind::And; }));
}

FoldedNetlist fold_inv(const Netlist& n) {
  FoldedNetlist f;
  f.inputs_a = n.inputs_a();
  f.inputs_b = n.inputs_b();
  const std::uint32_t nin = n.input_count();
  f.wire_map.resize(n.wire_count());
  for (std::uint32_t i = 0; i < nin; ++i) f.wire_map[i] = {i, false};
  for (const Gate& g : n.gates()) {
    const WireRef a = f.wire_map[g.in0];
    if (g.kind == GateKind::Inv) {
      f.wire_map[g.out] = {a.wire, !a.flip};
      continue;
    }
    const WireRef b = f.wire_map[g.in1];
    const auto out = static_cast<WireId>(nin + f.gates.size());
    f.gates.push_back({g.kind, a.wire, b.wire, out});
    f.input_flip.push_back({static_cast<std::uint8_t>(a.flip), static_cast<std::uint8_t>(b.flip)});
    f.wire_map[g.out] = {out, false};
  }
  for (WireId w : n.output_wires()) f.outputs.push_back(f.wire_map[w]);
  return f;
}

Bits eval_plain(const FoldedNetlist& n, std::span<const std::uint8_t> inputs) {
  if (inputs.size() != n.input_count()) throw NetlistError("input length mismatch");
  std::vector<std::uint8_t> w(n.wire_count(), 0);
  for (std::size_t i = 0; i < inputs.size(); ++i) w[i] = inputs[i] & 1;
  for (std::size_t k = 0; k < n.gates.size(); ++k) {
    const Gate& g = n.gates[k];
    const std::uint8_t a = w[g.in0] ^ n.input_flip[k][0];
    const std::uint8_t b = w[g.in1] ^ n.input_flip[k][1];
    w[g.out] = g.kind == GateKind::And ? (a & b) : (a ^ b);
  }
  Bits out;
  out.reserve(n.outputs.size());
  for (const WireRef& o : n.outputs) out.push_back(w[o.wire] ^ static_cast<std::uint8_t>(o.flip));
  return out;
}

std::vector<std::uint64_t> eval_plain_packed(const FoldedNetlist& n, std::span<const std::uint64_t> inputs) {
  if (inputs.size() != n.input_count()) throw NetlistError("input length mismatch");
  std::vector<std::uint64_t> w(n.wire_count(), 0);
  std::copy(inputs.begin(), inputs.end(), w.begin());
  for (std::size_t k = 0; k < n.gates.size(); ++k) {
    const Gate& g = n.gates[k];
    const std::uint64_t a = w[g.in0] ^ (0 - static_cast<std::uint64_t>(n.input_flip[k][0]));
    const std::uint64_t b = w[g.in1] ^ (0 - static_cast<std::uint64_t>(n.input_flip[k][1]));
    w[g.out] = g.kind == GateKind::And ? (a & b) : (a ^ b);
  }
  std::vector<std::uint64_t> out;
  for (const WireRef& o : n.outputs) out.push_back(w[o.wire] ^ (o.flip ? ~0ull : 0ull));
  return out;
}

Label garble_and(FixedKeyHash& h, const Label& delta, const Label& a0, const Label& b0, std::uint64_t gate_index,
                 GarbledGate& table) {
  const bool pa = a0.color();
  const bool pb = b0.color();
  const std::uint64_t j0 = tweak_g(gate_index);
  const std::uint64_t j1 = tweak_e(gate_index);
  const Label ha0 = h(a0, j0);
  const Label ha1 = h(a0 ^ delta, j0);
  const Label hb0 = h(b0, j1);
  const Label hb1 = h(b0 ^ delta, j1);

  // Generator half: a AND pb.
  table.row_g = ha0 ^ ha1 ^ delta.select(pb);
  const Label wg0 = ha0 ^ table.row_g.select(pa);
  // Evaluator half: a AND (b XOR pb).
  table.row_e = hb0 ^ hb1 ^ a0;
  const Label we0 = hb0 ^ (table.row_e ^ a0).select(pb);
  return wg0 ^ we0;
}

Label evaluate_and(FixedKeyHash& h, const Label& a, const Label& b, std::uint64_t gate_index,
                   const GarbledGate& table) {
  const Label wg = h(a, tweak_g(gate_index)) ^ table.row_g.select(a.color());
  const Label we = h(b, tweak_e(gate_index)) ^ (table.row_e ^ a).select(b.color());
  return wg ^ we;
}

namespace {
FixedKeyHash& digest_hash() {
  thread_local FixedKeyHash h(Block{0x452821e638d01377ull, 0xbe5466cf34e90c6cull});
  return h;
}
}  // namespace

std::uint64_t label_digest(const Label& l) { return digest_hash()(l, 0).lo; }

GarblerKeys draw_keys(std::uint32_t n_inputs, Prg& prg) {
  GarblerKeys k;
  k.delta = prg.next();
  k.delta.lo |= 1;
  k.input_zero.resize(n_inputs);
  for (auto& l : k.input_zero) l = prg.next();
  k.wire_zero = k.input_zero;
  return k;
}

GarbleResult garble(const FoldedNetlist& n, Prg& prg, FixedKeyHash& h) {
  const std::uint64_t start_calls = h.calls();
  GarbleResult r;
  GarblerKeys& k = r.keys;
  k = draw_keys(n.input_count(), prg);
  k.wire_zero.resize(n.wire_count());

  r.circuit.tables.reserve(n.and_count());
  for (std::size_t gi = 0; gi < n.gates.size(); ++gi) {
    const Gate& g = n.gates[gi];
    const Label a0 = k.wire_zero[g.in0] ^ k.delta.select(n.input_flip[gi][0]);
    const Label b0 = k.wire_zero[g.in1] ^ k.delta.select(n.input_flip[gi][1]);
    if (g.kind == GateKind::Xor) {
      k.wire_zero[g.out] = a0 ^ b0;
    } else {
      GarbledGate t;
      k.wire_zero[g.out] = garble_and(h, k.delta, a0, b0, gi, t);
      r.circuit.tables.push_back(t);
    }
  }
  for (const WireRef& o : n.outputs) {
    const Label z = k.wire_zero[o.wire] ^ k.delta.select(o.flip);
    k.output_zero.push_back(z);
    r.circuit.decode.push_back({static_cast<std::uint8_t>(z.color()), label_digest(z), label_digest(z ^ k.delta)});
  }
  r.hash_calls = h.calls() - start_calls;
  return r;
}

GarbleResult garble(const FoldedNetlist& n, std::uint64_t seed) {
  Prg prg(seed);
  FixedKeyHash h;
  return garble(n, prg, h);
}

std::vector<Label> encode_inputs(const GarblerKeys& keys, std::span<const std::uint8_t> bits) {
  if (bits.size() != keys.input_zero.size()) throw NetlistError("input length mismatch");
  std::vector<Label> out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) out[i] = keys.input_zero[i] ^ keys.delta.select(bits[i] & 1);
  return out;
}

std::vector<Label> evaluate(const FoldedNetlist& n, const GarbledCircuit& gc, std::span<const Label> inputs,
                            FixedKeyHash& h) {
  if (inputs.size() != n.input_count()) throw NetlistError("expected one label per input wire");
  if (gc.tables.size() != n.and_count())
    throw IntegrityError("table count " + std::to_string(gc.tables.size()) + " does not match AND count " +
                         std::to_string(n.and_count()));
  std::vector<Label> w(n.wire_count());
  std::copy(inputs.begin(), inputs.end(), w.begin());
  std::size_t t = 0;
  for (std::size_t gi = 0; gi < n.gates.size(); ++gi) {
    const Gate& g = n.gates[gi];
    if (g.kind == GateKind::Xor) {
      w[g.out] = w[g.in0] ^ w[g.in1];
    } else {
      w[g.out] = evaluate_and(h, w[g.in0], w[g.in1], gi, gc.tables[t++]);
    }
  }
  std::vector<Label> out;
  out.reserve(n.outputs.size());
  for (const WireRef& o : n.outputs) out.push_back(w[o.wire]);
  return out;
}

std::vector<Label> evaluate(const FoldedNetlist& n, const GarbledCircuit& gc, std::span<const Label> inputs,
                            std::uint64_t* hash_calls) {
  FixedKeyHash h;
  auto out = evaluate(n, gc, inputs, h);
  if (hash_calls) *hash_calls = h.calls();
  return out;
}

std::uint8_t decode_one(const Label& label, const OutputDecoder& d) {
  const std::uint8_t v = static_cast<std::uint8_t>(label.color()) ^ d.bit;
  const std::uint64_t dg = label_digest(label);
  if (dg != (v ? d.check1 : d.check0)) throw IntegrityError("output label matches neither candidate");
  return v;
}

Bits decode(std::span<const Label> labels, std::span<const OutputDecoder> decoders) {
  if (labels.size() != decoders.size()) throw IntegrityError("label/decoder count mismatch");
  Bits out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = decode_one(labels[i], decoders[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'G', 'C', 'X', 'T', 'B', 'L', 0, 0};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 4);
}
void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 8);
}
void put_block(std::ostream& out, const Block& v) {
  put_u64(out, v.lo);
  put_u64(out, v.hi);
}

struct Reader {
  std::istream& in;
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw IntegrityError("truncated garbled-circuit file");
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint8_t b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  Block block() {
    Block b;
    b.lo = u64();
    b.hi = u64();
    return b;
  }
};

}  // namespace

void write_garbled(std::ostream& out, const GarbledCircuit& gc, std::uint32_t n_inputs, const GarblerKeys* keys) {
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(gc.tables.size()));
  put_u32(out, n_inputs);
  put_u32(out, static_cast<std::uint32_t>(gc.decode.size()));
  put_u32(out, keys ? 1u : 0u);
  put_u32(out, 0);
  for (const auto& t : gc.tables) {
    put_block(out, t.row_g);
    put_block(out, t.row_e);
  }
  for (const auto& d : gc.decode) {
    put_u64(out, d.check0);
    put_u64(out, d.check1);
    put_u64(out, d.bit);
  }
  if (keys) {
    put_block(out, keys->delta);
    for (const auto& z : keys->input_zero) put_block(out, z);
  }
}

GarbledFile read_garbled(std::istream& in) {
  Reader r{in};
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IntegrityError("bad garbled-circuit magic");
  if (r.u32() != kVersion) throw IntegrityError("unsupported garbled-circuit version");
  GarbledFile f;
  const std::uint32_t n_and = r.u32();
  f.n_inputs = r.u32();
  const std::uint32_t n_out = r.u32();
  f.has_keys = (r.u32() & 1) != 0;
  r.u32();
  f.circuit.tables.resize(n_and);
  for (auto& t : f.circuit.tables) {
    t.row_g = r.block();
    t.row_e = r.block();
  }
  f.circuit.decode.resize(n_out);
  for (auto& d : f.circuit.decode) {
    d.check0 = r.u64();
    d.check1 = r.u64();
    d.bit = static_cast<std::uint8_t>(r.u64() & 1);
  }
  if (f.has_keys) {
    f.keys.delta = r.block();
    f.keys.input_zero.resize(f.n_inputs);
    for (auto& z : f.keys.input_zero) z = r.block();
  }
  return f;
}

}  // namespace gcx
