#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcx/block.hpp"
#include "gcx/netlist.hpp"

namespace gcx {

using Label = Block;

/// Reference to a wire of a folded netlist, possibly with inverted meaning.
struct WireRef {
  WireId wire = kNoWire;
  bool flip = false;
  bool operator==(const WireRef&) const = default;
};

/*
 * INV-free form of a netlist. INV gates are removed and their outputs are
 * aliased to the inverted input; each AND/XOR input slot records whether it
 * reads its wire inverted. Gate k drives wire input_count() + k.
 */
struct FoldedNetlist {
  std::uint32_t inputs_a = 0;
  std::uint32_t inputs_b = 0;
  std::vector<Gate> gates;
  std::vector<std::array<std::uint8_t, 2>> input_flip;
  std::vector<WireRef> outputs;
  /// Original wire id -> folded wire and inversion.
  std::vector<WireRef> wire_map;

  std::uint32_t input_count() const { return inputs_a + inputs_b; }
  std::uint32_t wire_count() const { return input_count() + static_cast<std::uint32_t>(gates.size()); }
  std::size_t and_count() const;
};

FoldedNetlist fold_inv(const Netlist& n);

Bits eval_plain(const FoldedNetlist& n, std::span<const std::uint8_t> inputs);
std::vector<std::uint64_t> eval_plain_packed(const FoldedNetlist& n, std::span<const std::uint64_t> inputs);

struct GarbledGate {
  Label row_g;
  Label row_e;
  bool operator==(const GarbledGate&) const = default;
};

struct OutputDecoder {
  std::uint8_t bit = 0;  // color of the zero label
  std::uint64_t check0 = 0;
  std::uint64_t check1 = 0;
  bool operator==(const OutputDecoder&) const = default;
};

/// Everything the evaluator receives: one table per AND gate in netlist order
/// and per-output decoding material.
struct GarbledCircuit {
  std::vector<GarbledGate> tables;
  std::vector<OutputDecoder> decode;
  bool operator==(const GarbledCircuit&) const = default;

  std::size_t table_bytes() const { return tables.size() * 32; }
};

/// Garbler-side secrets. `wire_zero` holds the zero label of every folded
/// wire, exposed for audits and the accelerator model.
struct GarblerKeys {
  Label delta;
  std::vector<Label> input_zero;
  std::vector<Label> wire_zero;
  std::vector<Label> output_zero;  // zero labels of the (possibly inverted) outputs
};

struct GarbleResult {
  GarbledCircuit circuit;
  GarblerKeys keys;
  std::uint64_t hash_calls = 0;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Half-Gate tweaks for AND gate `gate_index` of the folded netlist.
constexpr std::uint64_t tweak_g(std::uint64_t gate_index) { return 2 * gate_index; }
constexpr std::uint64_t tweak_e(std::uint64_t gate_index) { return 2 * gate_index + 1; }

/// Garbles one AND gate; returns the output zero label.
Label garble_and(FixedKeyHash& h, const Label& delta, const Label& a0, const Label& b0, std::uint64_t gate_index,
                 GarbledGate& table);
/// Evaluates one AND gate on active labels.
Label evaluate_and(FixedKeyHash& h, const Label& a, const Label& b, std::uint64_t gate_index,
                   const GarbledGate& table);

/// Delta and input zero labels, in the order garble() draws them; wire_zero holds the inputs only.
GarblerKeys draw_keys(std::uint32_t n_inputs, Prg& prg);

GarbleResult garble(const FoldedNetlist& n, std::uint64_t seed);
GarbleResult garble(const FoldedNetlist& n, Prg& prg, FixedKeyHash& h);

/// Label selection for plaintext inputs (stand-in for label delivery/OT).
std::vector<Label> encode_inputs(const GarblerKeys& keys, std::span<const std::uint8_t> bits);

/// Returns active labels of the outputs; `hash_calls` (if given) receives the count.
std::vector<Label> evaluate(const FoldedNetlist& n, const GarbledCircuit& gc, std::span<const Label> inputs,
                            std::uint64_t* hash_calls = nullptr);
std::vector<Label> evaluate(const FoldedNetlist& n, const GarbledCircuit& gc, std::span<const Label> inputs,
                            FixedKeyHash& h);

/// Throws IntegrityError when a label matches neither candidate.
Bits decode(std::span<const Label> labels, std::span<const OutputDecoder> decoders);
std::uint8_t decode_one(const Label& label, const OutputDecoder& d);

std::uint64_t label_digest(const Label& l);

// Serialization: 32-byte header, then little-endian 128-bit rows (row_g,
// row_e per AND gate), then decoders; garbler keys optionally appended.
void write_garbled(std::ostream& out, const GarbledCircuit& gc, std::uint32_t n_inputs,
                   const GarblerKeys* keys = nullptr);
struct GarbledFile {
  GarbledCircuit circuit;
  std::uint32_t n_inputs = 0;
  bool has_keys = false;
  GarblerKeys keys;
};
GarbledFile read_garbled(std::istream& in);

}  // namespace gcx
