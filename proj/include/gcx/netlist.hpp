#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gcx {

using WireId = std::uint32_t;
using Bits = std::vector<std::uint8_t>;

inline constexpr WireId kNoWire = 0xffffffffu;

enum class GateKind : std::uint8_t { And, Xor, Inv };

std::string_view to_string(GateKind kind);

struct Gate {
  GateKind kind = GateKind::And;
  WireId in0 = kNoWire;
  WireId in1 = kNoWire;  // kNoWire for INV
  WireId out = kNoWire;

  bool operator==(const Gate&) const = default;
};

class NetlistError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the Bristol reader; carries the 1-based line number.
class ParseError : public NetlistError {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/*
 * A boolean circuit over AND/XOR/INV gates in canonical wire numbering:
 *
 *   [0, n_inputs)                      circuit inputs (party A first, then B)
 *   [n_inputs, n_wires - n_outputs)    internal wires, numbered in gate order
 *   [n_wires - n_outputs, n_wires)     circuit outputs, in output order
 *
 * Every non-input wire is driven by exactly one gate and the gate list is a
 * topological order. Instances are immutable once built.
 */
class Netlist {
 public:
  Netlist() = default;

  /// Validates canonical numbering; throws NetlistError otherwise.
  Netlist(std::uint32_t inputs_a, std::uint32_t inputs_b, std::uint32_t outputs,
          std::vector<Gate> gates);

  /*
   * Builds a canonical netlist from gates using arbitrary (unique) wire ids.
   * Inputs are [0, inputs_a + inputs_b); `output_wires` lists the wires to
   * expose as outputs, in order. Gates must already be topologically ordered.
   */
  static Netlist from_raw(std::uint32_t inputs_a, std::uint32_t inputs_b,
                          std::span<const WireId> output_wires, std::span<const Gate> gates);

  std::uint32_t inputs_a() const { return inputs_a_; }
  std::uint32_t inputs_b() const { return inputs_b_; }
  std::uint32_t input_count() const { return inputs_a_ + inputs_b_; }
  std::uint32_t output_count() const { return outputs_; }
  std::uint32_t wire_count() const { return input_count() + static_cast<std::uint32_t>(gates_.size()); }
  std::span<const Gate> gates() const { return gates_; }
  std::size_t gate_count() const { return gates_.size(); }

  WireId output_wire(std::uint32_t i) const { return wire_count() - outputs_ + i; }
  std::vector<WireId> output_wires() const;

  bool operator==(const Netlist&) const = default;

 private:
  std::uint32_t inputs_a_ = 0;
  std::uint32_t inputs_b_ = 0;
  std::uint32_t outputs_ = 0;
  std::vector<Gate> gates_;
};

Netlist parse_bristol(std::istream& in);
Netlist parse_bristol(std::string_view text);
Netlist read_bristol_file(const std::string& path);

void emit_bristol(const Netlist& n, std::ostream& out);
std::string emit_bristol(const Netlist& n);
void write_bristol_file(const Netlist& n, const std::string& path);

/// Plaintext evaluation; inputs are party A bits followed by party B bits.
Bits eval_plain(const Netlist& n, std::span<const std::uint8_t> inputs);

/// Bit-sliced evaluation of 64 input vectors at once: lane k of every word is
/// one independent evaluation.
std::vector<std::uint64_t> eval_plain_packed(const Netlist& n, std::span<const std::uint64_t> inputs);

/// Places netlists side by side: inputs A concatenated, then inputs B, then
/// gates, then outputs, each block in argument order.
Netlist concat_parallel(std::span<const Netlist> parts);

struct LatencyMap {
  std::uint32_t and_cycles = 18;
  std::uint32_t xor_cycles = 1;
  std::uint32_t inv_cycles = 0;

  static LatencyMap evaluation() { return {18, 1, 0}; }
  static LatencyMap garbling() { return {21, 1, 0}; }

  std::uint32_t of(GateKind k) const {
    switch (k) {
      case GateKind::And: return and_cycles;
      case GateKind::Xor: return xor_cycles;
      case GateKind::Inv: return inv_cycles;
    }
    return 0;
  }
};

/*
 * Gate-level dependency graph. Node i is gate i; an edge (p, c) exists for
 * every input slot of c driven by p, so a gate reading the same producer on
 * both inputs contributes two edges.
 */
struct CircuitDag {
  std::vector<std::uint32_t> weight;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  // CSR successor lists (deduplicated per producer/consumer pair).
  std::vector<std::uint32_t> succ_offset;
  std::vector<std::uint32_t> succ;
  // Up to two distinct producers per gate; kNoWire marks an absent slot.
  std::vector<std::array<std::uint32_t, 2>> pred;

  std::size_t size() const { return weight.size(); }
  std::span<const std::uint32_t> successors(std::uint32_t g) const {
    return {succ.data() + succ_offset[g], succ.data() + succ_offset[g + 1]};
  }
};

CircuitDag build_dag(std::span<const Gate> gates, std::uint32_t n_inputs, const LatencyMap& latency);
CircuitDag build_dag(const Netlist& n, const LatencyMap& latency);

/// True if `order` is a permutation of [0, gates.size()) in which every gate
/// comes after the producers of its inputs.
bool is_topological(std::span<const Gate> gates, std::uint32_t n_inputs, std::span<const std::uint32_t> order);

}  // namespace gcx
