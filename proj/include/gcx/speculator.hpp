#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcx/garble.hpp"
#include "gcx/scheduler.hpp"

namespace gcx {

/*
 * Compile-time instruction generation for one core's gate stream.
 *
 * Phase 1 walks the stream with an abstract Wire Memory: each step preempts
 * a write address, resolves both reads (a miss loads the wire from DRAM into
 * a freed address and becomes an out-of-range-wire record), then writes.
 * Victims are the resident wire whose next read is furthest away.
 * Phase 2 attaches each record's fetch to the last earlier instruction that
 * reads the record's target address, and sets Live and WEN bits.
 */

inline constexpr unsigned kAddrBits = 13;
inline constexpr std::uint32_t kMaxWireMem = 1u << kAddrBits;

enum class OpKind : std::uint8_t { HalfGate = 0, FreeXor = 1 };

struct AccelInstruction {
  std::uint32_t gate = 0;  // folded gate index; not part of the binary word
  OpKind op = OpKind::FreeXor;
  std::uint32_t write_addr = 0;
  std::uint32_t read_addr[2] = {0, 0};
  bool live = false;
  bool wen = false;  // set: the result bypasses Wire Memory
  bool fetch[2] = {false, false};

  bool operator==(const AccelInstruction&) const = default;
};

std::uint64_t encode_instruction(const AccelInstruction& in);
/// Throws std::invalid_argument when reserved bits are set.
AccelInstruction decode_instruction(std::uint64_t word);

/// Per wire, the ascending stream positions that read it (each position once).
std::vector<std::vector<std::uint32_t>> use_lists(const FoldedNetlist& f, std::span<const std::uint32_t> order);

struct OorwRecord {
  WireId wire = kNoWire;
  std::uint32_t consumer = 0;  // stream position
  std::uint8_t operand = 0;
  std::uint32_t target = 0;    // Wire Memory address
  std::uint32_t producer = kNoProducer;  // stream position, or kNoProducer for circuit inputs
  std::uint32_t trigger = 0;   // stream position carrying the fetch bit
  std::uint8_t trigger_operand = 0;
  bool forced = false;         // fetched at the consumer itself

  static constexpr std::uint32_t kNoProducer = 0xffffffffu;
  bool operator==(const OorwRecord&) const = default;
};

struct Preload {
  WireId wire = kNoWire;
  std::uint32_t addr = 0;
  bool operator==(const Preload&) const = default;
};

/// Result of phase 1; one eviction entry per victim, for audits.
struct Eviction {
  std::uint32_t step = 0;
  std::uint32_t addr = 0;
  WireId wire = kNoWire;
  std::uint32_t next_use = 0;  // UINT32_MAX when never read again
};

struct DraftStream {
  std::vector<AccelInstruction> instrs;
  std::vector<OorwRecord> records;  // in consumer order
  std::vector<Preload> preload;
  std::vector<Eviction> evictions;
};

DraftStream speculate_phase1(const FoldedNetlist& f, std::span<const std::uint32_t> order,
                             std::uint32_t wire_mem_entries);

struct CoreProgram {
  std::vector<AccelInstruction> instrs;
  // In fetch order: by trigger position, forced (consumer-side) fetches first,
  // then by operand. Forced records carry no fetch bit.
  std::vector<OorwRecord> records;
  std::vector<Preload> preload;
  std::vector<WireId> dram_wires;   // ascending; slot = index
  std::uint32_t wire_mem_entries = 0;

  std::uint32_t slot_of(WireId w) const;
  bool operator==(const CoreProgram&) const = default;
};

void speculate_phase2(const FoldedNetlist& f, DraftStream& draft);
CoreProgram speculate(const FoldedNetlist& f, std::span<const std::uint32_t> order, std::uint32_t wire_mem_entries);

struct SpeculationAudit {
  bool ok = true;
  std::size_t violations = 0;
  std::uint32_t first_instruction = 0;
  std::string first_message;
};

/// Symbolic replay: every read must see the intended wire and every fetch must
/// find its wire already written to DRAM.
SpeculationAudit verify_speculation(const FoldedNetlist& f, const CoreProgram& p);

/*
 * Whole program: per-core streams plus one DRAM layout. Byte offsets: all
 * instruction words first, then each core's tables (32 B), then wire slots
 * (16 B) per core.
 */
struct Program {
  std::vector<CoreProgram> cores;
  std::vector<std::uint64_t> instr_base;
  std::vector<std::uint64_t> table_base;
  std::vector<std::uint64_t> slot_base;

  std::vector<std::uint8_t> binary() const;      // little-endian words, core by core
  std::string manifest_json() const;
  static Program load(const FoldedNetlist& f, const Schedule& s, std::span<const std::uint8_t> binary,
                      const std::string& manifest);
};

Program speculate_program(const FoldedNetlist& f, const Schedule& s, std::uint32_t wire_mem_entries);

}  // namespace gcx
