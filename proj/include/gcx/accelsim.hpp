#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcx/garble.hpp"
#include "gcx/speculator.hpp"

namespace gcx {

/*
 * Timing and functional model of the multi-core accelerator.
 *
 * Each core runs its instruction stream in order through four stages:
 * write-address preemption, read, execute (plus inbound wire transfers),
 * write. An instruction enters Execute at cycle E and its result is in Wire
 * Memory at E + latency + write_stage. The next instruction may take the
 * result straight from Execute; everyone else reads it back from Wire Memory.
 * Cores share one DRAM channel with fixed latency, limited bytes per cycle and
 * request coalescing across cores.
 *
 * Memories that are full at start (the first instruction window, the first
 * tables, preloaded wires) are filled before cycle 0; that traffic is counted
 * but takes no time.
 */

enum class SimMode { Functional, Evaluate, Garble };
enum class MemoryPolicy { Reuse, SingleUse };  // SingleUse: evicted wires are read from DRAM on every use

std::string to_string(SimMode m);
SimMode parse_sim_mode(const std::string& s);
std::string to_string(MemoryPolicy p);
MemoryPolicy parse_memory_policy(const std::string& s);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  std::uint32_t cores = 16;
  std::uint32_t wire_mem_entries = 8192;
  std::uint32_t table_mem_bytes = 2048;
  std::uint32_t prefetch_buf_entries = 64;
  std::uint32_t instr_mem_bytes = 16384;
  std::uint32_t read_stage = 3;
  std::uint32_t write_stage = 2;
  std::uint32_t halfgate_eval = 18;
  std::uint32_t halfgate_garble = 21;
  std::uint32_t freexor = 1;
  std::uint32_t preempt = 1;
  std::uint32_t dram_latency = 100;
  std::uint32_t dram_bytes_per_cycle = 32;
  std::uint32_t dram_coalesce_window = 4;
  std::uint64_t deadlock_cycles = 1000000;
  SimMode mode = SimMode::Evaluate;
  MemoryPolicy policy = MemoryPolicy::Reuse;

  /// Throws ConfigError on a zero field or a memory too small to work with.
  void validate() const;
  std::uint32_t table_slots() const { return table_mem_bytes / 32; }
  std::uint32_t instr_window() const { return instr_mem_bytes / cores / 8; }
  bool operator==(const SimConfig&) const = default;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown keys are errors.
SimConfig parse_sim_config(const std::string& text, SimConfig base = {});
std::string to_config_text(const SimConfig& c);

struct StreamTraffic {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t read_bytes = 0;
  std::uint64_t write_bytes = 0;
  bool operator==(const StreamTraffic&) const = default;
};

struct CoreStats {
  std::uint64_t total = 0;
  std::uint64_t busy = 0;
  std::uint64_t pipeline_stall = 0;
  std::uint64_t memory_stall = 0;
  bool operator==(const CoreStats&) const = default;
};

struct SimStats {
  std::uint64_t total_cycles = 0;  // slowest core
  std::uint64_t busy_cycles = 0;   // sums over cores
  std::uint64_t pipeline_stall_cycles = 0;
  std::uint64_t memory_stall_cycles = 0;
  std::uint64_t oorw_count = 0;
  // instructions, tables, oorw, live_writeback, preload
  std::map<std::string, StreamTraffic> streams;
  std::vector<CoreStats> per_core;

  std::uint64_t dram_reads(const std::string& stream) const;
  std::string to_json() const;  // versioned, stable key order
  static std::string csv_header();
  std::string csv_row(const std::string& label) const;
  bool operator==(const SimStats&) const = default;
};

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimResult {
  Bits outputs;              // plaintext outputs (functional, evaluate)
  GarbledCircuit garbled;    // garble mode: tables and decoders produced by the cores
  SimStats stats;
};

/*
 * Inputs per mode:
 *   functional  bits
 *   evaluate    bits and the garbler's material (`garbled`); labels are selected from its keys
 *   garble      seed; keys are drawn as garble() draws them
 */
struct SimInputs {
  Bits bits;
  const GarbleResult* garbled = nullptr;
  std::uint64_t seed = 0;
};

SimResult run(const FoldedNetlist& f, const Program& p, const SimConfig& cfg, const SimInputs& in);

}  // namespace gcx
