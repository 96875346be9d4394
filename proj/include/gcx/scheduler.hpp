#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcx/garble.hpp"
#include "gcx/netlist.hpp"

namespace gcx {

/*
 * Gate ordering for the accelerator. All functions work on the INV-free
 * form of a netlist and on gate indices of that form; a "gate set" is an
 * ascending list of gate indices (one core's share, or the whole netlist).
 */

enum class ScheduleMode { DepthFirst, FullReorder, SegmentReorder, Cpfe };
std::string_view to_string(ScheduleMode m);
/// Accepts "df", "fr", "sr", "cpfe"; throws std::invalid_argument otherwise.
ScheduleMode parse_schedule_mode(std::string_view s);

/*
 * In-order issue model shared by the CPFE finalization loop and the stall
 * metrics: one instruction enters Execute per cycle at most. A result feeds
 * the very next instruction directly (forwarding); any later consumer reads it
 * back through Wire Memory after the write and read stages.
 */
struct IssueTiming {
  LatencyMap latency = LatencyMap::evaluation();
  std::uint32_t read_stage = 3;
  std::uint32_t write_stage = 2;

  std::uint32_t memory_path() const { return read_stage + write_stage; }
};

/// Dependency graph restricted to a gate set; node i is gates[i].
struct SubDag {
  std::vector<std::uint32_t> gates;
  std::vector<std::uint32_t> weight;
  std::vector<std::vector<std::uint32_t>> pred;  // distinct producers inside the set
  std::vector<std::vector<std::uint32_t>> succ;
};
SubDag sub_dag(const FoldedNetlist& f, std::span<const std::uint32_t> gates, const LatencyMap& latency);

std::vector<std::uint32_t> all_gates(const FoldedNetlist& f);

/// Weakly connected groups of gates (sharing any wire, inputs included).
std::vector<std::vector<std::uint32_t>> find_units(const FoldedNetlist& f);

/// Balanced assignment of units to cores (largest first onto the least
/// loaded core, ties to the lower index). Result: core -> ascending unit ids.
std::vector<std::vector<std::uint32_t>> partition_coarse(std::span<const std::size_t> unit_sizes, unsigned n_cores);

std::vector<std::uint32_t> order_depth_first(const FoldedNetlist& f, std::span<const std::uint32_t> gates);
std::vector<std::uint32_t> order_fr(const FoldedNetlist& f, std::span<const std::uint32_t> gates);
/// Contiguous chunks of at most wire_mem_entries / 2 gates.
std::vector<std::vector<std::uint32_t>> segment(std::span<const std::uint32_t> order, std::uint32_t wire_mem_entries);
std::vector<std::uint32_t> schedule_sr(const FoldedNetlist& f, std::span<const std::uint32_t> gates,
                                       std::uint32_t wire_mem_entries);

struct PrioritySchedule {
  std::vector<std::uint32_t> priority;  // per node of the segment, higher runs first
  std::vector<std::uint32_t> order;     // gate indices
};
/// Critical-path-first ordering of one segment (gates in depth-first order).
PrioritySchedule schedule_cpfe(const FoldedNetlist& f, std::span<const std::uint32_t> seg, const IssueTiming& timing);
std::vector<std::uint32_t> order_cpfe(const FoldedNetlist& f, std::span<const std::uint32_t> gates,
                                      std::uint32_t wire_mem_entries, const IssueTiming& timing);

/// Stall cycles of an order under the issue model (producers outside the order count as ready).
std::uint64_t issue_stalls(const FoldedNetlist& f, std::span<const std::uint32_t> order, const IssueTiming& timing);
/// Minimum of issue_stalls over every topological order of a small gate set (at most 10 gates).
std::uint64_t optimal_issue_stalls(const FoldedNetlist& f, std::span<const std::uint32_t> gates,
                                   const IssueTiming& timing);

struct Schedule {
  ScheduleMode mode = ScheduleMode::DepthFirst;
  std::vector<std::vector<std::uint32_t>> per_core;

  std::string to_json() const;
  static Schedule from_json(std::string_view text);
  bool operator==(const Schedule&) const = default;
};

struct ScheduleOptions {
  ScheduleMode mode = ScheduleMode::Cpfe;
  std::uint32_t wire_mem_entries = 8192;
  unsigned cores = 16;
  IssueTiming timing;
};

/// Coarse partition into cores, then the chosen ordering within each core.
Schedule make_schedule(const FoldedNetlist& f, const ScheduleOptions& opt);

/// Every gate appears exactly once and each core's list is topological.
/// Returns an empty string when valid, else a description of the problem.
std::string check_schedule(const FoldedNetlist& f, const Schedule& s);

}  // namespace gcx
