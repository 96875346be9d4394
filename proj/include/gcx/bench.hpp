#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcx/accelsim.hpp"
#include "gcx/fixed_point.hpp"
#include "gcx/netlist.hpp"
#include "gcx/scheduler.hpp"

namespace gcx {

/// A malformed experiment spec or report (command line exit code 2).
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/*
 * Small TOML subset: `key = value` with strings, integers and booleans,
 * `[table]` and `[[array_of_tables]]` headers, `#` comments. Values are kept
 * as text; quotes are stripped from strings.
 */
struct TomlTable {
  std::map<std::string, std::string> values;
  bool has(const std::string& k) const { return values.count(k) != 0; }
  std::string str(const std::string& k, const std::string& dflt = "") const;
  std::uint64_t u64(const std::string& k, std::uint64_t dflt) const;
  bool boolean(const std::string& k, bool dflt) const;
};
struct TomlDoc {
  TomlTable root;
  std::map<std::string, TomlTable> tables;
  std::map<std::string, std::vector<TomlTable>> arrays;
};
TomlDoc parse_toml_subset(const std::string& text);

/*
 * A benchmark is a generator invocation, not a file. Functions:
 *   adder sub comparator mul_xfbq mul_conventional identity     (width)
 *   gelu exp                                                    (width, frac)
 *   softmax layernorm layernorm_reduced                         (width, frac, n)
 */
struct BenchmarkEntry {
  std::string name;
  std::string function;
  unsigned width = 16;
  unsigned frac = 11;
  unsigned n = 8;
  bool qerror = true;  // mul_xfbq only
};

Netlist generate_benchmark(const BenchmarkEntry& e);
/// SHA-256 of the netlist's Bristol text, hex.
std::string netlist_hash(const Netlist& n);

struct RunMode {
  std::string label;
  ScheduleMode schedule = ScheduleMode::Cpfe;
  SimMode sim = SimMode::Evaluate;
  MemoryPolicy policy = MemoryPolicy::Reuse;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  std::vector<BenchmarkEntry> benchmarks;
  std::vector<RunMode> modes;
  SimConfig config;        // mode and policy come from each RunMode
  std::string cache_dir;   // netlists by content hash; empty disables
  std::string out_prefix;  // writes <prefix>.json and <prefix>.csv when set
};

ExperimentSpec parse_experiment_spec(const std::string& text);

struct BenchRow {
  std::string benchmark;
  std::string hash;
  std::string mode;
  ScheduleMode schedule = ScheduleMode::Cpfe;
  SimMode sim = SimMode::Evaluate;
  MemoryPolicy policy = MemoryPolicy::Reuse;
  std::uint64_t gates = 0;
  std::uint64_t and_gates = 0;
  bool outputs_ok = false;      // simulated result equals the software reference
  bool speculation_ok = false;  // symbolic audit of every core's stream
  std::map<std::string, std::uint64_t> metrics;  // flat numbers, compared by diff
};

struct BenchReport {
  std::string name;
  std::uint64_t seed = 0;
  std::string config_text;
  std::vector<BenchRow> rows;

  static constexpr const char* kSchema = "gcx.bench/1";
  /// Fixed CSV column order; the header is present even with no rows.
  static std::vector<std::string> csv_columns();
  std::string to_json() const;
  std::string to_csv() const;
  static BenchReport from_json(const std::string& text);  // throws SpecError
};

/// Runs every (benchmark, mode) cell in order; rows come out benchmark-major.
BenchReport run_experiment(const ExperimentSpec& spec);

struct DiffEntry {
  std::string benchmark;
  std::string mode;
  std::string metric;
  bool gap = false;  // row or metric missing on one side
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  double ratio = 1.0;     // b / a (1 when both are 0)
  std::string direction;  // "lower", "higher", "same" or "gap"
};

struct DiffTable {
  std::vector<DiffEntry> entries;
  std::string to_json() const;
  std::string to_text() const;
};

DiffTable diff_reports(const BenchReport& a, const BenchReport& b);

}  // namespace gcx
