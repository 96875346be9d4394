#include "gcx/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "gcx/circuitgen.hpp"
#include "gcx/garble.hpp"
#include "gcx/layernorm.hpp"
#include "gcx/nonlinear.hpp"
#include "gcx/speculator.hpp"

namespace gcx {

using ojson = nlohmann::ordered_json;

// ---- TOML subset -----------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Strips a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

bool valid_key(const std::string& k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; });
}

}  // namespace

std::string TomlTable::str(const std::string& k, const std::string& dflt) const {
  auto it = values.find(k);
  return it == values.end() ? dflt : it->second;
}

std::uint64_t TomlTable::u64(const std::string& k, std::uint64_t dflt) const {
  auto it = values.find(k);
  if (it == values.end()) return dflt;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(it->second, &pos, 0);
    if (pos != it->second.size() || it->second.front() == '-') throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw SpecError("key '" + k + "': expected a non-negative integer, got '" + it->second + "'");
  }
}

bool TomlTable::boolean(const std::string& k, bool dflt) const {
  auto it = values.find(k);
  if (it == values.end()) return dflt;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw SpecError("key '" + k + "': expected true or false");
}

TomlDoc parse_toml_subset(const std::string& text) {
  TomlDoc doc;
  TomlTable* cur = &doc.root;
  std::istringstream in(text);
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(no) + ": ";
    if (line.rfind("[[", 0) == 0) {
      if (line.size() < 5 || line.substr(line.size() - 2) != "]]") throw SpecError(where + "bad array header");
      const std::string name = trim(line.substr(2, line.size() - 4));
      if (!valid_key(name)) throw SpecError(where + "bad array name");
      doc.arrays[name].emplace_back();
      cur = &doc.arrays[name].back();
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw SpecError(where + "bad table header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) throw SpecError(where + "bad table name");
      if (doc.tables.count(name)) throw SpecError(where + "table [" + name + "] defined twice");
      cur = &doc.tables[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SpecError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw SpecError(where + "bad key '" + key + "'");
    if (val.empty()) throw SpecError(where + "missing value");
    if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"') throw SpecError(where + "unterminated string");
      val = val.substr(1, val.size() - 2);
    }
    if (!cur->values.emplace(key, val).second) throw SpecError(where + "duplicate key '" + key + "'");
  }
  return doc;
}

// ---- benchmarks ------------------------------------------------------------

namespace {
const std::set<std::string> kFunctions = {"adder",    "sub", "comparator", "mul_xfbq", "mul_conventional",
                                          "identity", "gelu", "exp",       "softmax",  "layernorm",
                                          "layernorm_reduced"};
}  // namespace

Netlist generate_benchmark(const BenchmarkEntry& e) {
  const FixedPointFormat raw{e.width, 0, false};
  const FixedPointFormat fx{e.width, e.frac, true};
  try {
    if (e.function == "adder") return gen_adder(raw);
    if (e.function == "sub") return gen_sub(raw);
    if (e.function == "comparator") return gen_comparator(raw);
    if (e.function == "mul_xfbq") return gen_mul_xfbq(raw, e.qerror);
    if (e.function == "mul_conventional") return gen_mul_conventional(raw);
    if (e.function == "identity") return gen_identity(raw);
    if (e.function == "gelu") return gen_gelu(fx);
    if (e.function == "exp") return gen_softmax_exp(fx);
    if (e.function == "softmax") return gen_softmax(fx, e.n);
    if (e.function == "layernorm" || e.function == "layernorm_reduced") {
      LayerNormConfig c;
      c.fmt = fx;
      c.n = e.n;
      return gen_layernorm(c, e.function == "layernorm" ? LayerNormVariant::Full : LayerNormVariant::Reduced);
    }
  } catch (const std::invalid_argument& ex) {
    throw SpecError("benchmark '" + e.name + "': " + ex.what());
  }
  throw SpecError("benchmark '" + e.name + "': unknown function '" + e.function + "'");
}

std::string netlist_hash(const Netlist& n) {
  const std::string text = emit_bristol(n);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream o;
  for (unsigned i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return o.str();
}

// ---- spec ------------------------------------------------------------------

ExperimentSpec parse_experiment_spec(const std::string& text) {
  const TomlDoc doc = parse_toml_subset(text);
  ExperimentSpec s;
  for (const auto& [k, v] : doc.root.values)
    if (k != "name" && k != "seed" && k != "cache_dir" && k != "out_prefix") throw SpecError("unknown top-level key '" + k + "'");
  s.name = doc.root.str("name", s.name);
  s.seed = doc.root.u64("seed", s.seed);
  s.cache_dir = doc.root.str("cache_dir");
  s.out_prefix = doc.root.str("out_prefix");
  for (const auto& [name, t] : doc.tables)
    if (name != "sim") throw SpecError("unknown table [" + name + "]");
  for (const auto& [name, t] : doc.arrays)
    if (name != "benchmark" && name != "mode") throw SpecError("unknown array [[" + name + "]]");

  if (auto it = doc.tables.find("sim"); it != doc.tables.end()) {
    std::string flat;
    for (const auto& [k, v] : it->second.values) {
      if (k == "mode" || k == "policy") throw SpecError("[sim] " + k + " is set per [[mode]]");
      flat += k + " = " + v + "\n";
    }
    try {
      s.config = parse_sim_config(flat);
      s.config.validate();
    } catch (const ConfigError& e) {
      throw SpecError(std::string("[sim]: ") + e.what());
    }
  }

  std::set<std::string> names;
  if (auto it = doc.arrays.find("benchmark"); it != doc.arrays.end())
    for (const TomlTable& t : it->second) {
      for (const auto& [k, v] : t.values)
        if (k != "name" && k != "function" && k != "width" && k != "frac" && k != "n" && k != "qerror")
          throw SpecError("[[benchmark]]: unknown key '" + k + "'");
      BenchmarkEntry e;
      e.function = t.str("function");
      if (e.function.empty()) throw SpecError("[[benchmark]]: function is required");
      if (!kFunctions.count(e.function)) throw SpecError("[[benchmark]]: unknown function '" + e.function + "'");
      e.width = static_cast<unsigned>(t.u64("width", e.width));
      e.frac = static_cast<unsigned>(t.u64("frac", e.frac));
      e.n = static_cast<unsigned>(t.u64("n", e.n));
      e.qerror = t.boolean("qerror", e.qerror);
      e.name = t.str("name", e.function + std::to_string(e.width));
      if (!names.insert(e.name).second) throw SpecError("duplicate benchmark name '" + e.name + "'");
      s.benchmarks.push_back(e);
    }
  std::set<std::string> labels;
  if (auto it = doc.arrays.find("mode"); it != doc.arrays.end())
    for (const TomlTable& t : it->second) {
      for (const auto& [k, v] : t.values)
        if (k != "label" && k != "schedule" && k != "sim" && k != "policy") throw SpecError("[[mode]]: unknown key '" + k + "'");
      RunMode m;
      try {
        m.schedule = parse_schedule_mode(t.str("schedule", "cpfe"));
        m.sim = parse_sim_mode(t.str("sim", "evaluate"));
        m.policy = parse_memory_policy(t.str("policy", "reuse"));
      } catch (const std::exception& e) {
        throw SpecError(std::string("[[mode]]: ") + e.what());
      }
      m.label = t.str("label", std::string(to_string(m.schedule)) + "-" + to_string(m.sim) + "-" + to_string(m.policy));
      if (!labels.insert(m.label).second) throw SpecError("duplicate mode label '" + m.label + "'");
      s.modes.push_back(m);
    }
  return s;
}

// ---- running -----------------------------------------------------------------

namespace {

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> m{"total_cycles",     "busy_cycles",     "pipeline_stall_cycles",
                                          "memory_stall_cycles", "oorw_count",  "oorw_reads",
                                          "dram_read_bytes",  "dram_write_bytes", "instructions"};
  return m;
}

std::map<std::string, std::uint64_t> flatten(const SimStats& st, std::uint64_t instructions) {
  std::map<std::string, std::uint64_t> m;
  m["total_cycles"] = st.total_cycles;
  m["busy_cycles"] = st.busy_cycles;
  m["pipeline_stall_cycles"] = st.pipeline_stall_cycles;
  m["memory_stall_cycles"] = st.memory_stall_cycles;
  m["oorw_count"] = st.oorw_count;
  m["oorw_reads"] = st.dram_reads("oorw");
  std::uint64_t rb = 0, wb = 0;
  for (const auto& [name, t] : st.streams) {
    rb += t.read_bytes;
    wb += t.write_bytes;
  }
  m["dram_read_bytes"] = rb;
  m["dram_write_bytes"] = wb;
  m["instructions"] = instructions;
  return m;
}

Netlist cached_netlist(const ExperimentSpec& spec, const BenchmarkEntry& e, std::string& hash) {
  Netlist n = generate_benchmark(e);
  hash = netlist_hash(n);
  if (spec.cache_dir.empty()) return n;
  namespace fs = std::filesystem;
  fs::create_directories(spec.cache_dir);
  const fs::path p = fs::path(spec.cache_dir) / (hash + ".bristol");
  if (fs::exists(p)) {
    if (read_bristol_file(p.string()) != n)
      throw std::runtime_error("cache entry " + p.string() + " does not match its content hash");
  } else {
    write_bristol_file(n, p.string());
  }
  return n;
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t bench) { return seed * 0x9e3779b97f4a7c15ull + bench + 1; }

}  // namespace

BenchReport run_experiment(const ExperimentSpec& spec) {
  BenchReport rep;
  rep.name = spec.name;
  rep.seed = spec.seed;
  rep.config_text = to_config_text(spec.config);
  for (std::size_t bi = 0; bi < spec.benchmarks.size(); ++bi) {
    const BenchmarkEntry& e = spec.benchmarks[bi];
    if (spec.modes.empty()) break;
    std::string hash;
    const Netlist n = cached_netlist(spec, e, hash);
    const FoldedNetlist f = fold_inv(n);
    const std::uint64_t seed = cell_seed(spec.seed, bi);
    Prg prg(seed);
    Bits bits(f.input_count());
    for (auto& b : bits) b = static_cast<std::uint8_t>(prg.next_u64() & 1);
    const Bits want = eval_plain(f, bits);
    const GarbleResult reference = garble(f, seed);

    for (const RunMode& m : spec.modes) {
      SimConfig cfg = spec.config;
      cfg.mode = m.sim;
      cfg.policy = m.policy;
      ScheduleOptions so;
      so.mode = m.schedule;
      so.wire_mem_entries = cfg.wire_mem_entries;
      so.cores = cfg.cores;
      const Schedule sched = make_schedule(f, so);
      const Program prog = speculate_program(f, sched, cfg.wire_mem_entries);

      BenchRow row;
      row.benchmark = e.name;
      row.hash = hash;
      row.mode = m.label;
      row.schedule = m.schedule;
      row.sim = m.sim;
      row.policy = m.policy;
      row.gates = f.gates.size();
      row.and_gates = f.and_count();
      row.speculation_ok = true;
      std::uint64_t instructions = 0;
      for (const CoreProgram& c : prog.cores) {
        row.speculation_ok &= verify_speculation(f, c).ok;
        instructions += c.instrs.size();
      }
      SimInputs in;
      in.bits = bits;
      in.garbled = &reference;
      in.seed = seed;
      const SimResult r = run(f, prog, cfg, in);
      row.outputs_ok = m.sim == SimMode::Garble ? r.garbled == reference.circuit : r.outputs == want;
      row.metrics = flatten(r.stats, instructions);
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

// ---- report I/O --------------------------------------------------------------

std::vector<std::string> BenchReport::csv_columns() {
  std::vector<std::string> c{"benchmark", "hash", "mode", "schedule", "sim", "policy",
                             "gates",     "and_gates", "outputs_ok", "speculation_ok"};
  for (const auto& m : metric_names()) c.push_back(m);
  return c;
}

std::string BenchReport::to_json() const {
  ojson j;
  j["schema"] = kSchema;
  j["name"] = name;
  j["seed"] = seed;
  j["config"] = config_text;
  j["rows"] = ojson::array();
  for (const auto& r : rows) {
    ojson o;
    o["benchmark"] = r.benchmark;
    o["hash"] = r.hash;
    o["mode"] = r.mode;
    o["schedule"] = std::string(to_string(r.schedule));
    o["sim"] = to_string(r.sim);
    o["policy"] = to_string(r.policy);
    o["gates"] = r.gates;
    o["and_gates"] = r.and_gates;
    o["outputs_ok"] = r.outputs_ok;
    o["speculation_ok"] = r.speculation_ok;
    ojson m = ojson::object();
    for (const auto& k : metric_names())
      if (auto it = r.metrics.find(k); it != r.metrics.end()) m[k] = it->second;
    o["metrics"] = m;
    j["rows"].push_back(o);
  }
  return j.dump(2) + "\n";
}

std::string BenchReport::to_csv() const {
  std::ostringstream o;
  const auto cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) o << (i ? "," : "") << cols[i];
  o << "\n";
  for (const auto& r : rows) {
    o << r.benchmark << ',' << r.hash << ',' << r.mode << ',' << to_string(r.schedule) << ',' << to_string(r.sim) << ','
      << to_string(r.policy) << ',' << r.gates << ',' << r.and_gates << ',' << (r.outputs_ok ? 1 : 0) << ','
      << (r.speculation_ok ? 1 : 0);
    for (const auto& k : metric_names()) {
      auto it = r.metrics.find(k);
      o << ',';
      if (it != r.metrics.end()) o << it->second;
    }
    o << "\n";
  }
  return o.str();
}

BenchReport BenchReport::from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw SpecError(std::string("report is not JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != kSchema)
    throw SpecError(std::string("report schema mismatch: expected ") + kSchema);
  BenchReport rep;
  try {
    rep.name = j.at("name").get<std::string>();
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.config_text = j.at("config").get<std::string>();
    for (const auto& o : j.at("rows")) {
      BenchRow r;
      r.benchmark = o.at("benchmark").get<std::string>();
      r.hash = o.at("hash").get<std::string>();
      r.mode = o.at("mode").get<std::string>();
      r.schedule = parse_schedule_mode(o.at("schedule").get<std::string>());
      r.sim = parse_sim_mode(o.at("sim").get<std::string>());
      r.policy = parse_memory_policy(o.at("policy").get<std::string>());
      r.gates = o.at("gates").get<std::uint64_t>();
      r.and_gates = o.at("and_gates").get<std::uint64_t>();
      r.outputs_ok = o.at("outputs_ok").get<bool>();
      r.speculation_ok = o.at("speculation_ok").get<bool>();
      for (const auto& [k, v] : o.at("metrics").items()) r.metrics[k] = v.get<std::uint64_t>();
      rep.rows.push_back(std::move(r));
    }
  } catch (const SpecError&) {
    throw;
  } catch (const std::exception& e) {
    throw SpecError(std::string("malformed report: ") + e.what());
  }
  return rep;
}

// ---- diff ----------------------------------------------------------------------

DiffTable diff_reports(const BenchReport& a, const BenchReport& b) {
  using Key = std::pair<std::string, std::string>;
  std::map<Key, const BenchRow*> ra, rb;
  std::vector<Key> order;
  for (const auto& r : a.rows)
    if (ra.emplace(Key{r.benchmark, r.mode}, &r).second) order.push_back({r.benchmark, r.mode});
  for (const auto& r : b.rows)
    if (rb.emplace(Key{r.benchmark, r.mode}, &r).second && !ra.count({r.benchmark, r.mode}))
      order.push_back({r.benchmark, r.mode});

  DiffTable t;
  for (const Key& k : order) {
    const BenchRow* x = ra.count(k) ? ra.at(k) : nullptr;
    const BenchRow* y = rb.count(k) ? rb.at(k) : nullptr;
    std::vector<std::string> metrics = metric_names();
    for (const BenchRow* r : {x, y})
      if (r)
        for (const auto& [m, v] : r->metrics)
          if (std::find(metrics.begin(), metrics.end(), m) == metrics.end()) metrics.push_back(m);
    for (const auto& m : metrics) {
      DiffEntry d;
      d.benchmark = k.first;
      d.mode = k.second;
      d.metric = m;
      const bool in_a = x && x->metrics.count(m), in_b = y && y->metrics.count(m);
      if (!in_a && !in_b) continue;
      if (!in_a || !in_b) {
        d.gap = true;
        d.direction = "gap";
        d.a = in_a ? x->metrics.at(m) : 0;
        d.b = in_b ? y->metrics.at(m) : 0;
        d.ratio = 0;
        t.entries.push_back(d);
        continue;
      }
      d.a = x->metrics.at(m);
      d.b = y->metrics.at(m);
      if (d.a == d.b)
        d.ratio = 1.0;
      else if (d.a == 0)
        d.ratio = std::numeric_limits<double>::infinity();
      else
        d.ratio = static_cast<double>(d.b) / static_cast<double>(d.a);
      d.direction = d.b < d.a ? "lower" : d.b > d.a ? "higher" : "same";
      t.entries.push_back(d);
    }
  }
  return t;
}

std::string DiffTable::to_json() const {
  ojson j;
  j["schema"] = "gcx.benchdiff/1";
  j["entries"] = ojson::array();
  for (const auto& d : entries) {
    ojson o;
    o["benchmark"] = d.benchmark;
    o["mode"] = d.mode;
    o["metric"] = d.metric;
    if (d.gap) {
      o["gap"] = true;
    } else {
      o["a"] = d.a;
      o["b"] = d.b;
      if (std::isinf(d.ratio))
        o["ratio"] = "inf";
      else
        o["ratio"] = d.ratio;
    }
    o["direction"] = d.direction;
    j["entries"].push_back(o);
  }
  return j.dump(2) + "\n";
}

std::string DiffTable::to_text() const {
  std::ostringstream o;
  o << "benchmark,mode,metric,a,b,ratio,direction\n";
  for (const auto& d : entries) {
    o << d.benchmark << ',' << d.mode << ',' << d.metric << ',';
    if (d.gap) {
      o << ",,GAP,gap\n";
      continue;
    }
    o << d.a << ',' << d.b << ',';
    if (std::isinf(d.ratio))
      o << "inf";
    else
      o << std::fixed << std::setprecision(4) << d.ratio;
    o << ',' << d.direction << "\n";
  }
  return o.str();
}

}  // namespace gcx
