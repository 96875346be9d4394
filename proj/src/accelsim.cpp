#include "gcx/accelsim.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace gcx {

std::string to_string(SimMode m) {
  switch (m) {
    case SimMode::Functional: return "functional";
    case SimMode::Evaluate: return "evaluate";
    case SimMode::Garble: return "garble";
  }
  return "?";
}

SimMode parse_sim_mode(const std::string& s) {
  if (s == "functional") return SimMode::Functional;
  if (s == "evaluate") return SimMode::Evaluate;
  if (s == "garble") return SimMode::Garble;
  throw ConfigError("unknown simulator mode '" + s + "'");
}

std::string to_string(MemoryPolicy p) { return p == MemoryPolicy::Reuse ? "reuse" : "single_use"; }

MemoryPolicy parse_memory_policy(const std::string& s) {
  if (s == "reuse") return MemoryPolicy::Reuse;
  if (s == "single_use") return MemoryPolicy::SingleUse;
  throw ConfigError("unknown memory policy '" + s + "'");
}

// ---------------------------------------------------------------------------
// Config

namespace {

struct Field {
  const char* key;
  std::function<std::uint64_t&(SimConfig&)> u64;
  std::function<std::uint32_t&(SimConfig&)> u32;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    auto add32 = [&](const char* k, std::uint32_t SimConfig::*m) {
      v.push_back({k, nullptr, [m](SimConfig& c) -> std::uint32_t& { return c.*m; }});
    };
    add32("cores", &SimConfig::cores);
    add32("wire_mem_entries", &SimConfig::wire_mem_entries);
    add32("table_mem_bytes", &SimConfig::table_mem_bytes);
    add32("prefetch_buf_entries", &SimConfig::prefetch_buf_entries);
    add32("instr_mem_bytes", &SimConfig::instr_mem_bytes);
    add32("read_stage", &SimConfig::read_stage);
    add32("write_stage", &SimConfig::write_stage);
    add32("halfgate_eval", &SimConfig::halfgate_eval);
    add32("halfgate_garble", &SimConfig::halfgate_garble);
    add32("freexor", &SimConfig::freexor);
    add32("preempt", &SimConfig::preempt);
    add32("dram_latency", &SimConfig::dram_latency);
    add32("dram_bytes_per_cycle", &SimConfig::dram_bytes_per_cycle);
    add32("dram_coalesce_window", &SimConfig::dram_coalesce_window);
    v.push_back({"deadlock_cycles", [](SimConfig& c) -> std::uint64_t& { return c.deadlock_cycles; }, nullptr});
    return v;
  }();
  return f;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void SimConfig::validate() const {
  for (const auto& f : fields()) {
    SimConfig copy = *this;
    const std::uint64_t v = f.u32 ? f.u32(copy) : f.u64(copy);
    if (v == 0 && std::string(f.key) != "dram_coalesce_window")
      throw ConfigError(std::string(f.key) + " must be positive");
  }
  if (wire_mem_entries < 3 || wire_mem_entries > kMaxWireMem)
    throw ConfigError("wire_mem_entries must lie in [3, 8192]");
  if (table_slots() == 0) throw ConfigError("table memory holds no table");
  if (prefetch_buf_entries < 4) throw ConfigError("prefetch buffer needs at least 4 entries");
  if (instr_window() == 0) throw ConfigError("instruction memory too small for the core count");
}

SimConfig parse_sim_config(const std::string& text, SimConfig c) {
  std::istringstream in(text);
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
    if (key == "mode") {
      c.mode = parse_sim_mode(val);
      continue;
    }
    if (key == "policy") {
      c.policy = parse_memory_policy(val);
      continue;
    }
    auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return key == f.key; });
    if (it == fields().end()) throw ConfigError("line " + std::to_string(no) + ": unknown key '" + key + "'");
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc() || p != val.data() + val.size())
      throw ConfigError("line " + std::to_string(no) + ": '" + val + "' is not a non-negative integer");
    if (it->u32) {
      if (v > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("line " + std::to_string(no) + ": too large");
      it->u32(c) = static_cast<std::uint32_t>(v);
    } else {
      it->u64(c) = v;
    }
  }
  c.validate();
  return c;
}

std::string to_config_text(const SimConfig& c) {
  std::ostringstream o;
  SimConfig copy = c;
  for (const auto& f : fields()) o << f.key << " = " << (f.u32 ? f.u32(copy) : f.u64(copy)) << "\n";
  o << "mode = \"" << to_string(c.mode) << "\"\n";
  o << "policy = \"" << to_string(c.policy) << "\"\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Stats

namespace {
const char* const kStreams[] = {"instructions", "tables", "oorw", "live_writeback", "preload"};
enum Stream { kInstr, kTable, kOorw, kLive, kPreload };
}  // namespace

std::uint64_t SimStats::dram_reads(const std::string& stream) const {
  auto it = streams.find(stream);
  return it == streams.end() ? 0 : it->second.reads;
}

std::string SimStats::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = "gcx.simstats/1";
  j["total_cycles"] = total_cycles;
  j["busy_cycles"] = busy_cycles;
  j["pipeline_stall_cycles"] = pipeline_stall_cycles;
  j["memory_stall_cycles"] = memory_stall_cycles;
  j["oorw_count"] = oorw_count;
  j["dram"] = nlohmann::ordered_json::object();
  for (const char* s : kStreams) {
    const StreamTraffic t = streams.count(s) ? streams.at(s) : StreamTraffic{};
    j["dram"][s] = {{"reads", t.reads}, {"writes", t.writes}, {"read_bytes", t.read_bytes},
                    {"write_bytes", t.write_bytes}};
  }
  j["per_core"] = nlohmann::ordered_json::array();
  for (const auto& c : per_core)
    j["per_core"].push_back({{"total", c.total},
                             {"busy", c.busy},
                             {"pipeline_stall", c.pipeline_stall},
                             {"memory_stall", c.memory_stall}});
  return j.dump(2) + "\n";
}

std::string SimStats::csv_header() {
  std::string h = "label,total_cycles,busy_cycles,pipeline_stall_cycles,memory_stall_cycles,oorw_count";
  for (const char* s : kStreams) h += std::string(",") + s + "_reads," + s + "_writes";
  return h;
}

std::string SimStats::csv_row(const std::string& label) const {
  std::ostringstream o;
  o << label << ',' << total_cycles << ',' << busy_cycles << ',' << pipeline_stall_cycles << ','
    << memory_stall_cycles << ',' << oorw_count;
  for (const char* s : kStreams) {
    const StreamTraffic t = streams.count(s) ? streams.at(s) : StreamTraffic{};
    o << ',' << t.reads << ',' << t.writes;
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

constexpr std::uint64_t kUnset = std::numeric_limits<std::uint64_t>::max();

// Shared DRAM channel: per-cycle byte budget with backfill, fixed latency.
class DramBus {
 public:
  DramBus(const SimConfig& c, SimStats& st) : cfg_(c), st_(st) {}

  // Returns the cycle the data arrives (reads) or lands (writes).
  std::uint64_t read(Stream s, std::uint64_t offset, std::uint32_t bytes, std::uint64_t at, std::uint32_t core) {
    auto& seen = recent_[{s, offset}];
    for (const auto& r : seen)
      if (r.core != core && (at > r.at ? at - r.at : r.at - at) <= cfg_.dram_coalesce_window)
        return std::max(r.done, at + cfg_.dram_latency);
    auto& t = st_.streams[kStreams[s]];
    ++t.reads;
    t.read_bytes += bytes;
    const std::uint64_t done = reserve(bytes, at) + cfg_.dram_latency;
    seen.push_back({at, done, core});
    return done;
  }

  std::uint64_t write(Stream s, std::uint32_t bytes, std::uint64_t at) {
    auto& t = st_.streams[kStreams[s]];
    ++t.writes;
    t.write_bytes += bytes;
    return reserve(bytes, at) + cfg_.dram_latency;
  }

 private:
  std::uint64_t reserve(std::uint32_t bytes, std::uint64_t at) {
    for (std::uint64_t t = at;; ++t) {
      std::uint32_t& used = used_[t];
      const std::uint32_t take = std::min(bytes, cfg_.dram_bytes_per_cycle - used);
      used += take;
      bytes -= take;
      if (bytes == 0) return t + 1;
    }
  }

  struct Seen {
    std::uint64_t at, done;
    std::uint32_t core;
  };
  const SimConfig& cfg_;
  SimStats& st_;
  std::unordered_map<std::uint64_t, std::uint32_t> used_;
  std::map<std::pair<int, std::uint64_t>, std::vector<Seen>> recent_;
};

struct CoreTiming {
  std::uint32_t id = 0;
  const CoreProgram* prog = nullptr;
  std::size_t k = 0;
  std::uint64_t prev_e = 0;
  std::uint32_t prev_lat = 0;
  std::vector<std::uint64_t> addr_ready, write_done;
  std::vector<std::uint8_t> addr_from_dram;
  std::vector<std::uint64_t> instr_ready, table_ready;
  std::uint32_t and_seen = 0;
  std::vector<std::uint64_t> rec_arrival, rec_release;
  std::size_t next_issue = 0, next_rec = 0;
  std::vector<std::uint32_t> first_miss;  // per wire: first consumer position that refetches it
  CoreStats st;
};

}  // namespace

SimResult run(const FoldedNetlist& f, const Program& p, const SimConfig& cfg, const SimInputs& inputs) {
  cfg.validate();
  if (p.cores.size() > cfg.cores) throw ConfigError("program has more cores than the configuration");
  for (const auto& c : p.cores)
    if (c.wire_mem_entries > cfg.wire_mem_entries) throw ConfigError("program was compiled for a larger wire memory");
  const std::uint32_t nin = f.input_count();
  const bool reuse = cfg.policy == MemoryPolicy::Reuse;
  const bool garbling = cfg.mode == SimMode::Garble;

  std::vector<std::uint32_t> and_rank(f.gates.size(), 0);
  for (std::uint32_t gi = 0, r = 0; gi < f.gates.size(); ++gi)
    if (f.gates[gi].kind == GateKind::And) and_rank[gi] = r++;

  SimResult res;
  SimStats& st = res.stats;
  for (const char* s : kStreams) st.streams[s] = {};
  DramBus bus(cfg, st);

  // ---- timing --------------------------------------------------------------
  std::vector<std::uint64_t> landed(f.wire_count(), kUnset);
  std::fill_n(landed.begin(), nin, 0);
  const std::uint32_t window = cfg.instr_window(), tslots = cfg.table_slots();
  std::vector<CoreTiming> cores(p.cores.size());
  for (std::uint32_t c = 0; c < cores.size(); ++c) {
    CoreTiming& t = cores[c];
    const CoreProgram& cp = p.cores[c];
    t.id = c;
    t.prog = &cp;
    t.addr_ready.assign(cfg.wire_mem_entries, 0);
    t.write_done.assign(cfg.wire_mem_entries, 0);
    t.addr_from_dram.assign(cfg.wire_mem_entries, 1);
    const std::size_t n = cp.instrs.size();
    t.instr_ready.assign(n, kUnset);
    const std::size_t pre_words = std::min<std::size_t>(window, n);
    std::fill_n(t.instr_ready.begin(), pre_words, 0);
    auto& ti = st.streams["instructions"];
    ti.reads += (pre_words + 3) / 4;
    ti.read_bytes += 8 * pre_words;
    std::size_t ands = 0;
    for (const auto& in : cp.instrs) ands += in.op == OpKind::HalfGate;
    t.table_ready.assign(ands, kUnset);
    if (!garbling) {
      const std::size_t pre_tables = std::min<std::size_t>(tslots, ands);
      std::fill_n(t.table_ready.begin(), pre_tables, 0);
      st.streams["tables"].reads += pre_tables;
      st.streams["tables"].read_bytes += 32 * pre_tables;
    }
    st.streams["preload"].reads += cp.preload.size();
    st.streams["preload"].read_bytes += 16 * cp.preload.size();
    t.rec_arrival.assign(cp.records.size(), kUnset);
    t.rec_release.assign(cp.records.size(), kUnset);
    t.first_miss.assign(f.wire_count(), std::numeric_limits<std::uint32_t>::max());
    for (const auto& r : cp.records) t.first_miss[r.wire] = std::min(t.first_miss[r.wire], r.consumer);
  }

  auto latency = [&](OpKind op) {
    if (op == OpKind::FreeXor) return cfg.freexor;
    return garbling ? cfg.halfgate_garble : cfg.halfgate_eval;
  };
  auto stall_error = [&](const CoreTiming& t, const std::string& why) {
    return SimError("deadlock on core " + std::to_string(t.id) + " at instruction " + std::to_string(t.k) + ": " + why);
  };

  // Prefetch requests go out in fetch order once a buffer entry is free and
  // the wire has reached DRAM.
  auto issue_through = [&](CoreTiming& t, std::size_t q) {
    const CoreProgram& cp = *t.prog;
    while (t.next_issue <= q) {
      const std::size_t j = t.next_issue++;
      const OorwRecord& r = cp.records[j];
      std::uint64_t at = 0;
      if (j >= cfg.prefetch_buf_entries) {
        at = t.rec_release[j - cfg.prefetch_buf_entries];
        if (at == kUnset) throw std::logic_error("prefetch entry released out of order");
      }
      if (landed[r.wire] == kUnset) throw stall_error(t, "wire " + std::to_string(r.wire) + " never reaches DRAM");
      at = std::max(at, landed[r.wire]);
      t.rec_arrival[j] =
          bus.read(kOorw, p.slot_base[t.id] + 16ull * cp.slot_of(r.wire), 16, at, t.id);
      ++st.oorw_count;
    }
  };

  auto step = [&](CoreTiming& t) {
    const CoreProgram& cp = *t.prog;
    const std::size_t k = t.k;
    const AccelInstruction& in = cp.instrs[k];
    const Gate& g = f.gates[in.gate];
    const std::uint32_t lat = latency(in.op);
    const std::uint64_t base = k == 0 ? cfg.preempt + cfg.read_stage : t.prev_e + 1;
    std::uint64_t pipe = base, mem = base;

    if (t.instr_ready[k] == kUnset) throw std::logic_error("instruction word never requested");
    mem = std::max(mem, t.instr_ready[k] + cfg.preempt + cfg.read_stage);
    const std::uint32_t table = t.and_seen;
    if (in.op == OpKind::HalfGate && !garbling) mem = std::max(mem, t.table_ready[table] + 1);

    // Records handled here: demand fetches first, transfers after the reads.
    std::size_t first_rec = t.next_rec, end_rec = t.next_rec;
    while (end_rec < cp.records.size() && cp.records[end_rec].trigger == k) ++end_rec;
    std::uint8_t demand_at[2] = {0, 0};
    if (reuse) {
      for (std::size_t q = first_rec; q < end_rec; ++q) {
        if (!cp.records[q].forced) continue;
        issue_through(t, q);
        mem = std::max(mem, t.rec_arrival[q] + cfg.read_stage);
        demand_at[cp.records[q].operand] = 1;
      }
    }

    const WireId w[2] = {g.in0, g.in1};
    const WireId prev_out = k > 0 ? f.gates[cp.instrs[k - 1].gate].out : kNoWire;
    for (int s = 0; s < 2; ++s) {
      if (s == 1 && w[1] == w[0]) break;
      if (!reuse && t.first_miss[w[s]] <= k) {
        // Single-use memory: the wire was evicted once, so every read goes to DRAM.
        if (landed[w[s]] == kUnset) throw stall_error(t, "wire " + std::to_string(w[s]) + " never reaches DRAM");
        const std::uint64_t at = std::max<std::uint64_t>(base - cfg.read_stage, landed[w[s]]);
        const std::uint64_t arr = bus.read(kOorw, p.slot_base[t.id] + 16ull * cp.slot_of(w[s]), 16, at, t.id);
        ++st.oorw_count;
        mem = std::max(mem, arr + cfg.read_stage);
        continue;
      }
      if (demand_at[s]) continue;
      if (k > 0 && w[s] == prev_out) {
        pipe = std::max(pipe, t.prev_e + t.prev_lat);
        continue;
      }
      const std::uint32_t a = in.read_addr[s];
      std::uint64_t& bound = t.addr_from_dram[a] ? mem : pipe;
      bound = std::max(bound, t.addr_ready[a]);
    }
    if (!in.wen) {
      const std::uint64_t need = t.write_done[in.write_addr] + 1;
      if (need > lat + cfg.write_stage) pipe = std::max(pipe, need - lat - cfg.write_stage);
    }

    const std::uint64_t no_mem = std::max(base, pipe);
    const std::uint64_t e = std::max(no_mem, mem);
    if (e - base > cfg.deadlock_cycles) throw stall_error(t, "no issue for " + std::to_string(e - base) + " cycles");
    t.st.busy += 1;
    t.st.pipeline_stall += no_mem - base;
    t.st.memory_stall += e - no_mem;
    const std::uint64_t done = e + lat + cfg.write_stage;
    t.st.total = std::max(t.st.total, done);

    if (!in.wen) {
      t.write_done[in.write_addr] = done;
      t.addr_ready[in.write_addr] = done + cfg.read_stage;
      t.addr_from_dram[in.write_addr] = 0;
    }
    if (in.live) landed[g.out] = bus.write(kLive, 16, done);

    for (std::size_t q = first_rec; q < end_rec; ++q) {
      const OorwRecord& r = cp.records[q];
      if (!reuse) continue;
      if (r.forced) {
        t.rec_release[q] = e;
        continue;
      }
      issue_through(t, q);
      const std::uint64_t x = std::max(t.rec_arrival[q], e);
      t.addr_ready[r.target] = x + cfg.read_stage;
      t.addr_from_dram[r.target] = 1;
      t.write_done[r.target] = x;
      t.rec_release[q] = x;
    }
    t.next_rec = end_rec;

    if (in.op == OpKind::HalfGate) {
      if (garbling) {
        bus.write(kTable, 32, done);
      } else if (table + tslots < t.table_ready.size()) {
        const std::uint64_t off = p.table_base[t.id] + 32ull * (table + tslots);
        t.table_ready[table + tslots] = bus.read(kTable, off, 32, e, t.id);
      }
      ++t.and_seen;
    }
    // The slot of this word now takes word k + window; words stream in 32-byte blocks.
    const std::size_t n = cp.instrs.size(), j = k + window;
    if (j < n && ((j - window) % 4 == 3 || j == n - 1)) {
      const std::size_t first = j - (j - window) % 4;
      const std::uint64_t arr =
          bus.read(kInstr, p.instr_base[t.id] + 8ull * first, static_cast<std::uint32_t>(8 * (j - first + 1)), e, t.id);
      for (std::size_t x = first; x <= j; ++x) t.instr_ready[x] = arr;
    }
    t.prev_e = e;
    t.prev_lat = lat;
    ++t.k;
  };

  for (;;) {
    CoreTiming* next = nullptr;
    std::uint64_t best = kUnset;
    for (auto& t : cores) {
      if (t.k >= t.prog->instrs.size()) continue;
      const std::uint64_t b = t.k == 0 ? 0 : t.prev_e + 1;
      if (next == nullptr || b < best) next = &t, best = b;
    }
    if (!next) break;
    step(*next);
  }
  for (const auto& t : cores) {
    if (t.st.total < t.st.busy + t.st.memory_stall) throw std::logic_error("negative pipeline stall");
    CoreStats c = t.st;
    c.pipeline_stall = c.total - c.busy - c.memory_stall;
    st.per_core.push_back(c);
    st.total_cycles = std::max(st.total_cycles, c.total);
    st.busy_cycles += c.busy;
    st.pipeline_stall_cycles += c.pipeline_stall;
    st.memory_stall_cycles += c.memory_stall;
  }

  // ---- data path -----------------------------------------------------------
  FixedKeyHash h;
  GarblerKeys keys;
  const GarbledCircuit* gc = nullptr;
  std::vector<Block> dram(f.wire_count());
  std::vector<std::uint8_t> in_dram(f.wire_count(), 0);
  std::fill_n(in_dram.begin(), nin, 1);
  if (cfg.mode != SimMode::Garble && inputs.bits.size() != nin)
    throw std::invalid_argument("expected " + std::to_string(nin) + " input bits");
  switch (cfg.mode) {
    case SimMode::Functional:
      for (WireId i = 0; i < nin; ++i) dram[i] = Block{inputs.bits[i] & 1u, 0};
      break;
    case SimMode::Evaluate: {
      if (!inputs.garbled) throw std::invalid_argument("evaluate mode needs garbled material");
      gc = &inputs.garbled->circuit;
      if (gc->tables.size() != f.and_count()) throw IntegrityError("table count does not match the netlist");
      const auto labels = encode_inputs(inputs.garbled->keys, inputs.bits);
      std::copy(labels.begin(), labels.end(), dram.begin());
      break;
    }
    case SimMode::Garble: {
      Prg prg(inputs.seed);
      keys = draw_keys(nin, prg);
      std::copy(keys.input_zero.begin(), keys.input_zero.end(), dram.begin());
      res.garbled.tables.resize(f.and_count());
      break;
    }
  }

  for (std::uint32_t c = 0; c < p.cores.size(); ++c) {
    const CoreProgram& cp = p.cores[c];
    std::vector<Block> val(cfg.wire_mem_entries);
    std::vector<WireId> tag(cfg.wire_mem_entries, kNoWire);
    std::vector<std::uint32_t> first_miss(f.wire_count(), std::numeric_limits<std::uint32_t>::max());
    for (const auto& r : cp.records) first_miss[r.wire] = std::min(first_miss[r.wire], r.consumer);
    auto from_dram = [&](WireId w, std::uint32_t k) {
      if (!in_dram[w])
        throw SimError("core " + std::to_string(c) + " instruction " + std::to_string(k) + ": wire " +
                       std::to_string(w) + " is not in DRAM");
      return dram[w];
    };
    for (const auto& pl : cp.preload) {
      val[pl.addr] = from_dram(pl.wire, 0);
      tag[pl.addr] = pl.wire;
    }
    std::size_t q = 0;
    for (std::uint32_t k = 0; k < cp.instrs.size(); ++k) {
      const AccelInstruction& in = cp.instrs[k];
      const Gate& g = f.gates[in.gate];
      std::size_t end = q;
      while (end < cp.records.size() && cp.records[end].trigger == k) ++end;
      if (reuse)
        for (std::size_t r = q; r < end; ++r)
          if (cp.records[r].forced) {
            val[cp.records[r].target] = from_dram(cp.records[r].wire, k);
            tag[cp.records[r].target] = cp.records[r].wire;
          }
      Block v[2];
      const WireId w[2] = {g.in0, g.in1};
      for (int s = 0; s < 2; ++s) {
        if (!reuse && first_miss[w[s]] <= k) {
          v[s] = from_dram(w[s], k);
          continue;
        }
        const std::uint32_t a = in.read_addr[s];
        if (tag[a] != w[s])
          throw SimError("core " + std::to_string(c) + " instruction " + std::to_string(k) + " reads address " +
                         std::to_string(a) + " holding " +
                         (tag[a] == kNoWire ? std::string("nothing") : "wire " + std::to_string(tag[a])) +
                         ", expected wire " + std::to_string(w[s]));
        v[s] = val[a];
      }
      const auto& flip = f.input_flip[in.gate];
      Block out;
      switch (cfg.mode) {
        case SimMode::Functional: {
          const std::uint64_t a = (v[0].lo ^ flip[0]) & 1, b = (v[1].lo ^ flip[1]) & 1;
          out = Block{g.kind == GateKind::Xor ? a ^ b : a & b, 0};
          break;
        }
        case SimMode::Evaluate:
          out = g.kind == GateKind::Xor ? v[0] ^ v[1]
                                        : evaluate_and(h, v[0], v[1], in.gate, gc->tables[and_rank[in.gate]]);
          break;
        case SimMode::Garble: {
          const Block a0 = v[0] ^ keys.delta.select(flip[0]), b0 = v[1] ^ keys.delta.select(flip[1]);
          out = g.kind == GateKind::Xor ? a0 ^ b0
                                        : garble_and(h, keys.delta, a0, b0, in.gate,
                                                     res.garbled.tables[and_rank[in.gate]]);
          break;
        }
      }
      if (reuse)
        for (std::size_t r = q; r < end; ++r)
          if (!cp.records[r].forced) {
            val[cp.records[r].target] = from_dram(cp.records[r].wire, k);
            tag[cp.records[r].target] = cp.records[r].wire;
          }
      q = end;
      if (!in.wen) {
        val[in.write_addr] = out;
        tag[in.write_addr] = g.out;
      }
      if (in.live) {
        dram[g.out] = out;
        in_dram[g.out] = 1;
      }
    }
  }

  for (std::size_t i = 0; i < f.outputs.size(); ++i) {
    const WireRef o = f.outputs[i];
    if (!in_dram[o.wire]) throw SimError("output " + std::to_string(i) + " never reached DRAM");
    const Block v = dram[o.wire];
    switch (cfg.mode) {
      case SimMode::Functional:
        res.outputs.push_back(static_cast<std::uint8_t>((v.lo ^ o.flip) & 1));
        break;
      case SimMode::Evaluate:
        res.outputs.push_back(decode_one(v, gc->decode[i]));
        break;
      case SimMode::Garble: {
        const Block z = v ^ keys.delta.select(o.flip);
        res.garbled.decode.push_back(
            {static_cast<std::uint8_t>(z.color()), label_digest(z), label_digest(z ^ keys.delta)});
        break;
      }
    }
  }
  return res;
}

}  // namespace gcx
