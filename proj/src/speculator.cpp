#include "gcx/speculator.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <set>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace gcx {

namespace {

constexpr std::uint32_t kNever = std::numeric_limits<std::uint32_t>::max();
constexpr std::uint32_t kNowhere = std::numeric_limits<std::uint32_t>::max();

constexpr std::uint64_t kAddrMask = (std::uint64_t{1} << kAddrBits) - 1;

bool fetch_order(const OorwRecord& a, const OorwRecord& b) {
  // Forced fetches happen before the consumer's reads, transfers after the trigger's.
  return std::tuple(a.trigger, !a.forced, a.trigger_operand) < std::tuple(b.trigger, !b.forced, b.trigger_operand);
}

}  // namespace

std::uint64_t encode_instruction(const AccelInstruction& in) {
  for (auto a : {in.write_addr, in.read_addr[0], in.read_addr[1]})
    if (a >= kMaxWireMem) throw std::invalid_argument("address does not fit in 13 bits");
  std::uint64_t w = in.write_addr;
  w |= std::uint64_t{in.read_addr[0]} << 13;
  w |= std::uint64_t{in.read_addr[1]} << 26;
  w |= std::uint64_t{in.op == OpKind::FreeXor} << 39;
  w |= std::uint64_t{in.live} << 40;
  w |= std::uint64_t{in.wen} << 41;
  w |= std::uint64_t{in.fetch[0]} << 42;
  w |= std::uint64_t{in.fetch[1]} << 43;
  return w;
}

AccelInstruction decode_instruction(std::uint64_t w) {
  if (w >> 44) throw std::invalid_argument("reserved instruction bits are set");
  AccelInstruction in;
  in.write_addr = static_cast<std::uint32_t>(w & kAddrMask);
  in.read_addr[0] = static_cast<std::uint32_t>((w >> 13) & kAddrMask);
  in.read_addr[1] = static_cast<std::uint32_t>((w >> 26) & kAddrMask);
  in.op = (w >> 39) & 1 ? OpKind::FreeXor : OpKind::HalfGate;
  in.live = (w >> 40) & 1;
  in.wen = (w >> 41) & 1;
  in.fetch[0] = (w >> 42) & 1;
  in.fetch[1] = (w >> 43) & 1;
  return in;
}

std::vector<std::vector<std::uint32_t>> use_lists(const FoldedNetlist& f, std::span<const std::uint32_t> order) {
  std::vector<std::vector<std::uint32_t>> uses(f.wire_count());
  for (std::uint32_t i = 0; i < order.size(); ++i) {
    if (order[i] >= f.gates.size()) throw std::invalid_argument("gate index out of range");
    const Gate& g = f.gates[order[i]];
    uses[g.in0].push_back(i);
    if (g.in1 != g.in0) uses[g.in1].push_back(i);
  }
  return uses;
}

namespace {

// Abstract Wire Memory for phase 1.
class WireMemory {
 public:
  WireMemory(std::uint32_t size, std::vector<std::vector<std::uint32_t>> uses, std::uint32_t n_wires)
      : occ_(size, kNoWire), loc_(n_wires, kNowhere), uses_(std::move(uses)), ptr_(n_wires, 0) {}

  std::uint32_t next_use(WireId w) const { return ptr_[w] < uses_[w].size() ? uses_[w][ptr_[w]] : kNever; }
  std::uint32_t where(WireId w) const { return loc_[w]; }
  bool full() const { return next_blank_ == occ_.size(); }

  // Free address for a new occupant: lowest blank, else the furthest-used
  // unblocked resident outside `exclude`. The address comes back blocked.
  std::uint32_t take(std::uint32_t step, std::array<std::uint32_t, 2> exclude, std::vector<Eviction>& log) {
    if (next_blank_ < occ_.size()) return next_blank_++;
    for (auto it = cand_.begin(); it != cand_.end(); ++it) {
      const std::uint32_t a = it->second;
      if (a == exclude[0] || a == exclude[1]) continue;
      const WireId v = occ_[a];
      log.push_back({step, a, v, it->first});
      cand_.erase(it);
      loc_[v] = kNowhere;
      occ_[a] = kNoWire;
      return a;
    }
    throw std::logic_error("no evictable address");
  }

  void place(std::uint32_t a, WireId w) {
    occ_[a] = w;
    loc_[w] = a;
    cand_.insert({next_use(w), a});
  }

  // The read at the current step is done; move w to its next use.
  void advance(WireId w) {
    const std::uint32_t a = loc_[w];
    if (a != kNowhere) cand_.erase({next_use(w), a});
    ++ptr_[w];
    if (a != kNowhere) cand_.insert({next_use(w), a});
  }

 private:
  struct Later {
    bool operator()(const std::pair<std::uint32_t, std::uint32_t>& x,
                    const std::pair<std::uint32_t, std::uint32_t>& y) const {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    }
  };
  std::vector<WireId> occ_;
  std::vector<std::uint32_t> loc_;
  std::vector<std::vector<std::uint32_t>> uses_;
  std::vector<std::uint32_t> ptr_;
  std::set<std::pair<std::uint32_t, std::uint32_t>, Later> cand_;  // (next use, address), unblocked residents
  std::uint32_t next_blank_ = 0;
};

}  // namespace

DraftStream speculate_phase1(const FoldedNetlist& f, std::span<const std::uint32_t> order,
                             std::uint32_t wire_mem_entries) {
  if (wire_mem_entries < 3) throw std::invalid_argument("wire memory needs at least 3 entries");
  if (wire_mem_entries > kMaxWireMem) throw std::invalid_argument("wire memory larger than the address field");
  const std::uint32_t nin = f.input_count();
  auto uses = use_lists(f, order);

  DraftStream d;
  std::vector<WireId> first_use;
  for (WireId w = 0; w < nin; ++w)
    if (!uses[w].empty()) first_use.push_back(w);
  std::stable_sort(first_use.begin(), first_use.end(),
                   [&](WireId a, WireId b) { return uses[a][0] < uses[b][0]; });

  WireMemory mem(wire_mem_entries, std::move(uses), f.wire_count());
  std::vector<std::uint32_t> producer(f.wire_count(), OorwRecord::kNoProducer);
  for (WireId w : first_use) {
    if (mem.full()) break;
    const std::uint32_t a = mem.take(0, {kNowhere, kNowhere}, d.evictions);
    mem.place(a, w);
    d.preload.push_back({w, a});
  }

  d.instrs.reserve(order.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) {
    const Gate& g = f.gates[order[i]];
    AccelInstruction in;
    in.gate = order[i];
    in.op = g.kind == GateKind::And ? OpKind::HalfGate : OpKind::FreeXor;
    const WireId w[2] = {g.in0, g.in1};

    in.write_addr = mem.take(i, {mem.where(w[0]), mem.where(w[1])}, d.evictions);
    for (int s = 0; s < 2; ++s) {
      if (s == 1 && w[1] == w[0]) {
        in.read_addr[1] = in.read_addr[0];
        break;
      }
      std::uint32_t a = mem.where(w[s]);
      if (a == kNowhere) {
        a = mem.take(i, {mem.where(w[1 - s]), kNowhere}, d.evictions);
        mem.place(a, w[s]);
        OorwRecord r;
        r.wire = w[s];
        r.consumer = i;
        r.operand = static_cast<std::uint8_t>(s);
        r.target = a;
        r.producer = producer[w[s]];
        d.records.push_back(r);
      }
      in.read_addr[s] = a;
    }
    mem.advance(w[0]);
    if (w[1] != w[0]) mem.advance(w[1]);
    mem.place(in.write_addr, g.out);
    producer[g.out] = i;
    d.instrs.push_back(in);
  }
  return d;
}

void speculate_phase2(const FoldedNetlist& f, DraftStream& d) {
  auto& ins = d.instrs;
  const std::uint32_t n = static_cast<std::uint32_t>(ins.size());
  std::uint32_t naddr = 0;
  for (const auto& in : ins) naddr = std::max({naddr, in.write_addr + 1, in.read_addr[0] + 1, in.read_addr[1] + 1});
  std::vector<std::vector<std::uint32_t>> readers(naddr), writers(naddr);
  for (std::uint32_t i = 0; i < n; ++i) {
    readers[ins[i].read_addr[0]].push_back(i);
    if (ins[i].read_addr[1] != ins[i].read_addr[0]) readers[ins[i].read_addr[1]].push_back(i);
    writers[ins[i].write_addr].push_back(i);
  }

  for (auto& r : d.records) {
    const auto& rd = readers[r.target];
    auto it = std::lower_bound(rd.begin(), rd.end(), r.consumer);
    bool placed = false;
    if (it != rd.begin()) {
      const std::uint32_t t = *std::prev(it);
      const bool after_producer = r.producer == OorwRecord::kNoProducer || t > r.producer;
      for (std::uint8_t s = 0; s < 2 && after_producer && !placed; ++s) {
        if (ins[t].read_addr[s] != r.target || ins[t].fetch[s]) continue;
        ins[t].fetch[s] = true;
        r.trigger = t;
        r.trigger_operand = s;
        placed = true;
        // Writers between the transfer and the consumer would clobber it.
        const auto& wr = writers[r.target];
        for (auto j = std::upper_bound(wr.begin(), wr.end(), t); j != wr.end() && *j < r.consumer; ++j)
          ins[*j].wen = ins[*j].live = true;
      }
    }
    if (!placed) {
      // Demand fetch at the consumer; marked in the manifest, no fetch bit.
      r.forced = true;
      r.trigger = r.consumer;
      r.trigger_operand = r.operand;
    }
    if (r.producer != OorwRecord::kNoProducer) ins[r.producer].live = true;
  }

  const std::uint32_t nin = f.input_count();
  std::vector<std::uint32_t> pos_of_gate(f.gates.size(), kNowhere);
  for (std::uint32_t i = 0; i < n; ++i) pos_of_gate[ins[i].gate] = i;
  for (const WireRef& o : f.outputs)
    if (o.wire >= nin && pos_of_gate[o.wire - nin] != kNowhere) ins[pos_of_gate[o.wire - nin]].live = true;

  std::sort(d.records.begin(), d.records.end(), fetch_order);
}

std::uint32_t CoreProgram::slot_of(WireId w) const {
  auto it = std::lower_bound(dram_wires.begin(), dram_wires.end(), w);
  if (it == dram_wires.end() || *it != w) throw std::out_of_range("wire has no DRAM slot");
  return static_cast<std::uint32_t>(it - dram_wires.begin());
}

CoreProgram speculate(const FoldedNetlist& f, std::span<const std::uint32_t> order, std::uint32_t wire_mem_entries) {
  DraftStream d = speculate_phase1(f, order, wire_mem_entries);
  speculate_phase2(f, d);
  CoreProgram p;
  p.wire_mem_entries = wire_mem_entries;
  const std::uint32_t nin = f.input_count();
  std::vector<WireId> dw;
  for (const auto& in : d.instrs) {
    const Gate& g = f.gates[in.gate];
    for (WireId w : {g.in0, g.in1})
      if (w < nin) dw.push_back(w);
    if (in.live) dw.push_back(g.out);
  }
  for (const auto& r : d.records) dw.push_back(r.wire);
  std::sort(dw.begin(), dw.end());
  dw.erase(std::unique(dw.begin(), dw.end()), dw.end());
  p.instrs = std::move(d.instrs);
  p.records = std::move(d.records);
  p.preload = std::move(d.preload);
  p.dram_wires = std::move(dw);
  return p;
}

SpeculationAudit verify_speculation(const FoldedNetlist& f, const CoreProgram& p) {
  SpeculationAudit rep;
  auto fail = [&](std::uint32_t i, const std::string& msg) {
    if (rep.ok) {
      rep.first_instruction = i;
      rep.first_message = "instruction " + std::to_string(i) + ": " + msg;
    }
    rep.ok = false;
    ++rep.violations;
  };
  const std::uint32_t m = p.wire_mem_entries, nin = f.input_count();
  std::vector<WireId> mem(m, kNoWire);
  std::vector<std::uint8_t> in_dram(f.wire_count(), 0);
  std::fill_n(in_dram.begin(), nin, 1);
  for (const auto& pl : p.preload) {
    if (pl.addr >= m || pl.wire >= nin) {
      fail(0, "bad preload entry");
      continue;
    }
    mem[pl.addr] = pl.wire;
  }
  auto wire_name = [](WireId w) { return w == kNoWire ? std::string("nothing") : "wire " + std::to_string(w); };

  std::size_t next_rec = 0;
  for (std::uint32_t i = 0; i < p.instrs.size(); ++i) {
    const AccelInstruction& in = p.instrs[i];
    if (in.gate >= f.gates.size()) {
      fail(i, "gate index out of range");
      continue;
    }
    if (in.write_addr >= m || in.read_addr[0] >= m || in.read_addr[1] >= m) {
      fail(i, "address out of range");
      continue;
    }
    const Gate& g = f.gates[in.gate];
    if ((in.op == OpKind::HalfGate) != (g.kind == GateKind::And)) fail(i, "op bit does not match the gate");

    // Records handled at this instruction: forced ones first, then one per fetch bit.
    std::vector<const OorwRecord*> forced, moved;
    while (next_rec < p.records.size() && p.records[next_rec].trigger == i && p.records[next_rec].forced)
      forced.push_back(&p.records[next_rec++]);
    for (int s = 0; s < 2; ++s) {
      const bool rec = next_rec < p.records.size() && p.records[next_rec].trigger == i &&
                       p.records[next_rec].trigger_operand == s;
      if (rec && in.fetch[s]) {
        moved.push_back(&p.records[next_rec++]);
      } else if (rec) {
        fail(i, "record for " + wire_name(p.records[next_rec++].wire) + " has no fetch bit");
      } else if (in.fetch[s]) {
        fail(i, "fetch bit " + std::to_string(s) + " has no out-of-range record");
      }
    }
    auto transfer = [&](const OorwRecord& r) {
      if (r.target >= m) return fail(i, "fetch target out of range");
      if (!in_dram[r.wire]) fail(i, "fetch of " + wire_name(r.wire) + " before it reaches DRAM");
      mem[r.target] = r.wire;
    };
    for (auto* r : forced) {
      if (r->consumer != i) fail(i, "forced fetch away from its consumer");
      transfer(*r);
    }
    const WireId want[2] = {g.in0, g.in1};
    for (int s = 0; s < 2; ++s)
      if (mem[in.read_addr[s]] != want[s])
        fail(i, "operand " + std::to_string(s) + " reads " + wire_name(mem[in.read_addr[s]]) + ", expected " +
                    wire_name(want[s]));
    for (auto* r : moved) {
      if (in.read_addr[r->trigger_operand] != r->target) fail(i, "fetch trigger does not read the target address");
      if (r->trigger >= r->consumer) fail(i, "fetch trigger is not before its consumer");
      transfer(*r);
    }
    if (!in.wen) mem[in.write_addr] = g.out;
    if (in.live) in_dram[g.out] = 1;
  }
  for (; next_rec < p.records.size(); ++next_rec)
    fail(static_cast<std::uint32_t>(p.instrs.size()), "record out of fetch order or past the stream");

  std::vector<std::uint8_t> here(f.gates.size(), 0);
  for (const auto& in : p.instrs)
    if (in.gate < here.size()) here[in.gate] = 1;
  for (const WireRef& o : f.outputs)
    if (o.wire >= nin && here[o.wire - nin] && !in_dram[o.wire])
      fail(static_cast<std::uint32_t>(p.instrs.size()), "output " + wire_name(o.wire) + " never written to DRAM");
  return rep;
}

Program speculate_program(const FoldedNetlist& f, const Schedule& s, std::uint32_t wire_mem_entries) {
  if (const std::string why = check_schedule(f, s); !why.empty()) throw std::invalid_argument(why);
  Program p;
  for (const auto& order : s.per_core) p.cores.push_back(speculate(f, order, wire_mem_entries));
  std::uint64_t at = 0;
  for (const auto& c : p.cores) {
    p.instr_base.push_back(at);
    at += 8 * c.instrs.size();
  }
  for (const auto& c : p.cores) {
    p.table_base.push_back(at);
    for (const auto& in : c.instrs) at += in.op == OpKind::HalfGate ? 32 : 0;
  }
  for (const auto& c : p.cores) {
    p.slot_base.push_back(at);
    at += 16 * c.dram_wires.size();
  }
  return p;
}

std::vector<std::uint8_t> Program::binary() const {
  std::vector<std::uint8_t> out;
  for (const auto& c : cores)
    for (const auto& in : c.instrs) {
      const std::uint64_t w = encode_instruction(in);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(w >> (8 * b)));
    }
  return out;
}

std::string Program::manifest_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["wire_mem_entries"] = cores.empty() ? 0u : cores[0].wire_mem_entries;
  j["cores"] = ordered_json::array();
  for (std::size_t c = 0; c < cores.size(); ++c) {
    const CoreProgram& cp = cores[c];
    ordered_json e;
    e["instr_base"] = instr_base[c];
    e["instr_count"] = cp.instrs.size();
    e["table_base"] = table_base[c];
    e["slot_base"] = slot_base[c];
    e["oorw_slots"] = ordered_json::array();
    for (std::size_t k = 0; k < cp.dram_wires.size(); ++k)
      e["oorw_slots"].push_back({{"wire", cp.dram_wires[k]}, {"slot", k}});
    e["fetches"] = ordered_json::array();
    for (const auto& r : cp.records)
      e["fetches"].push_back({{"wire", r.wire},
                              {"slot", cp.slot_of(r.wire)},
                              {"consumer", r.consumer},
                              {"operand", r.operand},
                              {"target", r.target},
                              {"producer", r.producer == OorwRecord::kNoProducer ? -1 : std::int64_t{r.producer}},
                              {"trigger", r.trigger},
                              {"trigger_operand", r.trigger_operand},
                              {"forced", r.forced}});
    e["preload"] = ordered_json::array();
    for (const auto& pl : cp.preload) e["preload"].push_back({{"wire", pl.wire}, {"addr", pl.addr}});
    j["cores"].push_back(std::move(e));
  }
  return j.dump() + "\n";
}

Program Program::load(const FoldedNetlist& f, const Schedule& s, std::span<const std::uint8_t> bin,
                      const std::string& manifest) {
  const auto j = nlohmann::json::parse(manifest);
  Program p;
  const auto& cores = j.at("cores");
  if (cores.size() != s.per_core.size()) throw std::invalid_argument("manifest and schedule disagree on core count");
  const std::uint32_t m = j.at("wire_mem_entries").get<std::uint32_t>();
  for (std::size_t c = 0; c < cores.size(); ++c) {
    const auto& e = cores[c];
    CoreProgram cp;
    cp.wire_mem_entries = m;
    const std::uint64_t base = e.at("instr_base").get<std::uint64_t>();
    const std::size_t count = e.at("instr_count").get<std::size_t>();
    if (count != s.per_core[c].size()) throw std::invalid_argument("instruction count differs from the schedule");
    if (base + 8 * count > bin.size()) throw std::invalid_argument("instruction file is truncated");
    for (std::size_t k = 0; k < count; ++k) {
      std::uint64_t w = 0;
      for (int b = 0; b < 8; ++b) w |= std::uint64_t{bin[base + 8 * k + b]} << (8 * b);
      AccelInstruction in = decode_instruction(w);
      in.gate = s.per_core[c][k];
      if (in.gate >= f.gates.size()) throw std::invalid_argument("schedule gate out of range");
      cp.instrs.push_back(in);
    }
    for (const auto& x : e.at("oorw_slots")) cp.dram_wires.push_back(x.at("wire").get<WireId>());
    if (!std::is_sorted(cp.dram_wires.begin(), cp.dram_wires.end()))
      throw std::invalid_argument("DRAM slots must be in wire order");
    for (const auto& x : e.at("fetches")) {
      OorwRecord r;
      r.wire = x.at("wire").get<WireId>();
      r.consumer = x.at("consumer").get<std::uint32_t>();
      r.operand = x.at("operand").get<std::uint8_t>();
      r.target = x.at("target").get<std::uint32_t>();
      const std::int64_t prod = x.at("producer").get<std::int64_t>();
      r.producer = prod < 0 ? OorwRecord::kNoProducer : static_cast<std::uint32_t>(prod);
      r.trigger = x.at("trigger").get<std::uint32_t>();
      r.trigger_operand = x.at("trigger_operand").get<std::uint8_t>();
      r.forced = x.at("forced").get<bool>();
      if (r.wire >= f.wire_count() || r.consumer >= count) throw std::invalid_argument("fetch entry out of range");
      cp.records.push_back(r);
    }
    for (const auto& x : e.at("preload")) cp.preload.push_back({x.at("wire").get<WireId>(), x.at("addr").get<std::uint32_t>()});
    p.instr_base.push_back(base);
    p.table_base.push_back(e.at("table_base").get<std::uint64_t>());
    p.slot_base.push_back(e.at("slot_base").get<std::uint64_t>());
    p.cores.push_back(std::move(cp));
  }
  return p;
}

}  // namespace gcx
