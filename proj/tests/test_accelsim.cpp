#include <doctest.h>

#include <random>

#include "gcx/accelsim.hpp"
#include "gcx/circuitgen.hpp"
#include "support.hpp"

using namespace gcx;

namespace {

FoldedNetlist random_folded(std::mt19937_64& rng, std::uint32_t gates, std::uint32_t locality) {
  testing::RandomNetlistOptions o;
  o.gates = gates;
  o.locality = locality;
  return fold_inv(testing::random_netlist(rng, o));
}

FoldedNetlist parallel_rows(std::mt19937_64& rng, int rows, std::uint32_t gates) {
  std::vector<Netlist> parts;
  for (int i = 0; i < rows; ++i) {
    testing::RandomNetlistOptions o;
    o.gates = gates;
    o.locality = 24;
    parts.push_back(testing::random_netlist(rng, o));
  }
  return fold_inv(concat_parallel(parts));
}

Program compile(const FoldedNetlist& f, ScheduleMode mode, unsigned cores, std::uint32_t wire_mem) {
  ScheduleOptions so;
  so.mode = mode;
  so.cores = cores;
  so.wire_mem_entries = wire_mem;
  return speculate_program(f, make_schedule(f, so), wire_mem);
}

void check_ledger(const SimStats& s) {
  std::uint64_t busy = 0;
  for (const auto& c : s.per_core) {
    CHECK(c.total == c.busy + c.pipeline_stall + c.memory_stall);
    busy += c.busy;
  }
  CHECK(s.busy_cycles == busy);
}

// a is evicted after its first read and then read twice.
FoldedNetlist reread_once() {
  return fold_inv(Netlist::from_raw(2, 0, std::vector<WireId>{5},
                                    std::vector<Gate>{{GateKind::Xor, 0, 1, 2},
                                                      {GateKind::Xor, 2, 1, 3},
                                                      {GateKind::Xor, 3, 0, 4},
                                                      {GateKind::Xor, 4, 0, 5}}));
}

}  // namespace

TEST_CASE("config file") {
  CHECK(parse_sim_config("") == SimConfig{});
  SimConfig c;
  c.cores = 4;
  c.dram_latency = 37;
  c.mode = SimMode::Garble;
  c.policy = MemoryPolicy::SingleUse;
  CHECK(parse_sim_config(to_config_text(c)) == c);
  const auto d = parse_sim_config("# comment\ncores = 2   # trailing\n\nmode = \"functional\"\n");
  CHECK(d.cores == 2);
  CHECK(d.mode == SimMode::Functional);
  CHECK_THROWS_AS(parse_sim_config("colors = 3"), ConfigError);
  CHECK_THROWS_AS(parse_sim_config("cores = -1"), ConfigError);
  CHECK_THROWS_AS(parse_sim_config("cores"), ConfigError);
  CHECK_THROWS_AS(parse_sim_config("cores = 0"), ConfigError);
  CHECK_THROWS_AS(parse_sim_config("mode = fast"), ConfigError);
  CHECK_THROWS_AS(parse_sim_config("wire_mem_entries = 9000"), ConfigError);
}

TEST_CASE("one FreeXOR completes after preempt, read, execute and write") {
  const auto f = fold_inv(Netlist::from_raw(1, 1, std::vector<WireId>{2},
                                            std::vector<Gate>{{GateKind::Xor, 0, 1, 2}}));
  const Program p = compile(f, ScheduleMode::DepthFirst, 1, 8192);
  SimConfig c;
  c.mode = SimMode::Functional;
  SimInputs in;
  in.bits = {1, 0};
  const auto r = run(f, p, c, in);
  CHECK(r.stats.total_cycles == 1 + 3 + 1 + 2);
  CHECK(r.stats.busy_cycles == 1);
  CHECK(r.stats.memory_stall_cycles == 0);
  CHECK(r.stats.pipeline_stall_cycles == 6);
  CHECK(r.outputs == Bits{1});
  check_ledger(r.stats);
}

TEST_CASE("dependent chain pays forwarding or the memory path") {
  // g1 uses g0 directly (forwarded); g2 uses g0 again through Wire Memory.
  const auto f = fold_inv(Netlist::from_raw(
      1, 1, std::vector<WireId>{4},
      std::vector<Gate>{{GateKind::Xor, 0, 1, 2}, {GateKind::Xor, 2, 1, 3}, {GateKind::Xor, 2, 3, 4}}));
  Schedule s;
  s.per_core = {{0, 1, 2}};
  const Program p = speculate_program(f, s, 8192);
  SimConfig c;
  c.mode = SimMode::Functional;
  SimInputs in;
  in.bits = {1, 1};
  const auto r = run(f, p, c, in);
  // E0 = 4, E1 = 5 (forwarded), E2 = max(6 forwarded g1, 4 + 1 + 5 from memory) = 10.
  CHECK(r.stats.total_cycles == 10 + 1 + 2);
  CHECK(r.stats.per_core[0].pipeline_stall == 13 - 3);
  check_ledger(r.stats);
}

TEST_CASE("functional outputs match plaintext evaluation") {
  std::mt19937_64 rng(31);
  std::vector<FoldedNetlist> corpus;
  for (int i = 0; i < 6; ++i) corpus.push_back(random_folded(rng, 80 + 60 * i, i % 2 ? 8 : 100));
  corpus.push_back(parallel_rows(rng, 6, 90));
  corpus.push_back(fold_inv(gen_mul_xfbq(FixedPointFormat{8, 0, false}, true)));
  corpus.push_back(fold_inv(gen_adder(FixedPointFormat{16, 0, false})));
  for (std::size_t b = 0; b < corpus.size(); ++b) {
    const auto& f = corpus[b];
    for (auto mode : {ScheduleMode::DepthFirst, ScheduleMode::SegmentReorder, ScheduleMode::Cpfe}) {
      for (std::uint32_t mem : {5u, 24u, 8192u}) {
        const Program p = compile(f, mode, 4, mem);
        for (const auto& cp : p.cores) REQUIRE(verify_speculation(f, cp).ok);
        for (auto pol : {MemoryPolicy::Reuse, MemoryPolicy::SingleUse}) {
          SimConfig c;
          c.mode = SimMode::Functional;
          c.policy = pol;
          for (int t = 0; t < 3; ++t) {
            CAPTURE(b);
            CAPTURE(mem);
            SimInputs in;
            in.bits = testing::random_bits(rng, f.input_count());
            const auto r = run(f, p, c, in);
            REQUIRE(r.outputs == eval_plain(f, in.bits));
            check_ledger(r.stats);
          }
        }
      }
    }
  }
}

TEST_CASE("garble mode reproduces the reference garbler; evaluate mode decodes") {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 4; ++i) {
    const auto f = i == 3 ? fold_inv(gen_mul_conventional(FixedPointFormat{8, 0, false})) : random_folded(rng, 150, 12);
    const Program p = compile(f, ScheduleMode::Cpfe, 2, 6);
    SimConfig c;
    c.mode = SimMode::Garble;
    SimInputs in;
    in.seed = 1000 + i;
    const auto g = run(f, p, c, in);
    const GarbleResult ref = garble(f, in.seed);
    CHECK(g.garbled == ref.circuit);
    check_ledger(g.stats);

    c.mode = SimMode::Evaluate;
    in.garbled = &ref;
    for (int t = 0; t < 4; ++t) {
      in.bits = testing::random_bits(rng, f.input_count());
      const auto e = run(f, p, c, in);
      CHECK(e.outputs == eval_plain(f, in.bits));
      CHECK(e.stats.total_cycles <= g.stats.total_cycles);
    }
  }
}

TEST_CASE("garbling costs three extra cycles per AND on a stall-free chain") {
  // Chain of ANDs, each feeding the next: every step waits on the previous result.
  std::vector<Gate> gates;
  WireId prev = 0;
  const int len = 6;
  for (int i = 0; i < len; ++i) {
    gates.push_back({GateKind::And, prev, 1, static_cast<WireId>(2 + i)});
    prev = 2 + i;
  }
  const auto f = fold_inv(Netlist::from_raw(1, 1, std::vector<WireId>{prev}, gates));
  const Program p = compile(f, ScheduleMode::DepthFirst, 1, 8192);
  SimConfig c;
  c.mode = SimMode::Evaluate;
  const GarbleResult ref = garble(f, 5);
  SimInputs in;
  in.bits = {1, 1};
  in.garbled = &ref;
  const auto e = run(f, p, c, in);
  c.mode = SimMode::Garble;
  const auto g = run(f, p, c, in);
  CHECK(e.stats.memory_stall_cycles == 0);
  CHECK(g.stats.total_cycles - e.stats.total_cycles == 3 * len);
}

TEST_CASE("reuse fetches a refetched wire once; single use fetches it per read") {
  const auto f = reread_once();
  Schedule s;
  s.per_core = {{0, 1, 2, 3}};
  const Program p = speculate_program(f, s, 3);
  REQUIRE(p.cores[0].records.size() == 1);
  SimConfig c;
  c.mode = SimMode::Functional;
  SimInputs in;
  in.bits = {1, 0};
  const auto reuse = run(f, p, c, in);
  c.policy = MemoryPolicy::SingleUse;
  const auto single = run(f, p, c, in);
  CHECK(reuse.stats.dram_reads("oorw") == 1);
  CHECK(single.stats.dram_reads("oorw") == 2);
  CHECK(reuse.stats.memory_stall_cycles < single.stats.memory_stall_cycles);
  CHECK(reuse.outputs == single.outputs);
}

TEST_CASE("reuse never stalls on memory more than single use") {
  std::mt19937_64 rng(33);
  std::vector<FoldedNetlist> corpus;
  for (int i = 0; i < 8; ++i) corpus.push_back(random_folded(rng, 200 + 100 * i, i % 2 ? 6 : 60));
  corpus.push_back(parallel_rows(rng, 8, 150));
  corpus.push_back(fold_inv(gen_mul_xfbq(FixedPointFormat{16, 0, false}, true)));
  for (const auto& f : corpus) {
    for (std::uint32_t mem : {8u, 32u, 128u}) {
      const Program p = compile(f, ScheduleMode::Cpfe, 4, mem);
      SimConfig c;
      c.mode = SimMode::Functional;
      SimInputs in;
      in.bits = testing::random_bits(rng, f.input_count());
      const auto a = run(f, p, c, in);
      c.policy = MemoryPolicy::SingleUse;
      const auto b = run(f, p, c, in);
      CHECK(a.stats.memory_stall_cycles <= b.stats.memory_stall_cycles);
      CHECK(a.stats.dram_reads("oorw") <= b.stats.dram_reads("oorw"));
    }
  }
}

TEST_CASE("traffic accounting and determinism") {
  std::mt19937_64 rng(34);
  const auto f = parallel_rows(rng, 4, 400);
  const Program p = compile(f, ScheduleMode::Cpfe, 4, 16);
  SimConfig c;
  c.cores = 4;
  c.instr_mem_bytes = 1024;  // 32-word windows force refills
  c.table_mem_bytes = 256;   // 8 tables
  const GarbleResult ref = garble(f, 9);
  SimInputs in;
  in.bits = testing::random_bits(rng, f.input_count());
  in.garbled = &ref;
  const auto r = run(f, p, c, in);
  CHECK(r.outputs == eval_plain(f, in.bits));
  std::size_t words = 0, labels_in = 0, records = 0;
  for (const auto& cp : p.cores) {
    words += cp.instrs.size();
    labels_in += cp.preload.size();
    records += cp.records.size();
  }
  const auto& s = r.stats.streams;
  CHECK(s.at("instructions").read_bytes == 8 * words);
  CHECK(s.at("tables").read_bytes == 32 * f.and_count());
  CHECK(s.at("tables").reads == f.and_count());
  CHECK(s.at("preload").reads == labels_in);
  CHECK(s.at("oorw").reads == records);
  CHECK(s.at("oorw").read_bytes == 16 * records);
  CHECK(s.at("live_writeback").write_bytes == 16 * s.at("live_writeback").writes);
  CHECK(r.stats.oorw_count == records);
  check_ledger(r.stats);

  const auto again = run(f, p, c, in);
  CHECK(again.stats == r.stats);
  CHECK(again.stats.to_json() == r.stats.to_json());
  CHECK(r.stats.to_json().find("\"schema\": \"gcx.simstats/1\"") != std::string::npos);
  CHECK(SimStats::csv_header().rfind("label,total_cycles", 0) == 0);
}

TEST_CASE("broken programs are diagnosed") {
  const auto f = reread_once();
  Schedule s;
  s.per_core = {{0, 1, 2, 3}};
  Program p = speculate_program(f, s, 3);
  SimConfig c;
  c.mode = SimMode::Functional;
  SimInputs in;
  in.bits = {0, 1};
  Program bad = p;
  bad.cores[0].instrs[3].read_addr[1] = bad.cores[0].instrs[3].read_addr[0];
  CHECK_THROWS_AS(run(f, bad, c, in), SimError);
  // Output producer that never writes to DRAM.
  bad = p;
  bad.cores[0].instrs[3].live = false;
  CHECK_THROWS_AS(run(f, bad, c, in), SimError);
  SimConfig small = c;
  small.wire_mem_entries = 2;
  CHECK_THROWS_AS(run(f, p, small, in), ConfigError);
}
