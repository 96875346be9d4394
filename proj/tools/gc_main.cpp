// gc: command-line front end for the gcx toolkit.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "gcx/accelsim.hpp"
#include "gcx/bench.hpp"
#include "gcx/circuitgen.hpp"
#include "gcx/garble.hpp"
#include "gcx/layernorm.hpp"
#include "gcx/netlist.hpp"
#include "gcx/protocol.hpp"
#include "gcx/scheduler.hpp"
#include "gcx/speculator.hpp"

using namespace gcx;

namespace {

// Bad input files, options or specs; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << data;
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Writes to `path`, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& data) {
  if (path.empty() || path == "-")
    std::cout << data;
  else
    write_file(path, data);
}

// Hex is read as one number; input bit i is bit i of that number.
Bits bits_from_hex(std::string hex, std::size_t n) {
  if (hex.rfind("0x", 0) == 0 || hex.rfind("0X", 0) == 0) hex = hex.substr(2);
  Bits b(n, 0);
  std::size_t bit = 0;
  for (auto it = hex.rbegin(); it != hex.rend(); ++it) {
    const char c = *it;
    int v;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    else throw UsageError(std::string("bad hex digit '") + c + "'");
    for (int k = 0; k < 4; ++k, ++bit) {
      const bool set = (v >> k) & 1;
      if (bit < n) b[bit] = set;
      else if (set) throw UsageError("input value has more than " + std::to_string(n) + " bits");
    }
  }
  return b;
}

std::string hex_from_bits(const Bits& b) {
  if (b.empty()) return "0";
  std::string out;
  for (std::size_t i = 0; i < b.size(); i += 4) {
    int v = 0;
    for (std::size_t k = 0; k < 4 && i + k < b.size(); ++k) v |= (b[i + k] & 1) << k;
    out.push_back("0123456789abcdef"[v]);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

Netlist load_netlist(const std::string& path) {
  try {
    return read_bristol_file(path);
  } catch (const NetlistError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

Schedule load_schedule(const std::string& path) {
  try {
    return Schedule::from_json(read_file(path));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

SimConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return parse_sim_config(read_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gc: garbled-circuit compiler, accelerator simulator and protocol harness"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a circuit in Bristol format");
  std::string gen_fn, gen_out, gen_style = "xfbq", gen_qerror = "on";
  unsigned gen_width = 16, gen_frac = 11, gen_n = 8;
  bool gen_reduced = false, gen_full_width = false;
  gen->add_option("function", gen_fn,
                  "mul, adder, sub, comparator, identity, gelu, exp, softmax or layernorm")->required();
  gen->add_option("--width", gen_width, "operand width in bits");
  gen->add_option("--frac", gen_frac, "fraction bits (gelu, exp, softmax, layernorm)");
  gen->add_option("--n", gen_n, "row length (softmax, layernorm)");
  gen->add_option("--style", gen_style, "multiplier style")->check(CLI::IsMember({"xfbq", "conv"}));
  gen->add_option("--qerror", gen_qerror, "Q-error correction for the xfbq multiplier")->check(CLI::IsMember({"on", "off"}));
  gen->add_flag("--full-width", gen_full_width, "keep all 2n product bits");
  gen->add_flag("--reduced", gen_reduced, "layernorm: reduced circuit for the offload protocol");
  gen->add_option("-o,--output", gen_out, "output file (default stdout)");

  // census
  auto* cen = app.add_subcommand("census", "count gates");
  std::string cen_in;
  bool cen_json = false;
  cen->add_option("netlist", cen_in)->required();
  cen->add_flag("--json", cen_json, "print {\"and\",\"xor\",\"inv\",\"total\"}");

  // garble / eval
  auto* gar = app.add_subcommand("garble", "garble a netlist; the file also carries the garbler's input keys");
  std::string gar_in, gar_out;
  std::uint64_t gar_seed = 0;
  gar->add_option("netlist", gar_in)->required();
  gar->add_option("--seed", gar_seed)->required();
  gar->add_option("-o,--output", gar_out)->required();

  auto* ev = app.add_subcommand("eval", "evaluate a garbled circuit and decode the outputs (hex)");
  std::string ev_net, ev_gc, ev_inputs;
  ev->add_option("netlist", ev_net)->required();
  ev->add_option("gc-file", ev_gc)->required();
  ev->add_option("--inputs", ev_inputs, "all inputs as one hex number; input i is bit i")->required();

  // schedule
  auto* sch = app.add_subcommand("schedule", "partition and order gates per core");
  std::string sch_in, sch_out, sch_mode = "cpfe";
  std::uint32_t sch_mem = 8192;
  unsigned sch_cores = 16;
  sch->add_option("netlist", sch_in)->required();
  sch->add_option("--mode", sch_mode)->check(CLI::IsMember({"df", "fr", "sr", "cpfe"}));
  sch->add_option("--wire-mem", sch_mem);
  sch->add_option("--cores", sch_cores);
  sch->add_option("-o,--output", sch_out);

  // speculate
  auto* spc = app.add_subcommand("speculate", "emit accelerator instructions; writes <out> and <out>.json");
  std::string spc_in, spc_sched, spc_out;
  std::uint32_t spc_mem = 8192;
  spc->add_option("netlist", spc_in)->required();
  spc->add_option("--sched", spc_sched)->required();
  spc->add_option("--wire-mem", spc_mem);
  spc->add_option("-o,--output", spc_out)->required();

  // sim
  auto* sim = app.add_subcommand("sim", "cycle-level simulation");
  std::string sim_net, sim_sched, sim_instr, sim_mode, sim_policy, sim_cfg, sim_report, sim_inputs, sim_csv;
  std::uint64_t sim_seed = 0;
  sim->add_option("--netlist", sim_net)->required();
  sim->add_option("--sched", sim_sched)->required();
  sim->add_option("--instr", sim_instr, "program from `gc speculate`; generated when absent");
  sim->add_option("--mode", sim_mode)->check(CLI::IsMember({"evaluate", "garble", "functional"}));
  sim->add_option("--policy", sim_policy)->check(CLI::IsMember({"reuse", "single_use"}));
  sim->add_option("--config", sim_cfg, "flat key = value file");
  sim->add_option("--seed", sim_seed, "garbling seed and input seed");
  sim->add_option("--inputs", sim_inputs, "hex inputs (default: drawn from the seed)");
  sim->add_option("--report", sim_report, "stats JSON (default stdout)");
  sim->add_option("--csv", sim_csv, "also write a one-row CSV");

  // protocol
  auto* pro = app.add_subcommand("protocol", "two-party protocol runs");
  pro->require_subcommand(1);
  auto* pln = pro->add_subcommand("layernorm", "linear layer then LayerNorm with statistics outside GC");
  unsigned pl_width = 16, pl_frac = 11, pl_n = 8;
  std::size_t pl_rows = 128;
  std::uint64_t pl_seed = 0;
  bool pl_audit = false, pl_zero = false, pl_inject = false;
  std::string pl_report, pl_transcript;
  pln->add_option("--width", pl_width);
  pln->add_option("--frac", pl_frac);
  pln->add_option("--n", pl_n);
  pln->add_option("--rows", pl_rows);
  pln->add_option("--seed", pl_seed);
  pln->add_flag("--audit", pl_audit, "exit 1 if the transcript audit fails");
  pln->add_flag("--zero-masks", pl_zero, "test mode: all masks zero");
  pln->add_flag("--inject-plain", pl_inject, "test mode: the client also sends its input in the clear");
  pln->add_option("--report", pl_report);
  pln->add_option("--transcript", pl_transcript, "JSON lines, one message per line");

  // bench
  auto* ben = app.add_subcommand("bench", "experiment driver");
  ben->require_subcommand(1);
  auto* brun = ben->add_subcommand("run", "run every (benchmark, mode) cell of a spec");
  std::string br_spec, br_out;
  brun->add_option("spec", br_spec)->required();
  brun->add_option("--out", br_out, "writes <out>.json and <out>.csv (overrides out_prefix)");
  auto* bdiff = ben->add_subcommand("diff", "per-metric ratios b / a");
  std::string bd_a, bd_b;
  bool bd_json = false;
  bdiff->add_option("a", bd_a)->required();
  bdiff->add_option("b", bd_b)->required();
  bdiff->add_flag("--json", bd_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      Netlist n;
      if (gen_fn == "mul") {
        const FixedPointFormat f{gen_width, 0, false};
        if (gen_style == "xfbq")
          n = gen_mul_xfbq(f, gen_qerror == "on", gen_full_width);
        else
          n = gen_full_width ? gen_mul_conventional_full(f) : gen_mul_conventional(f);
      } else if (gen_fn == "layernorm" || gen_fn == "layernorm_reduced") {
        LayerNormConfig c;
        c.fmt = {gen_width, gen_frac, true};
        c.n = gen_n;
        n = gen_layernorm(c, gen_reduced || gen_fn == "layernorm_reduced" ? LayerNormVariant::Reduced
                                                                           : LayerNormVariant::Full);
      } else {
        BenchmarkEntry e{gen_fn, gen_fn, gen_width, gen_frac, gen_n};
        n = generate_benchmark(e);
      }
      emit(gen_out, emit_bristol(n));
    } else if (*cen) {
      const GateCensus c = census(load_netlist(cen_in));
      if (cen_json)
        std::cout << census_json(c) << "\n";
      else
        std::cout << "and " << c.and_count << "\nxor " << c.xor_count << "\ninv " << c.inv_count << "\ntotal "
                  << c.total << "\n";
    } else if (*gar) {
      const FoldedNetlist f = fold_inv(load_netlist(gar_in));
      const GarbleResult g = garble(f, gar_seed);
      std::ostringstream o;
      write_garbled(o, g.circuit, f.input_count(), &g.keys);
      write_file(gar_out, o.str());
    } else if (*ev) {
      const FoldedNetlist f = fold_inv(load_netlist(ev_net));
      std::istringstream in(read_file(ev_gc));
      GarbledFile gf;
      try {
        gf = read_garbled(in);
      } catch (const std::exception& e) {
        throw UsageError(ev_gc + ": " + e.what());
      }
      if (!gf.has_keys) throw UsageError(ev_gc + ": no input keys in file");
      if (gf.n_inputs != f.input_count()) throw UsageError("garbled file does not match the netlist's inputs");
      const Bits bits = bits_from_hex(ev_inputs, f.input_count());
      const auto labels = evaluate(f, gf.circuit, encode_inputs(gf.keys, bits));
      std::cout << hex_from_bits(decode(labels, gf.circuit.decode)) << "\n";
    } else if (*sch) {
      ScheduleOptions o;
      o.mode = parse_schedule_mode(sch_mode);
      o.wire_mem_entries = sch_mem;
      o.cores = sch_cores;
      const Schedule s = make_schedule(fold_inv(load_netlist(sch_in)), o);
      emit(sch_out, s.to_json() + "\n");
    } else if (*spc) {
      const FoldedNetlist f = fold_inv(load_netlist(spc_in));
      const Program p = speculate_program(f, load_schedule(spc_sched), spc_mem);
      const auto bin = p.binary();
      write_file(spc_out, std::string(bin.begin(), bin.end()));
      write_file(spc_out + ".json", p.manifest_json());
    } else if (*sim) {
      SimConfig cfg = load_config(sim_cfg);
      if (!sim_mode.empty()) cfg.mode = parse_sim_mode(sim_mode);
      if (!sim_policy.empty()) cfg.policy = parse_memory_policy(sim_policy);
      cfg.validate();
      const FoldedNetlist f = fold_inv(load_netlist(sim_net));
      const Schedule s = load_schedule(sim_sched);
      Program p;
      if (sim_instr.empty() || !std::filesystem::exists(sim_instr)) {
        p = speculate_program(f, s, cfg.wire_mem_entries);
        if (!sim_instr.empty()) {
          const auto bin = p.binary();
          write_file(sim_instr, std::string(bin.begin(), bin.end()));
          write_file(sim_instr + ".json", p.manifest_json());
        }
      } else {
        const std::string bin = read_file(sim_instr);
        const std::vector<std::uint8_t> bytes(bin.begin(), bin.end());
        try {
          p = Program::load(f, s, bytes, read_file(sim_instr + ".json"));
        } catch (const UsageError&) {
          throw;
        } catch (const std::exception& e) {
          throw UsageError(sim_instr + ": " + e.what());
        }
      }
      SimInputs in;
      in.seed = sim_seed;
      if (!sim_inputs.empty()) {
        in.bits = bits_from_hex(sim_inputs, f.input_count());
      } else {
        Prg prg(sim_seed);
        in.bits.resize(f.input_count());
        for (auto& b : in.bits) b = static_cast<std::uint8_t>(prg.next_u64() & 1);
      }
      GarbleResult ref;
      if (cfg.mode == SimMode::Evaluate) {
        ref = garble(f, sim_seed);
        in.garbled = &ref;
      }
      const SimResult r = run(f, p, cfg, in);
      if (cfg.mode != SimMode::Garble && r.outputs != eval_plain(f, in.bits))
        throw std::runtime_error("simulated outputs differ from plaintext evaluation");
      emit(sim_report, r.stats.to_json());
      if (!sim_csv.empty())
        write_file(sim_csv, SimStats::csv_header() + "\n" + r.stats.csv_row(to_string(cfg.mode)) + "\n");
    } else if (*pln) {
      LayerNormConfig c;
      c.fmt = {pl_width, pl_frac, true};
      c.n = pl_n;
      try {
        c.validate();
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
      ProtocolOptions o;
      o.seed = pl_seed;
      o.zero_masks = pl_zero;
      o.inject_plain = pl_inject;
      const LayerNormRun run = run_layernorm_protocol(c, pl_rows, o);
      emit(pl_report, run.report_json() + "\n");
      if (!pl_transcript.empty()) write_file(pl_transcript, run.transcript_jsonl);
      if (pl_audit && !run.audit.pass) {
        for (const auto& v : run.audit.violations) std::cerr << "audit: " << v << "\n";
        return 1;
      }
    } else if (*brun) {
      ExperimentSpec spec = parse_experiment_spec(read_file(br_spec));
      if (!br_out.empty()) spec.out_prefix = br_out;
      const BenchReport rep = run_experiment(spec);
      if (spec.out_prefix.empty()) {
        std::cout << rep.to_json();
      } else {
        write_file(spec.out_prefix + ".json", rep.to_json());
        write_file(spec.out_prefix + ".csv", rep.to_csv());
      }
    } else if (*bdiff) {
      const DiffTable t = diff_reports(BenchReport::from_json(read_file(bd_a)), BenchReport::from_json(read_file(bd_b)));
      std::cout << (bd_json ? t.to_json() : t.to_text());
    }
  } catch (const UsageError& e) {
    std::cerr << "gc: " << e.what() << "\n";
    return 2;
  } catch (const SpecError& e) {
    std::cerr << "gc: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "gc: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "gc: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gc: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
