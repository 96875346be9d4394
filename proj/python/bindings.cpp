#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "gcx/accelsim.hpp"
#include "gcx/bench.hpp"
#include "gcx/circuitgen.hpp"
#include "gcx/garble.hpp"
#include "gcx/layernorm.hpp"
#include "gcx/netlist.hpp"
#include "gcx/nonlinear.hpp"
#include "gcx/protocol.hpp"
#include "gcx/scheduler.hpp"
#include "gcx/speculator.hpp"

namespace py = pybind11;
using namespace gcx;

namespace {

FixedPointFormat fmt_of(unsigned width, unsigned frac, bool is_signed) {
  FixedPointFormat f{width, frac, is_signed};
  f.validate();
  return f;
}

Bits to_bits(const std::vector<int>& v) {
  Bits b;
  b.reserve(v.size());
  for (int x : v) b.push_back(static_cast<std::uint8_t>(x & 1));
  return b;
}

std::vector<int> from_bits(const Bits& b) { return std::vector<int>(b.begin(), b.end()); }

// Garbles with `seed`, evaluates on `inputs` and decodes; returns outputs and counters.
py::dict garble_roundtrip(const Netlist& n, const std::vector<int>& inputs, std::uint64_t seed) {
  const FoldedNetlist f = fold_inv(n);
  const GarbleResult g = garble(f, seed);
  const Bits x = to_bits(inputs);
  if (x.size() != f.input_count()) throw std::invalid_argument("wrong number of input bits");
  std::uint64_t eval_calls = 0;
  const auto labels = evaluate(f, g.circuit, encode_inputs(g.keys, x), &eval_calls);
  py::dict d;
  d["outputs"] = from_bits(decode(labels, g.circuit.decode));
  d["table_bytes"] = g.circuit.table_bytes();
  d["garble_hash_calls"] = g.hash_calls;
  d["eval_hash_calls"] = eval_calls;
  return d;
}

std::string schedule_json(const Netlist& n, const std::string& mode, std::uint32_t wire_mem, unsigned cores) {
  ScheduleOptions so;
  so.mode = parse_schedule_mode(mode);
  so.wire_mem_entries = wire_mem;
  so.cores = cores;
  return make_schedule(fold_inv(n), so).to_json();
}

// Functional simulation; returns the stats JSON and the outputs.
py::dict simulate(const Netlist& n, const std::string& mode, const std::vector<int>& inputs, const std::string& config,
                  std::uint64_t seed) {
  SimConfig cfg = parse_sim_config(config);
  const FoldedNetlist f = fold_inv(n);
  ScheduleOptions so;
  so.mode = parse_schedule_mode(mode);
  so.wire_mem_entries = cfg.wire_mem_entries;
  so.cores = cfg.cores;
  const Program p = speculate_program(f, make_schedule(f, so), cfg.wire_mem_entries);
  GarbleResult g;
  SimInputs in;
  in.bits = to_bits(inputs);
  in.seed = seed;
  if (cfg.mode == SimMode::Evaluate) {
    g = garble(f, seed);
    in.garbled = &g;
  }
  const SimResult r = run(f, p, cfg, in);
  py::dict d;
  d["outputs"] = from_bits(r.outputs);
  d["stats_json"] = r.stats.to_json();
  return d;
}

}  // namespace

PYBIND11_MODULE(_gcx, m) {
  m.doc() = "Garbled-circuit toolkit bindings";

  py::register_exception<NetlistError>(m, "NetlistError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  py::class_<Netlist>(m, "Netlist")
      .def_static("from_bristol", [](const std::string& text) { return parse_bristol(std::string_view(text)); })
      .def("to_bristol", [](const Netlist& n) { return emit_bristol(n); })
      .def_property_readonly("inputs_a", &Netlist::inputs_a)
      .def_property_readonly("inputs_b", &Netlist::inputs_b)
      .def_property_readonly("outputs", &Netlist::output_count)
      .def_property_readonly("gates", &Netlist::gate_count)
      .def("census",
           [](const Netlist& n) {
             const auto c = census(n);
             return py::dict(py::arg("and") = c.and_count, py::arg("xor") = c.xor_count,
                             py::arg("inv") = c.inv_count, py::arg("total") = c.total);
           })
      .def("eval", [](const Netlist& n, const std::vector<int>& in) { return from_bits(eval_plain(n, to_bits(in))); })
      .def("hash", &netlist_hash)
      .def("__eq__", [](const Netlist& a, const Netlist& b) { return a == b; });

  m.def("gen_adder", [](unsigned w) { return gen_adder(fmt_of(w, 0, false)); }, py::arg("width"));
  m.def("gen_mul", [](unsigned w, const std::string& style, bool qerror, bool full_width) {
        const auto f = fmt_of(w, 0, false);
        if (style == "xfbq") return gen_mul_xfbq(f, qerror, full_width);
        if (style == "conv") return full_width ? gen_mul_conventional_full(f) : gen_mul_conventional(f);
        throw std::invalid_argument("style must be xfbq or conv");
      },
      py::arg("width"), py::arg("style") = "xfbq", py::arg("qerror") = true, py::arg("full_width") = false);
  m.def("gen_gelu", [](unsigned w, unsigned frac) { return gen_gelu(fmt_of(w, frac, true)); }, py::arg("width") = 16,
        py::arg("frac") = 11);
  m.def("gen_softmax", [](unsigned w, unsigned frac, unsigned n) { return gen_softmax(fmt_of(w, frac, true), n); },
        py::arg("width") = 16, py::arg("frac") = 11, py::arg("n") = 8);
  m.def("gen_layernorm",
        [](unsigned w, unsigned frac, unsigned n, bool reduced) {
          LayerNormConfig c;
          c.fmt = fmt_of(w, frac, true);
          c.n = n;
          return gen_layernorm(c, reduced ? LayerNormVariant::Reduced : LayerNormVariant::Full);
        },
        py::arg("width") = 16, py::arg("frac") = 11, py::arg("n") = 8, py::arg("reduced") = false);

  m.def("xfbq_value", [](std::uint64_t a, unsigned w) { return xfbq_convert_value(a, w).value(); }, py::arg("a"),
        py::arg("width"));

  m.def("garble_roundtrip", &garble_roundtrip, py::arg("netlist"), py::arg("inputs"), py::arg("seed") = 0);
  m.def("schedule", &schedule_json, py::arg("netlist"), py::arg("mode") = "cpfe", py::arg("wire_mem") = 8192,
        py::arg("cores") = 16);
  m.def("simulate", &simulate, py::arg("netlist"), py::arg("mode") = "cpfe", py::arg("inputs"),
        py::arg("config") = "mode = \"functional\"", py::arg("seed") = 0);

  m.def("layernorm_protocol",
        [](unsigned n, std::size_t rows, std::uint64_t seed, bool inject_plain) {
          LayerNormConfig c;
          c.n = n;
          ProtocolOptions o;
          o.seed = seed;
          o.inject_plain = inject_plain;
          return run_layernorm_protocol(c, rows, o).report_json();
        },
        py::arg("n") = 8, py::arg("rows") = 16, py::arg("seed") = 0, py::arg("inject_plain") = false,
        "Runs the LayerNorm protocol; returns the report JSON.");

  m.def("bench_run", [](const std::string& spec) { return run_experiment(parse_experiment_spec(spec)).to_json(); },
        py::arg("spec"), "Runs a TOML experiment spec; returns the report JSON.");
}
