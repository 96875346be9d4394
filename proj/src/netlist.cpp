#include "gcx/netlist.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace gcx {

std::string_view to_string(GateKind kind) {
  switch (kind) {
    case GateKind::And: return "AND";
    case GateKind::Xor: return "XOR";
    case GateKind::Inv: return "INV";
  }
  return "?";
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : NetlistError("line " + std::to_string(line) + ": " + what), line_(line) {}

Netlist::Netlist(std::uint32_t inputs_a, std::uint32_t inputs_b, std::uint32_t outputs,
                 std::vector<Gate> gates)
    : inputs_a_(inputs_a), inputs_b_(inputs_b), outputs_(outputs), gates_(std::move(gates)) {
  const std::uint32_t nin = input_count();
  const std::uint32_t nw = wire_count();
  if (outputs_ > gates_.size()) throw NetlistError("more outputs than gates");
  const std::uint32_t first_out = nw - outputs_;

  std::vector<std::uint8_t> defined(nw, 0);
  std::fill_n(defined.begin(), nin, 1);
  WireId next_internal = nin;
  for (std::size_t i = 0; i < gates_.size(); ++i) {
    const Gate& g = gates_[i];
    const bool unary = g.kind == GateKind::Inv;
    if (unary != (g.in1 == kNoWire)) throw NetlistError("gate " + std::to_string(i) + ": wrong arity");
    for (WireId w : {g.in0, g.in1}) {
      if (w == kNoWire) continue;
      if (w >= nw || !defined[w])
        throw NetlistError("gate " + std::to_string(i) + ": input wire " + std::to_string(w) + " not yet defined");
    }
    if (g.out < first_out) {
      if (g.out != next_internal)
        throw NetlistError("gate " + std::to_string(i) + ": internal wire not in canonical order");
      ++next_internal;
    } else if (g.out >= nw || defined[g.out]) {
      throw NetlistError("gate " + std::to_string(i) + ": bad output wire " + std::to_string(g.out));
    }
    defined[g.out] = 1;
  }
  if (next_internal != first_out) throw NetlistError("output wires not driven by gates");
}

Netlist Netlist::from_raw(std::uint32_t inputs_a, std::uint32_t inputs_b,
                          std::span<const WireId> output_wires, std::span<const Gate> gates) {
  const std::uint32_t nin = inputs_a + inputs_b;
  const auto nw = static_cast<std::uint32_t>(nin + gates.size());
  const auto nout = static_cast<std::uint32_t>(output_wires.size());
  if (nout > gates.size()) throw NetlistError("more outputs than gates");

  std::unordered_map<WireId, std::uint32_t> out_slot;
  for (std::uint32_t j = 0; j < nout; ++j) {
    if (output_wires[j] < nin) throw NetlistError("circuit input used directly as output");
    if (!out_slot.emplace(output_wires[j], j).second) throw NetlistError("duplicate output wire");
  }

  std::unordered_map<WireId, WireId> remap;
  remap.reserve(gates.size() * 2);
  auto lookup = [&](WireId w, std::size_t gi) -> WireId {
    if (w == kNoWire) return kNoWire;
    if (w < nin) return w;
    auto it = remap.find(w);
    if (it == remap.end())
      throw NetlistError("gate " + std::to_string(gi) + ": wire " + std::to_string(w) + " used before definition");
    return it->second;
  };

  std::vector<Gate> out;
  out.reserve(gates.size());
  WireId next_internal = nin;
  for (std::size_t i = 0; i < gates.size(); ++i) {
    Gate g = gates[i];
    g.in0 = lookup(g.in0, i);
    g.in1 = lookup(g.in1, i);
    if (g.out < nin || remap.count(g.out))
      throw NetlistError("gate " + std::to_string(i) + ": wire " + std::to_string(g.out) + " driven twice");
    WireId fresh;
    if (auto it = out_slot.find(g.out); it != out_slot.end()) {
      fresh = nw - nout + it->second;
    } else {
      fresh = next_internal++;
    }
    remap.emplace(g.out, fresh);
    g.out = fresh;
    out.push_back(g);
  }
  for (WireId w : output_wires)
    if (!remap.count(w)) throw NetlistError("output wire " + std::to_string(w) + " not driven by any gate");
  return Netlist(inputs_a, inputs_b, nout, std::move(out));
}

std::vector<WireId> Netlist::output_wires() const {
  std::vector<WireId> w(outputs_);
  for (std::uint32_t i = 0; i < outputs_; ++i) w[i] = output_wire(i);
  return w;
}

// ---------------------------------------------------------------------------
// Bristol fashion

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::uint64_t parse_uint(std::string_view tok, std::size_t line) {
  if (tok.empty() || tok.size() > 10) throw ParseError(line, "expected a number, got '" + std::string(tok) + "'");
  std::uint64_t v = 0;
  for (char c : tok) {
    if (c < '0' || c > '9') throw ParseError(line, "expected a number, got '" + std::string(tok) + "'");
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  if (v > 0xfffffffeull) throw ParseError(line, "number out of range");
  return v;
}

}  // namespace

Netlist parse_bristol(std::istream& in) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> lines;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto toks = split_ws(raw);
    if (toks.empty()) continue;
    std::vector<std::string> owned(toks.begin(), toks.end());
    lines.emplace_back(lineno, std::move(owned));
  }
  if (lines.size() < 3) throw ParseError(lineno + 1, "truncated header");

  auto num = [](const std::pair<std::size_t, std::vector<std::string>>& l, std::size_t k) {
    return static_cast<std::uint32_t>(parse_uint(l.second[k], l.first));
  };

  const auto& h1 = lines[0];
  if (h1.second.size() != 2) throw ParseError(h1.first, "expected '<n_gates> <n_wires>'");
  const std::uint32_t n_gates = num(h1, 0);
  const std::uint32_t n_wires = num(h1, 1);

  const auto& h2 = lines[1];
  const std::uint32_t niv = num(h2, 0);
  if (niv < 1 || niv > 2) throw ParseError(h2.first, "expected one or two input blocks");
  if (h2.second.size() != niv + 1) throw ParseError(h2.first, "input block count mismatch");
  const std::uint32_t inputs_a = num(h2, 1);
  const std::uint32_t inputs_b = niv == 2 ? num(h2, 2) : 0;

  const auto& h3 = lines[2];
  std::uint32_t n_outputs = 0;
  if (h3.second.size() == 1) {
    // Short form: a lone count names the number of output bits.
    n_outputs = num(h3, 0);
  } else {
    const std::uint32_t nov = num(h3, 0);
    if (h3.second.size() != nov + 1) throw ParseError(h3.first, "output block count mismatch");
    for (std::uint32_t k = 0; k < nov; ++k) n_outputs += num(h3, k + 1);
  }

  const std::uint32_t nin = inputs_a + inputs_b;
  if (nin > n_wires || n_outputs > n_wires - nin)
    throw ParseError(h1.first, "wire count smaller than inputs plus outputs");
  if (lines.size() - 3 != n_gates)
    throw ParseError(lines.back().first, "expected " + std::to_string(n_gates) + " gate lines, found " +
                                             std::to_string(lines.size() - 3));

  std::vector<Gate> gates;
  gates.reserve(n_gates);
  std::vector<std::size_t> gate_line;
  gate_line.reserve(n_gates);
  for (std::size_t li = 3; li < lines.size(); ++li) {
    const auto& [ln, t] = lines[li];
    if (t.size() < 4) throw ParseError(ln, "malformed gate line");
    const auto fan_in = parse_uint(t[0], ln);
    const auto fan_out = parse_uint(t[1], ln);
    if (fan_out != 1) throw ParseError(ln, "only single-output gates are supported");
    if (t.size() != fan_in + fan_out + 3) throw ParseError(ln, "token count does not match gate arity");
    const std::string& kind = t.back();
    Gate g;
    auto wire = [&](std::size_t k) {
      const auto w = parse_uint(t[k], ln);
      if (w >= n_wires)
        throw ParseError(ln, "dangling wire " + std::to_string(w) + " (circuit has " + std::to_string(n_wires) +
                                 " wires)");
      return static_cast<WireId>(w);
    };
    if (kind == "AND" || kind == "XOR") {
      if (fan_in != 2) throw ParseError(ln, kind + " takes two inputs");
      g.kind = kind == "AND" ? GateKind::And : GateKind::Xor;
      g.in0 = wire(2);
      g.in1 = wire(3);
      g.out = wire(4);
    } else if (kind == "INV") {
      if (fan_in != 1) throw ParseError(ln, "INV takes one input");
      g.kind = GateKind::Inv;
      g.in0 = wire(2);
      g.out = wire(3);
    } else {
      throw ParseError(ln, "unknown gate kind '" + kind + "'");
    }
    gates.push_back(g);
    gate_line.push_back(ln);
  }

  // Definition checks with line-accurate diagnostics before canonicalizing.
  std::vector<std::uint32_t> def_at(n_wires, 0xffffffffu);
  for (std::uint32_t w = 0; w < nin; ++w) def_at[w] = 0;
  for (std::size_t i = 0; i < gates.size(); ++i) {
    const WireId o = gates[i].out;
    if (o < nin) throw ParseError(gate_line[i], "gate drives circuit input wire " + std::to_string(o));
    if (def_at[o] != 0xffffffffu) throw ParseError(gate_line[i], "wire " + std::to_string(o) + " driven twice");
    def_at[o] = static_cast<std::uint32_t>(i + 1);
  }
  for (std::size_t i = 0; i < gates.size(); ++i) {
    for (WireId w : {gates[i].in0, gates[i].in1}) {
      if (w == kNoWire) continue;
      if (def_at[w] == 0xffffffffu)
        throw ParseError(gate_line[i], "dangling wire " + std::to_string(w) + " is never driven");
      if (w >= nin && def_at[w] > i)
        throw ParseError(gate_line[i], "non-topological order: wire " + std::to_string(w) + " is driven later");
    }
  }
  std::vector<WireId> outs(n_outputs);
  for (std::uint32_t j = 0; j < n_outputs; ++j) {
    outs[j] = n_wires - n_outputs + j;
    if (def_at[outs[j]] == 0xffffffffu || outs[j] < nin)
      throw ParseError(h3.first, "output wire " + std::to_string(outs[j]) + " is not driven by a gate");
  }
  return Netlist::from_raw(inputs_a, inputs_b, outs, gates);
}

Netlist parse_bristol(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_bristol(in);
}

Netlist read_bristol_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NetlistError("cannot open " + path);
  return parse_bristol(in);
}

void emit_bristol(const Netlist& n, std::ostream& out) {
  out << n.gate_count() << ' ' << n.wire_count() << '\n';
  out << "2 " << n.inputs_a() << ' ' << n.inputs_b() << '\n';
  out << "1 " << n.output_count() << '\n';
  for (const Gate& g : n.gates()) {
    if (g.kind == GateKind::Inv) {
      out << "1 1 " << g.in0 << ' ' << g.out << " INV\n";
    } else {
      out << "2 1 " << g.in0 << ' ' << g.in1 << ' ' << g.out << ' ' << to_string(g.kind) << '\n';
    }
  }
}

std::string emit_bristol(const Netlist& n) {
  std::ostringstream out;
  emit_bristol(n, out);
  return out.str();
}

void write_bristol_file(const Netlist& n, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NetlistError("cannot write " + path);
  emit_bristol(n, out);
}

// ---------------------------------------------------------------------------
// Evaluation

Bits eval_plain(const Netlist& n, std::span<const std::uint8_t> inputs) {
  if (inputs.size() != n.input_count())
    throw NetlistError("expected " + std::to_string(n.input_count()) + " input bits, got " +
                       std::to_string(inputs.size()));
  std::vector<std::uint8_t> w(n.wire_count(), 0);
  for (std::size_t i = 0; i < inputs.size(); ++i) w[i] = inputs[i] & 1;
  for (const Gate& g : n.gates()) {
    switch (g.kind) {
      case GateKind::And: w[g.out] = w[g.in0] & w[g.in1]; break;
      case GateKind::Xor: w[g.out] = w[g.in0] ^ w[g.in1]; break;
      case GateKind::Inv: w[g.out] = w[g.in0] ^ 1; break;
    }
  }
  Bits out(n.output_count());
  for (std::uint32_t j = 0; j < n.output_count(); ++j) out[j] = w[n.output_wire(j)];
  return out;
}

std::vector<std::uint64_t> eval_plain_packed(const Netlist& n, std::span<const std::uint64_t> inputs) {
  if (inputs.size() != n.input_count())
    throw NetlistError("expected " + std::to_string(n.input_count()) + " input words, got " +
                       std::to_string(inputs.size()));
  std::vector<std::uint64_t> w(n.wire_count(), 0);
  std::copy(inputs.begin(), inputs.end(), w.begin());
  for (const Gate& g : n.gates()) {
    switch (g.kind) {
      case GateKind::And: w[g.out] = w[g.in0] & w[g.in1]; break;
      case GateKind::Xor: w[g.out] = w[g.in0] ^ w[g.in1]; break;
      case GateKind::Inv: w[g.out] = ~w[g.in0]; break;
    }
  }
  std::vector<std::uint64_t> out(n.output_count());
  for (std::uint32_t j = 0; j < n.output_count(); ++j) out[j] = w[n.output_wire(j)];
  return out;
}

Netlist concat_parallel(std::span<const Netlist> parts) {
  std::uint32_t total_a = 0, total_b = 0;
  for (const auto& p : parts) {
    total_a += p.inputs_a();
    total_b += p.inputs_b();
  }
  // Raw ids: inputs canonical, gate outputs offset past all inputs.
  std::vector<Gate> gates;
  std::vector<WireId> outs;
  std::uint32_t a_off = 0, b_off = total_a, gate_base = total_a + total_b;
  for (const auto& p : parts) {
    const std::uint32_t nin = p.input_count();
    auto map = [&](WireId w) -> WireId {
      if (w == kNoWire) return kNoWire;
      if (w < p.inputs_a()) return a_off + w;
      if (w < nin) return b_off + (w - p.inputs_a());
      return gate_base + (w - nin);
    };
    for (const Gate& g : p.gates()) gates.push_back({g.kind, map(g.in0), map(g.in1), map(g.out)});
    for (WireId w : p.output_wires()) outs.push_back(map(w));
    a_off += p.inputs_a();
    b_off += p.inputs_b();
    gate_base += static_cast<std::uint32_t>(p.gate_count());
  }
  return Netlist::from_raw(total_a, total_b, outs, gates);
}

// ---------------------------------------------------------------------------
// DAG

CircuitDag build_dag(std::span<const Gate> gates, std::uint32_t n_inputs, const LatencyMap& latency) {
  const auto n = static_cast<std::uint32_t>(gates.size());
  WireId max_wire = n_inputs;
  for (const Gate& g : gates) max_wire = std::max(max_wire, g.out + 1);
  std::vector<std::uint32_t> producer(max_wire, kNoWire);
  for (std::uint32_t i = 0; i < n; ++i) producer[gates[i].out] = i;

  CircuitDag dag;
  dag.weight.resize(n);
  dag.pred.assign(n, {kNoWire, kNoWire});
  std::vector<std::uint32_t> out_degree(n, 0);
  for (std::uint32_t i = 0; i < n; ++i) {
    const Gate& g = gates[i];
    dag.weight[i] = latency.of(g.kind);
    std::uint32_t slot = 0;
    for (WireId w : {g.in0, g.in1}) {
      if (w == kNoWire || w < n_inputs) continue;
      const std::uint32_t p = producer[w];
      dag.edges.emplace_back(p, i);
      if (slot == 0 || dag.pred[i][0] != p) {
        dag.pred[i][slot++] = p;
        ++out_degree[p];
      }
    }
  }
  dag.succ_offset.assign(n + 1, 0);
  for (std::uint32_t i = 0; i < n; ++i) dag.succ_offset[i + 1] = dag.succ_offset[i] + out_degree[i];
  dag.succ.resize(dag.succ_offset[n]);
  std::vector<std::uint32_t> fill(dag.succ_offset.begin(), dag.succ_offset.end() - 1);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t p : dag.pred[i])
      if (p != kNoWire) dag.succ[fill[p]++] = i;
  return dag;
}

CircuitDag build_dag(const Netlist& n, const LatencyMap& latency) {
  return build_dag(n.gates(), n.input_count(), latency);
}

bool is_topological(std::span<const Gate> gates, std::uint32_t n_inputs, std::span<const std::uint32_t> order) {
  if (order.size() != gates.size()) return false;
  WireId max_wire = n_inputs;
  for (const Gate& g : gates) max_wire = std::max(max_wire, g.out + 1);
  std::vector<std::uint8_t> ready(max_wire, 0);
  std::fill_n(ready.begin(), n_inputs, 1);
  std::vector<std::uint8_t> seen(gates.size(), 0);
  for (std::uint32_t gi : order) {
    if (gi >= gates.size() || seen[gi]) return false;
    seen[gi] = 1;
    const Gate& g = gates[gi];
    if (!ready[g.in0]) return false;
    if (g.in1 != kNoWire && !ready[g.in1]) return false;
    ready[g.out] = 1;
  }
  return true;
}

}  // namespace gcx
