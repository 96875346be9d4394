#include <doctest.h>

#include <random>
#include <sstream>

#include "gcx/garble.hpp"
#include "support.hpp"

using namespace gcx;

namespace {

Bits run_gc(const Netlist& n, const Bits& x, std::uint64_t seed) {
  FoldedNetlist f = fold_inv(n);
  GarbleResult g = garble(f, seed);
  auto labels = encode_inputs(g.keys, x);
  auto out = evaluate(f, g.circuit, labels);
  return decode(out, g.circuit.decode);
}

}  // namespace

TEST_CASE("gf_double matches shift with reduction") {
  CHECK(gf_double(Block{1, 0}) == Block{2, 0});
  CHECK(gf_double(Block{0x8000000000000000ull, 0}) == Block{0, 1});
  CHECK(gf_double(Block{0, 0x8000000000000000ull}) == Block{0x87, 0});
}

TEST_CASE("fold_inv examples") {
  SUBCASE("single INV") {
    Netlist n = parse_bristol("1 2\n1 1\n1 1\n1 1 0 1 INV\n");
    FoldedNetlist f = fold_inv(n);
    CHECK(f.gates.empty());
    REQUIRE(f.outputs.size() == 1);
    CHECK(f.outputs[0] == WireRef{0, true});
    CHECK(eval_plain(f, Bits{0}) == Bits{1});
    CHECK(eval_plain(f, Bits{1}) == Bits{0});
  }
  SUBCASE("INV feeding XOR") {
    Netlist n = parse_bristol("2 4\n2 1 1\n1 1\n1 1 0 2 INV\n2 1 2 1 3 XOR\n");
    FoldedNetlist f = fold_inv(n);
    REQUIRE(f.gates.size() == 1);
    CHECK(f.gates[0].kind == GateKind::Xor);
    CHECK(f.input_flip[0][0] == 1);
    CHECK(f.input_flip[0][1] == 0);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        Bits x{std::uint8_t(a), std::uint8_t(b)};
        CHECK(eval_plain(f, x) == eval_plain(n, x));
      }
  }
  SUBCASE("random netlist equivalence") {
    std::mt19937_64 rng(5);
    Netlist n = testing::random_netlist(rng, {.gates = 500, .inv_fraction = 0.2});
    FoldedNetlist f = fold_inv(n);
    CHECK(f.gates.size() < n.gate_count());
    for (int t = 0; t < 1000; ++t) {
      Bits x = testing::random_bits(rng, n.input_count());
      REQUIRE(eval_plain(f, x) == eval_plain(n, x));
    }
  }
}

TEST_CASE("AND gate end to end on all inputs") {
  Netlist n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n");
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      Bits x{std::uint8_t(a), std::uint8_t(b)};
      CHECK(run_gc(n, x, 42) == eval_plain(n, x));
    }
}

TEST_CASE("table and hash budgets") {
  SUBCASE("XOR-only netlist has no tables") {
    Netlist n = parse_bristol("2 4\n2 1 1\n1 1\n2 1 0 1 2 XOR\n2 1 2 0 3 XOR\n");
    GarbleResult g = garble(fold_inv(n), 1);
    CHECK(g.circuit.tables.empty());
    CHECK(g.hash_calls == 0);
  }
  SUBCASE("single AND has one two-row table") {
    Netlist n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n");
    GarbleResult g = garble(fold_inv(n), 1);
    CHECK(g.circuit.tables.size() == 1);
    CHECK(g.circuit.table_bytes() == 32);
  }
  SUBCASE("counters scale with the AND count") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 5; ++t) {
      Netlist n = testing::random_netlist(rng, {.gates = 2000});
      FoldedNetlist f = fold_inv(n);
      std::size_t ands = 0;
      for (const Gate& g : n.gates()) ands += g.kind == GateKind::And;
      GarbleResult g = garble(f, 100 + t);
      CHECK(g.circuit.tables.size() == ands);
      CHECK(g.circuit.table_bytes() == 32 * ands);
      CHECK(g.hash_calls == 4 * ands);
      std::uint64_t eval_calls = 0;
      evaluate(f, g.circuit, encode_inputs(g.keys, testing::random_bits(rng, n.input_count())), &eval_calls);
      CHECK(eval_calls == 2 * ands);
    }
  }
}

TEST_CASE("garbled evaluation matches the plaintext oracle") {
  std::mt19937_64 rng(21);
  Netlist n = testing::random_netlist(rng, {.inputs_a = 32, .inputs_b = 32, .gates = 5000, .outputs = 32});
  FoldedNetlist f = fold_inv(n);
  GarbleResult g = garble(f, 77);
  for (int t = 0; t < 100; ++t) {
    Bits x = testing::random_bits(rng, n.input_count());
    auto out = evaluate(f, g.circuit, encode_inputs(g.keys, x));
    REQUIRE(decode(out, g.circuit.decode) == eval_plain(n, x));
  }
}

TEST_CASE("label structure laws") {
  std::mt19937_64 rng(4);
  Netlist n = testing::random_netlist(rng, {.gates = 400});
  FoldedNetlist f = fold_inv(n);
  GarbleResult g = garble(f, 3);
  CHECK(g.keys.delta.color());
  // Free-XOR: out zero label equals XOR of the (flip-adjusted) input zero labels.
  for (std::size_t k = 0; k < f.gates.size(); ++k) {
    const Gate& gate = f.gates[k];
    if (gate.kind != GateKind::Xor) continue;
    Label a = g.keys.wire_zero[gate.in0];
    Label b = g.keys.wire_zero[gate.in1];
    if (f.input_flip[k][0]) a ^= g.keys.delta;
    if (f.input_flip[k][1]) b ^= g.keys.delta;
    REQUIRE(g.keys.wire_zero[gate.out] == (a ^ b));
  }
  // Active label of every output is the zero or one label of that output.
  Bits x = testing::random_bits(rng, n.input_count());
  auto out = evaluate(f, g.circuit, encode_inputs(g.keys, x));
  Bits expect = eval_plain(n, x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Label want = expect[i] ? g.keys.output_zero[i] ^ g.keys.delta : g.keys.output_zero[i];
    CHECK(out[i] == want);
  }
}

TEST_CASE("decode examples") {
  Netlist n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n");
  GarbleResult g = garble(fold_inv(n), 8);
  const Label z = g.keys.output_zero[0];
  OutputDecoder d = g.circuit.decode[0];
  // Normalize so the zero label carries decode bit 0, as in the textbook case.
  CHECK(decode_one(z, d) == 0);
  CHECK(decode_one(z ^ g.keys.delta, d) == 1);
  CHECK(d.bit == static_cast<std::uint8_t>(z.color()));

  Label bad = z;
  bad.hi ^= 0x10;
  CHECK_THROWS_AS(decode_one(bad, d), IntegrityError);
  Label flipped_color = z;
  flipped_color.lo ^= 1;
  CHECK_THROWS_AS(decode_one(flipped_color, d), IntegrityError);
}

TEST_CASE("evaluate rejects a table count mismatch") {
  Netlist n = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n");
  FoldedNetlist f = fold_inv(n);
  GarbleResult g = garble(f, 8);
  GarbledCircuit gc = g.circuit;
  gc.tables.clear();
  CHECK_THROWS_AS(evaluate(f, gc, encode_inputs(g.keys, Bits{1, 1})), IntegrityError);
}

TEST_CASE("garbling is deterministic per seed") {
  std::mt19937_64 rng(12);
  Netlist n = testing::random_netlist(rng, {.gates = 300});
  FoldedNetlist f = fold_inv(n);
  GarbleResult a = garble(f, 5), b = garble(f, 5), c = garble(f, 6);
  CHECK(a.circuit == b.circuit);
  CHECK_FALSE(a.circuit == c.circuit);
  std::ostringstream sa, sb;
  write_garbled(sa, a.circuit, f.input_count(), &a.keys);
  write_garbled(sb, b.circuit, f.input_count(), &b.keys);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("serialization round trip") {
  std::mt19937_64 rng(13);
  Netlist n = testing::random_netlist(rng, {.gates = 200});
  FoldedNetlist f = fold_inv(n);
  GarbleResult g = garble(f, 5);
  std::ostringstream os;
  write_garbled(os, g.circuit, f.input_count(), &g.keys);
  const std::string bytes = os.str();
  CHECK(bytes.size() == 32 + 32 * g.circuit.tables.size() + 24 * g.circuit.decode.size() + 16 + 16 * f.input_count());
  CHECK(bytes.substr(0, 6) == "GCXTBL");

  std::istringstream is(bytes);
  GarbledFile back = read_garbled(is);
  CHECK(back.circuit == g.circuit);
  CHECK(back.has_keys);
  CHECK(back.keys.delta == g.keys.delta);
  CHECK(back.keys.input_zero == g.keys.input_zero);

  std::ostringstream bare;
  write_garbled(bare, g.circuit, f.input_count());
  std::istringstream bare_in(bare.str());
  CHECK_FALSE(read_garbled(bare_in).has_keys);

  std::istringstream truncated(bytes.substr(0, 40));
  CHECK_THROWS_AS(read_garbled(truncated), IntegrityError);
}
