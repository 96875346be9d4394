#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <random>
#include <sstream>

#include "gcx/builder.hpp"
#include "gcx/circuitgen.hpp"
#include "support.hpp"

using namespace gcx;
using testing::FieldRunner;
using testing::mask_bits;

namespace {

FixedPointFormat ufmt(unsigned n) { return {n, 0, false}; }

std::vector<std::vector<std::uint64_t>> all_pairs(unsigned n) {
  std::vector<std::vector<std::uint64_t>> t;
  for (std::uint64_t a = 0; a < (1ull << n); ++a)
    for (std::uint64_t b = 0; b < (1ull << n); ++b) t.push_back({a, b});
  return t;
}

}  // namespace

TEST_CASE("adder") {
  Netlist add8 = gen_adder(ufmt(8));
  FieldRunner r8(add8, {8, 8}, {8});
  CHECK(r8.run_one({3, 5})[0] == 8);

  Netlist add6 = gen_adder(ufmt(6));
  FieldRunner r6(add6, {6, 6}, {6});
  auto pairs = all_pairs(6);
  auto res = r6.run(pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) REQUIRE(res[i][0] == ((pairs[i][0] + pairs[i][1]) & 63));
  CHECK(census(add6).and_count == 5);

  auto pairs8 = all_pairs(8);
  auto res8 = r8.run(pairs8);
  for (std::size_t i = 0; i < pairs8.size(); ++i) REQUIRE(res8[i][0] == ((pairs8[i][0] + pairs8[i][1]) & 255));
}

TEST_CASE("subtractor and comparator") {
  auto pairs = all_pairs(6);
  FieldRunner sub(gen_sub(ufmt(6)), {6, 6}, {6});
  Netlist cmp_s = gen_comparator({6, 0, true});
  Netlist cmp_u = gen_comparator(ufmt(6));
  FieldRunner cs(cmp_s, {6, 6}, {1, 1});
  FieldRunner cu(cmp_u, {6, 6}, {1, 1});
  auto rs = sub.run(pairs), rcs = cs.run(pairs), rcu = cu.run(pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto a = pairs[i][0], b = pairs[i][1];
    REQUIRE(rs[i][0] == ((a - b) & 63));
    REQUIRE(rcu[i][0] == (a < b));
    REQUIRE(rcu[i][1] == (a == b));
    REQUIRE(rcs[i][0] == (testing::as_signed(a, 6) < testing::as_signed(b, 6)));
  }
  CHECK(cu.run_one({5, 5}) == std::vector<std::uint64_t>{0, 1});
}

TEST_CASE("conventional multiplier") {
  Netlist mul = gen_mul_conventional(ufmt(8));
  FieldRunner r(mul, {8, 8}, {8});
  auto pairs = all_pairs(8);
  auto res = r.run(pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) REQUIRE(res[i][0] == ((pairs[i][0] * pairs[i][1]) & 255));
  for (std::uint64_t x = 0; x < 256; ++x) CHECK(r.run_one({0, x})[0] == 0);

  std::size_t prev = 0;
  for (unsigned n : {4u, 8u, 16u, 32u, 64u}) {
    const std::size_t ands = census(gen_mul_conventional(ufmt(n))).and_count;
    CHECK(ands > prev);
    prev = ands;
  }
}

TEST_CASE("xfbq conversion law") {
  auto c8 = xfbq_convert_value(8, 4);
  CHECK(c8.bits == 0b1100);
  CHECK(c8.value() == 9);
  CHECK(xfbq_convert_value(9, 4).value() == 9);
  auto c0 = xfbq_convert_value(0, 4);
  CHECK(c0.bits == 0b1000);
  CHECK(c0.value() == 1);
  for (unsigned w = 4; w <= 12; ++w)
    for (std::uint64_t a = 0; a < (1ull << w); ++a)
      REQUIRE(xfbq_convert_value(a, w).value() - static_cast<std::int64_t>(a) == xfbq_qerror(a));
  CHECK_THROWS(xfbq_convert_value(16, 4));
}

TEST_CASE("xfbq multiplier with correction is exact") {
  Netlist mul = gen_mul_xfbq(ufmt(8), true);
  FieldRunner r(mul, {8, 8}, {8});
  auto pairs = all_pairs(8);
  auto res = r.run(pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) REQUIRE(res[i][0] == ((pairs[i][0] * pairs[i][1]) & 255));

  Netlist full = gen_mul_xfbq(ufmt(8), true, true);
  FieldRunner rf(full, {8, 8}, {16});
  auto resf = rf.run(pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) REQUIRE(resf[i][0] == pairs[i][0] * pairs[i][1]);

  std::mt19937_64 rng(1);
  Netlist m32 = gen_mul_xfbq(ufmt(32), true);
  FieldRunner r32(m32, {32, 32}, {32});
  std::vector<std::vector<std::uint64_t>> samples;
  for (int i = 0; i < 10000; ++i) samples.push_back({rng() & 0xffffffffu, rng() & 0xffffffffu});
  auto res32 = r32.run(samples);
  for (std::size_t i = 0; i < samples.size(); ++i)
    REQUIRE(res32[i][0] == ((samples[i][0] * samples[i][1]) & 0xffffffffu));
}

TEST_CASE("xfbq uses fewer AND gates than the conventional multiplier") {
  for (unsigned n : {8u, 16u, 32u, 64u}) {
    const auto x = census(gen_mul_xfbq(ufmt(n), true)).and_count;
    const auto c = census(gen_mul_conventional(ufmt(n))).and_count;
    CAPTURE(n);
    CHECK(x < c);
  }
}

TEST_CASE("uncorrected xfbq error matches the q-error terms") {
  Netlist raw = gen_mul_xfbq(ufmt(8), false, true);
  FieldRunner r(raw, {8, 8}, {16});
  auto pairs = all_pairs(8);
  auto res = r.run(pairs);
  std::int64_t max_err = 0, max_bound = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto a = static_cast<std::int64_t>(pairs[i][0]), b = static_cast<std::int64_t>(pairs[i][1]);
    const std::int64_t ea = 1 - (a & 1), eb = 1 - (b & 1);
    const std::int64_t term = ea * (b + eb) + eb * (a + ea) - ea * eb;
    const std::int64_t err = static_cast<std::int64_t>(res[i][0]) - a * b;
    REQUIRE(err == term);
    max_err = std::max(max_err, std::int64_t{std::llabs(err)});
    max_bound = std::max(max_bound, std::int64_t{std::llabs(term)});
  }
  CHECK(max_err == max_bound);
  CHECK(max_err > 0);
}

TEST_CASE("correction subcircuit accounts for the whole census delta") {
  for (unsigned n : {8u, 16u}) {
    for (bool full : {false, true}) {
      const auto with = census(gen_mul_xfbq(ufmt(n), true, full));
      const auto without = census(gen_mul_xfbq(ufmt(n), false, full));
      const auto block = census(gen_xfbq_correction_block(ufmt(n), full));
      CAPTURE(n);
      CAPTURE(full);
      CHECK(with.and_count - without.and_count == block.and_count);
    }
  }
}

TEST_CASE("census") {
  CHECK(census(parse_bristol("2 4\n2 1 1\n1 1\n2 1 0 1 2 XOR\n2 1 2 0 3 XOR\n")).and_count == 0);
  GateCensus c = census(parse_bristol("3 5\n2 1 1\n1 1\n2 1 0 1 2 AND\n2 1 2 0 3 XOR\n2 1 3 1 4 XOR\n"));
  CHECK(c == GateCensus{1, 2, 0, 3});
  CHECK(census_json(c) == R"({"and":1,"xor":2,"inv":0,"total":3})");

  // Text-level recount of an emitted file.
  Netlist m = gen_mul_xfbq(ufmt(16), true);
  std::istringstream text(emit_bristol(m));
  std::string line;
  GateCensus recount;
  int lineno = 0;
  while (std::getline(text, line)) {
    if (++lineno <= 3) continue;
    const auto last = line.substr(line.rfind(' ') + 1);
    recount.and_count += last == "AND";
    recount.xor_count += last == "XOR";
    recount.inv_count += last == "INV";
    ++recount.total;
  }
  CHECK(recount == census(m));
}

TEST_CASE("generated circuits survive a bristol round trip") {
  Netlist m = gen_mul_xfbq(ufmt(8), true);
  CHECK(parse_bristol(emit_bristol(m)) == m);
}

TEST_CASE("builder folding and output buffering") {
  CircuitBuilder b(2, 0);
  Sig x = b.input(0), y = b.input(1);
  CHECK(b.XOR(x, x) == Sig::constant(false));
  CHECK(b.XOR(x, !x) == Sig::constant(true));
  CHECK(b.AND(x, Sig::constant(true)) == x);
  CHECK(b.AND(x, !x) == Sig::constant(false));
  CHECK(b.gate_count() == 0);
  Sig a = b.AND(x, y);
  std::vector<Sig> outs{a, a, !a, x, Sig::constant(true), Sig::constant(false)};
  Netlist n = b.build(outs);
  for (std::uint8_t p = 0; p < 2; ++p)
    for (std::uint8_t q = 0; q < 2; ++q) {
      Bits out = eval_plain(n, Bits{p, q});
      CHECK(out == Bits{std::uint8_t(p & q), std::uint8_t(p & q), std::uint8_t(!(p & q)), p, 1, 0});
    }
}

TEST_CASE("builder word helpers") {
  CircuitBuilder b(8, 3);
  Word x = b.input_a(0, 8);
  Word s = b.input_b(0, 3);
  Word outs = concat(concat(b.shr_var(x, s, true), b.shl_var(x, s)), b.shr_var(x, s, false));
  std::vector<Sig> dec = b.decode(s);
  outs.insert(outs.end(), dec.begin(), dec.end());
  Netlist n = b.build(outs);
  FieldRunner r(n, {8, 3}, {8, 8, 8, 8});
  for (std::uint64_t v = 0; v < 256; ++v)
    for (std::uint64_t k = 0; k < 8; ++k) {
      auto o = r.run_one({v, k});
      REQUIRE(o[0] == (static_cast<std::uint64_t>(testing::as_signed(v, 8) >> k) & 255));
      REQUIRE(o[1] == ((v << k) & 255));
      REQUIRE(o[2] == (v >> k));
      REQUIRE(o[3] == (1ull << k));
    }
}
