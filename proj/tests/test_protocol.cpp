#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gcx/circuitgen.hpp"
#include "gcx/nonlinear.hpp"
#include "gcx/protocol.hpp"

using namespace gcx;

namespace {

FixedMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, const FixedPointFormat& f) {
  std::uniform_int_distribution<std::int64_t> d(f.min_raw(), f.max_raw());
  FixedMatrix m = FixedMatrix::zeros(rows, cols, f);
  for (auto& v : m.raw) v = d(rng);
  return m;
}

std::vector<std::uint64_t> random_ring(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::uint64_t> v(n);
  for (auto& x : v) x = rng();
  return v;
}

// Schoolbook product with explicit wraparound, written apart from the library's.
std::vector<std::int64_t> ring_product(const FixedMatrix& x, const FixedMatrix& w) {
  std::vector<std::int64_t> y(x.rows * w.cols);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < w.cols; ++c) {
      unsigned __int128 acc = 0;
      for (std::size_t k = 0; k < x.cols; ++k)
        acc += static_cast<unsigned __int128>(static_cast<std::uint64_t>(x.at(r, k)) *
                                              static_cast<std::uint64_t>(w.at(k, c)));
      y[r * w.cols + c] = static_cast<std::int64_t>(static_cast<std::uint64_t>(acc));
    }
  return y;
}

double float_layernorm_at(const FixedPointFormat& f, const std::vector<std::int64_t>& x, std::size_t i,
                          const std::vector<std::int64_t>& beta, const std::vector<std::int64_t>& gamma) {
  const double n = static_cast<double>(x.size());
  double mean = 0, var = 0;
  for (auto v : x) mean += f.to_double(v) / n;
  for (auto v : x) var += (f.to_double(v) - mean) * (f.to_double(v) - mean) / n;
  const double z = var > 0 ? (f.to_double(x[i]) - mean) / std::sqrt(var) : 0.0;
  return f.to_double(beta[i]) * z + f.to_double(gamma[i]);
}

bool only_hidden_provenance(const Transcript& t) {
  for (const auto& m : t.messages())
    if (m.provenance == Provenance::Plain) return false;
  return true;
}

}  // namespace

TEST_CASE("mock HE obeys the additive and multiplicative laws") {
  std::mt19937_64 rng(1);
  MockHe he("k");
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_ring(rng, 12), y = random_ring(rng, 12);
    const auto ex = he.encrypt(x), ey = he.encrypt(y);
    const auto sum = he.decrypt(ex + y), prod = he.decrypt(ex * y);
    const auto csum = he.decrypt(ex + ey), cprod = he.decrypt(ex * ey), diff = he.decrypt(ex - y);
    const auto twice = he.decrypt(ex * 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(sum[i] == x[i] + y[i]);
      CHECK(prod[i] == x[i] * y[i]);
      CHECK(csum[i] == x[i] + y[i]);
      CHECK(cprod[i] == x[i] * y[i]);
      CHECK(diff[i] == x[i] - y[i]);
      CHECK(twice[i] == 2 * x[i]);
    }
    // (3 x 4) sealed times plain (4 x 3)
    const auto mm = he.decrypt(matmul(ex, 3, 4, y, 3));
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        std::uint64_t acc = 0;
        for (std::size_t k = 0; k < 4; ++k) acc += x[r * 4 + k] * y[k * 3 + c];
        CHECK(mm[r * 3 + c] == acc);
      }
    std::uint64_t dot = 0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
    CHECK(he.decrypt(inner_product(ex, y))[0] == dot);
  }
  MockHe other("other");
  CHECK_THROWS_AS(other.decrypt(he.encrypt({1, 2})), ProtocolError);
  CHECK_THROWS_AS(he.encrypt({1, 2}) + other.encrypt({1, 2}), ProtocolError);
  CHECK_THROWS_AS(he.encrypt({1, 2}) + std::vector<std::uint64_t>{1}, ProtocolError);
}

TEST_CASE("linear layer shares recombine to the product") {
  const FixedPointFormat f{16, 11, true};
  std::mt19937_64 rng(2);
  const auto x = random_matrix(rng, 3, 5, f);
  const auto w = random_matrix(rng, 5, 4, f);

  SUBCASE("zero masks hand the server the product itself") {
    Session s({.seed = 3, .zero_masks = true});
    const auto sh = linear_layer(s, x, w);
    const auto want = ring_product(x, w);
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(static_cast<std::int64_t>(sh.server[i]) == want[i]);
      CHECK(sh.client[i] == 0);
    }
  }
  SUBCASE("random masks") {
    Session s({.seed = 4});
    const auto sh = linear_layer(s, x, w);
    CHECK(sh.recombine() == ring_product(x, w));
    CHECK(sh.recombine() == linear_reference(x, w));
    CHECK(only_hidden_provenance(s.transcript()));
    bool any_nonzero = false;
    for (auto v : sh.client) any_nonzero |= v != 0;
    CHECK(any_nonzero);
  }
  SUBCASE("identity weights") {
    Session s({.seed = 5});
    const auto sh = linear_layer(s, x, FixedMatrix::identity(5, f));
    CHECK(sh.recombine() == x.raw);
  }
  SUBCASE("shape mismatch") {
    Session s({.seed = 6});
    CHECK_THROWS_AS(linear_layer(s, x, FixedMatrix::identity(4, f)), ProtocolError);
    FixedMatrix bad = x;
    bad.raw[0] = f.max_raw() + 1;
    CHECK_THROWS_AS(linear_layer(s, bad, w), ProtocolError);
  }
}

TEST_CASE("garbled element layers") {
  const FixedPointFormat f{16, 11, true};
  std::mt19937_64 rng(7);
  const auto x = random_matrix(rng, 2, 6, f);

  SUBCASE("identity") {
    Session s({.seed = 8});
    const auto in = linear_layer(s, x, FixedMatrix::identity(6, f));
    const auto out = nonlinear_layer_gc(s, in, gen_identity(f), f);
    CHECK(out.recombine() == in.recombine());
    CHECK(only_hidden_provenance(s.transcript()));
    CHECK(s.gc().circuits == 1);
  }
  SUBCASE("GeLU matches its fixed-point model") {
    Session s({.seed = 9});
    const auto in = linear_layer(s, x, FixedMatrix::identity(6, f));
    const auto out = nonlinear_layer_gc(s, in, gen_gelu(f), f).recombine();
    for (std::size_t i = 0; i < x.raw.size(); ++i) CHECK(out[i] == gelu_model(f, x.raw[i]));
    const auto rep = audit(s.transcript());
    CHECK(rep.pass);
    for (const auto& [prov, n] : rep.by_provenance) CHECK(prov != "PLAIN");
  }
  SUBCASE("element function of the wrong width") {
    Session s({.seed = 10});
    const auto in = linear_layer(s, x, FixedMatrix::identity(6, f));
    CHECK_THROWS(nonlinear_layer_gc(s, in, gen_identity({8, 4, true}), f));
  }
}

TEST_CASE("layernorm offload") {
  SUBCASE("constant rows normalize to gamma") {
    LayerNormConfig cfg;
    cfg.n = 4;
    const FixedPointFormat& f = cfg.fmt;
    FixedMatrix x = FixedMatrix::zeros(2, 4, f);
    for (std::size_t i = 0; i < 4; ++i) {
      x.at(0, i) = 1000;
      x.at(1, i) = -77;
    }
    const std::vector<std::int64_t> beta{2048, -1024, 512, 100}, gamma{10, -20, 30, -40};
    Session s({.seed = 11});
    const auto y = layernorm_offload(s, linear_layer(s, x, FixedMatrix::identity(4, f)), beta, gamma, cfg).recombine();
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t i = 0; i < 4; ++i) CHECK(y[r * 4 + i] == gamma[i]);
  }

  SUBCASE("parameter and shape errors") {
    LayerNormConfig cfg;
    cfg.n = 4;
    Session s({.seed = 12});
    std::mt19937_64 rng(13);
    const auto sh = linear_layer(s, random_matrix(rng, 1, 4, cfg.fmt), FixedMatrix::identity(4, cfg.fmt));
    CHECK_THROWS_AS(layernorm_offload(s, sh, {1, 2, 3}, {1, 2, 3, 4}, cfg), ProtocolError);
    LayerNormConfig wide = cfg;
    wide.n = 8;
    CHECK_THROWS_AS(layernorm_offload(s, sh, std::vector<std::int64_t>(8), std::vector<std::int64_t>(8), wide),
                    ProtocolError);
  }
}

TEST_CASE("layernorm offload against the float oracle") {
  for (unsigned n : {4u, 8u}) {
    CAPTURE(n);
    LayerNormConfig cfg;
    cfg.n = n;
    const FixedPointFormat& f = cfg.fmt;
    std::mt19937_64 rng(20 + n);
    const std::size_t rows = 1000;
    const auto x = random_matrix(rng, rows, n, f);
    std::uniform_int_distribution<std::int64_t> unit(-(1 << f.frac_bits), 1 << f.frac_bits);
    std::vector<std::int64_t> beta(n), gamma(n);
    for (auto& v : beta) v = unit(rng);
    for (auto& v : gamma) v = unit(rng);

    Session s({.seed = 30 + n});
    const auto y = layernorm_offload(s, linear_layer(s, x, FixedMatrix::identity(n, f)), beta, gamma, cfg).recombine();
    double worst = 0;
    std::size_t model_diff = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::vector<std::int64_t> row(x.raw.begin() + r * n, x.raw.begin() + (r + 1) * n);
      const auto model = layernorm_model(cfg, row, beta, gamma);
      for (unsigned i = 0; i < n; ++i) {
        model_diff += y[r * n + i] != model[i];
        worst = std::max(worst, std::abs(f.to_double(y[r * n + i]) - float_layernorm_at(f, row, i, beta, gamma)) / f.ulp());
      }
    }
    MESSAGE("n=" << n << " worst error " << worst << " ulp");
    CHECK(model_diff == 0);
    CHECK(worst <= 2.0);

    // Only the reduced circuit runs under GC.
    const auto reduced = census(gen_layernorm(cfg, LayerNormVariant::Reduced)).and_count;
    const auto full = census(gen_layernorm(cfg, LayerNormVariant::FullShared)).and_count;
    CHECK(s.gc().and_gates == rows * reduced);
    CHECK(reduced < full);

    const auto rep = audit(s.transcript());
    CHECK(rep.uniformity_checked);
    CHECK(rep.pass);
  }
}

TEST_CASE("auditor") {
  LayerNormConfig cfg;
  cfg.n = 8;

  SUBCASE("normal run passes with the uniformity check active") {
    const auto run = run_layernorm_protocol(cfg, 64, {.seed = 7});
    CHECK(run.audit.pass);
    CHECK(run.audit.uniformity_checked);
    CHECK(run.audit.samples >= AuditReport::kMinSamples);
    CHECK(run.audit.chi_square < AuditReport::kChiSquareCritical);
    CHECK(run.model_mismatches == 0);
    CHECK(run.max_ulp_vs_float <= 2.0);
  }
  SUBCASE("an injected clear-text send fails and is named") {
    const auto run = run_layernorm_protocol(cfg, 4, {.seed = 7, .inject_plain = true});
    REQUIRE_FALSE(run.audit.pass);
    bool named = false;
    for (const auto& v : run.audit.violations) named |= v.find("linear.input") != std::string::npos;
    CHECK(named);
  }
  SUBCASE("zero masks fail the uniformity check") {
    const auto run = run_layernorm_protocol(cfg, 64, {.seed = 7, .zero_masks = true});
    CHECK(run.model_mismatches == 0);  // still correct, just not private
    CHECK(run.audit.uniformity_checked);
    CHECK_FALSE(run.audit.pass);
  }
  SUBCASE("structural rules") {
    Transcript t;
    t.declare(Phase::Offline, Party::Client, "R1", 1);
    t.declare(Phase::Online, Party::Client, "R2", 1);
    t.send({.phase = Phase::Online, .from = Party::Client, .to = Party::Server, .kind = "ok",
            .provenance = Provenance::Masked, .tag = "R1", .ring_bits = 64, .payload = {5}});
    t.send({.phase = Phase::Online, .from = Party::Server, .to = Party::Client, .kind = "foreign-mask",
            .provenance = Provenance::Masked, .tag = "R1", .ring_bits = 64, .payload = {5}});
    t.send({.phase = Phase::Online, .from = Party::Client, .to = Party::Server, .kind = "late-mask",
            .provenance = Provenance::Masked, .tag = "R2", .ring_bits = 64, .payload = {5}});
    t.send({.phase = Phase::Online, .from = Party::Client, .to = Party::Server, .kind = "no-setup",
            .provenance = Provenance::GcLabels, .tag = "C9", .count = 3});
    const auto rep = audit(t);
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.uniformity_checked);
    std::string all;
    for (const auto& v : rep.violations) all += v + "\n";
    CHECK(all.find("'ok'") == std::string::npos);
    CHECK(all.find("foreign-mask") != std::string::npos);
    CHECK(all.find("late-mask") != std::string::npos);
    CHECK(all.find("no-setup") != std::string::npos);
    CHECK_THROWS_AS(t.send({.from = Party::Client, .to = Party::Client}), ProtocolError);
  }
}

TEST_CASE("transcript dump") {
  LayerNormConfig cfg;
  cfg.n = 4;
  const auto a = run_layernorm_protocol(cfg, 3, {.seed = 1});
  const auto b = run_layernorm_protocol(cfg, 3, {.seed = 1});
  CHECK(a.transcript_jsonl == b.transcript_jsonl);
  CHECK(a.report_json() == b.report_json());
  CHECK(a.transcript_jsonl != run_layernorm_protocol(cfg, 3, {.seed = 2}).transcript_jsonl);

  std::istringstream in(a.transcript_jsonl);
  std::string line;
  std::uint64_t expect_seq = 0;
  std::size_t messages = 0;
  bool online_seen = false;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("seq").get<std::uint64_t>() == expect_seq++);
    if (j.contains("provenance")) {
      ++messages;
      CHECK(j.at("provenance") != "PLAIN");
      if (j.at("phase") == "online") online_seen = true;
      if (j.at("provenance") == "MOCK_ENC") CHECK_FALSE(j.contains("payload"));
    }
  }
  CHECK(online_seen);
  CHECK(messages == a.audit.messages);
}
