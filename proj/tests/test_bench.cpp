#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gcx/bench.hpp"

using namespace gcx;

namespace {

const char* kSpec = R"(
name = "small"   # three benchmarks, four modes
seed = 5

[sim]
cores = 4
wire_mem_entries = 64
dram_latency = 40

[[benchmark]]
name = "add8"
function = "adder"
width = 8

[[benchmark]]
name = "mul8"
function = "mul_xfbq"
width = 8

[[benchmark]]
name = "gelu"
function = "gelu"
width = 12
frac = 7

[[mode]]
label = "df-eval"
schedule = "df"
sim = "evaluate"

[[mode]]
label = "cpfe-eval"
schedule = "cpfe"
sim = "evaluate"

[[mode]]
label = "cpfe-single"
schedule = "cpfe"
sim = "evaluate"
policy = "single_use"

[[mode]]
label = "sr-garble"
schedule = "sr"
sim = "garble"
)";

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("toml subset") {
  const auto d = parse_toml_subset("a = 1\nb = \"x # y\" # c\n[t]\nk = true\n[[arr]]\nq = 2\n[[arr]]\nq = 3\n");
  CHECK(d.root.u64("a", 0) == 1);
  CHECK(d.root.str("b") == "x # y");
  CHECK(d.tables.at("t").boolean("k", false));
  REQUIRE(d.arrays.at("arr").size() == 2);
  CHECK(d.arrays.at("arr")[1].u64("q", 0) == 3);
  CHECK_THROWS_AS(parse_toml_subset("a = 1\na = 2\n"), SpecError);
  CHECK_THROWS_AS(parse_toml_subset("just words\n"), SpecError);
  CHECK_THROWS_AS(parse_toml_subset("a = \"open\n"), SpecError);
  CHECK_THROWS_AS(parse_toml_subset("[t]\n[t]\n"), SpecError);
  CHECK_THROWS_AS(d.root.u64("b", 0), SpecError);
}

TEST_CASE("experiment spec parsing") {
  const auto s = parse_experiment_spec(kSpec);
  CHECK(s.name == "small");
  CHECK(s.seed == 5);
  CHECK(s.config.cores == 4);
  CHECK(s.config.wire_mem_entries == 64);
  CHECK(s.benchmarks.size() == 3);
  REQUIRE(s.modes.size() == 4);
  CHECK(s.modes[2].policy == MemoryPolicy::SingleUse);
  CHECK(s.modes[3].sim == SimMode::Garble);

  CHECK_THROWS_AS(parse_experiment_spec("bogus = 1\n"), SpecError);
  CHECK_THROWS_AS(parse_experiment_spec("[[benchmark]]\nname = \"a\"\n"), SpecError);  // no function
  CHECK_THROWS_AS(parse_experiment_spec("[[benchmark]]\nfunction = \"nope\"\n"), SpecError);
  CHECK_THROWS_AS(parse_experiment_spec("[[benchmark]]\nfunction = \"adder\"\n[[benchmark]]\nfunction = \"adder\"\n"),
                  SpecError);  // duplicate default names
  CHECK_THROWS_AS(parse_experiment_spec("[[mode]]\nschedule = \"nope\"\n"), SpecError);
  CHECK_THROWS_AS(parse_experiment_spec("[sim]\nmode = \"garble\"\n"), SpecError);
  CHECK_THROWS_AS(parse_experiment_spec("[sim]\nwire_mem_entries = 2\n"), SpecError);
  BenchmarkEntry bad{"x", "nonsense"};
  CHECK_THROWS_AS(generate_benchmark(bad), SpecError);
}

TEST_CASE("experiment runs") {
  const auto spec = parse_experiment_spec(kSpec);

  SUBCASE("three benchmarks by four modes give twelve rows") {
    const auto rep = run_experiment(spec);
    REQUIRE(rep.rows.size() == 12);
    for (const auto& r : rep.rows) {
      CAPTURE(r.benchmark);
      CAPTURE(r.mode);
      CHECK(r.outputs_ok);
      CHECK(r.speculation_ok);
      CHECK(r.metrics.at("busy_cycles") + r.metrics.at("pipeline_stall_cycles") + r.metrics.at("memory_stall_cycles") >=
            r.metrics.at("total_cycles"));
      CHECK(r.hash.size() == 64);
    }
    CHECK(rep.rows[0].benchmark == "add8");
    CHECK(rep.rows[4].benchmark == "mul8");
    CHECK(count_lines(rep.to_csv()) == 13);
    // Round trip through JSON keeps everything the diff needs.
    const auto back = BenchReport::from_json(rep.to_json());
    CHECK(back.to_json() == rep.to_json());
  }
  SUBCASE("duplicate runs are byte-identical") {
    const auto a = run_experiment(spec), b = run_experiment(spec);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.to_csv() == b.to_csv());
  }
  SUBCASE("no modes gives an empty report with a header") {
    ExperimentSpec s = spec;
    s.modes.clear();
    const auto rep = run_experiment(s);
    CHECK(rep.rows.empty());
    CHECK(count_lines(rep.to_csv()) == 1);
    CHECK(rep.to_csv().rfind("benchmark,hash,mode", 0) == 0);
  }
}

TEST_CASE("netlist cache by content hash") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gcx_bench_cache_test";
  fs::remove_all(dir);
  auto spec = parse_experiment_spec(kSpec);
  spec.cache_dir = dir.string();
  spec.modes.resize(1);
  const auto rep = run_experiment(spec);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    ++files;
    const std::string stem = e.path().stem().string();
    CHECK(netlist_hash(read_bristol_file(e.path().string())) == stem);
  }
  CHECK(files == 3);
  CHECK(netlist_hash(generate_benchmark(spec.benchmarks[0])) == rep.rows[0].hash);
  CHECK(run_experiment(spec).to_json() == rep.to_json());  // cache hit path

  // A cache entry that no longer matches its name is refused.
  const fs::path victim = dir / (rep.rows[0].hash + ".bristol");
  write_bristol_file(generate_benchmark(spec.benchmarks[1]), victim.string());
  CHECK_THROWS(run_experiment(spec));
  fs::remove_all(dir);
}

TEST_CASE("report diff") {
  BenchReport a;
  a.name = "a";
  BenchRow r;
  r.benchmark = "b1";
  r.mode = "m";
  r.metrics = {{"total_cycles", 100}, {"memory_stall_cycles", 40}, {"oorw_count", 0}};
  a.rows.push_back(r);
  r.benchmark = "b2";
  a.rows.push_back(r);

  SUBCASE("identical reports") {
    const auto t = diff_reports(a, a);
    CHECK(t.entries.size() == 6);
    for (const auto& e : t.entries) {
      CHECK(e.ratio == 1.0);
      CHECK(e.direction == "same");
    }
  }
  SUBCASE("halved stall and a missing row") {
    BenchReport b = a;
    b.rows[0].metrics["memory_stall_cycles"] = 20;
    b.rows.pop_back();
    const auto t = diff_reports(a, b);
    bool half = false, gap = false;
    for (const auto& e : t.entries) {
      if (e.benchmark == "b1" && e.metric == "memory_stall_cycles") {
        half = true;
        CHECK(e.ratio == 0.5);
        CHECK(e.direction == "lower");
      }
      if (e.benchmark == "b2") {
        gap = true;
        CHECK(e.gap);
        CHECK(e.direction == "gap");
      }
    }
    CHECK(half);
    CHECK(gap);
    CHECK(t.to_text().find("GAP") != std::string::npos);
  }
  SUBCASE("schema mismatch") {
    CHECK_THROWS_AS(BenchReport::from_json("{\"schema\":\"other/1\"}"), SpecError);
    CHECK_THROWS_AS(BenchReport::from_json("not json"), SpecError);
    CHECK_THROWS_AS(BenchReport::from_json("{\"schema\":\"gcx.bench/1\",\"name\":1}"), SpecError);
  }
}
