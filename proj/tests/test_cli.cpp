#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sys/wait.h>

#include "coverlab/experiment.hpp"
#include "coverlab/report.hpp"
#include "coverlab/rng.hpp"
#include "support.hpp"

using namespace coverlab;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fresh_dir(const std::string& name) {
  const std::string d = testing::scratch_dir(name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

int exit_code(const std::string& args) {
  const std::string cmd = std::string(COVERLAB_BIN) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

json small_walk_config(const std::string& kind, const std::string& out) {
  return {{"schema", 1},
          {"experiment", kind},
          {"lattice", {{"d", 3}, {"n", 12}}},
          {"alpha", 0.9},
          {"r", 2.0},
          {"R", 5.0},
          {"replicas", 3},
          {"seed", 4},
          {"budgets", {{"excursions", 100000}}},
          {"constants_cache", std::string(COVERLAB_SOURCE_DIR) + "/coverlab_constants_d3.json"},
          {"output", out}};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parsing is strict") {
  json j = small_walk_config("surrogate", "x");
  CHECK_NOTHROW(parse_config(j));
  json bad = j;
  bad["aplha"] = 0.9;
  CHECK_THROWS_WITH_AS(parse_config(bad), doctest::Contains("aplha"), ConfigError);
  bad = j;
  bad["budgets"]["excursion"] = 5;
  CHECK_THROWS_WITH_AS(parse_config(bad), doctest::Contains("excursion"), ConfigError);
  bad = j;
  bad["alpha"] = 1.5;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = j;
  bad["alpha"] = "high";
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = j;
  bad["experiment"] = "cover";
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = j;
  bad["schema"] = 2;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = j;
  bad["replicas"] = -1;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
}

TEST_CASE("config hash ignores the output directory only") {
  const ExperimentConfig a = parse_config(small_walk_config("surrogate", "a"));
  const ExperimentConfig b = parse_config(small_walk_config("surrogate", "b"));
  CHECK(config_hash(a) == config_hash(b));
  json j = small_walk_config("surrogate", "a");
  j["seed"] = 5;
  CHECK(config_hash(parse_config(j)) != config_hash(a));
  CHECK(parse_config(config_to_json(a)).seed == a.seed);
  CHECK(config_hash(parse_config(config_to_json(a))) == config_hash(a));
}

TEST_CASE("every shipped preset parses") {
  int count = 0;
  for (const auto& e : std::filesystem::directory_iterator(std::string(COVERLAB_SOURCE_DIR) + "/presets")) {
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_config(e.path().string()));
    ++count;
  }
  CHECK(count >= 16);
}

TEST_CASE("zero replicas give an empty but valid record") {
  const std::string dir = fresh_dir("zero");
  json j = small_walk_config("surrogate", dir);
  j["replicas"] = 0;
  const ExperimentRecord rec = run(parse_config(j));
  CHECK(rec.summary["replicas"] == 0);
  CHECK(rec.summary["results"].empty());
  CHECK(std::filesystem::exists(dir + "/record.json"));
  CHECK(json::parse(read_file(dir + "/summary.json")) == rec.summary);
}

TEST_CASE("same config and seed give an identical summary, also after resuming") {
  const std::string d1 = fresh_dir("det1"), d2 = fresh_dir("det2");
  const ExperimentRecord a = run(parse_config(small_walk_config("surrogate", d1)));
  const ExperimentRecord b = run(parse_config(small_walk_config("surrogate", d2)));
  CHECK(a.summary.dump() == b.summary.dump());
  CHECK(read_file(d1 + "/summary.json") == read_file(d2 + "/summary.json"));
  CHECK_FALSE(std::filesystem::exists(d1 + "/checkpoint.json"));

  // a checkpoint holding replica 1 of the same config is reused without changing the numbers
  const json ck = {{"config_hash", a.summary["config_hash"]}, {"completed", {{"1", a.record["replicas"][1]}}}};
  write_atomic(d2 + "/checkpoint.json", ck.dump());
  const ExperimentRecord c = run(parse_config(small_walk_config("surrogate", d2)));
  CHECK(c.summary.dump() == a.summary.dump());
  // a stale checkpoint from a different config is ignored
  json stale = ck;
  stale["config_hash"] = "0000";
  stale["completed"]["0"] = json{{"bogus", 1}};
  write_atomic(d2 + "/checkpoint.json", stale.dump());
  CHECK(run(parse_config(small_walk_config("surrogate", d2))).summary.dump() == a.summary.dump());
}

TEST_CASE("summary lists every derived parameter with provenance") {
  const std::string dir = fresh_dir("params");
  const ExperimentRecord rec = run(parse_config(small_walk_config("surrogate", dir)));
  for (const char* k : {"alpha", "gamma", "epsilon", "psi", "zeta", "delta", "r", "R", "m_hat", "T_hat", "t_star", "A"}) {
    CAPTURE(k);
    REQUIRE(rec.summary["parameters"].contains(k));
    CHECK_FALSE(rec.summary["parameters"][k]["provenance"].get<std::string>().empty());
    CHECK_FALSE(rec.summary["parameters"][k]["value"].is_null());
  }
  const json& res = rec.summary["results"];
  CHECK(res.contains("mean_Q"));
  CHECK(res.contains("mean_Q_ci95"));
  CHECK(res.contains("predicted_exp_minus_mA"));
  CHECK(rec.record["rng"] == kRngName);
  CHECK(rec.record["code_version"] == kCodeVersion);
  for (const char* f : {"summary.json", "summary.csv", "replicas.csv", "summary.txt"})
    CHECK(std::filesystem::exists(dir + "/" + f));
}

TEST_CASE("discriminate record carries the TV lower-bound line") {
  const std::string dir = fresh_dir("disc");
  json j = small_walk_config("discriminate", dir);
  j["replicas"] = 30;
  j["lattice"]["n"] = 8;
  j["r"] = 1.0;
  j["R"] = 3.0;
  j["alpha"] = 0.55;
  const ExperimentRecord rec = run(parse_config(j));
  const std::string line = rec.summary["tv_lower_bound_line"];
  CHECK(line.find("TV(") != std::string::npos);
  CHECK(line.find("lower bound") != std::string::npos);
  CHECK(read_file(dir + "/summary.txt").find("TV(") != std::string::npos);
}

TEST_CASE("CSV round trip") {
  Table t;
  t.header = {"key", "value"};
  t.rows = {{"a", "1"}, {"with,comma", "q\"uote"}, {"multi\nline", ""}, {"", "x"}};
  CHECK(parse_csv(emit_csv(t)) == t);
  const std::string dir = fresh_dir("csv");
  const ExperimentRecord rec = run(parse_config(small_walk_config("surrogate", dir)));
  const Table s = summary_table(rec.summary);
  CHECK(parse_csv(emit_csv(s)) == s);
  CHECK(parse_csv(read_file(dir + "/summary.csv")) == s);
  std::set<std::string> keys;
  for (const auto& r : s.rows) keys.insert(r[0]);
  CHECK(keys.count("parameters.A.value") == 1);
  CHECK_THROWS_AS(write_report(rec.record, "pdf", dir), ConfigError);
}

TEST_CASE("command line exit codes") {
  const std::string dir = fresh_dir("exit");
  CHECK(exit_code("") == 2);
  CHECK(exit_code("frobnicate") == 2);
  CHECK(exit_code("chen-stein --config " + dir + "/missing.json") == 2);

  json cs = {{"schema", 1}, {"experiment", "chen-stein"}, {"replicas", 3}, {"seed", 2}, {"output", dir + "/cs"}};
  std::ofstream(dir + "/cs.json") << cs.dump();
  CHECK(exit_code("chen-stein --config " + dir + "/cs.json") == 0);
  CHECK(std::filesystem::exists(dir + "/cs/record.json"));
  CHECK(exit_code("surrogate --config " + dir + "/cs.json") == 2);
  CHECK(exit_code("report --record " + dir + "/cs/record.json --format txt") == 0);
  CHECK(exit_code("report --record " + dir + "/cs/record.json --format pdf") == 2);

  json typo = cs;
  typo["seeed"] = 1;
  std::ofstream(dir + "/typo.json") << typo.dump();
  CHECK(exit_code("chen-stein --config " + dir + "/typo.json") == 2);

  // GFF sampling beyond the factorization budget
  json big = {{"schema", 1}, {"experiment", "gff"}, {"lattice", {{"d", 3}, {"n", 48}}}, {"replicas", 1},
              {"budgets", {{"samples", 10}}},
              {"constants_cache", std::string(COVERLAB_SOURCE_DIR) + "/coverlab_constants_d3.json"},
              {"output", dir + "/big"}};
  std::ofstream(dir + "/big.json") << big.dump();
  CHECK(exit_code("gff --config " + dir + "/big.json") == 3);
}

}  // TEST_SUITE
