#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "coverlab/errors.hpp"
#include "coverlab/experiment.hpp"
#include "coverlab/hitting.hpp"
#include "coverlab/report.hpp"

using namespace coverlab;

namespace {

struct ExperimentArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicas;
  std::optional<std::string> out;
  bool no_resume = false;
};

int run_experiment(const std::string& kind, const ExperimentArgs& a) {
  std::ifstream in(a.config);
  if (!in) throw ConfigError("cannot open config '" + a.config + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!j.contains("experiment")) j["experiment"] = kind;
  if (j.at("experiment") != kind)
    throw ConfigError("config describes experiment '" + j.at("experiment").get<std::string>() + "', not '" + kind + "'");
  if (a.seed) j["seed"] = *a.seed;
  if (a.replicas) j["replicas"] = *a.replicas;
  if (a.out) j["output"] = *a.out;
  const ExperimentConfig c = parse_config(j);
  RunOptions opt;
  opt.resume = !a.no_resume;
  const ExperimentRecord rec = run(c, opt);
  std::cout << summary_text(rec.record);
  std::cout << "\nrecord written to " << c.output << "/record.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coverlab: uncovered sets of random walks, surrogate coupling and comparison fields"};
  app.require_subcommand(1);

  ExperimentArgs ea;
  std::string kind_selected;
  const std::vector<std::string> kinds = {"walk-uncovered", "surrogate", "excursion-diagnostics", "hitting-constants",
                                          "chen-stein", "gff", "discriminate"};
  for (const auto& k : kinds) {
    auto* sub = app.add_subcommand(k, "run the " + k + " experiment");
    sub->add_option("--config", ea.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", ea.seed, "64-bit seed (overrides the config)");
    sub->add_option("--replicas", ea.replicas, "replica count (overrides the config)");
    sub->add_option("--out", ea.out, "output directory (overrides the config)");
    sub->add_flag("--no-resume", ea.no_resume, "ignore an existing checkpoint");
    sub->callback([&, k] { kind_selected = k; });
  }

  int d = 3;
  std::string cache;
  bool force = false;
  auto* cst = app.add_subcommand("constants", "estimate or load G(0), p_d, c_d, C_d");
  cst->add_option("--d", d, "dimension")->check(CLI::Range(3, 8));
  cst->add_option("--cache", cache, "cache file (default coverlab_constants_d<d>.json)");
  cst->add_flag("--force", force, "re-estimate even when the cache exists");

  std::string record_path, format = "all", out_dir;
  auto* rep = app.add_subcommand("report", "re-emit report files from a record");
  rep->add_option("--record", record_path, "record.json")->required();
  rep->add_option("--format", format, "json | csv | txt | all");
  rep->add_option("--out", out_dir, "output directory (default: the record's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!kind_selected.empty()) return run_experiment(kind_selected, ea);
    if (cst->parsed()) {
      const std::string path = cache.empty() ? default_constants_path(d) : cache;
      if (force) std::remove(path.c_str());
      const GreenConstants k = load_or_estimate_constants(d, path);
      std::cout << constants_to_json(k).dump(2) << "\n";
      return 0;
    }
    if (rep->parsed()) {
      std::ifstream in(record_path);
      if (!in) throw ConfigError("cannot open record '" + record_path + "'");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("record is not valid JSON: " + std::string(e.what()));
      }
      if (out_dir.empty()) {
        const auto parent = std::filesystem::path(record_path).parent_path();
        out_dir = parent.empty() ? "." : parent.string();
      }
      write_report(j, format, out_dir);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ResourceError& e) {
    std::cerr << "resource error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
