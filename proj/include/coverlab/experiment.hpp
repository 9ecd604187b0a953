#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "coverlab/hitting.hpp"

namespace coverlab {

inline constexpr int kConfigSchema = 1;
inline constexpr const char* kCodeVersion = "coverlab 0.1.0";

enum class ExperimentKind { walk_uncovered, surrogate, excursion_diagnostics, hitting_constants, chen_stein, gff, discriminate };
std::string to_string(ExperimentKind k);
ExperimentKind parse_kind(const std::string& s);

struct Budgets {
  std::uint64_t excursions = 5'000'000;     // post burn-in excursions for f̂, m̂ and T̂
  int fm_replicas = 4;                      // walks sharing that excursion budget
  std::uint64_t step_cap = 2'000'000'000ULL;
  double eta = 0.2;                         // concentration window half-width
  std::uint64_t panel = 0;                  // surrogate sites per replica; 0 = every site
  bool coupling = false;                    // surrogate: also compare U(alpha t*) with Ubar
  std::uint64_t samples = 100'000;          // Monte Carlo samples (hitting, gff)
  std::string source = "uncovered";         // discriminate: uncovered | surrogate
  int tiny_size = 12;                       // chen-stein index set size
  double interior_margin = 0.25;            // gff high-point sub-box
  double ball_gamma = 0.5;                  // gff decomposition radius n^ball_gamma
};

struct ExperimentConfig {
  int schema = kConfigSchema;
  ExperimentKind kind = ExperimentKind::surrogate;
  int d = 3;
  int n = 32;
  double alpha = 0.9;
  double epsilon = 0.05;
  double psi = 0.0;
  double zeta = 0.1;
  std::optional<double> gamma_override;
  std::optional<double> r;
  std::optional<double> R;
  int replicas = 10;
  std::uint64_t seed = 1;
  Budgets budgets;
  std::string constants_cache;  // empty: default_constants_path(d)
  std::string output = "out";
};

// Strict parse: unknown keys and out-of-range values raise ConfigError naming the key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);
// Hex FNV-1a of the canonical config JSON with the output directory removed.
std::string config_hash(const ExperimentConfig& c);
void validate(const ExperimentConfig& c);

std::string default_constants_path(int d);
// Writes via a temporary file and rename, so readers never see a torn file.
void write_atomic(const std::string& path, const std::string& content);

struct RunOptions {
  bool resume = true;
  bool write = true;
  std::optional<GreenConstants> constants;  // skips the cache when set
  ConstantsParams constants_params;
};

struct ExperimentRecord {
  nlohmann::json record;   // full record, including timing
  nlohmann::json summary;  // deterministic part, written as summary.json
};

// Runs the experiment. With `write`, the output directory receives record.json, summary.json and
// the report files; replicas are checkpointed to checkpoint.json and reused on resume.
ExperimentRecord run(const ExperimentConfig& c, const RunOptions& opt = {});

}  // namespace coverlab
