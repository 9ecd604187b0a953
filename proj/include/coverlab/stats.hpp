#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "coverlab/lattice.hpp"

namespace coverlab {

enum class Provenance { uncovered, surrogate, gff_high, bernoulli };
std::string to_string(Provenance p);

struct SetSample {
  Provenance provenance = Provenance::uncovered;
  std::vector<SiteIndex> points;
  std::uint64_t replica = 0;
  std::uint64_t seed = 0;
};

void validate(const SetSample& s, const LatticeConfig& cfg);

// Unordered lattice-adjacent pairs inside the set.
std::uint64_t adjacent_pairs(const SetSample& s, const LatticeConfig& cfg);

// Independent site percolation with parameter p.
SetSample bernoulli_set(const LatticeConfig& cfg, double p, std::uint64_t seed, std::uint64_t replica);

enum class Statistic { adjacent_pairs, size };
std::string to_string(Statistic s);
inline const std::vector<Statistic> kStatisticPanel = {Statistic::adjacent_pairs, Statistic::size};
double evaluate(Statistic st, const SetSample& s, const LatticeConfig& cfg);

struct RankTest {
  std::size_t n_a = 0, n_b = 0;
  double u = 0.0;          // Mann–Whitney U of sample A
  double z = 0.0;          // normal approximation with tie correction, positive when A tends larger
  double p = 1.0;          // two-sided
  double auc = 0.5;        // P(A > B) + P(A = B)/2
  double ks = 0.0;         // sup |F_A - F_B|
  // With probability >= 1 - 0.05 (DKW on both samples), TV(law A, law B) >= tv_lower_bound.
  double tv_lower_bound = 0.0;
  double mean_a = 0.0, mean_b = 0.0;
};

RankTest rank_test(const std::vector<double>& a, const std::vector<double>& b);

struct DiscriminationEntry {
  Statistic statistic;
  RankTest test;
  double p_bonferroni = 1.0;
};

struct DiscriminationReport {
  std::vector<DiscriminationEntry> entries;
  double tv_lower_bound = 0.0;  // best certified bound over the panel
  std::string note;
  const DiscriminationEntry& entry(Statistic s) const;
};

// Two-sample comparison of set laws through the statistic panel. Needs at least 30 replicas per
// stream. The TV line is a certified lower bound on the set-law distance, never an estimate of it.
DiscriminationReport discriminate(const std::vector<SetSample>& a, const std::vector<SetSample>& b,
                                  const LatticeConfig& cfg, const std::vector<Statistic>& panel = kStatisticPanel);
nlohmann::json to_json(const DiscriminationReport& r);

struct TailShapeReport {
  std::vector<double> eta;
  std::vector<double> exceedance;   // fraction of |x| > eta
  double A = 0.0;
  double fit_log_c0 = 0.0;          // log exceedance ≈ fit_log_c0 - fit_c eta^2 A
  double fit_c = 0.0;
  int fit_points = 0;
  bool monotone = true;
};

// Exceedance profile of |x| against eta, with a least-squares fit of the exp(-c eta^2 A) shape
// over the points with 0 < exceedance < 1. Diagnostic only. Needs at least 100 samples.
TailShapeReport tail_shape_report(const std::vector<double>& x, double A, const std::vector<double>& eta);

}  // namespace coverlab
