#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "coverlab/lattice.hpp"
#include "coverlab/linsolve.hpp"

namespace coverlab {

// Exact absorption computations for SRW on a torus or a box (box faces absorb).
class ExactChainSolver {
 public:
  static constexpr SiteIndex kMaxStates = 2'000'000;

  explicit ExactChainSolver(const LatticeConfig& cfg);

  // h(v) = P_v(hit target before avoid), for every site (1 on target, 0 on avoid / box faces).
  std::vector<double> hit_probabilities(const SiteSet& target, const SiteSet& avoid, SolveInfo* info = nullptr) const;
  // E_v[time to hit target] (0 on target). Target must be reachable from everywhere.
  std::vector<double> expected_hit_times(const SiteSet& target, SolveInfo* info = nullptr) const;
  // Columns G(., source) of the Green's function killed at `absorbing` (and at box faces).
  Eigen::MatrixXd green_columns(const std::vector<SiteIndex>& sources, const SiteSet& absorbing,
                                SolveInfo* info = nullptr) const;

  const LatticeConfig& cfg() const { return cfg_; }

 private:
  LatticeConfig cfg_;
};

double exact_hit_prob(const LatticeConfig& cfg, const Point& start, const SiteSet& target, const SiteSet& avoid);

struct GreenConstants {
  int d = 3;
  double G0 = 0.0;
  double G0_se = 0.0;     // extrapolation uncertainty
  double p_d = 0.0;       // 1 - 1/G0
  double c_d = 0.0;
  double c_d_se = 0.0;
  double C_d = 0.0;       // c_d / G0
  double slope = 0.0;     // log-log slope of the corrected Green's function
  // Independent route: Monte Carlo return frequency, extrapolated in the kill radius.
  double p_mc = 0.0;
  double p_mc_se = 0.0;
  std::vector<int> box_sides;
  std::vector<double> box_G0;
  std::vector<int> kill_radii;
  std::vector<double> p_mc_radius;
  std::vector<double> p_mc_radius_se;
  double extrapolation_gap = 0.0;  // |3-point - 2-point| extrapolation of G0
  std::uint64_t mc_walks = 0;
  std::uint64_t seed = 0;
};

struct ConstantsParams {
  std::vector<int> box_sides;        // empty: defaults for d
  std::vector<int> kill_radii{20, 40};
  std::uint64_t mc_walks = 400'000;  // per kill radius
  std::uint64_t seed = 20240611;
  double max_extrapolation_gap = 2e-3;
};

GreenConstants estimate_constants(int d, const ConstantsParams& params = {});

nlohmann::json constants_to_json(const GreenConstants& c);
GreenConstants constants_from_json(const nlohmann::json& j);
// Reads the cache file if present and matching d; otherwise estimates and writes it.
GreenConstants load_or_estimate_constants(int d, const std::string& cache_path, const ConstantsParams& params = {});

// Stratified Monte Carlo of single excursions B(0,r) -> outside B(0,R): walks start uniformly
// on the entry shell and stop at the first vertex outside B(0,R).
struct ExcursionHitStratum {
  Point entry_class;  // canonical entry offset
  int exit_bin = 0;   // cos(entry, exit) in [-1,-1/3), [-1/3,1/3), [1/3,1]
  std::uint64_t samples = 0;
  std::uint64_t hits = 0;
};

struct ExcursionHitReport {
  double r = 0.0;
  double R = 0.0;
  std::uint64_t samples = 0;
  std::uint64_t hits = 0;
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::vector<ExcursionHitStratum> strata;
  // Chi-square test of independence between hit and stratum (all strata, >= 5 expected).
  double homogeneity_chi2 = 0.0;
  double homogeneity_dof = 0.0;
  double homogeneity_p = 1.0;
  // Same test restricted to exit bins within each entry class, pooled over classes.
  double exit_homogeneity_p = 1.0;
  // Same test across entry classes after pooling exit bins.
  double entry_homogeneity_p = 1.0;
  double max_min_ratio = 0.0;  // over strata with >= 50 hits
  bool small_radius = false;   // r < 5: outside the r, R -> infinity regime
  std::vector<Point> targets;
};

ExcursionHitReport conditional_hit_prob(const LatticeConfig& cfg, double r, double R, std::uint64_t samples,
                                        std::uint64_t seed);
// P(tau_x ∧ tau_y < tau_R) with x the centre and y = x + v; v = 0 reproduces conditional_hit_prob.
ExcursionHitReport two_point_hit_prob(const LatticeConfig& cfg, const Point& v, double r, double R,
                                      std::uint64_t samples, std::uint64_t seed);

}  // namespace coverlab
