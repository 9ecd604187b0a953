#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "coverlab/annulus.hpp"
#include "coverlab/lattice.hpp"
#include "coverlab/walk.hpp"

namespace coverlab {

// Stopping times of the excursions across one annulus along a trajectory.
struct ExcursionLog {
  AnnulusSpec annulus;
  std::uint64_t start_time = 0;
  std::uint64_t horizon = 0;
  std::optional<std::uint64_t> first_reach;  // first visit to the exit shell
  std::vector<std::uint64_t> rho;            // excursion starts (entry shell)
  std::vector<std::uint64_t> rho_tilde;      // excursion ends (first vertex outside B(x,R))
  std::vector<Point> entry_points;
  std::vector<Point> exit_points;
  std::vector<std::uint64_t> centre_visits;
  bool truncated = false;  // an excursion was open at the horizon
};

// Walks from s until the absolute time `horizon`, logging excursions around `centre`.
ExcursionLog record_excursions(WalkState& s, const AnnulusGeometry& geom, const Point& centre,
                               std::uint64_t horizon, const Stepper& stepper,
                               std::vector<SiteIndex>* trace = nullptr);

struct ExcursionCount {
  std::uint64_t count = 0;
  bool determined = true;
};

// N(t) = #{k >= 1 : rho~_k - rho~_0 <= t}; undetermined if the log ends before rho~_0 + t.
ExcursionCount count_excursions(const ExcursionLog& log, std::uint64_t t);

struct ExcursionRunConfig {
  std::uint64_t target_excursions = 1'000'000;  // post burn-in, summed over replicas
  int replicas = 4;
  int burn_in = 50;               // excursions skipped per centre
  int batches_per_replica = 10;   // time blocks for batch means
  int mixing_max_k = 6;
  int mixing_starts = 3;          // representatives of the smallest exit orbits
  std::vector<SiteIndex> centres; // empty: every site
  bool pair_statistics = true;
  std::uint64_t step_cap = 20'000'000'000ULL;
  std::uint64_t seed = 1;
};

// Pooled statistics of the stationary excursion stream across many centres.
struct ExcursionStats {
  std::shared_ptr<const AnnulusGeometry> geom;
  std::uint64_t excursions = 0;
  std::uint64_t steps = 0;
  double T = 0.0;
  double T_se = 0.0;
  std::vector<double> T_batches;
  std::vector<std::uint64_t> exit_counts;  // per exit-shell point
  std::vector<std::uint64_t> pair_counts;  // per pair orbit
  std::vector<std::uint64_t> pair_hits;    // per pair orbit: centre visited during the excursion
  std::vector<std::vector<std::uint32_t>> batch_exit_counts;
  // Batch sums of pair-orbit counts, used for the variance of ν-weighted means.
  std::vector<std::vector<std::uint32_t>> batch_pair_counts;
  std::vector<std::vector<std::uint32_t>> batch_pair_hits;
  std::vector<int> mixing_start_points;
  // mixing_tv[s][k-1]: TV between law(Y_k | Y_0 = start s) and π̃, on stabiliser orbits.
  std::vector<std::vector<double>> mixing_tv;
  std::vector<std::vector<double>> mixing_noise_floor;
  std::vector<std::vector<std::uint64_t>> mixing_samples;
  int burn_in = 0;
  bool cap_hit = false;
};

ExcursionStats run_excursion_stats(std::shared_ptr<const AnnulusGeometry> geom, const ExcursionRunConfig& rc);

struct TEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::uint64_t excursions = 0;
};
TEstimate estimate_T(const LatticeConfig& cfg, const AnnulusSpec& a, std::uint64_t n_excursions, std::uint64_t seed);

struct ExitChainEstimate {
  std::vector<Point> support;
  std::vector<double> pi_tilde;                // per exit point
  std::vector<double> pi_tilde_orbit_se;       // per exit point, binomial SE
  std::vector<double> nu_orbit;                // per pair orbit, weight of one pair in the orbit
  std::vector<int> nu_orbit_size;
  std::vector<std::uint64_t> nu_orbit_counts;
  double nu_ratio = 0.0;                       // max/min ν over pair orbits with >= min count
  std::uint64_t nu_ratio_min_count = 0;
  std::vector<std::vector<double>> mixing_tv;
  std::vector<std::vector<double>> mixing_noise_floor;
  int mixing_steps = 0;                        // first k where every start is below 0.1 above its noise floor
  double orbit_uniformity_p = 1.0;             // π̃ uniform within each point orbit; batch randomization test
  bool wide_ci = false;
  std::uint64_t excursions = 0;
};
ExitChainEstimate exit_chain(const LatticeConfig& cfg, const AnnulusSpec& a, std::uint64_t n_excursions,
                             std::uint64_t seed);
ExitChainEstimate summarize_exit_chain(const ExcursionStats& st);

struct ConcentrationReport {
  double t = 0.0;
  double T = 0.0;
  std::vector<double> deltas;
  std::vector<double> A;
  std::vector<double> A_prime;
  std::vector<double> violation_freq;   // over (replica, centre) samples
  std::vector<std::uint64_t> violations;
  std::uint64_t samples = 0;
  std::uint64_t undetermined = 0;
  // Shape n^psi exp(-c δ² r^{d-2} / n^psi) + exp(-c n^psi) with c unknown, shown for c = 1.
  std::vector<double> bound_shape_c1;
  double psi = 0.0;
};
ConcentrationReport concentration_check(const LatticeConfig& cfg, const AnnulusSpec& a, std::uint64_t t,
                                        const std::vector<double>& deltas, double T, int replicas,
                                        std::size_t panel, double psi, std::uint64_t seed);

}  // namespace coverlab
