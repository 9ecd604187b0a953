#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coverlab/annulus.hpp"
#include "coverlab/excursion.hpp"
#include "coverlab/hitting.hpp"
#include "coverlab/lattice.hpp"

namespace coverlab {

struct Radii {
  double gamma = 0.0;
  double r = 0.0;
  double R = 0.0;
  std::string source;  // "formula", "gamma_override" or "explicit"
};

// gamma = 2 alpha - 1 - eps (or the override), R = n^gamma, r = n^{gamma (1 - eps)}; explicit
// r and R take precedence. Throws GeometryError if the annulus cannot be embedded.
Radii choose_radii(const LatticeConfig& cfg, double alpha, double eps, std::optional<double> gamma_override,
                   std::optional<double> r, std::optional<double> R);

// f̂ per ordered pair orbit of exit points, and m̂ = E_ν[-log f̂].
struct FMEstimate {
  std::shared_ptr<const AnnulusGeometry> geom;
  std::vector<double> f;                   // per pair orbit
  std::vector<std::uint64_t> counts;
  std::vector<std::uint64_t> hits;
  std::vector<double> neg_log_f;           // per pair orbit, bias-corrected
  std::uint64_t zero_hit_orbits = 0;       // f̂ = 1 by construction
  std::uint64_t zero_hit_samples = 0;
  double m = 0.0;
  double m_se = 0.0;
  double T = 0.0;
  double T_se = 0.0;
  std::uint64_t excursions = 0;
  double mixing_tv_last = 0.0;

  // -log f̂ for the excursion from exit point i to exit point j.
  double neg_log_f_pair(int i, int j) const { return neg_log_f[static_cast<std::size_t>(geom->pair_orbit(i, j))]; }
};

// Centres on the sublattice of spacing max(1, n / per_axis). Pooling over a sparse panel keeps the
// per-centre excursion counts large, so the censoring of the last open gap of each centre is negligible.
std::vector<SiteIndex> centre_panel(const LatticeConfig& cfg, int per_axis = 8);
// Runs the excursion statistics on centre_panel(cfg).
FMEstimate estimate_f_and_m(const LatticeConfig& cfg, double r, double R, std::uint64_t n_excursions,
                            std::uint64_t seed, int replicas = 4);
FMEstimate fm_from_stats(const ExcursionStats& st);

struct SurrogateParams {
  int d = 3;
  int n = 0;
  double alpha = 0.0;
  double eps = 0.0;
  double psi = 0.0;
  double zeta = 0.0;
  double gamma = 0.0;
  double r = 0.0;
  double R = 0.0;
  std::string radii_source;
  double delta = 0.0;
  double m = 0.0;
  double T = 0.0;
  double t_star = 0.0;
  std::uint64_t A = 0;
  double A_real = 0.0;       // alpha t* / ((1+delta) T) before flooring
  double A_prime = 0.0;      // alpha t* / ((1-delta) T)
  double A_leading = 0.0;    // (alpha / C_d) r^{d-2} log(n^d)
  double C_d = 0.0;
  double p_d = 0.0;
  bool alpha_above_threshold = true;  // alpha > (1 + p_d) / 2
  bool validated = true;
  std::vector<std::string> warnings;
};

SurrogateParams compute_params(const LatticeConfig& cfg, double alpha, double eps, double psi, double zeta,
                               const GreenConstants& constants, double T, double m, const Radii& radii);

// Per-site surrogate state for one trajectory.
struct SurrogateSet {
  std::vector<SiteIndex> sites;
  std::vector<std::int8_t> Q;               // 1, 0, or -1 if undetermined at the cap
  std::vector<std::uint64_t> sigma;         // time of the A-th excursion after the first (kNever if not reached)
  std::vector<std::uint64_t> tau_tilde;     // first visit after the first exit-shell visit (kNever if none seen)
  std::vector<std::uint64_t> first_reach;   // first visit to the exit shell
  std::vector<double> neg_log_f_sum;        // sum of -log f̂ over excursions 1..A (NaN without a table)
  std::uint64_t steps = 0;
  bool partial = false;                     // cap reached before every sigma was determined
  // Set when coverage was tracked up to `horizon`.
  std::optional<std::uint64_t> horizon;
  std::vector<std::uint8_t> covered_at_horizon;  // per lattice site
  std::vector<SiteIndex> trajectory;             // when requested
};

struct SurrogateOptions {
  std::optional<std::uint64_t> coverage_horizon;  // also track U(horizon)
  const FMEstimate* f_table = nullptr;            // accumulate -log f̂ along excursions
  bool store_trajectory = false;
  std::uint64_t step_cap = 2'000'000'000ULL;
};

SurrogateSet build_surrogate(const AnnulusGeometry& geom, std::uint64_t A, const std::vector<SiteIndex>& sites,
                             std::uint64_t seed, std::uint64_t replica, const SurrogateOptions& opt = {});

struct SurrogateMoments {
  std::uint64_t replicas = 0;
  std::uint64_t samples = 0;
  double mean_Q = 0.0;
  double mean_Q_se = 0.0;       // across replicas
  double predicted = 0.0;       // exp(-m̂ A)
  double predicted_se = 0.0;    // from the standard error of m̂
  double z = 0.0;               // (mean - predicted) / sqrt(se^2 + predicted_se^2)
  double eta = 0.0;
  double window_violation = 0.0;  // fraction of (replica, site) outside the window
  std::uint64_t window_samples = 0;
  std::uint64_t undetermined = 0;
  std::vector<double> replica_means;
};

// Per-replica reduction used by surrogate_moments and by the experiment runner.
struct SurrogateReplicaStats {
  std::uint64_t determined = 0;
  std::uint64_t survivors = 0;       // Q_x = 1
  std::uint64_t undetermined = 0;
  std::uint64_t window_samples = 0;
  std::uint64_t window_violations = 0;
  std::uint64_t steps = 0;
  double mean() const { return determined ? static_cast<double>(survivors) / static_cast<double>(determined) : 0.0; }
};
SurrogateReplicaStats reduce_surrogate(const SurrogateSet& ss, double m, std::uint64_t A, double eta);
SurrogateMoments combine_surrogate(const std::vector<SurrogateReplicaStats>& reps, const SurrogateParams& params,
                                   double m_se, double eta);

SurrogateMoments surrogate_moments(const LatticeConfig& cfg, const SurrogateParams& params, const FMEstimate& fm,
                                   const std::vector<SiteIndex>& sites, int replicas, double eta, std::uint64_t seed);

struct CouplingReplica {
  bool equal = false;
  std::uint64_t uncovered = 0;           // |U(alpha t*)|
  std::uint64_t surrogate = 0;           // |Ubar|
  std::uint64_t sym_diff = 0;
  std::uint64_t u_not_in_ubar = 0;       // x in U, Q_x = 0
  std::uint64_t explained = 0;           // ... of which sigma_x > alpha t* (N_x(alpha t*) < A)
  std::uint64_t ubar_not_in_u = 0;
  bool shortfall_logged = false;         // some N_x(alpha t*) < A
  bool partial = false;
};

struct CouplingReport {
  std::uint64_t horizon = 0;
  std::vector<CouplingReplica> replicas;
  double equal_fraction = 0.0;
  std::uint64_t inclusion_failures = 0;
  std::uint64_t unexplained_failures = 0;
  std::vector<std::uint64_t> sym_diff_histogram;  // index = |U Δ Ubar|, last bin = overflow
};

CouplingReplica coupling_replica(const AnnulusGeometry& geom, const SurrogateParams& params, std::uint64_t horizon,
                                 std::uint64_t seed, std::uint64_t replica);
CouplingReport combine_coupling(std::vector<CouplingReplica> reps, std::uint64_t horizon);
inline std::uint64_t coupling_horizon(const SurrogateParams& p) {
  return static_cast<std::uint64_t>(std::floor(p.alpha * p.t_star));
}

CouplingReport coupling_check(const LatticeConfig& cfg, const SurrogateParams& params, int replicas,
                              std::uint64_t seed);

struct PairMomentReport {
  Point offset;
  double distance = 0.0;
  std::uint64_t pairs_per_replica = 0;
  int replicas = 0;
  double EQx = 0.0;
  double EQy = 0.0;
  double EQxQy = 0.0;
  double EQxQy_se = 0.0;
  double cov = 0.0;        // E[QxQy] - E[Qx]E[Qy]
  double cov_se = 0.0;     // jackknife over replicas
  double cov_z = 0.0;
  double envelope_close = 0.0;  // n^{-2 alpha d / (1 + p_d)}
  double envelope_far = 0.0;    // n^{-2 alpha d}
};

PairMomentReport pair_moment(const LatticeConfig& cfg, const SurrogateParams& params, const Point& offset,
                             int replicas, std::size_t pairs_per_replica, std::uint64_t seed);

}  // namespace coverlab
