#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <gmpxx.h>

#include "coverlab/lattice.hpp"

// Brute-force reference implementations used to check the simulation code. Everything here is
// written directly against the lattice primitives and deliberately shares no code with the
// modules it checks.
namespace coverlab::oracle {

struct OracleBudget {
  SiteIndex max_states = 10'000;
  int max_enumeration_bits = 20;
  double solver_tolerance = 1e-10;
};

// A stored trajectory: site indices at consecutive times start_time, start_time + 1, ...
struct Trajectory {
  LatticeConfig cfg;
  std::uint64_t start_time = 0;
  std::vector<SiteIndex> sites;
};

// tau_x for every site (kNever-like max value when unvisited).
std::vector<std::uint64_t> replay_first_visits(const Trajectory& tr);
// |U(t)| from raw positions.
std::uint64_t replay_uncovered_count(const Trajectory& tr, std::uint64_t t);

struct ReplayExcursions {
  std::optional<std::uint64_t> first_reach;
  std::vector<std::uint64_t> rho;
  std::vector<std::uint64_t> rho_tilde;
  std::vector<std::uint64_t> centre_visits;
};
ReplayExcursions replay_excursions(const Trajectory& tr, const Point& centre, double r, double R);
// #{k >= 1 : rho~_k - rho~_0 <= t}; nullopt when the trajectory ends too early.
std::optional<std::uint64_t> replay_count(const Trajectory& tr, const Point& centre, double r, double R, std::uint64_t t);
// #{k >= 1 : rho~_k <= t} (absolute time), as used by the coupling bookkeeping.
std::optional<std::uint64_t> replay_count_absolute(const Trajectory& tr, const Point& centre, double r, double R,
                                                   std::uint64_t t);
// Q_x = 1(no visit to x in [tau_{dB(x,R)}, rho~_A]); nullopt when rho~_A is beyond the trajectory.
std::optional<bool> replay_Q(const Trajectory& tr, const Point& centre, double r, double R, std::uint64_t A);

// Exact excursion chain of a small annulus centred at the origin of a torus, by dense solves.
struct ExactAnnulus {
  std::vector<Point> exit_shell;   // offsets, sorted
  std::vector<Point> entry_shell;  // offsets, sorted
  Eigen::MatrixXd H;               // exit x -> first entry-shell point
  Eigen::MatrixXd K;               // entry a -> exit y
  Eigen::MatrixXd K_nohit;         // entry a -> exit y without visiting the centre
  Eigen::MatrixXd P;               // exit chain transition matrix
  Eigen::MatrixXd f;               // f(x,y), 1 where P(x,y) = 0
  Eigen::VectorXd pi;              // stationary law of P
  Eigen::VectorXd time_to_entry;   // E_x[time to entry shell]
  Eigen::VectorXd time_to_exit;    // E_a[time to leave B(0,R)]
  double T = 0.0;
  double m = 0.0;                  // -E_nu log f
  int exit_index(const Point& offset) const;
  int entry_index(const Point& offset) const;
};
ExactAnnulus exact_annulus(const LatticeConfig& cfg, double r, double R, const OracleBudget& budget = {});

// Exact joint law of a tiny {0,1}^m process: weight of outcome w (bit t = X_t).
struct TinyJoint {
  int m = 0;
  std::vector<mpq_class> w;
};

TinyJoint product_bernoulli(const std::vector<mpq_class>& p);
std::vector<mpq_class> marginals(const TinyJoint& j);
mpq_class pair_moment(const TinyJoint& j, int s, int t);
// E[X_t | X_s = x_s for s in `given`], for a pattern over `given` (bit k of `pattern` = X_{given[k]}).
mpq_class conditional_expectation(const TinyJoint& j, int t, const std::vector<int>& given, std::uint64_t pattern);
// Sum over t of E|E[X_t - p_t | X_s, s not in nbhd[t]]|.
mpq_class exact_b3(const TinyJoint& j, const std::vector<std::vector<int>>& nbhd);
std::vector<mpq_class> exact_b3_terms(const TinyJoint& j, const std::vector<std::vector<int>>& nbhd);
mpq_class exact_tv(const TinyJoint& a, const TinyJoint& b);
void check_budget(int m, const OracleBudget& budget = {});

}  // namespace coverlab::oracle
