#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "coverlab/chenstein.hpp"
#include "coverlab/lattice.hpp"
#include "coverlab/rng.hpp"

namespace coverlab {

// Discrete Gaussian free field on [0,n]^d with zero boundary values. The interior precision
// matrix is Q = I - P (P the simple-walk kernel restricted to the interior), so
// Cov(phi_x, phi_y) = Q^{-1}(x,y) = expected visits to y by a walk from x killed on the faces.
class Gff {
 public:
  // Interiors above this size use iterative column solves and cannot be sampled.
  static constexpr SiteIndex kMaxFactorization = 40'000;

  Gff(int d, int n);

  const LatticeConfig& cfg() const { return cfg_; }
  std::size_t interior_size() const { return interior_.size(); }
  const std::vector<SiteIndex>& interior() const { return interior_; }
  // Position of a lattice site in the interior ordering; -1 for boundary sites.
  int interior_index(SiteIndex site) const { return slot_[static_cast<std::size_t>(site)]; }
  bool factorized() const { return static_cast<bool>(llt_); }
  bool jittered() const { return jittered_; }

  // Exact covariance; DomainError-style ConfigError for boundary arguments. Columns are cached.
  double covariance(const Point& x, const Point& y) const;
  const Eigen::VectorXd& covariance_column(int interior_idx) const;
  // Q^{-1} b on the interior.
  Eigen::VectorXd apply_covariance(const Eigen::VectorXd& b) const;

  // One exact sample (interior ordering), phi = P^T L^{-T} z with P Q P^T = L L^T.
  void sample(Rng& rng, Eigen::VectorXd& out) const;
  // z = L^T P phi; standard normal for exact samples.
  Eigen::VectorXd whiten(const Eigen::VectorXd& phi) const;
  const Eigen::SparseMatrix<double>& precision() const { return Q_; }

 private:
  LatticeConfig cfg_;
  std::vector<SiteIndex> interior_;
  std::vector<int> slot_;
  Eigen::SparseMatrix<double> Q_;
  std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>>> llt_;
  bool jittered_ = false;
  mutable std::mutex mu_;
  mutable std::unordered_map<int, Eigen::VectorXd> columns_;
};

// n_samples exact samples stored row-wise (sample k = row k, interior ordering).
Eigen::MatrixXd sample_field(const Gff& g, std::uint64_t seed, std::size_t n_samples);

struct HighPointSpec {
  double alpha = 0.9;
  double interior_margin = 0.25;
  double G0 = 0.0;  // from the constants cache
  double threshold(int d, int n) const;
  void validate() const;
};

// Lattice sites x with interior_margin n <= x_i <= (1 - interior_margin) n in every axis.
std::vector<SiteIndex> margin_sites(const Gff& g, double interior_margin);
// Sites of the margin box where the field (interior ordering) reaches the threshold.
std::vector<SiteIndex> high_points(const Gff& g, const Eigen::Ref<const Eigen::VectorXd>& field, const HighPointSpec& hps);

// Standard normal upper tail.
double normal_tail(double z);
// P(Z1 >= a, Z2 >= b) for standard normals with correlation rho, by adaptive quadrature.
double bivariate_normal_tail(double a, double b, double rho);

struct MarkovDecomposition {
  SiteIndex site = -1;
  double radius = 0.0;
  std::vector<SiteIndex> ball;       // B_x
  std::vector<SiteIndex> boundary;   // outer boundary of B_x
  std::vector<double> p;             // harmonic measure from x on the boundary
  double p_sum = 0.0;
  double v_h2 = 0.0;
  double v_phi2 = 0.0;
  double v_xi2 = 0.0;
  double identity_error = 0.0;       // |v_phi2 - v_h2 - v_xi2|
  double min_p = 0.0;
  // Ensemble diagnostics (zero when no ensemble is supplied).
  std::size_t ensemble = 0;
  double max_abs_corr_z = 0.0;       // max over boundary y of |corr(phi_x - xi_x, phi_y)| sqrt(N)
  double xi_slope = 0.0;             // regression slope of phi_x on xi_x
  double xi_slope_se = 0.0;
};

MarkovDecomposition markov_decompose(const Gff& g, const Point& x, double radius,
                                     const Eigen::MatrixXd* ensemble = nullptr);
inline double ball_radius(int n, double gamma) { return std::pow(static_cast<double>(n), gamma); }

struct HighPointComparison {
  std::vector<SiteIndex> sites;
  std::vector<double> sigma;        // sqrt(Cov(x,x))
  std::vector<double> p_exact;      // normal_tail(t / sigma_x)
  std::vector<double> p_hat;
  std::vector<std::uint64_t> hits;
  std::uint64_t samples = 0;
  double threshold = 0.0;
  double chi2 = 0.0;                // sum (hits - N p)^2 / (N p (1 - p))
  int dof = 0;
  double chi2_p = 1.0;
  double total_hits = 0.0;
  double total_expected = 0.0;
  double aggregate_z = 0.0;
};

// Streams n_samples fields and compares per-site high-point frequencies with the exact Gaussian
// tail; the Bernoulli reference with P(Z_x = 1) = p_exact[x] is the site-exact independent field.
HighPointComparison high_point_frequencies(const Gff& g, const HighPointSpec& hps, std::size_t n_samples,
                                           std::uint64_t seed);

struct GffChenStein {
  ChenSteinInput input;
  ChenSteinBounds bounds;
  std::vector<SiteIndex> sites;
  double radius = 0.0;
  double threshold = 0.0;
  // Adjacent pairs: measured and bivariate-normal ratios p_xy / (p_x p_y).
  std::vector<double> adjacent_ratio_hat;
  std::vector<double> adjacent_ratio_exact;
};

// Chen–Stein inputs for the high-point field on a site panel: marginals from the exact tail,
// pair moments from the ensemble within B(x, radius), b3 terms by quadrature over xi_x given the
// Markov decomposition.
GffChenStein bernoulli_comparison(const Gff& g, const Eigen::MatrixXd& ensemble, const HighPointSpec& hps,
                                  const std::vector<SiteIndex>& sites, double radius);

// Mardia-style kurtosis E|z|^4 of samples whitened with the exact covariance; k(k+2) under
// normality, with variance 8k(k+2)(k+3)/N.
struct MardiaReport {
  double kurtosis = 0.0;
  double expected = 0.0;
  double z = 0.0;
  double mean_norm2 = 0.0;
};
MardiaReport mardia_check(const Gff& g, const Eigen::MatrixXd& ensemble);

}  // namespace coverlab
