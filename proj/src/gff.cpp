#include "coverlab/gff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "coverlab/errors.hpp"
#include "coverlab/linsolve.hpp"
#include "coverlab/parallel.hpp"

namespace coverlab {

namespace {

using Triplet = Eigen::Triplet<double>;
using LLT = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>>;

bool strictly_interior(const LatticeConfig& cfg, const Point& p) {
  for (int i = 0; i < cfg.dim(); ++i)
    if (p[i] <= 0 || p[i] >= cfg.side()) return false;
  return true;
}

}  // namespace

Gff::Gff(int d, int n) : cfg_(d, n, Geometry::box) {
  slot_.assign(static_cast<std::size_t>(cfg_.volume()), -1);
  for (SiteIndex s = 0; s < cfg_.volume(); ++s) {
    if (cfg_.on_boundary(cfg_.point(s))) continue;
    slot_[static_cast<std::size_t>(s)] = static_cast<int>(interior_.size());
    interior_.push_back(s);
  }
  const int N = static_cast<int>(interior_.size());
  const double q = 1.0 / (2.0 * d);
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(N) * static_cast<std::size_t>(2 * d + 1));
  for (int i = 0; i < N; ++i) {
    trip.emplace_back(i, i, 1.0);
    for (SiteIndex nb : cfg_.neighbors(interior_[static_cast<std::size_t>(i)])) {
      const int j = slot_[static_cast<std::size_t>(nb)];
      if (j >= 0) trip.emplace_back(i, j, -q);
    }
  }
  Q_.resize(N, N);
  Q_.setFromTriplets(trip.begin(), trip.end());
  Q_.makeCompressed();
  if (static_cast<SiteIndex>(N) <= kMaxFactorization) {
    llt_ = std::make_unique<LLT>(Q_);
    if (llt_->info() != Eigen::Success) {
      Eigen::SparseMatrix<double> I(N, N);
      I.setIdentity();
      Eigen::SparseMatrix<double> Qj = Q_ + 1e-10 * I;
      llt_ = std::make_unique<LLT>(Qj);
      jittered_ = true;
      if (llt_->info() != Eigen::Success) throw NumericalError("GFF precision factorization failed after jitter");
    }
  }
}

const Eigen::VectorXd& Gff::covariance_column(int idx) const {
  if (idx < 0 || static_cast<std::size_t>(idx) >= interior_.size()) throw ConfigError("covariance column outside the interior");
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = columns_.find(idx);
    if (it != columns_.end()) return it->second;
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(interior_.size()));
  e[idx] = 1.0;
  Eigen::VectorXd col = apply_covariance(e);
  std::lock_guard<std::mutex> lock(mu_);
  return columns_.emplace(idx, std::move(col)).first->second;
}

Eigen::VectorXd Gff::apply_covariance(const Eigen::VectorXd& b) const {
  if (b.size() != static_cast<Eigen::Index>(interior_.size())) throw ConfigError("vector size does not match the interior");
  if (llt_) {
    Eigen::VectorXd x = llt_->solve(b);
    const double res = (Q_ * x - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
    if (res > kSolveTolerance) throw NumericalError("GFF covariance solve residual " + std::to_string(res));
    return x;
  }
  return solve_sparse(Q_, b, true).col(0);
}

double Gff::covariance(const Point& x, const Point& y) const {
  if (!cfg_.valid(x) || !cfg_.valid(y)) throw ConfigError("covariance argument outside the box");
  if (cfg_.on_boundary(x) || cfg_.on_boundary(y))
    throw ConfigError("covariance is defined on the interior; boundary values are identically 0");
  const int ix = slot_[static_cast<std::size_t>(cfg_.index(x))];
  const int iy = slot_[static_cast<std::size_t>(cfg_.index(y))];
  return covariance_column(ix)[iy];
}

void Gff::sample(Rng& rng, Eigen::VectorXd& out) const {
  if (!llt_) throw ResourceError("GFF interior too large to factorize for sampling");
  const auto N = static_cast<Eigen::Index>(interior_.size());
  Eigen::VectorXd z(N);
  for (Eigen::Index i = 0; i < N; ++i) z[i] = rng.normal();
  const Eigen::VectorXd y = llt_->matrixU().solve(z);
  out = llt_->permutationPinv() * y;
}

Eigen::VectorXd Gff::whiten(const Eigen::VectorXd& phi) const {
  if (!llt_) throw ResourceError("GFF interior too large to factorize");
  const Eigen::VectorXd y = llt_->permutationP() * phi;
  return llt_->matrixU() * y;
}

Eigen::MatrixXd sample_field(const Gff& g, std::uint64_t seed, std::size_t n_samples) {
  const auto N = static_cast<Eigen::Index>(g.interior_size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_samples), N);
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (n_samples + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    Rng rng(seed, stream_id("gff-sample", c));
    Eigen::VectorXd v;
    for (std::size_t k = c * kChunk; k < std::min(n_samples, (c + 1) * kChunk); ++k) {
      g.sample(rng, v);
      out.row(static_cast<Eigen::Index>(k)) = v.transpose();
    }
  });
  return out;
}

double HighPointSpec::threshold(int d, int n) const {
  validate();
  return std::sqrt(2.0 * alpha * d * G0 * std::log(static_cast<double>(n)));
}

void HighPointSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (!(interior_margin > 0.0 && interior_margin < 0.5)) throw ConfigError("interior_margin must lie in (0,1/2)");
  if (!(G0 > 0.0)) throw ConfigError("G(0) from the constants cache is required for the threshold");
}

std::vector<SiteIndex> margin_sites(const Gff& g, double interior_margin) {
  const int n = g.cfg().side();
  const double lo = interior_margin * n, hi = (1.0 - interior_margin) * n;
  std::vector<SiteIndex> out;
  for (SiteIndex s : g.interior()) {
    const Point p = g.cfg().point(s);
    bool ok = true;
    for (int i = 0; i < g.cfg().dim() && ok; ++i) ok = p[i] >= lo && p[i] <= hi;
    if (ok) out.push_back(s);
  }
  return out;
}

std::vector<SiteIndex> high_points(const Gff& g, const Eigen::Ref<const Eigen::VectorXd>& field, const HighPointSpec& hps) {
  if (field.size() != static_cast<Eigen::Index>(g.interior_size())) throw ConfigError("field size does not match the interior");
  const double t = hps.threshold(g.cfg().dim(), g.cfg().side());
  std::vector<SiteIndex> out;
  for (SiteIndex s : margin_sites(g, hps.interior_margin))
    if (field[g.interior_index(s)] >= t) out.push_back(s);
  return out;
}

double normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double bivariate_normal_tail(double a, double b, double rho) {
  if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("correlation must lie in (-1,1)");
  const double s = std::sqrt(1.0 - rho * rho);
  auto f = [&](double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI) * normal_tail((b - rho * z) / s);
  };
  const double upper = std::max(a, 0.0) + 40.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, upper, 15, 1e-13);
}

MarkovDecomposition markov_decompose(const Gff& g, const Point& x, double radius, const Eigen::MatrixXd* ensemble) {
  const LatticeConfig& cfg = g.cfg();
  if (!cfg.valid(x)) throw ConfigError("decomposition site outside the box");
  const SiteSet B = ball(x, radius, cfg);
  const SiteSet dB = outer_boundary(B, cfg);
  for (SiteIndex s : dB.sites())
    if (!strictly_interior(cfg, cfg.point(s)))
      throw GeometryError("ball B(" + x.str() + ", " + std::to_string(radius) + ") touches the box boundary");
  MarkovDecomposition md;
  md.site = cfg.index(x);
  md.radius = radius;
  md.ball = B.sites();
  md.boundary = dB.sites();

  // Green's function of the walk killed on leaving B: (I - P_B) g = e_x.
  const int nb = static_cast<int>(B.size());
  std::unordered_map<SiteIndex, int> bi;
  for (int i = 0; i < nb; ++i) bi[md.ball[static_cast<std::size_t>(i)]] = i;
  const double q = 1.0 / (2.0 * cfg.dim());
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < nb; ++i) {
    trip.emplace_back(i, i, 1.0);
    for (SiteIndex y : cfg.neighbors(md.ball[static_cast<std::size_t>(i)])) {
      auto it = bi.find(y);
      if (it != bi.end()) trip.emplace_back(i, it->second, -q);
    }
  }
  Eigen::SparseMatrix<double> QB(nb, nb);
  QB.setFromTriplets(trip.begin(), trip.end());
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(nb, 1);
  e(bi.at(md.site), 0) = 1.0;
  const Eigen::VectorXd gB = solve_sparse(QB, e, true).col(0);
  md.v_h2 = gB[bi.at(md.site)];

  // Harmonic measure: last step from z in B to y on the boundary.
  std::unordered_map<SiteIndex, int> di;
  for (std::size_t k = 0; k < md.boundary.size(); ++k) di[md.boundary[k]] = static_cast<int>(k);
  md.p.assign(md.boundary.size(), 0.0);
  for (int i = 0; i < nb; ++i)
    for (SiteIndex y : cfg.neighbors(md.ball[static_cast<std::size_t>(i)])) {
      auto it = di.find(y);
      if (it != di.end()) md.p[static_cast<std::size_t>(it->second)] += gB[i] * q;
    }
  md.p_sum = 0.0;
  md.min_p = std::numeric_limits<double>::infinity();
  for (double v : md.p) {
    md.p_sum += v;
    md.min_p = std::min(md.min_p, v);
  }

  // v_xi^2 = p^T Cov p with Cov restricted to the boundary, via one covariance application.
  Eigen::VectorXd pv = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.interior_size()));
  for (std::size_t k = 0; k < md.boundary.size(); ++k) pv[g.interior_index(md.boundary[k])] = md.p[k];
  const Eigen::VectorXd cp = g.apply_covariance(pv);
  md.v_xi2 = pv.dot(cp);
  md.v_phi2 = g.covariance_column(g.interior_index(md.site))[g.interior_index(md.site)];
  md.identity_error = std::abs(md.v_phi2 - md.v_h2 - md.v_xi2);

  if (ensemble && ensemble->rows() > 2) {
    const auto N = ensemble->rows();
    md.ensemble = static_cast<std::size_t>(N);
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(N);
    for (std::size_t k = 0; k < md.boundary.size(); ++k) xi += md.p[k] * ensemble->col(g.interior_index(md.boundary[k]));
    const Eigen::VectorXd phi = ensemble->col(g.interior_index(md.site));
    const Eigen::VectorXd h = phi - xi;
    auto centred = [](const Eigen::VectorXd& v) { return (v.array() - v.mean()).matrix(); };
    const Eigen::VectorXd hc = centred(h);
    const double hn = hc.norm();
    for (SiteIndex y : md.boundary) {
      const Eigen::VectorXd yc = centred(ensemble->col(g.interior_index(y)));
      const double corr = hc.dot(yc) / (hn * yc.norm());
      md.max_abs_corr_z = std::max(md.max_abs_corr_z, std::abs(corr) * std::sqrt(static_cast<double>(N)));
    }
    const Eigen::VectorXd xc = centred(xi), pc = centred(phi);
    const double sxx = xc.squaredNorm();
    md.xi_slope = xc.dot(pc) / sxx;
    const double resid = (pc - md.xi_slope * xc).squaredNorm() / static_cast<double>(N - 2);
    md.xi_slope_se = std::sqrt(resid / sxx);
  }
  return md;
}

HighPointComparison high_point_frequencies(const Gff& g, const HighPointSpec& hps, std::size_t n_samples,
                                           std::uint64_t seed) {
  HighPointComparison out;
  out.threshold = hps.threshold(g.cfg().dim(), g.cfg().side());
  out.sites = margin_sites(g, hps.interior_margin);
  out.samples = n_samples;
  std::vector<int> idx;
  for (SiteIndex s : out.sites) {
    idx.push_back(g.interior_index(s));
    const double v = g.covariance_column(idx.back())[idx.back()];
    out.sigma.push_back(std::sqrt(v));
    out.p_exact.push_back(normal_tail(out.threshold / out.sigma.back()));
  }
  constexpr std::size_t kChunk = 1024;
  const std::size_t chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<std::vector<std::uint64_t>> part(chunks, std::vector<std::uint64_t>(out.sites.size(), 0));
  parallel_for(chunks, [&](std::size_t c) {
    Rng rng(seed, stream_id("gff-highpoints", c));
    Eigen::VectorXd v;
    for (std::size_t k = c * kChunk; k < std::min(n_samples, (c + 1) * kChunk); ++k) {
      g.sample(rng, v);
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (v[idx[i]] >= out.threshold) ++part[c][i];
    }
  });
  out.hits.assign(out.sites.size(), 0);
  for (const auto& p : part)
    for (std::size_t i = 0; i < p.size(); ++i) out.hits[i] += p[i];
  const double N = static_cast<double>(n_samples);
  double var = 0.0;
  for (std::size_t i = 0; i < out.sites.size(); ++i) {
    out.p_hat.push_back(N > 0 ? static_cast<double>(out.hits[i]) / N : 0.0);
    const double e = N * out.p_exact[i];
    const double v = e * (1.0 - out.p_exact[i]);
    out.total_hits += static_cast<double>(out.hits[i]);
    out.total_expected += e;
    var += v;
    if (v > 0) {
      out.chi2 += (static_cast<double>(out.hits[i]) - e) * (static_cast<double>(out.hits[i]) - e) / v;
      ++out.dof;
    }
  }
  // Site frequencies within one sample are dependent, so the aggregate z uses per-chunk totals.
  std::vector<double> ct;
  for (std::size_t c = 0; c < chunks; ++c) {
    double s = 0.0;
    for (auto h : part[c]) s += static_cast<double>(h);
    const double nk = static_cast<double>(std::min(n_samples, (c + 1) * kChunk) - c * kChunk);
    ct.push_back(s / nk);
  }
  if (ct.size() >= 2) {
    double m = 0.0, ss = 0.0;
    for (double x : ct) m += x;
    m /= static_cast<double>(ct.size());
    for (double x : ct) ss += (x - m) * (x - m);
    const double se = std::sqrt(ss / static_cast<double>(ct.size() - 1) / static_cast<double>(ct.size()));
    const double target = out.total_expected / N;
    out.aggregate_z = se > 0 ? (out.total_hits / N - target) / se : 0.0;
  } else if (var > 0) {
    out.aggregate_z = (out.total_hits - out.total_expected) / std::sqrt(var);
  }
  if (out.dof > 0) out.chi2_p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(out.dof), out.chi2));
  return out;
}

GffChenStein bernoulli_comparison(const Gff& g, const Eigen::MatrixXd& ensemble, const HighPointSpec& hps,
                                  const std::vector<SiteIndex>& sites, double radius) {
  const LatticeConfig& cfg = g.cfg();
  GffChenStein out;
  out.sites = sites;
  out.radius = radius;
  out.threshold = hps.threshold(cfg.dim(), cfg.side());
  const double t = out.threshold;
  const auto N = ensemble.rows();
  if (N < 2) throw ConfigError("bernoulli_comparison needs an ensemble");
  const std::size_t k = sites.size();
  std::vector<int> idx;
  std::vector<double> sigma;
  for (SiteIndex s : sites) {
    idx.push_back(g.interior_index(s));
    if (idx.back() < 0) throw ConfigError("comparison sites must be interior");
    sigma.push_back(std::sqrt(g.covariance_column(idx.back())[idx.back()]));
    out.input.p.push_back(normal_tail(t / sigma.back()));
  }
  const std::int64_t r2 = radius_sq_floor(radius);
  out.input.nbhd.resize(k);
  out.input.b3_terms.resize(k);
  for (std::size_t a = 0; a < k; ++a) {
    const Point pa = cfg.point(sites[a]);
    for (std::size_t b = 0; b < k; ++b) {
      if (dist2(pa, cfg.point(sites[b]), cfg) > r2) continue;
      out.input.nbhd[a].push_back(static_cast<int>(b));
      if (a == b) continue;
      std::int64_t both = 0;
      for (Eigen::Index r = 0; r < N; ++r) both += ensemble(r, idx[a]) >= t && ensemble(r, idx[b]) >= t;
      out.input.pair[{static_cast<int>(a), static_cast<int>(b)}] = static_cast<double>(both) / static_cast<double>(N);
      if (dist2(pa, cfg.point(sites[b]), cfg) == 1 && a < b) {
        double ca = 0, cb = 0;
        for (Eigen::Index r = 0; r < N; ++r) {
          ca += ensemble(r, idx[a]) >= t;
          cb += ensemble(r, idx[b]) >= t;
        }
        const double pab = static_cast<double>(both) / static_cast<double>(N);
        out.adjacent_ratio_hat.push_back(ca > 0 && cb > 0 ? pab / (ca / static_cast<double>(N) * cb / static_cast<double>(N)) : 0.0);
        const double rho = g.covariance_column(idx[a])[idx[b]] / (sigma[a] * sigma[b]);
        out.adjacent_ratio_exact.push_back(bivariate_normal_tail(t / sigma[a], t / sigma[b], rho) /
                                           (out.input.p[a] * out.input.p[b]));
      }
    }
    // E | P(h_x + xi_x >= t | xi_x) - p_x | with xi_x ~ N(0, v_xi^2), h_x ~ N(0, v_h^2).
    const MarkovDecomposition md = markov_decompose(g, pa, radius);
    const double vh = std::sqrt(md.v_h2), vx = std::sqrt(md.v_xi2), px = out.input.p[a];
    auto f = [&](double z) {
      return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI) * std::abs(normal_tail((t - vx * z) / vh) - px);
    };
    out.input.b3_terms[a] = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -12.0, 12.0, 15, 1e-12);
  }
  // The ball around x contains every panel site whose indicator may depend on F_out at x only
  // through xi_x, so the b3 terms above dominate the Chen–Stein ones.
  out.bounds = bounds(out.input);
  return out;
}

MardiaReport mardia_check(const Gff& g, const Eigen::MatrixXd& ensemble) {
  MardiaReport rep;
  const auto N = ensemble.rows();
  const double k = static_cast<double>(g.interior_size());
  if (N < 2) throw ConfigError("Mardia check needs an ensemble");
  double s4 = 0.0, s2 = 0.0;
  for (Eigen::Index r = 0; r < N; ++r) {
    const Eigen::VectorXd z = g.whiten(ensemble.row(r).transpose());
    const double q = z.squaredNorm();
    s2 += q;
    s4 += q * q;
  }
  rep.mean_norm2 = s2 / static_cast<double>(N);
  rep.kurtosis = s4 / static_cast<double>(N);
  rep.expected = k * (k + 2.0);
  rep.z = (rep.kurtosis - rep.expected) / std::sqrt(8.0 * k * (k + 2.0) * (k + 3.0) / static_cast<double>(N));
  return rep;
}

}  // namespace coverlab
