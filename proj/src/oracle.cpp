#include "coverlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "coverlab/errors.hpp"

namespace coverlab::oracle {

namespace {

constexpr std::uint64_t kUnvisited = std::numeric_limits<std::uint64_t>::max();

void require_trajectory(const Trajectory& tr) {
  if (tr.sites.empty()) throw ConfigError("replay unavailable: no stored trajectory");
}

std::uint64_t end_time(const Trajectory& tr) { return tr.start_time + tr.sites.size() - 1; }

}  // namespace

std::vector<std::uint64_t> replay_first_visits(const Trajectory& tr) {
  require_trajectory(tr);
  std::vector<std::uint64_t> tau(static_cast<std::size_t>(tr.cfg.volume()), kUnvisited);
  for (std::size_t i = 0; i < tr.sites.size(); ++i) {
    auto& t = tau[static_cast<std::size_t>(tr.sites[i])];
    if (t == kUnvisited) t = tr.start_time + i;
  }
  return tau;
}

std::uint64_t replay_uncovered_count(const Trajectory& tr, std::uint64_t t) {
  require_trajectory(tr);
  if (t > end_time(tr)) throw ConfigError("replay horizon beyond the stored trajectory");
  std::vector<bool> seen(static_cast<std::size_t>(tr.cfg.volume()), false);
  std::uint64_t visited = 0;
  for (std::size_t i = 0; i < tr.sites.size() && tr.start_time + i <= t; ++i) {
    if (!seen[static_cast<std::size_t>(tr.sites[i])]) {
      seen[static_cast<std::size_t>(tr.sites[i])] = true;
      ++visited;
    }
  }
  return static_cast<std::uint64_t>(tr.cfg.volume()) - visited;
}

ReplayExcursions replay_excursions(const Trajectory& tr, const Point& centre, double r, double R) {
  require_trajectory(tr);
  const SiteSet big = ball(centre, R, tr.cfg);
  const SiteSet small = ball(centre, r, tr.cfg);
  const SiteSet entry = inner_boundary(small, tr.cfg);
  const SiteSet exit = outer_boundary(big, tr.cfg);
  const SiteIndex c = tr.cfg.index(centre);
  ReplayExcursions out;
  bool inside = false;
  for (std::size_t i = 0; i < tr.sites.size(); ++i) {
    const std::uint64_t t = tr.start_time + i;
    const SiteIndex s = tr.sites[i];
    if (!out.first_reach && exit.contains(s)) out.first_reach = t;
    if (inside && !big.contains(s)) {
      out.rho_tilde.push_back(t);
      inside = false;
    } else if (!inside && entry.contains(s)) {
      out.rho.push_back(t);
      inside = true;
    }
    if (s == c) out.centre_visits.push_back(t);
  }
  return out;
}

std::optional<std::uint64_t> replay_count(const Trajectory& tr, const Point& centre, double r, double R, std::uint64_t t) {
  if (t == 0) return 0;
  const ReplayExcursions e = replay_excursions(tr, centre, r, R);
  if (e.rho_tilde.empty() || e.rho_tilde[0] + t > end_time(tr)) return std::nullopt;
  std::uint64_t n = 0;
  for (std::size_t k = 1; k < e.rho_tilde.size(); ++k)
    if (e.rho_tilde[k] - e.rho_tilde[0] <= t) ++n;
  return n;
}

std::optional<std::uint64_t> replay_count_absolute(const Trajectory& tr, const Point& centre, double r, double R,
                                                   std::uint64_t t) {
  if (t > end_time(tr)) return std::nullopt;
  const ReplayExcursions e = replay_excursions(tr, centre, r, R);
  std::uint64_t n = 0;
  for (std::size_t k = 1; k < e.rho_tilde.size(); ++k)
    if (e.rho_tilde[k] <= t) ++n;
  return n;
}

std::optional<bool> replay_Q(const Trajectory& tr, const Point& centre, double r, double R, std::uint64_t A) {
  const ReplayExcursions e = replay_excursions(tr, centre, r, R);
  const bool sigma_known = e.rho_tilde.size() > A;
  if (e.first_reach) {
    for (std::uint64_t v : e.centre_visits) {
      if (v < *e.first_reach) continue;
      if (!sigma_known || v <= e.rho_tilde[A]) return false;
      break;
    }
  }
  if (sigma_known) return true;
  return std::nullopt;
}

int ExactAnnulus::exit_index(const Point& offset) const {
  auto it = std::lower_bound(exit_shell.begin(), exit_shell.end(), offset);
  return it != exit_shell.end() && *it == offset ? static_cast<int>(it - exit_shell.begin()) : -1;
}

int ExactAnnulus::entry_index(const Point& offset) const {
  auto it = std::lower_bound(entry_shell.begin(), entry_shell.end(), offset);
  return it != entry_shell.end() && *it == offset ? static_cast<int>(it - entry_shell.begin()) : -1;
}

namespace {

// Solves (I - P_U) X = B on the unknown set U (dense), with B built by `rhs`.
Eigen::MatrixXd dense_absorption(const LatticeConfig& cfg, const std::vector<SiteIndex>& unknown,
                                 const std::vector<SiteIndex>& columns, bool add_time_column, double tol) {
  std::map<SiteIndex, int> uidx, cidx;
  for (std::size_t i = 0; i < unknown.size(); ++i) uidx[unknown[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < columns.size(); ++i) cidx[columns[i]] = static_cast<int>(i);
  const auto nu = static_cast<Eigen::Index>(unknown.size());
  const auto nc = static_cast<Eigen::Index>(columns.size() + (add_time_column ? 1 : 0));
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(nu, nu);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nu, nc);
  const double w = 1.0 / (2.0 * cfg.dim());
  for (std::size_t i = 0; i < unknown.size(); ++i) {
    for (SiteIndex nb : cfg.neighbors(unknown[i])) {
      if (auto it = uidx.find(nb); it != uidx.end())
        A(static_cast<Eigen::Index>(i), it->second) -= w;
      else if (auto jt = cidx.find(nb); jt != cidx.end())
        B(static_cast<Eigen::Index>(i), jt->second) += w;
    }
    if (add_time_column) B(static_cast<Eigen::Index>(i), nc - 1) = 1.0;
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  Eigen::MatrixXd X = lu.solve(B);
  X += lu.solve(B - A * X);
  const double res = (A * X - B).cwiseAbs().maxCoeff() / std::max(1.0, B.cwiseAbs().maxCoeff());
  if (!(res <= tol)) throw NumericalError("oracle solve residual too large");
  return X;
}

}  // namespace

ExactAnnulus exact_annulus(const LatticeConfig& cfg, double r, double R, const OracleBudget& budget) {
  if (!cfg.is_torus()) throw ConfigError("exact annulus needs the torus");
  if (cfg.volume() > budget.max_states) throw ResourceError("exact annulus beyond the oracle state budget");
  const Point o = cfg.origin();
  const SiteSet big = ball(o, R, cfg);
  const SiteSet small = ball(o, r, cfg);
  const SiteSet entry = inner_boundary(small, cfg);
  const SiteSet exit = outer_boundary(big, cfg);
  if (big.size() > 10'000) throw ResourceError("exact annulus needs |B(x,R)| <= 10^4");

  ExactAnnulus ex;
  std::vector<std::pair<Point, SiteIndex>> ex_pts, en_pts;
  for (SiteIndex s : exit.sites()) ex_pts.emplace_back(cfg.displacement(o, cfg.point(s)), s);
  for (SiteIndex s : entry.sites()) en_pts.emplace_back(cfg.displacement(o, cfg.point(s)), s);
  std::sort(ex_pts.begin(), ex_pts.end());
  std::sort(en_pts.begin(), en_pts.end());
  std::vector<SiteIndex> ex_sites, en_sites;
  for (auto& [p, s] : ex_pts) {
    ex.exit_shell.push_back(p);
    ex_sites.push_back(s);
  }
  for (auto& [p, s] : en_pts) {
    ex.entry_shell.push_back(p);
    en_sites.push_back(s);
  }
  const auto S = static_cast<Eigen::Index>(ex_sites.size());
  const auto E = static_cast<Eigen::Index>(en_sites.size());

  // Outside phase: from anywhere off the entry shell to the first entry-shell point.
  std::vector<SiteIndex> outside;
  std::map<SiteIndex, int> out_idx;
  for (SiteIndex s = 0; s < cfg.volume(); ++s)
    if (!entry.contains(s)) {
      out_idx[s] = static_cast<int>(outside.size());
      outside.push_back(s);
    }
  const Eigen::MatrixXd XA = dense_absorption(cfg, outside, en_sites, true, budget.solver_tolerance);
  ex.H.resize(S, E);
  ex.time_to_entry.resize(S);
  for (Eigen::Index i = 0; i < S; ++i) {
    const int row = out_idx.at(ex_sites[static_cast<std::size_t>(i)]);
    ex.H.row(i) = XA.row(row).head(E);
    ex.time_to_entry(i) = XA(row, E);
  }

  // Inside phase: from an entry point to the first vertex outside B(0,R), with and without
  // the centre absorbing.
  std::vector<SiteIndex> inside(big.sites().begin(), big.sites().end());
  std::vector<SiteIndex> inside_nc;
  for (SiteIndex s : inside)
    if (s != cfg.index(o)) inside_nc.push_back(s);
  const Eigen::MatrixXd XB = dense_absorption(cfg, inside, ex_sites, true, budget.solver_tolerance);
  const Eigen::MatrixXd XC = dense_absorption(cfg, inside_nc, ex_sites, false, budget.solver_tolerance);
  std::map<SiteIndex, int> in_idx, nc_idx;
  for (std::size_t i = 0; i < inside.size(); ++i) in_idx[inside[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < inside_nc.size(); ++i) nc_idx[inside_nc[i]] = static_cast<int>(i);
  ex.K.resize(E, S);
  ex.K_nohit.resize(E, S);
  ex.time_to_exit.resize(E);
  for (Eigen::Index a = 0; a < E; ++a) {
    const SiteIndex s = en_sites[static_cast<std::size_t>(a)];
    ex.K.row(a) = XB.row(in_idx.at(s)).head(S);
    ex.time_to_exit(a) = XB(in_idx.at(s), S);
    ex.K_nohit.row(a) = XC.row(nc_idx.at(s));
  }

  ex.P = ex.H * ex.K;
  const Eigen::MatrixXd F = ex.H * ex.K_nohit;
  ex.f = Eigen::MatrixXd::Ones(S, S);
  for (Eigen::Index i = 0; i < S; ++i)
    for (Eigen::Index j = 0; j < S; ++j)
      if (ex.P(i, j) > 0) ex.f(i, j) = F(i, j) / ex.P(i, j);

  Eigen::MatrixXd M = ex.P.transpose() - Eigen::MatrixXd::Identity(S, S);
  M.row(S - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S);
  rhs(S - 1) = 1.0;
  ex.pi = M.fullPivLu().solve(rhs);

  ex.T = 0.0;
  ex.m = 0.0;
  for (Eigen::Index i = 0; i < S; ++i) {
    ex.T += ex.pi(i) * (ex.time_to_entry(i) + ex.H.row(i).dot(ex.time_to_exit));
    for (Eigen::Index j = 0; j < S; ++j)
      if (ex.P(i, j) > 0) ex.m -= ex.pi(i) * ex.P(i, j) * std::log(ex.f(i, j));
  }
  return ex;
}

void check_budget(int m, const OracleBudget& budget) {
  if (m < 0 || m > budget.max_enumeration_bits) throw ResourceError("enumeration beyond 2^" + std::to_string(budget.max_enumeration_bits) + " outcomes");
}

TinyJoint product_bernoulli(const std::vector<mpq_class>& p) {
  check_budget(static_cast<int>(p.size()));
  TinyJoint j;
  j.m = static_cast<int>(p.size());
  j.w.assign(std::size_t{1} << j.m, mpq_class(1));
  for (std::size_t w = 0; w < j.w.size(); ++w)
    for (int t = 0; t < j.m; ++t) j.w[w] *= (w >> t & 1u) ? p[static_cast<std::size_t>(t)] : mpq_class(1) - p[static_cast<std::size_t>(t)];
  return j;
}

std::vector<mpq_class> marginals(const TinyJoint& j) {
  std::vector<mpq_class> p(static_cast<std::size_t>(j.m), mpq_class(0));
  for (std::size_t w = 0; w < j.w.size(); ++w)
    for (int t = 0; t < j.m; ++t)
      if (w >> t & 1u) p[static_cast<std::size_t>(t)] += j.w[w];
  return p;
}

mpq_class pair_moment(const TinyJoint& j, int s, int t) {
  mpq_class q(0);
  for (std::size_t w = 0; w < j.w.size(); ++w)
    if ((w >> s & 1u) && (w >> t & 1u)) q += j.w[w];
  return q;
}

mpq_class conditional_expectation(const TinyJoint& j, int t, const std::vector<int>& given, std::uint64_t pattern) {
  mpq_class num(0), den(0);
  for (std::size_t w = 0; w < j.w.size(); ++w) {
    bool match = true;
    for (std::size_t k = 0; k < given.size() && match; ++k) match = ((w >> given[k]) & 1u) == ((pattern >> k) & 1u);
    if (!match) continue;
    den += j.w[w];
    if (w >> t & 1u) num += j.w[w];
  }
  if (den == 0) return mpq_class(0);
  return num / den;
}

std::vector<mpq_class> exact_b3_terms(const TinyJoint& j, const std::vector<std::vector<int>>& nbhd) {
  if (static_cast<int>(nbhd.size()) != j.m) throw ConfigError("one neighbourhood per index required");
  const std::vector<mpq_class> p = marginals(j);
  std::vector<mpq_class> terms;
  for (int t = 0; t < j.m; ++t) {
    const auto& B = nbhd[static_cast<std::size_t>(t)];
    if (std::find(B.begin(), B.end(), t) == B.end()) throw ConfigError("neighbourhood of t must contain t");
    std::vector<int> outside;
    for (int s = 0; s < j.m; ++s)
      if (std::find(B.begin(), B.end(), s) == B.end()) outside.push_back(s);
    std::vector<mpq_class> num(std::size_t{1} << outside.size(), mpq_class(0)), den(num.size(), mpq_class(0));
    for (std::size_t w = 0; w < j.w.size(); ++w) {
      std::size_t key = 0;
      for (std::size_t k = 0; k < outside.size(); ++k) key |= ((w >> outside[k]) & 1u) << k;
      den[key] += j.w[w];
      if (w >> t & 1u) num[key] += j.w[w];
    }
    mpq_class term(0);
    for (std::size_t k = 0; k < num.size(); ++k) term += abs(num[k] - p[static_cast<std::size_t>(t)] * den[k]);
    terms.push_back(term);
  }
  return terms;
}

mpq_class exact_b3(const TinyJoint& j, const std::vector<std::vector<int>>& nbhd) {
  mpq_class s(0);
  for (const auto& t : exact_b3_terms(j, nbhd)) s += t;
  return s;
}

mpq_class exact_tv(const TinyJoint& a, const TinyJoint& b) {
  if (a.m != b.m) throw ConfigError("exact_tv: index sets differ");
  mpq_class s(0);
  for (std::size_t w = 0; w < a.w.size(); ++w) s += abs(a.w[w] - b.w[w]);
  return s / 2;
}

}  // namespace coverlab::oracle
