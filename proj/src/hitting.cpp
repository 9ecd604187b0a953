#include "coverlab/hitting.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "coverlab/annulus.hpp"
#include "coverlab/parallel.hpp"
#include "coverlab/rng.hpp"
#include "coverlab/symmetry.hpp"

namespace coverlab {

namespace {

struct Unknowns {
  std::vector<std::int64_t> slot;  // per site: unknown index, or -1 if absorbing
  std::vector<SiteIndex> sites;
};

Unknowns index_unknowns(const LatticeConfig& cfg, const SiteSet& absorbing) {
  Unknowns u;
  u.slot.assign(static_cast<std::size_t>(cfg.volume()), -1);
  for (SiteIndex s = 0; s < cfg.volume(); ++s) {
    if (absorbing.contains(s)) continue;
    if (!cfg.is_torus() && cfg.on_boundary(cfg.point(s))) continue;
    u.slot[static_cast<std::size_t>(s)] = static_cast<std::int64_t>(u.sites.size());
    u.sites.push_back(s);
  }
  if (static_cast<SiteIndex>(u.sites.size()) > ExactChainSolver::kMaxStates)
    throw ResourceError("exact solve with " + std::to_string(u.sites.size()) + " unknowns exceeds the state budget");
  return u;
}

// I - P on the unknowns; `boundary` receives sum over absorbing neighbours w of value(w)/(2d).
Eigen::SparseMatrix<double> generator(const LatticeConfig& cfg, const Unknowns& u, const std::vector<double>* value,
                                      Eigen::VectorXd* boundary) {
  const double w = 1.0 / (2.0 * cfg.dim());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(u.sites.size() * static_cast<std::size_t>(2 * cfg.dim() + 1));
  if (boundary) boundary->setZero(static_cast<Eigen::Index>(u.sites.size()));
  for (std::size_t i = 0; i < u.sites.size(); ++i) {
    t.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
    for (SiteIndex nb : cfg.neighbors(u.sites[i])) {
      const std::int64_t j = u.slot[static_cast<std::size_t>(nb)];
      if (j >= 0)
        t.emplace_back(static_cast<int>(i), static_cast<int>(j), -w);
      else if (boundary && value)
        (*boundary)(static_cast<Eigen::Index>(i)) += w * (*value)[static_cast<std::size_t>(nb)];
    }
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(u.sites.size()), static_cast<Eigen::Index>(u.sites.size()));
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

}  // namespace

ExactChainSolver::ExactChainSolver(const LatticeConfig& cfg) : cfg_(cfg) {
  if (cfg.volume() > kMaxStates) throw ResourceError("lattice too large for exact solves");
}

std::vector<double> ExactChainSolver::hit_probabilities(const SiteSet& target, const SiteSet& avoid, SolveInfo* info) const {
  for (SiteIndex s : target.sites())
    if (avoid.contains(s)) throw ConfigError("target and avoid sets intersect");
  if (target.empty()) throw ConfigError("hit_probabilities: empty target");
  const SiteSet absorbing = set_union(target, avoid);
  const Unknowns u = index_unknowns(cfg_, absorbing);
  std::vector<double> value(static_cast<std::size_t>(cfg_.volume()), 0.0);
  for (SiteIndex s : target.sites()) value[static_cast<std::size_t>(s)] = 1.0;
  Eigen::VectorXd b;
  const auto A = generator(cfg_, u, &value, &b);
  const Eigen::MatrixXd x = solve_sparse(A, b, true, info);
  for (std::size_t i = 0; i < u.sites.size(); ++i) value[static_cast<std::size_t>(u.sites[i])] = x(static_cast<Eigen::Index>(i), 0);
  return value;
}

std::vector<double> ExactChainSolver::expected_hit_times(const SiteSet& target, SolveInfo* info) const {
  if (target.empty()) throw ConfigError("expected_hit_times: empty target");
  if (!cfg_.is_torus()) throw ConfigError("expected hit times are computed on the torus");
  const Unknowns u = index_unknowns(cfg_, target);
  const auto A = generator(cfg_, u, nullptr, nullptr);
  const Eigen::VectorXd b = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(u.sites.size()));
  const Eigen::MatrixXd x = solve_sparse(A, b, true, info);
  std::vector<double> out(static_cast<std::size_t>(cfg_.volume()), 0.0);
  for (std::size_t i = 0; i < u.sites.size(); ++i) out[static_cast<std::size_t>(u.sites[i])] = x(static_cast<Eigen::Index>(i), 0);
  return out;
}

Eigen::MatrixXd ExactChainSolver::green_columns(const std::vector<SiteIndex>& sources, const SiteSet& absorbing,
                                                SolveInfo* info) const {
  const Unknowns u = index_unknowns(cfg_, absorbing);
  if (cfg_.is_torus() && absorbing.empty()) throw ConfigError("Green's function on the torus needs an absorbing set");
  const auto A = generator(cfg_, u, nullptr, nullptr);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(u.sites.size()), static_cast<Eigen::Index>(sources.size()));
  for (std::size_t c = 0; c < sources.size(); ++c) {
    const std::int64_t j = u.slot[static_cast<std::size_t>(sources[c])];
    if (j >= 0) B(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = 1.0;
  }
  const Eigen::MatrixXd X = solve_sparse(A, B, true, info);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg_.volume()), static_cast<Eigen::Index>(sources.size()));
  for (std::size_t i = 0; i < u.sites.size(); ++i) out.row(static_cast<Eigen::Index>(u.sites[i])) = X.row(static_cast<Eigen::Index>(i));
  return out;
}

double exact_hit_prob(const LatticeConfig& cfg, const Point& start, const SiteSet& target, const SiteSet& avoid) {
  const SiteIndex s = cfg.index(start);
  if (target.contains(s)) return 1.0;
  if (avoid.contains(s)) return 0.0;
  return ExactChainSolver(cfg).hit_probabilities(target, avoid)[static_cast<std::size_t>(s)];
}

namespace {

std::vector<int> default_box_sides(int d) {
  if (d == 3) return {24, 48, 96};
  const int lmax = static_cast<int>(std::floor(std::pow(1e6, 1.0 / d))) / 2 * 2;
  return {std::max(4, lmax / 4 / 2 * 2), std::max(6, lmax / 2 / 2 * 2), lmax};
}

// Fraction of walks from 0 on Z^d returning to 0 before leaving the Euclidean ball of radius R.
std::pair<std::uint64_t, std::uint64_t> return_frequency(int d, int R, std::uint64_t walks, std::uint64_t seed) {
  const std::int64_t R2 = static_cast<std::int64_t>(R) * R;
  constexpr std::uint64_t kChunk = 10'000;
  const std::size_t chunks = static_cast<std::size_t>((walks + kChunk - 1) / kChunk);
  std::vector<std::uint64_t> ret(chunks, 0), done(chunks, 0);
  parallel_for(chunks, [&](std::size_t c) {
    Rng rng(seed, stream_id("return-frequency", static_cast<std::uint64_t>(R) << 32 | c));
    const std::uint64_t m = std::min<std::uint64_t>(kChunk, walks - c * kChunk);
    std::array<int, kMaxDim> x{};
    for (std::uint64_t w = 0; w < m; ++w) {
      x.fill(0);
      std::int64_t r2 = 0;
      while (true) {
        const int k = rng.below(2 * d);
        int& c2 = x[static_cast<std::size_t>(k >> 1)];
        if (k & 1) {
          r2 += -2 * c2 + 1;
          --c2;
        } else {
          r2 += 2 * c2 + 1;
          ++c2;
        }
        if (r2 == 0) {
          ++ret[c];
          break;
        }
        if (r2 > R2) break;
      }
    }
    done[c] = m;
  });
  return {std::accumulate(ret.begin(), ret.end(), std::uint64_t{0}), std::accumulate(done.begin(), done.end(), std::uint64_t{0})};
}

}  // namespace

GreenConstants estimate_constants(int d, const ConstantsParams& params) {
  if (d < 3 || d > kMaxDim) throw ConfigError("constants need 3 <= d <= 8");
  GreenConstants gc;
  gc.d = d;
  gc.seed = params.seed;
  gc.box_sides = params.box_sides.empty() ? default_box_sides(d) : params.box_sides;
  if (gc.box_sides.size() < 3) throw ConfigError("G0 extrapolation needs three box sides");
  std::sort(gc.box_sides.begin(), gc.box_sides.end());

  Eigen::VectorXd largest_col;
  for (int L : gc.box_sides) {
    if (L % 2) throw ConfigError("box sides must be even so the box has a centre vertex");
    const LatticeConfig box(d, L, Geometry::box);
    Point c(d);
    for (int i = 0; i < d; ++i) c[i] = L / 2;
    const SiteIndex cs = box.index(c);
    const Eigen::MatrixXd col = ExactChainSolver(box).green_columns({cs}, SiteSet(box.volume(), {}));
    gc.box_G0.push_back(col(cs, 0));
    if (L == gc.box_sides.back()) largest_col = col.col(0);
  }

  // G_L(0) = G0 - a L^{-(d-2)} - b L^{-(d-1)}.
  const auto k = gc.box_sides.size();
  Eigen::Matrix3d M;
  Eigen::Vector3d y;
  for (std::size_t i = 0; i < 3; ++i) {
    const double L = gc.box_sides[k - 3 + i];
    M(static_cast<Eigen::Index>(i), 0) = 1.0;
    M(static_cast<Eigen::Index>(i), 1) = -std::pow(L, -(d - 2.0));
    M(static_cast<Eigen::Index>(i), 2) = -std::pow(L, -(d - 1.0));
    y(static_cast<Eigen::Index>(i)) = gc.box_G0[k - 3 + i];
  }
  const Eigen::Vector3d fit = M.fullPivLu().solve(y);
  const double L1 = gc.box_sides[k - 2], L2 = gc.box_sides[k - 1];
  const double e1 = std::pow(L1, -(d - 2.0)), e2 = std::pow(L2, -(d - 2.0));
  const double two_point = (gc.box_G0[k - 1] * e1 - gc.box_G0[k - 2] * e2) / (e1 - e2);
  gc.G0 = fit(0);
  gc.extrapolation_gap = std::abs(fit(0) - two_point);
  gc.G0_se = gc.extrapolation_gap;
  if (!(gc.extrapolation_gap <= params.max_extrapolation_gap))
    throw NumericalError("G0 extrapolation did not converge: gap " + std::to_string(gc.extrapolation_gap));
  gc.p_d = 1.0 - 1.0 / gc.G0;

  // c_d from the boxed Green's function shifted by the constant boundary correction.
  {
    const int L = gc.box_sides.back();
    const LatticeConfig box(d, L, Geometry::box);
    const double shift = gc.G0 - gc.box_G0.back();
    Point c(d);
    for (int i = 0; i < d; ++i) c[i] = L / 2;
    std::vector<double> xs, ys, lx, ly;
    for (SiteIndex s = 0; s < box.volume(); ++s) {
      const Point p = box.point(s);
      double r2 = 0;
      for (int i = 0; i < d; ++i) r2 += static_cast<double>(p[i] - c[i]) * (p[i] - c[i]);
      const double r = std::sqrt(r2);
      if (r < 5.0 || r > L / 4.0) continue;
      const double g = largest_col(s) + shift;
      xs.push_back(1.0 / r2);
      ys.push_back(g * std::pow(r, d - 2.0));
      lx.push_back(std::log(r));
      ly.push_back(std::log(g));
    }
    auto linfit = [](const std::vector<double>& x, const std::vector<double>& yv, double* se) {
      const double n = static_cast<double>(x.size());
      const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
      const double my = std::accumulate(yv.begin(), yv.end(), 0.0) / n;
      double sxx = 0, sxy = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (yv[i] - my);
      }
      const double b = sxy / sxx;
      const double a = my - b * mx;
      double rss = 0;
      for (std::size_t i = 0; i < x.size(); ++i) rss += std::pow(yv[i] - a - b * x[i], 2);
      if (se) *se = std::sqrt(rss / (n - 2.0) * (1.0 / n + mx * mx / sxx));
      return std::pair<double, double>{a, b};
    };
    if (xs.size() < 10) throw NumericalError("too few points for the Green's function fit");
    gc.c_d = linfit(xs, ys, &gc.c_d_se).first;
    gc.slope = linfit(lx, ly, nullptr).second;
    gc.C_d = gc.c_d / gc.G0;
  }

  // Independent route: return frequency before leaving B(0,R), extrapolated linearly in 1/R.
  gc.kill_radii = params.kill_radii;
  gc.mc_walks = params.mc_walks;
  if (gc.kill_radii.size() != 2) throw ConfigError("return-frequency extrapolation uses two kill radii");
  for (int R : gc.kill_radii) {
    const auto [ret, n] = return_frequency(d, R, params.mc_walks, params.seed);
    const double p = static_cast<double>(ret) / static_cast<double>(n);
    gc.p_mc_radius.push_back(p);
    gc.p_mc_radius_se.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(n)));
  }
  const double R1 = gc.kill_radii[0], R2 = gc.kill_radii[1];
  gc.p_mc = (R2 * gc.p_mc_radius[1] - R1 * gc.p_mc_radius[0]) / (R2 - R1);
  gc.p_mc_se = std::sqrt(std::pow(R2 * gc.p_mc_radius_se[1], 2) + std::pow(R1 * gc.p_mc_radius_se[0], 2)) / (R2 - R1);
  return gc;
}

nlohmann::json constants_to_json(const GreenConstants& c) {
  return nlohmann::json{
      {"d", c.d}, {"G0", c.G0}, {"p_d", c.p_d}, {"c_d", c.c_d}, {"C_d", c.C_d},
      {"metadata",
       {{"G0_se", c.G0_se}, {"c_d_se", c.c_d_se}, {"slope", c.slope}, {"p_mc", c.p_mc}, {"p_mc_se", c.p_mc_se},
        {"box_sides", c.box_sides}, {"box_G0", c.box_G0}, {"kill_radii", c.kill_radii},
        {"p_mc_radius", c.p_mc_radius}, {"p_mc_radius_se", c.p_mc_radius_se},
        {"extrapolation_gap", c.extrapolation_gap}, {"mc_walks", c.mc_walks}, {"seed", c.seed},
        {"method", "boxed Green's function (exact solves) extrapolated in L; c_d by fit on |x| in [5, L/4]; "
                   "p_d cross-check by return-frequency Monte Carlo extrapolated in 1/R"}}}};
}

GreenConstants constants_from_json(const nlohmann::json& j) {
  GreenConstants c;
  c.d = j.at("d").get<int>();
  c.G0 = j.at("G0").get<double>();
  c.p_d = j.at("p_d").get<double>();
  c.c_d = j.at("c_d").get<double>();
  c.C_d = j.at("C_d").get<double>();
  if (j.contains("metadata")) {
    const auto& m = j.at("metadata");
    c.G0_se = m.value("G0_se", 0.0);
    c.c_d_se = m.value("c_d_se", 0.0);
    c.slope = m.value("slope", 0.0);
    c.p_mc = m.value("p_mc", 0.0);
    c.p_mc_se = m.value("p_mc_se", 0.0);
    c.box_sides = m.value("box_sides", std::vector<int>{});
    c.box_G0 = m.value("box_G0", std::vector<double>{});
    c.kill_radii = m.value("kill_radii", std::vector<int>{});
    c.p_mc_radius = m.value("p_mc_radius", std::vector<double>{});
    c.p_mc_radius_se = m.value("p_mc_radius_se", std::vector<double>{});
    c.extrapolation_gap = m.value("extrapolation_gap", 0.0);
    c.mc_walks = m.value("mc_walks", std::uint64_t{0});
    c.seed = m.value("seed", std::uint64_t{0});
  }
  if (!(c.G0 > 1.0) || !(c.p_d > 0.0 && c.p_d < 1.0) || !(c.C_d > 0.0)) throw ConfigError("constants cache holds invalid values");
  return c;
}

GreenConstants load_or_estimate_constants(int d, const std::string& cache_path, const ConstantsParams& params) {
  namespace fs = std::filesystem;
  if (!cache_path.empty() && fs::exists(cache_path)) {
    std::ifstream in(cache_path);
    try {
      const auto j = nlohmann::json::parse(in);
      if (j.at("d").get<int>() == d) return constants_from_json(j);
    } catch (const nlohmann::json::exception&) {
      // Unreadable cache: recompute below.
    }
  }
  const GreenConstants c = estimate_constants(d, params);
  if (!cache_path.empty()) {
    const fs::path p(cache_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
      std::ofstream out(tmp);
      out << constants_to_json(c).dump(2) << '\n';
    }
    fs::rename(tmp, p);
  }
  return c;
}

namespace {

double chi2_sf(double x, double dof) {
  if (dof <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), x));
}

// Chi-square statistic of independence for rows (hits, samples); rows with < 5 expected in a
// cell are skipped.
std::pair<double, double> independence(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& rows) {
  std::uint64_t H = 0, N = 0;
  for (auto [h, n] : rows) {
    H += h;
    N += n;
  }
  if (N == 0) return {0.0, 0.0};
  const double p = static_cast<double>(H) / static_cast<double>(N);
  double chi = 0.0;
  int used = 0;
  for (auto [h, n] : rows) {
    const double eh = p * static_cast<double>(n), em = (1 - p) * static_cast<double>(n);
    if (eh < 5 || em < 5) continue;
    chi += std::pow(static_cast<double>(h) - eh, 2) / eh + std::pow(static_cast<double>(n - h) - em, 2) / em;
    ++used;
  }
  return {chi, std::max(0, used - 1)};
}

ExcursionHitReport excursion_hit_mc(const LatticeConfig& cfg, const std::vector<Point>& targets, double r, double R,
                                    std::uint64_t samples, std::uint64_t seed) {
  const AnnulusGeometry g(cfg, r, R);
  const OffsetClassifier cls(g);
  const int d = cfg.dim();
  const auto& entry = g.entry_shell();

  std::map<Point, int> class_id;
  std::vector<int> entry_class(entry.size());
  std::vector<Point> classes;
  for (std::size_t i = 0; i < entry.size(); ++i) {
    const Point c = canonical_offset(entry[i]);
    auto [it, fresh] = class_id.emplace(c, static_cast<int>(classes.size()));
    if (fresh) classes.push_back(c);
    entry_class[i] = it->second;
  }
  const std::size_t nstrata = classes.size() * 3;

  constexpr std::uint64_t kChunk = 5'000;
  const std::size_t chunks = static_cast<std::size_t>((samples + kChunk - 1) / kChunk);
  std::vector<std::vector<std::uint64_t>> cs(chunks), ch(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    Rng rng(seed, stream_id("excursion-hit", c));
    std::vector<std::uint64_t> sn(nstrata, 0), sh(nstrata, 0);
    const std::uint64_t m = std::min<std::uint64_t>(kChunk, samples - c * kChunk);
    const Point origin = cfg.origin();
    for (std::uint64_t w = 0; w < m; ++w) {
      const auto ai = static_cast<std::size_t>(rng.below(static_cast<int>(entry.size())));
      const Point& a = entry[ai];
      OffsetTracker tr(cls, origin, cfg.wrap(a));
      bool hit = std::find(targets.begin(), targets.end(), tr.offset()) != targets.end();
      while (true) {
        tr.move(rng.below(2 * d));
        const std::uint8_t f = tr.flags();
        if (!(f & kInOuterBall)) break;
        if (!hit)
          for (const Point& t : targets) hit = hit || tr.offset() == t;
      }
      const Point& y = tr.offset();
      double dot = 0, na = 0, ny = 0;
      for (int i = 0; i < d; ++i) {
        dot += static_cast<double>(a[i]) * y[i];
        na += static_cast<double>(a[i]) * a[i];
        ny += static_cast<double>(y[i]) * y[i];
      }
      const double cosv = dot / std::sqrt(na * ny);
      const int bin = cosv < -1.0 / 3.0 ? 0 : (cosv < 1.0 / 3.0 ? 1 : 2);
      const auto s = static_cast<std::size_t>(entry_class[ai] * 3 + bin);
      ++sn[s];
      sh[s] += hit ? 1 : 0;
    }
    cs[c] = std::move(sn);
    ch[c] = std::move(sh);
  });

  ExcursionHitReport rep;
  rep.r = r;
  rep.R = R;
  rep.targets = targets;
  rep.small_radius = r < 5.0;
  for (std::size_t s = 0; s < nstrata; ++s) {
    ExcursionHitStratum st;
    st.entry_class = classes[s / 3];
    st.exit_bin = static_cast<int>(s % 3);
    for (std::size_t c = 0; c < chunks; ++c) {
      st.samples += cs[c][s];
      st.hits += ch[c][s];
    }
    rep.samples += st.samples;
    rep.hits += st.hits;
    rep.strata.push_back(st);
  }
  rep.estimate = rep.samples ? static_cast<double>(rep.hits) / static_cast<double>(rep.samples) : 0.0;
  rep.stderr_ = rep.samples ? std::sqrt(rep.estimate * (1 - rep.estimate) / static_cast<double>(rep.samples)) : 0.0;

  std::vector<std::pair<std::uint64_t, std::uint64_t>> rows;
  for (const auto& st : rep.strata) rows.emplace_back(st.hits, st.samples);
  auto [chi, dof] = independence(rows);
  rep.homogeneity_chi2 = chi;
  rep.homogeneity_dof = dof;
  rep.homogeneity_p = chi2_sf(chi, dof);

  double chi_w = 0, dof_w = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> per_class;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> r3;
    std::uint64_t h = 0, n = 0;
    for (int b = 0; b < 3; ++b) {
      const auto& st = rep.strata[c * 3 + static_cast<std::size_t>(b)];
      r3.emplace_back(st.hits, st.samples);
      h += st.hits;
      n += st.samples;
    }
    auto [x, df] = independence(r3);
    chi_w += x;
    dof_w += df;
    per_class.emplace_back(h, n);
  }
  rep.exit_homogeneity_p = chi2_sf(chi_w, dof_w);
  auto [xe, de] = independence(per_class);
  rep.entry_homogeneity_p = chi2_sf(xe, de);

  double lo = 0, hi = 0;
  bool any = false;
  for (const auto& st : rep.strata) {
    if (st.hits < 50) continue;
    const double p = static_cast<double>(st.hits) / static_cast<double>(st.samples);
    lo = any ? std::min(lo, p) : p;
    hi = any ? std::max(hi, p) : p;
    any = true;
  }
  rep.max_min_ratio = any ? hi / lo : 0.0;
  return rep;
}

}  // namespace

ExcursionHitReport conditional_hit_prob(const LatticeConfig& cfg, double r, double R, std::uint64_t samples,
                                        std::uint64_t seed) {
  return excursion_hit_mc(cfg, {cfg.origin()}, r, R, samples, seed);
}

ExcursionHitReport two_point_hit_prob(const LatticeConfig& cfg, const Point& v, double r, double R,
                                      std::uint64_t samples, std::uint64_t seed) {
  const Point w = cfg.displacement(cfg.origin(), cfg.wrap(v));
  if (w == cfg.origin()) return excursion_hit_mc(cfg, {cfg.origin()}, r, R, samples, seed);
  return excursion_hit_mc(cfg, {cfg.origin(), w}, r, R, samples, seed);
}

}  // namespace coverlab
