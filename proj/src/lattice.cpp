#include "coverlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace coverlab {

Point::Point(int d) : d_(d) {
  if (d < 1 || d > kMaxDim) throw ConfigError("point dimension out of range: " + std::to_string(d));
}

Point::Point(std::initializer_list<int> coords) : d_(static_cast<int>(coords.size())) {
  if (d_ < 1 || d_ > kMaxDim) throw ConfigError("point dimension out of range");
  std::copy(coords.begin(), coords.end(), c_.begin());
}

bool Point::operator<(const Point& o) const {
  if (d_ != o.d_) return d_ < o.d_;
  return std::lexicographical_compare(c_.begin(), c_.begin() + d_, o.c_.begin(), o.c_.begin() + d_);
}

std::string Point::str() const {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < d_; ++i) os << (i ? "," : "") << (*this)[i];
  os << ')';
  return os.str();
}

LatticeConfig::LatticeConfig(int d, int n, Geometry geometry)
    : d_(d), n_(n), geometry_(geometry), extent_(geometry == Geometry::torus ? n : n + 1) {
  // The box is also used for low-dimensional sanity checks of the field code.
  const int min_dim = geometry == Geometry::torus ? 3 : 1;
  if (d < min_dim || d > kMaxDim) throw ConfigError("lattice dimension must be in [" + std::to_string(min_dim) + ", 8], got " + std::to_string(d));
  if (n < 4) throw ConfigError("lattice side must be >= 4, got " + std::to_string(n));
  SiteIndex v = 1;
  for (int i = 0; i < d; ++i) {
    strides_[static_cast<std::size_t>(i)] = v;
    if (v > std::numeric_limits<SiteIndex>::max() / extent_) throw ConfigError("lattice volume overflows");
    v *= extent_;
  }
  volume_ = v;
}

bool LatticeConfig::valid(const Point& p) const {
  if (p.dim() != d_) return false;
  for (int i = 0; i < d_; ++i)
    if (p[i] < 0 || p[i] >= extent_) return false;
  return true;
}

SiteIndex LatticeConfig::index(const Point& p) const {
  if (!valid(p)) throw ConfigError("point " + p.str() + " is not a valid lattice point");
  SiteIndex s = 0;
  for (int i = 0; i < d_; ++i) s += strides_[static_cast<std::size_t>(i)] * p[i];
  return s;
}

Point LatticeConfig::point(SiteIndex site) const {
  if (site < 0 || site >= volume_) throw ConfigError("site index out of range");
  Point p(d_);
  for (int i = 0; i < d_; ++i) {
    p[i] = static_cast<int>(site % extent_);
    site /= extent_;
  }
  return p;
}

Point LatticeConfig::wrap(Point p) const {
  if (p.dim() != d_) throw ConfigError("dimension mismatch");
  if (!is_torus()) return p;
  for (int i = 0; i < d_; ++i) p[i] = ((p[i] % n_) + n_) % n_;
  return p;
}

Point LatticeConfig::displacement(const Point& from, const Point& to) const {
  if (from.dim() != d_ || to.dim() != d_) throw ConfigError("dimension mismatch");
  Point v(d_);
  for (int i = 0; i < d_; ++i) {
    int dx = to[i] - from[i];
    if (is_torus()) {
      dx = ((dx % n_) + n_) % n_;
      if (dx > n_ / 2) dx -= n_;
    }
    v[i] = dx;
  }
  return v;
}

Point LatticeConfig::translate(const Point& p, const Point& v) const {
  if (p.dim() != d_ || v.dim() != d_) throw ConfigError("dimension mismatch");
  Point q(d_);
  for (int i = 0; i < d_; ++i) q[i] = p[i] + v[i];
  return wrap(q);
}

bool LatticeConfig::on_boundary(const Point& p) const {
  if (is_torus()) return false;
  for (int i = 0; i < d_; ++i)
    if (p[i] == 0 || p[i] == n_) return true;
  return false;
}

std::vector<SiteIndex> LatticeConfig::neighbors(SiteIndex site) const {
  const Point p = point(site);
  std::vector<SiteIndex> out;
  out.reserve(static_cast<std::size_t>(2 * d_));
  for (int i = 0; i < d_; ++i) {
    const SiteIndex st = strides_[static_cast<std::size_t>(i)];
    if (is_torus()) {
      out.push_back(p[i] == n_ - 1 ? site - st * (n_ - 1) : site + st);
      out.push_back(p[i] == 0 ? site + st * (n_ - 1) : site - st);
    } else {
      if (p[i] < n_) out.push_back(site + st);
      if (p[i] > 0) out.push_back(site - st);
    }
  }
  return out;
}

std::int64_t dist2(const Point& a, const Point& b, const LatticeConfig& cfg) {
  if (a.dim() != cfg.dim() || b.dim() != cfg.dim()) throw ConfigError("dimension mismatch in distance");
  std::int64_t s = 0;
  for (int i = 0; i < cfg.dim(); ++i) {
    std::int64_t dx = std::abs(a[i] - b[i]);
    if (cfg.is_torus()) dx = std::min<std::int64_t>(dx, cfg.side() - dx);
    s += dx * dx;
  }
  return s;
}

double torus_dist(const Point& a, const Point& b, const LatticeConfig& cfg) {
  return std::sqrt(static_cast<double>(dist2(a, b, cfg)));
}

std::int64_t radius_sq_floor(double radius) {
  return static_cast<std::int64_t>(std::floor(radius * radius + 1e-9));
}

SiteSet::SiteSet(SiteIndex volume, std::vector<SiteIndex> sites)
    : volume_(volume), bits_(static_cast<std::size_t>((volume + 63) / 64), 0), sites_(std::move(sites)) {
  std::sort(sites_.begin(), sites_.end());
  sites_.erase(std::unique(sites_.begin(), sites_.end()), sites_.end());
  for (SiteIndex s : sites_) {
    if (s < 0 || s >= volume_) throw ConfigError("site outside lattice");
    bits_[static_cast<std::size_t>(s >> 6)] |= std::uint64_t{1} << (s & 63);
  }
}

SiteSet SiteSet::all(SiteIndex volume) {
  std::vector<SiteIndex> s(static_cast<std::size_t>(volume));
  for (SiteIndex i = 0; i < volume; ++i) s[static_cast<std::size_t>(i)] = i;
  return SiteSet(volume, std::move(s));
}

SiteSet ball(const Point& center, double radius, const LatticeConfig& cfg) {
  if (!cfg.valid(center)) throw ConfigError("ball centre " + center.str() + " not in lattice");
  if (!(radius >= 0.0)) throw GeometryError("ball radius must be >= 0");
  const int k = static_cast<int>(std::floor(radius + 1e-12));
  if (cfg.is_torus() && 2 * k >= cfg.side())
    throw GeometryError("ball of radius " + std::to_string(radius) + " self-wraps on Z_" + std::to_string(cfg.side()));
  const std::int64_t r2 = radius_sq_floor(radius);
  const int d = cfg.dim();
  std::vector<SiteIndex> out;
  Point off(d);
  for (int i = 0; i < d; ++i) off[i] = -k;
  while (true) {
    std::int64_t s = 0;
    for (int i = 0; i < d; ++i) s += static_cast<std::int64_t>(off[i]) * off[i];
    if (s <= r2) {
      Point q(d);
      bool inside = true;
      for (int i = 0; i < d; ++i) {
        q[i] = center[i] + off[i];
        if (!cfg.is_torus() && (q[i] < 0 || q[i] > cfg.side())) inside = false;
      }
      if (inside) out.push_back(cfg.index(cfg.wrap(q)));
    }
    int i = 0;
    while (i < d && off[i] == k) off[i++] = -k;
    if (i == d) break;
    ++off[i];
  }
  return SiteSet(cfg.volume(), std::move(out));
}

SiteSet outer_boundary(const SiteSet& a, const LatticeConfig& cfg) {
  std::vector<SiteIndex> out;
  for (SiteIndex s : a.sites())
    for (SiteIndex nb : cfg.neighbors(s))
      if (!a.contains(nb)) out.push_back(nb);
  return SiteSet(cfg.volume(), std::move(out));
}

SiteSet inner_boundary(const SiteSet& a, const LatticeConfig& cfg) {
  std::vector<SiteIndex> out;
  for (SiteIndex s : a.sites()) {
    for (SiteIndex nb : cfg.neighbors(s)) {
      if (!a.contains(nb)) {
        out.push_back(s);
        break;
      }
    }
  }
  return SiteSet(cfg.volume(), std::move(out));
}

SiteSet set_union(const SiteSet& a, const SiteSet& b) {
  std::vector<SiteIndex> s = a.sites();
  s.insert(s.end(), b.sites().begin(), b.sites().end());
  return SiteSet(std::max(a.volume(), b.volume()), std::move(s));
}

SiteSet set_difference(const SiteSet& a, const SiteSet& b) {
  std::vector<SiteIndex> s;
  for (SiteIndex x : a.sites())
    if (!b.contains(x)) s.push_back(x);
  return SiteSet(a.volume(), std::move(s));
}

SiteSet translate(const SiteSet& a, const Point& v, const LatticeConfig& cfg) {
  std::vector<SiteIndex> s;
  s.reserve(a.size());
  for (SiteIndex x : a.sites()) s.push_back(cfg.index(cfg.translate(cfg.point(x), v)));
  return SiteSet(a.volume(), std::move(s));
}

AnnulusCheck check_annulus(const AnnulusSpec& a, const LatticeConfig& cfg) {
  if (!cfg.is_torus()) throw GeometryError("annuli are defined on the torus");
  if (!cfg.valid(a.center)) throw ConfigError("annulus centre not in lattice");
  if (!(a.r > 0.0) || !(a.R > a.r)) throw GeometryError("annulus needs 0 < r < R");
  const int k = static_cast<int>(std::floor(a.R + 1e-12));
  if (2 * k >= cfg.side()) throw GeometryError("outer ball of radius " + std::to_string(a.R) + " self-wraps on Z_" + std::to_string(cfg.side()));
  AnnulusCheck c;
  if (a.r < 3.0) c.warnings.push_back("r < 3: outside the r >= 3 regime");
  if (a.R < 10.0 * a.r) c.warnings.push_back("R < 10 r: outside the R >= 10 r regime where excursion counts concentrate");
  if (a.R > cfg.side() / 4.0) c.warnings.push_back("R > n/4: outside the R <= n/4 regime");
  c.validated = c.warnings.empty();
  return c;
}

}  // namespace coverlab
