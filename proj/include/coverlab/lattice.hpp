#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "coverlab/errors.hpp"

namespace coverlab {

inline constexpr int kMaxDim = 8;
using SiteIndex = std::int64_t;

// A lattice point with up to kMaxDim integer coordinates.
class Point {
 public:
  Point() = default;
  explicit Point(int d);
  Point(std::initializer_list<int> coords);

  int dim() const { return d_; }
  int& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }
  int operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }

  bool operator==(const Point&) const = default;
  bool operator<(const Point& o) const;

  std::string str() const;

 private:
  std::array<int, kMaxDim> c_{};
  int d_ = 0;
};

enum class Geometry { torus, box };

// Z_n^d (torus) or [0,n]^d ∩ Z^d (box, boundary = faces). Immutable.
class LatticeConfig {
 public:
  LatticeConfig(int d, int n, Geometry geometry = Geometry::torus);

  int dim() const { return d_; }
  int side() const { return n_; }
  Geometry geometry() const { return geometry_; }
  bool is_torus() const { return geometry_ == Geometry::torus; }
  // Number of coordinate values per axis: n on the torus, n+1 in the box.
  int extent() const { return extent_; }
  SiteIndex volume() const { return volume_; }
  SiteIndex stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }

  bool valid(const Point& p) const;
  SiteIndex index(const Point& p) const;
  Point point(SiteIndex site) const;
  Point origin() const { return Point(d_); }

  // Reduce every coordinate modulo n (torus only; identity on the box).
  Point wrap(Point p) const;
  // Per-axis displacement from `from` to `to`; on the torus each entry lies in (-n/2, n/2].
  Point displacement(const Point& from, const Point& to) const;
  Point translate(const Point& p, const Point& v) const;

  bool on_boundary(const Point& p) const;  // box faces; always false on the torus
  // Nearest neighbours inside the lattice (2d on the torus, fewer on box faces).
  std::vector<SiteIndex> neighbors(SiteIndex site) const;

  bool operator==(const LatticeConfig&) const = default;

 private:
  int d_;
  int n_;
  Geometry geometry_;
  int extent_;
  SiteIndex volume_;
  std::array<SiteIndex, kMaxDim> strides_{};
};

// Squared (wrapped) Euclidean distance, exact in integers.
std::int64_t dist2(const Point& a, const Point& b, const LatticeConfig& cfg);
double torus_dist(const Point& a, const Point& b, const LatticeConfig& cfg);
// Largest integer k with k <= r^2 (tolerant to rounding of r^2 for integral r^2).
std::int64_t radius_sq_floor(double radius);

// Immutable set of sites with O(1) membership (dense bitmask) and a sorted member list.
class SiteSet {
 public:
  SiteSet() = default;
  SiteSet(SiteIndex volume, std::vector<SiteIndex> sites);
  static SiteSet all(SiteIndex volume);

  bool contains(SiteIndex s) const {
    return s >= 0 && s < volume_ && ((bits_[static_cast<std::size_t>(s >> 6)] >> (s & 63)) & 1u);
  }
  std::size_t size() const { return sites_.size(); }
  bool empty() const { return sites_.empty(); }
  SiteIndex volume() const { return volume_; }
  const std::vector<SiteIndex>& sites() const { return sites_; }

  bool operator==(const SiteSet& o) const { return volume_ == o.volume_ && sites_ == o.sites_; }

 private:
  SiteIndex volume_ = 0;
  std::vector<std::uint64_t> bits_;
  std::vector<SiteIndex> sites_;
};

// Closed Euclidean ball {y : dist(center, y) <= radius}. On the torus the ball must not
// self-wrap (2 floor(radius) < n), otherwise GeometryError.
SiteSet ball(const Point& center, double radius, const LatticeConfig& cfg);
// {y not in A : y adjacent to some x in A}.
SiteSet outer_boundary(const SiteSet& a, const LatticeConfig& cfg);
// {x in A : x adjacent to some y not in A}; the first points of A hit from outside.
SiteSet inner_boundary(const SiteSet& a, const LatticeConfig& cfg);
SiteSet set_union(const SiteSet& a, const SiteSet& b);
SiteSet set_difference(const SiteSet& a, const SiteSet& b);
SiteSet translate(const SiteSet& a, const Point& v, const LatticeConfig& cfg);

// Annulus B(center,R) \ B(center,r).
struct AnnulusSpec {
  Point center;
  double r = 0.0;
  double R = 0.0;
};

struct AnnulusCheck {
  bool validated = true;  // inside the regime r >= 3, R >= 10 r, R <= n/4
  std::vector<std::string> warnings;
};

// Throws GeometryError when the annulus cannot be built; otherwise reports whether the
// radii lie inside the regime where excursion counts concentrate and hit probabilities homogenize.
AnnulusCheck check_annulus(const AnnulusSpec& a, const LatticeConfig& cfg);

}  // namespace coverlab
