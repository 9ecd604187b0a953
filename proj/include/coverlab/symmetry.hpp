#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "coverlab/lattice.hpp"

namespace coverlab {

// Element of the hyperoctahedral group: (g v)_i = sign_i * v_{perm_i}.
struct SignedPermutation {
  std::array<std::int8_t, kMaxDim> perm{};
  std::array<std::int8_t, kMaxDim> sign{};
  int d = 0;

  Point apply(const Point& v, int torus_side) const;
  SignedPermutation inverse() const;
  // (a.then(b)) v = b(a(v)).
  SignedPermutation then(const SignedPermutation& b) const;
};

// Some g with g(from) == to, if the two offsets lie in the same orbit.
bool find_mapping(const Point& from, const Point& to, SignedPermutation* g);

// Orbit representative of an offset under coordinate permutations and reflections:
// absolute values sorted in decreasing order.
Point canonical_offset(const Point& v);

// All group elements g with g(u) == canonical_offset(u). `torus_side` (0 for Z^d) is used to
// re-wrap reflected coordinates into (-n/2, n/2].
std::vector<SignedPermutation> canonicalizers(const Point& u);

// Orbit representative of the pair (u, v) under the diagonal action.
std::pair<Point, Point> canonical_pair(const Point& u, const Point& v, int torus_side);

// Packs a point with |coords| < 2^15 into a 128-bit key.
struct PackedKey {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;
  bool operator==(const PackedKey&) const = default;
};
struct PackedKeyHash {
  std::size_t operator()(const PackedKey& k) const { return static_cast<std::size_t>(k.hi * 0x9e3779b97f4a7c15ULL ^ k.lo); }
};
PackedKey pack(const Point& p);

struct PairKey {
  PackedKey a;
  PackedKey b;
  bool operator==(const PairKey&) const = default;
};
struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const { return PackedKeyHash{}(k.a) * 31 ^ PackedKeyHash{}(k.b); }
};

}  // namespace coverlab
