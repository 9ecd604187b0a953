#include "coverlab/symmetry.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

namespace coverlab {

Point SignedPermutation::apply(const Point& v, int torus_side) const {
  Point out(d);
  for (int i = 0; i < d; ++i) {
    int c = sign[static_cast<std::size_t>(i)] * v[perm[static_cast<std::size_t>(i)]];
    if (torus_side > 0 && 2 * c == -torus_side) c = -c;
    out[i] = c;
  }
  return out;
}

SignedPermutation SignedPermutation::inverse() const {
  SignedPermutation h;
  h.d = d;
  for (int i = 0; i < d; ++i) {
    const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
    h.perm[src] = static_cast<std::int8_t>(i);
    h.sign[src] = sign[static_cast<std::size_t>(i)];
  }
  return h;
}

SignedPermutation SignedPermutation::then(const SignedPermutation& b) const {
  // (b(a v))_i = b.sign_i * (a v)_{b.perm_i} = b.sign_i * a.sign_{b.perm_i} * v_{a.perm_{b.perm_i}}
  SignedPermutation c;
  c.d = d;
  for (int i = 0; i < d; ++i) {
    const auto j = static_cast<std::size_t>(b.perm[static_cast<std::size_t>(i)]);
    c.perm[static_cast<std::size_t>(i)] = perm[j];
    c.sign[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(b.sign[static_cast<std::size_t>(i)] * sign[j]);
  }
  return c;
}

bool find_mapping(const Point& from, const Point& to, SignedPermutation* g) {
  if (!(canonical_offset(from) == canonical_offset(to))) return false;
  const SignedPermutation a = canonicalizers(from).front();
  const SignedPermutation b = canonicalizers(to).front();
  if (g) *g = a.then(b.inverse());
  return true;
}

Point canonical_offset(const Point& v) {
  Point out(v.dim());
  std::vector<int> a(static_cast<std::size_t>(v.dim()));
  for (int i = 0; i < v.dim(); ++i) a[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(a.begin(), a.end(), std::greater<>());
  for (int i = 0; i < v.dim(); ++i) out[i] = a[static_cast<std::size_t>(i)];
  return out;
}

std::vector<SignedPermutation> canonicalizers(const Point& u) {
  const int d = u.dim();
  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(u[a]) > std::abs(u[b]); });

  // Groups of equal absolute value may be permuted freely among themselves.
  std::vector<std::pair<int, int>> groups;
  for (int i = 0; i < d;) {
    int j = i;
    while (j < d && std::abs(u[order[static_cast<std::size_t>(j)]]) == std::abs(u[order[static_cast<std::size_t>(i)]])) ++j;
    groups.emplace_back(i, j);
    i = j;
  }

  std::vector<std::vector<int>> perms{order};
  for (auto [b, e] : groups) {
    std::vector<std::vector<int>> next;
    for (const auto& p : perms) {
      std::vector<int> q = p;
      std::sort(q.begin() + b, q.begin() + e);
      do next.push_back(q);
      while (std::next_permutation(q.begin() + b, q.begin() + e));
    }
    perms = std::move(next);
  }

  std::vector<SignedPermutation> out;
  for (const auto& p : perms) {
    std::vector<int> zeros;
    SignedPermutation g;
    g.d = d;
    for (int i = 0; i < d; ++i) {
      const int src = p[static_cast<std::size_t>(i)];
      g.perm[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(src);
      g.sign[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(u[src] < 0 ? -1 : 1);
      if (u[src] == 0) zeros.push_back(i);
    }
    const std::size_t combos = std::size_t{1} << zeros.size();
    for (std::size_t mask = 0; mask < combos; ++mask) {
      SignedPermutation h = g;
      for (std::size_t z = 0; z < zeros.size(); ++z)
        if (mask >> z & 1u) h.sign[static_cast<std::size_t>(zeros[z])] = -1;
      out.push_back(h);
    }
  }
  return out;
}

std::pair<Point, Point> canonical_pair(const Point& u, const Point& v, int torus_side) {
  const Point cu = canonical_offset(u);
  bool first = true;
  Point best;
  for (const auto& g : canonicalizers(u)) {
    Point gv = g.apply(v, torus_side);
    if (first || gv < best) {
      best = gv;
      first = false;
    }
  }
  return {cu, best};
}

PackedKey pack(const Point& p) {
  PackedKey k;
  for (int i = 0; i < p.dim(); ++i) {
    const auto c = static_cast<std::uint64_t>(static_cast<std::uint16_t>(static_cast<std::int16_t>(p[i])));
    if (i < 4)
      k.lo |= c << (16 * i);
    else
      k.hi |= c << (16 * (i - 4));
  }
  k.hi |= static_cast<std::uint64_t>(p.dim()) << 60;
  return k;
}

}  // namespace coverlab
