#pragma once

#include <array>
#include <cstdlib>
#include <utility>
#include <vector>

#include "common.hpp"

namespace branchlab {

using Coord = std::array<int, 3>;

inline int manhattan(const Coord& a, const Coord& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

// Cubic lattice with sites -B <= x^i < B, indexed lexicographically in (x1,x2,x3).
struct Lattice {
  int B = 1;
  std::vector<Coord> sites;
  std::vector<std::pair<int, int>> neighbor_pairs;

  int edge() const { return 2 * B; }
  int size() const { return static_cast<int>(sites.size()); }

  bool contains(const Coord& c) const {
    for (int v : c)
      if (v < -B || v >= B) return false;
    return true;
  }

  int index(const Coord& c) const {
    if (!contains(c)) throw Error(ErrorKind::lattice_mismatch, "coordinate outside lattice");
    const int e = edge();
    return ((c[0] + B) * e + (c[1] + B)) * e + (c[2] + B);
  }

  const Coord& coord(int i) const { return sites.at(static_cast<std::size_t>(i)); }

  std::vector<int> neighbors(int i) const {
    std::vector<int> out;
    const Coord c = coord(i);
    for (int ax = 0; ax < 3; ++ax)
      for (int d : {-1, 1}) {
        Coord n = c;
        n[ax] += d;
        if (contains(n)) out.push_back(index(n));
      }
    return out;
  }

  bool adjacent(const Coord& a, const Coord& b) const { return manhattan(a, b) == 1; }

  static int parity(const Coord& c) { return ((c[0] + c[1] + c[2]) % 2 + 2) % 2; }
};

inline Lattice build_lattice(int B) {
  if (B < 1) throw Error(ErrorKind::invalid_argument, "lattice half-width B must be >= 1");
  Lattice L;
  L.B = B;
  const int e = 2 * B;
  L.sites.reserve(static_cast<std::size_t>(e) * e * e);
  for (int x = -B; x < B; ++x)
    for (int y = -B; y < B; ++y)
      for (int z = -B; z < B; ++z) L.sites.push_back({x, y, z});
  for (int i = 0; i < L.size(); ++i) {
    const Coord c = L.sites[i];
    for (int ax = 0; ax < 3; ++ax) {
      Coord n = c;
      n[ax] += 1;
      if (L.contains(n)) L.neighbor_pairs.emplace_back(i, L.index(n));
    }
  }
  return L;
}

}  // namespace branchlab
