#pragma once

// Test-only pruned-graph construction by enumerating every full valuation of
// the alphabet, plus distance/cycle facts via Floyd-Warshall.

#include <map>
#include <set>
#include <utility>
#include <vector>

#include "rtlplan/automaton.hpp"

namespace oracle {

using EdgeSet = std::map<std::pair<int, int>, std::set<std::uint64_t>>;

inline EdgeSet brute_force_edges(const rtlplan::BuchiAutomaton& a, rtlplan::Valuation sigma_u,
                                 const rtlplan::Alphabet& alphabet) {
  const std::uint64_t cmask = alphabet.mask(rtlplan::AtomKind::controllable);
  const std::uint64_t umask = alphabet.mask(rtlplan::AtomKind::uncontrollable);
  EdgeSet out;
  const std::uint64_t total = std::uint64_t{1} << alphabet.size();
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    if ((bits & umask) != (sigma_u.bits & umask)) continue;
    if (__builtin_popcountll(bits & cmask) > 1) continue;
    for (int s = 0; s < a.num_states(); ++s)
      for (const auto& t : a.out[static_cast<std::size_t>(s)])
        if (rtlplan::holds(t.guard, {bits})) out[{s, t.target}].insert(bits & cmask);
  }
  return out;
}

struct Distances {
  std::vector<std::vector<int>> d;  // -1 = unreachable; d[i][i] = 0

  explicit Distances(const std::vector<std::vector<int>>& adj) {
    const std::size_t n = adj.size();
    const int inf = 1 << 28;
    std::vector<std::vector<int>> m(n, std::vector<int>(n, inf));
    for (std::size_t i = 0; i < n; ++i) {
      m[i][i] = 0;
      for (int j : adj[i]) m[i][static_cast<std::size_t>(j)] = std::min(m[i][static_cast<std::size_t>(j)], 1);
    }
    // cycle length through i: shortest i -> j plus edge j -> i
    cycle.assign(n, inf);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i][j] = std::min(m[i][j], m[i][k] + m[k][j]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (int x : adj[j])
          if (static_cast<std::size_t>(x) == i) cycle[i] = std::min(cycle[i], m[i][j] + 1);
    d.assign(n, std::vector<int>(n, -1));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (m[i][j] < inf) d[i][j] = m[i][j];
    for (auto& c : cycle)
      if (c >= inf) c = -1;
  }

  std::vector<int> cycle;  // shortest cycle length through each vertex, -1 if none
};

}  // namespace oracle
