#pragma once

// Second, independently coded trace scans for the monitor tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "rtlplan/automaton.hpp"
#include "rtlplan/sim.hpp"

namespace oracle {

struct ReachScan {
  bool satisfied;
  double first_time;
  double margin;
};

// Window selected by binary search on the (sorted) time column; distances
// compared squared.
inline ReachScan reach_scan(const rtlplan::Trace& tr, const rtlplan::Vec3& target, double eps, double a, double b) {
  const auto& r = tr.records;
  auto lo = std::lower_bound(r.begin(), r.end(), a - 1e-12, [](const rtlplan::TraceRecord& x, double t) { return x.t < t; });
  auto hi = std::upper_bound(r.begin(), r.end(), b + 1e-12, [](double t, const rtlplan::TraceRecord& x) { return t < x.t; });
  ReachScan out{false, NAN, 0};
  double best = INFINITY;
  for (auto it = hi; it != lo;) {
    --it;
    double d2 = (it->x - target).squaredNorm();
    best = std::min(best, d2);
    if (std::sqrt(d2) <= eps) {
      out.satisfied = true;
      out.first_time = it->t;
    }
  }
  out.margin = eps - std::sqrt(best);
  return out;
}

// Does some single run of the automaton survive the whole word? Memoized
// depth-first search over (position, state).
inline long first_dead_position(const rtlplan::BuchiAutomaton& a, const std::vector<rtlplan::Valuation>& word) {
  const std::size_t n = word.size();
  const std::size_t ns = static_cast<std::size_t>(a.num_states());
  // alive[k][q]: a run can read word[k..] from q
  std::vector<std::vector<char>> alive(n + 1, std::vector<char>(ns, 0));
  for (std::size_t q = 0; q < ns; ++q) alive[n][q] = 1;
  for (std::size_t k = n; k-- > 0;)
    for (std::size_t q = 0; q < ns; ++q)
      for (const auto& t : a.out[q])
        if (rtlplan::holds(t.guard, word[k]) && alive[k + 1][static_cast<std::size_t>(t.target)]) {
          alive[k][q] = 1;
          break;
        }
  if (alive[0][static_cast<std::size_t>(a.initial)]) return -1;
  // longest readable prefix
  std::vector<char> cur(ns, 0);
  cur[static_cast<std::size_t>(a.initial)] = 1;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<char> nxt(ns, 0);
    bool any = false;
    for (std::size_t q = 0; q < ns; ++q)
      if (cur[q])
        for (const auto& t : a.out[q])
          if (rtlplan::holds(t.guard, word[k])) nxt[static_cast<std::size_t>(t.target)] = any = true;
    if (!any) return static_cast<long>(k);
    cur = nxt;
  }
  return -1;
}

}  // namespace oracle
