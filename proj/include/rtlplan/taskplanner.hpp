#pragma once

// Discrete task planner: graph pruning under the current uncontrollable
// valuation, shortest accepting paths and the online step that picks the
// behavior p_m to execute.

#include <algorithm>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "automaton.hpp"
#include "formula.hpp"
#include "graph.hpp"

namespace rtlplan {

class NoEnabledTransition : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoAcceptingPath : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Controllable candidates in preference order: all-false, then one-hot by
/// declaration index.
inline std::vector<Valuation> controllable_candidates(const Alphabet& alphabet) {
  std::vector<Valuation> c{Valuation{}};
  for (int i : alphabet.controllable()) c.push_back(one_hot(i));
  return c;
}

/// First candidate (in preference order) that satisfies the guard under sigma_u.
inline std::optional<Valuation> first_witness(const Formula& guard, Valuation sigma_u, const Alphabet& alphabet) {
  Valuation u = sigma_u.restricted(alphabet.mask(AtomKind::uncontrollable));
  for (Valuation c : controllable_candidates(alphabet))
    if (holds(guard, c | u)) return c;
  return std::nullopt;
}

/// The atom that is true in a one-hot valuation; nullopt for all-false.
inline std::optional<int> behavior_of(Valuation c) {
  if (c.bits == 0) return std::nullopt;
  return __builtin_ctzll(c.bits);
}

/// Behavior a guard asks for under sigma_u. nullopt when the all-false
/// valuation suffices or when nothing satisfies the guard.
inline std::optional<int> extract_behavior(const Formula& guard, Valuation sigma_u, const Alphabet& alphabet) {
  auto w = first_witness(guard, sigma_u, alphabet);
  return w ? behavior_of(*w) : std::nullopt;
}

struct GraphEdge {
  int from;
  int to;
  std::vector<Valuation> witnesses;  // preference order
};

struct PrunedGraph {
  Valuation sigma_u;
  std::vector<GraphEdge> edges;          // sorted by (from, to)
  std::vector<std::vector<int>> out;     // edge indices per source state
  std::vector<char> accepting;
  std::vector<char> accepting_cycle;     // accepting and on a cycle
  std::vector<char> viable;              // can reach an accepting cycle

  int num_states() const { return static_cast<int>(out.size()); }

  const GraphEdge* find(int from, int to) const {
    for (int e : out[static_cast<std::size_t>(from)])
      if (edges[static_cast<std::size_t>(e)].to == to) return &edges[static_cast<std::size_t>(e)];
    return nullptr;
  }

  Adjacency adjacency() const {
    Adjacency adj(out.size());
    for (const auto& e : edges) adj[static_cast<std::size_t>(e.from)].push_back(e.to);
    return adj;
  }
};

/// Keeps the transitions some one-hot-or-zero controllable valuation can take
/// together with sigma_u. The automaton's propositions must follow `alphabet`.
inline PrunedGraph build_graph(const BuchiAutomaton& a, Valuation sigma_u, const Alphabet& alphabet) {
  PrunedGraph g;
  g.sigma_u = sigma_u.restricted(alphabet.mask(AtomKind::uncontrollable));
  const auto cands = controllable_candidates(alphabet);
  const int n = a.num_states();
  g.out.resize(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    std::vector<std::vector<char>> hit(static_cast<std::size_t>(n));
    for (const auto& t : a.out[static_cast<std::size_t>(s)]) {
      auto& h = hit[static_cast<std::size_t>(t.target)];
      if (h.empty()) h.assign(cands.size(), 0);
      for (std::size_t c = 0; c < cands.size(); ++c)
        if (!h[c] && holds(t.guard, cands[c] | g.sigma_u)) h[c] = 1;
    }
    for (int d = 0; d < n; ++d) {
      const auto& h = hit[static_cast<std::size_t>(d)];
      GraphEdge e{s, d, {}};
      for (std::size_t c = 0; c < h.size(); ++c)
        if (h[c]) e.witnesses.push_back(cands[c]);
      if (e.witnesses.empty()) continue;
      g.out[static_cast<std::size_t>(s)].push_back(static_cast<int>(g.edges.size()));
      g.edges.push_back(std::move(e));
    }
  }
  g.accepting = a.accepting;
  auto adj = g.adjacency();
  auto cyc = on_cycle(adj);
  g.accepting_cycle.resize(static_cast<std::size_t>(n));
  for (std::size_t s = 0; s < static_cast<std::size_t>(n); ++s) g.accepting_cycle[s] = g.accepting[s] && cyc[s];
  g.viable = can_reach(adj, g.accepting_cycle);
  return g;
}

/// Lasso-shaped plan: states[0..k] reach an accepting state, then
/// states[loop_start..] return to it. witnesses[j] labels states[j] -> states[j+1].
struct PlannedPath {
  std::vector<int> states;
  std::vector<Valuation> witnesses;
  int loop_start = 0;

  int transitions() const { return static_cast<int>(witnesses.size()); }
  int target() const { return states[static_cast<std::size_t>(loop_start)]; }
};

/// Shortest path from `start` to the nearest accepting state that lies on a
/// cycle of g, followed by a shortest cycle through that state.
inline PlannedPath shortest_accepting_path(const PrunedGraph& g, int start) {
  const int n = g.num_states();
  auto neighbours = [&](int v) {
    std::vector<int> w;
    for (int e : g.out[static_cast<std::size_t>(v)]) w.push_back(g.edges[static_cast<std::size_t>(e)].to);
    return w;
  };

  std::vector<int> pred(static_cast<std::size_t>(n), -2);
  std::deque<int> q{start};
  pred[static_cast<std::size_t>(start)] = -1;
  int target = -1;
  while (!q.empty() && target < 0) {
    int v = q.front();
    q.pop_front();
    if (g.accepting_cycle[static_cast<std::size_t>(v)]) {
      target = v;
      break;
    }
    for (int w : neighbours(v))
      if (pred[static_cast<std::size_t>(w)] == -2) {
        pred[static_cast<std::size_t>(w)] = v;
        q.push_back(w);
      }
  }
  if (target < 0) throw NoAcceptingPath("no accepting cycle reachable from state " + std::to_string(start));
  PlannedPath p;
  for (int v = target; v != -1; v = pred[static_cast<std::size_t>(v)]) p.states.push_back(v);
  std::reverse(p.states.begin(), p.states.end());
  p.loop_start = static_cast<int>(p.states.size()) - 1;

  // shortest cycle back to target
  std::vector<int> cpred(static_cast<std::size_t>(n), -2);
  q.assign({target});
  cpred[static_cast<std::size_t>(target)] = -1;
  int last = -1;
  while (!q.empty() && last < 0) {
    int v = q.front();
    q.pop_front();
    for (int w : neighbours(v)) {
      if (w == target) {
        last = v;
        break;
      }
      if (cpred[static_cast<std::size_t>(w)] == -2) {
        cpred[static_cast<std::size_t>(w)] = v;
        q.push_back(w);
      }
    }
  }
  std::vector<int> cycle;
  for (int v = last; v != target; v = cpred[static_cast<std::size_t>(v)]) cycle.push_back(v);
  std::reverse(cycle.begin(), cycle.end());
  for (int c : cycle) p.states.push_back(c);
  p.states.push_back(target);

  for (std::size_t j = 0; j + 1 < p.states.size(); ++j)
    p.witnesses.push_back(g.find(p.states[j], p.states[j + 1])->witnesses.front());
  return p;
}

struct BehaviorChoice {
  std::optional<int> behavior;  // p_m; nullopt means all controllable false
  int automaton_state = 0;
  bool replanned = false;
  bool recovered = false;       // sensed valuation enabled nothing; the plan's witness was applied
  Valuation applied_sigma_c;    // valuation the automaton advanced with
};

struct PlannerState {
  int state = 0;          // s'
  PlannedPath path;
  int progress = 0;       // j
  Valuation last_sigma_u;
  long step = 0;          // k
  PrunedGraph graph;
};

inline PlannerState make_planner(const BuchiAutomaton& a) {
  PlannerState ps;
  ps.state = a.initial;
  return ps;
}

namespace detail {

inline std::vector<int> enabled_successors(const BuchiAutomaton& a, int s, Valuation v) {
  std::vector<int> out;
  for (const auto& t : a.out[static_cast<std::size_t>(s)])
    if (holds(t.guard, v)) out.push_back(t.target);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// One planner tick. Advances the automaton with the sensed valuation,
/// replans when needed and returns the behavior to execute.
inline BehaviorChoice step(PlannerState& ps, Valuation sigma_c, Valuation sigma_u, const BuchiAutomaton& a,
                           const Alphabet& alphabet) {
  const std::uint64_t cmask = alphabet.mask(AtomKind::controllable);
  const std::uint64_t umask = alphabet.mask(AtomKind::uncontrollable);
  sigma_c = sigma_c.restricted(cmask);
  sigma_u = sigma_u.restricted(umask);
  const bool first = ps.step == 0;
  const bool changed = !first && sigma_u != ps.last_sigma_u;
  if (first || changed) ps.graph = build_graph(a, sigma_u, alphabet);
  const bool plan_valid = !first && !changed && ps.path.transitions() > 0 &&
                          ps.path.states[static_cast<std::size_t>(ps.progress)] == ps.state;

  BehaviorChoice out;
  const int prev = ps.state;
  int s = -1;
  bool force_replan = first || changed;
  auto enabled = detail::enabled_successors(a, prev, sigma_c | sigma_u);
  if (!enabled.empty()) {
    out.applied_sigma_c = sigma_c;
    int planned = plan_valid ? ps.path.states[static_cast<std::size_t>(ps.progress) + 1] : -1;
    if (planned >= 0 && std::binary_search(enabled.begin(), enabled.end(), planned)) {
      s = planned;
    } else {
      auto it = std::find_if(enabled.begin(), enabled.end(),
                             [&](int t) { return ps.graph.viable[static_cast<std::size_t>(t)] != 0; });
      s = it != enabled.end() ? *it : enabled.front();
    }
  } else {
    out.recovered = true;
    if (plan_valid) {
      out.applied_sigma_c = ps.path.witnesses[static_cast<std::size_t>(ps.progress)];
      s = ps.path.states[static_cast<std::size_t>(ps.progress) + 1];
    } else {
      PlannedPath p;
      try {
        p = shortest_accepting_path(ps.graph, prev);
      } catch (const NoAcceptingPath&) {
        throw NoEnabledTransition("no transition from state " + std::to_string(prev) + " under " +
                                  format_valuation(sigma_c | sigma_u, alphabet));
      }
      out.applied_sigma_c = p.witnesses.front();
      s = p.states[1];
      force_replan = true;
    }
  }

  if (!force_replan && s != prev) {
    bool on_path = plan_valid && ps.path.states[static_cast<std::size_t>(ps.progress) + 1] == s;
    if (on_path) {
      ++ps.progress;
      if (ps.progress >= ps.path.transitions()) ps.progress = ps.path.loop_start;
    } else {
      force_replan = true;
    }
  }
  if (force_replan) {
    ps.path = shortest_accepting_path(ps.graph, s);
    ps.progress = 0;
    out.replanned = true;
  }
  ps.state = s;
  ps.last_sigma_u = sigma_u;
  ++ps.step;
  out.automaton_state = s;
  out.behavior = behavior_of(ps.path.witnesses[static_cast<std::size_t>(ps.progress)]);
  return out;
}

/// Line-oriented listing of the pruned graph and the current plan.
inline std::string describe(const PlannerState& ps, const Alphabet& alphabet) {
  const std::uint64_t cmask = alphabet.mask(AtomKind::controllable);
  std::string out = "graph sigma_u=" + format_valuation(ps.graph.sigma_u, alphabet) + "\n";
  for (int s = 0; s < ps.graph.num_states(); ++s)
    out += "state " + std::to_string(s) + (ps.graph.accepting[static_cast<std::size_t>(s)] ? " accepting" : "") +
           (ps.graph.accepting_cycle[static_cast<std::size_t>(s)] ? " cycle" : "") +
           (ps.graph.viable[static_cast<std::size_t>(s)] ? " viable" : "") + "\n";
  for (const auto& e : ps.graph.edges) {
    out += "edge " + std::to_string(e.from) + " -> " + std::to_string(e.to) + " [";
    for (std::size_t i = 0; i < e.witnesses.size(); ++i) {
      if (i) out += ' ';
      out += format_valuation(e.witnesses[i], alphabet, cmask);
    }
    out += "]\n";
  }
  out += "path";
  for (std::size_t j = 0; j < ps.path.states.size(); ++j) {
    out += j ? " -> " : " ";
    out += std::to_string(ps.path.states[j]);
  }
  out += " loop " + std::to_string(ps.path.loop_start) + " progress " + std::to_string(ps.progress) + "\n";
  out += "behaviors";
  for (auto w : ps.path.witnesses) out += " " + format_valuation(w, alphabet, cmask);
  out += "\n";
  return out;
}

}  // namespace rtlplan
