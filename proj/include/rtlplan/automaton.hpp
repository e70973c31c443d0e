#pragma once

// Büchi automata with propositional edge guards, LTL-to-Büchi translation
// (tableau expansion, then counter degeneralization) and lasso acceptance.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "formula.hpp"
#include "graph.hpp"

namespace rtlplan {

struct Transition {
  Formula guard;
  int target;
};

/// Nondeterministic state-based Büchi automaton. Guard atoms index into `ap`.
struct BuchiAutomaton {
  int initial = 0;
  std::vector<std::string> ap;
  std::vector<std::vector<Transition>> out;  // out[s]: transitions leaving s
  std::vector<char> accepting;

  int num_states() const { return static_cast<int>(out.size()); }
  std::size_t num_edges() const {
    std::size_t n = 0;
    for (const auto& o : out) n += o.size();
    return n;
  }

  /// Throws std::invalid_argument when a structural invariant is broken.
  void check() const {
    const int n = num_states();
    if (n == 0) throw std::invalid_argument("automaton has no states");
    if (initial < 0 || initial >= n) throw std::invalid_argument("initial state out of range");
    if (static_cast<int>(accepting.size()) != n) throw std::invalid_argument("accepting vector size mismatch");
    for (const auto& o : out)
      for (const auto& t : o) {
        if (t.target < 0 || t.target >= n) throw std::invalid_argument("edge target out of range");
        if (!t.guard.is_propositional()) throw std::invalid_argument("temporal operator in edge guard");
        if (ap.size() < 64 && (atoms_of(t.guard) >> ap.size()) != 0)
          throw std::invalid_argument("edge guard refers to an undeclared proposition");
      }
  }
};

/// As BuchiAutomaton, with one accepting vector per acceptance set.
struct GeneralizedBuchi {
  int initial = 0;
  std::vector<std::string> ap;
  std::vector<std::vector<Transition>> out;
  std::vector<std::vector<char>> accepting_sets;

  int num_states() const { return static_cast<int>(out.size()); }
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TranslateOptions {
  int state_cap = 100000;
};

/// Counter construction. States are numbered in breadth-first order from the
/// initial state; only reachable (state, level) pairs are created.
inline BuchiAutomaton degeneralize(const GeneralizedBuchi& g) {
  const int k = static_cast<int>(g.accepting_sets.size());
  const int levels = std::max(1, k);
  auto in_set = [&](int q, int i) { return g.accepting_sets[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] != 0; };

  BuchiAutomaton b;
  b.ap = g.ap;
  std::map<std::pair<int, int>, int> id;
  std::vector<std::pair<int, int>> order;
  auto intern = [&](int q, int lvl) {
    auto [it, fresh] = id.emplace(std::make_pair(q, lvl), static_cast<int>(order.size()));
    if (fresh) order.push_back({q, lvl});
    return it->second;
  };
  intern(g.initial, 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto [q, lvl] = order[i];
    int next_lvl = lvl;
    if (k > 0 && in_set(q, lvl)) next_lvl = (lvl + 1) % levels;
    std::vector<Transition> ts;
    for (const auto& t : g.out[static_cast<std::size_t>(q)]) ts.push_back({t.guard, intern(t.target, next_lvl)});
    b.out.push_back(std::move(ts));
  }
  b.initial = 0;
  b.accepting.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto [q, lvl] = order[i];
    b.accepting[i] = k == 0 ? 1 : (lvl == 0 && in_set(q, 0));
  }
  return b;
}

namespace detail {

// Negation normal form used by the tableau.
enum class NKind { True, False, Lit, And, Or, Until, Release };

struct NNode {
  NKind kind;
  int atom = -1;
  bool positive = true;
  int a = -1;
  int b = -1;
  bool prop = false;  // no temporal operator below
};

class NnfTable {
 public:
  int make(NNode n) {
    auto key = std::make_tuple(static_cast<int>(n.kind), n.atom, n.positive, n.a, n.b);
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    int id = static_cast<int>(nodes_.size());
    n.prop = n.kind == NKind::True || n.kind == NKind::False || n.kind == NKind::Lit ||
             ((n.kind == NKind::And || n.kind == NKind::Or) && nodes_[static_cast<std::size_t>(n.a)].prop &&
              nodes_[static_cast<std::size_t>(n.b)].prop);
    nodes_.push_back(n);
    index_.emplace(key, id);
    return id;
  }
  const NNode& operator[](int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  int from(const Formula& f, bool neg) {
    switch (f.op()) {
      case Op::True:
        return make({neg ? NKind::False : NKind::True});
      case Op::Atom:
        return make({NKind::Lit, f.atom_index(), !neg});
      case Op::Not:
        return from(f.lhs(), !neg);
      case Op::And:
        return make({neg ? NKind::Or : NKind::And, -1, true, from(f.lhs(), neg), from(f.rhs(), neg)});
      case Op::Or:
        return make({neg ? NKind::And : NKind::Or, -1, true, from(f.lhs(), neg), from(f.rhs(), neg)});
      case Op::Implies:
        return make({neg ? NKind::And : NKind::Or, -1, true, from(f.lhs(), !neg), from(f.rhs(), neg)});
      case Op::Until:
        return make({neg ? NKind::Release : NKind::Until, -1, true, from(f.lhs(), neg), from(f.rhs(), neg)});
      case Op::Eventually:
        if (neg) return make({NKind::Release, -1, true, make({NKind::False}), from(f.lhs(), true)});
        return make({NKind::Until, -1, true, make({NKind::True}), from(f.lhs(), false)});
      case Op::Globally:
        if (neg) return make({NKind::Until, -1, true, make({NKind::True}), from(f.lhs(), true)});
        return make({NKind::Release, -1, true, make({NKind::False}), from(f.lhs(), false)});
    }
    throw std::logic_error("unreachable");
  }

 private:
  std::vector<NNode> nodes_;
  std::map<std::tuple<int, int, bool, int, int>, int> index_;
};

struct TableauNode {
  std::set<int> incoming;
  std::set<int> fresh;  // "New"
  std::set<int> old;
  std::set<int> next;
};

constexpr int tableau_init = -1;

inline Formula to_formula(const NnfTable& t, int id) {
  const NNode& n = t[id];
  switch (n.kind) {
    case NKind::True:
      return Formula::truth();
    case NKind::False:
      return Formula::falsity();
    case NKind::Lit:
      return n.positive ? Formula::atom(n.atom) : Formula::negate(Formula::atom(n.atom));
    case NKind::And:
      return Formula::conj(to_formula(t, n.a), to_formula(t, n.b));
    case NKind::Or:
      return Formula::disj(to_formula(t, n.a), to_formula(t, n.b));
    default:
      throw std::logic_error("temporal node in a state label");
  }
}

// Propositional members of Old that constrain the current letter.
inline std::set<int> label_of(const NnfTable& t, const std::set<int>& old) {
  std::set<int> out;
  for (int i : old)
    if (t[i].prop && t[i].kind != NKind::True) out.insert(i);
  return out;
}

inline Formula cube_formula(const NnfTable& t, const std::set<int>& label) {
  std::vector<std::pair<int, bool>> lits;
  std::vector<int> rest;
  for (int i : label) {
    if (t[i].kind == NKind::Lit)
      lits.push_back({t[i].atom, t[i].positive});
    else
      rest.push_back(i);
  }
  std::sort(lits.begin(), lits.end());
  std::optional<Formula> f;
  auto add = [&](Formula l) { f = f ? Formula::conj(*f, l) : l; };
  for (auto [atom, pos] : lits) add(pos ? Formula::atom(atom) : Formula::negate(Formula::atom(atom)));
  for (int i : rest) add(to_formula(t, i));
  return f ? *f : Formula::truth();
}

// False only when the label is certainly unsatisfiable.
inline bool maybe_satisfiable(const NnfTable& t, const std::set<int>& label) {
  bool compound = false;
  for (int i : label) compound = compound || t[i].kind != NKind::Lit;
  if (!compound) return true;
  Formula f = cube_formula(t, label);
  std::uint64_t atoms = atoms_of(f);
  if (__builtin_popcountll(atoms) > 12) return true;
  std::vector<int> idx;
  for (int i = 0; i < 64; ++i)
    if ((atoms >> i) & 1U) idx.push_back(i);
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << idx.size()); ++m) {
    Valuation v;
    for (std::size_t k = 0; k < idx.size(); ++k) v.set(idx[k], (m >> k) & 1U);
    if (holds(f, v)) return true;
  }
  return false;
}

}  // namespace detail

/// Tableau expansion into a generalized Büchi automaton whose state 0 is a
/// fresh initial state; guards are read on the edge's target.
inline GeneralizedBuchi translate_generalized(const Formula& f, const std::vector<std::string>& ap,
                                              const TranslateOptions& opt = {}) {
  using namespace detail;
  NnfTable t;
  const int root = t.from(f, false);

  std::vector<TableauNode> done;
  std::map<std::pair<std::set<int>, std::set<int>>, int> seen;
  std::vector<TableauNode> work;
  work.push_back({{tableau_init}, {root}, {}, {}});

  auto contradicts = [&](const std::set<int>& old, const NNode& lit) {
    for (int i : old)
      if (t[i].kind == NKind::Lit && t[i].atom == lit.atom && t[i].positive != lit.positive) return true;
    return false;
  };
  auto add_new = [](TableauNode& n, int id) {
    if (!n.old.count(id)) n.fresh.insert(id);
  };

  while (!work.empty()) {
    TableauNode n = std::move(work.back());
    work.pop_back();
    if (n.fresh.empty()) {
      if (!maybe_satisfiable(t, label_of(t, n.old))) continue;
      auto key = std::make_pair(n.old, n.next);
      auto it = seen.find(key);
      if (it != seen.end()) {
        done[static_cast<std::size_t>(it->second)].incoming.insert(n.incoming.begin(), n.incoming.end());
        continue;
      }
      int id = static_cast<int>(done.size());
      if (id + 1 > opt.state_cap)
        throw CapacityError("tableau exceeds the state cap of " + std::to_string(opt.state_cap));
      seen.emplace(key, id);
      work.push_back({{id}, n.next, {}, {}});
      done.push_back(std::move(n));
      continue;
    }
    int eta = *n.fresh.begin();
    n.fresh.erase(n.fresh.begin());
    if (n.old.count(eta)) {
      work.push_back(std::move(n));
      continue;
    }
    const NNode nd = t[eta];
    if (nd.prop && (nd.kind == NKind::And || nd.kind == NKind::Or)) {
      // kept whole as part of the letter constraint instead of splitting
      n.old.insert(eta);
      work.push_back(std::move(n));
      continue;
    }
    switch (nd.kind) {
      case NKind::True:
        n.old.insert(eta);
        work.push_back(std::move(n));
        break;
      case NKind::False:
        break;
      case NKind::Lit:
        if (contradicts(n.old, nd)) break;
        n.old.insert(eta);
        work.push_back(std::move(n));
        break;
      case NKind::And:
        n.old.insert(eta);
        add_new(n, nd.a);
        add_new(n, nd.b);
        work.push_back(std::move(n));
        break;
      case NKind::Or: {
        n.old.insert(eta);
        TableauNode m = n;
        add_new(n, nd.a);
        add_new(m, nd.b);
        work.push_back(std::move(n));
        work.push_back(std::move(m));
        break;
      }
      case NKind::Until: {
        n.old.insert(eta);
        TableauNode m = n;
        add_new(n, nd.a);
        n.next.insert(eta);
        add_new(m, nd.b);
        work.push_back(std::move(n));
        work.push_back(std::move(m));
        break;
      }
      case NKind::Release: {
        n.old.insert(eta);
        TableauNode m = n;
        add_new(n, nd.b);
        n.next.insert(eta);
        add_new(m, nd.a);
        add_new(m, nd.b);
        work.push_back(std::move(n));
        work.push_back(std::move(m));
        break;
      }
    }
  }

  // Acceptance sets, one per Until subformula.
  std::vector<int> untils;
  for (int i = 0; i < t.size(); ++i)
    if (t[i].kind == NKind::Until) untils.push_back(i);
  const std::size_t nn = done.size();
  std::vector<std::vector<char>> member(nn, std::vector<char>(untils.size(), 0));
  for (std::size_t r = 0; r < nn; ++r)
    for (std::size_t j = 0; j < untils.size(); ++j) {
      const auto& old = done[r].old;
      member[r][j] = !old.count(untils[j]) || old.count(t[untils[j]].b);
    }

  // Nodes with equal Next sets have identical successors; merge those that
  // also agree on acceptance, joining their literal cubes into one guard.
  std::map<std::pair<std::set<int>, std::vector<char>>, int> cls;
  std::vector<int> class_of(nn);
  std::vector<std::size_t> rep;
  for (std::size_t r = 0; r < nn; ++r) {
    auto [it, fresh] = cls.emplace(std::make_pair(done[r].next, member[r]), static_cast<int>(rep.size()) + 1);
    if (fresh) rep.push_back(r);
    class_of[r] = it->second;
  }
  const int states = static_cast<int>(rep.size()) + 1;

  std::map<std::pair<int, int>, std::vector<std::set<int>>> cubes;
  for (std::size_t r = 0; r < nn; ++r) {
    std::set<int> lits = label_of(t, done[r].old);
    for (int q : done[r].incoming) {
      int src = q == tableau_init ? 0 : class_of[static_cast<std::size_t>(q)];
      auto& v = cubes[{src, class_of[r]}];
      if (std::find(v.begin(), v.end(), lits) == v.end()) v.push_back(lits);
    }
  }

  GeneralizedBuchi g;
  g.initial = 0;
  g.ap = ap;
  g.out.resize(static_cast<std::size_t>(states));
  for (auto& [edge, cs] : cubes) {
    std::sort(cs.begin(), cs.end());
    // an empty cube subsumes the rest
    bool universal = std::any_of(cs.begin(), cs.end(), [](const auto& c) { return c.empty(); });
    Formula guard = Formula::truth();
    if (!universal) {
      std::optional<Formula> acc;
      for (const auto& c : cs) {
        Formula cf = cube_formula(t, c);
        acc = acc ? Formula::disj(*acc, cf) : cf;
      }
      guard = *acc;
    }
    g.out[static_cast<std::size_t>(edge.first)].push_back({guard, edge.second});
  }
  g.accepting_sets.assign(untils.size(), std::vector<char>(static_cast<std::size_t>(states), 0));
  for (std::size_t j = 0; j < untils.size(); ++j)
    for (std::size_t r = 0; r < nn; ++r)
      if (member[r][j]) g.accepting_sets[j][static_cast<std::size_t>(class_of[r])] = 1;
  return g;
}

namespace detail {

inline void guard_key(const Formula& f, std::string& out) {
  switch (f.op()) {
    case Op::True:
      out += 'T';
      return;
    case Op::Atom:
      out += std::to_string(f.atom_index());
      out += '.';
      return;
    case Op::Not:
      out += '!';
      guard_key(f.lhs(), out);
      return;
    default:
      out += static_cast<char>('a' + static_cast<int>(f.op()));
      guard_key(f.lhs(), out);
      guard_key(f.rhs(), out);
      return;
  }
}

}  // namespace detail

/// Quotient by strong bisimulation (same acceptance flag, same guarded moves
/// into the same classes) followed by removal of unreachable states.
/// Language-preserving; states are renumbered breadth-first from the initial one.
inline BuchiAutomaton reduce(const BuchiAutomaton& a) {
  const int n = a.num_states();
  std::vector<std::vector<std::string>> keys(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s)
    for (const auto& t : a.out[static_cast<std::size_t>(s)]) {
      std::string k;
      detail::guard_key(t.guard, k);
      keys[static_cast<std::size_t>(s)].push_back(k);
    }
  std::vector<int> block(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) block[static_cast<std::size_t>(s)] = a.accepting[static_cast<std::size_t>(s)] ? 1 : 0;
  int blocks = -1;
  while (true) {
    std::map<std::pair<int, std::set<std::pair<int, std::string>>>, int> sig;
    std::vector<int> next(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      std::set<std::pair<int, std::string>> moves;
      const auto& o = a.out[static_cast<std::size_t>(s)];
      for (std::size_t e = 0; e < o.size(); ++e)
        moves.insert({block[static_cast<std::size_t>(o[e].target)], keys[static_cast<std::size_t>(s)][e]});
      auto [it, fresh] = sig.emplace(std::make_pair(block[static_cast<std::size_t>(s)], std::move(moves)),
                                     static_cast<int>(sig.size()));
      next[static_cast<std::size_t>(s)] = it->second;
    }
    int count = static_cast<int>(sig.size());
    block = std::move(next);
    if (count == blocks) break;
    blocks = count;
  }

  std::vector<int> rep(static_cast<std::size_t>(blocks), -1);
  for (int s = 0; s < n; ++s)
    if (rep[static_cast<std::size_t>(block[static_cast<std::size_t>(s)])] < 0)
      rep[static_cast<std::size_t>(block[static_cast<std::size_t>(s)])] = s;
  std::vector<int> id(static_cast<std::size_t>(blocks), -1);
  std::vector<int> order;
  auto visit = [&](int b) {
    if (id[static_cast<std::size_t>(b)] < 0) {
      id[static_cast<std::size_t>(b)] = static_cast<int>(order.size());
      order.push_back(b);
    }
    return id[static_cast<std::size_t>(b)];
  };
  visit(block[static_cast<std::size_t>(a.initial)]);
  BuchiAutomaton r;
  r.ap = a.ap;
  for (std::size_t i = 0; i < order.size(); ++i) {
    int s = rep[static_cast<std::size_t>(order[i])];
    std::vector<Transition> ts;
    std::set<std::pair<int, std::string>> seen;
    const auto& o = a.out[static_cast<std::size_t>(s)];
    for (std::size_t e = 0; e < o.size(); ++e) {
      int tb = block[static_cast<std::size_t>(o[e].target)];
      if (!seen.insert({tb, keys[static_cast<std::size_t>(s)][e]}).second) continue;
      ts.push_back({o[e].guard, visit(tb)});
    }
    r.out.push_back(std::move(ts));
    r.accepting.push_back(a.accepting[static_cast<std::size_t>(s)]);
  }
  r.initial = 0;
  return r;
}

/// LTL to Büchi automaton; the language is the set of words satisfying f at 0.
inline BuchiAutomaton translate(const Formula& f, const std::vector<std::string>& ap,
                                const TranslateOptions& opt = {}) {
  BuchiAutomaton b = reduce(degeneralize(translate_generalized(f, ap, opt)));
  if (b.num_states() > opt.state_cap)
    throw CapacityError("automaton exceeds the state cap of " + std::to_string(opt.state_cap));
  return b;
}

inline BuchiAutomaton translate(const Formula& f, const Alphabet& alphabet, const TranslateOptions& opt = {}) {
  return translate(f, alphabet.names(), opt);
}

/// Remaps guard atoms so that the automaton's propositions follow `alphabet`.
/// Every proposition of `a` must be declared in `alphabet`.
inline BuchiAutomaton rebind(const BuchiAutomaton& a, const Alphabet& alphabet) {
  std::vector<int> map(a.ap.size());
  for (std::size_t i = 0; i < a.ap.size(); ++i) {
    auto idx = alphabet.find(a.ap[i]);
    if (!idx) throw AlphabetError("automaton proposition '" + a.ap[i] + "' is not declared");
    map[i] = *idx;
  }
  auto remap = [&](auto&& self, const Formula& f) -> Formula {
    switch (f.op()) {
      case Op::True:
        return f;
      case Op::Atom:
        return Formula::atom(map.at(static_cast<std::size_t>(f.atom_index())));
      case Op::Not:
        return Formula::negate(self(self, f.lhs()));
      case Op::And:
        return Formula::conj(self(self, f.lhs()), self(self, f.rhs()));
      case Op::Or:
        return Formula::disj(self(self, f.lhs()), self(self, f.rhs()));
      case Op::Implies:
        return Formula::implies(self(self, f.lhs()), self(self, f.rhs()));
      default:
        throw std::invalid_argument("temporal operator in edge guard");
    }
  };
  BuchiAutomaton b = a;
  b.ap = alphabet.names();
  for (auto& o : b.out)
    for (auto& t : o) t.guard = remap(remap, t.guard);
  return b;
}

/// Product of the lasso's position graph with the automaton, searched for a
/// reachable cycle through an accepting state.
inline bool accepts_lasso(const BuchiAutomaton& a, const LassoWord& w) {
  if (w.cycle.empty()) throw std::invalid_argument("lasso word needs a nonempty cycle");
  const int n = a.num_states();
  const int len = static_cast<int>(w.size());
  auto node = [&](int q, int i) { return q * len + i; };
  Adjacency adj(static_cast<std::size_t>(n * len));
  for (int q = 0; q < n; ++q)
    for (int i = 0; i < len; ++i) {
      Valuation v = w.at(static_cast<std::size_t>(i));
      int ni = static_cast<int>(w.next(static_cast<std::size_t>(i)));
      for (const auto& t : a.out[static_cast<std::size_t>(q)])
        if (holds(t.guard, v)) adj[static_cast<std::size_t>(node(q, i))].push_back(node(t.target, ni));
    }
  auto scc = strongly_connected(adj, {node(a.initial, 0)});
  for (int q = 0; q < n; ++q) {
    if (!a.accepting[static_cast<std::size_t>(q)]) continue;
    for (int i = 0; i < len; ++i) {
      int c = scc.component[static_cast<std::size_t>(node(q, i))];
      if (c >= 0 && scc.cyclic[static_cast<std::size_t>(c)]) return true;
    }
  }
  return false;
}

}  // namespace rtlplan
