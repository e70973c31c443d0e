#pragma once

// Reactive temporal logic formulas: alphabet, AST, parser, desugaring,
// lasso-word semantics and RTL fragment validation.

#include <cctype>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rtlplan {

enum class AtomKind { controllable, uncontrollable };

struct Atom {
  std::string name;
  AtomKind kind;
};

class AlphabetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered set of atomic propositions. The declaration index is the bit
/// position of the atom in a Valuation. At most 64 atoms.
class Alphabet {
 public:
  static constexpr int max_atoms = 64;

  Alphabet() = default;

  int add(std::string name, AtomKind kind) {
    if (name.empty()) throw AlphabetError("atom name is empty");
    if (index_.count(name))
      throw AlphabetError("atom '" + name + "' declared twice");
    if (static_cast<int>(atoms_.size()) >= max_atoms)
      throw AlphabetError("too many atoms (max 64)");
    index_.emplace(name, static_cast<int>(atoms_.size()));
    atoms_.push_back({std::move(name), kind});
    return static_cast<int>(atoms_.size()) - 1;
  }

  std::optional<int> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int index_of(std::string_view name) const {
    auto i = find(name);
    if (!i) throw AlphabetError("unknown atom '" + std::string(name) + "'");
    return *i;
  }

  const Atom& operator[](int i) const { return atoms_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(atoms_.size()); }
  const std::vector<Atom>& atoms() const { return atoms_; }

  std::vector<int> indices(AtomKind kind) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (atoms_[static_cast<std::size_t>(i)].kind == kind) out.push_back(i);
    return out;
  }
  std::vector<int> controllable() const { return indices(AtomKind::controllable); }
  std::vector<int> uncontrollable() const { return indices(AtomKind::uncontrollable); }

  std::uint64_t mask(AtomKind kind) const {
    std::uint64_t m = 0;
    for (int i : indices(kind)) m |= std::uint64_t{1} << i;
    return m;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(atoms_.size());
    for (const auto& a : atoms_) out.push_back(a.name);
    return out;
  }

 private:
  std::vector<Atom> atoms_;
  std::unordered_map<std::string, int> index_;
};

/// Truth assignment over an Alphabet, one bit per atom index.
struct Valuation {
  std::uint64_t bits = 0;

  constexpr bool test(int i) const { return (bits >> i) & 1U; }
  constexpr void set(int i, bool v = true) {
    if (v)
      bits |= std::uint64_t{1} << i;
    else
      bits &= ~(std::uint64_t{1} << i);
  }
  constexpr Valuation restricted(std::uint64_t mask) const { return {bits & mask}; }
  constexpr Valuation operator|(Valuation o) const { return {bits | o.bits}; }
  friend constexpr bool operator==(Valuation, Valuation) = default;

  int count() const { return __builtin_popcountll(bits); }
};

inline Valuation one_hot(int i) {
  Valuation v;
  v.set(i);
  return v;
}

/// Names of the true atoms within `mask`, joined by '|'; "-" when none.
inline std::string format_valuation(Valuation v, const Alphabet& alphabet, std::uint64_t mask = ~std::uint64_t{0}) {
  std::string out;
  for (int i = 0; i < alphabet.size(); ++i)
    if (((mask >> i) & 1U) && v.test(i)) {
      if (!out.empty()) out += '|';
      out += alphabet[i].name;
    }
  return out.empty() ? "-" : out;
}

/// Inverse of format_valuation. Throws AlphabetError on unknown names.
inline Valuation parse_valuation(std::string_view text, const Alphabet& alphabet) {
  Valuation v;
  if (text == "-" || text.empty()) return v;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t bar = text.find('|', start);
    if (bar == std::string_view::npos) bar = text.size();
    v.set(alphabet.index_of(text.substr(start, bar - start)));
    start = bar + 1;
  }
  return v;
}

// ---------------------------------------------------------------------------
// AST

enum class Op { True, Atom, Not, And, Or, Until, Eventually, Globally, Implies };

struct FormulaNode;

/// Immutable formula tree with shared subterms. Equality is structural.
class Formula {
 public:
  Formula() : Formula(truth()) {}

  static Formula truth();
  static Formula falsity() { return negate(truth()); }
  static Formula atom(int index);
  static Formula negate(Formula f);
  static Formula conj(Formula a, Formula b);
  static Formula disj(Formula a, Formula b);
  static Formula until(Formula a, Formula b);
  static Formula eventually(Formula a);
  static Formula globally(Formula a);
  static Formula implies(Formula a, Formula b);

  Op op() const;
  int atom_index() const;
  const Formula& lhs() const;
  const Formula& rhs() const;

  bool is_temporal() const;
  bool is_propositional() const;

  friend bool operator==(const Formula& a, const Formula& b);

 private:
  explicit Formula(std::shared_ptr<const FormulaNode> n) : node_(std::move(n)) {}
  std::shared_ptr<const FormulaNode> node_;
};

struct FormulaNode {
  Op op;
  int atom = -1;
  std::optional<Formula> lhs;
  std::optional<Formula> rhs;
};

inline Formula Formula::truth() {
  static const auto node = std::make_shared<const FormulaNode>(FormulaNode{Op::True, -1, {}, {}});
  return Formula(node);
}
inline Formula Formula::atom(int index) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Op::Atom, index, {}, {}}));
}
inline Formula Formula::negate(Formula f) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Op::Not, -1, std::move(f), {}}));
}
inline Formula Formula::conj(Formula a, Formula b) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Op::And, -1, std::move(a), std::move(b)}));
}
inline Formula Formula::disj(Formula a, Formula b) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Op::Or, -1, std::move(a), std::move(b)}));
}
inline Formula Formula::until(Formula a, Formula b) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Op::Until, -1, std::move(a), std::move(b)}));
}
inline Formula Formula::eventually(Formula a) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Op::Eventually, -1, std::move(a), {}}));
}
inline Formula Formula::globally(Formula a) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Op::Globally, -1, std::move(a), {}}));
}
inline Formula Formula::implies(Formula a, Formula b) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Op::Implies, -1, std::move(a), std::move(b)}));
}

inline Op Formula::op() const { return node_->op; }
inline int Formula::atom_index() const { return node_->atom; }
inline const Formula& Formula::lhs() const { return *node_->lhs; }
inline const Formula& Formula::rhs() const { return *node_->rhs; }

inline bool Formula::is_temporal() const {
  switch (op()) {
    case Op::Until:
    case Op::Eventually:
    case Op::Globally:
      return true;
    default:
      return false;
  }
}

inline bool Formula::is_propositional() const {
  switch (op()) {
    case Op::True:
    case Op::Atom:
      return true;
    case Op::Not:
      return lhs().is_propositional();
    case Op::And:
    case Op::Or:
    case Op::Implies:
      return lhs().is_propositional() && rhs().is_propositional();
    default:
      return false;
  }
}

inline bool operator==(const Formula& a, const Formula& b) {
  if (a.node_ == b.node_) return true;
  if (a.op() != b.op() || a.atom_index() != b.atom_index()) return false;
  const auto& na = *a.node_;
  const auto& nb = *b.node_;
  if (na.lhs.has_value() != nb.lhs.has_value() || na.rhs.has_value() != nb.rhs.has_value()) return false;
  if (na.lhs && !(*na.lhs == *nb.lhs)) return false;
  if (na.rhs && !(*na.rhs == *nb.rhs)) return false;
  return true;
}

/// Bitmask of atom indices occurring in f.
inline std::uint64_t atoms_of(const Formula& f) {
  switch (f.op()) {
    case Op::True:
      return 0;
    case Op::Atom:
      return std::uint64_t{1} << f.atom_index();
    case Op::Not:
    case Op::Eventually:
    case Op::Globally:
      return atoms_of(f.lhs());
    default:
      return atoms_of(f.lhs()) | atoms_of(f.rhs());
  }
}

inline int depth(const Formula& f) {
  switch (f.op()) {
    case Op::True:
    case Op::Atom:
      return 0;
    case Op::Not:
    case Op::Eventually:
    case Op::Globally:
      return 1 + depth(f.lhs());
    default:
      return 1 + std::max(depth(f.lhs()), depth(f.rhs()));
  }
}

/// Rewrites Or, Implies, Eventually and Globally into {True, Atom, Not, And, Until}.
inline Formula desugar(const Formula& f) {
  using F = Formula;
  switch (f.op()) {
    case Op::True:
    case Op::Atom:
      return f;
    case Op::Not:
      return F::negate(desugar(f.lhs()));
    case Op::And:
      return F::conj(desugar(f.lhs()), desugar(f.rhs()));
    case Op::Or:
      return F::negate(F::conj(F::negate(desugar(f.lhs())), F::negate(desugar(f.rhs()))));
    case Op::Implies:
      return F::negate(F::conj(desugar(f.lhs()), F::negate(desugar(f.rhs()))));
    case Op::Until:
      return F::until(desugar(f.lhs()), desugar(f.rhs()));
    case Op::Eventually:
      return F::until(F::truth(), desugar(f.lhs()));
    case Op::Globally:
      return F::negate(F::until(F::truth(), F::negate(desugar(f.lhs()))));
  }
  return f;
}

/// Propositional evaluation. Temporal operators are rejected.
inline bool holds(const Formula& f, Valuation v) {
  switch (f.op()) {
    case Op::True:
      return true;
    case Op::Atom:
      return v.test(f.atom_index());
    case Op::Not:
      return !holds(f.lhs(), v);
    case Op::And:
      return holds(f.lhs(), v) && holds(f.rhs(), v);
    case Op::Or:
      return holds(f.lhs(), v) || holds(f.rhs(), v);
    case Op::Implies:
      return !holds(f.lhs(), v) || holds(f.rhs(), v);
    default:
      throw std::logic_error("holds(): temporal operator in propositional context");
  }
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline int precedence(Op op) {
  switch (op) {
    case Op::Implies:
      return 1;
    case Op::Or:
      return 2;
    case Op::And:
      return 3;
    case Op::Until:
      return 4;
    default:
      return 5;
  }
}

inline void print(const Formula& f, const std::vector<std::string>& names, std::string& out) {
  auto child = [&](const Formula& c, int min_prec) {
    bool paren = precedence(c.op()) < min_prec;
    if (paren) out += '(';
    print(c, names, out);
    if (paren) out += ')';
  };
  switch (f.op()) {
    case Op::True:
      out += "true";
      break;
    case Op::Atom:
      out += names.at(static_cast<std::size_t>(f.atom_index()));
      break;
    case Op::Not:
      out += '!';
      child(f.lhs(), 5);
      break;
    case Op::Eventually:
      out += "F ";
      child(f.lhs(), 5);
      break;
    case Op::Globally:
      out += "G ";
      child(f.lhs(), 5);
      break;
    case Op::And:
      child(f.lhs(), 3);
      out += " & ";
      child(f.rhs(), 4);
      break;
    case Op::Or:
      child(f.lhs(), 2);
      out += " | ";
      child(f.rhs(), 3);
      break;
    case Op::Until:
      child(f.lhs(), 5);
      out += " U ";
      child(f.rhs(), 4);
      break;
    case Op::Implies:
      child(f.lhs(), 2);
      out += " -> ";
      child(f.rhs(), 1);
      break;
  }
}

}  // namespace detail

/// Prints f in the concrete grammar accepted by parse_formula.
inline std::string to_string(const Formula& f, const std::vector<std::string>& names) {
  std::string out;
  detail::print(f, names, out);
  return out;
}

inline std::string to_string(const Formula& f, const Alphabet& alphabet) {
  return to_string(f, alphabet.names());
}

// ---------------------------------------------------------------------------
// Parsing
//
//   formula  := implies
//   implies  := or ( "->" implies )?
//   or       := and ( "|" and )*
//   and      := until ( "&" until )*
//   until    := unary ( "U" until )?
//   unary    := ( "!" | "G" | "F" ) unary | primary
//   primary  := "true" | "false" | ident | "(" formula ")"
//
// G, F and U are reserved; identifiers are case-sensitive.

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t column, const std::string& msg)
      : std::runtime_error("column " + std::to_string(column) + ": " + msg), column_(column) {}
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

namespace detail {

class FormulaParser {
 public:
  FormulaParser(std::string_view text, const Alphabet& alphabet) : text_(text), alphabet_(alphabet) {}

  Formula parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError(1, "empty formula");
    Formula f = parse_implies();
    skip_ws();
    if (pos_ < text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(pos_ + 1, msg); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  }

  bool accept(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) != tok) return false;
    // keyword-like tokens must not run into an identifier
    if (ident_char(tok.back()) && pos_ + tok.size() < text_.size() && ident_char(text_[pos_ + tok.size()]))
      return false;
    pos_ += tok.size();
    return true;
  }

  Formula parse_implies() {
    Formula lhs = parse_or();
    if (accept("->")) return Formula::implies(lhs, parse_implies());
    return lhs;
  }

  Formula parse_or() {
    Formula lhs = parse_and();
    while (accept("|")) lhs = Formula::disj(lhs, parse_and());
    return lhs;
  }

  Formula parse_and() {
    Formula lhs = parse_until();
    while (accept("&")) lhs = Formula::conj(lhs, parse_until());
    return lhs;
  }

  Formula parse_until() {
    Formula lhs = parse_unary();
    if (accept("U")) return Formula::until(lhs, parse_until());
    return lhs;
  }

  Formula parse_unary() {
    if (accept("!")) return Formula::negate(parse_unary());
    if (accept("G")) return Formula::globally(parse_unary());
    if (accept("F")) return Formula::eventually(parse_unary());
    return parse_primary();
  }

  Formula parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of formula");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Formula f = parse_implies();
      if (!accept(")")) fail("expected ')'");
      return f;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
      std::string name(text_.substr(start, pos_ - start));
      if (name == "true") return Formula::truth();
      if (name == "false") return Formula::falsity();
      if (name == "G" || name == "F" || name == "U") {
        pos_ = start;
        fail("operator '" + name + "' used as an operand");
      }
      auto idx = alphabet_.find(name);
      if (!idx) {
        pos_ = start;
        fail("undeclared identifier '" + name + "'");
      }
      return Formula::atom(*idx);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view text_;
  const Alphabet& alphabet_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Formula parse_formula(std::string_view text, const Alphabet& alphabet) {
  return detail::FormulaParser(text, alphabet).parse();
}

// ---------------------------------------------------------------------------
// Lasso words and exact semantics

/// Ultimately periodic word prefix · cycle^ω.
struct LassoWord {
  std::vector<Valuation> prefix;
  std::vector<Valuation> cycle;

  std::size_t size() const { return prefix.size() + cycle.size(); }
  std::size_t next(std::size_t i) const { return i + 1 < size() ? i + 1 : prefix.size(); }
  Valuation at(std::size_t i) const {
    return i < prefix.size() ? prefix[i] : cycle[(i - prefix.size()) % cycle.size()];
  }
};

namespace detail {

// Truth of f at every position 0..|prefix|+|cycle|-1.
inline std::vector<char> eval_positions(const Formula& f, const LassoWord& w) {
  const std::size_t n = w.size();
  const std::size_t p = w.prefix.size();
  const std::size_t c = w.cycle.size();
  std::vector<char> out(n, 0);
  switch (f.op()) {
    case Op::True:
      std::fill(out.begin(), out.end(), 1);
      return out;
    case Op::Atom:
      for (std::size_t i = 0; i < n; ++i) out[i] = w.at(i).test(f.atom_index());
      return out;
    case Op::Not: {
      auto a = eval_positions(f.lhs(), w);
      for (std::size_t i = 0; i < n; ++i) out[i] = !a[i];
      return out;
    }
    case Op::And:
    case Op::Or:
    case Op::Implies: {
      auto a = eval_positions(f.lhs(), w);
      auto b = eval_positions(f.rhs(), w);
      for (std::size_t i = 0; i < n; ++i) {
        if (f.op() == Op::And) out[i] = a[i] && b[i];
        else if (f.op() == Op::Or) out[i] = a[i] || b[i];
        else out[i] = !a[i] || b[i];
      }
      return out;
    }
    case Op::Until:
    case Op::Eventually: {
      std::vector<char> a(n, 1);
      if (f.op() == Op::Until) a = eval_positions(f.lhs(), w);
      auto b = eval_positions(f.op() == Op::Until ? f.rhs() : f.lhs(), w);
      // Backward sweep over prefix + two cycle copies; the first copy is exact
      // since any witness lies at most one cycle ahead.
      const std::size_t len = p + 2 * c;
      auto wrap = [&](std::size_t k) { return k < p ? k : p + (k - p) % c; };
      char next = 0;
      for (std::size_t k = len; k-- > 0;) {
        std::size_t i = wrap(k);
        char v = b[i] || (a[i] && next);
        if (k < n) out[i] = v;
        next = v;
      }
      return out;
    }
    case Op::Globally: {
      auto a = eval_positions(f.lhs(), w);
      char all_cycle = 1;
      for (std::size_t i = p; i < n; ++i) all_cycle = all_cycle && a[i];
      char next = all_cycle;
      for (std::size_t k = n; k-- > 0;) {
        if (k >= p) {
          out[k] = all_cycle;
        } else {
          out[k] = a[k] && next;
          next = out[k];
        }
      }
      return out;
    }
  }
  return out;
}

}  // namespace detail

/// Truth of (w, t) ⊨ f.
inline bool eval_lasso(const Formula& f, const LassoWord& w, std::size_t t = 0) {
  if (w.cycle.empty()) throw std::invalid_argument("lasso word needs a nonempty cycle");
  if (t >= w.size()) throw std::out_of_range("eval_lasso: step index beyond prefix + cycle");
  return detail::eval_positions(f, w)[t] != 0;
}

// ---------------------------------------------------------------------------
// RTL fragment
//
//   Psi ::= psi | G(phi -> Psi) | G(psi -> Psi) | Psi & Psi | (phi -> Psi)
//
// psi ranges over LTL on controllable atoms, phi over uncontrollable atoms.
// The last production is a reaction that is only required at the first step.

enum class FormulaClass { constant, controllable, uncontrollable, mixed };

inline FormulaClass classify(const Formula& f, const Alphabet& alphabet) {
  std::uint64_t atoms = atoms_of(f);
  if (atoms == 0) return FormulaClass::constant;
  std::uint64_t c = alphabet.mask(AtomKind::controllable);
  std::uint64_t u = alphabet.mask(AtomKind::uncontrollable);
  if ((atoms & ~c) == 0) return FormulaClass::controllable;
  if ((atoms & ~u) == 0) return FormulaClass::uncontrollable;
  return FormulaClass::mixed;
}

enum class ClauseKind { controllable, guarded_by_uncontrollable, guarded_by_controllable, initial_reaction };

struct RtlClause {
  Formula formula;
  ClauseKind kind;
};

struct RtlSpec {
  Formula formula;
  std::vector<int> alphabet_c;
  std::vector<int> alphabet_u;
  std::vector<RtlClause> conjuncts;
};

class RtlError : public std::runtime_error {
 public:
  RtlError(std::string offending, const std::string& msg)
      : std::runtime_error(msg), offending_(std::move(offending)) {}
  const std::string& offending() const { return offending_; }

 private:
  std::string offending_;
};

namespace detail {

inline bool is_controllable_ltl(const Formula& f, const Alphabet& a) {
  auto k = classify(f, a);
  return k == FormulaClass::constant || k == FormulaClass::controllable;
}

inline bool is_uncontrollable_ltl(const Formula& f, const Alphabet& a) {
  auto k = classify(f, a);
  return k == FormulaClass::constant || k == FormulaClass::uncontrollable;
}

inline void check_rtl(const Formula& f, const Alphabet& a) {
  if (is_controllable_ltl(f, a)) return;
  if (f.op() == Op::And) {
    check_rtl(f.lhs(), a);
    check_rtl(f.rhs(), a);
    return;
  }
  const Formula* imp = nullptr;
  if (f.op() == Op::Globally && f.lhs().op() == Op::Implies) imp = &f.lhs();
  if (f.op() == Op::Implies) imp = &f;
  if (imp) {
    const Formula& guard = imp->lhs();
    if (!is_uncontrollable_ltl(guard, a) && !is_controllable_ltl(guard, a))
      throw RtlError(to_string(guard, a),
                     "antecedent '" + to_string(guard, a) + "' mixes controllable and uncontrollable atoms");
    check_rtl(imp->rhs(), a);
    return;
  }
  throw RtlError(to_string(f, a), "'" + to_string(f, a) +
                                      "' is not an RTL formula: uncontrollable atoms may only appear in the "
                                      "antecedent of an implication");
}

inline void collect_conjuncts(const Formula& f, const Alphabet& a, std::vector<RtlClause>& out) {
  if (f.op() == Op::And) {
    collect_conjuncts(f.lhs(), a, out);
    collect_conjuncts(f.rhs(), a, out);
    return;
  }
  ClauseKind kind = ClauseKind::controllable;
  if (!is_controllable_ltl(f, a)) {
    if (f.op() == Op::Implies)
      kind = ClauseKind::initial_reaction;
    else if (is_controllable_ltl(f.lhs().lhs(), a))
      kind = ClauseKind::guarded_by_controllable;
    else
      kind = ClauseKind::guarded_by_uncontrollable;
  }
  out.push_back({f, kind});
}

}  // namespace detail

/// Checks f against the RTL grammar and splits it into top-level clauses.
inline RtlSpec validate_rtl(const Formula& f, const Alphabet& alphabet) {
  detail::check_rtl(f, alphabet);
  RtlSpec spec{f, alphabet.controllable(), alphabet.uncontrollable(), {}};
  detail::collect_conjuncts(f, alphabet, spec.conjuncts);
  return spec;
}

}  // namespace rtlplan
