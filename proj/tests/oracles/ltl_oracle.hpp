#pragma once

// Test-only LTL semantics by direct scanning over a bounded unrolling.
// Position i of the infinite word is folded to its canonical index in the
// lasso; temporal operators scan forward until the horizon prefix + 4*cycle.

#include <map>
#include <utility>

#include "rtlplan/formula.hpp"

namespace oracle {

class BoundedLtl {
 public:
  explicit BoundedLtl(const rtlplan::LassoWord& w) : w_(w) {
    horizon_ = w.prefix.size() + 4 * w.cycle.size();
  }

  bool at(const rtlplan::Formula& f, std::size_t i) {
    using rtlplan::Op;
    i = canon(i);
    switch (f.op()) {
      case Op::True:
        return true;
      case Op::Atom:
        return w_.at(i).test(f.atom_index());
      case Op::Not:
        return !at(f.lhs(), i);
      case Op::And:
        return at(f.lhs(), i) && at(f.rhs(), i);
      case Op::Or:
        return at(f.lhs(), i) || at(f.rhs(), i);
      case Op::Implies:
        return !at(f.lhs(), i) || at(f.rhs(), i);
      case Op::Eventually:
        for (std::size_t j = i; j < i + horizon_; ++j)
          if (at(f.lhs(), j)) return true;
        return false;
      case Op::Globally:
        for (std::size_t j = i; j < i + horizon_; ++j)
          if (!at(f.lhs(), j)) return false;
        return true;
      case Op::Until:
        for (std::size_t j = i; j < i + horizon_; ++j) {
          if (at(f.rhs(), j)) return true;
          if (!at(f.lhs(), j)) return false;
        }
        return false;
    }
    return false;
  }

 private:
  std::size_t canon(std::size_t i) const {
    const std::size_t p = w_.prefix.size(), c = w_.cycle.size();
    return i < p ? i : p + (i - p) % c;
  }

  const rtlplan::LassoWord& w_;
  std::size_t horizon_;
};

inline bool bounded_eval(const rtlplan::Formula& f, const rtlplan::LassoWord& w, std::size_t t = 0) {
  BoundedLtl o(w);
  return o.at(f, t);
}

}  // namespace oracle
