#include <gtest/gtest.h>

#include <functional>

#include "oracles/ltl_oracle.hpp"
#include "random_gen.hpp"
#include "rtlplan/formula.hpp"

using namespace rtlplan;

namespace {

Alphabet stir_alphabet() {
  Alphabet a;
  a.add("h", AtomKind::uncontrollable);
  a.add("s", AtomKind::controllable);
  a.add("p", AtomKind::controllable);
  return a;
}

Valuation val(std::initializer_list<int> on) {
  Valuation v;
  for (int i : on) v.set(i);
  return v;
}

}  // namespace

TEST(Alphabet, RejectsDuplicatesAcrossKinds) {
  Alphabet a;
  a.add("hot", AtomKind::uncontrollable);
  EXPECT_THROW(a.add("hot", AtomKind::controllable), AlphabetError);
  EXPECT_THROW(a.add("", AtomKind::controllable), AlphabetError);
}

TEST(Alphabet, CaseSensitive) {
  Alphabet a;
  a.add("hot", AtomKind::uncontrollable);
  a.add("Hot", AtomKind::controllable);
  EXPECT_EQ(a.index_of("Hot"), 1);
  EXPECT_EQ(a.mask(AtomKind::controllable), 2u);
}

TEST(Parse, StirSpecification) {
  auto a = stir_alphabet();
  Formula f = parse_formula("G (h -> s) & G (!h -> F p)", a);
  Formula h = Formula::atom(0), s = Formula::atom(1), p = Formula::atom(2);
  Formula want = Formula::conj(Formula::globally(Formula::implies(h, s)),
                               Formula::globally(Formula::implies(Formula::negate(h), Formula::eventually(p))));
  EXPECT_EQ(f, want);
  EXPECT_EQ(to_string(f, a), "G (h -> s) & G (!h -> F p)");
}

TEST(Parse, TrueLiteral) {
  Alphabet a;
  EXPECT_EQ(parse_formula("true", a).op(), Op::True);
  EXPECT_EQ(parse_formula(" ( true ) ", a).op(), Op::True);
}

TEST(Parse, Precedence) {
  auto a = stir_alphabet();
  // & binds tighter than |, which binds tighter than ->; -> and U associate right
  EXPECT_EQ(parse_formula("h | s & p", a), Formula::disj(Formula::atom(0), Formula::conj(Formula::atom(1), Formula::atom(2))));
  EXPECT_EQ(parse_formula("h -> s -> p", a),
            Formula::implies(Formula::atom(0), Formula::implies(Formula::atom(1), Formula::atom(2))));
  EXPECT_EQ(parse_formula("h U s U p", a),
            Formula::until(Formula::atom(0), Formula::until(Formula::atom(1), Formula::atom(2))));
  EXPECT_EQ(parse_formula("!h U s", a), Formula::until(Formula::negate(Formula::atom(0)), Formula::atom(1)));
  EXPECT_EQ(parse_formula("G F p", a), Formula::globally(Formula::eventually(Formula::atom(2))));
}

TEST(Parse, PrintRoundTrip) {
  auto a = stir_alphabet();
  testgen::Rng rng(11);
  for (int k = 0; k < 300; ++k) {
    Formula f = testgen::random_formula(rng, 3, 4);
    std::string text = to_string(f, a);
    EXPECT_EQ(parse_formula(text, a), f) << text;
  }
}

TEST(Parse, Errors) {
  auto a = stir_alphabet();
  EXPECT_THROW(parse_formula("", a), ParseError);
  EXPECT_THROW(parse_formula("   ", a), ParseError);
  try {
    parse_formula("G (h -> q)", a);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.column(), 9u);
    EXPECT_NE(std::string(e.what()).find("undeclared identifier 'q'"), std::string::npos);
  }
  try {
    parse_formula("h & (s | p", a);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.column(), 11u);
  }
  EXPECT_THROW(parse_formula("h s", a), ParseError);
  EXPECT_THROW(parse_formula("h & # s", a), ParseError);
  EXPECT_THROW(parse_formula("G", a), ParseError);
  EXPECT_THROW(parse_formula("h & U", a), ParseError);
}

TEST(Parse, KeywordPrefixedIdentifiers) {
  Alphabet a;
  a.add("Go", AtomKind::controllable);
  a.add("Up", AtomKind::controllable);
  a.add("trueish", AtomKind::controllable);
  EXPECT_EQ(parse_formula("Go U Up", a), Formula::until(Formula::atom(0), Formula::atom(1)));
  EXPECT_EQ(parse_formula("trueish", a), Formula::atom(2));
  EXPECT_THROW(parse_formula("GGo", a), ParseError);
  EXPECT_EQ(parse_formula("G Go", a), Formula::globally(Formula::atom(0)));
  EXPECT_EQ(parse_formula("G(Go)", a), Formula::globally(Formula::atom(0)));
}

TEST(Desugar, CoreOperatorsOnly) {
  auto a = stir_alphabet();
  Formula d = desugar(parse_formula("G (h -> s) & G (!h -> F p) | (s U p)", a));
  std::function<void(const Formula&)> walk = [&](const Formula& f) {
    switch (f.op()) {
      case Op::True:
      case Op::Atom:
        return;
      case Op::Not:
        walk(f.lhs());
        return;
      case Op::And:
      case Op::Until:
        walk(f.lhs());
        walk(f.rhs());
        return;
      default:
        ADD_FAILURE() << "non-core operator survived desugaring";
    }
  };
  walk(d);
}

TEST(Desugar, EventuallyIsTrueUntil) {
  auto a = stir_alphabet();
  EXPECT_EQ(desugar(parse_formula("F p", a)), Formula::until(Formula::truth(), Formula::atom(2)));
  testgen::Rng rng(3);
  Formula fp = parse_formula("F p", a);
  Formula tup = parse_formula("true U p", a);
  for (int k = 0; k < 100; ++k) {
    auto w = testgen::random_lasso(rng, 3);
    EXPECT_EQ(oracle::bounded_eval(fp, w), oracle::bounded_eval(tup, w));
    EXPECT_EQ(eval_lasso(fp, w), eval_lasso(tup, w));
  }
}

TEST(Desugar, IdempotentAndSemanticsPreserving) {
  testgen::Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    Formula f = testgen::random_formula(rng, 3, 3);
    Formula d = desugar(f);
    EXPECT_EQ(desugar(d), d);
    for (int j = 0; j < 10; ++j) {
      auto w = testgen::random_lasso(rng, 3);
      EXPECT_EQ(eval_lasso(f, w), eval_lasso(d, w));
    }
  }
}

TEST(EvalLasso, Basics) {
  Alphabet a;
  a.add("p", AtomKind::controllable);
  Formula gp = parse_formula("G p", a);
  Formula gfp = parse_formula("G F p", a);
  LassoWord always{{}, {val({0})}};
  LassoWord blink{{}, {val({}), val({0})}};
  EXPECT_TRUE(eval_lasso(Formula::truth(), blink));
  EXPECT_TRUE(eval_lasso(gp, always));
  EXPECT_FALSE(eval_lasso(gp, blink));
  EXPECT_TRUE(eval_lasso(gfp, blink));
  EXPECT_TRUE(eval_lasso(gp, blink, 1) == false);
  LassoWord settle{{val({}), val({})}, {val({0})}};
  EXPECT_FALSE(eval_lasso(gp, settle, 0));
  EXPECT_TRUE(eval_lasso(gp, settle, 2));
  EXPECT_TRUE(eval_lasso(parse_formula("F G p", a), settle));
}

TEST(EvalLasso, PreconditionViolations) {
  LassoWord empty{{val({})}, {}};
  EXPECT_THROW(eval_lasso(Formula::truth(), empty), std::invalid_argument);
  LassoWord w{{}, {val({})}};
  EXPECT_THROW(eval_lasso(Formula::truth(), w, 1), std::out_of_range);
}

TEST(EvalLasso, AgreesWithBoundedUnrolling) {
  testgen::Rng rng(17);
  for (int k = 0; k < 400; ++k) {
    Formula f = testgen::random_formula(rng, 3, 3);
    auto w = testgen::random_lasso(rng, 3);
    for (std::size_t t = 0; t < w.size(); ++t) ASSERT_EQ(eval_lasso(f, w, t), oracle::bounded_eval(f, w, t));
  }
}

TEST(EvalLasso, NegationFlipsVerdict) {
  testgen::Rng rng(19);
  for (int k = 0; k < 300; ++k) {
    Formula f = testgen::random_formula(rng, 3, 3);
    auto w = testgen::random_lasso(rng, 3);
    EXPECT_NE(eval_lasso(Formula::negate(f), w), eval_lasso(f, w));
  }
}

TEST(EvalLasso, EventuallyWitnessWithinTwoCycles) {
  testgen::Rng rng(23);
  for (int k = 0; k < 300; ++k) {
    Formula g = testgen::random_formula(rng, 3, 2);
    auto w = testgen::random_lasso(rng, 3);
    for (std::size_t t = 0; t < w.size(); ++t) {
      bool found = false;
      const std::size_t end = w.prefix.size() + 2 * w.cycle.size();
      for (std::size_t u = t; u < std::max(end, t + 1) && !found; ++u) {
        std::size_t cu = u < w.prefix.size() ? u : w.prefix.size() + (u - w.prefix.size()) % w.cycle.size();
        found = eval_lasso(g, w, cu);
      }
      EXPECT_EQ(eval_lasso(Formula::eventually(g), w, t), found);
    }
  }
}

TEST(Rtl, StirSpecificationAccepted) {
  auto a = stir_alphabet();
  auto spec = validate_rtl(parse_formula("G (h -> s) & G (!h -> F p)", a), a);
  ASSERT_EQ(spec.conjuncts.size(), 2u);
  EXPECT_EQ(spec.conjuncts[0].kind, ClauseKind::guarded_by_uncontrollable);
  EXPECT_EQ(spec.conjuncts[1].kind, ClauseKind::guarded_by_uncontrollable);
  EXPECT_EQ(spec.alphabet_c, (std::vector<int>{1, 2}));
  EXPECT_EQ(spec.alphabet_u, (std::vector<int>{0}));
}

TEST(Rtl, UncontrollableConsequentRejected) {
  auto a = stir_alphabet();
  try {
    validate_rtl(parse_formula("G (s -> h)", a), a);
    FAIL();
  } catch (const RtlError& e) {
    EXPECT_EQ(e.offending(), "h");
  }
  EXPECT_THROW(validate_rtl(parse_formula("G (h -> s) & G (s -> h)", a), a), RtlError);
  EXPECT_THROW(validate_rtl(parse_formula("h", a), a), RtlError);
  EXPECT_THROW(validate_rtl(parse_formula("G (h & s -> p)", a), a), RtlError);
  EXPECT_THROW(validate_rtl(parse_formula("F (h -> s)", a), a), RtlError);
  EXPECT_THROW(validate_rtl(parse_formula("G (h -> s | h)", a), a), RtlError);
}

TEST(Rtl, PureControllableAccepted) {
  auto a = stir_alphabet();
  auto spec = validate_rtl(parse_formula("G s", a), a);
  ASSERT_EQ(spec.conjuncts.size(), 1u);
  EXPECT_EQ(spec.conjuncts[0].kind, ClauseKind::controllable);
}

TEST(Rtl, NestedAndControllableGuards) {
  auto a = stir_alphabet();
  auto spec = validate_rtl(parse_formula("G (h -> G (s -> F p)) & G (F s -> (h -> p))", a), a);
  ASSERT_EQ(spec.conjuncts.size(), 2u);
  EXPECT_EQ(spec.conjuncts[0].kind, ClauseKind::guarded_by_uncontrollable);
  EXPECT_EQ(spec.conjuncts[1].kind, ClauseKind::guarded_by_controllable);
}

TEST(Rtl, CaseStudySpecificationsAccepted) {
  Alphabet wb;
  for (auto n : {"eraser", "stain", "left", "right"}) wb.add(n, AtomKind::uncontrollable);
  for (auto n : {"w_left", "w_right", "w_stain", "s_p", "e_p"}) wb.add(n, AtomKind::controllable);
  // as printed, including the two clauses without an outer G
  auto printed = validate_rtl(parse_formula("G ((eraser & left & !stain) -> w_left) & "
                                            "G ((eraser & right & !stain) -> w_right) & "
                                            "((eraser & stain) -> s_p) & (!eraser -> e_p) & "
                                            "G ((eraser & stain) -> (s_p U w_stain))",
                                            wb),
                              wb);
  ASSERT_EQ(printed.conjuncts.size(), 5u);
  EXPECT_EQ(printed.conjuncts[2].kind, ClauseKind::initial_reaction);
  EXPECT_EQ(printed.conjuncts[3].kind, ClauseKind::initial_reaction);

  Alphabet mq;
  for (auto n : {"leg", "hand", "back", "wet", "human"}) mq.add(n, AtomKind::uncontrollable);
  for (auto n : {"w_leg", "w_hand", "w_back", "d_p", "b_p"}) mq.add(n, AtomKind::controllable);
  auto m = validate_rtl(parse_formula("G ((wet & leg & !back) -> w_leg) & G ((wet & hand & !back) -> w_hand) & "
                                      "G ((wet & back) -> w_back) & G (!wet -> d_p) & "
                                      "G ((human & wet) -> b_p) & G ((!human & wet) -> true)",
                                      mq),
                        mq);
  EXPECT_EQ(m.conjuncts.size(), 6u);
}

TEST(Rtl, Classify) {
  auto a = stir_alphabet();
  EXPECT_EQ(classify(parse_formula("true", a), a), FormulaClass::constant);
  EXPECT_EQ(classify(parse_formula("F p", a), a), FormulaClass::controllable);
  EXPECT_EQ(classify(parse_formula("G !h", a), a), FormulaClass::uncontrollable);
  EXPECT_EQ(classify(parse_formula("h -> p", a), a), FormulaClass::mixed);
}
