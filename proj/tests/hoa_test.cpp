#include <gtest/gtest.h>

#include "random_gen.hpp"
#include "rtlplan/hoa.hpp"

using namespace rtlplan;

namespace {

const char* kTrueLoop =
    "HOA: v1\n"
    "States: 1\n"
    "Start: 0\n"
    "AP: 1 \"p\"\n"
    "acc-name: Buchi\n"
    "Acceptance: 1 Inf(0)\n"
    "properties: trans-labels explicit-labels state-acc\n"
    "--BODY--\n"
    "State: 0 {0}\n"
    "[t] 0\n"
    "--END--\n";

int error_line(const std::string& text) {
  try {
    parse_hoa(text);
  } catch (const HoaError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST(Hoa, TrueLoopRoundTripsBitExact) {
  auto a = parse_hoa(kTrueLoop);
  EXPECT_EQ(a.num_states(), 1);
  EXPECT_EQ(print_hoa(a), kTrueLoop);
}

TEST(Hoa, GoldenStirEmission) {
  Alphabet al;
  al.add("h", AtomKind::uncontrollable);
  al.add("s", AtomKind::controllable);
  al.add("p", AtomKind::controllable);
  BuchiAutomaton a;
  a.ap = al.names();
  a.accepting = {1, 0};
  a.out = {{{parse_formula("h & s | !h & p", al), 0}, {parse_formula("!h & !p", al), 1}},
           {{parse_formula("(h | !h) & p", al), 0}, {parse_formula("!(p | false)", al), 1}}};
  EXPECT_EQ(print_hoa(a, "stir"),
            "HOA: v1\n"
            "name: \"stir\"\n"
            "States: 2\n"
            "Start: 0\n"
            "AP: 3 \"h\" \"s\" \"p\"\n"
            "acc-name: Buchi\n"
            "Acceptance: 1 Inf(0)\n"
            "properties: trans-labels explicit-labels state-acc\n"
            "--BODY--\n"
            "State: 0 {0}\n"
            "[0&1 | !0&2] 0\n"
            "[!0&!2] 1\n"
            "State: 1\n"
            "[(0 | !0)&2] 0\n"
            "[!(2 | f)] 1\n"
            "--END--\n");
}

TEST(Hoa, CommentsNamesAndBlankLines) {
  auto a = parse_hoa(
      "HOA: v1 /* header */\n"
      "tool: \"x\"\n"
      "States: 2\nStart: 1\nAP: 2 \"a\" \"b\\\"q\"\n"
      "Acceptance: 1 Inf(0)\n--BODY--\n\n"
      "State: 0 \"zero\" {0}\n[0 & !1] 1\n"
      "State: 1 /* no marks */\n[t] 0\n[f] 1\n--END--\n");
  EXPECT_EQ(a.initial, 1);
  EXPECT_EQ(a.ap[1], "b\"q");
  EXPECT_EQ(a.accepting, (std::vector<char>{1, 0}));
  EXPECT_EQ(a.num_edges(), 3u);
}

TEST(Hoa, Errors) {
  std::string body = "--BODY--\nState: 0 {0}\n[t] 0\n--END--\n";
  std::string head = "HOA: v1\nStates: 1\nStart: 0\nAP: 1 \"p\"\n";
  EXPECT_EQ(error_line("HOA: v2\n"), 1);
  EXPECT_EQ(error_line(head + "Acceptance: 2 Inf(0)&Inf(1)\n" + body), 5);
  EXPECT_EQ(error_line(head + "acc-name: generalized-Buchi 2\nAcceptance: 1 Inf(0)\n" + body), 5);
  EXPECT_EQ(error_line(head + "Acceptance: 1 Inf(0)\n--BODY--\nState: 0\n[0 & ] 0\n--END--\n"), 8);
  EXPECT_EQ(error_line(head + "Acceptance: 1 Inf(0)\n--BODY--\nState: 0\n[3] 0\n--END--\n"), 8);
  EXPECT_EQ(error_line(head + "Acceptance: 1 Inf(0)\n--BODY--\nState: 0\n[t] 4\n--END--\n"), 8);
  EXPECT_EQ(error_line(head + "Acceptance: 1 Inf(0)\n--BODY--\nState: 0\n[t] 0 {0}\n--END--\n"), 8);
  EXPECT_EQ(error_line(head + "Acceptance: 1 Inf(0)\n--BODY--\nState: 0\n0\n--END--\n"), 8);
  EXPECT_EQ(error_line(head + "Acceptance: 1 Inf(0)\n--BODY--\nState: 0\n[t] 0\n"), 8);
  EXPECT_EQ(error_line("HOA: v1\nStates: 1\nStart: 0\nStart: 0\n"), 4);
  EXPECT_EQ(error_line(head + "--BODY--\n"), 5);
  EXPECT_EQ(error_line("HOA: v1\nStates 1\n"), 2);
}

TEST(Hoa, RoundTripTranslatedFormulas) {
  testgen::Rng rng(53);
  std::vector<std::string> ap{"a", "b", "c"};
  for (int k = 0; k < 50; ++k) {
    Formula f = testgen::random_formula(rng, 3, 3);
    auto b = translate(f, ap);
    std::string text = print_hoa(b);
    auto back = parse_hoa(text);
    EXPECT_EQ(back.num_states(), b.num_states());
    EXPECT_EQ(back.num_edges(), b.num_edges());
    EXPECT_EQ(print_hoa(back), text);
    for (int j = 0; j < 40; ++j) {
      auto w = testgen::random_lasso(rng, 3);
      ASSERT_EQ(accepts_lasso(back, w), accepts_lasso(b, w));
    }
  }
}
