#pragma once

// HOA v1 reader and writer for state-based Büchi automata with explicit labels.

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "automaton.hpp"

namespace rtlplan {

class HoaError : public std::runtime_error {
 public:
  HoaError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline void print_label(const Formula& f, std::string& out, int parent_prec) {
  // | binds looser than &, which binds looser than !
  auto wrap = [&](int prec, auto&& body) {
    if (prec < parent_prec) out += '(';
    body();
    if (prec < parent_prec) out += ')';
  };
  switch (f.op()) {
    case Op::True:
      out += 't';
      return;
    case Op::Atom:
      out += std::to_string(f.atom_index());
      return;
    case Op::Not:
      if (f.lhs().op() == Op::True) {
        out += 'f';
        return;
      }
      out += '!';
      print_label(f.lhs(), out, 3);
      return;
    case Op::And:
      wrap(2, [&] {
        print_label(f.lhs(), out, 2);
        out += '&';
        print_label(f.rhs(), out, 2);
      });
      return;
    case Op::Or:
      wrap(1, [&] {
        print_label(f.lhs(), out, 1);
        out += " | ";
        print_label(f.rhs(), out, 1);
      });
      return;
    case Op::Implies:
      print_label(Formula::disj(Formula::negate(f.lhs()), f.rhs()), out, parent_prec);
      return;
    default:
      throw std::invalid_argument("temporal operator in edge guard");
  }
}

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

class HoaLexer {
 public:
  HoaLexer(std::string_view text, int line, int num_ap) : text_(text), line_(line), num_ap_(num_ap) {}

  Formula parse_label() {
    Formula f = parse_or();
    skip();
    if (pos_ < text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "' in label");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& m) const { throw HoaError(line_, m); }
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  Formula parse_or() {
    Formula f = parse_and();
    while (accept('|')) f = Formula::disj(f, parse_and());
    return f;
  }
  Formula parse_and() {
    Formula f = parse_not();
    while (accept('&')) f = Formula::conj(f, parse_not());
    return f;
  }
  Formula parse_not() {
    if (accept('!')) return Formula::negate(parse_not());
    if (accept('(')) {
      Formula f = parse_or();
      if (!accept(')')) fail("expected ')' in label");
      return f;
    }
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of label");
    char c = text_[pos_];
    if (c == 't') {
      ++pos_;
      return Formula::truth();
    }
    if (c == 'f') {
      ++pos_;
      return Formula::falsity();
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      int v = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        v = v * 10 + (text_[pos_++] - '0');
      if (v >= num_ap_) fail("proposition index " + std::to_string(v) + " out of range");
      return Formula::atom(v);
    }
    if (c == '@') fail("label aliases are not supported");
    fail("unexpected '" + std::string(1, c) + "' in label");
  }

  std::string_view text_;
  int line_;
  int num_ap_;
  std::size_t pos_ = 0;
};

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline int parse_int(const std::string& s, int line, const char* what) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    throw HoaError(line, std::string("expected a number for ") + what + ", got '" + s + "'");
  return std::stoi(s);
}

}  // namespace detail

/// Emits HOA v1. States keep their numbering, so parse(print(a)) == a.
inline std::string print_hoa(const BuchiAutomaton& a, const std::string& name = "") {
  std::string out = "HOA: v1\n";
  if (!name.empty()) out += "name: " + detail::quote(name) + "\n";
  out += "States: " + std::to_string(a.num_states()) + "\n";
  out += "Start: " + std::to_string(a.initial) + "\n";
  out += "AP: " + std::to_string(a.ap.size());
  for (const auto& p : a.ap) out += " " + detail::quote(p);
  out += "\nacc-name: Buchi\nAcceptance: 1 Inf(0)\nproperties: trans-labels explicit-labels state-acc\n--BODY--\n";
  for (int s = 0; s < a.num_states(); ++s) {
    out += "State: " + std::to_string(s);
    if (a.accepting[static_cast<std::size_t>(s)]) out += " {0}";
    out += '\n';
    for (const auto& t : a.out[static_cast<std::size_t>(s)]) {
      out += '[';
      detail::print_label(t.guard, out, 0);
      out += "] " + std::to_string(t.target) + '\n';
    }
  }
  out += "--END--\n";
  return out;
}

/// Reads HOA v1 with state-based Büchi acceptance and explicit edge labels.
inline BuchiAutomaton parse_hoa(std::string_view text) {
  // strip /* */ comments, keeping newlines so line numbers stay right
  std::string clean;
  clean.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text.substr(i, 2) == "/*") {
      std::size_t end = text.find("*/", i + 2);
      if (end == std::string_view::npos) end = text.size();
      for (std::size_t j = i; j < end && j < text.size(); ++j)
        if (text[j] == '\n') clean += '\n';
      i = end + 1;
      continue;
    }
    clean += text[i];
  }

  std::vector<std::string> lines;
  {
    std::istringstream is(clean);
    std::string l;
    while (std::getline(is, l)) lines.push_back(l);
  }

  BuchiAutomaton a;
  int states = -1;
  int start = -1;
  bool have_ap = false, have_acc = false, saw_version = false;
  std::size_t i = 0;
  for (; i < lines.size(); ++i) {
    int ln = static_cast<int>(i) + 1;
    std::string l = detail::trim(lines[i]);
    if (l.empty()) continue;
    if (l == "--BODY--") break;
    auto colon = l.find(':');
    if (colon == std::string::npos) throw HoaError(ln, "malformed header line '" + l + "'");
    std::string key = l.substr(0, colon);
    std::string val = detail::trim(std::string_view(l).substr(colon + 1));
    if (!saw_version) {
      if (key != "HOA" || val != "v1") throw HoaError(ln, "expected 'HOA: v1'");
      saw_version = true;
    } else if (key == "States") {
      states = detail::parse_int(val, ln, "States");
    } else if (key == "Start") {
      if (start != -1) throw HoaError(ln, "multiple initial states are not supported");
      if (val.find('&') != std::string::npos) throw HoaError(ln, "alternating automata are not supported");
      start = detail::parse_int(val, ln, "Start");
    } else if (key == "AP") {
      std::istringstream is(val);
      int n = 0;
      if (!(is >> n) || n < 0) throw HoaError(ln, "malformed AP count");
      for (int k = 0; k < n; ++k) {
        is >> std::ws;
        if (is.get() != '"') throw HoaError(ln, "expected quoted proposition name");
        std::string name;
        int c;
        while ((c = is.get()) != EOF && c != '"') {
          if (c == '\\') c = is.get();
          if (c == EOF) break;
          name += static_cast<char>(c);
        }
        if (c != '"') throw HoaError(ln, "unterminated proposition name");
        a.ap.push_back(name);
      }
      is >> std::ws;
      if (!is.eof()) throw HoaError(ln, "AP count does not match the names given");
      have_ap = true;
    } else if (key == "Acceptance") {
      std::string compact;
      for (char c : val)
        if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
      if (compact != "1Inf(0)") throw HoaError(ln, "unsupported acceptance condition '" + val + "'");
      have_acc = true;
    } else if (key == "acc-name") {
      if (val != "Buchi") throw HoaError(ln, "unsupported acceptance name '" + val + "'");
    }
    // name, tool, properties and unknown headers are ignored
  }
  if (!saw_version) throw HoaError(1, "missing 'HOA: v1' header");
  if (i >= lines.size()) throw HoaError(static_cast<int>(lines.size()), "missing --BODY--");
  if (!have_acc) throw HoaError(static_cast<int>(i) + 1, "missing Acceptance header");
  if (!have_ap) throw HoaError(static_cast<int>(i) + 1, "missing AP header");
  if (start < 0) throw HoaError(static_cast<int>(i) + 1, "missing Start header");

  int cur = -1;
  int max_state = std::max(states, start + 1);
  std::vector<std::vector<Transition>> out;
  std::vector<char> acc;
  auto ensure = [&](int s) {
    if (static_cast<int>(out.size()) <= s) {
      out.resize(static_cast<std::size_t>(s) + 1);
      acc.resize(static_cast<std::size_t>(s) + 1, 0);
    }
  };
  bool ended = false;
  for (++i; i < lines.size(); ++i) {
    int ln = static_cast<int>(i) + 1;
    std::string l = detail::trim(lines[i]);
    if (l.empty()) continue;
    if (l == "--END--") {
      ended = true;
      break;
    }
    if (l.rfind("State:", 0) == 0) {
      std::string rest = detail::trim(std::string_view(l).substr(6));
      if (!rest.empty() && rest[0] == '[') throw HoaError(ln, "state labels are not supported");
      std::size_t p = 0;
      while (p < rest.size() && std::isdigit(static_cast<unsigned char>(rest[p]))) ++p;
      cur = detail::parse_int(rest.substr(0, p), ln, "state id");
      if (states >= 0 && cur >= states) throw HoaError(ln, "state " + std::to_string(cur) + " out of range");
      ensure(cur);
      std::string tail = detail::trim(std::string_view(rest).substr(p));
      if (!tail.empty() && tail[0] == '"') {
        auto q = tail.find('"', 1);
        if (q == std::string::npos) throw HoaError(ln, "unterminated state name");
        tail = detail::trim(std::string_view(tail).substr(q + 1));
      }
      if (!tail.empty()) {
        if (tail == "{0}")
          acc[static_cast<std::size_t>(cur)] = 1;
        else if (tail != "{}")
          throw HoaError(ln, "unsupported acceptance marks '" + tail + "'");
      }
      continue;
    }
    if (cur < 0) throw HoaError(ln, "edge before any State: line");
    if (l[0] != '[') throw HoaError(ln, "implicit labels are not supported");
    auto close = l.find(']');
    if (close == std::string::npos) throw HoaError(ln, "unterminated label");
    Formula guard = detail::HoaLexer(std::string_view(l).substr(1, close - 1), ln, static_cast<int>(a.ap.size()))
                        .parse_label();
    std::string rest = detail::trim(std::string_view(l).substr(close + 1));
    std::size_t p = 0;
    while (p < rest.size() && std::isdigit(static_cast<unsigned char>(rest[p]))) ++p;
    int dst = detail::parse_int(rest.substr(0, p), ln, "edge target");
    std::string tail = detail::trim(std::string_view(rest).substr(p));
    if (!tail.empty()) {
      if (tail[0] == '&') throw HoaError(ln, "alternating automata are not supported");
      if (tail[0] == '{') throw HoaError(ln, "transition-based acceptance is not supported");
      throw HoaError(ln, "unexpected '" + tail + "' after edge target");
    }
    if (states >= 0 && dst >= states) throw HoaError(ln, "edge target " + std::to_string(dst) + " out of range");
    ensure(dst);
    out[static_cast<std::size_t>(cur)].push_back({guard, dst});
  }
  if (!ended) throw HoaError(static_cast<int>(lines.size()), "missing --END--");
  if (max_state > 0) ensure(max_state - 1);
  a.out = std::move(out);
  a.accepting = std::move(acc);
  a.initial = start;
  a.check();
  return a;
}

}  // namespace rtlplan
