#pragma once

// RTLPLAN/1 line protocol. The server's first line is the bare version
// string; every later line, in both directions, starts with a sequence number.
//
// client -> server
//   <seq> set <atom> <0|1>
//   <seq> impulse <dx> <dy> <dz>
//   <seq> hold <seconds>
//   <seq> pause | resume | stats
//   <seq> step <task_ticks>          (deterministic mode only)
//
// server -> client
//   <seq> hello name=<s> task_hz=<n> motion_hz=<n> u=<atoms> c=<atoms> B=<names> mode=<realtime|deterministic>
//   <seq> snap t=<t> x=<x,y,z> xd=<x,y,z> u=<val> c=<val> state=<n> beh=<atom|-> B=<b,..|-> V=<v> beta=<b>
//   <seq> event <kind> t=<t> [detail]
//   <seq> ok <client_seq> [key=value ...]
//   <seq> err <client_seq|-> <message>
//
// Server sequence numbers are one counter shared by all connections, so two
// clients see identical broadcast lines.

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sim.hpp"

namespace rtlplan {

inline constexpr const char* protocol_version = "RTLPLAN/1";

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::optional<long> seq, const std::string& msg) : std::runtime_error(msg), seq_(seq) {}
  const std::optional<long>& seq() const { return seq_; }

 private:
  std::optional<long> seq_;
};

enum class Verb { set, impulse, hold, pause, resume, step, stats };

inline const char* to_string(Verb v) {
  switch (v) {
    case Verb::set:
      return "set";
    case Verb::impulse:
      return "impulse";
    case Verb::hold:
      return "hold";
    case Verb::pause:
      return "pause";
    case Verb::resume:
      return "resume";
    case Verb::step:
      return "step";
    case Verb::stats:
      return "stats";
  }
  return "?";
}

struct ClientCommand {
  long seq = 0;
  Verb verb = Verb::stats;
  std::string atom;
  bool value = false;
  Vec3 vec = Vec3::Zero();
  double seconds = 0;
  long count = 0;
};

namespace detail {

inline std::vector<std::string> words(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

inline std::optional<long> parse_long(const std::string& s) {
  if (s.empty() || s.size() > 18) return std::nullopt;
  for (char c : s)
    if (c < '0' || c > '9') return std::nullopt;
  return std::stol(s);
}

inline std::optional<double> parse_finite(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string vec_text(const Vec3& v) { return g17(v[0]) + "," + g17(v[1]) + "," + g17(v[2]); }

}  // namespace detail

/// Syntax only; atom names are checked by validate_command.
inline ClientCommand parse_client_line(const std::string& line) {
  auto w = detail::words(line);
  if (w.empty()) throw ProtocolError(std::nullopt, "empty line");
  auto seq = detail::parse_long(w[0]);
  if (!seq) throw ProtocolError(std::nullopt, "malformed sequence number");
  if (w.size() < 2) throw ProtocolError(seq, "missing verb");
  ClientCommand c;
  c.seq = *seq;
  const std::string& v = w[1];
  auto want = [&](std::size_t n) {
    if (w.size() != n + 2) throw ProtocolError(seq, v + " takes " + std::to_string(n) + " argument(s)");
  };
  auto number = [&](std::size_t i) {
    auto d = detail::parse_finite(w[i]);
    if (!d) throw ProtocolError(seq, "bad number '" + w[i] + "'");
    return *d;
  };
  if (v == "set") {
    want(2);
    c.verb = Verb::set;
    c.atom = w[2];
    if (w[3] == "1" || w[3] == "true")
      c.value = true;
    else if (w[3] == "0" || w[3] == "false")
      c.value = false;
    else
      throw ProtocolError(seq, "bad boolean '" + w[3] + "'");
  } else if (v == "impulse") {
    want(3);
    c.verb = Verb::impulse;
    c.vec = Vec3(number(2), number(3), number(4));
  } else if (v == "hold") {
    want(1);
    c.verb = Verb::hold;
    c.seconds = number(2);
    if (!(c.seconds > 0)) throw ProtocolError(seq, "hold duration must be positive");
  } else if (v == "step") {
    want(1);
    c.verb = Verb::step;
    auto n = detail::parse_long(w[2]);
    if (!n || *n < 1) throw ProtocolError(seq, "bad tick count '" + w[2] + "'");
    c.count = *n;
  } else if (v == "pause" || v == "resume" || v == "stats") {
    want(0);
    c.verb = v == "pause" ? Verb::pause : v == "resume" ? Verb::resume : Verb::stats;
  } else {
    throw ProtocolError(seq, "unknown verb '" + v + "'");
  }
  return c;
}

inline void validate_command(const ClientCommand& c, const Alphabet& a) {
  if (c.verb != Verb::set) return;
  auto i = a.find(c.atom);
  if (!i) throw ProtocolError(c.seq, "unknown atom '" + c.atom + "'");
  if (a[*i].kind != AtomKind::uncontrollable) throw ProtocolError(c.seq, "atom '" + c.atom + "' is controllable");
}

inline std::string format_client_command(const ClientCommand& c) {
  std::string s = std::to_string(c.seq) + " " + to_string(c.verb);
  switch (c.verb) {
    case Verb::set:
      s += " " + c.atom + (c.value ? " 1" : " 0");
      break;
    case Verb::impulse:
      s += " " + detail::g17(c.vec[0]) + " " + detail::g17(c.vec[1]) + " " + detail::g17(c.vec[2]);
      break;
    case Verb::hold:
      s += " " + detail::g17(c.seconds);
      break;
    case Verb::step:
      s += " " + std::to_string(c.count);
      break;
    default:
      break;
  }
  return s;
}

struct Snapshot {
  double t = 0;
  Vec3 x = Vec3::Zero();
  Vec3 xdot_ref = Vec3::Zero();
  std::string sigma_u = "-";
  std::string sigma_c = "-";
  int state = 0;
  std::string behavior = "-";
  std::vector<double> B;
  double V = 0;
  double beta = 1;
};

inline Snapshot make_snapshot(const TraceRecord& r, const Alphabet& a) {
  Snapshot s;
  s.t = r.t;
  s.x = r.x;
  s.xdot_ref = r.xdot_ref;
  s.sigma_u = format_valuation(r.sigma_u, a, a.mask(AtomKind::uncontrollable));
  s.sigma_c = format_valuation(r.applied_c, a, a.mask(AtomKind::controllable));
  s.state = r.state;
  s.behavior = r.behavior < 0 ? "-" : a[r.behavior].name;
  s.B = r.B;
  s.V = r.V;
  s.beta = r.beta;
  return s;
}

inline std::string format_snapshot_body(const Snapshot& s) {
  using detail::g17;
  std::string b;
  for (double v : s.B) b += (b.empty() ? "" : ",") + g17(v);
  if (b.empty()) b = "-";
  return "snap t=" + g17(s.t) + " x=" + detail::vec_text(s.x) + " xd=" + detail::vec_text(s.xdot_ref) +
         " u=" + s.sigma_u + " c=" + s.sigma_c + " state=" + std::to_string(s.state) + " beh=" + s.behavior +
         " B=" + b + " V=" + g17(s.V) + " beta=" + g17(s.beta);
}

enum class ServerKind { hello, snap, event, ok, err };

struct ServerMessage {
  long seq = 0;
  ServerKind kind = ServerKind::ok;
  std::map<std::string, std::string> fields;  // key=value tokens
  std::string word;                           // event kind
  std::optional<long> reply_to;               // ok / err
  std::string text;                           // err message, event detail
  Snapshot snap;
};

namespace detail {

inline Vec3 parse_vec(const std::string& s, long seq) {
  Vec3 v;
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    std::size_t c = s.find(',', start);
    if ((i < 2) != (c != std::string::npos)) throw ProtocolError(seq, "bad vector '" + s + "'");
    auto d = parse_finite(s.substr(start, c == std::string::npos ? std::string::npos : c - start));
    if (!d) throw ProtocolError(seq, "bad vector '" + s + "'");
    v[i] = *d;
    start = c + 1;
  }
  return v;
}

}  // namespace detail

/// Parses one server line (not the version line).
inline ServerMessage parse_server_line(const std::string& line) {
  auto w = detail::words(line);
  if (w.size() < 2) throw ProtocolError(std::nullopt, "short line");
  auto seq = detail::parse_long(w[0]);
  if (!seq) throw ProtocolError(std::nullopt, "malformed sequence number");
  ServerMessage m;
  m.seq = *seq;
  std::size_t first_kv = 2;
  const std::string& k = w[1];
  if (k == "hello") {
    m.kind = ServerKind::hello;
  } else if (k == "snap") {
    m.kind = ServerKind::snap;
  } else if (k == "event") {
    m.kind = ServerKind::event;
    if (w.size() < 3) throw ProtocolError(seq, "event without kind");
    m.word = w[2];
    first_kv = 3;
  } else if (k == "ok" || k == "err") {
    m.kind = k == "ok" ? ServerKind::ok : ServerKind::err;
    if (w.size() < 3) throw ProtocolError(seq, k + " without client sequence");
    if (w[2] != "-") {
      auto r = detail::parse_long(w[2]);
      if (!r) throw ProtocolError(seq, "bad client sequence");
      m.reply_to = *r;
    }
    first_kv = 3;
  } else {
    throw ProtocolError(seq, "unknown message '" + k + "'");
  }
  for (std::size_t i = first_kv; i < w.size(); ++i) {
    auto eq = w[i].find('=');
    if (eq == std::string::npos || m.kind == ServerKind::err) {
      if (!m.text.empty()) m.text += ' ';
      m.text += w[i];
    } else {
      m.fields[w[i].substr(0, eq)] = w[i].substr(eq + 1);
    }
  }
  if (m.kind == ServerKind::snap) {
    auto get = [&](const char* key) -> const std::string& {
      auto it = m.fields.find(key);
      if (it == m.fields.end()) throw ProtocolError(seq, std::string("snapshot without ") + key);
      return it->second;
    };
    auto num = [&](const char* key) {
      auto d = detail::parse_finite(get(key));
      if (!d) throw ProtocolError(seq, std::string("bad ") + key);
      return *d;
    };
    m.snap.t = num("t");
    m.snap.x = detail::parse_vec(get("x"), *seq);
    m.snap.xdot_ref = detail::parse_vec(get("xd"), *seq);
    m.snap.sigma_u = get("u");
    m.snap.sigma_c = get("c");
    auto st = detail::parse_long(get("state"));
    if (!st) throw ProtocolError(seq, "bad state");
    m.snap.state = static_cast<int>(*st);
    m.snap.behavior = get("beh");
    const std::string& b = get("B");
    if (b != "-") {
      std::size_t start = 0;
      for (;;) {
        std::size_t c = b.find(',', start);
        auto d = detail::parse_finite(b.substr(start, c == std::string::npos ? std::string::npos : c - start));
        if (!d) throw ProtocolError(seq, "bad B");
        m.snap.B.push_back(*d);
        if (c == std::string::npos) break;
        start = c + 1;
      }
    }
    m.snap.V = num("V");
    m.snap.beta = num("beta");
  }
  return m;
}

}  // namespace rtlplan
