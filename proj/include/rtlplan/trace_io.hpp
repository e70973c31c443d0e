#pragma once

// Trace CSV. Three comment lines, a column header, then one row per motion
// tick:
//
//   # rtlplan-trace v1
//   # task_hz=200
//   # motion_hz=1000
//   t,x,y,z,xd,yd,zd,sensed_c,applied_c,sigma_u,state,behavior,task_tick,...
//
// Valuations are atom names joined by '|' ('-' when empty). Numbers use
// round-trip precision; absent reach columns are written as "nan".

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sim.hpp"

namespace rtlplan {

class TraceError : public std::runtime_error {
 public:
  TraceError(long line, std::string column, const std::string& msg)
      : std::runtime_error("trace line " + std::to_string(line) + (column.empty() ? "" : ", column " + column) +
                           ": " + msg),
        line_(line),
        column_(std::move(column)) {}
  long line() const { return line_; }
  const std::string& column() const { return column_; }

 private:
  long line_;
  std::string column_;
};

inline const std::vector<std::string>& trace_fixed_columns() {
  static const std::vector<std::string> cols = {
      "t",     "x",       "y",         "z",         "xd", "yd",  "zd",   "sensed_c", "applied_c",
      "sigma_u", "state", "behavior", "task_tick", "replanned", "recovered", "V", "eta", "beta", "qp",
      "reach_B", "reach_deadline"};
  return cols;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t c = line.find(',', start);
    out.push_back(line.substr(start, c == std::string::npos ? std::string::npos : c - start));
    if (c == std::string::npos) break;
    start = c + 1;
  }
  return out;
}

inline QpStatus parse_qp_status(const std::string& s) {
  for (QpStatus q : {QpStatus::optimal, QpStatus::infeasible, QpStatus::max_iter})
    if (s == to_string(q)) return q;
  throw std::invalid_argument("unknown QP status");
}

}  // namespace detail

inline std::string trace_header_line(const Trace& tr) {
  std::string h;
  for (const auto& c : trace_fixed_columns()) h += (h.empty() ? "" : ",") + c;
  for (const auto& b : tr.barrier_names) h += ",B:" + b;
  return h;
}

inline std::string format_trace_row(const TraceRecord& r, const Alphabet& a) {
  using detail::fmt_double;
  const std::uint64_t cm = a.mask(AtomKind::controllable), um = a.mask(AtomKind::uncontrollable);
  std::string s;
  s.reserve(256);
  s += fmt_double(r.t);
  for (int i = 0; i < 3; ++i) s += "," + fmt_double(r.x[i]);
  for (int i = 0; i < 3; ++i) s += "," + fmt_double(r.xdot_ref[i]);
  s += "," + format_valuation(r.sensed_c, a, cm);
  s += "," + format_valuation(r.applied_c, a, cm);
  s += "," + format_valuation(r.sigma_u, a, um);
  s += "," + std::to_string(r.state);
  s += "," + (r.behavior < 0 ? std::string("-") : a[r.behavior].name);
  s += r.task_tick ? ",1" : ",0";
  s += r.replanned ? ",1" : ",0";
  s += r.recovered ? ",1" : ",0";
  s += "," + fmt_double(r.V) + "," + fmt_double(r.eta) + "," + fmt_double(r.beta);
  s += std::string(",") + to_string(r.qp);
  s += "," + fmt_double(r.reach_B) + "," + fmt_double(r.reach_deadline);
  for (double b : r.B) s += "," + fmt_double(b);
  return s;
}

inline void write_trace(std::ostream& os, const Trace& tr, const Alphabet& a) {
  os << "# rtlplan-trace v1\n# task_hz=" << tr.task_hz << "\n# motion_hz=" << tr.motion_hz << "\n"
     << trace_header_line(tr) << "\n";
  for (const auto& r : tr.records) os << format_trace_row(r, a) << "\n";
}

/// Inverse of write_trace. Throws TraceError naming the line and column.
inline Trace read_trace(std::istream& is, const Alphabet& a) {
  Trace tr;
  std::string line;
  long ln = 0;
  auto next = [&]() {
    if (!std::getline(is, line)) throw TraceError(ln + 1, "", "unexpected end of file");
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  auto header_int = [&](const std::string& key) {
    next();
    const std::string pre = "# " + key + "=";
    if (line.rfind(pre, 0) != 0) throw TraceError(ln, "", "expected '" + pre + "'");
    try {
      std::size_t used = 0;
      int v = std::stoi(line.substr(pre.size()), &used);
      if (v <= 0 || used != line.size() - pre.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw TraceError(ln, "", "bad value for " + key);
    }
  };
  next();
  if (line != "# rtlplan-trace v1") throw TraceError(ln, "", "not an rtlplan trace (v1)");
  tr.task_hz = header_int("task_hz");
  tr.motion_hz = header_int("motion_hz");
  next();
  auto cols = detail::split_csv(line);
  const auto& fixed = trace_fixed_columns();
  if (cols.size() < fixed.size()) throw TraceError(ln, "", "too few columns in header");
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (cols[i] != fixed[i]) throw TraceError(ln, cols[i], "expected column '" + fixed[i] + "'");
  for (std::size_t i = fixed.size(); i < cols.size(); ++i) {
    if (cols[i].rfind("B:", 0) != 0 || cols[i].size() < 3) throw TraceError(ln, cols[i], "expected 'B:<name>'");
    tr.barrier_names.push_back(cols[i].substr(2));
  }

  const std::uint64_t cm = a.mask(AtomKind::controllable), um = a.mask(AtomKind::uncontrollable);
  while (std::getline(is, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    if (f.size() != cols.size())
      throw TraceError(ln, "", "expected " + std::to_string(cols.size()) + " fields, got " + std::to_string(f.size()));
    std::size_t i = 0;
    auto num = [&]() {
      const std::string& s = f[i];
      try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("");
        ++i;
        return v;
      } catch (const std::exception&) {
        throw TraceError(ln, cols[i], "expected a number, got '" + s + "'");
      }
    };
    auto flag = [&]() {
      if (f[i] != "0" && f[i] != "1") throw TraceError(ln, cols[i], "expected 0 or 1");
      return f[i++] == "1";
    };
    auto val = [&](std::uint64_t mask) {
      try {
        Valuation v = parse_valuation(f[i], a);
        if (v.restricted(mask) != v) throw AlphabetError("atom of the wrong kind");
        ++i;
        return v;
      } catch (const AlphabetError& e) {
        throw TraceError(ln, cols[i], e.what());
      }
    };
    TraceRecord r;
    r.t = num();
    for (int k = 0; k < 3; ++k) r.x[k] = num();
    for (int k = 0; k < 3; ++k) r.xdot_ref[k] = num();
    r.sensed_c = val(cm);
    r.applied_c = val(cm);
    r.sigma_u = val(um);
    double st = num();
    if (st < 0 || st != static_cast<int>(st)) throw TraceError(ln, cols[i - 1], "expected a state index");
    r.state = static_cast<int>(st);
    if (f[i] == "-") {
      r.behavior = -1;
    } else {
      auto idx = a.find(f[i]);
      if (!idx || a[*idx].kind != AtomKind::controllable)
        throw TraceError(ln, cols[i], "unknown behavior '" + f[i] + "'");
      r.behavior = *idx;
    }
    ++i;
    r.task_tick = flag();
    r.replanned = flag();
    r.recovered = flag();
    r.V = num();
    r.eta = num();
    r.beta = num();
    try {
      r.qp = detail::parse_qp_status(f[i]);
    } catch (const std::invalid_argument& e) {
      throw TraceError(ln, cols[i], e.what());
    }
    ++i;
    r.reach_B = num();
    r.reach_deadline = num();
    while (i < f.size()) r.B.push_back(num());
    if (!tr.records.empty() && !(r.t > tr.records.back().t)) throw TraceError(ln, "t", "time must increase");
    tr.records.push_back(std::move(r));
  }
  return tr;
}

}  // namespace rtlplan
