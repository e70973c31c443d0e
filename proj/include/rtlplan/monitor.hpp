#pragma once

// Offline checks over a recorded trace: automaton replay of the applied
// valuation stream, reach-task satisfaction, barrier minima and Lyapunov
// recovery after impulses. Everything here is a pure function of its inputs.
//
// Acceptance on a finite trace is approximated: the replay must never empty
// and an accepting state must be reachable at least once between consecutive
// changes of sigma_u, and again within the final 2*|states| task ticks.

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "sim.hpp"

namespace rtlplan {

class MonitorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReachCheck {
  bool satisfied = false;
  double t_satisfied = std::numeric_limits<double>::quiet_NaN();
  double margin = 0;  // epsilon - min distance over the window
};

/// F_[a,b] ||x - target|| <= eps over the trace samples in [a, b].
inline ReachCheck check_reach(const Trace& tr, const Vec3& target, double eps, double a, double b) {
  if (tr.records.empty()) throw MonitorError("window error: empty trace");
  const double t0 = tr.records.front().t, t1 = tr.records.back().t;
  if (a > b || a < t0 - 1e-12 || b > t1 + 1e-12) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "window error: [%.6g, %.6g] not covered by trace [%.6g, %.6g]", a, b, t0, t1);
    throw MonitorError(buf);
  }
  ReachCheck out;
  double dmin = std::numeric_limits<double>::infinity();
  for (const auto& r : tr.records) {
    if (r.t < a - 1e-12 || r.t > b + 1e-12) continue;
    double d = (r.x - target).norm();
    dmin = std::min(dmin, d);
    if (!out.satisfied && d <= eps) {
      out.satisfied = true;
      out.t_satisfied = r.t;
    }
  }
  out.margin = eps - dmin;
  return out;
}

struct ReachTaskReport {
  std::string behavior;
  double t_start = 0;
  double t_deadline = std::numeric_limits<double>::quiet_NaN();
  double t_end = 0;        // last sample with this behavior active
  bool preempted = false;  // behavior left before its deadline without reaching
  ReachCheck check;
};

/// One window per maximal run of a reach behavior in the behavior column.
/// The window opens at the switch and closes at the recorded deadline.
inline std::vector<ReachTaskReport> check_reach_tasks(const Trace& tr, const Scenario& sc) {
  std::vector<ReachTaskReport> out;
  const auto& recs = tr.records;
  std::size_t i = 0;
  while (i < recs.size()) {
    const int atom = recs[i].behavior;
    std::size_t j = i;
    double deadline = std::numeric_limits<double>::quiet_NaN();
    while (j < recs.size() && recs[j].behavior == atom) {
      if (!std::isnan(recs[j].reach_deadline)) deadline = recs[j].reach_deadline;
      ++j;
    }
    if (atom >= 0 && sc.alphabet[atom].kind == AtomKind::controllable) {
      const auto& b = sc.behaviors[static_cast<std::size_t>(sc.behavior_index(atom))];
      if (b.is_reach()) {
        ReachTaskReport rep;
        rep.behavior = b.name;
        rep.t_start = recs[i].t;
        rep.t_end = recs[j - 1].t;
        rep.t_deadline = deadline;
        const bool runs_to_end = j == recs.size();
        if (std::isnan(deadline)) {
          // left while still mixing; the reach constraint never started
          if (runs_to_end) throw MonitorError("window error: reach task '" + b.name + "' has no deadline in trace");
          rep.preempted = true;
          rep.check = check_reach(tr, b.reach->target, b.reach->epsilon, rep.t_start, rep.t_end);
        } else if (deadline > rep.t_end + 1e-12) {
          if (runs_to_end) {
            rep.check = check_reach(tr, b.reach->target, b.reach->epsilon, rep.t_start, deadline);
          } else {
            rep.check = check_reach(tr, b.reach->target, b.reach->epsilon, rep.t_start, rep.t_end);
            rep.preempted = !rep.check.satisfied;
          }
        } else {
          rep.check = check_reach(tr, b.reach->target, b.reach->epsilon, rep.t_start, deadline);
        }
        out.push_back(rep);
      }
    }
    i = j;
  }
  return out;
}

struct RunSample {
  Valuation sensed_c;
  Valuation applied_c;
  Valuation sigma_u;
  bool recovered = false;
};

inline std::vector<RunSample> run_samples(const Trace& tr) {
  std::vector<RunSample> out;
  for (const auto& r : tr.records)
    if (r.task_tick) out.push_back({r.sensed_c, r.applied_c, r.sigma_u, r.recovered});
  return out;
}

struct RunStatus {
  long ticks = 0;
  bool one_hot_ok = true;
  long one_hot_breach_tick = -1;
  std::string one_hot_breach_stream;  // "sensed" or "applied"
  bool violated = false;
  long violated_at = -1;
  long accepting_ticks = 0;
  long recovered_ticks = 0;
  std::vector<std::pair<long, long>> proxy_gaps;  // [from, to) tick ranges with no accepting visit
  bool proxy_ok() const { return proxy_gaps.empty(); }
  bool ok() const { return one_hot_ok && !violated && proxy_ok(); }
};

/// Replays applied_c | sigma_u on the automaton with subset tracking.
inline RunStatus check_run(const BuchiAutomaton& a, const Alphabet& alphabet, const std::vector<RunSample>& stream) {
  RunStatus st;
  st.ticks = static_cast<long>(stream.size());
  const std::uint64_t cm = alphabet.mask(AtomKind::controllable);
  for (long k = 0; k < st.ticks; ++k) {
    const auto& s = stream[static_cast<std::size_t>(k)];
    if (s.recovered) ++st.recovered_ticks;
    const char* bad = s.sensed_c.restricted(cm).count() > 1    ? "sensed"
                      : s.applied_c.restricted(cm).count() > 1 ? "applied"
                                                               : nullptr;
    if (bad && st.one_hot_ok) {
      st.one_hot_ok = false;
      st.one_hot_breach_tick = k;
      st.one_hot_breach_stream = bad;
    }
  }
  if (!st.one_hot_ok) return st;

  std::vector<char> acc_tick(stream.size(), 0);
  std::set<int> cur{a.initial};
  for (long k = 0; k < st.ticks; ++k) {
    const auto& s = stream[static_cast<std::size_t>(k)];
    const Valuation v = s.applied_c | s.sigma_u;
    std::set<int> nxt;
    for (int q : cur)
      for (const auto& t : a.out[static_cast<std::size_t>(q)])
        if (holds(t.guard, v)) nxt.insert(t.target);
    if (nxt.empty()) {
      st.violated = true;
      st.violated_at = k;
      return st;
    }
    for (int q : nxt)
      if (a.accepting[static_cast<std::size_t>(q)]) {
        acc_tick[static_cast<std::size_t>(k)] = 1;
        ++st.accepting_ticks;
        break;
      }
    cur = std::move(nxt);
  }

  auto has_acc = [&](long from, long to) {
    for (long k = from; k < to; ++k)
      if (acc_tick[static_cast<std::size_t>(k)]) return true;
    return false;
  };
  long seg = 0;
  for (long k = 1; k <= st.ticks; ++k) {
    bool boundary = k == st.ticks || stream[static_cast<std::size_t>(k)].sigma_u != stream[static_cast<std::size_t>(k - 1)].sigma_u;
    if (!boundary) continue;
    if (!has_acc(seg, k)) st.proxy_gaps.push_back({seg, k});
    seg = k;
  }
  const long w = 2L * a.num_states();
  const long tail = std::max(0L, st.ticks - w);
  if (st.ticks > 0 && !has_acc(tail, st.ticks)) st.proxy_gaps.push_back({tail, st.ticks});
  return st;
}

struct BarrierMin {
  std::string name;
  double min = std::numeric_limits<double>::infinity();
  double t_min = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<BarrierMin> check_barriers(const Trace& tr) {
  std::vector<BarrierMin> out;
  for (const auto& n : tr.barrier_names) out.push_back({n});
  for (const auto& r : tr.records)
    for (std::size_t i = 0; i < out.size() && i < r.B.size(); ++i)
      if (r.B[i] < out[i].min) {
        out[i].min = r.B[i];
        out[i].t_min = r.t;
      }
  return out;
}

struct ReachBarrierMin {
  double min = std::numeric_limits<double>::infinity();
  double t_min = std::numeric_limits<double>::quiet_NaN();
};

/// Minimum of the time-varying reach barrier over the samples that carry it.
inline ReachBarrierMin check_reach_barrier(const Trace& tr) {
  ReachBarrierMin m;
  for (const auto& r : tr.records)
    if (!std::isnan(r.reach_B) && r.reach_B < m.min) {
      m.min = r.reach_B;
      m.t_min = r.t;
    }
  return m;
}

struct ClfRecovery {
  double t_disturbance = 0;
  double t_recovered = std::numeric_limits<double>::quiet_NaN();  // first sample at or after with V < threshold
  bool recovered() const { return !std::isnan(t_recovered); }
  double duration() const { return t_recovered - t_disturbance; }
};

inline std::vector<ClfRecovery> check_clf_recovery(const Trace& tr, double threshold,
                                                   const std::vector<double>& disturbance_times) {
  std::vector<ClfRecovery> out;
  for (double td : disturbance_times) {
    ClfRecovery c;
    c.t_disturbance = td;
    for (const auto& r : tr.records)
      if (r.t >= td - 1e-9 && r.V < threshold) {
        c.t_recovered = r.t;
        break;
      }
    out.push_back(c);
  }
  return out;
}

struct MonitorOptions {
  double barrier_tolerance = 1e-6;
  double clf_threshold = 1e-3;
};

struct MonitorReport {
  RunStatus run;
  std::vector<ReachTaskReport> reach;
  std::vector<BarrierMin> barriers;
  ReachBarrierMin reach_barrier;
  std::vector<ClfRecovery> clf;
  long qp_fallback_ticks = 0;
  long samples = 0;
  MonitorOptions options;

  bool reach_ok() const {
    for (const auto& r : reach)
      if (!r.preempted && !(r.check.satisfied && r.check.margin > 0)) return false;
    return true;
  }
  bool barriers_ok() const {
    for (const auto& b : barriers)
      if (b.min < -options.barrier_tolerance) return false;
    return reach_barrier.min >= -options.barrier_tolerance;
  }
  bool pass() const { return run.ok() && reach_ok() && barriers_ok(); }

  /// "key: value" lines, one fact per line.
  std::string text() const {
    std::string s;
    char buf[256];
    auto line = [&](const char* fmt, auto... args) {
      std::snprintf(buf, sizeof buf, fmt, args...);
      s += buf;
      s += '\n';
    };
    line("samples: %ld", samples);
    line("run.ticks: %ld", run.ticks);
    if (!run.one_hot_ok)
      line("run.status: one-hot-breach at %ld (%s)", run.one_hot_breach_tick, run.one_hot_breach_stream.c_str());
    else if (run.violated)
      line("run.status: violated at %ld", run.violated_at);
    else
      line("run.status: %s", "no-violation");
    line("run.accepting_ticks: %ld", run.accepting_ticks);
    line("run.recovered_ticks: %ld", run.recovered_ticks);
    line("run.proxy: %s", run.proxy_ok() ? "ok" : "gap");
    for (const auto& g : run.proxy_gaps) line("run.proxy_gap: [%ld, %ld)", g.first, g.second);
    for (std::size_t i = 0; i < reach.size(); ++i) {
      const auto& r = reach[i];
      line("reach[%zu]: behavior=%s start=%.9g deadline=%.9g end=%.9g satisfied=%d t=%.9g margin=%.9g%s", i,
           r.behavior.c_str(), r.t_start, r.t_deadline, r.t_end, r.check.satisfied ? 1 : 0, r.check.t_satisfied,
           r.check.margin, r.preempted ? " preempted" : "");
    }
    for (const auto& b : barriers) line("barrier[%s].min: %.9g at %.9g", b.name.c_str(), b.min, b.t_min);
    if (!std::isinf(reach_barrier.min)) line("reach_barrier.min: %.9g at %.9g", reach_barrier.min, reach_barrier.t_min);
    for (std::size_t i = 0; i < clf.size(); ++i)
      line("clf[%zu]: disturbance=%.9g recovered=%.9g", i, clf[i].t_disturbance, clf[i].t_recovered);
    line("qp.fallback_ticks: %ld", qp_fallback_ticks);
    line("verdict: %s", pass() ? "pass" : "fail");
    return s;
  }
};

/// All checks for a trace recorded from `sc`. Throws MonitorError when a
/// reach window is not covered by the trace.
inline MonitorReport monitor(const Trace& tr, const Scenario& sc, MonitorOptions opt = {}) {
  MonitorReport rep;
  rep.options = opt;
  rep.samples = static_cast<long>(tr.records.size());
  rep.run = check_run(sc.automaton, sc.alphabet, run_samples(tr));
  rep.reach = check_reach_tasks(tr, sc);
  rep.barriers = check_barriers(tr);
  rep.reach_barrier = check_reach_barrier(tr);
  std::vector<double> td;
  for (const auto& d : sc.disturbances)
    if (d.kind == Disturbance::Kind::impulse && d.t < sc.duration) td.push_back(d.t);
  rep.clf = check_clf_recovery(tr, opt.clf_threshold, td);
  for (const auto& r : tr.records)
    if (r.qp != QpStatus::optimal) ++rep.qp_fallback_ticks;
  return rep;
}

}  // namespace rtlplan
