#pragma once

// Dual-rate closed loop: the task planner runs every motion_hz/task_hz motion
// ticks, the motion layer every tick. Controllable propositions are sensed
// from the executed velocity and from reach-task progress.

#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "automaton.hpp"
#include "formula.hpp"
#include "motion.hpp"
#include "taskplanner.hpp"

namespace rtlplan {

/// Uncontrollable valuation holding from time t on.
struct ScriptEvent {
  double t = 0;
  Valuation sigma_u;
};

struct Disturbance {
  enum class Kind { impulse, hold };
  Kind kind = Kind::impulse;
  double t = 0;
  Vec3 displacement = Vec3::Zero();  // impulse
  double duration = 0;               // hold
};

struct PropSensorConfig {
  double velocity_tolerance = 0.02;  // m/s
};

struct Scenario {
  std::string name;
  Alphabet alphabet;
  std::string formula_text;
  RtlSpec spec;
  BuchiAutomaton automaton;         // propositions follow `alphabet`
  std::vector<Behavior> behaviors;  // one per controllable atom
  MotionConfig motion;
  PropSensorConfig sensing;
  Vec3 x0 = Vec3::Zero();
  Valuation initial_u;
  std::vector<ScriptEvent> script;
  bool live = false;
  std::vector<Disturbance> disturbances;
  int task_hz = 200;
  int motion_hz = 1000;
  double duration = 10;

  /// Throws std::invalid_argument naming the first broken invariant.
  void validate() const {
    if (task_hz <= 0 || motion_hz <= 0) throw std::invalid_argument("rates must be positive");
    if (motion_hz % task_hz != 0) throw std::invalid_argument("motion_hz must be a multiple of task_hz");
    if (!(duration >= 0)) throw std::invalid_argument("duration must be nonnegative");
    for (int i : alphabet.controllable()) {
      bool bound = false;
      for (const auto& b : behaviors) bound = bound || b.name == alphabet[i].name;
      if (!bound) throw std::invalid_argument("controllable atom '" + alphabet[i].name + "' has no behavior");
    }
    for (const auto& b : behaviors) {
      auto i = alphabet.find(b.name);
      if (!i || alphabet[*i].kind != AtomKind::controllable)
        throw std::invalid_argument("behavior '" + b.name + "' is not a controllable atom");
    }
    for (std::size_t i = 1; i < script.size(); ++i)
      if (script[i].t < script[i - 1].t) throw std::invalid_argument("script times must be nondecreasing");
    automaton.check();
    if (automaton.ap != alphabet.names()) throw std::invalid_argument("automaton propositions do not follow the alphabet");
  }

  /// Behavior index bound to a controllable atom.
  int behavior_index(int atom) const {
    for (std::size_t i = 0; i < behaviors.size(); ++i)
      if (behaviors[i].name == alphabet[atom].name) return static_cast<int>(i);
    return -1;
  }
};

/// One record per motion tick. Planner columns hold the values of the latest
/// task tick.
struct TraceRecord {
  double t = 0;
  Vec3 x = Vec3::Zero();
  Vec3 xdot_ref = Vec3::Zero();
  Valuation sensed_c;   // sensed at the latest task tick
  Valuation applied_c;  // valuation the automaton advanced with
  Valuation sigma_u;
  int state = 0;
  int behavior = -1;  // atom index of p_m, -1 for none
  bool task_tick = false;
  bool replanned = false;
  bool recovered = false;
  double V = 0;
  double eta = 0;
  double beta = 1;
  QpStatus qp = QpStatus::optimal;
  double reach_B = std::numeric_limits<double>::quiet_NaN();
  double reach_deadline = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> B;  // static barriers
};

struct Trace {
  int task_hz = 200;
  int motion_hz = 1000;
  std::vector<std::string> barrier_names;
  std::vector<TraceRecord> records;
};

struct SimEvent {
  enum class Kind { replanned, behavior_switch, recovered, qp_fallback, disturbance, planner_error };
  Kind kind;
  double t;
  std::string detail;
};

inline const char* to_string(SimEvent::Kind k) {
  switch (k) {
    case SimEvent::Kind::replanned:
      return "replanned";
    case SimEvent::Kind::behavior_switch:
      return "behavior_switch";
    case SimEvent::Kind::recovered:
      return "recovered";
    case SimEvent::Kind::qp_fallback:
      return "qp_fallback";
    case SimEvent::Kind::disturbance:
      return "disturbance";
    case SimEvent::Kind::planner_error:
      return "planner_error";
  }
  return "?";
}

struct SimTiming {
  double planner_seconds = 0;
  long planner_steps = 0;
  double motion_seconds = 0;
  long motion_steps = 0;

  double planner_mean_ms() const { return planner_steps ? 1e3 * planner_seconds / planner_steps : 0; }
  double motion_mean_ms() const { return motion_steps ? 1e3 * motion_seconds / motion_steps : 0; }
};

/// Inputs to proposition sensing at one task tick.
struct SenseInput {
  Vec3 x = Vec3::Zero();
  std::optional<Vec3> velocity;  // executed velocity over the last motion tick
  int active = -1;               // active behavior index
  bool reach_latched = false;    // active reach task has been within epsilon
};

/// Controllable valuation for the current tick. Velocity-matched behaviors
/// are those with |xdot - f_a(x)| <= tolerance; the active reach behavior is
/// true once latched. At most one atom is returned: the active behavior wins,
/// then the smallest residual, then the lowest atom index.
inline Valuation sense(const Scenario& sc, const SenseInput& in) {
  int best_atom = -1;
  double best_res = std::numeric_limits<double>::infinity();
  bool best_active = false;
  for (int atom : sc.alphabet.controllable()) {
    int bi = sc.behavior_index(atom);
    const auto& b = sc.behaviors[static_cast<std::size_t>(bi)];
    bool active = bi == in.active;
    double res;
    if (b.is_reach()) {
      if (!(active && in.reach_latched)) continue;
      res = 0;
    } else {
      if (!in.velocity) continue;
      res = (*in.velocity - eval_field(*b.ds, in.x)).norm();
      if (!(res <= sc.sensing.velocity_tolerance)) continue;
    }
    bool better = best_atom < 0 || (active && !best_active) || (active == best_active && res < best_res);
    if (better) {
      best_atom = atom;
      best_res = res;
      best_active = active;
    }
  }
  return best_atom < 0 ? Valuation{} : one_hot(best_atom);
}

/// Impulses displace the state; holds pin it for their duration.
inline Vec3 inject_disturbance(const Vec3& x, const Disturbance& d) {
  return d.kind == Disturbance::Kind::impulse ? Vec3(x + d.displacement) : x;
}

/// Step-wise simulation of a scenario. run() drives it to the end; the live
/// service calls tick() itself and feeds commands in between.
class Simulation {
 public:
  explicit Simulation(const Scenario& sc)
      : sc_(sc), motion_(sc.behaviors, sc.motion), planner_(make_planner(sc.automaton)) {
    sc_.validate();
    ratio_ = sc_.motion_hz / sc_.task_hz;
    dt_ = 1.0 / sc_.motion_hz;
    total_ticks_ = static_cast<long>(std::llround(sc_.duration * sc_.motion_hz));
    x_ = sc_.x0;
    sigma_u_ = sc_.initial_u.restricted(sc_.alphabet.mask(AtomKind::uncontrollable));
    trace_.task_hz = sc_.task_hz;
    trace_.motion_hz = sc_.motion_hz;
    for (const auto& b : sc_.motion.barriers) trace_.barrier_names.push_back(b.name);
  }

  const Scenario& scenario() const { return sc_; }
  const Trace& trace() const { return trace_; }
  Trace take_trace() { return std::move(trace_); }
  const SimTiming& timing() const { return timing_; }
  const Vec3& x() const { return x_; }
  double time() const { return static_cast<double>(tick_) * dt_; }
  long ticks() const { return tick_; }
  long total_ticks() const { return total_ticks_; }
  bool done() const { return tick_ >= total_ticks_ || error_.has_value(); }
  const std::optional<std::string>& error() const { return error_; }
  Valuation sigma_u() const { return sigma_u_; }
  const std::vector<SimEvent>& events() const { return events_; }
  std::vector<SimEvent> drain_events() { return std::exchange(events_, {}); }
  const MotionPlanner& motion() const { return motion_; }
  const PlannerState& planner() const { return planner_; }
  void keep_trace(bool on) { keep_trace_ = on; }
  const TraceRecord& last_record() const { return last_; }

  /// Live inputs; they take effect at the next task tick.
  void set_uncontrollable(int atom, bool value) { pending_.push_back(Pending{atom, value, std::nullopt, 0}); }
  void impulse(const Vec3& d) { pending_.push_back(Pending{-1, false, d, 0}); }
  void hold(double seconds) { pending_.push_back(Pending{-1, false, std::nullopt, seconds}); }

  /// Advances one motion tick. Returns false once the run has ended.
  bool tick() {
    if (done()) return false;
    const double t = time();
    const bool task_tick = tick_ % ratio_ == 0;
    for (const auto& d : sc_.disturbances)
      if (d.kind == Disturbance::Kind::impulse && fires_now(d.t)) apply_impulse(d.displacement, t);
    for (const auto& d : sc_.disturbances)
      if (d.kind == Disturbance::Kind::hold && fires_now(d.t)) start_hold(t, d.duration);
    if (task_tick) {
      apply_pending(t);
      while (script_pos_ < sc_.script.size() && sc_.script[script_pos_].t <= t + 1e-9)
        sigma_u_ = sc_.script[script_pos_++].sigma_u.restricted(sc_.alphabet.mask(AtomKind::uncontrollable));
      if (!plan(t)) return false;
    }
    auto m0 = std::chrono::steady_clock::now();
    MotionOutput out = motion_.evaluate(x_, t, 0);
    const bool held = t < hold_until_ - 1e-12;
    Vec3 next = x_;
    if (!held) {
      Vec3 k1 = out.xdot_ref;
      Vec3 k2 = motion_.evaluate(x_ + dt_ / 2 * k1, t + dt_ / 2, dt_ / 2).xdot_ref;
      Vec3 k3 = motion_.evaluate(x_ + dt_ / 2 * k2, t + dt_ / 2, dt_ / 2).xdot_ref;
      Vec3 k4 = motion_.evaluate(x_ + dt_ * k3, t + dt_, dt_).xdot_ref;
      next = x_ + dt_ / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    if (out.fallback && !fallback_flagged_) {
      events_.push_back({SimEvent::Kind::qp_fallback, t, to_string(out.status)});
      fallback_flagged_ = true;
    }
    if (!out.fallback) fallback_flagged_ = false;

    TraceRecord r = planner_columns_;
    r.t = t;
    r.x = x_;
    r.xdot_ref = out.xdot_ref;
    r.task_tick = task_tick;
    if (!task_tick) r.replanned = r.recovered = false;
    r.V = out.V;
    r.eta = out.eta;
    r.beta = out.beta;
    r.qp = out.status;
    r.B = out.barrier_values;
    if (out.reach_B) {
      r.reach_B = *out.reach_B;
      r.reach_deadline = motion_.reach_cbf()->t_deadline;
    }
    last_ = r;
    if (keep_trace_) trace_.records.push_back(std::move(r));

    velocity_ = held ? Vec3::Zero() : out.xdot_ref;
    x_ = next;
    ++tick_;
    motion_.commit(x_, time(), dt_, out);
    update_latch(time());
    timing_.motion_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - m0).count();
    ++timing_.motion_steps;
    return true;
  }

 private:
  struct Pending {
    int atom;
    bool value;
    std::optional<Vec3> impulse;
    double hold;
  };

  Scenario sc_;
  MotionPlanner motion_;
  PlannerState planner_;
  int ratio_ = 5;
  double dt_ = 1e-3;
  long tick_ = 0;
  long total_ticks_ = 0;
  Vec3 x_;
  std::optional<Vec3> velocity_;
  Valuation sigma_u_;
  std::size_t script_pos_ = 0;
  double hold_until_ = -1;
  bool latched_ = false;
  bool fallback_flagged_ = false;
  bool keep_trace_ = true;
  std::vector<Pending> pending_;
  TraceRecord planner_columns_;
  TraceRecord last_;
  Trace trace_;
  std::vector<SimEvent> events_;
  std::optional<std::string> error_;
  SimTiming timing_;

  bool fires_now(double te) const {
    const double t = time();
    return te <= t + 1e-9 && te > t - dt_ + 1e-9;
  }

  void apply_impulse(const Vec3& d, double t) {
    Disturbance ev;
    ev.displacement = d;
    x_ = inject_disturbance(x_, ev);
    events_.push_back({SimEvent::Kind::disturbance, t, "impulse"});
  }

  void start_hold(double t, double seconds) {
    hold_until_ = std::max(hold_until_, t + seconds);
    events_.push_back({SimEvent::Kind::disturbance, t, "hold"});
  }

  void apply_pending(double t) {
    for (const auto& p : pending_) {
      if (p.atom >= 0)
        sigma_u_.set(p.atom, p.value);
      else if (p.impulse)
        apply_impulse(*p.impulse, t);
      else
        start_hold(t, p.hold);
    }
    pending_.clear();
  }

  void update_latch(double t) {
    int a = motion_.active();
    if (a < 0 || !sc_.behaviors[static_cast<std::size_t>(a)].is_reach() || latched_) return;
    const auto& w = motion_.reach_windows().back();
    if (t <= w.t_deadline + 1e-12 && (x_ - w.target).norm() <= w.epsilon) latched_ = true;
  }

  bool plan(double t) {
    auto p0 = std::chrono::steady_clock::now();
    SenseInput in;
    in.x = x_;
    in.velocity = tick_ == 0 ? std::nullopt : velocity_;
    in.active = motion_.active();
    in.reach_latched = latched_;
    Valuation sensed = sense(sc_, in);
    BehaviorChoice c;
    try {
      c = step(planner_, sensed, sigma_u_, sc_.automaton, sc_.alphabet);
    } catch (const std::exception& e) {
      error_ = e.what();
      events_.push_back({SimEvent::Kind::planner_error, t, e.what()});
      return false;
    }
    int bi = c.behavior ? sc_.behavior_index(*c.behavior) : -1;
    int before = motion_.active();
    bool first = tick_ == 0;
    motion_.select(bi, x_, t);
    if (motion_.active() != before || first) latched_ = false;
    if (!first && motion_.active() != before)
      events_.push_back({SimEvent::Kind::behavior_switch, t,
                         c.behavior ? sc_.alphabet[*c.behavior].name : std::string("-")});
    if (c.replanned) events_.push_back({SimEvent::Kind::replanned, t, std::to_string(c.automaton_state)});
    if (c.recovered) events_.push_back({SimEvent::Kind::recovered, t, std::to_string(c.automaton_state)});
    planner_columns_.sensed_c = sensed;
    planner_columns_.applied_c = c.applied_sigma_c;
    planner_columns_.sigma_u = sigma_u_;
    planner_columns_.state = c.automaton_state;
    planner_columns_.behavior = c.behavior ? *c.behavior : -1;
    planner_columns_.replanned = c.replanned;
    planner_columns_.recovered = c.recovered;
    timing_.planner_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - p0).count();
    ++timing_.planner_steps;
    return true;
  }
};

struct RunResult {
  Trace trace;
  std::optional<std::string> error;
  std::vector<SimEvent> events;
  SimTiming timing;
};

/// Runs a scripted scenario to the end or to the first planner failure.
inline RunResult run(const Scenario& sc) {
  Simulation sim(sc);
  RunResult r;
  while (sim.tick()) {
    auto ev = sim.drain_events();
    r.events.insert(r.events.end(), ev.begin(), ev.end());
  }
  auto ev = sim.drain_events();
  r.events.insert(r.events.end(), ev.begin(), ev.end());
  r.error = sim.error();
  r.timing = sim.timing();
  r.trace = sim.take_trace();
  return r;
}

}  // namespace rtlplan
