#pragma once

// Motion layer: CLF-CBF-QP tracking of nominal fields, time-varying CBFs for
// reach tasks, and the velocity blend used at behavior switches.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dslib.hpp"
#include "qp.hpp"

namespace rtlplan {

/// V(e) = e'Pe with alpha(V) = alpha_gain * V.
struct ClfSpec {
  Eigen::Matrix3d P = Eigen::Matrix3d::Identity();
  double alpha_gain = 2.0;

  double value(const Vec3& e) const { return e.dot(P * e); }
  Vec3 gradient(const Vec3& e) const { return (P + P.transpose()) * e; }
  void check() const {
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw std::invalid_argument("clf: P must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(P, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0) throw std::invalid_argument("clf: P must be positive definite");
    if (!(alpha_gain > 0)) throw std::invalid_argument("clf: alpha_gain must be positive");
  }
};

enum class BarrierKind { halfspace, sphere_keepout, box };

/// Static barrier B(x) >= 0 with gamma(B) = gamma_gain * B.
///   halfspace       n'x - d            (n normalized on construction)
///   sphere_keepout  |x - c|^2 - r^2
///   box             -(1/k) log sum_i exp(-k h_i), h_i the six face distances
struct StaticCbf {
  std::string name;
  BarrierKind kind = BarrierKind::halfspace;
  Vec3 normal = Vec3::UnitZ();
  double offset = 0;
  Vec3 center = Vec3::Zero();
  double radius = 0;
  Vec3 lo = Vec3::Constant(-1), hi = Vec3::Constant(1);
  double sharpness = 50;
  double gamma_gain = 5.0;

  static StaticCbf halfspace(std::string name, Vec3 n, double d, double gain = 5.0) {
    StaticCbf b;
    b.name = std::move(name);
    b.kind = BarrierKind::halfspace;
    double len = n.norm();
    if (!(len > 1e-12)) throw std::invalid_argument("barrier " + b.name + ": normal must be nonzero");
    b.normal = n / len;
    b.offset = d / len;
    b.gamma_gain = gain;
    return b;
  }
  static StaticCbf keepout(std::string name, Vec3 c, double r, double gain = 5.0) {
    StaticCbf b;
    b.name = std::move(name);
    b.kind = BarrierKind::sphere_keepout;
    if (!(r > 0)) throw std::invalid_argument("barrier " + b.name + ": radius must be positive");
    b.center = c;
    b.radius = r;
    b.gamma_gain = gain;
    return b;
  }
  static StaticCbf box(std::string name, Vec3 lo, Vec3 hi, double sharpness = 50, double gain = 5.0) {
    StaticCbf b;
    b.name = std::move(name);
    b.kind = BarrierKind::box;
    b.lo = lo;
    b.hi = hi;
    b.sharpness = sharpness;
    b.gamma_gain = gain;
    if (!(sharpness > 0)) throw std::invalid_argument("barrier " + b.name + ": sharpness must be positive");
    // the smooth minimum is at most log(6)/k below the true one
    if (!((hi - lo).minCoeff() / 2 > std::log(6.0) / sharpness))
      throw std::invalid_argument("barrier " + b.name + ": box too small for its sharpness");
    return b;
  }

  double value(const Vec3& x) const {
    switch (kind) {
      case BarrierKind::halfspace:
        return normal.dot(x) - offset;
      case BarrierKind::sphere_keepout:
        return (x - center).squaredNorm() - radius * radius;
      case BarrierKind::box: {
        auto h = faces(x);
        double m = h.minCoeff();
        return m - std::log((-sharpness * (h.array() - m)).exp().sum()) / sharpness;
      }
    }
    return 0;
  }

  Vec3 gradient(const Vec3& x) const {
    switch (kind) {
      case BarrierKind::halfspace:
        return normal;
      case BarrierKind::sphere_keepout:
        return 2 * (x - center);
      case BarrierKind::box: {
        auto h = faces(x);
        Eigen::Matrix<double, 6, 1> w = (-sharpness * (h.array() - h.minCoeff())).exp();
        w /= w.sum();
        return Vec3(w[0] - w[3], w[1] - w[4], w[2] - w[5]);
      }
    }
    return Vec3::Zero();
  }

 private:
  Eigen::Matrix<double, 6, 1> faces(const Vec3& x) const {
    Eigen::Matrix<double, 6, 1> h;
    h << x - lo, hi - x;
    return h;
  }
};

enum class GammaProfile { linear, exponential };

/// B(x, t) = eps^2 - |x - x*|^2 + gamma(t) for a reach task.
struct TimeVaryingCbf {
  Vec3 target = Vec3::Zero();
  double epsilon = 0.05;
  double t_start = 0, t_deadline = 0;
  GammaProfile profile = GammaProfile::linear;
  double d0_sq = 0;  // |x0 - x*|^2; zero for a degenerate task

  double horizon() const { return t_deadline - t_start; }

  double gamma(double t) const {
    if (d0_sq == 0 || t >= t_deadline) return 0;
    const double T = horizon();
    if (profile == GammaProfile::linear) return std::max(0.0, d0_sq / (t_start - t_deadline) * (t - t_deadline));
    return std::max(0.0, d0_sq * (std::exp(-(t - t_start)) - std::exp(-T)) / (1 - std::exp(-T)));
  }
  double gamma_rate(double t) const {
    if (d0_sq == 0 || t >= t_deadline) return 0;
    const double T = horizon();
    if (profile == GammaProfile::linear) return -d0_sq / T;
    return -d0_sq * std::exp(-(t - t_start)) / (1 - std::exp(-T));
  }
  double value(const Vec3& x, double t) const {
    return epsilon * epsilon - (x - target).squaredNorm() + gamma(t);
  }
  Vec3 gradient(const Vec3& x) const { return -2 * (x - target); }
  double time_derivative(double t) const { return gamma_rate(t); }
};

/// Deadline t* = |x0 - x*| / v_u after t_start. Starts within epsilon of the
/// target give gamma = 0 and an already satisfied barrier.
inline TimeVaryingCbf make_reach_cbf(const Vec3& x0, const Vec3& target, double epsilon, double v_u,
                                     GammaProfile profile, double t_start = 0) {
  if (!(v_u > 0)) throw std::invalid_argument("reach: speed must be positive");
  if (!(epsilon > 0)) throw std::invalid_argument("reach: epsilon must be positive");
  TimeVaryingCbf c;
  c.target = target;
  c.epsilon = epsilon;
  c.t_start = c.t_deadline = t_start;
  c.profile = profile;
  double d = (x0 - target).norm();
  if (d <= epsilon) return c;
  c.d0_sq = d * d;
  c.t_deadline = t_start + d / v_u;
  return c;
}

struct ClfCbfResult {
  Vec3 u = Vec3::Zero();
  double eta = 0;
  double V = 0;
  std::vector<double> barrier_values;
  QpStatus status = QpStatus::optimal;
};

/// minimize |v|^2 + lambda eta^2
///   s.t. dB_i(x)'(f + v) >= -gamma_i(B_i(x))             for every barrier
///        dV(e)'(f - xdot* + v) <= -alpha(V(e)) + eta       with e = x - x*
inline ClfCbfResult clf_cbf_step(const Vec3& x, const ReferenceState& ref, const Vec3& f,
                                 const std::vector<StaticCbf>& barriers, const ClfSpec& clf, double lambda,
                                 QpSolver& solver) {
  ClfCbfResult r;
  const int m = static_cast<int>(barriers.size()) + 1;
  QpProblem p;
  p.H = Eigen::MatrixXd::Identity(4, 4) * 2;
  p.H(3, 3) = 2 * lambda;
  p.g = Eigen::VectorXd::Zero(4);
  p.A = Eigen::MatrixXd::Zero(m, 4);
  p.b.resize(m);
  for (int i = 0; i < m - 1; ++i) {
    const auto& bar = barriers[static_cast<std::size_t>(i)];
    double B = bar.value(x);
    Vec3 dB = bar.gradient(x);
    r.barrier_values.push_back(B);
    p.A.block<1, 3>(i, 0) = dB.transpose();
    p.b[i] = -bar.gamma_gain * B - dB.dot(f);
  }
  Vec3 e = x - ref.x_star;
  r.V = clf.value(e);
  Vec3 dV = clf.gradient(e);
  p.A.block<1, 3>(m - 1, 0) = -dV.transpose();
  p.A(m - 1, 3) = 1;
  p.b[m - 1] = dV.dot(f - ref.xdot_star) + clf.alpha_gain * r.V;
  auto s = solver.solve(p, false);
  r.status = s.status;
  if (s.status == QpStatus::optimal) {
    r.u = s.z.head<3>();
    r.eta = s.z[3];
  }
  return r;
}

struct TvCbfResult {
  Vec3 u = Vec3::Zero();
  double B = 0;
  QpStatus status = QpStatus::optimal;
};

/// minimize |v|^2  s.t.  dB'(f + v) + dB/dt >= -gain * B(x, t).
/// Optional static rows are appended when `barriers` is non-empty.
inline TvCbfResult tv_cbf_step(const Vec3& x, double t, const Vec3& f, const TimeVaryingCbf& cbf, double gain,
                               QpSolver& solver, const std::vector<StaticCbf>& barriers = {}) {
  TvCbfResult r;
  r.B = cbf.value(x, t);
  Vec3 a = cbf.gradient(x);
  double b = -gain * r.B - cbf.time_derivative(t) - a.dot(f);
  if (a.squaredNorm() < 1e-24) {
    // at the target the row no longer depends on v
    r.status = b <= 0 ? QpStatus::optimal : QpStatus::infeasible;
    if (barriers.empty() || r.status != QpStatus::optimal) return r;
  }
  const int m = 1 + static_cast<int>(barriers.size());
  QpProblem p;
  p.H = Eigen::MatrixXd::Identity(3, 3) * 2;
  p.g = Eigen::VectorXd::Zero(3);
  p.A = Eigen::MatrixXd::Zero(m, 3);
  p.b = Eigen::VectorXd::Zero(m);
  if (a.squaredNorm() >= 1e-24) {
    p.A.row(0) = a.transpose();
    p.b[0] = b;
  }
  for (int i = 1; i < m; ++i) {
    const auto& bar = barriers[static_cast<std::size_t>(i - 1)];
    Vec3 dB = bar.gradient(x);
    p.A.row(i) = dB.transpose();
    p.b[i] = -bar.gamma_gain * bar.value(x) - dB.dot(f);
  }
  auto s = solver.solve(p, false);
  r.status = s.status;
  if (s.status == QpStatus::optimal) r.u = s.z;
  return r;
}

/// Blend from the frozen outgoing velocity to the incoming one.
struct MixState {
  Vec3 frozen_ref = Vec3::Zero();
  double switch_time = 0;
  double duration = 0.67;

  double beta(double t) const {
    if (t >= end_time()) return 1;
    return std::clamp((t - switch_time) / duration, 0.0, 1.0);
  }
  double end_time() const { return switch_time + duration; }
};

inline Vec3 mix(const MixState& mx, double t, const Vec3& incoming) {
  if (t < mx.switch_time) throw std::invalid_argument("mix: t precedes the switch time");
  double b = mx.beta(t);
  if (b == 0) return mx.frozen_ref;
  if (b == 1) return incoming;
  return (1 - b) * mx.frozen_ref + b * incoming;
}

struct ReachTask {
  Vec3 target = Vec3::Zero();
  double epsilon = 0.05;
  double speed = 0.25;  // v_u
  GammaProfile profile = GammaProfile::linear;
};

/// A controllable proposition bound either to a nominal field or to a reach task.
struct Behavior {
  std::string name;
  std::optional<NominalDS> ds;
  std::optional<ReachTask> reach;

  bool is_reach() const { return reach.has_value(); }
};

struct MotionConfig {
  ClfSpec clf;
  double lambda = 100;
  double reach_gain = 0.2;
  double mix_duration = 0.67;
  double snap_radius = 0.10;
  bool reach_static_barriers = false;
  std::vector<StaticCbf> barriers;
};

struct MotionOutput {
  Vec3 xdot_ref = Vec3::Zero();
  Vec3 u = Vec3::Zero();
  double eta = 0;
  double V = 0;
  double beta = 1;
  std::vector<double> barrier_values;  // static barriers, in configuration order
  std::optional<double> reach_B;       // active reach barrier
  QpStatus status = QpStatus::optimal;
  bool fallback = false;  // QP infeasible; previous velocity held
};

/// Reach task window recorded for monitoring: [switch time, activation + t*].
struct ReachWindow {
  int behavior = -1;
  Vec3 target = Vec3::Zero();
  double epsilon = 0.05;
  double t_switch = 0;
  double t_activate = 0;
  double t_deadline = 0;
  bool closed = false;   // behavior left before the deadline
  double t_end = 0;      // time the behavior was left (when closed)
};

/// Composes xdot_ref for the active behavior. One instance per robot.
/// Per motion tick: evaluate() any number of times (e.g. RK4 stages), then
/// commit() with the new state.
class MotionPlanner {
 public:
  MotionPlanner(std::vector<Behavior> behaviors, MotionConfig cfg)
      : behaviors_(std::move(behaviors)), cfg_(std::move(cfg)) {
    cfg_.clf.check();
    for (const auto& b : behaviors_)
      if (b.ds.has_value() == b.reach.has_value())
        throw std::invalid_argument("behavior " + b.name + " needs exactly one of a field or a reach task");
    if (!(cfg_.mix_duration > 0)) throw std::invalid_argument("mix duration must be positive");
  }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < behaviors_.size(); ++i)
      if (behaviors_[i].name == name) return static_cast<int>(i);
    return -1;
  }
  const std::vector<Behavior>& behaviors() const { return behaviors_; }
  const MotionConfig& config() const { return cfg_; }
  int active() const { return active_; }
  const std::optional<MixState>& mixing() const { return mix_; }
  const std::optional<TimeVaryingCbf>& reach_cbf() const { return reach_; }
  const ReferenceState& reference() const { return ref_; }
  const std::vector<ReachWindow>& reach_windows() const { return windows_; }

  /// Switches to `behavior` (-1: none) at time t with the robot at x. A
  /// no-op when it is already active.
  void select(int behavior, const Vec3& x, double t) {
    if (behavior < -1 || behavior >= static_cast<int>(behaviors_.size()))
      throw std::out_of_range("unknown behavior index " + std::to_string(behavior));
    if (behavior == active_ && started_) return;
    MixState m;
    m.frozen_ref = started_ ? evaluate(x, t, 0).xdot_ref : Vec3::Zero();
    m.switch_time = t;
    m.duration = cfg_.mix_duration;
    if (!windows_.empty() && !windows_.back().closed && windows_.back().behavior == active_) {
      windows_.back().closed = t < windows_.back().t_deadline;
      windows_.back().t_end = t;
    }
    mix_ = started_ ? std::optional<MixState>(m) : std::nullopt;
    active_ = behavior;
    started_ = true;
    reach_.reset();
    if (behavior >= 0) {
      const auto& b = behaviors_[static_cast<std::size_t>(behavior)];
      if (b.ds) ref_ = project_to_orbit(*b.ds, x);
      if (b.reach) {
        ReachWindow w;
        w.behavior = behavior;
        w.target = b.reach->target;
        w.epsilon = b.reach->epsilon;
        w.t_switch = t;
        w.t_activate = mix_ ? m.end_time() : t;
        w.t_deadline = std::numeric_limits<double>::infinity();
        windows_.push_back(w);
        if (!mix_) activate_reach(x, t);
      }
    }
  }

  /// Reference velocity at (x, t); h is the offset of t from the last commit
  /// and moves the tracking reference along its field.
  MotionOutput evaluate(const Vec3& x, double t, double h) {
    MotionOutput out;
    if (!started_) throw std::logic_error("motion planner has no behavior selected");
    Vec3 incoming = behavior_velocity(x, t, h, out);
    if (mix_ && t < mix_->end_time()) {
      out.beta = mix_->beta(t);
      out.xdot_ref = mix(*mix_, t, incoming);
    } else {
      out.xdot_ref = incoming;
    }
    if (out.status != QpStatus::optimal) {
      out.fallback = true;
      out.xdot_ref = last_.xdot_ref;
    }
    return out;
  }

  /// Ends a motion tick: x is the state at time t (= previous t + dt).
  void commit(const Vec3& x, double t, double dt, const MotionOutput& recorded) {
    last_ = recorded;
    if (active_ < 0) return;
    const auto& b = behaviors_[static_cast<std::size_t>(active_)];
    if (b.ds) ref_ = advance_reference(*b.ds, ref_, dt, x, cfg_.snap_radius);
    if (b.reach && !reach_ && mix_ && t >= mix_->end_time() - 1e-12) activate_reach(x, t);
    if (mix_ && t >= mix_->end_time() - 1e-12) mix_.reset();
  }

 private:
  std::vector<Behavior> behaviors_;
  MotionConfig cfg_;
  int active_ = -1;
  bool started_ = false;
  ReferenceState ref_;
  std::optional<TimeVaryingCbf> reach_;
  std::optional<MixState> mix_;
  MotionOutput last_;
  std::vector<ReachWindow> windows_;
  QpSolver nominal_qp_, reach_qp_, idle_qp_;

  void activate_reach(const Vec3& x, double t) {
    const auto& r = *behaviors_[static_cast<std::size_t>(active_)].reach;
    reach_ = make_reach_cbf(x, r.target, r.epsilon, r.speed, r.profile, t);
    windows_.back().t_activate = t;
    windows_.back().t_deadline = reach_->t_deadline;
  }

  const std::vector<StaticCbf>& reach_rows() const {
    static const std::vector<StaticCbf> none;
    return cfg_.reach_static_barriers ? cfg_.barriers : none;
  }

  Vec3 behavior_velocity(const Vec3& x, double t, double h, MotionOutput& out) {
    for (const auto& bar : cfg_.barriers) out.barrier_values.push_back(bar.value(x));
    if (active_ < 0) {
      // no behavior: stay put within the static barriers
      ReferenceState hold{x, Vec3::Zero(), 0};
      auto r = clf_cbf_step(x, hold, Vec3::Zero(), cfg_.barriers, cfg_.clf, cfg_.lambda, idle_qp_);
      out.u = r.u;
      out.status = r.status;
      return r.u;
    }
    const auto& b = behaviors_[static_cast<std::size_t>(active_)];
    if (b.ds) {
      ReferenceState ref = ref_;
      if (h > 0) {
        ref.x_star = rk4(*b.ds, ref_.x_star, h);
        ref.xdot_star = eval_field(*b.ds, ref.x_star);
      }
      Vec3 f = eval_field(*b.ds, x);
      auto r = clf_cbf_step(x, ref, f, cfg_.barriers, cfg_.clf, cfg_.lambda, nominal_qp_);
      out.u = r.u;
      out.eta = r.eta;
      out.V = r.V;
      out.status = r.status;
      return f + r.u;
    }
    // reach: before activation the barrier is re-anchored at x every call
    TimeVaryingCbf c = reach_ ? *reach_ : make_reach_cbf(x, b.reach->target, b.reach->epsilon, b.reach->speed,
                                                         b.reach->profile, t);
    auto r = tv_cbf_step(x, t, Vec3::Zero(), c, cfg_.reach_gain, reach_qp_, reach_rows());
    if (reach_) out.reach_B = r.B;
    out.u = r.u;
    out.status = r.status;
    return r.u;
  }
};

}  // namespace rtlplan
