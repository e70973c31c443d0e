#pragma once

// Nominal autonomous dynamical systems and the reference point that flows
// along them.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rtlplan {

using Vec3 = Eigen::Vector3d;

enum class DsKind { point_attractor, planar_limit_cycle, line_patrol };

/// Field definitions (p is the in-plane offset from the center, z the offset
/// along the normal, rho = |p|):
///   point_attractor     f = gain (x_g - x)
///   planar_limit_cycle  f = omega n x p + k (r - rho) p / max(rho, r/2) - k z n
///   line_patrol         the limit cycle of the ellipse inscribed in the
///                       segment, run in coordinates normalized by its
///                       semi-axes; peak speed along the segment is `speed`.
struct NominalDS {
  std::string id;
  DsKind kind = DsKind::point_attractor;
  Vec3 target = Vec3::Zero();   // point_attractor
  double gain = 1.0;
  Vec3 center = Vec3::Zero();   // planar_limit_cycle
  double radius = 0.1;
  double omega = 1.0;
  Vec3 normal = Vec3::UnitZ();  // limit cycle and patrol plane
  double contraction = 1.0;
  Vec3 end_a = Vec3::Zero();    // line_patrol
  Vec3 end_b = Vec3::UnitX();
  double half_width = 0.02;
  double speed = 0.1;

  static NominalDS point(std::string id, Vec3 target, double gain) {
    NominalDS d;
    d.id = std::move(id);
    d.kind = DsKind::point_attractor;
    d.target = target;
    d.gain = gain;
    d.validate();
    return d;
  }
  static NominalDS limit_cycle(std::string id, Vec3 center, double radius, double omega, Vec3 normal, double k) {
    NominalDS d;
    d.id = std::move(id);
    d.kind = DsKind::planar_limit_cycle;
    d.center = center;
    d.radius = radius;
    d.omega = omega;
    d.normal = normal;
    d.contraction = k;
    d.validate();
    return d;
  }
  static NominalDS patrol(std::string id, Vec3 a, Vec3 b, double half_width, double speed, Vec3 normal, double k) {
    NominalDS d;
    d.id = std::move(id);
    d.kind = DsKind::line_patrol;
    d.end_a = a;
    d.end_b = b;
    d.half_width = half_width;
    d.speed = speed;
    d.normal = normal;
    d.contraction = k;
    d.validate();
    return d;
  }

  void validate() const {
    auto bad = [&](const std::string& what) { throw std::invalid_argument("behavior " + id + ": " + what); };
    switch (kind) {
      case DsKind::point_attractor:
        if (!(gain > 0)) bad("gain must be positive");
        if (!target.allFinite()) bad("target must be finite");
        break;
      case DsKind::planar_limit_cycle:
        if (!(radius > 0)) bad("radius must be positive");
        if (!(contraction > 0)) bad("contraction must be positive");
        if (!(normal.norm() > 1e-12)) bad("normal must be nonzero");
        if (!std::isfinite(omega)) bad("omega must be finite");
        break;
      case DsKind::line_patrol: {
        double len = (end_b - end_a).norm();
        if (!(len > 1e-9)) bad("endpoints must differ");
        if (!(half_width > 0) || half_width > len / 2) bad("half_width must lie in (0, |b-a|/2]");
        if (!(speed > 0)) bad("speed must be positive");
        if (!(contraction > 0)) bad("contraction must be positive");
        Vec3 u = (end_b - end_a) / len;
        Vec3 n = normal.normalized();
        if (!(normal.norm() > 1e-12) || std::abs(u.dot(n)) > 1e-9) bad("normal must be orthogonal to the segment");
        break;
      }
    }
  }
};

struct ReferenceState {
  Vec3 x_star = Vec3::Zero();
  Vec3 xdot_star = Vec3::Zero();
  double phase = 0.0;
};

namespace detail {

struct Frame {
  Vec3 c, e1, e2, n;
  double a, b;  // semi-axes along e1, e2
};

// e1 comes from the coordinate axis least aligned with n (first on ties).
inline Vec3 plane_axis(const Vec3& n) {
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(n[i]) < std::abs(n[best])) best = i;
  Vec3 axis = Vec3::Unit(best);
  return (axis - axis.dot(n) * n).normalized();
}

inline Frame frame_of(const NominalDS& ds) {
  Frame f;
  f.n = ds.normal.normalized();
  if (ds.kind == DsKind::line_patrol) {
    f.c = (ds.end_a + ds.end_b) / 2;
    f.e1 = (ds.end_b - ds.end_a).normalized();
    f.a = (ds.end_b - ds.end_a).norm() / 2;
    f.b = ds.half_width;
  } else {
    f.c = ds.center;
    f.e1 = plane_axis(f.n);
    f.a = f.b = ds.radius;
  }
  f.e2 = f.n.cross(f.e1);
  return f;
}

// Unit-radius cycle in normalized plane coordinates (s1, s2).
inline Eigen::Vector2d unit_cycle(double s1, double s2, double w, double k) {
  double rho = std::hypot(s1, s2);
  double h = k * (1.0 - rho) / std::max(rho, 0.5);
  return {-w * s2 + h * s1, w * s1 + h * s2};
}

inline double patrol_rate(const NominalDS& ds, const Frame& f) { return ds.speed / f.a; }

// Nearest point of the axis-aligned ellipse (e0 >= e1 > 0) to (y0, y1) in the
// closed first quadrant; bisection on the Lagrange multiplier.
inline Eigen::Vector2d ellipse_nearest_quadrant(double e0, double e1, double y0, double y1) {
  if (y1 > 0) {
    if (y0 > 0) {
      double z0 = y0 / e0, z1 = y1 / e1;
      double g = z0 * z0 + z1 * z1 - 1;
      if (g == 0) return {y0, y1};
      double r0 = (e0 / e1) * (e0 / e1);
      double n0 = r0 * z0;
      double s0 = z1 - 1;
      double s1 = g < 0 ? 0 : std::hypot(n0, z1) - 1;
      double s = 0;
      for (int i = 0; i < 200; ++i) {
        s = (s0 + s1) / 2;
        if (s == s0 || s == s1) break;
        double ratio0 = n0 / (s + r0), ratio1 = z1 / (s + 1);
        double gs = ratio0 * ratio0 + ratio1 * ratio1 - 1;
        if (gs > 0)
          s0 = s;
        else if (gs < 0)
          s1 = s;
        else
          break;
      }
      return {r0 * y0 / (s + r0), y1 / (s + 1)};
    }
    return {0, e1};
  }
  double numer = e0 * y0, denom = e0 * e0 - e1 * e1;
  if (numer < denom) {
    double xd = numer / denom;
    return {e0 * xd, e1 * std::sqrt(std::max(0.0, 1 - xd * xd))};
  }
  return {e0, 0};
}

}  // namespace detail

inline Vec3 eval_field(const NominalDS& ds, const Vec3& x) {
  if (ds.kind == DsKind::point_attractor) return ds.gain * (ds.target - x);
  const auto f = detail::frame_of(ds);
  Vec3 d = x - f.c;
  double z = f.n.dot(d);
  double u = f.e1.dot(d), v = f.e2.dot(d);
  double w = ds.kind == DsKind::line_patrol ? detail::patrol_rate(ds, f) : ds.omega;
  Eigen::Vector2d s = detail::unit_cycle(u / f.a, v / f.b, w, ds.contraction);
  return f.a * s[0] * f.e1 + f.b * s[1] * f.e2 - ds.contraction * z * f.n;
}

/// Global Lipschitz constant of eval_field.
inline double lipschitz_constant(const NominalDS& ds) {
  switch (ds.kind) {
    case DsKind::point_attractor:
      return ds.gain;
    case DsKind::planar_limit_cycle:
      return std::abs(ds.omega) + 2 * ds.contraction;
    case DsKind::line_patrol: {
      auto f = detail::frame_of(ds);
      return (f.a / f.b) * (detail::patrol_rate(ds, f) + 2 * ds.contraction);
    }
  }
  return 0;
}

/// Nearest point of the attractor. At the exact center of a circular cycle
/// the phase-0 point c + r e1 is returned.
inline ReferenceState project_to_orbit(const NominalDS& ds, const Vec3& x) {
  ReferenceState r;
  if (ds.kind == DsKind::point_attractor) {
    r.x_star = ds.target;
  } else {
    const auto f = detail::frame_of(ds);
    Vec3 d = x - f.c;
    double u = f.e1.dot(d), v = f.e2.dot(d);
    double pu, pv;
    if (f.a == f.b) {
      double rho = std::hypot(u, v);
      if (rho == 0) {
        pu = f.a;
        pv = 0;
      } else {
        pu = f.a * u / rho;
        pv = f.a * v / rho;
      }
    } else {
      auto q = detail::ellipse_nearest_quadrant(f.a, f.b, std::abs(u), std::abs(v));
      pu = std::copysign(q[0], u);
      pv = std::copysign(q[1], v);
    }
    r.x_star = f.c + pu * f.e1 + pv * f.e2;
    r.phase = std::atan2(pv / f.b, pu / f.a);
  }
  r.xdot_star = eval_field(ds, r.x_star);
  return r;
}

/// Phase of a point: angle in the normalized plane coordinates, 0 for attractors.
inline double phase_of(const NominalDS& ds, const Vec3& x) {
  if (ds.kind == DsKind::point_attractor) return 0;
  const auto f = detail::frame_of(ds);
  Vec3 d = x - f.c;
  return std::atan2(f.e2.dot(d) / f.b, f.e1.dot(d) / f.a);
}

inline Vec3 rk4(const NominalDS& ds, const Vec3& x, double dt) {
  Vec3 k1 = eval_field(ds, x);
  Vec3 k2 = eval_field(ds, x + dt / 2 * k1);
  Vec3 k3 = eval_field(ds, x + dt / 2 * k2);
  Vec3 k4 = eval_field(ds, x + dt * k3);
  return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

/// Moves the reference along the nominal flow by dt, or re-projects it onto
/// the attractor when x has drifted further than snap_radius from it.
inline ReferenceState advance_reference(const NominalDS& ds, const ReferenceState& ref, double dt, const Vec3& x,
                                        double snap_radius) {
  if (!(dt > 0)) throw std::invalid_argument("advance_reference: dt must be positive");
  if ((x - ref.x_star).norm() > snap_radius) return project_to_orbit(ds, x);
  ReferenceState r;
  r.x_star = rk4(ds, ref.x_star, dt);
  r.xdot_star = eval_field(ds, r.x_star);
  r.phase = phase_of(ds, r.x_star);
  return r;
}

}  // namespace rtlplan
