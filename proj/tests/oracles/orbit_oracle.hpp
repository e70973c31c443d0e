#pragma once

// Dense parametric sampling of planar closed orbits, independent of the
// projection code under test.

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace oracle {

struct Orbit {
  Eigen::Vector3d c, e1, e2;  // e1, e2 orthonormal
  double a, b;

  Eigen::Vector3d at(double theta) const { return c + a * std::cos(theta) * e1 + b * std::sin(theta) * e2; }

  double min_distance(const Eigen::Vector3d& x, int samples = 10000) const {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
      double th = 2 * M_PI * i / samples;
      best = std::min(best, (at(th) - x).norm());
    }
    return best;
  }
};

}  // namespace oracle
