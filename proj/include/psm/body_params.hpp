#pragma once

#include <cmath>

#include "psm/errors.hpp"
#include "psm/linalg.hpp"

namespace psm {

// Physical constants of the monitored subject plus the sampling period.
// Inertia defaults to the solid-cylinder approximation of the upper body:
//   J_x = J_y = (1/12) m (3 r^2 + l^2),  J_z = (1/2) m r^2.
struct BodyParams {
  double m_b = 20.0;    // upper-body mass [kg]
  double l_b = 0.2;     // waist-to-chest length [m]
  double r_b = 0.25;    // torso radius [m]
  Vec3 J_b{};           // inertia about x,y,z [kg m^2]
  Vec3 K_c{500.0, 500.0, 1200.0};  // baseline stiffness [N m/rad]
  Vec3 B_c{40.0, 40.0, 60.0};      // baseline damping [N m s/rad]
  double g = 9.8;       // gravity [m/s^2]
  double T = 0.04;      // sampling period [s]
  double J_bs = 0.4;    // scalar reduced-model inertia [kg m^2]

  // True when J_b was set directly instead of from the cylinder geometry.
  bool inertia_overridden = false;

  static Vec3 cylinder_inertia(double m_b, double l_b, double r_b) {
    double jxy = (1.0 / 12.0) * m_b * (3.0 * r_b * r_b + l_b * l_b);
    double jz = 0.5 * m_b * r_b * r_b;
    return {jxy, jxy, jz};
  }

  static BodyParams from_geometry(double m_b, double l_b, double r_b) {
    BodyParams p;
    p.m_b = m_b;
    p.l_b = l_b;
    p.r_b = r_b;
    p.J_b = cylinder_inertia(m_b, l_b, r_b);
    p.validate();
    return p;
  }

  void validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(m_b) || !positive(l_b) || !positive(r_b) || !positive(g) ||
        !positive(J_bs))
      throw Error(ErrorCode::InvalidArgument, "body parameters must be positive");
    if (!positive(J_b.x) || !positive(J_b.y) || !positive(J_b.z))
      throw Error(ErrorCode::InvalidArgument, "inertia components must be positive");
    if (!(T > 0.0 && T <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "sampling period T must be in (0, 1]");
    for (std::size_t i = 0; i < 3; ++i)
      if (!(K_c[i] > 0.0) || !(B_c[i] > 0.0))
        throw Error(ErrorCode::InvalidArgument, "K_c and B_c must be positive");
  }

  // Whether J_b matches the cylinder formulas for (m_b, l_b, r_b).
  bool inertia_matches_geometry(double rel_tol = 1e-9) const {
    Vec3 geo = cylinder_inertia(m_b, l_b, r_b);
    for (std::size_t i = 0; i < 3; ++i) {
      double scale = std::max(std::abs(geo[i]), 1e-12);
      if (std::abs(J_b[i] - geo[i]) > rel_tol * scale) return false;
    }
    return true;
  }
};

inline BodyParams default_body_params() {
  return BodyParams::from_geometry(20.0, 0.2, 0.25);
}

}  // namespace psm
