#pragma once

#include <cmath>
#include <optional>

#include "psm/body_params.hpp"
#include "psm/errors.hpp"
#include "psm/linalg.hpp"

namespace psm {

// Angular state of the 3-DoF spring-damper pendulum.
struct PendulumState {
  Vec3 theta{};      // angles about x,y,z [rad]
  Vec3 theta_dot{};  // angular velocities [rad/s]
  double t = 0.0;    // time [s]

  bool valid_workspace() const {
    return all_finite(theta) && all_finite(theta_dot) &&
           std::abs(theta.x) < M_PI / 2.0 && std::abs(theta.y) < M_PI / 2.0;
  }
};

// Pendulum-bob length and its derivatives. All four are scaled by l_b so
// they carry proper units (m, m/s, m/rad); the bare trigonometric radius
// would otherwise be mixed with l_b-scaled terms downstream.
struct LengthTerms {
  double l = 0.0;      // horizontal bob radius [m]
  double l_dot = 0.0;  // time derivative [m/s]
  double l_px = 0.0;   // partial w.r.t. theta_x [m/rad]
  double l_py = 0.0;   // partial w.r.t. theta_y [m/rad]
  bool degenerate = false;  // true at the upright pose where l == 0
};

// l^2 / l_b^2 = sin^2(ty) cos^2(tx) + sin^2(tx); equals 1 - cos^2(tx)cos^2(ty).
inline LengthTerms length_terms(const Vec3& theta, const Vec3& theta_dot,
                                double l_b) {
  double sx = std::sin(theta.x), cx = std::cos(theta.x);
  double sy = std::sin(theta.y), cy = std::cos(theta.y);
  double lam_sq = sy * sy * cx * cx + sx * sx;

  LengthTerms out;
  if (lam_sq < 1e-30) {
    // Upright pose: the derivative formulas are 0/0. Use the smooth-path
    // limit convention (zero) and flag the caller.
    out.degenerate = true;
    return out;
  }
  double lam = std::sqrt(lam_sq);
  out.l = l_b * lam;
  // d(lam^2)/dtx = sin(2tx) cos^2(ty), d(lam^2)/dty = sin(2ty) cos^2(tx)
  out.l_px = l_b * 0.5 * std::sin(2.0 * theta.x) * cy * cy / lam;
  out.l_py = l_b * 0.5 * std::sin(2.0 * theta.y) * cx * cx / lam;
  out.l_dot = out.l_px * theta_dot.x + out.l_py * theta_dot.y;
  return out;
}

// Mass matrix of the pendulum. Symmetric; positive definite on the
// workspace |tx|,|ty| < pi/2.
inline Mat3 mass_matrix(const Vec3& theta, const BodyParams& p) {
  double sx = std::sin(theta.x), cx = std::cos(theta.x);
  double sy = std::sin(theta.y), cy = std::cos(theta.y);
  double l = length_terms(theta, Vec3{}, p.l_b).l;

  Mat3 m;
  m(0, 0) = p.m_b * p.l_b * p.l_b + p.J_b.x;
  m(1, 1) = p.m_b * p.l_b * p.l_b * cx * cx + p.J_b.y;
  m(2, 2) = p.m_b * l * l + p.J_b.z;
  m(0, 1) = m(1, 0) = 0.0;
  m(0, 2) = m(2, 0) = -p.m_b * p.l_b * l * cy * sx;
  m(1, 2) = m(2, 1) = -p.m_b * p.l_b * l * sy * cx;
  return m;
}

// Velocity-product, spring, and damper torques. Derived by Euler-Lagrange
// from the kinetic energy; the theta_z row carries a 2 m l l_dot theta_dot_z
// coupling term required for energy consistency.
inline Vec3 bias_vector(const Vec3& theta, const Vec3& theta_dot,
                        const Vec3& theta_m, const Vec3& theta_dot_m,
                        const Vec3& k_hat, const Vec3& b_hat,
                        const BodyParams& p, bool* degenerate = nullptr) {
  double sx = std::sin(theta.x), cx = std::cos(theta.x);
  double sy = std::sin(theta.y), cy = std::cos(theta.y);
  LengthTerms lt = length_terms(theta, theta_dot, p.l_b);
  if (degenerate) *degenerate = lt.degenerate;

  double mb = p.m_b, lb = p.l_b;
  double tdx = theta_dot.x, tdy = theta_dot.y, tdz = theta_dot.z;

  Vec3 h;
  h.x = mb * lb * lb * tdy * tdy * sx * cx
      + k_hat.x * (theta.x - theta_m.x)
      + b_hat.x * (theta_dot.x - theta_dot_m.x)
      - lt.l * lt.l_px * mb * tdz * tdz
      + mb * lb * (lt.l_px * sy * cx - lt.l_py * cy * sx) * tdy * tdz;

  h.y = -mb * lb * lb * tdx * tdy * std::sin(2.0 * theta.x)
      + k_hat.y * (theta.y - theta_m.y)
      + b_hat.y * (theta_dot.y - theta_dot_m.y)
      - lt.l * lt.l_py * mb * tdz * tdz
      + mb * lb * (lt.l_py * cy * sx - lt.l_px * sy * cx) * tdx * tdz;

  h.z = -mb * lb * lt.l * (tdx * tdx + tdy * tdy) * cx * cy
      + k_hat.z * (theta.z - theta_m.z)
      + b_hat.z * (theta_dot.z - theta_dot_m.z)
      + 2.0 * mb * lb * lt.l * tdx * tdy * sx * sy
      + 2.0 * mb * lt.l * lt.l_dot * tdz
      - mb * lb * lt.l_dot * (tdx * cy * sx + tdy * sy * cx);

  return h;
}

// Gravity torque; the yaw axis carries none.
inline Vec3 gravity_vector(const Vec3& theta, const BodyParams& p) {
  double sx = std::sin(theta.x), cx = std::cos(theta.x);
  double sy = std::sin(theta.y), cy = std::cos(theta.y);
  return {p.m_b * p.l_b * p.g * sx * cy, p.m_b * p.l_b * p.g * cx * sy, 0.0};
}

struct DynTerms {
  Mat3 M;
  Vec3 H;
  Vec3 G;
  LengthTerms length;
};

inline DynTerms dyn_terms(const Vec3& theta, const Vec3& theta_dot,
                          const Vec3& theta_m, const Vec3& theta_dot_m,
                          const Vec3& k_hat, const Vec3& b_hat,
                          const BodyParams& p) {
  DynTerms out;
  out.M = mass_matrix(theta, p);
  out.H = bias_vector(theta, theta_dot, theta_m, theta_dot_m, k_hat, b_hat, p);
  out.G = gravity_vector(theta, p);
  out.length = length_terms(theta, theta_dot, p.l_b);
  return out;
}

// Inputs held constant across one integration step (zero-order hold).
struct PendulumInputs {
  Vec3 theta_m{};
  Vec3 theta_dot_m{};
  Vec3 k_hat{};
  Vec3 b_hat{};
  Vec3 tau_hat{};
};

struct DivergenceBounds {
  double max_angle = M_PI;      // [rad]
  double max_velocity = 50.0;   // [rad/s]
};

// theta_ddot = M^{-1} (tau - H - G).
inline Vec3 angular_acceleration(const Vec3& theta, const Vec3& theta_dot,
                                 const PendulumInputs& in,
                                 const BodyParams& p) {
  Mat3 m = mass_matrix(theta, p);
  Vec3 h = bias_vector(theta, theta_dot, in.theta_m, in.theta_dot_m, in.k_hat,
                       in.b_hat, p);
  Vec3 g = gravity_vector(theta, p);
  std::optional<Vec3> acc = solve3(m, in.tau_hat - h - g);
  if (!acc)
    throw Error(ErrorCode::SingularMass, "mass matrix factorization failed");
  return *acc;
}

// Advances the state by one period T with classical RK4. `substeps` splits T
// into equal RK4 sub-intervals; the inputs stay held over the whole period.
// Throws SingularMass / StateDiverged; it never saturates silently.
inline PendulumState integrate_step(const PendulumState& state,
                                    const PendulumInputs& in,
                                    const BodyParams& p, int substeps = 1,
                                    const DivergenceBounds& bounds = {}) {
  if (substeps < 1)
    throw Error(ErrorCode::InvalidArgument, "substeps must be >= 1");
  double h = p.T / static_cast<double>(substeps);
  Vec3 q = state.theta;
  Vec3 v = state.theta_dot;
  for (int s = 0; s < substeps; ++s) {
    Vec3 a1 = angular_acceleration(q, v, in, p);
    Vec3 q2 = q + v * (h / 2.0), v2 = v + a1 * (h / 2.0);
    Vec3 a2 = angular_acceleration(q2, v2, in, p);
    Vec3 q3 = q + v2 * (h / 2.0), v3 = v + a2 * (h / 2.0);
    Vec3 a3 = angular_acceleration(q3, v3, in, p);
    Vec3 q4 = q + v3 * h, v4 = v + a3 * h;
    Vec3 a4 = angular_acceleration(q4, v4, in, p);
    q = q + (v + v2 * 2.0 + v3 * 2.0 + v4) * (h / 6.0);
    v = v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
  }

  PendulumState next{q, v, state.t + p.T};
  if (!all_finite(next.theta) || !all_finite(next.theta_dot))
    throw Error(ErrorCode::StateDiverged, "non-finite state after step");
  for (std::size_t i = 0; i < 3; ++i) {
    if (std::abs(next.theta[i]) > bounds.max_angle ||
        std::abs(next.theta_dot[i]) > bounds.max_velocity)
      throw Error(ErrorCode::StateDiverged, "state exceeded divergence bounds");
  }
  return next;
}

// Kinetic energy of the pendulum model (used by the conservative-limit
// checks; matches the quadratic form behind mass_matrix/bias_vector).
inline double kinetic_energy(const Vec3& theta, const Vec3& theta_dot,
                             const BodyParams& p) {
  double sx = std::sin(theta.x), cx = std::cos(theta.x);
  double sy = std::sin(theta.y), cy = std::cos(theta.y);
  double l = length_terms(theta, theta_dot, p.l_b).l;
  double tdx = theta_dot.x, tdy = theta_dot.y, tdz = theta_dot.z;
  double mb = p.m_b, lb = p.l_b;
  return 0.5 * mb * (lb * lb * tdx * tdx + lb * lb * tdy * tdy * cx * cx +
                     l * l * tdz * tdz -
                     2.0 * lb * l * tdx * tdz * cy * sx -
                     2.0 * lb * l * tdy * tdz * sy * cx) +
         0.5 * (p.J_b.x * tdx * tdx + p.J_b.y * tdy * tdy + p.J_b.z * tdz * tdz);
}

// Potential energy whose gradient is gravity_vector. Minimum at upright, so
// the free pendulum oscillates about theta = 0.
inline double gravity_potential(const Vec3& theta, const BodyParams& p) {
  return -p.m_b * p.g * p.l_b * std::cos(theta.x) * std::cos(theta.y);
}

}  // namespace psm
