#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>

#include "psm/errors.hpp"

namespace psm {

// Minimal fixed-size vector/matrix kit. The whole model lives in R^3, so a
// dependency on a general linear algebra library buys nothing here.

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }

  Vec3& operator+=(const Vec3& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }

  bool operator==(const Vec3&) const = default;
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 cwise_mul(const Vec3& a, const Vec3& b) {
  return {a.x * b.x, a.y * b.y, a.z * b.z};
}

inline bool all_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{};

  double& operator()(std::size_t r, std::size_t c) { return m[3 * r + c]; }
  double operator()(std::size_t r, std::size_t c) const { return m[3 * r + c]; }

  static Mat3 identity() {
    Mat3 out;
    out(0, 0) = out(1, 1) = out(2, 2) = 1.0;
    return out;
  }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 out;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) s += (*this)(r, k) * o(k, c);
        out(r, c) = s;
      }
    return out;
  }

  Mat3 transposed() const {
    Mat3 out;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) out(r, c) = (*this)(c, r);
    return out;
  }

  bool operator==(const Mat3&) const = default;
};

inline double det(const Mat3& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

inline double max_abs(const Mat3& a) {
  double m = 0.0;
  for (double v : a.m) m = std::max(m, std::abs(v));
  return m;
}

// Frobenius norm of (A^T A - I); near zero for orthonormal A.
inline double orthonormality_defect(const Mat3& a) {
  Mat3 d = a.transposed() * a;
  d(0, 0) -= 1.0; d(1, 1) -= 1.0; d(2, 2) -= 1.0;
  double s = 0.0;
  for (double v : d.m) s += v * v;
  return std::sqrt(s);
}

// Solves A x = b by Gaussian elimination with partial pivoting.
// Returns nullopt when a pivot falls below the relative tolerance.
inline std::optional<Vec3> solve3(const Mat3& a, const Vec3& b) {
  double aug[3][4] = {{a(0, 0), a(0, 1), a(0, 2), b.x},
                      {a(1, 0), a(1, 1), a(1, 2), b.y},
                      {a(2, 0), a(2, 1), a(2, 2), b.z}};
  const double tol = 1e-12 * std::max(1.0, max_abs(a));
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(aug[r][col]) > std::abs(aug[piv][col])) piv = r;
    if (std::abs(aug[piv][col]) < tol) return std::nullopt;
    if (piv != col)
      for (int c = col; c < 4; ++c) std::swap(aug[piv][c], aug[col][c]);
    for (int r = col + 1; r < 3; ++r) {
      double f = aug[r][col] / aug[col][col];
      for (int c = col; c < 4; ++c) aug[r][c] -= f * aug[col][c];
    }
  }
  Vec3 x;
  for (int r = 2; r >= 0; --r) {
    double s = aug[r][3];
    for (int c = r + 1; c < 3; ++c) s -= aug[r][c] * x[c];
    x[r] = s / aug[r][r];
  }
  return x;
}

// Cholesky factorization success is the positive-definiteness probe used by
// the mass-matrix checks. Returns false on a non-positive pivot.
inline bool cholesky_ok(const Mat3& a) {
  double l[3][3] = {};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (s <= 0.0) return false;
        l[i][i] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  return true;
}

inline Mat3 rot_x(double a) {
  double c = std::cos(a), s = std::sin(a);
  Mat3 r = Mat3::identity();
  r(1, 1) = c; r(1, 2) = -s;
  r(2, 1) = s; r(2, 2) = c;
  return r;
}

inline Mat3 rot_y(double a) {
  double c = std::cos(a), s = std::sin(a);
  Mat3 r = Mat3::identity();
  r(0, 0) = c; r(0, 2) = s;
  r(2, 0) = -s; r(2, 2) = c;
  return r;
}

inline Mat3 rot_z(double a) {
  double c = std::cos(a), s = std::sin(a);
  Mat3 r = Mat3::identity();
  r(0, 0) = c; r(0, 1) = -s;
  r(1, 0) = s; r(1, 1) = c;
  return r;
}

// Yaw-pitch-roll composition R_z(yaw) * R_y(pitch) * R_x(roll), angles taken
// from the orientation vector as (x=roll, y=pitch, z=yaw).
inline Mat3 ypr_rotation(const Vec3& theta) {
  return rot_z(theta.z) * rot_y(theta.y) * rot_x(theta.x);
}

}  // namespace psm
