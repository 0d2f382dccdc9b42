#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace dal {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Vec3&) const = default;
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

/// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 rot_z(double yaw) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {{c, -s, 0, s, c, 0, 0, 0, 1}};
  }
  static Mat3 diag(double a, double b, double c) { return {{a, 0, 0, 0, b, 0, 0, 0, c}}; }

  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  Mat3 inverse() const {
    const double d = det();
    Mat3 r;
    r(0, 0) = (m[4] * m[8] - m[5] * m[7]) / d;
    r(0, 1) = (m[2] * m[7] - m[1] * m[8]) / d;
    r(0, 2) = (m[1] * m[5] - m[2] * m[4]) / d;
    r(1, 0) = (m[5] * m[6] - m[3] * m[8]) / d;
    r(1, 1) = (m[0] * m[8] - m[2] * m[6]) / d;
    r(1, 2) = (m[2] * m[3] - m[0] * m[5]) / d;
    r(2, 0) = (m[3] * m[7] - m[4] * m[6]) / d;
    r(2, 1) = (m[1] * m[6] - m[0] * m[7]) / d;
    r(2, 2) = (m[0] * m[4] - m[1] * m[3]) / d;
    return r;
  }
  bool operator==(const Mat3&) const = default;
};

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  constexpr double two_pi = 2 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

/// Absolute angular difference in [0, pi].
inline double angle_diff(double a, double b) { return std::abs(wrap_angle(a - b)); }

}  // namespace dal
