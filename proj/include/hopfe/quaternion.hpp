#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hopfe/errors.hpp"

namespace hopfe {

// Below this norm a quaternion cannot define a rotation.
inline constexpr double kZeroQuaternionNorm = 1e-12;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Point3& operator+=(const Point3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Point3&) const = default;
};

constexpr double dot(const Point3& u, const Point3& v) { return u.x * v.x + u.y * v.y + u.z * v.z; }
inline double norm(const Point3& v) { return std::sqrt(dot(v, v)); }

constexpr Point3 cross(const Point3& u, const Point3& v) {
  return {u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
}

// a + bi + cj + dk
struct Quaternion {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;

  static constexpr Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }
  static constexpr Quaternion pure(const Point3& v) { return {0.0, v.x, v.y, v.z}; }

  constexpr Point3 vec() const { return {b, c, d}; }

  constexpr Quaternion operator+(const Quaternion& o) const { return {a + o.a, b + o.b, c + o.c, d + o.d}; }
  constexpr Quaternion operator-(const Quaternion& o) const { return {a - o.a, b - o.b, c - o.c, d - o.d}; }
  constexpr Quaternion operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
  constexpr Quaternion& operator+=(const Quaternion& o) {
    a += o.a;
    b += o.b;
    c += o.c;
    d += o.d;
    return *this;
  }
  constexpr bool operator==(const Quaternion&) const = default;
};

constexpr double dot(const Quaternion& p, const Quaternion& q) {
  return p.a * q.a + p.b * q.b + p.c * q.c + p.d * q.d;
}
constexpr double squared_norm(const Quaternion& q) { return dot(q, q); }
inline double norm(const Quaternion& q) { return std::sqrt(squared_norm(q)); }

constexpr Quaternion conjugate(const Quaternion& q) { return {q.a, -q.b, -q.c, -q.d}; }

// Non-commutative Hamilton product p ⊗ q.
constexpr Quaternion hamilton(const Quaternion& p, const Quaternion& q) {
  return {
      p.a * q.a - p.b * q.b - p.c * q.c - p.d * q.d,
      p.a * q.b + p.b * q.a + p.c * q.d - p.d * q.c,
      p.a * q.c - p.b * q.d + p.c * q.a + p.d * q.b,
      p.a * q.d + p.b * q.c - p.c * q.b + p.d * q.a,
  };
}

// Adjoints of r = p ⊗ q given dL/dr, using <p ⊗ q, g> = <p, g ⊗ q̄> = <q, p̄ ⊗ g>.
struct HamiltonGrad {
  Quaternion p;
  Quaternion q;
};

constexpr HamiltonGrad hamilton_vjp(const Quaternion& p, const Quaternion& q, const Quaternion& g) {
  return {hamilton(g, conjugate(q)), hamilton(conjugate(p), g)};
}

inline void require_nonzero(const Quaternion& q) {
  if (!(squared_norm(q) >= kZeroQuaternionNorm * kZeroQuaternionNorm)) {
    throw ZeroQuaternion("quaternion norm below 1e-12 cannot define a rotation");
  }
}

// q ⊗ v ⊗ q̄ / |q|². Any nonzero scaling of q yields the same rotation.
inline Point3 rotate(const Quaternion& q, const Point3& v) {
  require_nonzero(q);
  const Quaternion u = hamilton(hamilton(q, Quaternion::pure(v)), conjugate(q));
  return u.vec() * (1.0 / squared_norm(q));
}

struct RotateGrad {
  Quaternion q;
  Point3 v;
};

// Adjoints of w = rotate(q, v) given dL/dw. `w` is the forward result.
inline RotateGrad rotate_vjp(const Quaternion& q, const Point3& v, const Point3& w, const Point3& gw) {
  const double inv_n = 1.0 / squared_norm(q);
  const Quaternion g = Quaternion::pure(gw);
  // d<g, q v q̄>/dq = -2 g q v for pure g and v; the 1/|q|² factor adds -2<gw, w> q.
  const Quaternion gq = hamilton(hamilton(g, q), Quaternion::pure(v)) * (-2.0 * inv_n) -
                        q * (2.0 * dot(gw, w) * inv_n);
  const Point3 gv = hamilton(hamilton(conjugate(q), g), q).vec() * inv_n;
  return {gq, gv};
}

// Wraps to (-pi, pi].
inline double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(angle, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  if (w > std::numbers::pi) w -= two_pi;
  return w;
}

struct AngleAxis {
  double angle = 0.0;  // [0, 2pi]
  Point3 axis{1.0, 0.0, 0.0};
  // angle with the sign chosen so the first axis component of magnitude
  // above 1e-9 is positive.
  double signed_angle = 0.0;
};

inline AngleAxis angle_axis(const Quaternion& q) {
  require_nonzero(q);
  const double n = norm(q);
  AngleAxis out;
  out.angle = 2.0 * std::acos(std::clamp(q.a / n, -1.0, 1.0));
  const Point3 im = q.vec();
  const double im_norm = norm(im);
  if (im_norm >= 1e-12) out.axis = im * (1.0 / im_norm);
  out.signed_angle = out.angle;
  for (double comp : {out.axis.x, out.axis.y, out.axis.z}) {
    if (std::abs(comp) > 1e-9) {
      if (comp < 0.0) out.signed_angle = -out.angle;
      break;
    }
  }
  return out;
}

}  // namespace hopfe
