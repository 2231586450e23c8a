#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <vector>

#include "hopfe/errors.hpp"
#include "hopfe/quaternion.hpp"

namespace hopfe {

// When 1 + p1 falls to this value the primary section of the bundle is
// singular and the lift switches to the chart centred on -i.
inline constexpr double kAntipodalChartThreshold = 1e-6;
inline constexpr double kSphereTolerance = 1e-6;

// Hopf map S³ → S²: the image of (1,0,0) under the rotation encoded by r.
inline Point3 hopf_map(const Quaternion& r) {
  require_nonzero(r);
  const double n2 = squared_norm(r);
  return Point3{r.a * r.a + r.b * r.b - r.c * r.c - r.d * r.d,
                2.0 * (r.a * r.d + r.b * r.c),
                2.0 * (r.b * r.d - r.a * r.c)} *
         (1.0 / n2);
}

// A point of S³ lying over `source`; the whole fiber is base ⊗ e^{it}.
struct FiberBase {
  Quaternion r_prime;
  Point3 source;
};

namespace detail {

inline bool use_antipodal_chart(const Point3& p) { return 1.0 + p.x <= kAntipodalChartThreshold; }

// Lift of a unit point without the sphere check. Primary chart:
//   r' = ((1+p1) i + p2 j + p3 k) / sqrt(2(1+p1)).
// Antipodal chart (exact lift, equals j at (-1,0,0)):
//   r' = (-p3 + p2 i + (1-p1) j) / sqrt(2(1-p1)).
inline Quaternion lift(const Point3& p) {
  if (use_antipodal_chart(p)) {
    const double s = 1.0 - p.x;
    const double inv = 1.0 / std::sqrt(2.0 * s);
    return {-p.z * inv, p.y * inv, s * inv, 0.0};
  }
  const double s = 1.0 + p.x;
  const double inv = 1.0 / std::sqrt(2.0 * s);
  return {0.0, s * inv, p.y * inv, p.z * inv};
}

// dL/dp for r' = lift(p), given dL/dr'. Differentiates the chart formula as a
// function on R³.
inline Point3 lift_vjp(const Point3& p, const Quaternion& g) {
  if (use_antipodal_chart(p)) {
    const double s = 1.0 - p.x;
    const double inv = 1.0 / std::sqrt(2.0 * s);
    const double inv3 = inv * inv * inv;
    // d/dp1 of (2s)^(-1/2) is +(2s)^(-3/2).
    const double dx = -p.z * inv3 * g.a + p.y * inv3 * g.b - 0.5 * inv * g.c;
    return {dx, inv * g.b, -inv * g.a};
  }
  const double s = 1.0 + p.x;
  const double inv = 1.0 / std::sqrt(2.0 * s);
  const double inv3 = inv * inv * inv;
  const double dx = 0.5 * inv * g.b - p.y * inv3 * g.c - p.z * inv3 * g.d;
  return {dx, inv * g.c, inv * g.d};
}

}  // namespace detail

inline FiberBase inverse_hopf(const Point3& p) {
  if (!(std::abs(norm(p) - 1.0) <= kSphereTolerance)) {
    throw NotOnSphere("inverse_hopf expects a unit vector");
  }
  return {detail::lift(p), p};
}

inline Quaternion unit_complex(double t) { return {std::cos(t), std::sin(t), 0.0, 0.0}; }

// r' ⊗ (cos t + i sin t)
inline Quaternion fiber_point(const FiberBase& base, double t) {
  return hamilton(base.r_prime, unit_complex(t));
}

// Adjoints of e = r' ⊗ e^{it}.
struct FiberGrad {
  Quaternion r_prime;
  double t = 0.0;
};

inline FiberGrad fiber_point_vjp(const Quaternion& r_prime, double t, const Quaternion& g) {
  const Quaternion z = unit_complex(t);
  const HamiltonGrad hg = hamilton_vjp(r_prime, z, g);
  return {hg.p, -hg.q.a * z.b + hg.q.b * z.a};
}

// Stereographic projection S³ \ {(0,0,0,1)} → R³ from the pole d = +1.
inline Point3 stereographic_project(const Quaternion& q) {
  if (!(std::abs(norm(q) - 1.0) <= kSphereTolerance)) {
    throw NotOnSphere("stereographic_project expects a unit quaternion");
  }
  constexpr double kPoleClamp = 1e-9;
  const Point3 abc{q.a, q.b, q.c};
  const double denom = 1.0 - q.d;
  if (denom < kPoleClamp) {
    // At the pole itself, place the point far out along the limit direction.
    const double len = norm(abc);
    const Point3 dir = len > 0.0 ? abc * (1.0 / len) : Point3{1.0, 0.0, 0.0};
    return dir * (1.0 / kPoleClamp);
  }
  return abc * (1.0 / denom);
}

// Minimum 4D Euclidean distance between the fibers over p1 and p2. Grid seed
// of grid×grid phase pairs, then 50 rounds of coordinate descent with step
// halving.
inline double min_fiber_distance(const Point3& p1, const Point3& p2, int grid = 64) {
  if (grid < 64) throw InvalidConfig("min_fiber_distance: grid must be at least 64");
  const FiberBase f1 = inverse_hopf(p1);
  const FiberBase f2 = inverse_hopf(p2);
  const double step0 = 2.0 * std::numbers::pi / grid;

  std::vector<Quaternion> pts1(grid), pts2(grid);
  for (int i = 0; i < grid; ++i) {
    pts1[i] = fiber_point(f1, i * step0);
    pts2[i] = fiber_point(f2, i * step0);
  }
  double best = std::numeric_limits<double>::infinity();
  int bi = 0, bj = 0;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const double d2 = squared_norm(pts1[i] - pts2[j]);
      if (d2 < best) {
        best = d2;
        bi = i;
        bj = j;
      }
    }
  }

  auto objective = [&](double t, double s) {
    return squared_norm(fiber_point(f1, t) - fiber_point(f2, s));
  };
  double t = bi * step0, s = bj * step0, step = step0;
  for (int iter = 0; iter < 50; ++iter) {
    bool moved = false;
    for (const auto [dt, ds] : {std::pair{step, 0.0}, {-step, 0.0}, {0.0, step}, {0.0, -step}}) {
      const double v = objective(t + dt, s + ds);
      if (v < best) {
        best = v;
        t += dt;
        s += ds;
        moved = true;
        break;
      }
    }
    if (!moved) step *= 0.5;
  }
  return std::sqrt(std::max(best, 0.0));
}

struct FiberSample {
  std::size_t dim = 0;
  double t = 0.0;
  Point3 projected;
};

// CSV with header `dim,t,x,y,z`.
inline void write_fiber_csv(std::ostream& out, const std::vector<FiberSample>& samples) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "dim,t,x,y,z\n";
  for (const auto& s : samples) {
    out << s.dim << ',' << s.t << ',' << s.projected.x << ',' << s.projected.y << ','
        << s.projected.z << '\n';
  }
  out.precision(old_precision);
}

}  // namespace hopfe
