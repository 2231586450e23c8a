#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "hopfe/hopf.hpp"
#include "test_util.hpp"

namespace hopfe {
namespace {

using testing::component;
using testing::random_quaternion;
using testing::random_unit_point;

constexpr double kPi = std::numbers::pi;

// Point at geodesic distance `delta` from unit p along a random direction.
Point3 point_at_geodesic(const Point3& p, double delta, std::mt19937_64& rng) {
  Point3 tangent = cross(p, random_unit_point(rng));
  tangent = tangent * (1.0 / norm(tangent));
  return p * std::cos(delta) + tangent * std::sin(delta);
}

// Test-only fiber parameterisation straight from the primary chart formula.
Quaternion oracle_fiber(const Point3& p, double t) {
  const double s = std::sqrt(2.0 * (1.0 + p.x));
  const double a = (1.0 + p.x) / s, b = p.y / s, c = p.z / s;
  // (a i + b j + c k)(cos t + i sin t)
  return {-a * std::sin(t), a * std::cos(t), b * std::cos(t) + c * std::sin(t), c * std::cos(t) - b * std::sin(t)};
}

double oracle_min_distance(const Point3& p1, const Point3& p2, int grid) {
  double best = 1e300;
  for (int i = 0; i < grid; ++i) {
    const Quaternion x = oracle_fiber(p1, 2 * kPi * i / grid);
    for (int j = 0; j < grid; ++j) {
      best = std::min(best, squared_norm(x - oracle_fiber(p2, 2 * kPi * j / grid)));
    }
  }
  return std::sqrt(best);
}

TEST(HopfMap, Examples) {
  EXPECT_EQ(hopf_map(Quaternion::identity()), (Point3{1, 0, 0}));
  EXPECT_EQ(hopf_map({0, 0, 1, 0}), (Point3{-1, 0, 0}));
  EXPECT_THROW(hopf_map({0, 0, 0, 0}), ZeroQuaternion);
}

TEST(HopfMap, MatchesRotationOfFirstAxisAndIsFiberInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> angle(-10.0, 10.0);
  for (int n = 0; n < 1000; ++n) {
    const Quaternion r = random_quaternion(rng);
    const Point3 m = hopf_map(r);
    const Point3 rot = rotate(r, {1, 0, 0});
    EXPECT_NEAR(norm(m - rot), 0.0, 1e-12);
    EXPECT_NEAR(norm(m), 1.0, 1e-12);
    const double t = angle(rng);
    EXPECT_NEAR(norm(hopf_map(hamilton(r, {std::cos(t), std::sin(t), 0, 0})) - m), 0.0, 1e-12);
  }
}

TEST(InverseHopf, Examples) {
  EXPECT_EQ(inverse_hopf({1, 0, 0}).r_prime, (Quaternion{0, 1, 0, 0}));
  const FiberBase antipode = inverse_hopf({-1, 0, 0});
  EXPECT_EQ(antipode.r_prime, (Quaternion{0, 0, 1, 0}));
  EXPECT_EQ(hopf_map(antipode.r_prime), (Point3{-1, 0, 0}));
  EXPECT_THROW(inverse_hopf({1.1, 0, 0}), NotOnSphere);
  EXPECT_THROW(inverse_hopf({0, 0, 0}), NotOnSphere);
}

TEST(InverseHopf, RoundTripIncludingNearAntipode) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> angle(0.0, 2 * kPi);
  for (int n = 0; n < 10000; ++n) {
    const Point3 p = random_unit_point(rng);
    const FiberBase base = inverse_hopf(p);
    EXPECT_NEAR(norm(base.r_prime), 1.0, 1e-12);
    EXPECT_LT(norm(hopf_map(fiber_point(base, angle(rng))) - p), 1e-9);
  }
  // Both sides of the chart switch.
  for (double eps : {1e-3, 1e-6, 2e-6, 5e-7, 1e-9, 0.0}) {
    const double x = -1.0 + eps;
    const double rest = std::sqrt(std::max(0.0, 1.0 - x * x));
    const Point3 p{x, rest * 0.6, rest * 0.8};
    EXPECT_LT(norm(hopf_map(inverse_hopf(p).r_prime) - p), 1e-9) << eps;
  }
}

TEST(FiberPoint, Examples) {
  const FiberBase base = inverse_hopf({1, 0, 0});
  EXPECT_EQ(fiber_point(base, 0.0), (Quaternion{0, 1, 0, 0}));
  const Quaternion quarter = fiber_point(base, kPi / 2);
  EXPECT_NEAR(quarter.a, -1.0, 1e-15);
  EXPECT_NEAR(quarter.b, 0.0, 1e-15);
  EXPECT_EQ(quarter.c, 0.0);
  EXPECT_EQ(quarter.d, 0.0);
}

TEST(FiberPoint, PeriodicAndOnFiber) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(-20.0, 20.0);
  for (int n = 0; n < 1000; ++n) {
    const Point3 p = random_unit_point(rng);
    const FiberBase base = inverse_hopf(p);
    const double t = angle(rng);
    const Quaternion e = fiber_point(base, t);
    EXPECT_NEAR(norm(e), 1.0, 1e-12);
    EXPECT_LT(norm(e - fiber_point(base, t + 2 * kPi)), 1e-9);
    EXPECT_LT(norm(hopf_map(e) - p), 1e-9);
  }
}

TEST(Stereographic, Examples) {
  EXPECT_EQ(stereographic_project({1, 0, 0, 0}), (Point3{1, 0, 0}));
  EXPECT_EQ(stereographic_project({0, 0, 0, -1}), (Point3{0, 0, 0}));
  EXPECT_GE(norm(stereographic_project({0, 0, 0, 1})), 1e8);
  EXPECT_THROW(stereographic_project({0.5, 0, 0, 0}), NotOnSphere);
}

TEST(MinFiberDistance, Examples) {
  std::mt19937_64 rng(4);
  for (int n = 0; n < 10; ++n) {
    const Point3 p = random_unit_point(rng);
    EXPECT_LT(min_fiber_distance(p, p), 1e-6);
  }
  // Fibers (-sin t, cos t, 0, 0) and (0, 0, cos s, -sin s): squared distance 2.
  EXPECT_NEAR(min_fiber_distance({1, 0, 0}, {-1, 0, 0}), std::sqrt(2.0), 1e-4);
}

TEST(MinFiberDistance, MonotoneInSeparationAgainstDenseGrid) {
  std::mt19937_64 rng(5);
  const Point3 p = random_unit_point(rng);
  double prev_fast = 1e300, prev_oracle = 1e300;
  for (double delta : {0.3, 0.1, 0.03}) {
    const Point3 q = point_at_geodesic(p, delta, rng);
    const double fast = min_fiber_distance(p, q);
    const double oracle = oracle_min_distance(p, q, 1024);
    EXPECT_LT(fast, prev_fast);
    EXPECT_LT(oracle, prev_oracle);
    EXPECT_LE(fast, oracle + 1e-9);
    prev_fast = fast;
    prev_oracle = oracle;
  }
}

TEST(MinFiberDistance, LinkedCirclesStaySeparated) {
  std::mt19937_64 rng(6);
  for (int n = 0; n < 200; ++n) {
    const Point3 p1 = random_unit_point(rng), p2 = random_unit_point(rng);
    if (norm(p1 - p2) <= 1e-3) continue;
    EXPECT_GT(min_fiber_distance(p1, p2), 0.0);
  }
}

TEST(MinFiberDistance, VicinityBound) {
  std::mt19937_64 rng(7);
  for (int n = 0; n < 50; ++n) {
    const Point3 p = random_unit_point(rng);
    for (double delta : {0.1, 0.03, 0.01, 0.003, 0.001}) {
      const Point3 q = point_at_geodesic(p, delta, rng);
      const double dist = min_fiber_distance(p, q);
      EXPECT_LE(dist, 2 * delta);
      // Riemannian submersion onto the radius-1/2 sphere: ratio near 1/2.
      EXPECT_LT(dist / delta, 1.0);
    }
  }
}

TEST(FiberCsv, HeaderAndRows) {
  std::ostringstream out;
  write_fiber_csv(out, {{0, 0.5, {1, 2, 3}}, {1, 1.5, {-1, 0, 0.25}}});
  EXPECT_EQ(out.str(), "dim,t,x,y,z\n0,0.5,1,2,3\n1,1.5,-1,0,0.25\n");
}

TEST(Adjoints, LiftAndFiberMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  const double step = 1e-6;
  for (int n = 0; n < 200; ++n) {
    Point3 p = random_unit_point(rng);
    if (n % 10 == 0) p = Point3{-1.0 + 1e-7, 4e-4, 2e-4};  // antipodal chart
    const Quaternion g = random_quaternion(rng);
    const Point3 grad = detail::lift_vjp(p, g);
    for (int c = 0; c < 3; ++c) {
      Point3 dp{};
      component(dp, c) = step * (n % 10 == 0 ? 1e-3 : 1.0);
      const double h = component(dp, c);
      const double f = (dot(detail::lift(p + dp), g) - dot(detail::lift(p - dp), g)) / (2 * h);
      EXPECT_NEAR(component(grad, c), f, 1e-5 * (1.0 + std::abs(f))) << n << " " << c;
    }

    const Quaternion r = random_quaternion(rng);
    const double t = 1.3 * n;
    const FiberGrad fg = fiber_point_vjp(r, t, g);
    const FiberBase base{r, {}};
    const double ft = (dot(fiber_point(base, t + step), g) - dot(fiber_point(base, t - step), g)) / (2 * step);
    EXPECT_NEAR(fg.t, ft, 1e-7);
  }
}

}  // namespace
}  // namespace hopfe
