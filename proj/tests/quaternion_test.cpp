#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hopfe/quaternion.hpp"
#include "test_util.hpp"

namespace hopfe {
namespace {

using testing::random_quaternion;
using testing::random_point;
using testing::component;

void expect_near(const Quaternion& got, const Quaternion& want, double tol) {
  EXPECT_NEAR(got.a, want.a, tol);
  EXPECT_NEAR(got.b, want.b, tol);
  EXPECT_NEAR(got.c, want.c, tol);
  EXPECT_NEAR(got.d, want.d, tol);
}

void expect_near(const Point3& got, const Point3& want, double tol) {
  EXPECT_NEAR(got.x, want.x, tol);
  EXPECT_NEAR(got.y, want.y, tol);
  EXPECT_NEAR(got.z, want.z, tol);
}

TEST(Hamilton, DefiningRelations) {
  const Quaternion i{0, 1, 0, 0}, j{0, 0, 1, 0}, k{0, 0, 0, 1};
  EXPECT_EQ(hamilton(i, j), k);
  EXPECT_EQ(hamilton(j, k), i);
  EXPECT_EQ(hamilton(k, i), j);
  EXPECT_EQ(hamilton(i, i), (Quaternion{-1, 0, 0, 0}));
  const Quaternion q{0.3, -1.2, 2.5, 0.7};
  EXPECT_EQ(hamilton(Quaternion::identity(), q), q);
  EXPECT_EQ(hamilton(q, Quaternion::identity()), q);
}

TEST(Hamilton, HandExpandedProduct) {
  // 16-term expansion of (1 + 2i + 3j + 4k)(5 + 6i + 7j + 8k).
  EXPECT_EQ(hamilton({1, 2, 3, 4}, {5, 6, 7, 8}), (Quaternion{-60, 12, 30, 24}));
}

TEST(Hamilton, NormMultiplicativeAndAssociative) {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 2000; ++n) {
    const Quaternion p = random_quaternion(rng), q = random_quaternion(rng), r = random_quaternion(rng);
    const double lhs = norm(hamilton(p, q));
    EXPECT_NEAR(lhs, norm(p) * norm(q), 1e-10 * norm(p) * norm(q));
    const Quaternion left = hamilton(hamilton(p, q), r);
    const Quaternion right = hamilton(p, hamilton(q, r));
    expect_near(left, right, 1e-10 * norm(p) * norm(q) * norm(r));
  }
}

TEST(Conjugate, SignFlipAndInvolution) {
  EXPECT_EQ(conjugate({1, 2, 3, 4}), (Quaternion{1, -2, -3, -4}));
  EXPECT_EQ(conjugate(Quaternion::identity()), Quaternion::identity());
  std::mt19937_64 rng(3);
  for (int n = 0; n < 100; ++n) {
    const Quaternion q = random_quaternion(rng);
    EXPECT_EQ(conjugate(conjugate(q)), q);
    const Quaternion qq = hamilton(q, conjugate(q));
    expect_near(qq, {squared_norm(q), 0, 0, 0}, 1e-12 * squared_norm(q));
  }
}

TEST(Rotate, IdentityAndQuarterTurn) {
  const Point3 v{0.3, -2.0, 1.5};
  expect_near(rotate(Quaternion::identity(), v), v, 0.0);
  const double h = std::sqrt(2.0) / 2.0;
  expect_near(rotate({h, 0, 0, h}, {1, 0, 0}), {0, 1, 0}, 1e-15);
}

TEST(Rotate, ScaleInvariantAndNormPreserving) {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 1000; ++n) {
    const Quaternion q = random_quaternion(rng);
    const Point3 v = random_point(rng);
    const Point3 w = rotate(q, v);
    EXPECT_NEAR(norm(w), norm(v), 1e-10 * norm(v));
    expect_near(rotate(q * 3.7, v), w, 1e-12 * norm(v));
    // The intermediate q v q̄ is pure.
    EXPECT_NEAR(hamilton(hamilton(q, Quaternion::pure(v)), conjugate(q)).a, 0.0, 1e-12 * squared_norm(q) * norm(v));
  }
}

TEST(Rotate, AxisIsFixed) {
  std::mt19937_64 rng(9);
  for (int n = 0; n < 1000; ++n) {
    Quaternion q = random_quaternion(rng);
    q = q * (1.0 / norm(q));
    const Point3 axis = angle_axis(q).axis;
    expect_near(rotate(q, axis), axis, 1e-9);
  }
}

TEST(Rotate, ZeroQuaternionThrows) {
  EXPECT_THROW(rotate({0, 0, 0, 0}, {1, 0, 0}), ZeroQuaternion);
  EXPECT_THROW(rotate({1e-13, 0, 0, 0}, {1, 0, 0}), ZeroQuaternion);
  EXPECT_THROW(angle_axis({0, 0, 0, 0}), ZeroQuaternion);
}

TEST(AngleAxis, Examples) {
  const double h = std::sqrt(2.0) / 2.0;
  const AngleAxis quarter = angle_axis({h, 0, 0, h});
  EXPECT_NEAR(quarter.angle, std::numbers::pi / 2, 1e-12);
  expect_near(quarter.axis, {0, 0, 1}, 1e-12);

  const AngleAxis ident = angle_axis(Quaternion::identity());
  EXPECT_EQ(ident.angle, 0.0);
  EXPECT_EQ(ident.axis, (Point3{1, 0, 0}));

  // Unnormalized input is normalized before arccos.
  EXPECT_NEAR(angle_axis({2 * h, 0, 0, 2 * h}).angle, std::numbers::pi / 2, 1e-12);
}

TEST(AngleAxis, SignedAngleFlipsUnderConjugation) {
  std::mt19937_64 rng(21);
  for (int n = 0; n < 500; ++n) {
    Quaternion q = random_quaternion(rng);
    q = q * (1.0 / norm(q));
    const double s = angle_axis(q).signed_angle;
    EXPECT_NEAR(angle_axis(conjugate(q)).signed_angle, -s, 1e-12);
    EXPECT_GE(angle_axis(q).angle, 0.0);
    EXPECT_LE(angle_axis(q).angle, 2 * std::numbers::pi);
  }
}

TEST(WrapAngle, Range) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(2 * std::numbers::pi + 0.25), 0.25, 1e-15);
  EXPECT_NEAR(wrap_angle(-7.0), -7.0 + 2 * std::numbers::pi, 1e-15);
}

// Central-difference checks of the adjoint rules.
TEST(Adjoints, HamiltonAndRotateMatchFiniteDifferences) {
  std::mt19937_64 rng(77);
  const double step = 1e-6;
  for (int n = 0; n < 50; ++n) {
    const Quaternion p = random_quaternion(rng), q = random_quaternion(rng), g = random_quaternion(rng);
    const HamiltonGrad hg = hamilton_vjp(p, q, g);
    for (int c = 0; c < 4; ++c) {
      Quaternion dp{}, dq{};
      component(dp, c) = step;
      component(dq, c) = step;
      const double fp = (dot(hamilton(p + dp, q), g) - dot(hamilton(p - dp, q), g)) / (2 * step);
      const double fq = (dot(hamilton(p, q + dq), g) - dot(hamilton(p, q - dq), g)) / (2 * step);
      EXPECT_NEAR(component(hg.p, c), fp, 1e-7);
      EXPECT_NEAR(component(hg.q, c), fq, 1e-7);
    }

    const Point3 v = random_point(rng), gw = random_point(rng);
    const RotateGrad rg = rotate_vjp(q, v, rotate(q, v), gw);
    for (int c = 0; c < 4; ++c) {
      Quaternion dq{};
      component(dq, c) = step;
      const double f = (dot(rotate(q + dq, v), gw) - dot(rotate(q - dq, v), gw)) / (2 * step);
      EXPECT_NEAR(component(rg.q, c), f, 1e-6 * (1.0 + std::abs(f)));
    }
    for (int c = 0; c < 3; ++c) {
      Point3 dv{};
      component(dv, c) = step;
      const double f = (dot(rotate(q, v + dv), gw) - dot(rotate(q, v - dv), gw)) / (2 * step);
      EXPECT_NEAR(component(rg.v, c), f, 1e-7);
    }
  }
}

}  // namespace
}  // namespace hopfe
