#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "hopfe/model.hpp"

// Three entities e1, e2, e3 and one relation with the positive triples
// (e1,e2), (e2,e3), (e1,e3) and the reversed triples as negatives.
namespace hopfe::testing {

struct CliqueScores {
  std::array<double, 3> positive{};
  std::array<double, 3> negative{};
};

// All three entities share one base point, the relation is the identity
// rotation with phase offset delta, and two heads carry the phases
// e1 = (θ1, θ2), e2 = (θ2, θ3), e3 = (θ3, θ3) with θ_{n+1} = θ_n + delta.
inline CliqueScores hopf_clique_scores(double delta, Matching matching, double theta1 = 0.4) {
  ModelConfig cfg;
  cfg.dim = 1;
  cfg.heads = 2;
  cfg.matching = matching;
  const std::vector<double> point{0.3, -0.5, 0.8};
  const double t1 = theta1, t2 = theta1 + delta, t3 = theta1 + 2 * delta;
  const EntityEmbedding e1{point, {t1, t2}, 2}, e2{point, {t2, t3}, 2}, e3{point, {t3, t3}, 2};
  const RelationEmbedding r{{1, 0, 0, 0}, {delta}};
  Scorer scorer(cfg);
  CliqueScores out;
  out.positive = {scorer.score(e1.view(), r.view(), e2.view()), scorer.score(e2.view(), r.view(), e3.view()),
                  scorer.score(e1.view(), r.view(), e3.view())};
  out.negative = {scorer.score(e3.view(), r.view(), e2.view()), scorer.score(e2.view(), r.view(), e1.view()),
                  scorer.score(e3.view(), r.view(), e1.view())};
  return out;
}

inline std::vector<Point3> fibonacci_sphere(int n) {
  std::vector<Point3> out;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(1.0 - z * z);
    out.push_back({r * std::cos(golden * i), r * std::sin(golden * i), z});
  }
  return out;
}

// Smallest rotation taking unit a onto unit b.
inline Quaternion aligning_rotation(const Point3& a, const Point3& b) {
  const Point3 c = cross(a, b);
  const Quaternion q{1.0 + dot(a, b), c.x, c.y, c.z};
  if (norm(q) < 1e-9) {
    Point3 axis = cross(a, Point3{1, 0, 0});
    if (norm(axis) < 1e-6) axis = cross(a, Point3{0, 1, 0});
    return Quaternion::pure(axis);
  }
  return q;
}

// Violation of the six constraints under the no-hopf score for one
// configuration: max positive distance relative to max positive plus min
// negative distance. 0 would mean the negatives are separated from exactly
// satisfied positives; 1 means no separation at all.
inline double no_hopf_violation(const Quaternion& q, const std::array<Point3, 3>& e) {
  auto dist = [&](int h, int t) { return norm(rotate(q, e[h]) - e[t]); };
  const double max_pos = std::max({dist(0, 1), dist(1, 2), dist(0, 2)});
  const double min_neg = std::min({dist(2, 1), dist(1, 0), dist(2, 0)});
  if (max_pos + min_neg == 0.0) return 1.0;
  return max_pos / (max_pos + min_neg);
}

// Grid search over placements of e1, e2, e3 on a `resolution`-point sphere
// lattice and over rotations (axis lattice × angle grid, plus the rotations
// that align each positive pair exactly). Returns the smallest violation.
inline double no_hopf_min_violation(int resolution = 20, int angle_steps = 12) {
  const std::vector<Point3> sphere = fibonacci_sphere(resolution);
  std::vector<Quaternion> rotations;
  for (const Point3& axis : sphere) {
    for (int m = 0; m < angle_steps; ++m) {
      const double half = std::numbers::pi * m / angle_steps;
      rotations.push_back({std::cos(half), axis.x * std::sin(half), axis.y * std::sin(half), axis.z * std::sin(half)});
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (const Point3& a : sphere) {
    for (const Point3& b : sphere) {
      for (const Point3& c : sphere) {
        const std::array<Point3, 3> e{a, b, c};
        for (const Quaternion& q : rotations) best = std::min(best, no_hopf_violation(q, e));
        for (const Quaternion& q : {aligning_rotation(a, b), aligning_rotation(b, c), aligning_rotation(a, c)}) {
          best = std::min(best, no_hopf_violation(q, e));
        }
      }
    }
  }
  return best;
}

}  // namespace hopfe::testing
