#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hopfe/errors.hpp"
#include "hopfe/hopf.hpp"
#include "hopfe/quaternion.hpp"
#include "hopfe/transport.hpp"

namespace hopfe {

enum class Variant { kHopfE, kNoHopf };
enum class Matching { kSinkhorn, kMin };

inline std::string_view to_string(Variant v) { return v == Variant::kHopfE ? "hopfe" : "no-hopf"; }
inline std::string_view to_string(Matching m) { return m == Matching::kSinkhorn ? "sinkhorn" : "min"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "hopfe") return Variant::kHopfE;
  if (s == "no-hopf") return Variant::kNoHopf;
  throw InvalidConfig("unknown variant '" + std::string(s) + "' (expected hopfe|no-hopf)");
}

inline Matching parse_matching(std::string_view s) {
  if (s == "sinkhorn") return Matching::kSinkhorn;
  if (s == "min") return Matching::kMin;
  throw InvalidConfig("unknown matching '" + std::string(s) + "' (expected sinkhorn|min)");
}

struct ModelConfig {
  std::size_t dim = 100;
  std::size_t heads = 1;
  Variant variant = Variant::kHopfE;
  Matching matching = Matching::kMin;
  double gamma = 12.0;
  double alpha = 1.0;
  SinkhornOptions sinkhorn{};

  void validate() const {
    if (dim < 1) throw InvalidConfig("dim must be at least 1");
    if (heads < 1) throw InvalidConfig("heads must be at least 1");
    if (!(gamma > 0.0)) throw InvalidConfig("gamma must be positive");
    if (!(alpha > 0.0)) throw InvalidConfig("alpha must be positive");
    if (variant == Variant::kNoHopf && heads != 1) {
      throw InvalidConfig("heads > 1 requires the hopfe variant (no-hopf has no fibers)");
    }
  }
};

// Flat parameter tables. The same layout doubles as the gradient bundle.
//   entity_points   E × k × 3     unnormalized 3-vectors
//   entity_phases   E × k × H     fiber phases in radians
//   relation_quats  R × k × 4     (a, b, c, d), any nonzero norm
//   relation_phases R × k         phase offset added to head phases
struct ParamTables {
  std::vector<double> entity_points;
  std::vector<double> entity_phases;
  std::vector<double> relation_quats;
  std::vector<double> relation_phases;

  template <typename Fn>
  void for_each_table(Fn&& fn) {
    fn(entity_points);
    fn(entity_phases);
    fn(relation_quats);
    fn(relation_phases);
  }
  template <typename Fn>
  void for_each_table(Fn&& fn) const {
    fn(entity_points);
    fn(entity_phases);
    fn(relation_quats);
    fn(relation_phases);
  }
};

struct EntityView {
  std::span<const double> points;  // k × 3
  std::span<const double> phases;  // k × H
  std::size_t heads = 1;

  std::size_t dim() const { return points.size() / 3; }
  Point3 point(std::size_t d) const { return {points[3 * d], points[3 * d + 1], points[3 * d + 2]}; }
  double phase(std::size_t d, std::size_t h) const { return phases[d * heads + h]; }
};

struct RelationView {
  std::span<const double> quats;   // k × 4
  std::span<const double> phases;  // k

  std::size_t dim() const { return phases.size(); }
  Quaternion quat(std::size_t d) const {
    return {quats[4 * d], quats[4 * d + 1], quats[4 * d + 2], quats[4 * d + 3]};
  }
  double phase(std::size_t d) const { return phases[d]; }
};

// Owning single-entity embedding, convenient for tests and analysis.
struct EntityEmbedding {
  std::vector<double> points;
  std::vector<double> phases;
  std::size_t heads = 1;

  EntityView view() const { return {points, phases, heads}; }
};

struct RelationEmbedding {
  std::vector<double> quats;
  std::vector<double> phases;

  RelationView view() const { return {quats, phases}; }
};

class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(std::size_t num_entities, std::size_t num_relations, std::size_t dim, std::size_t heads)
      : num_entities_(num_entities), num_relations_(num_relations), dim_(dim), heads_(heads) {
    tables.entity_points.assign(num_entities * dim * 3, 0.0);
    tables.entity_phases.assign(num_entities * dim * heads, 0.0);
    tables.relation_quats.assign(num_relations * dim * 4, 0.0);
    tables.relation_phases.assign(num_relations * dim, 0.0);
    for (std::size_t i = 0; i < num_relations * dim; ++i) tables.relation_quats[4 * i] = 1.0;
  }

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }

  EntityView entity(std::size_t e) const {
    return {std::span<const double>(tables.entity_points).subspan(e * dim_ * 3, dim_ * 3),
            std::span<const double>(tables.entity_phases).subspan(e * dim_ * heads_, dim_ * heads_),
            heads_};
  }
  RelationView relation(std::size_t r) const {
    return {std::span<const double>(tables.relation_quats).subspan(r * dim_ * 4, dim_ * 4),
            std::span<const double>(tables.relation_phases).subspan(r * dim_, dim_)};
  }

  std::span<double> entity_points(std::size_t e) {
    return std::span<double>(tables.entity_points).subspan(e * dim_ * 3, dim_ * 3);
  }
  std::span<double> entity_phases(std::size_t e) {
    return std::span<double>(tables.entity_phases).subspan(e * dim_ * heads_, dim_ * heads_);
  }
  std::span<double> relation_quats(std::size_t r) {
    return std::span<double>(tables.relation_quats).subspan(r * dim_ * 4, dim_ * 4);
  }
  std::span<double> relation_phases(std::size_t r) {
    return std::span<double>(tables.relation_phases).subspan(r * dim_, dim_);
  }

  // Zero-filled tables with this model's shapes.
  ParamTables zeros_like() const {
    ParamTables z;
    z.entity_points.assign(tables.entity_points.size(), 0.0);
    z.entity_phases.assign(tables.entity_phases.size(), 0.0);
    z.relation_quats.assign(tables.relation_quats.size(), 0.0);
    z.relation_phases.assign(tables.relation_phases.size(), 0.0);
    return z;
  }

  ParamTables tables;

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
};

// He initialization: Gaussian entity points and relation quaternions with
// variance 2 / (3k); uniform phases on [0, 2π); zero relation phase offsets.
inline ModelParams init_model(std::size_t num_entities, std::size_t num_relations, const ModelConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  if (num_entities < 1 || num_relations < 1) throw InvalidConfig("model needs at least one entity and relation");
  ModelParams params(num_entities, num_relations, cfg.dim, cfg.heads);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / (3.0 * static_cast<double>(cfg.dim))));
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (double& x : params.tables.entity_points) x = gauss(rng);
  for (double& x : params.tables.entity_phases) x = angle(rng);
  for (double& x : params.tables.relation_quats) x = gauss(rng);
  for (std::size_t r = 0; r < num_relations; ++r) {
    auto q = params.relation_quats(r);
    for (std::size_t d = 0; d < cfg.dim; ++d) {
      // Resample the (measure-zero) degenerate draws so every rotation is defined.
      while (q[4 * d] * q[4 * d] + q[4 * d + 1] * q[4 * d + 1] + q[4 * d + 2] * q[4 * d + 2] +
                 q[4 * d + 3] * q[4 * d + 3] <
             1e-20) {
        for (int c = 0; c < 4; ++c) q[4 * d + c] = gauss(rng);
      }
    }
  }
  return params;
}

namespace detail {

inline constexpr double kZeroVectorNorm = 1e-12;

// Unit vector, or (1,0,0) for a (near) zero input.
inline Point3 unit_or_default(const Point3& v) {
  const double n = norm(v);
  if (n < kZeroVectorNorm) return {1.0, 0.0, 0.0};
  return v * (1.0 / n);
}

inline Point3 unit_vjp(const Point3& v, const Point3& u, const Point3& g) {
  const double n = norm(v);
  if (n < kZeroVectorNorm) return {};
  return (g - u * dot(u, g)) * (1.0 / n);
}

}  // namespace detail

// Per-dimension fiber points of an entity for one head:
// lift(normalize(points[d])) ⊗ e^{i phase(d, head)}.
inline std::vector<Quaternion> fibrate(const EntityView& entity, std::size_t head_index) {
  if (head_index >= entity.heads) throw ShapeMismatch("fibrate: head index out of range");
  std::vector<Quaternion> out(entity.dim());
  for (std::size_t d = 0; d < out.size(); ++d) {
    const FiberBase base{detail::lift(detail::unit_or_default(entity.point(d))), {}};
    out[d] = fiber_point(base, entity.phase(d, head_index));
  }
  return out;
}

// Per-dimension quaternion rotation of the entity's 3-vectors.
inline std::vector<Point3> rotate_all(const EntityView& entity, const RelationView& relation) {
  if (entity.dim() != relation.dim()) throw ShapeMismatch("rotate_all: dimension mismatch");
  std::vector<Point3> out(entity.dim());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = rotate(relation.quat(d), entity.point(d));
  return out;
}

namespace detail {

// Adds one dimension's contribution to the head-pair cost matrix. Arrays hold
// one fiber point per head: fx/fyr indexed by head heads i, fy/fxr by tail heads j.
inline void accumulate_pair_costs(SquareMatrix& costs, const Quaternion* fx, const Quaternion* fy,
                                  const Quaternion* fxr, const Quaternion* fyr) {
  const std::size_t heads = costs.size();
  for (std::size_t i = 0; i < heads; ++i) {
    for (std::size_t j = 0; j < heads; ++j) {
      costs(i, j) += 0.5 * (norm(fx[i] - fy[j]) + norm(fxr[j] - fyr[i]));
    }
  }
}

}  // namespace detail

// Reduces a head-pair cost matrix to a score; fills dScore/dD(i,j) when requested.
inline double reduce_matching(const SquareMatrix& costs, const ModelConfig& cfg, SquareMatrix* weights = nullptr) {
  const std::size_t heads = costs.size();
  if (heads == 1) {
    if (weights) *weights = SquareMatrix(1, 1.0);
    return costs(0, 0);
  }
  if (cfg.matching == Matching::kMin) {
    const MinMatch m = min_match(costs);
    if (weights) {
      *weights = SquareMatrix(heads);
      (*weights)(m.i, m.j) = 1.0;
    }
    return m.value;
  }
  const detail::SinkhornRun run(costs, cfg.sinkhorn);
  if (weights) *weights = run.cost_gradient();
  return run.plan().cost;
}

// Adjoint accumulators for the parameters touched by a single score.
struct TripleGrad {
  std::vector<double> head_points, head_phases;
  std::vector<double> tail_points, tail_phases;
  std::vector<double> relation_quats, relation_phases;

  void reset(std::size_t dim, std::size_t heads) {
    head_points.assign(dim * 3, 0.0);
    tail_points.assign(dim * 3, 0.0);
    head_phases.assign(dim * heads, 0.0);
    tail_phases.assign(dim * heads, 0.0);
    relation_quats.assign(dim * 4, 0.0);
    relation_phases.assign(dim, 0.0);
  }
};

// Evaluates the HopfE distance D(h, r, t) and, optionally, its gradient.
//
// For heads i of h and j of t:
//   D(i,j) = Σ_d ½ ( |F(R_d h_d, θh_i + φ_d) − F(t_d, θt_j)|
//                  + |F(R̄_d t_d, θt_j − φ_d) − F(h_d, θh_i)| )
// where F(p, θ) = lift(p / |p|) ⊗ e^{iθ}. The score reduces D over head
// pairs with min matching or the Sinkhorn transport cost. The no-hopf variant
// is Σ_d |R_d h_d − t_d| on the raw 3-vectors.
//
// Holds scratch buffers; one instance per thread.
class Scorer {
 public:
  explicit Scorer(const ModelConfig& cfg) : cfg_(cfg) {}

  const ModelConfig& config() const { return cfg_; }

  double score(const EntityView& h, const RelationView& r, const EntityView& t) {
    check_shapes(h, r, t);
    if (cfg_.variant == Variant::kNoHopf) return no_hopf(h, r, t, nullptr, 0.0);
    forward(h, r, t);
    return reduce_matching(costs_, cfg_);
  }

  // Returns the score and adds upstream · dScore/dθ into `grad`, which must be
  // sized by TripleGrad::reset.
  double score_with_grad(const EntityView& h, const RelationView& r, const EntityView& t, double upstream,
                         TripleGrad& grad) {
    check_shapes(h, r, t);
    if (cfg_.variant == Variant::kNoHopf) return no_hopf(h, r, t, &grad, upstream);
    forward(h, r, t);
    SquareMatrix weights;
    const double value = reduce_matching(costs_, cfg_, &weights);
    backward(h, r, t, weights, upstream, grad);
    return value;
  }

  // Head-pair cost matrix D(i,j) of the last forward pass.
  const SquareMatrix& pair_costs() const { return costs_; }

 private:
  struct DimCache {
    Point3 w_h, u_hr, u_t, w_t, u_tr, u_h;
    Quaternion l_hr, l_t, l_tr, l_h;
  };

  void check_shapes(const EntityView& h, const RelationView& r, const EntityView& t) const {
    if (h.dim() != cfg_.dim || t.dim() != cfg_.dim || r.dim() != cfg_.dim || h.heads != cfg_.heads ||
        t.heads != cfg_.heads || h.phases.size() != cfg_.dim * cfg_.heads ||
        t.phases.size() != cfg_.dim * cfg_.heads || r.quats.size() != 4 * cfg_.dim) {
      throw ShapeMismatch("score: embedding shapes disagree with the model config");
    }
  }

  double no_hopf(const EntityView& h, const RelationView& r, const EntityView& t, TripleGrad* grad,
                 double upstream) {
    double total = 0.0;
    for (std::size_t d = 0; d < cfg_.dim; ++d) {
      const Quaternion q = r.quat(d);
      const Point3 hp = h.point(d);
      const Point3 w = rotate(q, hp);
      const Point3 diff = w - t.point(d);
      const double dist = norm(diff);
      total += dist;
      if (grad && dist > 0.0) {
        const Point3 gw = diff * (upstream / dist);
        const RotateGrad rg = rotate_vjp(q, hp, w, gw);
        add3(grad->head_points, d, rg.v);
        add3(grad->tail_points, d, gw * -1.0);
        add4(grad->relation_quats, d, rg.q);
      }
    }
    return total;
  }

  void forward(const EntityView& h, const RelationView& r, const EntityView& t) {
    const std::size_t k = cfg_.dim, heads = cfg_.heads;
    cache_.resize(k);
    fx_.resize(k * heads);
    fy_.resize(k * heads);
    fxr_.resize(k * heads);
    fyr_.resize(k * heads);
    costs_ = SquareMatrix(heads);
    for (std::size_t d = 0; d < k; ++d) {
      DimCache& c = cache_[d];
      const Quaternion q = r.quat(d);
      const Point3 hp = h.point(d), tp = t.point(d);
      c.w_h = rotate(q, hp);
      c.u_hr = detail::unit_or_default(c.w_h);
      c.l_hr = detail::lift(c.u_hr);
      c.u_t = detail::unit_or_default(tp);
      c.l_t = detail::lift(c.u_t);
      c.w_t = rotate(conjugate(q), tp);
      c.u_tr = detail::unit_or_default(c.w_t);
      c.l_tr = detail::lift(c.u_tr);
      c.u_h = detail::unit_or_default(hp);
      c.l_h = detail::lift(c.u_h);
      const double phi = r.phase(d);
      for (std::size_t i = 0; i < heads; ++i) {
        fx_[d * heads + i] = hamilton(c.l_hr, unit_complex(h.phase(d, i) + phi));
        fyr_[d * heads + i] = hamilton(c.l_h, unit_complex(h.phase(d, i)));
      }
      for (std::size_t j = 0; j < heads; ++j) {
        fy_[d * heads + j] = hamilton(c.l_t, unit_complex(t.phase(d, j)));
        fxr_[d * heads + j] = hamilton(c.l_tr, unit_complex(t.phase(d, j) - phi));
      }
      detail::accumulate_pair_costs(costs_, &fx_[d * heads], &fy_[d * heads], &fxr_[d * heads], &fyr_[d * heads]);
    }
  }

  void backward(const EntityView& h, const RelationView& r, const EntityView& t, const SquareMatrix& weights,
                double upstream, TripleGrad& grad) {
    const std::size_t k = cfg_.dim, heads = cfg_.heads;
    std::vector<Quaternion> gx(heads), gy(heads), gxr(heads), gyr(heads);
    for (std::size_t d = 0; d < k; ++d) {
      std::fill(gx.begin(), gx.end(), Quaternion{});
      std::fill(gy.begin(), gy.end(), Quaternion{});
      std::fill(gxr.begin(), gxr.end(), Quaternion{});
      std::fill(gyr.begin(), gyr.end(), Quaternion{});
      for (std::size_t i = 0; i < heads; ++i) {
        for (std::size_t j = 0; j < heads; ++j) {
          const double w = 0.5 * upstream * weights(i, j);
          if (w == 0.0) continue;
          const Quaternion da = fx_[d * heads + i] - fy_[d * heads + j];
          const double na = norm(da);
          if (na > 0.0) {
            gx[i] += da * (w / na);
            gy[j] += da * (-w / na);
          }
          const Quaternion db = fxr_[d * heads + j] - fyr_[d * heads + i];
          const double nb = norm(db);
          if (nb > 0.0) {
            gxr[j] += db * (w / nb);
            gyr[i] += db * (-w / nb);
          }
        }
      }

      const DimCache& c = cache_[d];
      const double phi = r.phase(d);
      Quaternion g_l_hr{}, g_l_t{}, g_l_tr{}, g_l_h{};
      double g_phi = 0.0;
      for (std::size_t i = 0; i < heads; ++i) {
        const FiberGrad fx = fiber_point_vjp(c.l_hr, h.phase(d, i) + phi, gx[i]);
        const FiberGrad fyr = fiber_point_vjp(c.l_h, h.phase(d, i), gyr[i]);
        g_l_hr += fx.r_prime;
        g_l_h += fyr.r_prime;
        grad.head_phases[d * heads + i] += fx.t + fyr.t;
        g_phi += fx.t;
      }
      for (std::size_t j = 0; j < heads; ++j) {
        const FiberGrad fy = fiber_point_vjp(c.l_t, t.phase(d, j), gy[j]);
        const FiberGrad fxr = fiber_point_vjp(c.l_tr, t.phase(d, j) - phi, gxr[j]);
        g_l_t += fy.r_prime;
        g_l_tr += fxr.r_prime;
        grad.tail_phases[d * heads + j] += fy.t + fxr.t;
        g_phi -= fxr.t;
      }
      grad.relation_phases[d] += g_phi;

      const Quaternion q = r.quat(d);
      const Point3 hp = h.point(d), tp = t.point(d);
      // Head rotated by q.
      {
        const Point3 gu = detail::lift_vjp(c.u_hr, g_l_hr);
        const Point3 gw = detail::unit_vjp(c.w_h, c.u_hr, gu);
        const RotateGrad rg = rotate_vjp(q, hp, c.w_h, gw);
        add3(grad.head_points, d, rg.v);
        add4(grad.relation_quats, d, rg.q);
      }
      // Tail rotated by the conjugate.
      {
        const Point3 gu = detail::lift_vjp(c.u_tr, g_l_tr);
        const Point3 gw = detail::unit_vjp(c.w_t, c.u_tr, gu);
        const RotateGrad rg = rotate_vjp(conjugate(q), tp, c.w_t, gw);
        add3(grad.tail_points, d, rg.v);
        add4(grad.relation_quats, d, conjugate(rg.q));
      }
      add3(grad.tail_points, d, detail::unit_vjp(tp, c.u_t, detail::lift_vjp(c.u_t, g_l_t)));
      add3(grad.head_points, d, detail::unit_vjp(hp, c.u_h, detail::lift_vjp(c.u_h, g_l_h)));
    }
  }

  static void add3(std::vector<double>& v, std::size_t d, const Point3& g) {
    v[3 * d] += g.x;
    v[3 * d + 1] += g.y;
    v[3 * d + 2] += g.z;
  }
  static void add4(std::vector<double>& v, std::size_t d, const Quaternion& g) {
    v[4 * d] += g.a;
    v[4 * d + 1] += g.b;
    v[4 * d + 2] += g.c;
    v[4 * d + 3] += g.d;
  }

  ModelConfig cfg_;
  std::vector<DimCache> cache_;
  std::vector<Quaternion> fx_, fy_, fxr_, fyr_;
  SquareMatrix costs_;
};

inline double score(const EntityView& h, const RelationView& r, const EntityView& t, const ModelConfig& cfg) {
  Scorer scorer(cfg);
  return scorer.score(h, r, t);
}

}  // namespace hopfe
