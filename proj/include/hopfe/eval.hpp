#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopfe/data.hpp"
#include "hopfe/model.hpp"
#include "hopfe/parallel.hpp"

namespace hopfe {

// Fiber tables that turn scoring into distance arithmetic. Entity tables are
// built once; relation tables per relation via set_relation(). Every score
// is bit-identical to Scorer::score on the same inputs.
class ScoreCache {
 public:
  ScoreCache(const ModelParams& params, const ModelConfig& cfg) : params_(params), cfg_(cfg) {
    cfg.validate();
    if (params.dim() != cfg.dim || params.heads() != cfg.heads) {
      throw ShapeMismatch("score cache: parameters disagree with the model config");
    }
    const std::size_t n = params.num_entities(), k = cfg.dim, heads = cfg.heads;
    if (cfg.variant == Variant::kHopfE) {
      plain_.resize(n * k * heads);
      for (std::size_t e = 0; e < n; ++e) {
        const EntityView v = params.entity(e);
        for (std::size_t d = 0; d < k; ++d) {
          const Quaternion l = detail::lift(detail::unit_or_default(v.point(d)));
          for (std::size_t i = 0; i < heads; ++i) plain_[(e * k + d) * heads + i] = hamilton(l, unit_complex(v.phase(d, i)));
        }
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t num_entities() const { return params_.num_entities(); }

  void set_relation(std::uint32_t r) {
    if (r >= params_.num_relations()) throw UnknownRelation("relation id " + std::to_string(r));
    relation_ = r;
    const std::size_t n = params_.num_entities(), k = cfg_.dim, heads = cfg_.heads;
    const RelationView rel = params_.relation(r);
    if (cfg_.variant == Variant::kNoHopf) {
      rotated_.resize(n * k);
      for (std::size_t e = 0; e < n; ++e) {
        const EntityView v = params_.entity(e);
        for (std::size_t d = 0; d < k; ++d) rotated_[e * k + d] = rotate(rel.quat(d), v.point(d));
      }
      return;
    }
    forward_.resize(n * k * heads);
    backward_.resize(n * k * heads);
    for (std::size_t e = 0; e < n; ++e) {
      const EntityView v = params_.entity(e);
      for (std::size_t d = 0; d < k; ++d) {
        const Quaternion q = rel.quat(d);
        const double phi = rel.phase(d);
        const Quaternion lf = detail::lift(detail::unit_or_default(rotate(q, v.point(d))));
        const Quaternion lb = detail::lift(detail::unit_or_default(rotate(conjugate(q), v.point(d))));
        for (std::size_t i = 0; i < heads; ++i) {
          forward_[(e * k + d) * heads + i] = hamilton(lf, unit_complex(v.phase(d, i) + phi));
          backward_[(e * k + d) * heads + i] = hamilton(lb, unit_complex(v.phase(d, i) - phi));
        }
      }
    }
  }

  std::uint32_t relation() const { return relation_; }

  // Score of (h, current relation, t).
  double score(std::uint32_t h, std::uint32_t t) const {
    const std::size_t k = cfg_.dim, heads = cfg_.heads;
    if (cfg_.variant == Variant::kNoHopf) {
      const EntityView tv = params_.entity(t);
      double total = 0.0;
      for (std::size_t d = 0; d < k; ++d) total += norm(rotated_[h * k + d] - tv.point(d));
      return total;
    }
    SquareMatrix costs(heads);
    for (std::size_t d = 0; d < k; ++d) {
      const std::size_t hb = (h * k + d) * heads, tb = (t * k + d) * heads;
      detail::accumulate_pair_costs(costs, &forward_[hb], &plain_[tb], &backward_[tb], &plain_[hb]);
    }
    return reduce_matching(costs, cfg_);
  }

 private:
  const ModelParams& params_;
  ModelConfig cfg_;
  std::uint32_t relation_ = 0;
  std::vector<Quaternion> plain_;     // lift(t̂) ⊗ e^{iθ}
  std::vector<Quaternion> forward_;   // lift(R e) ⊗ e^{i(θ+φ)}
  std::vector<Quaternion> backward_;  // lift(R̄ e) ⊗ e^{i(θ−φ)}
  std::vector<Point3> rotated_;       // no-hopf: R e
};

enum class Side { kHead, kTail };

struct RankOptions {
  bool filtered = true;
};

// Rank of the answer among all entities for the query that hides `side` of
// `x`; requires cache.set_relation(x.r). Lower distance ranks first; ties
// count half. In the filtered setting, other known-true answers are skipped.
inline double rank_query(const ScoreCache& cache, const Triple& x, Side side, const FilterIndex& filter,
                         RankOptions opt = {}) {
  const std::size_t n = cache.num_entities();
  if (x.h >= n || x.t >= n) throw UnknownEntity("entity id out of range in query");
  if (x.r != cache.relation()) throw UnknownRelation("score cache holds a different relation");
  const double answer = cache.score(x.h, x.t);
  std::vector<bool> skip;
  if (opt.filtered) {
    skip.assign(n, false);
    for (std::uint32_t e : side == Side::kTail ? filter.tails(x.h, x.r) : filter.heads(x.r, x.t)) skip[e] = true;
  }
  const std::uint32_t target = side == Side::kTail ? x.t : x.h;
  std::size_t better = 0, ties = 0;
  for (std::uint32_t e = 0; e < n; ++e) {
    if (e == target || (opt.filtered && skip[e])) continue;
    const double s = side == Side::kTail ? cache.score(x.h, e) : cache.score(e, x.t);
    if (s < answer) {
      ++better;
    } else if (s == answer) {
      ++ties;
    }
  }
  return 1.0 + static_cast<double>(better) + 0.5 * static_cast<double>(ties);
}

struct Metrics {
  double mr = 0.0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
};

inline Metrics metrics_from_ranks(std::span<const double> ranks) {
  Metrics m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (double r : ranks) {
    m.mr += r;
    m.mrr += 1.0 / r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits3 += r <= 3.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mr /= n;
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

struct EvalReport {
  Metrics overall;
  std::map<std::string, Metrics> per_relation;
  std::map<std::string, Metrics> per_category;
  std::size_t query_count = 0;
};

struct EvalOptions {
  std::size_t threads = 1;
  RankOptions rank{};
};

// Ranks of the head and tail query of every triple, in order
// (head of triple 0, tail of triple 0, head of triple 1, ...).
inline std::vector<double> rank_triples(std::span<const Triple> triples, const ModelParams& params,
                                        const ModelConfig& cfg, const FilterIndex& filter, EvalOptions opt = {}) {
  std::vector<double> ranks(2 * triples.size());
  std::map<std::uint32_t, std::vector<std::size_t>> by_relation;
  for (std::size_t i = 0; i < triples.size(); ++i) by_relation[triples[i].r].push_back(i);
  ScoreCache cache(params, cfg);
  for (const auto& [r, idx] : by_relation) {
    cache.set_relation(r);
    parallel_for(2 * idx.size(), opt.threads, [&](std::size_t q, std::size_t) {
      const std::size_t i = idx[q / 2];
      ranks[2 * i + q % 2] = rank_query(cache, triples[i], q % 2 == 0 ? Side::kHead : Side::kTail, filter, opt.rank);
    });
  }
  return ranks;
}

inline EvalReport evaluate_triples(std::span<const Triple> triples, const ModelParams& params, const ModelConfig& cfg,
                                   const TripleStore& store, const FilterIndex& filter, EvalOptions opt = {}) {
  if (triples.empty()) throw EmptySplit("nothing to evaluate");
  const std::vector<double> ranks = rank_triples(triples, params, cfg, filter, opt);
  const CategoryStats cats = relation_category_stats(store);
  std::map<std::string, std::vector<double>> rel_ranks, cat_ranks;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const std::uint32_t r = triples[i].r;
    auto& rr = rel_ranks[store.relations.name(r)];
    auto& cr = cat_ranks[std::string(to_string(cats.relations[r].category))];
    for (int s = 0; s < 2; ++s) {
      rr.push_back(ranks[2 * i + s]);
      cr.push_back(ranks[2 * i + s]);
    }
  }
  EvalReport report;
  report.overall = metrics_from_ranks(ranks);
  report.query_count = ranks.size();
  for (const auto& [name, rs] : rel_ranks) report.per_relation[name] = metrics_from_ranks(rs);
  for (const auto& [name, rs] : cat_ranks) report.per_category[name] = metrics_from_ranks(rs);
  return report;
}

inline EvalReport evaluate_split(Split split, const ModelParams& params, const ModelConfig& cfg,
                                 const TripleStore& store, const FilterIndex& filter, EvalOptions opt = {}) {
  const auto triples = store.split(split);
  if (triples.empty()) throw EmptySplit(std::string(to_string(split)) + " split is empty");
  return evaluate_triples(triples, params, cfg, store, filter, opt);
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"mr", m.mr}, {"mrr", m.mrr}, {"hits1", m.hits1}, {"hits3", m.hits3}, {"hits10", m.hits10},
          {"queries", m.count}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = to_json(r.overall);
  j["query_count"] = r.query_count;
  j["per_relation"] = nlohmann::json::object();
  for (const auto& [name, m] : r.per_relation) j["per_relation"][name] = to_json(m);
  j["per_category"] = nlohmann::json::object();
  for (const auto& [name, m] : r.per_category) j["per_category"][name] = to_json(m);
  return j;
}

// ---------------------------------------------------------------------------
// Relation angle analysis

// Per dimension, wrap(signed(r1_d) + signed(r2_d)); near 0 for an inverse pair.
inline std::vector<double> inverse_pair_angles(const ModelParams& params, std::uint32_t r1, std::uint32_t r2) {
  if (r1 >= params.num_relations() || r2 >= params.num_relations()) throw UnknownRelation("inverse pair");
  const RelationView a = params.relation(r1), b = params.relation(r2);
  std::vector<double> out(params.dim());
  for (std::size_t d = 0; d < out.size(); ++d) {
    out[d] = wrap_angle(angle_axis(a.quat(d)).signed_angle + angle_axis(b.quat(d)).signed_angle);
  }
  return out;
}

// Per dimension, wrap(signed(r1_d ⊗ r2_d) − signed(r3_d)); near 0 when r3 composes r1 then r2.
inline std::vector<double> composition_angles(const ModelParams& params, std::uint32_t r1, std::uint32_t r2,
                                              std::uint32_t r3) {
  for (std::uint32_t r : {r1, r2, r3}) {
    if (r >= params.num_relations()) throw UnknownRelation("composition triple");
  }
  const RelationView a = params.relation(r1), b = params.relation(r2), c = params.relation(r3);
  std::vector<double> out(params.dim());
  for (std::size_t d = 0; d < out.size(); ++d) {
    out[d] = wrap_angle(angle_axis(hamilton(a.quat(d), b.quat(d))).signed_angle - angle_axis(c.quat(d)).signed_angle);
  }
  return out;
}

struct Histogram {
  std::string relation_set;
  std::string dim_agg;  // "pooled" or "d<i>"
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  double bin_left(std::size_t b) const { return lo + (hi - lo) * static_cast<double>(b) / counts.size(); }
  double bin_right(std::size_t b) const { return lo + (hi - lo) * static_cast<double>(b + 1) / counts.size(); }
  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

// Equal-width bins on [lo, hi]; values outside are clamped into the end bins.
inline Histogram make_histogram(std::string set, std::string agg, std::span<const double> values, std::size_t bins,
                                double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw InvalidConfig("histogram needs bins >= 1 and hi > lo");
  Histogram h{std::move(set), std::move(agg), lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double v : values) {
    auto b = static_cast<long long>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

struct RelationSet {
  enum class Kind { kInverse, kComposition };
  Kind kind = Kind::kInverse;
  std::vector<std::uint32_t> relations;  // 2 for inverse, 3 for composition
};

// Angle histograms over (−π, π] for every relation set, pooled over
// dimensions and per dimension, plus a pooled norm histogram per relation
// quaternion table involved.
inline std::vector<Histogram> angle_histograms(std::span<const RelationSet> sets, const ModelParams& params,
                                               const Dictionary& relation_names, std::size_t bins) {
  std::vector<Histogram> out;
  std::vector<std::uint32_t> norm_relations;
  const double pi = std::numbers::pi;
  for (const RelationSet& s : sets) {
    std::vector<double> values;
    std::string label;
    if (s.kind == RelationSet::Kind::kInverse) {
      if (s.relations.size() != 2) throw InvalidConfig("inverse set needs two relations");
      values = inverse_pair_angles(params, s.relations[0], s.relations[1]);
      label = "inverse:";
    } else {
      if (s.relations.size() != 3) throw InvalidConfig("composition set needs three relations");
      values = composition_angles(params, s.relations[0], s.relations[1], s.relations[2]);
      label = "composition:";
    }
    for (std::size_t i = 0; i < s.relations.size(); ++i) {
      label += (i ? "|" : "") + relation_names.name(s.relations[i]);
      if (std::find(norm_relations.begin(), norm_relations.end(), s.relations[i]) == norm_relations.end()) {
        norm_relations.push_back(s.relations[i]);
      }
    }
    out.push_back(make_histogram(label, "pooled", values, bins, -pi, pi));
    for (std::size_t d = 0; d < values.size(); ++d) {
      out.push_back(make_histogram(label, "d" + std::to_string(d), std::span<const double>(&values[d], 1), bins, -pi, pi));
    }
  }
  for (std::uint32_t r : norm_relations) {
    const RelationView v = params.relation(r);
    std::vector<double> norms(params.dim());
    double top = 0.0;
    for (std::size_t d = 0; d < norms.size(); ++d) {
      norms[d] = norm(v.quat(d));
      top = std::max(top, norms[d]);
    }
    out.push_back(make_histogram("norm:" + relation_names.name(r), "pooled", norms, bins, 0.0, top > 0 ? top : 1.0));
  }
  return out;
}

inline void write_histograms_csv(std::ostream& out, std::span<const Histogram> hists) {
  out << "relation_set,dim_agg,bin_left,bin_right,count\n";
  out.precision(17);
  for (const Histogram& h : hists) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      out << h.relation_set << ',' << h.dim_agg << ',' << h.bin_left(b) << ',' << h.bin_right(b) << ','
          << h.counts[b] << '\n';
    }
  }
}

}  // namespace hopfe
