#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hopfe/data.hpp"
#include "hopfe/errors.hpp"
#include "hopfe/eval.hpp"
#include "hopfe/model.hpp"
#include "hopfe/parallel.hpp"

namespace hopfe {

struct TrainConfig {
  std::size_t batch_size = 512;
  std::size_t neg_samples = 64;
  double learning_rate = 0.1;
  double decay_rate = 0.1;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 0;
  std::size_t grad_check_interval = 0;  // 0 = off
  std::size_t valid_every = 0;          // 0 = only after the last step
  std::size_t threads = 1;
  Split monitor = Split::kValid;        // split ranked at each log event
  std::size_t monitor_sample = 0;       // 0 = whole split, else a fixed random subset

  void validate() const {
    if (batch_size < 1) throw InvalidConfig("batch must be at least 1");
    if (!(learning_rate > 0.0)) throw InvalidConfig("lr must be positive");
    if (!(decay_rate > 0.0) || decay_rate > 1.0) throw InvalidConfig("decay must lie in (0, 1]");
    if (max_steps < 1) throw InvalidConfig("steps must be at least 1");
    if (threads < 1) throw InvalidConfig("threads must be at least 1");
  }
};

// Gradient arrays mirror the parameter tables.
using GradientBundle = ParamTables;

inline constexpr int kNegativeResampleCap = 100;

// Corrupts head or tail (fair coin) with a uniform entity, resampling up to
// the cap while the corruption is a known-true triple.
inline std::vector<Triple> sample_negatives(const Triple& x, std::size_t num_entities, const FilterIndex& filter,
                                            std::size_t n_neg, std::mt19937_64& rng) {
  std::vector<Triple> out;
  out.reserve(n_neg);
  std::uniform_int_distribution<std::uint32_t> entity(0, static_cast<std::uint32_t>(num_entities - 1));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t n = 0; n < n_neg; ++n) {
    const bool corrupt_head = coin(rng);
    Triple c = x;
    for (int attempt = 0; attempt <= kNegativeResampleCap; ++attempt) {
      c = x;
      (corrupt_head ? c.h : c.t) = entity(rng);
      if (!filter.contains(c)) break;
    }
    out.push_back(c);
  }
  return out;
}

// -log sigmoid(z), stable for large |z|.
inline double neg_log_sigmoid(double z) { return std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

struct LossTerms {
  double loss = 0.0;
  double d_positive = 0.0;           // dL/dD+
  std::vector<double> d_negatives;   // dL/dD-_k with the adversarial weights held fixed
  std::vector<double> weights;       // self-adversarial softmax weights
};

// L = -log σ(γ - D+) - Σ_k p_k log σ(D-_k - γ), p = softmax(α (γ - D-)).
inline LossTerms loss_terms(double positive, std::span<const double> negatives, double gamma, double alpha) {
  LossTerms out;
  out.loss = neg_log_sigmoid(gamma - positive);
  out.d_positive = sigmoid(positive - gamma);
  const std::size_t n = negatives.size();
  out.weights.resize(n);
  out.d_negatives.resize(n);
  if (n == 0) return out;
  double top = -std::numeric_limits<double>::infinity();
  for (double d : negatives) top = std::max(top, alpha * (gamma - d));
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    out.weights[k] = std::exp(alpha * (gamma - negatives[k]) - top);
    total += out.weights[k];
  }
  for (std::size_t k = 0; k < n; ++k) {
    out.weights[k] /= total;
    out.loss += out.weights[k] * neg_log_sigmoid(negatives[k] - gamma);
    out.d_negatives[k] = -out.weights[k] * sigmoid(gamma - negatives[k]);
  }
  return out;
}

inline double loss(const Triple& positive, std::span<const Triple> negatives, const ModelParams& params,
                   const ModelConfig& cfg) {
  Scorer scorer(cfg);
  auto score_of = [&](const Triple& x) {
    if (x.h >= params.num_entities() || x.t >= params.num_entities() || x.r >= params.num_relations()) {
      throw ShapeMismatch("loss: triple ids outside the parameter tables");
    }
    return scorer.score(params.entity(x.h), params.relation(x.r), params.entity(x.t));
  };
  std::vector<double> neg(negatives.size());
  for (std::size_t k = 0; k < neg.size(); ++k) neg[k] = score_of(negatives[k]);
  return loss_terms(score_of(positive), neg, cfg.gamma, cfg.alpha).loss;
}

struct BatchItem {
  Triple positive;
  std::vector<Triple> negatives;
};

namespace detail {

// Gradient contribution of one scored triple, already scaled.
struct Contribution {
  Triple triple;
  TripleGrad grad;
};

struct ItemResult {
  double loss = 0.0;
  std::vector<Contribution> parts;
};

inline void scatter(GradientBundle& g, const ModelParams& p, const Contribution& c) {
  const std::size_t k = p.dim(), heads = p.heads();
  auto add = [](std::vector<double>& dst, std::size_t offset, const std::vector<double>& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[offset + i] += src[i];
  };
  add(g.entity_points, c.triple.h * k * 3, c.grad.head_points);
  add(g.entity_phases, c.triple.h * k * heads, c.grad.head_phases);
  add(g.entity_points, c.triple.t * k * 3, c.grad.tail_points);
  add(g.entity_phases, c.triple.t * k * heads, c.grad.tail_phases);
  add(g.relation_quats, c.triple.r * k * 4, c.grad.relation_quats);
  add(g.relation_phases, c.triple.r * k, c.grad.relation_phases);
}

inline ItemResult item_gradient(const BatchItem& item, const ModelParams& params, Scorer& scorer, double scale) {
  const ModelConfig& cfg = scorer.config();
  auto view = [&](const Triple& x, auto&& fn) {
    return fn(params.entity(x.h), params.relation(x.r), params.entity(x.t));
  };
  auto score_of = [&](const Triple& x) {
    return view(x, [&](auto h, auto r, auto t) { return scorer.score(h, r, t); });
  };
  std::vector<double> neg(item.negatives.size());
  for (std::size_t k = 0; k < neg.size(); ++k) neg[k] = score_of(item.negatives[k]);
  const LossTerms terms = loss_terms(score_of(item.positive), neg, cfg.gamma, cfg.alpha);

  ItemResult out;
  out.loss = terms.loss;
  auto backprop = [&](const Triple& x, double upstream) {
    if (upstream == 0.0) return;
    Contribution c{x, {}};
    c.grad.reset(cfg.dim, cfg.heads);
    view(x, [&](auto h, auto r, auto t) { return scorer.score_with_grad(h, r, t, upstream * scale, c.grad); });
    out.parts.push_back(std::move(c));
  };
  backprop(item.positive, terms.d_positive);
  for (std::size_t k = 0; k < neg.size(); ++k) backprop(item.negatives[k], terms.d_negatives[k]);
  return out;
}

}  // namespace detail

// Items per parallel wave; bounds the memory held by per-item gradients.
inline constexpr std::size_t kGradientWave = 64;

// Mean loss over the batch and its gradient (written into `grads`, which is
// resized and zeroed). Items are reduced in batch order, so the result does
// not depend on the thread count.
inline double gradients(std::span<const BatchItem> batch, const ModelParams& params, const ModelConfig& cfg,
                        GradientBundle& grads, std::size_t threads = 1) {
  if (batch.empty()) throw EmptySplit("gradients: empty batch");
  for (const BatchItem& item : batch) {
    auto check = [&](const Triple& x) {
      if (x.h >= params.num_entities() || x.t >= params.num_entities() || x.r >= params.num_relations()) {
        throw ShapeMismatch("gradients: triple ids outside the parameter tables");
      }
    };
    check(item.positive);
    for (const Triple& x : item.negatives) check(x);
  }
  grads = params.zeros_like();
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<Scorer> scorers(std::max<std::size_t>(threads, 1), Scorer(cfg));
  std::vector<detail::ItemResult> results;
  double total = 0.0;
  for (std::size_t begin = 0; begin < batch.size(); begin += kGradientWave) {
    const std::size_t end = std::min(batch.size(), begin + kGradientWave);
    results.assign(end - begin, {});
    parallel_for(end - begin, threads, [&](std::size_t i, std::size_t worker) {
      results[i] = detail::item_gradient(batch[begin + i], params, scorers[worker], scale);
    });
    for (const auto& r : results) {
      total += r.loss;
      for (const auto& c : r.parts) detail::scatter(grads, params, c);
    }
  }
  bool finite = std::isfinite(total);
  grads.for_each_table([&](const std::vector<double>& t) {
    for (double g : t) finite = finite && std::isfinite(g);
  });
  if (!finite) throw NonFiniteGradient("non-finite loss or gradient; lower the learning rate");
  return total * scale;
}

inline double batch_loss(std::span<const BatchItem> batch, const ModelParams& params, const ModelConfig& cfg) {
  double total = 0.0;
  for (const BatchItem& item : batch) total += loss(item.positive, item.negatives, params, cfg);
  return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Finite-difference check

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;     // coordinates with |analytic| above the floor
  std::string worst;           // "table[index]" of the worst coordinate
};

namespace detail {

// Mean batch loss with the adversarial weights pinned to `weights`, the
// objective whose gradient gradients() returns.
inline double pinned_weight_loss(std::span<const BatchItem> batch, const ModelParams& params, const ModelConfig& cfg,
                                 const std::vector<std::vector<double>>& weights) {
  Scorer scorer(cfg);
  auto score_of = [&](const Triple& x) { return scorer.score(params.entity(x.h), params.relation(x.r), params.entity(x.t)); };
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += neg_log_sigmoid(cfg.gamma - score_of(batch[i].positive));
    for (std::size_t k = 0; k < batch[i].negatives.size(); ++k) {
      total += weights[i][k] * neg_log_sigmoid(score_of(batch[i].negatives[k]) - cfg.gamma);
    }
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace detail

// Central differences against gradients() on every coordinate (or
// `max_coords` evenly spaced ones). The adversarial weights are detached, so
// the differenced objective holds them at their values for `params`.
// Relative error |a - f| / |a| is taken over coordinates with |a| > floor.
inline GradCheckResult check_gradients(std::span<const BatchItem> batch, ModelParams params, const ModelConfig& cfg,
                                       double step = 1e-5, double floor = 1e-6, std::size_t max_coords = 0) {
  GradientBundle analytic;
  gradients(batch, params, cfg, analytic);
  std::vector<std::vector<double>> weights;
  {
    Scorer scorer(cfg);
    for (const BatchItem& item : batch) {
      std::vector<double> neg;
      for (const Triple& x : item.negatives) neg.push_back(scorer.score(params.entity(x.h), params.relation(x.r), params.entity(x.t)));
      const double pos = scorer.score(params.entity(item.positive.h), params.relation(item.positive.r),
                                      params.entity(item.positive.t));
      weights.push_back(loss_terms(pos, neg, cfg.gamma, cfg.alpha).weights);
    }
  }
  GradCheckResult out;
  const char* names[] = {"entity_points", "entity_phases", "relation_quats", "relation_phases"};
  std::vector<std::vector<double>*> tables{&params.tables.entity_points, &params.tables.entity_phases,
                                           &params.tables.relation_quats, &params.tables.relation_phases};
  std::vector<const std::vector<double>*> grads{&analytic.entity_points, &analytic.entity_phases,
                                                &analytic.relation_quats, &analytic.relation_phases};
  std::size_t total = 0;
  for (auto* t : tables) total += t->size();
  const std::size_t stride = max_coords == 0 || max_coords >= total ? 1 : total / max_coords;
  std::size_t flat = 0;
  for (std::size_t ti = 0; ti < tables.size(); ++ti) {
    std::vector<double>& values = *tables[ti];
    for (std::size_t c = 0; c < values.size(); ++c, ++flat) {
      if (flat % stride != 0) continue;
      const double a = (*grads[ti])[c];
      if (std::abs(a) <= floor) continue;
      const double saved = values[c];
      values[c] = saved + step;
      const double up = detail::pinned_weight_loss(batch, params, cfg, weights);
      values[c] = saved - step;
      const double down = detail::pinned_weight_loss(batch, params, cfg, weights);
      values[c] = saved;
      const double fd = (up - down) / (2 * step);
      const double rel = std::abs(a - fd) / std::abs(a);
      ++out.checked;
      if (rel > out.max_relative_error || !std::isfinite(rel)) {
        out.max_relative_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        out.worst = std::string(names[ti]) + "[" + std::to_string(c) + "]";
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamMoments {
  std::vector<double> m, v;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<AdamMoments> tables;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

inline double scheduled_lr(double lr, double decay_rate, std::size_t step, std::size_t max_steps) {
  return lr * std::pow(decay_rate, static_cast<double>(step) / static_cast<double>(max_steps));
}

// One Adam update of `values`; `t` is the 1-based step used for bias correction.
inline void adam_update(std::span<double> values, std::span<const double> grad, AdamMoments& mom, std::size_t t,
                        double lr) {
  if (grad.size() != values.size()) throw ShapeMismatch("adam: gradient shape differs from parameters");
  if (mom.m.size() != values.size()) {
    mom.m.assign(values.size(), 0.0);
    mom.v.assign(values.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
  for (std::size_t i = 0; i < values.size(); ++i) {
    mom.m[i] = kAdamBeta1 * mom.m[i] + (1.0 - kAdamBeta1) * grad[i];
    mom.v[i] = kAdamBeta2 * mom.v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
    values[i] -= lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + kAdamEps);
  }
}

// Dense Adam step over every table of `params`.
inline void adam_step(ParamTables& params, const GradientBundle& grads, AdamState& state, double lr) {
  ++state.step;
  state.tables.resize(4);
  std::vector<std::vector<double>*> p{&params.entity_points, &params.entity_phases, &params.relation_quats,
                                      &params.relation_phases};
  std::vector<const std::vector<double>*> g{&grads.entity_points, &grads.entity_phases, &grads.relation_quats,
                                            &grads.relation_phases};
  for (std::size_t i = 0; i < p.size(); ++i) adam_update(*p[i], *g[i], state.tables[i], state.step, lr);
}

// ---------------------------------------------------------------------------
// Training loop

// Epoch-wise shuffled draws of training indices.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

// Negatives for item `index` of step `step`, independent of thread layout.
inline std::mt19937_64 item_rng(std::uint64_t seed, std::size_t step, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(index), 0x6e656773u};
  return std::mt19937_64(seq);
}

inline std::vector<BatchItem> make_batch(const TripleStore& store, const FilterIndex& filter, BatchSampler& sampler,
                                         const TrainConfig& cfg, std::size_t step) {
  const auto train = store.split(Split::kTrain);
  std::vector<BatchItem> batch;
  for (std::size_t idx : sampler.next(cfg.batch_size)) batch.push_back({train[idx], {}});
  parallel_for(batch.size(), cfg.threads, [&](std::size_t i, std::size_t) {
    auto rng = item_rng(cfg.seed, step, i);
    batch[i].negatives = sample_negatives(batch[i].positive, store.num_entities(), filter, cfg.neg_samples, rng);
  });
  return batch;
}

struct LogRecord {
  std::size_t step = 0;
  double loss = 0.0;  // mean batch loss since the previous record
  Metrics metrics;
  double lr = 0.0;
};

inline nlohmann::json to_json(const LogRecord& r) {
  return {{"step", r.step}, {"loss", r.loss},         {"mrr", r.metrics.mrr},        {"hits1", r.metrics.hits1},
          {"hits3", r.metrics.hits3}, {"hits10", r.metrics.hits10}, {"lr", r.lr}};
}

// Attribute-driven phases: the projection replaces the free phases of
// entities that have attributes.
struct Semantics {
  AttributeTable table;
  SemanticProjection projection;
};

struct TrainHooks {
  std::function<void(const LogRecord&)> on_log;
  std::function<void(const std::string&)> on_warning;
  std::function<void(std::size_t step, const GradCheckResult&)> on_grad_check;
};

struct TrainResult {
  ModelParams params;
  std::vector<LogRecord> log;
  std::optional<SemanticProjection> projection;
};

// Fixed random subset of a split used for monitoring.
inline std::vector<Triple> monitor_triples(const TripleStore& store, const TrainConfig& cfg) {
  const auto all = store.split(cfg.monitor);
  std::vector<Triple> out(all.begin(), all.end());
  if (cfg.monitor_sample > 0 && cfg.monitor_sample < out.size()) {
    std::mt19937_64 rng(cfg.seed ^ 0x6d6f6e69746f72ull);
    std::shuffle(out.begin(), out.end(), rng);
    out.resize(cfg.monitor_sample);
  }
  return out;
}

inline TrainResult train(const TripleStore& store, const TrainConfig& cfg, const ModelConfig& model_cfg,
                         const TrainHooks& hooks = {}, std::optional<Semantics> semantics = std::nullopt) {
  cfg.validate();
  model_cfg.validate();
  if (store.split(Split::kTrain).empty()) throw EmptySplit("training split is empty");
  const FilterIndex filter(store);
  TrainResult result;
  result.params = init_model(store.num_entities(), store.num_relations(), model_cfg, cfg.seed);
  ModelParams& params = result.params;
  BatchSampler sampler(store.split(Split::kTrain).size(), cfg.seed);
  AdamState adam;
  AdamMoments sem_w, sem_b;
  const std::vector<Triple> monitor = monitor_triples(store, cfg);
  if (semantics && semantics->table.num_entities != store.num_entities()) {
    throw ShapeMismatch("semantic attribute table does not match the entity count");
  }

  double lr_scale = 1.0;
  double loss_sum = 0.0;
  std::size_t loss_steps = 0;
  GradientBundle grads;
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    if (semantics) attribute_phases(semantics->table, semantics->projection, params.tables.entity_phases);
    const std::vector<BatchItem> batch = make_batch(store, filter, sampler, cfg, step);
    const double lr = scheduled_lr(cfg.learning_rate, cfg.decay_rate, step, cfg.max_steps) * lr_scale;
    double batch_loss_value = 0.0;
    try {
      batch_loss_value = gradients(batch, params, model_cfg, grads, cfg.threads);
    } catch (const NonFiniteGradient& e) {
      lr_scale *= 0.5;
      if (hooks.on_warning) {
        hooks.on_warning("step " + std::to_string(step + 1) + ": " + e.what() + "; halving learning rate");
      }
      continue;
    }
    if (cfg.grad_check_interval > 0 && (step + 1) % cfg.grad_check_interval == 0 && hooks.on_grad_check) {
      const std::span<const BatchItem> head(batch.data(), std::min<std::size_t>(batch.size(), 4));
      hooks.on_grad_check(step + 1, check_gradients(head, params, model_cfg, 1e-5, 1e-6, 200));
    }
    if (semantics) {
      std::vector<double> wg(semantics->projection.weights.size(), 0.0), bg(semantics->projection.bias.size(), 0.0);
      attribute_phases_vjp(semantics->table, semantics->projection, grads.entity_phases, wg, bg);
      adam_update(semantics->projection.weights, wg, sem_w, adam.step + 1, lr);
      adam_update(semantics->projection.bias, bg, sem_b, adam.step + 1, lr);
    }
    adam_step(params.tables, grads, adam, lr);
    loss_sum += batch_loss_value;
    ++loss_steps;

    const bool last = step + 1 == cfg.max_steps;
    if (last || (cfg.valid_every > 0 && (step + 1) % cfg.valid_every == 0)) {
      if (semantics) attribute_phases(semantics->table, semantics->projection, params.tables.entity_phases);
      LogRecord rec;
      rec.step = step + 1;
      rec.loss = loss_steps ? loss_sum / static_cast<double>(loss_steps) : 0.0;
      rec.lr = lr;
      if (!monitor.empty()) {
        rec.metrics = evaluate_triples(monitor, params, model_cfg, store, filter, {cfg.threads}).overall;
      }
      loss_sum = 0.0;
      loss_steps = 0;
      result.log.push_back(rec);
      if (hooks.on_log) hooks.on_log(rec);
    }
  }
  if (semantics) result.projection = semantics->projection;
  return result;
}

}  // namespace hopfe
