#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "hopfe/errors.hpp"

namespace hopfe {

// Dense row-major n×n matrix of doubles.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}
  SquareMatrix(std::size_t n, std::initializer_list<double> values) : n_(n), data_(values) {
    if (data_.size() != n * n) throw ShapeMismatch("SquareMatrix initializer has wrong size");
  }

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  const std::vector<double>& values() const noexcept { return data_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct SinkhornOptions {
  double epsilon = 0.1;
  int max_iters = 100;
  double tolerance = 1e-9;  // on the row-marginal error
};

struct TransportPlan {
  SquareMatrix weights;  // uniform marginals 1/H on both sides
  double cost = 0.0;     // sum_ij weights_ij * cost_ij
  int iterations = 0;         // Sinkhorn sweeps before the Newton polish
  double marginal_error = 0.0;
};

namespace detail {

inline double log_sum_exp(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

// Entropic optimal transport between uniform measures, solved on the dual
// potentials (f, g) with plan_ij = exp((f_i + g_j - C_ij) / eps).
//
// Log-domain Sinkhorn sweeps run first (early stop at opt.tolerance). Sinkhorn
// contracts very slowly once cost differences dwarf eps, so a damped Newton
// ascent on the dual then drives the marginals to machine precision. The plan
// is therefore a smooth function of the costs, and cost_gradient() is the
// exact derivative by implicit differentiation of the marginal conditions.
class SinkhornRun {
 public:
  SinkhornRun(const SquareMatrix& cost, const SinkhornOptions& opt) : cost_(cost), opt_(opt) {
    n_ = cost.size();
    if (n_ == 0) throw ShapeMismatch("sinkhorn: empty cost matrix");
    if (!(opt.epsilon > 0.0)) throw InvalidConfig("sinkhorn: epsilon must be positive");
    if (opt.max_iters < 1) throw InvalidConfig("sinkhorn: max_iters must be at least 1");
    for (double c : cost.values()) {
      if (!std::isfinite(c)) throw NumericalOverflow("sinkhorn: non-finite cost entry");
    }
    f_.assign(n_, 0.0);
    g_.assign(n_, 0.0);
    sinkhorn_sweeps();
    newton_polish();
    finalize();
  }

  const TransportPlan& plan() const noexcept { return plan_; }

  // d(plan.cost)/d(cost).
  //
  // With S = Σ P_ij C_ij and the marginal conditions K [df; dg] = [P dC 1; Pᵀ dC 1],
  // the adjoint system K [λ; μ] = [P∘C 1; (P∘C)ᵀ 1] / eps gives
  //   dS/dC_ij = P_ij (1 - C_ij / eps + λ_i + μ_j).
  SquareMatrix cost_gradient() const {
    const double eps = opt_.epsilon;
    Eigen::VectorXd rhs(2 * n_ - 1);
    rhs.setZero();
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const double pc = plan_.weights(i, j) * cost_(i, j) / eps;
        rhs[i] += pc;
        if (j + 1 < n_) rhs[n_ + j] += pc;
      }
    }
    const Eigen::VectorXd sol = reduced_hessian(plan_.weights).ldlt().solve(rhs);
    SquareMatrix grad(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const double mu = j + 1 < n_ ? sol[n_ + j] : 0.0;
        grad(i, j) = plan_.weights(i, j) * (1.0 - cost_(i, j) / eps + sol[i] + mu);
      }
    }
    return grad;
  }

 private:
  double entry(std::size_t i, std::size_t j) const {
    return std::exp((f_[i] + g_[j] - cost_(i, j)) / opt_.epsilon);
  }

  // Marginal residual (target - actual), rows then columns; returns the max abs.
  double residual(std::vector<double>* res) const {
    const double target = 1.0 / static_cast<double>(n_);
    std::vector<double> r(2 * n_, target);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const double p = entry(i, j);
        r[i] -= p;
        r[n_ + j] -= p;
      }
    }
    double err = 0.0;
    for (double v : r) err = std::max(err, std::abs(v));
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    if (res) *res = std::move(r);
    return err;
  }

  double dual_objective() const {
    const double target = 1.0 / static_cast<double>(n_);
    double value = 0.0;
    for (std::size_t i = 0; i < n_; ++i) value += target * (f_[i] + g_[i]);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) value -= opt_.epsilon * entry(i, j);
    return value;
  }

  void sinkhorn_sweeps() {
    const double eps = opt_.epsilon;
    const double log_marginal = -std::log(static_cast<double>(n_));
    std::vector<double> scratch(n_);
    for (int it = 1; it <= opt_.max_iters; ++it) {
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) scratch[j] = (g_[j] - cost_(i, j)) / eps;
        f_[i] = eps * (log_marginal - log_sum_exp(scratch.data(), n_));
      }
      for (std::size_t j = 0; j < n_; ++j) {
        for (std::size_t i = 0; i < n_; ++i) scratch[i] = (f_[i] - cost_(i, j)) / eps;
        g_[j] = eps * (log_marginal - log_sum_exp(scratch.data(), n_));
      }
      plan_.iterations = it;
      if (residual(nullptr) < opt_.tolerance) break;
    }
  }

  // Hessian of the dual (up to -1/eps) with the gauge g_{n-1} = 0 removed.
  Eigen::MatrixXd reduced_hessian(const SquareMatrix& p) const {
    const std::size_t m = 2 * n_ - 1;
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        k(i, i) += p(i, j);
        if (j + 1 < n_) {
          k(n_ + j, n_ + j) += p(i, j);
          k(i, n_ + j) += p(i, j);
          k(n_ + j, i) += p(i, j);
        }
      }
    }
    k.diagonal().array() += 1e-14 * k.diagonal().maxCoeff();
    return k;
  }

  void newton_polish() {
    constexpr double kTarget = 1e-14;
    constexpr int kMaxNewton = 100;
    std::vector<double> res;
    double err = residual(&res);
    SquareMatrix p(n_);
    for (int it = 0; it < kMaxNewton && err > kTarget; ++it) {
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j) p(i, j) = entry(i, j);
      Eigen::VectorXd r(2 * n_ - 1);
      for (std::size_t c = 0; c + 1 < 2 * n_; ++c) r[c] = res[c];
      const Eigen::VectorXd dir = reduced_hessian(p).ldlt().solve(opt_.epsilon * r);
      const double slope = r.dot(dir);
      const double base = dual_objective();
      const std::vector<double> f0 = f_, g0 = g_;
      bool accepted = false;
      for (double step = 1.0; step > 1e-18; step *= 0.5) {
        for (std::size_t i = 0; i < n_; ++i) f_[i] = f0[i] + step * dir[i];
        for (std::size_t j = 0; j + 1 < n_; ++j) g_[j] = g0[j] + step * dir[n_ + j];
        std::vector<double> trial_res;
        const double trial_err = residual(&trial_res);
        const double value = dual_objective();
        if (std::isfinite(value) && (value >= base + 1e-4 * step * slope || trial_err < 0.5 * err)) {
          res = std::move(trial_res);
          err = trial_err;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        f_ = f0;
        g_ = g0;
        break;
      }
    }
  }

  void finalize() {
    plan_.weights = SquareMatrix(n_);
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        const double w = entry(i, j);
        plan_.weights(i, j) = w;
        row += w;
        total += w * cost_(i, j);
      }
      if (!(row > 0.0) || !std::isfinite(row)) {
        throw NumericalOverflow("sinkhorn: plan row vanished; retry with a larger epsilon");
      }
    }
    plan_.cost = total;
    plan_.marginal_error = residual(nullptr);
  }

  const SquareMatrix& cost_;
  SinkhornOptions opt_;
  std::size_t n_ = 0;
  std::vector<double> f_, g_;
  TransportPlan plan_;
};

}  // namespace detail

// Entropic optimal transport between two uniform measures on H points.
inline TransportPlan sinkhorn_plan(const SquareMatrix& cost, const SinkhornOptions& opt = {}) {
  return detail::SinkhornRun(cost, opt).plan();
}

inline TransportPlan sinkhorn_plan(const SquareMatrix& cost, double epsilon, int max_iters) {
  return sinkhorn_plan(cost, SinkhornOptions{epsilon, max_iters});
}

struct MinMatch {
  std::size_t i = 0;
  std::size_t j = 0;
  double value = 0.0;
};

// Smallest entry; ties go to the smallest i, then j.
inline MinMatch min_match(const SquareMatrix& cost) {
  if (cost.size() == 0) throw ShapeMismatch("min_match: empty cost matrix");
  MinMatch best{0, 0, cost(0, 0)};
  for (std::size_t i = 0; i < cost.size(); ++i) {
    for (std::size_t j = 0; j < cost.size(); ++j) {
      if (cost(i, j) < best.value) best = {i, j, cost(i, j)};
    }
  }
  return best;
}

}  // namespace hopfe
