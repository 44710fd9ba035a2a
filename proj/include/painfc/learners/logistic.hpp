#pragma once

// Logistic regression: L2 by damped Newton, L1 ("lasso") by accelerated proximal gradient.

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "painfc/errors.hpp"
#include "painfc/feature_pipeline.hpp"

namespace painfc {

struct LogisticParams {
  std::vector<double> weights;
  double intercept = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;  // infinity norm of the (sub)gradient at exit
};

inline double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

/// log(1 + e^s), overflow safe.
inline double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

inline double linear_score(std::span<const double> x, const LogisticParams& p) {
  double s = p.intercept;
  for (std::size_t j = 0; j < x.size(); ++j) s += p.weights[j] * x[j];
  return s;
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

/// Mean log-loss + (l2 / 2) * |w|^2 and its gradient. The intercept is not penalized.
inline LossAndGradient logistic_objective(const FeatureMatrix& X, const std::vector<double>& w, double b, double l2) {
  LossAndGradient out;
  out.grad_w.assign(X.cols, 0.0);
  const double inv_n = 1.0 / static_cast<double>(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const auto x = X.row(i);
    double s = b;
    for (std::size_t j = 0; j < X.cols; ++j) s += w[j] * x[j];
    const double y = X.labels[i] ? 1.0 : 0.0;
    out.loss += (softplus(s) - y * s) * inv_n;
    const double r = (sigmoid(s) - y) * inv_n;
    for (std::size_t j = 0; j < X.cols; ++j) out.grad_w[j] += r * x[j];
    out.grad_b += r;
  }
  for (std::size_t j = 0; j < X.cols; ++j) {
    out.loss += 0.5 * l2 * w[j] * w[j];
    out.grad_w[j] += l2 * w[j];
  }
  return out;
}

namespace detail {

inline double inf_norm(const std::vector<double>& g, double gb) {
  double m = std::fabs(gb);
  for (double v : g) m = std::max(m, std::fabs(v));
  return m;
}

inline double prevalence_logit(const FeatureMatrix& X) {
  const double p = static_cast<double>(X.count_positive()) / static_cast<double>(X.rows);
  return std::log(p / (1.0 - p));
}

}  // namespace detail

/// Newton iterations with backtracking until |grad|_inf < tol.
inline LogisticParams fit_logistic_l2(const FeatureMatrix& X, double l2, int max_iter, double tol) {
  const std::size_t d = X.cols;
  LogisticParams p;
  p.weights.assign(d, 0.0);
  p.intercept = detail::prevalence_logit(X);
  auto cur = logistic_objective(X, p.weights, p.intercept, l2);
  const double inv_n = 1.0 / static_cast<double>(X.rows);
  for (p.iterations = 0; p.iterations < max_iter; ++p.iterations) {
    p.gradient_norm = detail::inf_norm(cur.grad_w, cur.grad_b);
    if (p.gradient_norm < tol) break;
    // Hessian over (w, b); b is the last coordinate.
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(d + 1));
    Eigen::VectorXd g(static_cast<Eigen::Index>(d + 1));
    Eigen::VectorXd xi(static_cast<Eigen::Index>(d + 1));
    for (std::size_t i = 0; i < X.rows; ++i) {
      const auto x = X.row(i);
      for (std::size_t j = 0; j < d; ++j) xi(static_cast<Eigen::Index>(j)) = x[j];
      xi(static_cast<Eigen::Index>(d)) = 1.0;
      const double q = sigmoid(linear_score(x, p));
      H.selfadjointView<Eigen::Lower>().rankUpdate(xi, q * (1.0 - q) * inv_n);
    }
    H = H.selfadjointView<Eigen::Lower>();
    for (std::size_t j = 0; j < d; ++j) H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += l2;
    // Tiny ridge keeps the system solvable on separable or collinear data.
    H.diagonal().array() += 1e-12;
    for (std::size_t j = 0; j < d; ++j) g(static_cast<Eigen::Index>(j)) = cur.grad_w[j];
    g(static_cast<Eigen::Index>(d)) = cur.grad_b;
    const Eigen::VectorXd step = H.ldlt().solve(g);

    double t = 1.0;
    LogisticParams trial = p;
    LossAndGradient next;
    const double decrease = g.dot(step);
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < d; ++j) trial.weights[j] = p.weights[j] - t * step(static_cast<Eigen::Index>(j));
      trial.intercept = p.intercept - t * step(static_cast<Eigen::Index>(d));
      next = logistic_objective(X, trial.weights, trial.intercept, l2);
      if (next.loss <= cur.loss - 1e-4 * t * decrease || next.loss <= cur.loss) break;
      t *= 0.5;
    }
    if (next.loss > cur.loss) break;  // no further progress possible in floating point
    p.weights = trial.weights;
    p.intercept = trial.intercept;
    cur = std::move(next);
  }
  p.gradient_norm = detail::inf_norm(cur.grad_w, cur.grad_b);
  return p;
}

/// FISTA on mean log-loss + (l2/2)|w|^2 + l1 |w|_1 with backtracking on the step size.
inline LogisticParams fit_logistic_l1(const FeatureMatrix& X, double l1, double l2, int max_iter, double tol) {
  const std::size_t d = X.cols;
  LogisticParams p;
  p.weights.assign(d, 0.0);
  p.intercept = detail::prevalence_logit(X);
  std::vector<double> yw = p.weights, w_prev = p.weights;
  double yb = p.intercept, b_prev = p.intercept;
  double momentum = 1.0;
  double step = 1.0;
  auto soft = [](double v, double thr) { return v > thr ? v - thr : (v < -thr ? v + thr : 0.0); };

  for (p.iterations = 0; p.iterations < max_iter; ++p.iterations) {
    const auto at_y = logistic_objective(X, yw, yb, l2);
    std::vector<double> w_new(d);
    double b_new;
    while (true) {
      for (std::size_t j = 0; j < d; ++j) w_new[j] = soft(yw[j] - step * at_y.grad_w[j], step * l1);
      b_new = yb - step * at_y.grad_b;
      const auto at_new = logistic_objective(X, w_new, b_new, l2);
      double quad = at_y.loss;
      double sq = (b_new - yb) * (b_new - yb);
      quad += at_y.grad_b * (b_new - yb);
      for (std::size_t j = 0; j < d; ++j) {
        quad += at_y.grad_w[j] * (w_new[j] - yw[j]);
        sq += (w_new[j] - yw[j]) * (w_new[j] - yw[j]);
      }
      quad += sq / (2.0 * step);
      if (at_new.loss <= quad + 1e-15 || step < 1e-12) break;
      step *= 0.5;
    }
    // Optimality: the minimum-norm subgradient at the new point.
    const auto g = logistic_objective(X, w_new, b_new, l2);
    double viol = std::fabs(g.grad_b);
    for (std::size_t j = 0; j < d; ++j) {
      double s;
      if (w_new[j] > 0) s = g.grad_w[j] + l1;
      else if (w_new[j] < 0) s = g.grad_w[j] - l1;
      else s = std::max(0.0, std::fabs(g.grad_w[j]) - l1);
      viol = std::max(viol, std::fabs(s));
    }
    const double next_m = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    for (std::size_t j = 0; j < d; ++j) yw[j] = w_new[j] + (momentum - 1.0) / next_m * (w_new[j] - w_prev[j]);
    yb = b_new + (momentum - 1.0) / next_m * (b_new - b_prev);
    momentum = next_m;
    w_prev = w_new;
    b_prev = b_new;
    p.weights = w_new;
    p.intercept = b_new;
    p.gradient_norm = viol;
    if (viol < tol) break;
  }
  return p;
}

}  // namespace painfc
