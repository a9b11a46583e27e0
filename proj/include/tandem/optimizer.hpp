#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "tandem/bounds.hpp"
#include "tandem/data.hpp"
#include "tandem/losses.hpp"

namespace tandem {

enum class Objective { tandem, first_order };

inline const char* to_string(Objective o) {
  return o == Objective::tandem ? "tandem" : "first-order";
}

struct OptimizerConfig {
  std::size_t max_outer_iters = 200;
  std::size_t inner_grad_steps = 1;
  double tolerance = 1e-9;
  // iRprop- step-size schedule
  double initial_step = 0.1;
  double increase_factor = 1.2;
  double decrease_factor = 0.5;
  double min_step = 1e-8;
  double max_step = 50.0;
  double rho_floor = 1e-12;
  std::uint64_t seed = 0;  // no stochastic component at present; echoed in reports
};

inline void check_config(const OptimizerConfig& cfg) {
  if (!(cfg.decrease_factor > 0.0 && cfg.decrease_factor < 1.0 && cfg.increase_factor > 1.0)) {
    throw InputError("step factors must satisfy 0 < decrease < 1 < increase");
  }
  if (!(cfg.tolerance > 0.0)) throw InputError("tolerance must be positive");
  if (!(cfg.min_step > 0.0 && cfg.min_step <= cfg.initial_step && cfg.initial_step <= cfg.max_step)) {
    throw InputError("step bounds must satisfy 0 < min <= initial <= max");
  }
}

struct TraceEntry {
  std::size_t iteration;
  double lambda;
  double objective;
};

struct OptimizationResult {
  WeightDistribution weights;  // best iterate
  double bound = 1.0;          // raw bound at the best iterate
  std::size_t iterations = 0;
  std::vector<TraceEntry> trace;
  bool converged = false;
};

// Minimizer over lambda of the bound for fixed rho:
//   2 / (sqrt(2 n E / (c KL + ln(2 sqrt(n)/delta)) + 1) + 1)
// with c = 2 for the tandem bound and c = 1 for the first-order bound.
inline double optimal_lambda(double expected_loss, double kl, std::size_t n, double delta,
                             double kl_coefficient = 2.0) {
  const double complexity = kl_coefficient * kl + confidence_term(n, delta);
  const double ratio = 2.0 * static_cast<double>(n) * expected_loss / complexity;
  return clamp_lambda(2.0 / (std::sqrt(ratio + 1.0) + 1.0));
}

// Ambient gradient of f(rho) = rho^T L rho + 2/(lambda n) KL(rho || pi).
inline std::vector<double> tandem_rho_gradient(const LossTables& loss, const WeightDistribution& w,
                                               const BoundParams& p, double rho_floor = 1e-12) {
  const std::size_t m = loss.num_members();
  std::vector<double> grad(m);
  const double coef = 2.0 / (w.lambda * static_cast<double>(p.n));
  for (std::size_t i = 0; i < m; ++i) {
    if (!(w.rho[i] >= rho_floor)) throw InputError("rho entry below floor", {}, i);
    double lr = 0.0;
    for (std::size_t j = 0; j < m; ++j) lr += w.rho[j] * loss.tandem(i, j);
    grad[i] = 2.0 * lr + coef * (1.0 + std::log(w.rho[i] / w.pi[i]));
  }
  return grad;
}

// Ambient gradient of f(rho) = rho^T g + 1/(lambda n) KL(rho || pi).
inline std::vector<double> first_order_rho_gradient(const LossTables& loss,
                                                    const WeightDistribution& w,
                                                    const BoundParams& p,
                                                    double rho_floor = 1e-12) {
  const std::size_t m = loss.num_members();
  std::vector<double> grad(m);
  const double coef = 1.0 / (w.lambda * static_cast<double>(p.n));
  for (std::size_t i = 0; i < m; ++i) {
    if (!(w.rho[i] >= rho_floor)) throw InputError("rho entry below floor", {}, i);
    grad[i] = loss.gibbs_losses[i] + coef * (1.0 + std::log(w.rho[i] / w.pi[i]));
  }
  return grad;
}

inline std::vector<double> softmax(std::span<const double> theta) {
  const double top = *std::max_element(theta.begin(), theta.end());
  std::vector<double> out(theta.size());
  double total = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    out[i] = std::exp(theta[i] - top);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

// Bound value and its lambda-minimizer for a given rho.
struct BoundAtRho {
  double value;
  double lambda;
  double kl;
  double expected_loss;
};

inline BoundAtRho evaluate_at_rho(const LossTables& loss, std::span<const double> rho,
                                  std::span<const double> pi, const BoundParams& p,
                                  Objective objective) {
  const double kl = kl_divergence(rho, pi);
  if (objective == Objective::tandem) {
    const double e = expected_tandem(loss, rho);
    const double lambda = optimal_lambda(e, kl, p.n, p.delta, 2.0);
    return {tandem_bound_value(e, kl, lambda, p.n, p.delta), lambda, kl, e};
  }
  const double e = expected_gibbs(loss, rho);
  const double lambda = optimal_lambda(e, kl, p.n, p.delta, 1.0);
  return {first_order_bound_value(e, kl, lambda, p.n, p.delta), lambda, kl, e};
}

namespace detail {
// Keeps every rho_i at or above `floor` after the softmax.
inline std::vector<double> floored_softmax(std::span<const double> theta, double floor) {
  auto rho = softmax(theta);
  bool clipped = false;
  for (auto& r : rho) {
    if (r < floor) {
      r = floor;
      clipped = true;
    }
  }
  if (clipped) {
    double total = 0.0;
    for (double r : rho) total += r;
    for (auto& r : rho) r /= total;
  }
  return rho;
}
}  // namespace detail

// Alternates the closed-form lambda update with iRprop- steps on softmax logits
// (rho = softmax(theta)), starting from uniform rho. Returns the best iterate,
// which is never worse than uniform rho with its own optimal lambda.
inline OptimizationResult optimize_weights(const LossTables& loss, std::span<const double> prior,
                                           const BoundParams& p, const OptimizerConfig& cfg = {},
                                           Objective objective = Objective::tandem) {
  check_params(p);
  check_config(cfg);
  const std::size_t m = loss.num_members();
  if (m == 0) throw InputError("no members to weight");
  if (prior.size() != m) throw InputError("prior length differs from member count");

  const std::vector<double> pi(prior.begin(), prior.end());
  std::vector<double> theta(m, 0.0);
  std::vector<double> rho = uniform_distribution(m);

  OptimizationResult result;
  auto current = evaluate_at_rho(loss, rho, pi, p, objective);
  result.weights = {rho, pi, current.lambda};
  result.bound = current.value;
  result.trace.push_back({0, current.lambda, current.value});

  if (m == 1) {
    result.converged = true;
    return result;
  }

  std::vector<double> step(m, cfg.initial_step);
  std::vector<double> prev_grad(m, 0.0);
  double prev_objective = current.value;
  // A sign flip on every coordinate freezes theta for one step, so a single
  // unchanged objective is not evidence of convergence.
  std::size_t quiet_steps = 0;

  for (std::size_t it = 1; it <= cfg.max_outer_iters; ++it) {
    WeightDistribution w{rho, pi, current.lambda};
    for (std::size_t s = 0; s < cfg.inner_grad_steps; ++s) {
      const auto ambient = objective == Objective::tandem
                               ? tandem_rho_gradient(loss, w, p, 0.0)
                               : first_order_rho_gradient(loss, w, p, 0.0);
      // d f / d theta_k = rho_k (g_k - sum_j rho_j g_j)
      double mean = 0.0;
      for (std::size_t j = 0; j < m; ++j) mean += w.rho[j] * ambient[j];
      for (std::size_t k = 0; k < m; ++k) {
        double g = w.rho[k] * (ambient[k] - mean);
        const double agreement = g * prev_grad[k];
        if (agreement > 0.0) {
          step[k] = std::min(step[k] * cfg.increase_factor, cfg.max_step);
        } else if (agreement < 0.0) {
          step[k] = std::max(step[k] * cfg.decrease_factor, cfg.min_step);
          g = 0.0;
        }
        if (g > 0.0) {
          theta[k] -= step[k];
        } else if (g < 0.0) {
          theta[k] += step[k];
        }
        prev_grad[k] = g;
      }
      w.rho = detail::floored_softmax(theta, cfg.rho_floor);
    }
    rho = w.rho;
    current = evaluate_at_rho(loss, rho, pi, p, objective);
    result.trace.push_back({it, current.lambda, current.value});
    result.iterations = it;
    if (current.value < result.bound) {
      result.bound = current.value;
      result.weights = {rho, pi, current.lambda};
    }
    quiet_steps = std::abs(prev_objective - current.value) < cfg.tolerance ? quiet_steps + 1 : 0;
    if (quiet_steps >= 2) {
      result.converged = true;
      break;
    }
    prev_objective = current.value;
  }
  return result;
}

// Weighting at uniform rho with the closed-form lambda, no optimization.
inline OptimizationResult uniform_weights(const LossTables& loss, std::span<const double> prior,
                                          const BoundParams& p,
                                          Objective objective = Objective::tandem) {
  check_params(p);
  const std::size_t m = loss.num_members();
  if (prior.size() != m) throw InputError("prior length differs from member count");
  const std::vector<double> pi(prior.begin(), prior.end());
  const auto rho = uniform_distribution(m);
  const auto at = evaluate_at_rho(loss, rho, pi, p, objective);
  OptimizationResult result;
  result.weights = {rho, pi, at.lambda};
  result.bound = at.value;
  result.trace.push_back({0, at.lambda, at.value});
  result.converged = true;
  return result;
}

}  // namespace tandem
