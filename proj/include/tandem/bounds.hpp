#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tandem/data.hpp"
#include "tandem/losses.hpp"

namespace tandem {

struct BoundParams {
  double delta = 0.05;
  std::size_t n = 1;  // effective sample size, min_i |D_i|
};

inline void check_params(const BoundParams& p) {
  if (!(p.delta > 0.0 && p.delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  if (p.n < 1) throw InputError("sample size must be at least 1");
}

enum class BoundKind { first_order, tandem, hoeffding };

inline const char* to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::first_order: return "first-order";
    case BoundKind::tandem: return "tandem";
    case BoundKind::hoeffding: return "hoeffding";
  }
  return "unknown";
}

struct BoundReport {
  BoundKind kind = BoundKind::tandem;
  double bound_value = 1.0;  // min(raw, 1)
  double raw_value = 1.0;
  bool vacuous = true;       // raw >= 1
  double lambda_used = 1.0;
  double kl_value = 0.0;
  double delta = 0.05;
  std::size_t n = 1;
  double expected_loss = 0.0;  // E_{rho^2}[tandem] or E_rho[gibbs]
  std::vector<std::pair<std::size_t, double>> trace;

  // Accuracy-style guarantee, 1 - clipped risk bound.
  double guarantee() const noexcept { return 1.0 - bound_value; }
};

// KL(rho || pi) with 0 ln 0 = 0.
inline double kl_divergence(std::span<const double> rho, std::span<const double> pi) {
  if (rho.size() != pi.size()) throw InputError("rho and prior have different lengths");
  double kl = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (!(pi[i] > 0.0)) throw InputError("prior entry must be positive", {}, i);
    if (rho[i] > 0.0) kl += rho[i] * std::log(rho[i] / pi[i]);
  }
  // Rounding can push a zero divergence slightly negative.
  return kl > 0.0 ? kl : 0.0;
}

// ln(2 sqrt(n) / delta), the confidence term shared by both bounds.
inline double confidence_term(std::size_t n, double delta) {
  return std::log(2.0 * std::sqrt(static_cast<double>(n)) / delta);
}

// 4 (E/(1 - l/2) + (2 KL + ln(2 sqrt(n)/delta)) / (l (1 - l/2) n)).
inline double tandem_bound_value(double expected_tandem, double kl, double lambda, std::size_t n,
                                 double delta) {
  const double denom = 1.0 - lambda / 2.0;
  return 4.0 * (expected_tandem / denom +
                (2.0 * kl + confidence_term(n, delta)) /
                    (lambda * denom * static_cast<double>(n)));
}

// 2 (E/(1 - l/2) + (KL + ln(2 sqrt(n)/delta)) / (l (1 - l/2) n)); bounds the
// majority vote by twice the Gibbs risk.
inline double first_order_bound_value(double expected_gibbs, double kl, double lambda,
                                      std::size_t n, double delta) {
  const double denom = 1.0 - lambda / 2.0;
  return 2.0 * (expected_gibbs / denom +
                (kl + confidence_term(n, delta)) / (lambda * denom * static_cast<double>(n)));
}

namespace detail {
inline BoundReport make_report(BoundKind kind, double raw, double lambda, double kl,
                               const BoundParams& p, double expected) {
  BoundReport r;
  r.kind = kind;
  r.raw_value = raw;
  r.bound_value = raw < 1.0 ? raw : 1.0;
  r.vacuous = !(raw < 1.0);
  r.lambda_used = lambda;
  r.kl_value = kl;
  r.delta = p.delta;
  r.n = p.n;
  r.expected_loss = expected;
  r.trace.emplace_back(0, raw);
  return r;
}

inline void check_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda < 2.0)) throw InputError("lambda must lie in (0, 2)");
}
}  // namespace detail

// Second-order tandem bound on the majority-vote risk at (w.rho, w.lambda).
inline BoundReport tandem_bound(const LossTables& loss, const WeightDistribution& w,
                                const BoundParams& p) {
  detail::check_lambda(w.lambda);
  check_params(p);
  const double e = expected_tandem(loss, w.rho);
  const double kl = kl_divergence(w.rho, w.pi);
  return detail::make_report(BoundKind::tandem, tandem_bound_value(e, kl, w.lambda, p.n, p.delta),
                             w.lambda, kl, p, e);
}

inline BoundReport first_order_bound(const LossTables& loss, const WeightDistribution& w,
                                     const BoundParams& p) {
  detail::check_lambda(w.lambda);
  check_params(p);
  const double e = expected_gibbs(loss, w.rho);
  const double kl = kl_divergence(w.rho, w.pi);
  return detail::make_report(BoundKind::first_order,
                             first_order_bound_value(e, kl, w.lambda, p.n, p.delta), w.lambda, kl,
                             p, e);
}

// exp(-2 ((M+1)/2 - M p_max)^2 / M): majority-vote error of M independent
// binary voters, each erring with probability at most p_max < 1/2.
inline double hoeffding_mv_bound(std::size_t members, double p_max) {
  if (members < 1) throw InputError("member count must be at least 1");
  if (!(p_max < 0.5)) throw InputError("p_max must be below 1/2");
  if (!(p_max > 0.0)) throw InputError("p_max must be positive");
  const double m = static_cast<double>(members);
  const double eps = (m + 1.0) / 2.0 - m * p_max;
  return std::exp(-2.0 * eps * eps / m);
}

}  // namespace tandem
