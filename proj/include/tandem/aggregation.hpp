#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "tandem/bounds.hpp"
#include "tandem/data.hpp"
#include "tandem/io.hpp"
#include "tandem/losses.hpp"
#include "tandem/optimizer.hpp"
#include "tandem/rng.hpp"

namespace tandem {

enum class Aggregation { mv, avg };

// How the member weighting is chosen.
enum class Weighting { tandem, first_order, uniform, fixed };

inline const char* to_string(Weighting w) {
  switch (w) {
    case Weighting::tandem: return "tandem";
    case Weighting::first_order: return "first-order";
    case Weighting::uniform: return "uniform";
    case Weighting::fixed: return "fixed";
  }
  return "unknown";
}

// argmax_y sum_i rho_i p_i(y | x); ties go to the lowest class.
inline int predict_avg(const PredictionSet& set, std::span<const double> rho, std::size_t example) {
  if (set.mode != PredictionMode::probability) {
    throw InputError("averaging needs probability predictions");
  }
  std::vector<double> mix(static_cast<std::size_t>(set.num_classes), 0.0);
  for (std::size_t i = 0; i < set.num_members(); ++i) {
    auto r = set.row(i, example);
    for (std::size_t k = 0; k < mix.size(); ++k) mix[k] += rho[i] * r[k];
  }
  return argmax(mix);
}

// argmax_y sum_i rho_i 1[y = h_i(x)]; ties go to the lowest class.
inline int predict_mv(const PredictionSet& set, std::span<const double> rho, std::size_t example) {
  std::vector<double> votes(static_cast<std::size_t>(set.num_classes), 0.0);
  for (std::size_t i = 0; i < set.num_members(); ++i) {
    votes[static_cast<std::size_t>(set.vote(i, example))] += rho[i];
  }
  return argmax(votes);
}

inline int predict(const PredictionSet& set, std::span<const double> rho, std::size_t example,
                   Aggregation agg) {
  return agg == Aggregation::mv ? predict_mv(set, rho, example) : predict_avg(set, rho, example);
}

inline double evaluate(const PredictionSet& set, const LabelVector& labels,
                       std::span<const double> rho, Aggregation agg) {
  if (set.num_examples == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t t = 0; t < set.num_examples; ++t) {
    correct += predict(set, rho, t, agg) == labels[t];
  }
  return static_cast<double>(correct) / static_cast<double>(set.num_examples);
}

// A chosen weighting with both bounds evaluated at it.
struct Fit {
  Weighting weighting = Weighting::tandem;
  WeightDistribution weights;  // lambda is the tandem-optimal lambda at rho
  LossTables tables;
  BoundReport tandem;
  BoundReport first_order;
  std::optional<OptimizationResult> optimization;
};

// Chooses rho on (set, labels, mask) and certifies it. `fixed_rho` is used
// only with Weighting::fixed.
inline Fit fit_weights(const PredictionSet& set, const LabelVector& labels, const OverlapMask& mask,
                       std::span<const double> prior, double delta, const OptimizerConfig& cfg,
                       Weighting weighting, std::span<const double> fixed_rho = {}) {
  Fit fit;
  fit.weighting = weighting;
  fit.tables = tandem_tables(set, labels, mask);
  const BoundParams params{delta, fit.tables.n_min};
  check_params(params);
  std::vector<double> pi(prior.begin(), prior.end());
  std::vector<double> rho;
  switch (weighting) {
    case Weighting::tandem:
    case Weighting::first_order: {
      auto opt = optimize_weights(fit.tables, pi, params, cfg,
                                  weighting == Weighting::tandem ? Objective::tandem
                                                                 : Objective::first_order);
      rho = opt.weights.rho;
      fit.optimization = std::move(opt);
      break;
    }
    case Weighting::uniform:
      rho = uniform_distribution(set.num_members());
      break;
    case Weighting::fixed:
      if (fixed_rho.size() != set.num_members()) {
        throw InputError("rho has " + std::to_string(fixed_rho.size()) + " entries for " +
                         std::to_string(set.num_members()) + " members");
      }
      rho.assign(fixed_rho.begin(), fixed_rho.end());
      break;
  }
  const auto tnd = evaluate_at_rho(fit.tables, rho, pi, params, Objective::tandem);
  const auto fo = evaluate_at_rho(fit.tables, rho, pi, params, Objective::first_order);
  fit.weights = {rho, pi, tnd.lambda};
  check_weights(fit.weights);
  fit.tandem = tandem_bound(fit.tables, fit.weights, params);
  fit.first_order = first_order_bound(fit.tables, {rho, pi, fo.lambda}, params);
  if (fit.optimization) {
    auto& trace = weighting == Weighting::tandem ? fit.tandem.trace : fit.first_order.trace;
    trace.clear();
    for (const auto& e : fit.optimization->trace) trace.emplace_back(e.iteration, e.objective);
  }
  return fit;
}

struct FoldReport {
  Fit fit;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double accuracy_mv = 0.0;
  std::optional<double> accuracy_avg;
};

struct EvalReport {
  std::vector<FoldReport> folds;
  double accuracy_mv = 0.0;
  std::optional<double> accuracy_avg;
};

// Split used by test-time cross-validation: a uniform permutation cut at
// floor(n/2), fold A taking the extra example when n is odd. Both folds sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> ttcv_split(std::size_t n,
                                                                                std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = stream(seed, 0x7463);
  shuffle(perm.begin(), perm.end(), rng);
  const std::size_t size_a = n - n / 2;
  std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(size_a));
  std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(size_a), perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {std::move(a), std::move(b)};
}

// Fit on one half, evaluate on the other, then swap; accuracies are averaged.
inline EvalReport ttcv_run_with_split(const Ensemble& ens, std::span<const std::size_t> fold_a,
                                      std::span<const std::size_t> fold_b, double delta,
                                      const OptimizerConfig& cfg, Weighting weighting,
                                      std::span<const double> fixed_rho = {}) {
  EvalReport report;
  const bool prob = ens.predictions.mode == PredictionMode::probability;
  const std::span<const std::size_t> halves[2][2] = {{fold_a, fold_b}, {fold_b, fold_a}};
  for (const auto& [train, test] : halves) {
    LabelVector train_labels, test_labels;
    for (auto t : train) train_labels.push_back(ens.labels[t]);
    for (auto t : test) test_labels.push_back(ens.labels[t]);
    const auto train_set = ens.predictions.select_examples(train);
    const auto test_set = ens.predictions.select_examples(test);
    FoldReport fold;
    fold.fit = fit_weights(train_set, train_labels, ens.mask.select_examples(train), ens.prior,
                           delta, cfg, weighting, fixed_rho);
    fold.train_size = train.size();
    fold.test_size = test.size();
    fold.accuracy_mv = evaluate(test_set, test_labels, fold.fit.weights.rho, Aggregation::mv);
    if (prob) {
      fold.accuracy_avg = evaluate(test_set, test_labels, fold.fit.weights.rho, Aggregation::avg);
    }
    report.folds.push_back(std::move(fold));
  }
  report.accuracy_mv = (report.folds[0].accuracy_mv + report.folds[1].accuracy_mv) / 2.0;
  if (prob) report.accuracy_avg = (*report.folds[0].accuracy_avg + *report.folds[1].accuracy_avg) / 2.0;
  return report;
}

inline EvalReport ttcv_run(const Ensemble& ens, double delta, const OptimizerConfig& cfg,
                           Weighting weighting, std::uint64_t seed,
                           std::span<const double> fixed_rho = {}) {
  if (ens.predictions.num_examples < 2) throw InputError("cross-validation needs at least 2 examples");
  const auto [a, b] = ttcv_split(ens.predictions.num_examples, seed);
  return ttcv_run_with_split(ens, a, b, delta, cfg, weighting, fixed_rho);
}

struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;  // population formula
};

inline SummaryStats summarize(std::span<const double> values) {
  SummaryStats s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / n);
  return s;
}

struct RepeatReport {
  std::vector<std::size_t> members;  // sorted indices into the pool
  EvalReport eval;
  double tandem_bound = 1.0;       // mean of the two fold bounds (clipped)
  double first_order_bound = 1.0;
};

struct SubsampleReport {
  std::size_t pool_size = 0;
  std::size_t subset_size = 0;
  std::vector<RepeatReport> repeats;
  SummaryStats accuracy_mv;
  std::optional<SummaryStats> accuracy_avg;
  SummaryStats tandem_bound;
  SummaryStats first_order_bound;
  bool degenerate_sigma = false;  // single repeat, sigma reported as 0
};

// Draws `repeats` member subsets of size `subset_size` without replacement
// (stream seed + r) and runs test-time cross-validation on each, all repeats
// sharing the split drawn from `seed`.
inline SubsampleReport subsample_protocol(const Ensemble& ens, std::size_t subset_size,
                                          std::size_t repeats, std::uint64_t seed, double delta,
                                          const OptimizerConfig& cfg, Weighting weighting) {
  const std::size_t pool = ens.predictions.num_members();
  if (subset_size > pool) {
    throw InputError("subset size " + std::to_string(subset_size) + " exceeds pool of " +
                     std::to_string(pool));
  }
  if (subset_size == 0 || repeats == 0) throw InputError("subset size and repeats must be positive");
  if (weighting == Weighting::fixed) throw InputError("fixed weights cannot be subsampled");

  SubsampleReport out;
  out.pool_size = pool;
  out.subset_size = subset_size;
  std::vector<double> acc_mv, acc_avg, tnd, fo;
  for (std::size_t r = 0; r < repeats; ++r) {
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto rng = stream(seed + r, 0x7375);
    shuffle(idx.begin(), idx.end(), rng);
    idx.resize(subset_size);
    std::sort(idx.begin(), idx.end());

    Ensemble sub;
    sub.predictions = ens.predictions.select_members(idx);
    sub.labels = ens.labels;
    sub.mask = ens.mask.select_members(idx);
    for (auto i : idx) sub.prior.push_back(ens.prior[i]);
    sub.prior = normalize_prior(std::move(sub.prior));

    RepeatReport rep;
    rep.members = idx;
    rep.eval = ttcv_run(sub, delta, cfg, weighting, seed);
    rep.tandem_bound =
        (rep.eval.folds[0].fit.tandem.bound_value + rep.eval.folds[1].fit.tandem.bound_value) / 2.0;
    rep.first_order_bound = (rep.eval.folds[0].fit.first_order.bound_value +
                             rep.eval.folds[1].fit.first_order.bound_value) /
                            2.0;
    acc_mv.push_back(rep.eval.accuracy_mv);
    if (rep.eval.accuracy_avg) acc_avg.push_back(*rep.eval.accuracy_avg);
    tnd.push_back(rep.tandem_bound);
    fo.push_back(rep.first_order_bound);
    out.repeats.push_back(std::move(rep));
  }
  out.accuracy_mv = summarize(acc_mv);
  if (!acc_avg.empty()) out.accuracy_avg = summarize(acc_avg);
  out.tandem_bound = summarize(tnd);
  out.first_order_bound = summarize(fo);
  out.degenerate_sigma = repeats == 1;
  return out;
}

}  // namespace tandem
