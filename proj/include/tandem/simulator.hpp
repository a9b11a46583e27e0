#pragma once

// Synthetic ensembles with controlled error rates and correlations, plus
// exact and Monte Carlo oracles for majority-vote risk and bound coverage.
//
// Generative law per example: the label is uniform over K classes; with
// probability c the example is "globally hard" and every member errs,
// otherwise member i errs independently with rate q_i = (p_i - c) / (1 - c).
// An erring member predicts one of the K - 1 wrong classes uniformly.
// Members in a duplicate group copy the predictions of the group's first member.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tandem/aggregation.hpp"
#include "tandem/bounds.hpp"
#include "tandem/data.hpp"
#include "tandem/io.hpp"
#include "tandem/rng.hpp"

namespace tandem {

struct SyntheticSpec {
  std::size_t members = 3;
  std::size_t examples = 1000;
  int num_classes = 2;
  std::vector<double> error_rates;  // marginal p_i
  double hard_fraction = 0.0;       // c
  std::vector<std::vector<std::size_t>> duplicate_groups;
  std::uint64_t seed = 0;
};

inline void check_spec(const SyntheticSpec& spec) {
  if (spec.members < 1) throw InputError("spec needs at least one member");
  if (spec.num_classes < 2) throw InputError("spec needs at least two classes");
  if (spec.error_rates.size() != spec.members) {
    throw InputError("spec lists " + std::to_string(spec.error_rates.size()) +
                     " error rates for " + std::to_string(spec.members) + " members");
  }
  if (!(spec.hard_fraction >= 0.0 && spec.hard_fraction <= 1.0)) {
    throw InputError("correlation c must lie in [0, 1]");
  }
  for (std::size_t i = 0; i < spec.members; ++i) {
    const double p = spec.error_rates[i];
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("error rate outside [0, 1]", {}, i);
    if (p < spec.hard_fraction) {
      throw InputError("infeasible spec: error rate " + std::to_string(p) + " of member " +
                           std::to_string(i) + " is below c = " + std::to_string(spec.hard_fraction),
                       {}, i);
    }
  }
  std::vector<int> seen(spec.members, 0);
  for (const auto& g : spec.duplicate_groups) {
    for (auto i : g) {
      if (i >= spec.members) throw InputError("duplicate group index out of range");
      if (seen[i]++) throw InputError("member appears in more than one duplicate group", {}, i);
    }
  }
}

namespace sim {

// Independent-component error rate of each member.
inline std::vector<double> independent_rates(const SyntheticSpec& spec) {
  std::vector<double> q(spec.members, 0.0);
  const double c = spec.hard_fraction;
  for (std::size_t i = 0; i < spec.members; ++i) {
    q[i] = c < 1.0 ? (spec.error_rates[i] - c) / (1.0 - c) : 0.0;
  }
  return q;
}

// leader[i] is the member whose predictions i copies (itself when not a follower).
inline std::vector<std::size_t> leaders(const SyntheticSpec& spec) {
  std::vector<std::size_t> lead(spec.members);
  for (std::size_t i = 0; i < spec.members; ++i) lead[i] = i;
  for (const auto& g : spec.duplicate_groups) {
    if (g.empty()) continue;
    for (auto i : g) lead[i] = g.front();
  }
  return lead;
}

// Examples per RNG stream. Each block draws from its own stream so results do
// not depend on how blocks are scheduled.
inline constexpr std::size_t kBlockSize = 4096;

struct Sampler {
  const SyntheticSpec& spec;
  std::vector<double> q = independent_rates(spec);
  std::vector<std::size_t> lead = leaders(spec);

  // Draws one example; fills `votes` with each member's predicted class.
  int draw(Rng& rng, std::vector<int>& votes) const {
    const auto k = static_cast<std::uint64_t>(spec.num_classes);
    const int label = static_cast<int>(uniform_below(rng, k));
    const bool hard = uniform01(rng) < spec.hard_fraction;
    votes.resize(spec.members);
    for (std::size_t i = 0; i < spec.members; ++i) {
      if (lead[i] != i) {
        votes[i] = votes[lead[i]];
        continue;
      }
      const bool err = hard || uniform01(rng) < q[i];
      if (err) {
        const int wrong = static_cast<int>(uniform_below(rng, k - 1));
        votes[i] = wrong >= label ? wrong + 1 : wrong;
      } else {
        votes[i] = label;
      }
    }
    return label;
  }
};

}  // namespace sim

// Draws a probability-mode ensemble (one-hot rows) with full masks and a uniform prior.
inline Ensemble generate(const SyntheticSpec& spec) {
  check_spec(spec);
  const sim::Sampler sampler{spec};
  Ensemble ens;
  auto& set = ens.predictions;
  set.mode = PredictionMode::probability;
  set.num_classes = spec.num_classes;
  set.num_examples = spec.examples;
  const auto k = static_cast<std::size_t>(spec.num_classes);
  for (std::size_t i = 0; i < spec.members; ++i) {
    set.member_ids.push_back("m" + std::to_string(i));
    set.probabilities.emplace_back(spec.examples * k, 0.0);
  }
  ens.labels.resize(spec.examples);
  std::vector<int> votes;
  for (std::size_t block = 0; block * sim::kBlockSize < spec.examples; ++block) {
    auto rng = stream(spec.seed, block);
    const std::size_t end = std::min(spec.examples, (block + 1) * sim::kBlockSize);
    for (std::size_t t = block * sim::kBlockSize; t < end; ++t) {
      ens.labels[t] = sampler.draw(rng, votes);
      for (std::size_t i = 0; i < spec.members; ++i) {
        set.probabilities[i][t * k + static_cast<std::size_t>(votes[i])] = 1.0;
      }
    }
  }
  ens.mask = OverlapMask::all_true(spec.members, spec.examples);
  ens.prior = uniform_distribution(spec.members);
  return ens;
}

// P(S_M >= (M+1)/2) for S_M ~ Binomial(M, p), accumulated in the log domain
// in extended precision. Even M counts only strict majorities.
inline double exact_mv_error_binomial(std::size_t members, double p) {
  if (members < 1) throw InputError("member count must be at least 1");
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("error rate outside [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  using real = long double;
  const real m = static_cast<real>(members);
  const real log_p = std::log(static_cast<real>(p));
  const real log_q = std::log1p(-static_cast<real>(p));
  const std::size_t first = (members + 2) / 2;
  std::vector<real> terms;
  terms.reserve(members - first + 1);
  for (std::size_t k = first; k <= members; ++k) {
    const real kk = static_cast<real>(k);
    terms.push_back(std::lgamma(m + 1) - std::lgamma(kk + 1) - std::lgamma(m - kk + 1) +
                    kk * log_p + (m - kk) * log_q);
  }
  const real top = *std::max_element(terms.begin(), terms.end());
  real sum = 0;
  for (auto t : terms) sum += std::exp(t - top);
  return static_cast<double>(std::exp(top + std::log(sum)));
}

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t trials = 0;
};

// Monte Carlo weighted-majority-vote error under the spec's law. Uses a
// stream family distinct from generate() for the same seed.
inline McEstimate mc_mv_error(const SyntheticSpec& spec, std::span<const double> rho,
                              std::size_t trials, std::uint64_t seed) {
  check_spec(spec);
  if (trials < 1) throw InputError("trials must be at least 1");
  if (rho.size() != spec.members) throw InputError("rho length differs from member count");
  const sim::Sampler sampler{spec};
  std::vector<int> votes;
  std::vector<double> tally(static_cast<std::size_t>(spec.num_classes));
  std::size_t errors = 0;
  const std::uint64_t base = mix_seed(seed ^ 0x6d63ULL);
  for (std::size_t block = 0; block * sim::kBlockSize < trials; ++block) {
    auto rng = stream(base, block);
    const std::size_t end = std::min(trials, (block + 1) * sim::kBlockSize);
    for (std::size_t t = block * sim::kBlockSize; t < end; ++t) {
      const int label = sampler.draw(rng, votes);
      std::fill(tally.begin(), tally.end(), 0.0);
      for (std::size_t i = 0; i < spec.members; ++i) tally[static_cast<std::size_t>(votes[i])] += rho[i];
      errors += argmax(tally) != label;
    }
  }
  McEstimate out;
  out.trials = trials;
  out.estimate = static_cast<double>(errors) / static_cast<double>(trials);
  out.standard_error =
      std::sqrt(out.estimate * (1.0 - out.estimate) / static_cast<double>(trials));
  return out;
}

inline McEstimate mc_mv_error(const SyntheticSpec& spec, std::span<const double> rho,
                              std::size_t trials) {
  return mc_mv_error(spec, rho, trials, spec.seed);
}

inline constexpr std::size_t kMaxExactLeaders = 20;

// Exact weighted-MV risk for binary specs by enumerating joint error patterns
// of the independent (non-duplicate) members. Ties predict class 0, which is
// correct for half of the uniformly drawn labels.
inline std::optional<double> exact_mv_risk(const SyntheticSpec& spec, std::span<const double> rho) {
  check_spec(spec);
  if (spec.num_classes != 2) return std::nullopt;
  const auto q = sim::independent_rates(spec);
  const auto lead = sim::leaders(spec);
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < spec.members; ++i) {
    if (lead[i] == i) roots.push_back(i);
  }
  if (roots.size() > kMaxExactLeaders) return std::nullopt;
  std::vector<std::size_t> root_pos(spec.members);
  for (std::size_t r = 0; r < roots.size(); ++r) root_pos[roots[r]] = r;

  auto mv_error = [&](std::uint64_t pattern) {
    // votes for the true and the wrong class, accumulated in member order
    double right = 0.0;
    double wrong = 0.0;
    for (std::size_t i = 0; i < spec.members; ++i) {
      if ((pattern >> root_pos[lead[i]]) & 1U) {
        wrong += rho[i];
      } else {
        right += rho[i];
      }
    }
    if (wrong > right) return 1.0;
    if (wrong < right) return 0.0;
    return 0.5;
  };

  const std::uint64_t all = (std::uint64_t{1} << roots.size()) - 1;
  double independent = 0.0;
  for (std::uint64_t pattern = 0; pattern <= all; ++pattern) {
    double prob = 1.0;
    for (std::size_t r = 0; r < roots.size(); ++r) {
      prob *= ((pattern >> r) & 1U) ? q[roots[r]] : 1.0 - q[roots[r]];
    }
    if (prob > 0.0) independent += prob * mv_error(pattern);
  }
  const double c = spec.hard_fraction;
  return c * mv_error(all) + (1.0 - c) * independent;
}

// True MV risk: exact when possible, otherwise a large Monte Carlo sample.
inline double true_mv_risk(const SyntheticSpec& spec, std::span<const double> rho,
                           std::size_t mc_trials, std::uint64_t seed) {
  if (auto exact = exact_mv_risk(spec, rho)) return *exact;
  return mc_mv_error(spec, rho, mc_trials, seed).estimate;
}

struct CoverageResult {
  std::size_t repetitions = 0;
  std::size_t covered = 0;
  double coverage = 0.0;
  double mean_bound = 0.0;
  double mean_risk = 0.0;
};

// Repeatedly draws a fresh hold-out set, fits rho on it, and checks whether
// the tandem bound at that rho dominates its true majority-vote risk.
inline CoverageResult bound_coverage_experiment(const SyntheticSpec& spec, double delta,
                                                std::size_t repetitions,
                                                const OptimizerConfig& cfg = {},
                                                Weighting weighting = Weighting::tandem,
                                                std::size_t risk_trials = 200000) {
  check_spec(spec);
  if (repetitions < 100) throw InputError("coverage needs at least 100 repetitions");
  CoverageResult out;
  out.repetitions = repetitions;
  for (std::size_t r = 0; r < repetitions; ++r) {
    SyntheticSpec draw = spec;
    draw.seed = mix_seed(spec.seed + 0x636f76ULL + r);
    const auto ens = generate(draw);
    const auto fit = fit_weights(ens.predictions, ens.labels, ens.mask, ens.prior, delta, cfg,
                                 weighting);
    const double risk = true_mv_risk(spec, fit.weights.rho, risk_trials, draw.seed + 1);
    out.covered += fit.tandem.bound_value >= risk;
    out.mean_bound += fit.tandem.bound_value;
    out.mean_risk += risk;
  }
  const double reps = static_cast<double>(repetitions);
  out.coverage = static_cast<double>(out.covered) / reps;
  out.mean_bound /= reps;
  out.mean_risk /= reps;
  return out;
}

// JSON form: {"M", "n", "K", "p": number | [numbers], "c", "duplicates": [[i, ...]], "seed"}.
inline SyntheticSpec spec_from_json(const nlohmann::json& doc) {
  SyntheticSpec spec;
  try {
    spec.members = doc.at("M").get<std::size_t>();
    spec.examples = doc.value("n", std::size_t{1000});
    spec.num_classes = doc.value("K", 2);
    const auto& p = doc.at("p");
    if (p.is_array()) {
      spec.error_rates = p.get<std::vector<double>>();
    } else {
      spec.error_rates.assign(spec.members, p.get<double>());
    }
    spec.hard_fraction = doc.value("c", 0.0);
    if (doc.contains("duplicates")) {
      spec.duplicate_groups = doc.at("duplicates").get<std::vector<std::vector<std::size_t>>>();
    }
    spec.seed = doc.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed simulator spec: " + std::string(e.what()));
  }
  check_spec(spec);
  return spec;
}

inline nlohmann::json spec_to_json(const SyntheticSpec& spec) {
  return {{"M", spec.members},   {"n", spec.examples},       {"K", spec.num_classes},
          {"p", spec.error_rates}, {"c", spec.hard_fraction}, {"duplicates", spec.duplicate_groups},
          {"seed", spec.seed}};
}

}  // namespace tandem
