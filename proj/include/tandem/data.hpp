#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace tandem {

// Error raised on malformed or inconsistent input. `member` and `row` are set
// when the problem can be pinned to a location.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what,
                      std::string member = {},
                      std::optional<std::size_t> row = std::nullopt,
                      std::string path = {})
      : std::runtime_error(what),
        member_(std::move(member)),
        row_(row),
        path_(std::move(path)) {}

  const std::string& member() const noexcept { return member_; }
  std::optional<std::size_t> row() const noexcept { return row_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string member_;
  std::optional<std::size_t> row_;
  std::string path_;
};

enum class PredictionMode { probability, hard };

inline constexpr double kRowSumTolerance = 1e-6;
inline constexpr double kSimplexTolerance = 1e-12;
inline constexpr double kLambdaMin = 1e-9;
inline constexpr double kLambdaMax = 2.0 - 1e-9;

// Index of the largest entry; ties go to the lowest index.
inline int argmax(std::span<const double> row) {
  int best = 0;
  for (std::size_t k = 1; k < row.size(); ++k) {
    if (row[k] > row[best]) best = static_cast<int>(k);
  }
  return best;
}

// Held-out predictions of M ensemble members over a shared example index.
//
// Probability mode stores one row-major n x K matrix per member, hard mode one
// label vector per member. Only the storage matching `mode` is populated.
struct PredictionSet {
  PredictionMode mode = PredictionMode::probability;
  std::size_t num_examples = 0;
  int num_classes = 2;
  std::vector<std::string> member_ids;
  std::vector<std::string> run_ids;  // optional grouping metadata, may be empty
  std::vector<std::vector<double>> probabilities;
  std::vector<std::vector<int>> hard_labels;

  std::size_t num_members() const noexcept { return member_ids.size(); }

  std::span<const double> row(std::size_t member, std::size_t example) const {
    const auto k = static_cast<std::size_t>(num_classes);
    return std::span<const double>(probabilities[member]).subspan(example * k, k);
  }

  // Hard prediction of `member` on `example` (argmax in probability mode).
  int vote(std::size_t member, std::size_t example) const {
    if (mode == PredictionMode::hard) return hard_labels[member][example];
    return argmax(row(member, example));
  }

  // Copy restricted to `members` (in the given order).
  PredictionSet select_members(std::span<const std::size_t> members) const {
    PredictionSet out;
    out.mode = mode;
    out.num_examples = num_examples;
    out.num_classes = num_classes;
    for (auto m : members) {
      out.member_ids.push_back(member_ids[m]);
      if (!run_ids.empty()) out.run_ids.push_back(run_ids[m]);
      if (mode == PredictionMode::probability) {
        out.probabilities.push_back(probabilities[m]);
      } else {
        out.hard_labels.push_back(hard_labels[m]);
      }
    }
    return out;
  }

  // Copy restricted to `examples` (in the given order).
  PredictionSet select_examples(std::span<const std::size_t> examples) const {
    PredictionSet out;
    out.mode = mode;
    out.num_examples = examples.size();
    out.num_classes = num_classes;
    out.member_ids = member_ids;
    out.run_ids = run_ids;
    const auto k = static_cast<std::size_t>(num_classes);
    for (std::size_t m = 0; m < num_members(); ++m) {
      if (mode == PredictionMode::probability) {
        std::vector<double> rows;
        rows.reserve(examples.size() * k);
        for (auto t : examples) {
          auto r = row(m, t);
          rows.insert(rows.end(), r.begin(), r.end());
        }
        out.probabilities.push_back(std::move(rows));
      } else {
        std::vector<int> labels;
        labels.reserve(examples.size());
        for (auto t : examples) labels.push_back(hard_labels[m][t]);
        out.hard_labels.push_back(std::move(labels));
      }
    }
    return out;
  }
};

using LabelVector = std::vector<int>;

// Per-member validity of each example for loss estimation (out-of-bag sets).
struct OverlapMask {
  std::vector<std::vector<std::uint8_t>> valid;

  static OverlapMask all_true(std::size_t members, std::size_t examples) {
    return OverlapMask{std::vector<std::vector<std::uint8_t>>(
        members, std::vector<std::uint8_t>(examples, 1))};
  }

  std::size_t num_members() const noexcept { return valid.size(); }

  std::size_t count(std::size_t i) const {
    return static_cast<std::size_t>(
        std::count(valid[i].begin(), valid[i].end(), std::uint8_t{1}));
  }

  std::size_t overlap(std::size_t i, std::size_t j) const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < valid[i].size(); ++t) n += (valid[i][t] && valid[j][t]);
    return n;
  }

  OverlapMask select_members(std::span<const std::size_t> members) const {
    OverlapMask out;
    for (auto m : members) out.valid.push_back(valid[m]);
    return out;
  }

  OverlapMask select_examples(std::span<const std::size_t> examples) const {
    OverlapMask out;
    for (const auto& v : valid) {
      std::vector<std::uint8_t> sub;
      sub.reserve(examples.size());
      for (auto t : examples) sub.push_back(v[t]);
      out.valid.push_back(std::move(sub));
    }
    return out;
  }
};

inline double clamp_lambda(double lambda) {
  return std::clamp(lambda, kLambdaMin, kLambdaMax);
}

// Posterior weighting rho, prior pi and the trade-off lambda in (0, 2).
struct WeightDistribution {
  std::vector<double> rho;
  std::vector<double> pi;
  double lambda = 1.0;

  static WeightDistribution uniform(std::size_t members) {
    const double w = 1.0 / static_cast<double>(members);
    return {std::vector<double>(members, w), std::vector<double>(members, w), 1.0};
  }
};

inline std::vector<double> uniform_distribution(std::size_t members) {
  return std::vector<double>(members, 1.0 / static_cast<double>(members));
}

// Scales a positive vector to sum to one. Throws on non-positive entries.
inline std::vector<double> normalize_prior(std::vector<double> weights) {
  if (weights.empty()) throw InputError("prior is empty");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw InputError("prior entry must be positive", {}, i);
    }
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (auto& w : weights) w /= total;
  return weights;
}

// Throws InputError unless `w` satisfies the simplex and lambda invariants.
inline void check_weights(const WeightDistribution& w) {
  if (w.rho.size() != w.pi.size()) {
    throw InputError("rho and prior have different lengths");
  }
  double rho_sum = 0.0;
  double pi_sum = 0.0;
  for (std::size_t i = 0; i < w.rho.size(); ++i) {
    if (!(w.rho[i] >= 0.0)) throw InputError("rho entry is negative", {}, i);
    if (!(w.pi[i] > 0.0)) throw InputError("prior entry must be positive", {}, i);
    rho_sum += w.rho[i];
    pi_sum += w.pi[i];
  }
  if (std::abs(rho_sum - 1.0) > kSimplexTolerance) throw InputError("rho does not sum to 1");
  if (std::abs(pi_sum - 1.0) > kSimplexTolerance) throw InputError("prior does not sum to 1");
  if (!(w.lambda > 0.0 && w.lambda < 2.0)) throw InputError("lambda must lie in (0, 2)");
}

struct Violation {
  enum class Kind { dimension, normalization, range, duplicate_id, empty_holdout };
  Kind kind;
  std::string member;                // empty when not member-specific
  std::optional<std::size_t> row;    // example index, when applicable
  std::string message;
};

inline const char* to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::dimension: return "dimension";
    case Violation::Kind::normalization: return "normalization";
    case Violation::Kind::range: return "range";
    case Violation::Kind::duplicate_id: return "duplicate_id";
    case Violation::Kind::empty_holdout: return "empty_holdout";
  }
  return "unknown";
}

// Collects every invariant violation of the inputs. Empty result means valid.
inline std::vector<Violation> validate(const PredictionSet& set,
                                       const LabelVector& labels,
                                       const OverlapMask& mask) {
  using K = Violation::Kind;
  std::vector<Violation> out;
  const std::size_t m = set.num_members();
  const std::size_t n = set.num_examples;
  if (m == 0) out.push_back({K::dimension, {}, {}, "ensemble has no members"});
  if (n == 0) out.push_back({K::dimension, {}, {}, "ensemble has no examples"});
  if (set.num_classes < 2) out.push_back({K::range, {}, {}, "num_classes must be at least 2"});
  if (!set.run_ids.empty() && set.run_ids.size() != m) {
    out.push_back({K::dimension, {}, {}, "run_ids length differs from member count"});
  }

  std::unordered_set<std::string> seen;
  for (const auto& id : set.member_ids) {
    if (!seen.insert(id).second) out.push_back({K::duplicate_id, id, {}, "duplicate member id"});
  }

  if (labels.size() != n) {
    out.push_back({K::dimension, {}, {},
                   "labels have " + std::to_string(labels.size()) + " entries, expected " +
                       std::to_string(n)});
  }
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0 || labels[t] >= set.num_classes) {
      out.push_back({K::range, {}, t, "label " + std::to_string(labels[t]) + " out of range"});
    }
  }

  const auto k = static_cast<std::size_t>(std::max(set.num_classes, 0));
  for (std::size_t i = 0; i < m; ++i) {
    const auto& id = set.member_ids[i];
    if (set.mode == PredictionMode::probability) {
      if (i >= set.probabilities.size() || set.probabilities[i].size() != n * k) {
        out.push_back({K::dimension, id, {}, "probability matrix has wrong shape"});
        continue;
      }
      for (std::size_t t = 0; t < n; ++t) {
        auto r = set.row(i, t);
        double sum = 0.0;
        bool in_range = true;
        for (double v : r) {
          sum += v;
          in_range = in_range && v >= 0.0 && v <= 1.0;
        }
        if (!in_range) out.push_back({K::range, id, t, "probability outside [0, 1]"});
        if (!(std::abs(sum - 1.0) <= kRowSumTolerance)) {
          out.push_back({K::normalization, id, t, "row sums to " + std::to_string(sum)});
        }
      }
    } else {
      if (i >= set.hard_labels.size() || set.hard_labels[i].size() != n) {
        out.push_back({K::dimension, id, {}, "label prediction vector has wrong length"});
        continue;
      }
      for (std::size_t t = 0; t < n; ++t) {
        const int y = set.hard_labels[i][t];
        if (y < 0 || y >= set.num_classes) {
          out.push_back({K::range, id, t, "predicted label " + std::to_string(y) + " out of range"});
        }
      }
    }
  }

  if (mask.num_members() != m) {
    out.push_back({K::dimension, {}, {}, "mask member count differs from ensemble"});
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      if (mask.valid[i].size() != n) {
        out.push_back({K::dimension, set.member_ids[i], {}, "mask has wrong length"});
      } else if (mask.count(i) == 0) {
        out.push_back({K::empty_holdout, set.member_ids[i], {}, "member has an empty hold-out set"});
      }
    }
  }
  return out;
}

}  // namespace tandem
