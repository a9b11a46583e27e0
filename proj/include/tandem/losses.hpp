#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tandem/data.hpp"

namespace tandem {

// Row-major M x n matrix, entry (i, t) set iff member i misclassifies example t.
struct ErrorIndicatorMatrix {
  std::size_t num_members = 0;
  std::size_t num_examples = 0;
  std::vector<std::uint8_t> errors;

  bool operator()(std::size_t member, std::size_t example) const {
    return errors[member * num_examples + example] != 0;
  }
};

struct LossTables {
  std::vector<double> gibbs_losses;          // M, loss of member i on D_i
  std::vector<double> tandem_matrix;         // M x M row-major, on D_i ∩ D_j
  std::vector<std::size_t> pair_counts;      // M x M row-major, |D_i ∩ D_j|
  std::size_t n_min = 0;                     // min_i |D_i|, enters the bound

  std::size_t num_members() const noexcept { return gibbs_losses.size(); }
  double tandem(std::size_t i, std::size_t j) const {
    return tandem_matrix[i * num_members() + j];
  }
  std::size_t pair_count(std::size_t i, std::size_t j) const {
    return pair_counts[i * num_members() + j];
  }
};

inline ErrorIndicatorMatrix error_indicators(const PredictionSet& set, const LabelVector& labels) {
  ErrorIndicatorMatrix err;
  err.num_members = set.num_members();
  err.num_examples = set.num_examples;
  err.errors.resize(err.num_members * err.num_examples);
  for (std::size_t i = 0; i < err.num_members; ++i) {
    for (std::size_t t = 0; t < err.num_examples; ++t) {
      err.errors[i * err.num_examples + t] = set.vote(i, t) != labels[t];
    }
  }
  return err;
}

// Empirical zero-one and tandem losses over per-member hold-out sets. Each pair
// is estimated on its exact overlap; throws if some overlap is empty.
inline LossTables tandem_tables(const ErrorIndicatorMatrix& err, const OverlapMask& mask) {
  const std::size_t m = err.num_members;
  const std::size_t n = err.num_examples;
  if (mask.num_members() != m) throw InputError("mask member count differs from error matrix");

  LossTables out;
  out.gibbs_losses.assign(m, 0.0);
  out.tandem_matrix.assign(m * m, 0.0);
  out.pair_counts.assign(m * m, 0);
  out.n_min = std::numeric_limits<std::size_t>::max();

  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      std::size_t count = 0;
      std::size_t joint = 0;
      for (std::size_t t = 0; t < n; ++t) {
        if (mask.valid[i][t] && mask.valid[j][t]) {
          ++count;
          joint += err(i, t) && err(j, t);
        }
      }
      if (count == 0) {
        throw InputError("empty overlap between members " + std::to_string(i) + " and " +
                         std::to_string(j));
      }
      const double value = static_cast<double>(joint) / static_cast<double>(count);
      out.tandem_matrix[i * m + j] = value;
      out.tandem_matrix[j * m + i] = value;
      out.pair_counts[i * m + j] = count;
      out.pair_counts[j * m + i] = count;
    }
    // D_ii = D_i, so the diagonal is the member's own zero-one loss.
    out.gibbs_losses[i] = out.tandem_matrix[i * m + i];
    out.n_min = std::min(out.n_min, out.pair_counts[i * m + i]);
  }
  return out;
}

inline LossTables tandem_tables(const PredictionSet& set, const LabelVector& labels,
                                const OverlapMask& mask) {
  return tandem_tables(error_indicators(set, labels), mask);
}

// E_{rho^2}[L(h, h')] = rho^T L rho.
inline double expected_tandem(const LossTables& loss, std::span<const double> rho) {
  const std::size_t m = loss.num_members();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) row += loss.tandem_matrix[i * m + j] * rho[j];
    total += rho[i] * row;
  }
  return total;
}

inline double expected_tandem(const LossTables& loss, const WeightDistribution& w) {
  return expected_tandem(loss, w.rho);
}

// E_rho[L(h)], the Gibbs risk estimate.
inline double expected_gibbs(const LossTables& loss, std::span<const double> rho) {
  double total = 0.0;
  for (std::size_t i = 0; i < loss.num_members(); ++i) total += rho[i] * loss.gibbs_losses[i];
  return total;
}

inline double expected_gibbs(const LossTables& loss, const WeightDistribution& w) {
  return expected_gibbs(loss, w.rho);
}

// Restricts the tables to a subset of members.
inline LossTables select_members(const LossTables& loss, std::span<const std::size_t> members) {
  const std::size_t m = loss.num_members();
  const std::size_t k = members.size();
  LossTables out;
  out.gibbs_losses.resize(k);
  out.tandem_matrix.resize(k * k);
  out.pair_counts.resize(k * k);
  out.n_min = std::numeric_limits<std::size_t>::max();
  for (std::size_t a = 0; a < k; ++a) {
    out.gibbs_losses[a] = loss.gibbs_losses[members[a]];
    for (std::size_t b = 0; b < k; ++b) {
      out.tandem_matrix[a * k + b] = loss.tandem_matrix[members[a] * m + members[b]];
      out.pair_counts[a * k + b] = loss.pair_counts[members[a] * m + members[b]];
    }
    out.n_min = std::min(out.n_min, out.pair_counts[a * k + a]);
  }
  return out;
}

}  // namespace tandem
