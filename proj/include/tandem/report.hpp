#pragma once

// JSON and CSV renderings of fits, cross-validation and subsampling results.

#include <string>
#include <vector>

#include <json.hpp>

#include "tandem/aggregation.hpp"
#include "tandem/bounds.hpp"
#include "tandem/io.hpp"
#include "tandem/optimizer.hpp"

namespace tandem::report {

inline constexpr const char* kFormatVersion = "tandem-report/1";

using nlohmann::json;

inline json to_json(const OptimizerConfig& cfg) {
  return {{"max_outer_iters", cfg.max_outer_iters},
          {"inner_grad_steps", cfg.inner_grad_steps},
          {"tolerance", cfg.tolerance},
          {"initial_step", cfg.initial_step},
          {"increase_factor", cfg.increase_factor},
          {"decrease_factor", cfg.decrease_factor},
          {"min_step", cfg.min_step},
          {"max_step", cfg.max_step},
          {"rho_floor", cfg.rho_floor},
          {"seed", cfg.seed}};
}

inline json to_json(const BoundReport& b) {
  json trace = json::array();
  for (const auto& [it, value] : b.trace) trace.push_back({it, value});
  return {{"kind", to_string(b.kind)},     {"raw", b.raw_value},
          {"clipped", b.bound_value},      {"vacuous", b.vacuous},
          {"guarantee", b.guarantee()},    {"lambda", b.lambda_used},
          {"kl", b.kl_value},              {"delta", b.delta},
          {"n", b.n},                      {"expected_loss", b.expected_loss},
          {"trace", std::move(trace)}};
}

// Bounds summary block shared by every report.
inline json bounds_json(const Fit& fit) {
  return {{"tandem_raw", fit.tandem.raw_value},
          {"tandem_clipped", fit.tandem.bound_value},
          {"first_order", fit.first_order.bound_value},
          {"first_order_raw", fit.first_order.raw_value},
          {"guarantee", fit.tandem.guarantee()},
          {"first_order_guarantee", fit.first_order.guarantee()},
          {"tandem", to_json(fit.tandem)},
          {"first_order_detail", to_json(fit.first_order)}};
}

inline json members_json(const PredictionSet& set, const std::vector<double>& rho) {
  json out = json::array();
  for (std::size_t i = 0; i < set.num_members(); ++i) {
    json m = {{"id", set.member_ids[i]}, {"rho", rho[i]}};
    if (!set.run_ids.empty()) m["run_id"] = set.run_ids[i];
    out.push_back(std::move(m));
  }
  return out;
}

inline json fit_json(const Fit& fit, const PredictionSet& set) {
  json out = {{"weighting", to_string(fit.weighting)},
              {"rho", fit.weights.rho},
              {"prior", fit.weights.pi},
              {"lambda", fit.weights.lambda},
              {"kl", fit.tandem.kl_value},
              {"n", fit.tables.n_min},
              {"bounds", bounds_json(fit)},
              {"members", members_json(set, fit.weights.rho)}};
  if (fit.optimization) {
    json trace = json::array();
    for (const auto& e : fit.optimization->trace) trace.push_back({e.iteration, e.lambda, e.objective});
    out["optimization"] = {{"iterations", fit.optimization->iterations},
                           {"converged", fit.optimization->converged},
                           {"bound", fit.optimization->bound},
                           {"trace", std::move(trace)}};
  }
  return out;
}

inline json eval_json(const EvalReport& eval, const PredictionSet& set) {
  json folds = json::array();
  for (const auto& f : eval.folds) {
    json fold = fit_json(f.fit, set);
    fold["train_size"] = f.train_size;
    fold["test_size"] = f.test_size;
    fold["accuracy_mv"] = f.accuracy_mv;
    fold["accuracy_avg"] = f.accuracy_avg ? json(*f.accuracy_avg) : json(nullptr);
    folds.push_back(std::move(fold));
  }
  return {{"folds", std::move(folds)},
          {"accuracies",
           {{"mv", eval.accuracy_mv},
            {"avg", eval.accuracy_avg ? json(*eval.accuracy_avg) : json(nullptr)}}}};
}

inline json stats_json(const SummaryStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}};
}

inline json subsample_json(const SubsampleReport& r, const PredictionSet& pool) {
  json repeats = json::array();
  for (std::size_t k = 0; k < r.repeats.size(); ++k) {
    const auto& rep = r.repeats[k];
    json ids = json::array();
    for (auto i : rep.members) ids.push_back(pool.member_ids[i]);
    repeats.push_back({{"repeat", k},
                       {"members", std::move(ids)},
                       {"accuracy_mv", rep.eval.accuracy_mv},
                       {"accuracy_avg", rep.eval.accuracy_avg ? json(*rep.eval.accuracy_avg)
                                                              : json(nullptr)},
                       {"tandem_bound", rep.tandem_bound},
                       {"first_order_bound", rep.first_order_bound}});
  }
  return {{"pool_size", r.pool_size},
          {"subset_size", r.subset_size},
          {"repeats", std::move(repeats)},
          {"accuracy_mv", stats_json(r.accuracy_mv)},
          {"accuracy_avg", r.accuracy_avg ? stats_json(*r.accuracy_avg) : json(nullptr)},
          {"tandem_bound", stats_json(r.tandem_bound)},
          {"first_order_bound", stats_json(r.first_order_bound)},
          {"std_convention", "population"},
          {"std_degenerate", r.degenerate_sigma}};
}

// One row per repeat: repeat,accuracy_mv,accuracy_avg,tandem_bound,first_order_bound
inline std::string subsample_csv(const SubsampleReport& r) {
  std::string out = "repeat,accuracy_mv,accuracy_avg,tandem_bound,first_order_bound\n";
  for (std::size_t k = 0; k < r.repeats.size(); ++k) {
    const auto& rep = r.repeats[k];
    out += std::to_string(k) + "," + io::format_double(rep.eval.accuracy_mv) + "," +
           (rep.eval.accuracy_avg ? io::format_double(*rep.eval.accuracy_avg) : std::string()) +
           "," + io::format_double(rep.tandem_bound) + "," +
           io::format_double(rep.first_order_bound) + "\n";
  }
  return out;
}

}  // namespace tandem::report
