#pragma once

// Command-line front end. `run_cli` is the whole program; tools/tandem.cpp
// only forwards argv. Exit codes: 0 success, 1 input error, 2 internal error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tandem/aggregation.hpp"
#include "tandem/bounds.hpp"
#include "tandem/data.hpp"
#include "tandem/io.hpp"
#include "tandem/optimizer.hpp"
#include "tandem/report.hpp"
#include "tandem/simulator.hpp"

namespace tandem::cli {

using nlohmann::json;
namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInputError = 1, kInternalError = 2 };

struct RunConfig {
  std::string manifest;
  double delta = 0.05;
  std::string objective = "tandem";
  std::string aggregation = "both";
  std::uint64_t seed = 0;
  std::string out;
  std::string rho_path;
  std::optional<double> lambda;
  bool ttcv = false;
  std::size_t subsample = 0;
  std::size_t repeats = 0;
  std::string spec_path;
  std::string experiment;
  std::size_t trials = 100000;
  std::size_t repetitions = 1000;
  OptimizerConfig optimizer;
};

inline Weighting parse_weighting(const std::string& s) {
  if (s == "tandem") return Weighting::tandem;
  if (s == "first-order") return Weighting::first_order;
  if (s == "uniform") return Weighting::uniform;
  throw InputError("unknown objective '" + s + "'");
}

inline json config_json(const std::string& command, const RunConfig& cfg) {
  json out = {{"command", command},         {"delta", cfg.delta},
              {"objective", cfg.objective}, {"aggregation", cfg.aggregation},
              {"seed", cfg.seed},           {"optimizer", report::to_json(cfg.optimizer)}};
  if (!cfg.manifest.empty()) out["manifest"] = cfg.manifest;
  if (!cfg.rho_path.empty()) out["rho"] = cfg.rho_path;
  if (cfg.lambda) out["lambda"] = *cfg.lambda;
  if (cfg.ttcv) out["ttcv"] = true;
  if (cfg.subsample) out["subsample"] = {{"M", cfg.subsample}, {"repeats", cfg.repeats}};
  if (!cfg.spec_path.empty()) {
    out["spec"] = cfg.spec_path;
    out["experiment"] = cfg.experiment;
    out["trials"] = cfg.trials;
    out["repetitions"] = cfg.repetitions;
  }
  return out;
}

inline void emit(const RunConfig& cfg, const std::string& text, std::ostream& stdout_stream) {
  if (cfg.out.empty() || cfg.out == "-") {
    stdout_stream << text;
  } else {
    io::write_atomic(cfg.out, text);
  }
}

inline std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

inline std::vector<double> read_rho(const std::string& path, std::size_t members) {
  auto rho = io::read_double_column(path);
  if (rho.size() != members) {
    throw InputError("rho file has " + std::to_string(rho.size()) + " entries for " +
                         std::to_string(members) + " members",
                     {}, {}, path);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (!(rho[i] >= 0.0)) throw InputError("rho entry is negative", {}, i, path);
    total += rho[i];
  }
  if (!(total > 0.0)) throw InputError("rho has zero mass", {}, {}, path);
  // Weights already on the simplex are used verbatim so a saved rho reproduces its bound.
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    for (auto& r : rho) r /= total;
  }
  return rho;
}

inline json accuracies_json(const Ensemble& ens, const std::vector<double>& rho,
                            const std::string& aggregation) {
  const bool prob = ens.predictions.mode == PredictionMode::probability;
  json acc = json::object();
  if (aggregation != "avg") acc["mv"] = evaluate(ens.predictions, ens.labels, rho, Aggregation::mv);
  if (aggregation != "mv") {
    acc["avg"] = prob ? json(evaluate(ens.predictions, ens.labels, rho, Aggregation::avg))
                      : json(nullptr);
  }
  return acc;
}

inline void check_aggregation(const Ensemble& ens, const std::string& aggregation) {
  if (aggregation == "avg" && ens.predictions.mode == PredictionMode::hard) {
    throw InputError("avg aggregation needs probability predictions (manifest mode is hard)");
  }
}

inline json base_report(const std::string& command, const RunConfig& cfg) {
  return {{"format_version", report::kFormatVersion},
          {"config", config_json(command, cfg)},
          {"seed", cfg.seed}};
}

inline void add_fit(json& doc, const Fit& fit, const Ensemble& ens, const RunConfig& cfg) {
  auto f = report::fit_json(fit, ens.predictions);
  for (auto it = f.begin(); it != f.end(); ++it) doc[it.key()] = it.value();
  doc["accuracies"] = accuracies_json(ens, fit.weights.rho, cfg.aggregation);
}

inline void add_cross_validation(json& doc, const Ensemble& ens, const RunConfig& cfg,
                                 Weighting weighting, std::span<const double> fixed_rho) {
  if (cfg.subsample) {
    const auto sub = subsample_protocol(ens, cfg.subsample, cfg.repeats, cfg.seed, cfg.delta,
                                        cfg.optimizer, weighting);
    doc["subsample"] = report::subsample_json(sub, ens.predictions);
    if (!cfg.out.empty() && cfg.out != "-") {
      io::write_atomic(cfg.out + ".csv", report::subsample_csv(sub));
    }
  } else {
    const auto eval = ttcv_run(ens, cfg.delta, cfg.optimizer, weighting, cfg.seed, fixed_rho);
    auto e = report::eval_json(eval, ens.predictions);
    doc["folds"] = e["folds"];
    doc["ttcv_accuracies"] = e["accuracies"];
  }
}

inline int cmd_optimize(const RunConfig& cfg, std::ostream& out) {
  const auto ens = load_manifest(cfg.manifest);
  check_aggregation(ens, cfg.aggregation);
  const auto weighting = parse_weighting(cfg.objective);
  auto doc = base_report("optimize", cfg);
  const auto fit = fit_weights(ens.predictions, ens.labels, ens.mask, ens.prior, cfg.delta,
                               cfg.optimizer, weighting);
  add_fit(doc, fit, ens, cfg);
  if (cfg.ttcv || cfg.subsample) add_cross_validation(doc, ens, cfg, weighting, {});
  emit(cfg, dump(doc), out);
  return kOk;
}

inline int cmd_bound(const RunConfig& cfg, std::ostream& out) {
  const auto ens = load_manifest(cfg.manifest);
  const std::size_t m = ens.predictions.num_members();
  const bool fixed = !cfg.rho_path.empty();
  const auto rho = fixed ? read_rho(cfg.rho_path, m) : uniform_distribution(m);
  if (cfg.lambda && !(*cfg.lambda > 0.0 && *cfg.lambda < 2.0)) {
    throw InputError("lambda must lie in (0, 2)");
  }
  auto fit = fit_weights(ens.predictions, ens.labels, ens.mask, ens.prior, cfg.delta, cfg.optimizer,
                         Weighting::fixed, rho);
  fit.weighting = fixed ? Weighting::fixed : Weighting::uniform;
  if (cfg.lambda) {
    const BoundParams params{cfg.delta, fit.tables.n_min};
    fit.weights.lambda = *cfg.lambda;
    fit.tandem = tandem_bound(fit.tables, fit.weights, params);
    fit.first_order = first_order_bound(fit.tables, fit.weights, params);
  }
  auto doc = base_report("bound", cfg);
  add_fit(doc, fit, ens, cfg);
  emit(cfg, dump(doc), out);
  return kOk;
}

inline int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  const auto ens = load_manifest(cfg.manifest);
  check_aggregation(ens, cfg.aggregation);
  const auto& set = ens.predictions;
  std::vector<double> rho;
  if (!cfg.rho_path.empty()) {
    rho = read_rho(cfg.rho_path, set.num_members());
  } else {
    rho = fit_weights(set, ens.labels, ens.mask, ens.prior, cfg.delta, cfg.optimizer,
                      parse_weighting(cfg.objective))
              .weights.rho;
  }
  const bool both = cfg.aggregation == "both";
  const bool with_avg = set.mode == PredictionMode::probability;
  std::string text;
  if (both) text = with_avg ? "mv,avg\n" : "mv\n";
  for (std::size_t t = 0; t < set.num_examples; ++t) {
    if (both) {
      text += std::to_string(predict_mv(set, rho, t));
      if (with_avg) text += "," + std::to_string(predict_avg(set, rho, t));
    } else {
      const auto agg = cfg.aggregation == "mv" ? Aggregation::mv : Aggregation::avg;
      text += std::to_string(predict(set, rho, t, agg));
    }
    text += "\n";
  }
  emit(cfg, text, out);
  return kOk;
}

inline int cmd_ttcv(const RunConfig& cfg, std::ostream& out) {
  const auto ens = load_manifest(cfg.manifest);
  check_aggregation(ens, cfg.aggregation);
  if (ens.predictions.num_examples < 2) {
    throw InputError("cross-validation needs at least 2 examples");
  }
  std::vector<double> rho;
  Weighting weighting = parse_weighting(cfg.objective);
  if (!cfg.rho_path.empty()) {
    rho = read_rho(cfg.rho_path, ens.predictions.num_members());
    weighting = Weighting::fixed;
  }
  auto doc = base_report("ttcv", cfg);
  add_cross_validation(doc, ens, cfg, weighting, rho);
  emit(cfg, dump(doc), out);
  return kOk;
}

// Rows: M,p,exact,hoeffding,mc,stderr. The exact column is the MV error under
// the spec's law (c + (1 - c) * binomial tail); hoeffding is empty for p >= 1/2.
inline std::string sweep_csv(const SyntheticSpec& base, const std::vector<std::size_t>& sizes,
                             double p, std::size_t trials, std::uint64_t seed) {
  std::string out = "M,p,exact,hoeffding,mc,stderr\n";
  const double c = base.hard_fraction;
  const double q = c < 1.0 ? (p - c) / (1.0 - c) : 0.0;
  for (auto m : sizes) {
    SyntheticSpec spec = base;
    spec.members = m;
    spec.error_rates.assign(m, p);
    spec.duplicate_groups.clear();
    const double exact = c + (1.0 - c) * exact_mv_error_binomial(m, q);
    const auto mc = mc_mv_error(spec, uniform_distribution(m), trials, seed + m);
    out += std::to_string(m) + "," + io::format_double(p) + "," + io::format_double(exact) + "," +
           (p > 0.0 && p < 0.5 ? io::format_double(hoeffding_mv_bound(m, p)) : std::string()) +
           "," + io::format_double(mc.estimate) + "," + io::format_double(mc.standard_error) + "\n";
  }
  return out;
}

inline std::vector<std::size_t> sweep_sizes(const json& doc, std::size_t fallback) {
  if (!doc.contains("sweep")) return {fallback};
  const auto& s = doc.at("sweep");
  if (s.contains("M")) return s.at("M").get<std::vector<std::size_t>>();
  std::vector<std::size_t> out;
  const auto from = s.value("from", std::size_t{1});
  const auto to = s.value("to", std::size_t{101});
  const auto step = s.value("step", std::size_t{2});
  if (step == 0) throw InputError("sweep step must be positive");
  for (auto m = from; m <= to; m += step) out.push_back(m);
  return out;
}

inline int cmd_simulate(RunConfig cfg, std::ostream& out) {
  json doc;
  try {
    doc = json::parse(io::read_text(cfg.spec_path));
  } catch (const json::exception& e) {
    throw InputError("malformed simulator spec: " + std::string(e.what()), {}, {}, cfg.spec_path);
  }
  auto spec = spec_from_json(doc);
  if (cfg.experiment.empty()) cfg.experiment = doc.value("experiment", std::string("sweep"));
  if (doc.contains("delta")) cfg.delta = doc.at("delta").get<double>();

  if (cfg.experiment == "sweep") {
    const double p = doc.contains("sweep") && doc.at("sweep").contains("p")
                         ? doc.at("sweep").at("p").get<double>()
                         : spec.error_rates.front();
    if (!(p >= spec.hard_fraction)) throw InputError("infeasible spec: p below c");
    emit(cfg, sweep_csv(spec, sweep_sizes(doc, spec.members), p, cfg.trials, cfg.seed), out);
    return kOk;
  }
  if (cfg.experiment == "mc") {
    const auto rho = uniform_distribution(spec.members);
    const auto mc = mc_mv_error(spec, rho, cfg.trials, cfg.seed);
    auto rep = base_report("simulate", cfg);
    rep["spec"] = spec_to_json(spec);
    rep["mc"] = {{"estimate", mc.estimate}, {"stderr", mc.standard_error}, {"trials", mc.trials}};
    if (auto exact = exact_mv_risk(spec, rho)) rep["exact"] = *exact;
    emit(cfg, dump(rep), out);
    return kOk;
  }
  if (cfg.experiment == "coverage") {
    const auto cov = bound_coverage_experiment(spec, cfg.delta, cfg.repetitions, cfg.optimizer,
                                               parse_weighting(cfg.objective), cfg.trials);
    auto rep = base_report("simulate", cfg);
    rep["spec"] = spec_to_json(spec);
    rep["coverage"] = {{"repetitions", cov.repetitions}, {"covered", cov.covered},
                       {"fraction", cov.coverage},       {"mean_bound", cov.mean_bound},
                       {"mean_risk", cov.mean_risk}};
    emit(cfg, dump(rep), out);
    return kOk;
  }
  if (cfg.experiment == "generate") {
    if (cfg.out.empty() || cfg.out == "-") throw InputError("generate needs --out <directory>");
    const auto manifest = write_manifest(cfg.out, generate(spec), false);
    out << manifest.string() << "\n";
    return kOk;
  }
  throw InputError("unknown experiment '" + cfg.experiment + "'");
}

inline json error_json(const char* type, const std::string& message) {
  return {{"error", {{"type", type}, {"message", message}}}};
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"PAC-Bayesian tandem-bound weighting and certification of classifier ensembles",
               "tandem"};
  app.require_subcommand(1);
  RunConfig cfg;

  const std::vector<std::string> objectives{"tandem", "first-order", "uniform"};
  const std::vector<std::string> aggregations{"mv", "avg", "both"};

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--delta", cfg.delta, "Confidence parameter")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", cfg.out, "Output file (stdout when omitted)");
    sub->add_option("--max-iters", cfg.optimizer.max_outer_iters, "Outer optimizer iterations")
        ->capture_default_str();
    sub->add_option("--tol", cfg.optimizer.tolerance, "Objective-change tolerance")
        ->capture_default_str();
  };
  auto add_manifest = [&](CLI::App* sub) {
    sub->add_option("--manifest", cfg.manifest, "Ensemble manifest (JSON)")->required();
  };
  auto add_objective = [&](CLI::App* sub) {
    return sub->add_option("--objective", cfg.objective, "Weighting objective")
        ->check(CLI::IsMember(objectives))
        ->capture_default_str();
  };
  auto add_aggregation = [&](CLI::App* sub) {
    sub->add_option("--aggregation", cfg.aggregation, "Aggregation rule")
        ->check(CLI::IsMember(aggregations))
        ->capture_default_str();
  };
  auto add_subsample = [&](CLI::App* sub) {
    auto* m = sub->add_option("--subsample", cfg.subsample, "Members drawn per repeat");
    auto* r = sub->add_option("--repeats", cfg.repeats, "Number of subsample repeats");
    m->needs(r);
    r->needs(m);
  };

  auto* optimize = app.add_subcommand("optimize", "Optimize member weights and certify them");
  add_manifest(optimize);
  add_common(optimize);
  add_objective(optimize);
  add_aggregation(optimize);
  optimize->add_flag("--ttcv", cfg.ttcv, "Also run test-time cross-validation");
  add_subsample(optimize);

  auto* bound = app.add_subcommand("bound", "Evaluate bounds at given (or uniform) weights");
  add_manifest(bound);
  add_common(bound);
  add_aggregation(bound);
  bound->add_option("--rho", cfg.rho_path, "Weights file, one value per member");
  bound->add_option("--lambda", cfg.lambda, "Trade-off in (0, 2); closed form when omitted");

  auto* predict_cmd = app.add_subcommand("predict", "Write aggregated predictions");
  add_manifest(predict_cmd);
  add_common(predict_cmd);
  add_aggregation(predict_cmd);
  auto* rho_opt = predict_cmd->add_option("--rho", cfg.rho_path, "Weights file");
  add_objective(predict_cmd)->excludes(rho_opt);

  auto* ttcv = app.add_subcommand("ttcv", "Test-time cross-validation");
  add_manifest(ttcv);
  add_common(ttcv);
  add_aggregation(ttcv);
  auto* ttcv_rho = ttcv->add_option("--rho", cfg.rho_path, "Fixed weights file");
  add_objective(ttcv)->excludes(ttcv_rho);
  add_subsample(ttcv);

  auto* simulate = app.add_subcommand("simulate", "Synthetic ensembles and Monte Carlo checks");
  simulate->add_option("--spec", cfg.spec_path, "Simulator spec (JSON)")->required();
  add_common(simulate);
  add_objective(simulate);
  simulate->add_option("--experiment", cfg.experiment, "sweep | mc | coverage | generate")
      ->check(CLI::IsMember({"sweep", "mc", "coverage", "generate"}));
  simulate->add_option("--trials", cfg.trials, "Monte Carlo trials")->capture_default_str();
  simulate->add_option("--repetitions", cfg.repetitions, "Coverage repetitions")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << error_json("usage", e.what()).dump() << "\n";
    return kInputError;
  }

  try {
    if (cfg.subsample && cfg.ttcv) throw InputError("--subsample already runs cross-validation");
    check_config(cfg.optimizer);
    if (*optimize) return cmd_optimize(cfg, out);
    if (*bound) return cmd_bound(cfg, out);
    if (*predict_cmd) return cmd_predict(cfg, out);
    if (*ttcv) return cmd_ttcv(cfg, out);
    if (*simulate) return cmd_simulate(cfg, out);
  } catch (const InputError& e) {
    auto doc = error_json("input", e.what());
    if (!e.member().empty()) doc["error"]["member"] = e.member();
    if (e.row()) doc["error"]["row"] = *e.row();
    if (!e.path().empty()) doc["error"]["path"] = e.path();
    err << doc.dump() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    auto doc = error_json("input", e.what());
    doc["error"]["path"] = e.path1().string();
    err << doc.dump() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << error_json("internal", e.what()).dump() << "\n";
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace tandem::cli
