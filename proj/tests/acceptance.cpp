// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tandem/tandem.hpp"
#include "test_util.hpp"

using namespace tandem;
using tandem::testutil::TempDir;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void check(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = budget_s <= 0.0 || secs < budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::printf("[%s] %2d %-34s %8.3fs  %s%s\n", ok ? "PASS" : "FAIL", id, name, secs, o.detail.c_str(),
              in_time ? "" : "  (over time budget)");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

// Shared by criteria 3 and 4.
struct GridCase {
  LossTables tables;
  std::vector<std::vector<double>> matrix;
  std::size_t n;
};

std::vector<GridCase> grid_cases() {
  std::mt19937_64 rng(20241);
  std::uniform_int_distribution<std::size_t> size(300, 3300);
  std::vector<GridCase> cases;
  for (int k = 0; k < 50; ++k) {
    const auto err = testutil::random_errors(rng, 3, size(rng));
    GridCase c;
    c.n = err.front().size();
    c.tables = testutil::tables_from_errors(err);
    c.matrix.assign(3, std::vector<double>(3));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        double joint = 0.0;
        for (std::size_t t = 0; t < c.n; ++t) joint += err[i][t] * err[j][t];
        c.matrix[i][j] = joint / static_cast<double>(c.n);
      }
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

constexpr double delta = 0.05;

int main() {

  check(1, "closed-form lambda optimality", 1.0, [] {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = -1.0;
    for (int k = 0; k < 200; ++k) {
      const double e = 0.25 * u(rng);
      const double kl = 3.0 * u(rng);
      const auto n = static_cast<std::size_t>(10 + 100000 * u(rng));
      const double d = 0.001 + 0.2 * u(rng);
      const double lam = optimal_lambda(e, kl, n, d);
      const double at = oracle::tandem_bound(e, kl, lam, static_cast<double>(n), d);
      for (int g = 1; g <= 1000; ++g) {
        const double l = 2.0 * g / 1001.0;
        const double v = oracle::tandem_bound(e, kl, l, static_cast<double>(n), d);
        worst = std::max(worst, (at - v) / v);
      }
    }
    return Outcome{worst <= 1e-12, fmt("max relative excess %.3g", worst)};
  });

  check(2, "gradient vs finite differences", 5.0, [] {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const std::size_t m = 2 + static_cast<std::size_t>(k % 9);
      const std::size_t n = 200 + static_cast<std::size_t>(2000 * u(rng));
      const auto err = testutil::random_errors(rng, m, n);
      const auto tables = testutil::tables_from_errors(err);
      std::vector<std::vector<double>> a(m, std::vector<double>(m));
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) a[i][j] = tables.tandem(i, j);
      }
      std::vector<double> rho(m), pi(m);
      double sr = 0.0, sp = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        rho[i] = 0.05 + u(rng);
        pi[i] = 0.05 + u(rng);
        sr += rho[i];
        sp += pi[i];
      }
      for (std::size_t i = 0; i < m; ++i) {
        rho[i] /= sr;
        pi[i] /= sp;
      }
      const double lam = 0.1 + 1.8 * u(rng);
      auto f = [&](const std::vector<double>& r) {
        return oracle::quadratic_form(a, r) + 2.0 / (lam * static_cast<double>(n)) * oracle::kl(r, pi);
      };
      const auto g = tandem_rho_gradient(tables, {rho, pi, lam}, {delta, n});
      double diff = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        auto hi = rho, lo = rho;
        hi[i] += 1e-6;
        lo[i] -= 1e-6;
        const double fd = (f(hi) - f(lo)) / 2e-6;
        diff += (g[i] - fd) * (g[i] - fd);
        norm += g[i] * g[i];
      }
      worst = std::max(worst, std::sqrt(diff / norm));
    }
    return Outcome{worst <= 1e-5, fmt("max relative error %.3g", worst)};
  });

  const auto cases = grid_cases();

  check(3, "optimizer vs simplex grid (M=3)", 120.0, [&] {
    double worst = -1.0;
    const std::vector<double> pi(3, 1.0 / 3.0);
    for (const auto& c : cases) {
      const auto res = optimize_weights(c.tables, pi, {delta, c.n});
      const double grid = oracle::simplex_grid_min(1000, [&](const std::vector<double>& r) {
        return oracle::tandem_bound_min_lambda(oracle::quadratic_form(c.matrix, r), oracle::kl(r, pi),
                                               static_cast<double>(c.n), delta, 60);
      });
      worst = std::max(worst, res.bound - grid);
    }
    return Outcome{worst <= 1e-4, fmt("max (optimizer - grid) %.3g", worst)};
  });

  check(4, "never worse than uniform", 0.0, [&] {
    std::size_t bad = 0, total = 0;
    auto one = [&](const LossTables& t, std::size_t n) {
      const auto pi = uniform_distribution(t.num_members());
      const auto res = optimize_weights(t, pi, {delta, n});
      const auto uni = evaluate_at_rho(t, pi, pi, {delta, n}, Objective::tandem);
      ++total;
      bad += !(res.bound <= uni.value);
    };
    for (const auto& c : cases) one(c.tables, c.n);
    std::mt19937_64 rng(4);
    for (int k = 0; k < 100; ++k) {
      const std::size_t m = 2 + static_cast<std::size_t>(k % 9);
      const std::size_t n = 100 + static_cast<std::size_t>(k * 37);
      const auto t = testutil::tables_from_errors(testutil::random_errors(rng, m, n));
      one(t, n);
    }
    return Outcome{bad == 0, fmt("%.0f of %.0f instances worse", static_cast<double>(bad),
                                 static_cast<double>(total))};
  });

  check(5, "worked numeric anchor", 0.0, [&] {
    const auto t = testutil::tables_from_matrix({{0.04, 0.04}, {0.04, 0.04}}, 1000);
    const auto pi = uniform_distribution(2);
    const double lam = optimal_lambda(expected_tandem(t, pi), 0.0, 1000, delta);
    const double b = tandem_bound(t, {pi, pi, lam}, {delta, 1000}).raw_value;
    // High-precision values: 0.28836598186499649, 0.44514953197597779.
    const bool ok = std::abs(b - 0.2884) <= 1e-4 && std::abs(lam - 0.44516) <= 1e-4 &&
                    std::abs(b - 0.28836598186499649) <= 1e-12 &&
                    std::abs(lam - 0.44514953197597779) <= 1e-12;
    return Outcome{ok, fmt("bound %.10f lambda %.10f", b, lam)};
  });

  check(6, "Hoeffding dominance and cancellation", 1.0, [] {
    std::size_t bad = 0;
    for (double p : {0.1, 0.2, 0.3, 0.4}) {
      for (std::size_t m = 1; m <= 101; m += 2) {
        bad += !(exact_mv_error_binomial(m, p) <= hoeffding_mv_bound(m, p));
      }
    }
    const double e101 = exact_mv_error_binomial(101, 0.3);
    const double h101 = hoeffding_mv_bound(101, 0.3);
    return Outcome{bad == 0 && e101 < 1e-4,
                   fmt("violations %.0f, exact(101,0.3) %.4g, hoeffding %.4g", static_cast<double>(bad), e101, h101)};
  });

  check(7, "Monte Carlo consistency", 30.0, [] {
    SyntheticSpec spec;
    spec.members = 3;
    spec.error_rates = {0.3, 0.3, 0.3};
    spec.seed = 7;
    const auto mc = mc_mv_error(spec, uniform_distribution(3), 1000000);
    const double z = std::abs(mc.estimate - 0.216) / mc.standard_error;
    return Outcome{z <= 4.0, fmt("estimate %.6f, |z| %.3f", mc.estimate, z)};
  });

  check(8, "bound coverage", 600.0, [&] {
    SyntheticSpec spec;
    spec.members = 5;
    spec.examples = 500;
    spec.error_rates = {0.1, 0.15, 0.2, 0.25, 0.3};
    spec.hard_fraction = 0.05;
    spec.seed = 8;
    const auto r = bound_coverage_experiment(spec, delta, 1000);
    return Outcome{r.coverage >= 0.95,
                   fmt("coverage %.4f, mean bound %.4f, mean risk %.4f", r.coverage, r.mean_bound, r.mean_risk)};
  });

  check(9, "diversity of tandem weights", 120.0, [&] {
    int good = 0;
    for (int s = 0; s < 100; ++s) {
      SyntheticSpec spec;
      spec.members = 3;
      spec.examples = 3000;
      spec.error_rates = {0.2, 0.2, 0.3};
      spec.duplicate_groups = {{0, 1}};
      spec.seed = 900 + static_cast<std::uint64_t>(s);
      const auto ens = generate(spec);
      const auto tnd = fit_weights(ens.predictions, ens.labels, ens.mask, ens.prior, delta, {}, Weighting::tandem);
      const auto fo = fit_weights(ens.predictions, ens.labels, ens.mask, ens.prior, delta, {}, Weighting::first_order);
      good += entropy(tnd.weights.rho) > entropy(fo.weights.rho) && tnd.weights.rho[2] > fo.weights.rho[2];
    }
    return Outcome{good >= 95, fmt("%.0f of 100 repetitions", good)};
  });

  check(10, "CLI pipeline determinism", 0.0, [] {
    TempDir dir;
    dir.write("spec.json", R"({"M":5,"n":800,"K":3,"p":[0.1,0.2,0.25,0.3,0.35],"c":0.05,"seed":10})");
    const std::string bin = TANDEM_CLI_PATH;
    const auto sh = [](const std::string& cmd) { return std::system((cmd + " > /dev/null").c_str()); };
    int rc = sh(bin + " simulate --spec " + (dir / "spec.json").string() + " --experiment generate --out " +
                (dir / "data").string());
    const std::string manifest = (dir / "data" / "manifest.json").string();
    for (const char* name : {"a.json", "b.json"}) {
      rc |= sh(bin + " optimize --manifest " + manifest + " --ttcv --seed 11 --out " + (dir / name).string());
    }
    if (rc != 0) return Outcome{false, "CLI exited nonzero"};
    const auto a = io::read_text(dir / "a.json");
    const auto b = io::read_text(dir / "b.json");
    return Outcome{a == b && !a.empty(), fmt("%.0f bytes, identical: %.0f", static_cast<double>(a.size()), a == b)};
  });

  check(11, "TTCV contract", 120.0, [&] {
    SyntheticSpec spec;
    spec.members = 5;
    spec.examples = 501;
    spec.num_classes = 3;
    spec.error_rates = {0.25, 0.3, 0.35, 0.4, 0.45};
    spec.hard_fraction = 0.1;
    spec.seed = 11;
    const auto ens = generate(spec);
    const std::vector<double> rho{0.3, 0.25, 0.2, 0.15, 0.1};
    const double full = evaluate(ens.predictions, ens.labels, rho, Aggregation::mv);
    std::vector<double> acc;
    for (std::uint64_t s = 0; s < 1000; ++s) {
      acc.push_back(ttcv_run(ens, delta, {}, Weighting::fixed, s, rho).accuracy_mv);
    }
    const auto st = summarize(acc);
    const double se = st.stddev / std::sqrt(static_cast<double>(acc.size()));
    const double z = std::abs(st.mean - full) / se;
    return Outcome{se > 0.0 && z <= 3.0, fmt("mean %.6f, full %.6f, |z| %.3f", st.mean, full, z)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
