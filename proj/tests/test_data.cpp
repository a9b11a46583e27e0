#include <gtest/gtest.h>

#include <random>

#include "tandem/data.hpp"
#include "tandem/io.hpp"
#include "test_util.hpp"

using namespace tandem;
using tandem::testutil::TempDir;

namespace {

// 3 members, 4 examples, K = 2, no masks, no prior.
std::filesystem::path small_manifest(const TempDir& dir) {
  dir.write("labels.csv", "0\n1\n1\n0\n");
  dir.write("a.csv", "0.9,0.1\n0.2,0.8\n0.4,0.6\n0.7,0.3\n");
  dir.write("b.csv", "0.5,0.5\n0.1,0.9\n0.6,0.4\n1,0\n");
  dir.write("c.csv", "0.3,0.7\n0.3,0.7\n0.2,0.8\n0.55,0.45\n");
  return dir.write("m.json", R"({
    "num_classes": 2, "mode": "prob", "labels": "labels.csv",
    "members": [{"id": "a", "predictions": "a.csv"},
                {"id": "b", "predictions": "b.csv"},
                {"id": "c", "predictions": "c.csv", "run_id": "r1"}]
  })");
}

}  // namespace

TEST(LoadManifest, DefaultsToFullMasks) {
  TempDir dir;
  const auto ens = load_manifest(small_manifest(dir));
  EXPECT_EQ(ens.predictions.num_members(), 3u);
  EXPECT_EQ(ens.predictions.num_examples, 4u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ens.mask.count(i), 4u);
  EXPECT_EQ(ens.predictions.run_ids, (std::vector<std::string>{"", "", "r1"}));
  EXPECT_TRUE(validate(ens.predictions, ens.labels, ens.mask).empty());
}

TEST(LoadManifest, OmittedPriorIsUniform) {
  TempDir dir;
  dir.write("labels.csv", "0\n1\n");
  std::string members;
  for (int i = 0; i < 5; ++i) {
    dir.write("p" + std::to_string(i) + ".csv", "0\n1\n");
    members += std::string(i ? "," : "") + R"({"id":"m)" + std::to_string(i) +
               R"(","predictions":"p)" + std::to_string(i) + R"(.csv"})";
  }
  const auto path = dir.write(
      "m.json", R"({"num_classes":2,"mode":"hard","labels":"labels.csv","members":[)" + members + "]}");
  const auto ens = load_manifest(path);
  ASSERT_EQ(ens.prior.size(), 5u);
  for (double p : ens.prior) EXPECT_DOUBLE_EQ(p, 0.2);
}

TEST(LoadManifest, PriorFileIsNormalized) {
  TempDir dir;
  dir.write("labels.csv", "0\n1\n");
  dir.write("a.csv", "0\n1\n");
  dir.write("b.csv", "1\n1\n");
  dir.write("prior.csv", "1\n3\n");
  const auto path = dir.write("m.json", R"({"num_classes":2,"mode":"hard","labels":"labels.csv",
    "prior":"prior.csv","members":[{"id":"a","predictions":"a.csv"},{"id":"b","predictions":"b.csv"}]})");
  const auto ens = load_manifest(path);
  EXPECT_DOUBLE_EQ(ens.prior[0], 0.25);
  EXPECT_DOUBLE_EQ(ens.prior[1], 0.75);
}

TEST(LoadManifest, DimensionMismatchNamesMember) {
  TempDir dir;
  dir.write("labels.csv", "0\n1\n1\n0\n");
  dir.write("a.csv", "0\n1\n1\n0\n");
  dir.write("short.csv", "0\n1\n1\n");
  const auto path = dir.write("m.json", R"({"num_classes":2,"mode":"hard","labels":"labels.csv",
    "members":[{"id":"a","predictions":"a.csv"},{"id":"short","predictions":"short.csv"}]})");
  try {
    load_manifest(path);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_EQ(e.member(), "short");
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
  }
}

TEST(LoadManifest, RejectsEmptyHoldout) {
  TempDir dir;
  dir.write("labels.csv", "0\n1\n");
  dir.write("a.csv", "0\n1\n");
  dir.write("a_mask.csv", "0\n0\n");
  const auto path = dir.write("m.json", R"({"num_classes":2,"mode":"hard","labels":"labels.csv",
    "members":[{"id":"a","predictions":"a.csv","mask":"a_mask.csv"}]})");
  try {
    load_manifest(path);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_EQ(e.member(), "a");
  }
}

TEST(LoadManifest, RejectsUnnormalizedRowWithLocation) {
  TempDir dir;
  dir.write("labels.csv", "0\n1\n");
  dir.write("a.csv", "0.5,0.5\n0.6,0.6\n");
  const auto path = dir.write("m.json", R"({"num_classes":2,"mode":"prob","labels":"labels.csv",
    "members":[{"id":"a","predictions":"a.csv"}]})");
  try {
    load_manifest(path);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_EQ(e.member(), "a");
    ASSERT_TRUE(e.row().has_value());
    EXPECT_EQ(*e.row(), 1u);
  }
}

TEST(LoadManifest, MalformedInputsError) {
  TempDir dir;
  dir.write("labels.csv", "0\n1\n");
  dir.write("a.csv", "0.5,x\n0.5,0.5\n");
  dir.write("b.csv", "0.5,0.5,0\n0.5,0.5,0\n");
  EXPECT_THROW(load_manifest(dir.write("bad.json", "{ not json")), InputError);
  EXPECT_THROW(load_manifest(dir.write("nolabels.json", R"({"num_classes":2,"members":[]})")),
               InputError);
  EXPECT_THROW(load_manifest(dir.write("a.json", R"({"num_classes":2,"labels":"labels.csv",
    "members":[{"id":"a","predictions":"a.csv"}]})")), InputError);
  EXPECT_THROW(load_manifest(dir.write("b.json", R"({"num_classes":2,"labels":"labels.csv",
    "members":[{"id":"b","predictions":"b.csv"}]})")), InputError);
  EXPECT_THROW(load_manifest(dir.write("missing.json", R"({"num_classes":2,"labels":"nope.csv",
    "members":[{"id":"b","predictions":"b.csv"}]})")), InputError);
}

TEST(LoadManifest, DuplicateIdsRejected) {
  TempDir dir;
  dir.write("labels.csv", "0\n1\n");
  dir.write("a.csv", "0\n1\n");
  const auto path = dir.write("m.json", R"({"num_classes":2,"mode":"hard","labels":"labels.csv",
    "members":[{"id":"a","predictions":"a.csv"},{"id":"a","predictions":"a.csv"}]})");
  EXPECT_THROW(load_manifest(path), InputError);
}

TEST(Validate, ConsistentInputsHaveNoViolations) {
  const auto set = testutil::prob_set({{{0.9, 0.1}, {0.2, 0.8}}});
  EXPECT_TRUE(validate(set, {0, 1}, OverlapMask::all_true(1, 2)).empty());
}

TEST(Validate, ReportsNormalizationAtRow) {
  const auto set = testutil::prob_set({{{0.9, 0.1}, {0.6, 0.6}}});
  const auto v = validate(set, {0, 1}, OverlapMask::all_true(1, 2));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::normalization);
  EXPECT_EQ(v[0].member, "m0");
  EXPECT_EQ(v[0].row, std::optional<std::size_t>(1));
}

TEST(Validate, ReportsLabelOutOfRange) {
  const auto set = testutil::hard_set({{0, 1}});
  const auto v = validate(set, {0, 2}, OverlapMask::all_true(1, 2));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::range);
  EXPECT_EQ(v[0].row, std::optional<std::size_t>(1));
}

TEST(Validate, ReportsEmptyHoldoutAndShapes) {
  auto set = testutil::hard_set({{0, 1}, {1, 1}});
  OverlapMask mask{{{1, 1}, {0, 0}}};
  auto v = validate(set, {0, 1}, mask);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::empty_holdout);
  EXPECT_EQ(v[0].member, "m1");

  v = validate(set, {0, 1, 1}, OverlapMask::all_true(2, 2));
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, Violation::Kind::dimension);
}

TEST(Argmax, TiesGoToLowestIndex) {
  const double tied[] = {0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(argmax(tied), 0);
  const double later[] = {0.2, 0.4, 0.4};
  EXPECT_EQ(argmax(later), 1);
}

TEST(CheckWeights, EnforcesInvariants) {
  EXPECT_NO_THROW(check_weights({{0.5, 0.5}, {0.5, 0.5}, 1.0}));
  EXPECT_THROW(check_weights({{0.6, 0.5}, {0.5, 0.5}, 1.0}), InputError);
  EXPECT_THROW(check_weights({{0.5, 0.5}, {1.0, 0.0}, 1.0}), InputError);
  EXPECT_THROW(check_weights({{0.5, 0.5}, {0.5, 0.5}, 2.0}), InputError);
  EXPECT_THROW(check_weights({{0.5, 0.5}, {0.5, 0.5}, 0.0}), InputError);
  EXPECT_DOUBLE_EQ(clamp_lambda(5.0), kLambdaMax);
  EXPECT_DOUBLE_EQ(clamp_lambda(0.0), kLambdaMin);
}

// Property: writing a loaded set and reloading it gives bit-identical matrices.
TEST(RoundTrip, RandomSetsReloadBitIdentical) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 4);
    const std::size_t n = 1 + rng() % 30;
    const std::size_t m = 1 + rng() % 5;
    Ensemble ens;
    auto& set = ens.predictions;
    set.num_classes = k;
    set.num_examples = n;
    const bool hard = trial % 3 == 0;
    set.mode = hard ? PredictionMode::hard : PredictionMode::probability;
    for (std::size_t i = 0; i < m; ++i) {
      set.member_ids.push_back("member-" + std::to_string(i));
      if (hard) {
        std::vector<int> v(n);
        for (auto& y : v) y = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
        set.hard_labels.push_back(v);
      } else {
        std::vector<double> rows;
        for (std::size_t t = 0; t < n; ++t) {
          std::vector<double> r(static_cast<std::size_t>(k));
          double s = 0.0;
          for (auto& x : r) s += (x = u(rng) + 1e-3);
          for (auto& x : r) rows.push_back(x / s);
        }
        set.probabilities.push_back(rows);
      }
    }
    for (std::size_t t = 0; t < n; ++t) ens.labels.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
    ens.mask = OverlapMask::all_true(m, n);
    for (std::size_t i = 0; i < m; ++i) ens.mask.valid[i][rng() % n] = (n == 1);
    ens.prior = normalize_prior(std::vector<double>(m, 1.0));

    TempDir dir;
    const auto manifest = write_manifest(dir.path(), ens);
    const auto back = load_manifest(manifest);
    EXPECT_EQ(back.predictions.probabilities, set.probabilities);
    EXPECT_EQ(back.predictions.hard_labels, set.hard_labels);
    EXPECT_EQ(back.predictions.member_ids, set.member_ids);
    EXPECT_EQ(back.labels, ens.labels);
    EXPECT_EQ(back.mask.valid, ens.mask.valid);
  }
}

TEST(Selection, SubsetsKeepRowsAligned) {
  const auto set = testutil::prob_set({{{0.9, 0.1}, {0.2, 0.8}, {0.5, 0.5}},
                                      {{0.1, 0.9}, {0.3, 0.7}, {0.6, 0.4}}});
  const std::size_t ex[] = {2, 0};
  const auto sub = set.select_examples(ex);
  EXPECT_EQ(sub.num_examples, 2u);
  EXPECT_EQ(sub.vote(1, 0), 0);
  EXPECT_EQ(sub.vote(1, 1), 1);
  const std::size_t mem[] = {1};
  const auto one = set.select_members(mem);
  EXPECT_EQ(one.member_ids, std::vector<std::string>{"m1"});
  EXPECT_EQ(one.probabilities[0], set.probabilities[1]);
}
