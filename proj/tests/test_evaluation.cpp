#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "explirec/evaluation.hpp"
#include "explirec/metrics.hpp"
#include "explanation_cases.hpp"
#include "test_support.hpp"

using namespace explirec;
using namespace explirec::testing;

// ---------------- rmse ----------------

TEST(Rmse, Examples) {
  std::vector<double> a{1, 2, 3};
  EXPECT_DOUBLE_EQ(rmse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(rmse(std::vector<double>{3}, std::vector<double>{5}), 2.0);
  EXPECT_NEAR(rmse(a, std::vector<double>{2, 2, 5}), std::sqrt(5.0 / 3), 1e-12);
  EXPECT_NEAR(rmse(a, std::vector<double>{2, 2, 5}), 1.2909944487358056, 1e-12);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), Error);
  EXPECT_THROW(rmse(a, std::vector<double>{1, 2}), Error);
}

// ---------------- worked examples ----------------

TEST(EvaluateExplanations, IdenticalPositivePairsScoreOne) {
  Lexical lx;
  PairTable ref{pr("good", "service"), pr("tasty", "food")};
  auto r = evaluate_explanations({predicted(0, 0, ref)}, ref, lx.table, lx.lexicon, 0.8, true);
  EXPECT_NEAR(r.scores.precision, 1.0, 1e-9);
  EXPECT_NEAR(r.scores.recall, 1.0, 1e-9);
  EXPECT_NEAR(r.scores.f1, 1.0, 1e-9);
  EXPECT_EQ(r.decisions.size(), 2u);
}

TEST(EvaluateExplanations, OneOfTwoReferencesMatched) {
  Lexical lx;
  PairTable ref{pr("good", "service"), pr("good", "decor")};
  auto r = evaluate_explanations({predicted(0, 0, {pr("good", "service")})}, ref, lx.table,
                                 lx.lexicon, 0.8, true);
  EXPECT_EQ(r.scores.true_positives, 1u);
  EXPECT_NEAR(r.scores.recall, 0.5, 1e-9);
  EXPECT_NEAR(r.scores.precision, 1.0, 1e-9);
  EXPECT_NEAR(r.scores.f1, 2 * 0.5 * 1.0 / 1.5, 1e-9);
  EXPECT_NEAR(r.scores.f1, 0.6667, 1e-4);
}

TEST(EvaluateExplanations, PolarityPenaltyFlipsGoodBad) {
  Lexical lx;
  PairTable ref{pr("bad", "service")};
  auto p = predicted(0, 0, {pr("good", "service")});
  const double sim = plain_cosine(concat(lx.table, p.pairs[0]), concat(lx.table, ref[0]));
  EXPECT_NEAR(sim, 0.952, 5e-4);

  auto on = evaluate_explanations({p}, ref, lx.table, lx.lexicon, 0.8, true);
  EXPECT_EQ(on.scores.true_positives, 0u);
  EXPECT_DOUBLE_EQ(on.scores.f1, 0.0);
  ASSERT_EQ(on.decisions.size(), 1u);
  EXPECT_NEAR(on.decisions[0].best_similarity, sim, 1e-12);
  EXPECT_FALSE(on.decisions[0].polarity_ok);

  auto off = evaluate_explanations({p}, ref, lx.table, lx.lexicon, 0.8, false);
  EXPECT_EQ(off.scores.true_positives, 1u);
  EXPECT_NEAR(off.scores.f1, 1.0, 1e-9);
}

TEST(EvaluateExplanations, ReferencesScopedToTheirCell) {
  Lexical lx;
  PairTable ref{pr("good", "service", 0, 1), pr("good", "food", 1, 0)};
  auto r = evaluate_explanations({predicted(0, 0, {pr("good", "service")})}, ref, lx.table,
                                 lx.lexicon, 0.8, true);
  EXPECT_EQ(r.scores.true_positives, 0u);
  EXPECT_EQ(r.scores.reference, 0u);
  EXPECT_EQ(r.scores.cells, 1u);
}

TEST(EvaluateExplanations, UndefinedCellsAreExcluded) {
  Lexical lx;
  PairTable ref{pr("good", "service", 1, 1)};
  auto r = evaluate_explanations({predicted(0, 0, {}), predicted(1, 1, {pr("good", "service", 1, 1)})},
                                 ref, lx.table, lx.lexicon, 0.8, true);
  EXPECT_EQ(r.scores.undefined_cells, 1u);
  EXPECT_EQ(r.scores.cells, 1u);
  EXPECT_DOUBLE_EQ(r.scores.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.scores.macro_f1, 1.0);
}

TEST(EvaluateExplanations, RecallAboveOneIsFlaggedNotCapped) {
  Lexical lx;
  PairTable ref{pr("good", "service")};
  auto r = evaluate_explanations({predicted(0, 0, {pr("good", "service"), pr("tasty", "service")})},
                                 ref, lx.table, lx.lexicon, 0.8, true);
  EXPECT_EQ(r.scores.true_positives, 2u);
  EXPECT_DOUBLE_EQ(r.scores.recall, 2.0);
  EXPECT_TRUE(r.scores.recall_exceeds_one);
}

TEST(EvaluateExplanations, OovPairsStayInDenominators) {
  Lexical lx;
  PairTable ref{pr("good", "service"), pr("mystery", "service")};
  auto r = evaluate_explanations({predicted(0, 0, {pr("good", "service"), pr("good", "unknown")})},
                                 ref, lx.table, lx.lexicon, 0.8, false);
  EXPECT_EQ(r.scores.true_positives, 1u);
  EXPECT_DOUBLE_EQ(r.scores.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.scores.recall, 0.5);
}

// ---------------- randomized properties ----------------

TEST(ExplanationProperties, PenaltyNeverHelps) {
  std::mt19937_64 gen(2024);
  int strictly_lower = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto c = random_case(gen);
    auto on = evaluate_explanations(c.sets, c.reference, c.table, c.lexicon, 0.8, true).scores;
    auto off = evaluate_explanations(c.sets, c.reference, c.table, c.lexicon, 0.8, false).scores;
    EXPECT_LE(on.true_positives, off.true_positives);
    EXPECT_LE(on.precision, off.precision);
    EXPECT_LE(on.recall, off.recall);
    EXPECT_LE(on.f1, off.f1);
    EXPECT_EQ(on.true_positives, oracle_tp(c, 0.8, true));
    EXPECT_EQ(off.true_positives, oracle_tp(c, 0.8, false));
    strictly_lower += on.f1 < off.f1;
  }
  EXPECT_GT(strictly_lower, 0);  // the sets actually exercise the penalty
}

TEST(ExplanationProperties, HigherThresholdNeverAddsMatches) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_case(gen);
    std::size_t last = SIZE_MAX;
    for (double t : {0.0, 0.3, 0.6, 0.8, 0.9, 0.99}) {
      auto s = evaluate_explanations(c.sets, c.reference, c.table, c.lexicon, t, false).scores;
      EXPECT_LE(s.true_positives, last);
      last = s.true_positives;
    }
  }
}

TEST(ExplanationProperties, OrderInvariantAndF1Consistent) {
  std::mt19937_64 gen(19);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_case(gen);
    auto a = evaluate_explanations(c.sets, c.reference, c.table, c.lexicon, 0.8, true).scores;
    auto sets = c.sets;
    std::shuffle(sets.begin(), sets.end(), gen);
    for (auto& s : sets) std::shuffle(s.pairs.begin(), s.pairs.end(), gen);
    auto ref = c.reference;
    std::shuffle(ref.begin(), ref.end(), gen);
    auto b = evaluate_explanations(sets, ref, c.table, c.lexicon, 0.8, true).scores;
    EXPECT_EQ(a.true_positives, b.true_positives);
    EXPECT_NEAR(a.f1, b.f1, 1e-12);
    EXPECT_NEAR(a.macro_f1, b.macro_f1, 1e-12);
    if (a.precision + a.recall > 0) {
      EXPECT_NEAR(a.f1, 2 * a.precision * a.recall / (a.precision + a.recall), 1e-9);
    }
  }
}

// ---------------- cv_shards ----------------

TEST(CvShards, PartitionContract) {
  for (std::size_t n : {10u, 11u, 57u, 200u}) {
    auto shards = cv_shards(n, 10, 3);
    ASSERT_EQ(shards.size(), 10u);
    std::vector<std::size_t> all;
    std::size_t lo = n, hi = 0;
    for (const auto& s : shards) {
      all.insert(all.end(), s.begin(), s.end());
      lo = std::min(lo, s.size());
      hi = std::max(hi, s.size());
    }
    EXPECT_LE(hi - lo, 1u);
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> want(n);
    for (std::size_t k = 0; k < n; ++k) want[k] = k;
    EXPECT_EQ(all, want);
  }
  for (const auto& s : cv_shards(10, 10, 1)) EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(cv_shards(50, 5, 9), cv_shards(50, 5, 9));
  EXPECT_NE(cv_shards(50, 5, 9), cv_shards(50, 5, 10));
}

TEST(CvShards, Errors) {
  EXPECT_THROW(cv_shards(10, 1, 0), Error);
  try {
    cv_shards(9, 10, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_records);
  }
}

// ---------------- model comparison ----------------

namespace {

ModelConfigs quick_models() {
  ModelConfigs m;
  for (TrainConfig* c : {&m.ncf, &m.svd, &m.nmf}) {
    c->latent_dim = 4;
    c->epochs = 60;
    c->learning_rate = 0.01;
    c->batch_size = 8;
    c->hidden_units = 4;
  }
  // multiplicative updates are cheap; the ridge term would bias a constant fit
  m.nmf.epochs = 200;
  m.nmf.l2_reg = 0;
  m.knn.knn_k = 5;
  return m;
}

}  // namespace

TEST(CompareModels, ConstantRatingsAreFitByEveryModel) {
  std::vector<std::tuple<std::size_t, std::size_t, double>> train, test;
  for (std::size_t u = 0; u < 10; ++u)
    for (std::size_t i = 0; i < 8; ++i) ((u + i) % 4 ? train : test).emplace_back(u, i, 4.0);
  auto cmp = compare_models(dense_dataset(10, 8, train), dense_dataset(10, 8, test), quick_models());
  ASSERT_EQ(cmp.scores.size(), 4u);
  std::vector<std::string> names;
  for (const auto& s : cmp.scores) {
    names.push_back(s.model);
    EXPECT_LE(s.rmse, 0.05) << s.model;
    ASSERT_TRUE(s.warm_rmse);
  }
  EXPECT_EQ(names, (std::vector<std::string>{"ncf", "knn", "svd", "nmf"}));
  EXPECT_EQ(cmp.ncf_curve.size(), 60u);
}

TEST(CrossValidate, FoldsCoverRecordsAndSerialize) {
  std::vector<ReviewRecord> records;
  std::mt19937_64 gen(1);
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 5; ++i)
      records.push_back(record("u" + std::to_string(u), "p" + std::to_string(i), 1 + int(gen() % 5)));
  IdIndex users, pois;
  intern_records(records, users, pois);
  ExperimentInputs in{&records, &users, &pois, nullptr, nullptr, nullptr};
  ExperimentConfig cfg;
  cfg.models = quick_models();
  cfg.folds = 5;
  cfg.seed = 4;
  auto report = cross_validate(in, cfg);
  EXPECT_EQ(report.mode, "cv");
  ASSERT_EQ(report.folds.size(), 5u);
  std::size_t tested = 0;
  for (const auto& f : report.folds) {
    EXPECT_EQ(f.train_size + f.test_size, records.size());
    EXPECT_EQ(f.rmse.size(), 4u);
    EXPECT_FALSE(f.explanations);
    tested += f.test_size;
  }
  EXPECT_EQ(tested, records.size());
  ASSERT_EQ(report.mean_rmse.size(), 4u);
  double sum = 0;
  for (const auto& f : report.folds) sum += f.rmse[0].rmse;
  EXPECT_NEAR(report.mean_rmse[0].rmse, sum / 5, 1e-12);

  auto j = to_json(report);
  EXPECT_EQ(j["rmse"].size(), 4u);
  EXPECT_TRUE(j["explanations"].empty());
  std::ostringstream csv;
  write_report_csv(csv, report);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "model,metric,fold,value");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 6u * 4 * 2);  // mean + 5 folds, 4 models, rmse + warm_rmse

  auto again = cross_validate(in, cfg);
  EXPECT_EQ(to_json(again).dump(), j.dump());
}

TEST(MeanScores, F1RecomputedFromMeans) {
  PrfScores a, b;
  a.precision = 1, a.recall = 0.2, a.f1 = f1_score(1, 0.2);
  b.precision = 0.2, b.recall = 1, b.f1 = f1_score(0.2, 1);
  auto m = detail::mean_scores({&a, &b});
  EXPECT_DOUBLE_EQ(m.precision, 0.6);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f1, 0.6, 1e-12);
}
