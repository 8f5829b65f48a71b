#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "explirec/recommender.hpp"
#include "test_support.hpp"

using namespace explirec;
using explirec::testing::dense_dataset;

namespace {

using Triples = std::vector<std::tuple<std::size_t, std::size_t, double>>;

// Score table indexed by (user, poi); optionally passed through a transform.
struct TableModel {
  Matrix scores;
  double (*transform)(double) = nullptr;
  double predict(std::size_t u, std::size_t i) const {
    return transform ? transform(scores(u, i)) : scores(u, i);
  }
};

OpinionAspectPair pr(std::string o, std::string a, std::size_t user, std::size_t poi) {
  return {std::move(o), std::move(a), "r", user, poi};
}

std::set<std::pair<std::string, std::string>> keys(const PairTable& t) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& p : t) out.insert({p.opinion, p.aspect});
  return out;
}

}  // namespace

// ---------------- recommend_top_k ----------------

TEST(TopK, VisitedEverythingGivesEmptyList) {
  auto ds = dense_dataset(1, 3, {{0, 0, 4}, {0, 1, 2}, {0, 2, 5}});
  TableModel m{Matrix(1, 3, 1.0)};
  EXPECT_TRUE(recommend_top_k(m, ds, 0, 5).items.empty());
  EXPECT_THROW(recommend_top_k(m, ds, 0, 0), Error);
}

TEST(TopK, FewerCandidatesThanK) {
  auto ds = dense_dataset(1, 5, {{0, 0, 4}, {0, 3, 2}});
  TableModel m{Matrix(1, 5, 2.0)};
  auto r = recommend_top_k(m, ds, 0, 10);
  ASSERT_EQ(r.items.size(), 3u);
  // equal scores keep ascending poi order
  EXPECT_EQ(r.items[0].first, 1u);
  EXPECT_EQ(r.items[1].first, 2u);
  EXPECT_EQ(r.items[2].first, 4u);
}

TEST(TopK, MatchesExhaustiveScoring) {
  std::mt19937_64 gen(12);
  std::uniform_int_distribution<int> coarse(0, 6);  // coarse scores force ties
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t nu = 4, ni = 12;
    Triples obs;
    TableModel m{Matrix(nu, ni)};
    for (std::size_t u = 0; u < nu; ++u)
      for (std::size_t i = 0; i < ni; ++i) {
        m.scores(u, i) = 0.5 * coarse(gen);
        if (gen() % 3 == 0) obs.emplace_back(u, i, 3);
      }
    auto ds = dense_dataset(nu, ni, obs);
    for (std::size_t u = 0; u < nu; ++u) {
      const std::size_t k = 1 + gen() % ni;
      // oracle: repeatedly take the best remaining unvisited poi
      std::vector<std::pair<std::size_t, double>> want;
      std::vector<bool> used(ni, false);
      for (std::size_t i = 0; i < ni; ++i) used[i] = ds.has_observation(u, i);
      while (want.size() < k) {
        std::size_t best = ni;
        for (std::size_t i = 0; i < ni; ++i)
          if (!used[i] && (best == ni || m.scores(u, i) > m.scores(u, best))) best = i;
        if (best == ni) break;
        used[best] = true;
        want.emplace_back(best, m.scores(u, best));
      }
      EXPECT_EQ(recommend_top_k(m, ds, u, k).items, want);
    }
  }
}

TEST(TopK, InvariantUnderMonotoneTransform) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> s(1, 5);
  TableModel a{Matrix(3, 20)};
  for (auto& x : a.scores.values()) x = s(gen);
  TableModel b = a;
  b.transform = [](double x) { return std::exp(2 * x) - 7; };
  auto ds = dense_dataset(3, 20, {{0, 3, 1}, {1, 0, 2}, {2, 19, 5}});
  for (std::size_t u = 0; u < 3; ++u) {
    auto ra = recommend_top_k(a, ds, u, 8), rb = recommend_top_k(b, ds, u, 8);
    ASSERT_EQ(ra.items.size(), rb.items.size());
    for (std::size_t r = 0; r < ra.items.size(); ++r) EXPECT_EQ(ra.items[r].first, rb.items[r].first);
  }
}

// ---------------- top_similar_users ----------------

TEST(SimilarUsers, BruteForceCosineOrder) {
  Matrix e(5, 3);
  const double rows[5][3] = {{1, 2, 0}, {0.5, 1, 0.1}, {-1, 0, 1}, {2, 1, 0}, {1, 2, 0.01}};
  for (std::size_t u = 0; u < 5; ++u)
    for (std::size_t c = 0; c < 3; ++c) e(u, c) = rows[u][c];
  Triples obs;
  for (std::size_t u = 0; u < 5; ++u) obs.emplace_back(u, 0, 3);
  auto ds = dense_dataset(5, 2, obs);

  std::vector<std::pair<double, std::size_t>> oracle;
  for (std::size_t v = 1; v < 5; ++v) {
    double d = 0, a = 0, b = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      d += rows[0][c] * rows[v][c];
      a += rows[0][c] * rows[0][c];
      b += rows[v][c] * rows[v][c];
    }
    oracle.emplace_back(-d / std::sqrt(a * b), v);
  }
  std::sort(oracle.begin(), oracle.end());
  std::vector<std::size_t> want;
  for (auto [s, v] : oracle) want.push_back(v);
  EXPECT_EQ(top_similar_users(e, 0, 10, 0, ds), want);
  want.resize(2);
  EXPECT_EQ(top_similar_users(e, 0, 2, 0, ds), want);
}

TEST(SimilarUsers, OnlyReviewersOfThePoi) {
  Matrix e(4, 2, 1.0);
  e(3, 0) = 3;  // identical direction to nobody, still a candidate if it reviewed
  auto ds = dense_dataset(4, 2, {{0, 0, 3}, {1, 1, 3}, {2, 0, 4}, {3, 0, 5}});
  auto got = top_similar_users(e, 0, 10, 0, ds);
  EXPECT_EQ(got, (std::vector<std::size_t>{2, 3}));
  EXPECT_TRUE(top_similar_users(e, 1, 10, 1, ds).empty());
}

TEST(SimilarUsers, IdenticalEmbeddingRanksFirst) {
  Matrix e(4, 2);
  e(0, 0) = 0.3, e(0, 1) = -0.7;
  e(1, 0) = 1, e(1, 1) = 0;
  e(2, 0) = 0.3, e(2, 1) = -0.7;
  e(3, 0) = 0.31, e(3, 1) = -0.7;
  auto ds = dense_dataset(4, 1, {{0, 0, 3}, {1, 0, 3}, {2, 0, 3}, {3, 0, 3}});
  auto got = top_similar_users(e, 0, 1, 0, ds);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], 2u);
}

TEST(SimilarUsers, ZeroTargetIsAnError) {
  Matrix e(2, 2, 1.0);
  e(0, 0) = e(0, 1) = 0;
  auto ds = dense_dataset(2, 1, {{1, 0, 3}});
  try {
    top_similar_users(e, 0, 3, 0, ds);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::zero_vector);
  }
}

// ---------------- median_pair_count ----------------

namespace {

PairTable groups_of(const std::vector<std::size_t>& sizes) {
  PairTable t;
  for (std::size_t g = 0; g < sizes.size(); ++g)
    for (std::size_t k = 0; k < sizes[g]; ++k) t.push_back(pr("a", "b", g, g % 3));
  return t;
}

}  // namespace

TEST(Median, SmallExamples) {
  EXPECT_EQ(median_pair_count(groups_of({1, 2, 3})), 2u);
  EXPECT_EQ(median_pair_count(groups_of({3, 1, 2})), 2u);
  EXPECT_EQ(median_pair_count(groups_of({2, 4})), 2u);
  EXPECT_THROW(median_pair_count({}), Error);
}

TEST(Median, MatchesSortOracle) {
  std::mt19937_64 gen(77);
  std::vector<std::size_t> sizes(101);
  for (auto& s : sizes) s = 1 + gen() % 9;
  auto sorted = sizes;
  std::sort(sorted.begin(), sorted.end());
  auto t = groups_of(sizes);
  std::shuffle(t.begin(), t.end(), gen);
  EXPECT_EQ(median_pair_count(t), sorted[50]);
}

// ---------------- explanation sampling ----------------

namespace {

// One POI (0) reviewed by users 0..3; user 1 wrote `pool` distinct pairs.
struct SamplingFixture {
  InteractionDataset ds = dense_dataset(4, 2, {{0, 0, 3}, {1, 0, 4}, {2, 0, 2}, {3, 1, 5}});
  Matrix emb;
  PairTable table;
  explicit SamplingFixture(std::size_t pool) : emb(4, 2) {
    emb(0, 0) = 1, emb(1, 0) = 1, emb(2, 1) = 1, emb(3, 0) = 1;
    for (std::size_t k = 0; k < pool; ++k) table.push_back(pr("op" + std::to_string(k), "asp", 1, 0));
    table.push_back(pr("target", "own", 0, 0));
    table.push_back(pr("far", "user", 2, 0));
    table.push_back(pr("other", "poi", 3, 1));
  }
};

}  // namespace

TEST(Explain, PoolOfExactlyMReturnsEverything) {
  SamplingFixture f(4);
  PairIndex idx(f.table);
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    auto e = generate_explanation(0, 0, f.emb, f.ds, idx, 1, 4, seed);
    EXPECT_EQ(e.source, ExplanationSource::similar_users);
    EXPECT_EQ(e.seed, seed);
    EXPECT_EQ(keys(e.pairs).size(), 4u);
    EXPECT_FALSE(e.empty_pool);
    for (const auto& p : e.pairs) EXPECT_EQ(p.user_idx, 1u);
  }
}

TEST(Explain, EmptyPoolIsFlaggedAndMZeroRejected) {
  SamplingFixture f(0);
  PairIndex idx(f.table);
  auto e = generate_explanation(0, 0, f.emb, f.ds, idx, 1, 3, 5);
  EXPECT_TRUE(e.pairs.empty());
  EXPECT_TRUE(e.empty_pool);
  EXPECT_THROW(generate_explanation(0, 0, f.emb, f.ds, idx, 1, 0, 5), Error);
  EXPECT_THROW(random_baseline_explanation(0, 0, idx, 0, 5), Error);
}

TEST(Explain, DuplicatesCollapseBeforeSampling) {
  SamplingFixture f(2);
  f.table.push_back(pr("op0", "asp", 1, 0));
  f.table.push_back(pr("op0", "asp", 1, 0));
  PairIndex idx(f.table);
  auto e = generate_explanation(0, 0, f.emb, f.ds, idx, 1, 10, 3);
  EXPECT_EQ(e.pairs.size(), 2u);
  EXPECT_EQ(keys(e.pairs).size(), 2u);
}

TEST(Explain, DeterministicAndUniform) {
  SamplingFixture f(10);
  PairIndex idx(f.table);
  auto a = generate_explanation(0, 0, f.emb, f.ds, idx, 1, 3, 42);
  auto b = generate_explanation(0, 0, f.emb, f.ds, idx, 1, 3, 42);
  EXPECT_EQ(a.pairs, b.pairs);
  EXPECT_EQ(a.pairs.size(), 3u);

  const int runs = 10000;
  std::map<std::string, int> hits;
  for (int s = 0; s < runs; ++s)
    for (const auto& p : generate_explanation(0, 0, f.emb, f.ds, idx, 1, 3, 1000 + s).pairs)
      ++hits[p.opinion];
  ASSERT_EQ(hits.size(), 10u);
  const double p = 0.3, sigma = std::sqrt(runs * p * (1 - p));
  for (auto& [word, n] : hits) EXPECT_NEAR(n, runs * p, 3 * sigma) << word;
}

TEST(Explain, FrequencyWeightedSamplingFavoursCommonPairs) {
  SamplingFixture f(2);
  for (int k = 0; k < 8; ++k) f.table.push_back(pr("op0", "asp", 1, 0));
  PairIndex idx(f.table);
  SamplingOptions weighted{true};
  int first = 0;
  for (int s = 0; s < 2000; ++s) {
    auto e = generate_explanation(0, 0, f.emb, f.ds, idx, 1, 1, s, weighted);
    ASSERT_EQ(e.pairs.size(), 1u);
    first += e.pairs[0].opinion == "op0";
  }
  // op0 carries 9 of 10 occurrences
  EXPECT_NEAR(first / 2000.0, 0.9, 0.03);
}

TEST(Explain, NeverUsesTheTargetsOwnReviews) {
  SamplingFixture f(3);
  PairIndex idx(f.table);
  for (std::size_t k : {1u, 2u, 3u, 10u})
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      for (const auto& p : generate_explanation(0, 0, f.emb, f.ds, idx, k, 10, seed).pairs) {
        EXPECT_NE(p.user_idx, 0u);
        EXPECT_EQ(p.poi_idx, 0u);
      }
}

TEST(Baseline, PoolCoversEveryReviewerOfThePoi) {
  SamplingFixture f(3);
  PairIndex idx(f.table);
  auto base = random_baseline_explanation(0, 0, idx, 100, 1);
  EXPECT_EQ(base.source, ExplanationSource::random_baseline);
  // includes the target's own and the dissimilar user's pairs, never another poi's
  EXPECT_EQ(keys(base.pairs).size(), 5u);
  for (std::size_t k : {1u, 2u, 3u}) {
    auto method = generate_explanation(0, 0, f.emb, f.ds, idx, k, 100, 1);
    auto b = keys(base.pairs), m = keys(method.pairs);
    EXPECT_TRUE(std::includes(b.begin(), b.end(), m.begin(), m.end()));
  }
}

TEST(Baseline, SinglePairPoolAndEmptyPoi) {
  PairTable t{pr("good", "food", 2, 1)};
  PairIndex idx(t);
  auto e = random_baseline_explanation(0, 1, idx, 5, 9);
  ASSERT_EQ(e.pairs.size(), 1u);
  EXPECT_EQ(e.pairs[0].opinion, "good");
  auto none = random_baseline_explanation(0, 0, idx, 5, 9);
  EXPECT_TRUE(none.empty_pool);
}

TEST(Explain, JsonLinesFormat) {
  IdIndex users, pois;
  users.intern("alice");
  pois.intern("cafe");
  ExplanationSet e{0, 0, {pr("good", "coffee", 1, 0), pr("cozy", "patio", 1, 0)},
                   ExplanationSource::random_baseline, 17, false};
  std::ostringstream out;
  write_explanations_jsonl(out, {e}, users, pois);
  EXPECT_EQ(out.str(),
            "{\"user_id\":\"alice\",\"poi_id\":\"cafe\",\"source\":\"random_baseline\",\"seed\":17,"
            "\"pairs\":[[\"good\",\"coffee\"],[\"cozy\",\"patio\"]]}\n");
}
