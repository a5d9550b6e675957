#include <gtest/gtest.h>

#include <algorithm>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace scenerank;
using scenerank::testing::make_record;

namespace {

// kitchen=[1,0], office=[0,1]; stove=[1,0], table=[0,1].
EmbeddingStore two_d_store() {
  EmbeddingStore store(2);
  store.add_object("stove", {1, 0});
  store.add_object("table", {0, 1});
  store.add_scene("kitchen", {1, 0});
  store.add_scene("office", {0, 1});
  return store;
}

}  // namespace

TEST(ImageVector, SingleTermAndEmpty) {
  const auto store = two_d_store();
  WeightMatrix w("home", {"stove", "table"}, {"kitchen", "office"}, 1.0);
  EXPECT_EQ(compute_image_vector(store, w, {"stove"}, "kitchen"), (Vector{1, 0}));
  EXPECT_EQ(compute_image_vector(store, w, {}, "kitchen"), (Vector{0, 0}));
  EXPECT_THROW(compute_image_vector(store, w, {"stove"}, "garage"), ValidationError);
}

TEST(ImageVector, TfIdfWeightsFromWorkedExample) {
  const auto store = two_d_store();
  WeightMatrix w("home", {"stove", "table"}, {"kitchen", "office"});
  w.at(0, 0) = (2.0 / 3.0) * (std::log(1.5) + 1.0);
  w.at(1, 0) = 1.0 / 3.0;
  const auto v = compute_image_vector(store, w, {"stove", "table"}, "kitchen");
  // Independent evaluation: [0.93697673873877618, 0.33333333333333331]
  EXPECT_NEAR(v[0], 0.93697673873877618, 1e-12);
  EXPECT_NEAR(v[1], 0.33333333333333331, 1e-12);
}

TEST(ImageVector, SetSemanticsAndUnknownObjects) {
  const auto store = two_d_store();
  WeightMatrix w("home", {"stove", "table"}, {"kitchen", "office"}, 1.0);
  EXPECT_EQ(compute_image_vector(store, w, {"stove", "stove", "ghost"}, "kitchen"), (Vector{1, 0}));
  EXPECT_EQ(select_objects(store, w, {"stove", "ghost", "ghost"}).unknown, 2u);
}

TEST(Rerank, HandTracedExample) {
  const auto store = two_d_store();
  WeightMatrix w("home", {"stove", "table"}, {"kitchen", "office"}, 1.0);
  const auto r = make_record("x", {"stove"}, {{"office", 0.6}, {"kitchen", 0.4}});
  const auto res = rerank(store, w, r);
  ASSERT_EQ(res.refined.size(), 2u);
  EXPECT_FALSE(res.fallback_used);
  EXPECT_EQ(res.refined[0].label, "kitchen");
  EXPECT_NEAR(res.refined[0].similarity, 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(res.refined[1].similarity, 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(res.refined[0].score, 0.26666666666666666, 1e-9);
  EXPECT_NEAR(res.refined[1].score, 0.19999999999999998, 1e-9);
  EXPECT_EQ(res.refined[0].raw_rank, 1u);
  EXPECT_EQ(res.refined[1].raw_rank, 0u);
}

TEST(Rerank, EmptyObjectsFallBackToClassifierOrder) {
  const auto store = two_d_store();
  WeightMatrix w("home", {"stove", "table"}, {"kitchen", "office"}, 1.0);
  const auto res = rerank(store, w, make_record("x", {}, {{"office", 0.3}, {"kitchen", 0.7}}));
  EXPECT_TRUE(res.fallback_used);
  // uniform similarity: order follows combined = confidence / n
  EXPECT_EQ(res.refined[0].label, "kitchen");
  EXPECT_DOUBLE_EQ(res.refined[0].similarity, 0.5);
}

TEST(Rerank, FallbackKeepsCnnOrderForDecreasingConfidences) {
  const auto store = two_d_store();
  WeightMatrix w("home", {"stove", "table"}, {"kitchen", "office"}, 0.0);  // all weights zero
  const auto res = rerank(store, w, make_record("x", {"stove"}, {{"office", 0.6}, {"kitchen", 0.4}}));
  EXPECT_TRUE(res.fallback_used);
  EXPECT_EQ(res.refined[0].label, "office");
  EXPECT_EQ(res.refined[1].label, "kitchen");
}

TEST(Rerank, TiesBreakByRawRank) {
  const auto store = two_d_store();
  WeightMatrix w("home", {"stove", "table"}, {"kitchen", "office"}, 1.0);
  // One stove + one table: both scenes get cosine sqrt(2)/2, equal confidence.
  const auto res = rerank(store, w, make_record("x", {"stove", "table"}, {{"office", 0.5}, {"kitchen", 0.5}}));
  EXPECT_EQ(res.refined[0].label, "office");
  EXPECT_EQ(res.refined[1].label, "kitchen");
}

TEST(Rerank, MatchesOracleOnRandomInstances) {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto res = rerank(inst.store, inst.w, inst.record);
    const auto ref = oracle::ref_rerank(inst.store, inst.w, inst.record);
    ASSERT_EQ(res.refined.size(), ref.labels.size());
    EXPECT_EQ(res.fallback_used, ref.fallback);
    for (std::size_t k = 0; k < ref.labels.size(); ++k) {
      EXPECT_EQ(res.refined[k].label, ref.labels[k]) << "trial " << trial;
      EXPECT_NEAR(res.refined[k].score, ref.scores[k], 1e-9);
      EXPECT_NEAR(res.refined[k].similarity, ref.similarity[k], 1e-9);
    }
  }
}

TEST(Rerank, Invariants) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto res = rerank(inst.store, inst.w, inst.record);

    // permutation
    std::vector<std::string> in, out;
    for (const auto& c : inst.record.top5) in.push_back(c.label);
    for (const auto& c : res.refined) out.push_back(c.label);
    std::sort(in.begin(), in.end());
    std::sort(out.begin(), out.end());
    EXPECT_EQ(in, out);

    // non-increasing scores, similarity simplex
    double sum = 0;
    for (std::size_t k = 0; k < res.refined.size(); ++k) {
      if (k) {
        EXPECT_LE(res.refined[k].score, res.refined[k - 1].score);
      }
      EXPECT_GE(res.refined[k].similarity, 0.0);
      EXPECT_LE(res.refined[k].similarity, 1.0);
      sum += res.refined[k].similarity;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);

    // confidence scale invariance of the order
    auto scaled = inst.record;
    const double c = rng.uniform(0.01, 50.0);
    for (auto& cand : scaled.top5) cand.confidence *= c;
    const auto res2 = rerank(inst.store, inst.w, scaled);
    for (std::size_t k = 0; k < res.refined.size(); ++k) EXPECT_EQ(res.refined[k].label, res2.refined[k].label);

    // monotone dominance
    for (std::size_t a = 0; a < res.refined.size(); ++a) {
      for (std::size_t b = 0; b < res.refined.size(); ++b) {
        const auto& x = res.refined[a];
        const auto& y = res.refined[b];
        const bool dominates = x.confidence >= y.confidence && x.similarity >= y.similarity &&
                               (x.confidence > y.confidence || x.similarity > y.similarity);
        if (dominates && x.score > y.score) {
          EXPECT_LT(a, b);
        }
      }
    }

    // determinism
    EXPECT_EQ(res, rerank(inst.store, inst.w, inst.record));
  }
}

TEST(Rerank, ParallelMatchesSequential) {
  Rng rng(9);
  const auto inst = oracle::random_instance(rng, false);
  std::vector<ImageRecord> records;
  for (int k = 0; k < 97; ++k) {
    auto r = inst.record;
    r.image_id = "r" + std::to_string(k);
    r.top5.front().confidence = rng.uniform(0.01, 1.0);
    records.push_back(r);
  }
  EXPECT_EQ(rerank_all(inst.store, inst.w, records, 1), rerank_all(inst.store, inst.w, records, 4));
}
