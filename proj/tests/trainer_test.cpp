#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace scenerank;
using scenerank::testing::make_record;

namespace {

// Store/matrix where the image vector for a scene s is exactly o * w(o, s).
struct Fixture {
  EmbeddingStore store{2};
  WeightMatrix w{"home", {"stove"}, {"kitchen", "office"}, 1.0};
  Fixture(Vector kitchen, Vector office) {
    store.add_object("stove", {1, 0});
    store.add_scene("kitchen", std::move(kitchen));
    store.add_scene("office", std::move(office));
  }
};

}  // namespace

TEST(HingeLoss, MarginSatisfied) {
  // cos(pos) = 1, cos(neg) = 0
  Fixture f({1, 0}, {0, 1});
  const auto ex = make_example(make_record("a", {"stove"}, {{"kitchen", 0.5}, {"office", 0.5}}, "kitchen"));
  EXPECT_EQ(hinge_loss(f.store, f.w, ex, 0.1), 0.0);
  EXPECT_TRUE(gradients(f.store, f.w, ex, 0.1).empty());
}

TEST(HingeLoss, DirectArithmetic) {
  // cos(pos) = 0.2, cos(neg) = 0.5 with stove = [1, 0]
  const double c1 = 0.2, c2 = 0.5;
  Fixture f({c1, std::sqrt(1 - c1 * c1)}, {c2, std::sqrt(1 - c2 * c2)});
  const auto ex = make_example(make_record("a", {"stove"}, {{"kitchen", 0.5}, {"office", 0.5}}, "kitchen"));
  EXPECT_NEAR(hinge_loss(f.store, f.w, ex, 0.1), 0.4, 1e-12);
}

TEST(HingeLoss, DegenerateImageVectorCountsAsZeroCosine) {
  Fixture f({1, 0}, {1, 0});
  f.w.at(0, 0) = 0.0;  // positive image vector vanishes
  const auto ex = make_example(make_record("a", {"stove"}, {{"kitchen", 0.5}, {"office", 0.5}}, "kitchen"));
  EXPECT_NEAR(hinge_loss(f.store, f.w, ex, 0.1), 1.1, 1e-12);
}

TEST(HingeLoss, MatchesLiteralFormulaAndIsNonnegative) {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto ex = make_example(inst.record);
    const double margin = rng.uniform(0.01, 1.0);
    const double loss = hinge_loss(inst.store, inst.w, ex, margin);
    EXPECT_NEAR(loss, oracle::ref_hinge(inst.store, inst.w, ex, margin), 1e-12);
    EXPECT_GE(loss, 0.0);
  }
}

TEST(MakeExample, NegativesAreTheOtherCandidates) {
  auto ex = make_example(make_record("a", {}, {{"a", .5}, {"b", .3}, {"c", .2}}, "b"));
  EXPECT_EQ(ex.positive, "b");
  EXPECT_EQ(ex.negatives, (std::vector<std::string>{"a", "c"}));
  ex = make_example(make_record("a", {}, {{"a", .5}, {"c", .2}}, "z"));
  EXPECT_EQ(ex.negatives.size(), 2u);
  EXPECT_THROW(make_example(make_record("a", {}, {{"a", 1}})), ValidationError);
}

TEST(Gradients, MatchFiniteDifferences) {
  Rng rng(123);
  int checked_configs = 0;
  int attempts = 0;
  while (checked_configs < 100 && attempts < 10000) {
    ++attempts;
    auto inst = oracle::random_instance(rng, false);
    const auto ex = make_example(inst.record);
    const double margin = rng.uniform(0.1, 1.0);
    if (ex.negatives.empty() || hinge_loss(inst.store, inst.w, ex, margin) <= 0.0) continue;
    if (oracle::kink_distance(inst.store, inst.w, ex, margin) < 1e-3) continue;
    std::size_t n = 0;
    const auto bad = oracle::check_gradients(inst.store, inst.w, ex, margin, &n);
    EXPECT_GT(n, 0u);
    for (const auto& m : bad) {
      ADD_FAILURE() << m.parameter << " analytic " << m.analytic << " numeric " << m.numeric;
    }
    ++checked_configs;
  }
  EXPECT_EQ(checked_configs, 100);
}

TEST(Gradients, InactiveExampleIsExactlyZero) {
  Fixture f({1, 0}, {0, 1});
  const auto ex = make_example(make_record("a", {"stove"}, {{"kitchen", 0.5}, {"office", 0.5}}, "kitchen"));
  const auto g = gradients(f.store, f.w, ex, 0.5);
  EXPECT_TRUE(g.empty());
}

TEST(Gradients, ScaledSceneVectorShrinksItsGradient) {
  Rng rng(8);
  int done = 0;
  while (done < 20) {
    auto inst = oracle::random_instance(rng, false);
    const auto ex = make_example(inst.record);
    if (ex.negatives.empty() || hinge_loss(inst.store, inst.w, ex, 0.5) <= 0.0) continue;
    if (oracle::kink_distance(inst.store, inst.w, ex, 0.5) < 1e-3) continue;
    const auto j = *inst.store.scenes().find(ex.positive);
    const double before = hinge_loss(inst.store, inst.w, ex, 0.5);
    const auto g1 = gradients(inst.store, inst.w, ex, 0.5);
    for (auto& x : inst.store.scenes()[j]) x *= 2.0;
    EXPECT_NEAR(hinge_loss(inst.store, inst.w, ex, 0.5), before, 1e-12);
    const auto g2 = gradients(inst.store, inst.w, ex, 0.5);
    for (std::size_t d = 0; d < inst.store.dim(); ++d) {
      EXPECT_NEAR(g2.scenes.at(j)[d], g1.scenes.at(j)[d] / 2.0, 1e-12);
    }
    // weight gradients do not depend on the scene vector's scale
    for (const auto& [key, v] : g1.weights) EXPECT_NEAR(g2.weights.at(key), v, 1e-12);
    EXPECT_TRUE(oracle::check_gradients(inst.store, inst.w, ex, 0.5).empty());
    ++done;
  }
}

namespace {

struct SynthModel {
  EmbeddingStore store;
  WeightMatrix w;
  std::vector<TrainingExample> examples;
};

SynthModel synth_model(std::size_t n_train) {
  SynthConfig sc;
  sc.n_train = n_train;
  sc.n_test = 10;
  sc.dim = 16;
  const auto ds = generate_synthetic(sc);
  auto w = init_tfidf(build_corpus(ds.train, ds.taxonomy, "synth"));
  auto store = build_store(ds.embeddings, w.object_labels(), ds.scene_labels);
  std::vector<TrainingExample> ex;
  for (const auto& r : ds.train) ex.push_back(make_example(r));
  return {std::move(store), std::move(w), std::move(ex)};
}

}  // namespace

TEST(Train, ZeroLossFixedPoint) {
  Fixture f({1, 0}, {0, 1});
  std::vector<TrainingExample> ex(3, make_example(make_record("a", {"stove"}, {{"kitchen", .5}, {"office", .5}}, "kitchen")));
  const auto store0 = f.store.objects()[0];
  const auto scenes0 = f.store.scenes()[1];
  const auto w0 = f.w;
  TrainerConfig tc;
  tc.weight_decay = 0.1;
  const auto rep = train(f.store, f.w, ex, tc);
  for (const auto& e : rep.epochs) {
    EXPECT_EQ(e.mean_loss, 0.0);
    EXPECT_EQ(e.max_abs_delta, 0.0);
  }
  EXPECT_EQ(f.store.objects()[0], store0);
  EXPECT_EQ(f.store.scenes()[1], scenes0);
  EXPECT_EQ(f.w, w0);
}

TEST(Train, LossDecreasesAndWeightsStayNonnegative) {
  auto m = synth_model(400);
  TrainerConfig tc;
  tc.seed = 7;
  tc.epochs = 6;
  const auto rep = train(m.store, m.w, m.examples, tc);
  ASSERT_EQ(rep.epochs.size(), 6u);
  EXPECT_LT(rep.epochs[5].mean_loss, rep.epochs[0].mean_loss);
  for (double v : m.w.values()) EXPECT_GE(v, 0.0);
}

TEST(Train, DeterministicForSeed) {
  auto a = synth_model(200);
  auto b = synth_model(200);
  TrainerConfig tc;
  tc.seed = 99;
  tc.epochs = 3;
  train(a.store, a.w, a.examples, tc);
  train(b.store, b.w, b.examples, tc);
  EXPECT_EQ(a.w, b.w);
  for (std::size_t i = 0; i < a.store.objects().size(); ++i) EXPECT_EQ(a.store.objects()[i], b.store.objects()[i]);
  for (std::size_t j = 0; j < a.store.scenes().size(); ++j) EXPECT_EQ(a.store.scenes()[j], b.store.scenes()[j]);
}

TEST(Train, FrozenGroupsAreUntouched) {
  auto m = synth_model(200);
  const auto w0 = m.w;
  std::vector<Vector> objects0;
  for (std::size_t i = 0; i < m.store.objects().size(); ++i) objects0.push_back(m.store.objects()[i]);
  TrainerConfig tc;
  tc.epochs = 2;
  tc.freeze_weights = true;
  tc.freeze_objects = true;
  train(m.store, m.w, m.examples, tc);
  EXPECT_EQ(m.w, w0);
  for (std::size_t i = 0; i < objects0.size(); ++i) EXPECT_EQ(m.store.objects()[i], objects0[i]);

  auto n = synth_model(200);
  std::vector<Vector> scenes0;
  for (std::size_t j = 0; j < n.store.scenes().size(); ++j) scenes0.push_back(n.store.scenes()[j]);
  tc.freeze_weights = false;
  tc.freeze_objects = false;
  tc.freeze_scenes = true;
  train(n.store, n.w, n.examples, tc);
  for (std::size_t j = 0; j < scenes0.size(); ++j) EXPECT_EQ(n.store.scenes()[j], scenes0[j]);
}

TEST(Train, DoesNotMutateExamples) {
  auto m = synth_model(100);
  const auto copy = m.examples;
  TrainerConfig tc;
  tc.epochs = 1;
  train(m.store, m.w, m.examples, tc);
  for (std::size_t k = 0; k < copy.size(); ++k) EXPECT_EQ(copy[k].record, m.examples[k].record);
}

TEST(Train, RejectsBadInputs) {
  auto m = synth_model(20);
  TrainerConfig tc;
  EXPECT_THROW(train(m.store, m.w, {}, tc), ValidationError);
  tc.margin = 0.0;
  EXPECT_THROW(train(m.store, m.w, m.examples, tc), ValidationError);
  tc = {};
  tc.learning_rate = -1;
  EXPECT_THROW(train(m.store, m.w, m.examples, tc), ValidationError);

  WeightMatrix other("synth", {"zzz"}, m.w.scene_labels());
  EXPECT_THROW(train(m.store, other, m.examples, TrainerConfig{}), ValidationError);
}

TEST(Train, NonFiniteAborts) {
  Fixture f({1, 0}, {0.5, 0.5});
  f.store.objects()[0][0] = std::numeric_limits<double>::infinity();
  std::vector<TrainingExample> ex{make_example(make_record("bad-img", {"stove"}, {{"kitchen", .5}, {"office", .5}}, "kitchen"))};
  try {
    train(f.store, f.w, ex, TrainerConfig{});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("bad-img"), std::string::npos);
  }
}

TEST(TrainingReport, Json) {
  TrainingReport rep;
  rep.epochs.push_back({0, 0.5, 0.25});
  EXPECT_EQ(rep.to_json().dump(), R"({"epochs":[{"epoch":0,"mean_loss":0.5,"max_abs_delta":0.25}]})");
}
