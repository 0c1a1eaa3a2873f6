#include <random>

#include <gtest/gtest.h>

#include "fbe/recall.hpp"
#include "oracles.hpp"

namespace fbe {
namespace {

LabeledTriplet lt(ClassId s, PredicateId p, ClassId o, BoundingBox sb = {0, 0, 10, 10},
                  BoundingBox ob = {20, 20, 30, 30}) {
  return {s, sb, p, o, ob};
}

EvalConfig cfg(std::size_t x, std::size_t k, double thr = 0.5) { return {x, k, thr}; }

TEST(Recall, GroundTruthAsPredictionsScoresOne) {
  std::vector<ImageGroundTruth> gt{{"a", {lt(0, 1, 2), lt(1, 0, 2, {1, 1, 5, 5})}}, {"b", {lt(3, 3, 3)}}};
  std::vector<PredictionSet> preds;
  for (const auto& g : gt) {
    PredictionSet ps{g.image_id, {}};
    for (const auto& t : g.triplets) ps.candidates.push_back({t, 1.0});
    preds.push_back(ps);
  }
  for (Task task : {Task::predicate_classification, Task::relationship_detection}) {
    const auto r = recall_at_x(cfg(100, 1), gt, preds, task);
    EXPECT_DOUBLE_EQ(r.recall, 1.0);
    EXPECT_DOUBLE_EQ(r.pooled_recall, 1.0);
    EXPECT_EQ(r.images_evaluated, 2u);
  }
}

TEST(Recall, NoPredictionsScoresZeroAndEmptyImagesAreSkipped) {
  std::vector<ImageGroundTruth> gt{{"a", {lt(0, 1, 2)}}, {"empty", {}}};
  const auto r = recall_at_x(cfg(100, 70), gt, {}, Task::predicate_classification);
  EXPECT_DOUBLE_EQ(r.recall, 0.0);
  EXPECT_EQ(r.images_evaluated, 1u);
  EXPECT_EQ(recall_at_x(cfg(100, 70), {}, {}, Task::predicate_classification).images_evaluated, 0u);
}

TEST(Recall, OneOfThree) {
  const auto a = lt(0, 0, 1), b = lt(0, 1, 1, {40, 40, 50, 50}), c = lt(2, 2, 1);
  std::vector<ImageGroundTruth> gt{{"img", {a, b, c}}};
  auto wrong = b;
  wrong.predicate = 2;
  std::vector<PredictionSet> preds{{"img", {{a, 0.9}, {wrong, 0.8}}}};
  const auto r = recall_at_x(cfg(100, 70), gt, preds, Task::predicate_classification);
  EXPECT_NEAR(r.recall, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(oracle::recall(gt, preds, 70, 100, Task::predicate_classification, 0.5), 1.0 / 3.0, 1e-15);
}

TEST(Recall, MeanPerImageVersusPooled) {
  std::vector<ImageGroundTruth> gt{{"a", {lt(0, 0, 1)}}, {"b", {lt(0, 0, 1), lt(0, 1, 1), lt(0, 2, 1)}}};
  std::vector<PredictionSet> preds{{"a", {{lt(0, 0, 1), 1.0}}}};
  const auto r = recall_at_x(cfg(100, 3), gt, preds, Task::predicate_classification);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.pooled_recall, 0.25);
  ASSERT_EQ(r.per_image.size(), 2u);
  EXPECT_EQ(r.per_image[1].total, 3u);
}

TEST(Recall, UnknownImageIsAnError) {
  std::vector<ImageGroundTruth> gt{{"a", {lt(0, 0, 1)}}};
  std::vector<PredictionSet> preds{{"zzz", {{lt(0, 0, 1), 1.0}}}};
  EXPECT_THROW(recall_at_x(cfg(100, 1), gt, preds, Task::predicate_classification), InputError);
}

TEST(Recall, CutoffXKeepsHighestScores) {
  std::vector<ImageGroundTruth> gt{{"a", {lt(0, 0, 1)}}};
  std::vector<PredictionSet> preds{{"a", {{lt(0, 0, 1), 0.2}, {lt(5, 0, 1), 0.9}}}};
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(1, 1), gt, preds, Task::predicate_classification).recall, 0.0);
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(2, 1), gt, preds, Task::predicate_classification).recall, 1.0);
}

TEST(Recall, PerPairBudgetTruncates) {
  // Same pair, the correct predicate ranks second for that pair.
  std::vector<ImageGroundTruth> gt{{"a", {lt(0, 1, 1)}}};
  std::vector<PredictionSet> preds{{"a", {{lt(0, 0, 1), 0.6}, {lt(0, 1, 1), 0.3}, {lt(0, 2, 1), 0.1}}}};
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(100, 1), gt, preds, Task::predicate_classification).recall, 0.0);
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(100, 2), gt, preds, Task::predicate_classification).recall, 1.0);
}

TEST(Recall, TruncationTiesGoToLowerPredicate) {
  const std::vector<Candidate> c{{lt(0, 3, 1), 0.5}, {lt(0, 1, 1), 0.5}, {lt(0, 2, 1), 0.5}};
  const auto kept = truncate_per_pair(c, 2);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].triplet.predicate, 1u);
  EXPECT_EQ(kept[1].triplet.predicate, 2u);
}

TEST(Recall, DuplicateCandidateMatchesOnlyOnce) {
  std::vector<ImageGroundTruth> gt{{"a", {lt(0, 0, 1), lt(0, 0, 1, {0, 0, 10, 10}, {21, 21, 31, 31})}}};
  std::vector<PredictionSet> preds{{"a", {{lt(0, 0, 1), 0.9}, {lt(0, 0, 1), 0.8}}}};
  const auto r = recall_at_x(cfg(100, 70), gt, preds, Task::relationship_detection);
  // Both candidates overlap both truths above 0.5; each takes one.
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(100, 70), gt, preds, Task::predicate_classification).recall, 0.5);
}

TEST(Recall, DetectionUsesIouThreshold) {
  std::vector<ImageGroundTruth> gt{{"a", {lt(0, 0, 1, {0, 0, 10, 10}, {20, 20, 30, 30})}}};
  // Subject IoU = 50/150 = 1/3.
  std::vector<PredictionSet> preds{{"a", {{lt(0, 0, 1, {5, 0, 15, 10}, {20, 20, 30, 30}), 1.0}}}};
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(100, 1, 0.5), gt, preds, Task::relationship_detection).recall, 0.0);
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(100, 1, 0.3), gt, preds, Task::relationship_detection).recall, 1.0);
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(100, 1, 0.3), gt, preds, Task::predicate_classification).recall, 0.0);
}

TEST(Recall, DetectionPicksBestOverlap) {
  const BoundingBox o{20, 20, 30, 30};
  // The first candidate equals g1 but also clears the threshold on g0 (IoU 2/3). Taking
  // the best overlap leaves g0 for the second candidate, which cannot reach g1.
  const auto g0 = lt(0, 0, 1, {0, 0, 10, 10}, o), g1 = lt(0, 0, 1, {2, 0, 12, 10}, o);
  std::vector<ImageGroundTruth> gt{{"a", {g0, g1}}};
  std::vector<PredictionSet> preds{{"a", {{g1, 0.9}, {lt(0, 0, 1, {-2, 0, 8, 10}, o), 0.8}}}};
  EXPECT_DOUBLE_EQ(recall_at_x(cfg(100, 70), gt, preds, Task::relationship_detection).recall, 1.0);
}

TEST(EvalConfigTest, Validate) {
  EXPECT_NO_THROW(cfg(100, 70).validate(70));
  EXPECT_THROW(cfg(100, 71).validate(70), InputError);
  EXPECT_THROW(cfg(0, 1).validate(70), InputError);
  EXPECT_THROW(cfg(1, 0).validate(70), InputError);
  EXPECT_THROW(cfg(1, 1, 0.0).validate(70), InputError);
}

// Recall is not monotone in k once X binds: a larger k lets a higher-scoring wrong
// candidate displace a correct one from the top X.
TEST(RecallMonotonicity, KCounterexampleWhenXBinds) {
  const BoundingBox a1{0, 0, 10, 10}, a2{20, 20, 30, 30}, b1{50, 50, 60, 60}, b2{70, 70, 80, 80};
  std::vector<ImageGroundTruth> gt{{"img", {lt(0, 0, 1, a1, a2)}}};
  std::vector<PredictionSet> preds{{"img",
                                    {{lt(0, 0, 1, a1, a2), 0.5},
                                     {lt(2, 1, 3, b1, b2), 0.9},
                                     {lt(2, 2, 3, b1, b2), 0.6}}}};
  const auto k1 = recall_at_x(cfg(2, 1), gt, preds, Task::predicate_classification).recall;
  const auto k2 = recall_at_x(cfg(2, 2), gt, preds, Task::predicate_classification).recall;
  EXPECT_DOUBLE_EQ(k1, 1.0);
  EXPECT_DOUBLE_EQ(k2, 0.0);
}

struct Micro {
  std::vector<ImageGroundTruth> gt;
  std::vector<PredictionSet> preds;
  std::size_t candidates = 0;
};

Micro micro_instance(std::mt19937_64& gen) {
  const BoundingBox boxes[] = {{0, 0, 10, 10}, {1, 0, 11, 10}, {30, 30, 40, 40}, {0, 0, 8, 10}};
  auto rb = [&] { return boxes[gen() % 4]; };
  Micro m;
  const std::size_t images = 1 + gen() % 3;
  for (std::size_t i = 0; i < images; ++i) {
    const std::string id = "m" + std::to_string(i);
    ImageGroundTruth g{id, {}};
    for (std::size_t t = gen() % 4; t > 0; --t)
      g.triplets.push_back(lt(static_cast<ClassId>(gen() % 2), static_cast<PredicateId>(gen() % 3),
                              static_cast<ClassId>(gen() % 2), rb(), rb()));
    PredictionSet ps{id, {}};
    for (std::size_t c = gen() % 8; c > 0; --c) {
      LabeledTriplet t;
      if (!g.triplets.empty() && gen() % 2) {
        t = g.triplets[gen() % g.triplets.size()];
        if (gen() % 3 == 0) t.subject_box = rb();
        if (gen() % 4 == 0) t.predicate = static_cast<PredicateId>(gen() % 3);
      } else {
        t = lt(static_cast<ClassId>(gen() % 2), static_cast<PredicateId>(gen() % 3),
               static_cast<ClassId>(gen() % 2), rb(), rb());
      }
      // Coarse scores so ties are common.
      ps.candidates.push_back({t, static_cast<double>(gen() % 4) / 4.0});
    }
    m.candidates = std::max(m.candidates, ps.candidates.size());
    m.gt.push_back(std::move(g));
    m.preds.push_back(std::move(ps));
  }
  return m;
}

TEST(RecallOracle, RandomMicroInstances) {
  std::mt19937_64 gen(99);
  for (int i = 0; i < 400; ++i) {
    const auto m = micro_instance(gen);
    for (Task task : {Task::predicate_classification, Task::relationship_detection})
      for (std::size_t x : {1u, 2u, 5u, 100u})
        for (std::size_t k : {1u, 2u, 3u}) {
          const double got = recall_at_x(cfg(x, k), m.gt, m.preds, task).recall;
          const double want = oracle::recall(m.gt, m.preds, k, x, task, 0.5);
          ASSERT_DOUBLE_EQ(got, want) << "instance " << i << " x=" << x << " k=" << k << " " << to_string(task);
        }
  }
}

TEST(RecallMonotonicity, NonDecreasingInXAndInKWhenXCoversAll) {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 400; ++i) {
    const auto m = micro_instance(gen);
    for (Task task : {Task::predicate_classification, Task::relationship_detection}) {
      for (std::size_t k : {1u, 2u, 3u}) {
        double prev = 0.0;
        for (std::size_t x = 1; x <= 9; ++x) {
          const double r = recall_at_x(cfg(x, k), m.gt, m.preds, task).recall;
          EXPECT_GE(r, prev);
          prev = r;
        }
      }
      double prev = 0.0;
      for (std::size_t k = 1; k <= 3; ++k) {
        const double r = recall_at_x(cfg(m.candidates + 1, k), m.gt, m.preds, task).recall;
        EXPECT_GE(r, prev);
        prev = r;
      }
    }
  }
}

Scene zs_scene(const std::string& id, std::vector<RelationshipTriplet> triplets) {
  return Scene{id, 100.0, 100.0, {{0, {0, 0, 10, 10}}, {1, {20, 20, 30, 30}}, {2, {50, 50, 60, 60}}}, triplets};
}

TEST(ZeroShot, SplitByUnseenType) {
  const std::vector<Scene> train{zs_scene("t0", {{0, 0, 1}, {1, 1, 2}})};
  const std::vector<Scene> test{zs_scene("e0", {{0, 0, 1}, {0, 1, 1}}), zs_scene("e1", {{2, 0, 0}, {2, 0, 0}})};
  const auto z = zero_shot_split(train, test);
  EXPECT_EQ(z.seen, (std::vector<TripletRef>{{0, 0}}));
  EXPECT_EQ(z.zero_shot, (std::vector<TripletRef>{{0, 1}, {1, 0}, {1, 1}}));
  EXPECT_EQ(z.zero_shot_types, 2u);
  EXPECT_EQ(z.seen_types, 1u);
  EXPECT_EQ(z.mask[0], (std::vector<bool>{false, true}));

  const auto gt = ground_truth(test, &z.mask);
  EXPECT_EQ(gt[0].triplets.size(), 1u);
  EXPECT_EQ(gt[1].triplets.size(), 2u);
}

TEST(ZeroShot, IdenticalSplitsHaveNone) {
  const std::vector<Scene> s{zs_scene("a", {{0, 0, 1}, {2, 1, 0}})};
  const auto z = zero_shot_split(s, s);
  EXPECT_TRUE(z.zero_shot.empty());
  EXPECT_EQ(z.seen.size(), 2u);
  EXPECT_EQ(zero_shot_split({}, s).zero_shot.size(), 2u);
}

TEST(Candidates, CountIsPairsTimesK) {
  const auto scene = zs_scene("a", {});
  const RelationshipFeaturizer fz{FeatureProvider::geometric(), {3, 0.9}, true};
  const auto model = zero_model(fz.width(), {4}, 5);
  for (std::size_t k : {1u, 3u, 5u, 9u}) {
    const auto ps = predict_scene(model, fz, scene, k);
    EXPECT_EQ(ps.candidates.size(), 3u * 2u * std::min<std::size_t>(k, 5));
  }
  EXPECT_THROW(build_predictions_predicate_task(zero_model(3, {}, 5), fz, {scene}, cfg(100, 1)), InputError);
}

TEST(Candidates, DetectionScoresMultiplyConfidences) {
  const RelationshipFeaturizer fz{FeatureProvider::geometric(), {3, 0.9}, true};
  const auto model = zero_model(fz.width(), {}, 4);
  const std::vector<Scene> scenes{Scene{"a", 100.0, 100.0, {}, {}}, Scene{"none", 100.0, 100.0, {}, {}}};
  DetectionMap dets{{"a", {{0, 0.5, {0, 0, 10, 10}}, {2, 0.8, {20, 20, 40, 40}}}}};
  const auto preds = build_predictions_detection_task(model, fz, scenes, dets, cfg(100, 2));
  ASSERT_EQ(preds.size(), 2u);
  ASSERT_EQ(preds[0].candidates.size(), 4u);
  for (const auto& c : preds[0].candidates) EXPECT_DOUBLE_EQ(c.score, 0.25 * 0.5 * 0.8);
  EXPECT_EQ(preds[0].candidates[0].triplet.subject_class, 0u);
  EXPECT_EQ(preds[0].candidates[0].triplet.object_box, (BoundingBox{20, 20, 40, 40}));
  EXPECT_TRUE(preds[1].candidates.empty());
}

TEST(FileFormats, DetectionsRoundTripAndValidation) {
  DetectionMap d{{"x", {{1, 0.25, {0, 0, 1, 2}}}}, {"y", {{0, 1.0, {3, 3, 4, 4}}, {2, 0.1, {0, 0, 5, 5}}}}};
  EXPECT_EQ(parse_detections(serialize_detections(d), "mem", 3), d);
  EXPECT_THROW(parse_detections(serialize_detections(d), "mem", 2), ValidationError);
  EXPECT_THROW(parse_detections("#fbe-detections v1\nx 0 1.5 0 0 1 1\n", "mem", 3), ValidationError);
  EXPECT_THROW(parse_detections("#fbe-detections v1\nx 0 0.5 2 0 1 1\n", "mem", 3), ValidationError);
  EXPECT_THROW(parse_detections("#fbe-detections v1\nx 0 0.5 0 0 1\n", "mem", 3), FormatError);
  EXPECT_THROW(parse_detections("x 0 0.5 0 0 1 1\n", "mem", 3), FormatError);
}

TEST(FileFormats, PredictionsRoundTrip) {
  std::vector<PredictionSet> sets{{"a", {{lt(0, 1, 2), 0.1 / 3.0}, {lt(4, 0, 1, {1.5, 2, 3, 4}), 1.0}}},
                                  {"b", {{lt(1, 1, 1), 0.5}}}};
  const auto text = serialize_predictions(sets, {{"k", "70"}});
  EXPECT_EQ(text.rfind("#fbe-predictions v1 k=70\n", 0), 0u);
  const auto back = parse_predictions(text, "mem");
  ASSERT_EQ(back.size(), 2u);
  ASSERT_EQ(back[0].candidates.size(), 2u);
  EXPECT_EQ(back[0].candidates[0].triplet, sets[0].candidates[0].triplet);
  EXPECT_EQ(back[0].candidates[0].score, sets[0].candidates[0].score);
  EXPECT_EQ(back[0].candidates[1].triplet.subject_box, (BoundingBox{1.5, 2, 3, 4}));
  EXPECT_THROW(parse_predictions("#fbe-predictions v1\na 0 0 0 1 1 0\n", "mem"), FormatError);
  EXPECT_THROW(parse_predictions("#fbe-predictions v1\na 0 0 0 1 1 0 1 0 0 1 1 nan\n", "mem"), ValidationError);
}

}  // namespace
}  // namespace fbe
