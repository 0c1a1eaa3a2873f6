#include <random>

#include <gtest/gtest.h>

#include "fbe/scene.hpp"

namespace fbe {
namespace {

TEST(BoxCenter, Examples) {
  EXPECT_EQ(box_center({0, 0, 10, 10}), (Point{5, 5}));
  EXPECT_EQ(box_center({2, 4, 2, 8}), (Point{2, 6}));
  EXPECT_EQ(box_center({1, 1, 4, 9}), (Point{2.5, 5}));
}

TEST(UnionBox, Examples) {
  EXPECT_EQ(union_box({0, 0, 1, 1}, {2, 2, 3, 3}), (BoundingBox{0, 0, 3, 3}));
  EXPECT_EQ(union_box({0, 0, 5, 5}, {1, 1, 2, 2}), (BoundingBox{0, 0, 5, 5}));
  EXPECT_EQ(union_box({0, 3, 4, 8}, {2, 1, 6, 5}), (BoundingBox{0, 1, 6, 8}));
}

TEST(EuclideanDistance, Examples) {
  EXPECT_DOUBLE_EQ(euclidean_distance({0, 0}, {3, 4}), 5.0);
  EXPECT_DOUBLE_EQ(euclidean_distance({7, 2}, {7, 2}), 0.0);
  EXPECT_DOUBLE_EQ(euclidean_distance({1, 1}, {4, 5}), 5.0);
}

TEST(Iou, Examples) {
  EXPECT_DOUBLE_EQ(iou({1, 2, 5, 9}, {1, 2, 5, 9}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {5, 5, 6, 6}), 0.0);
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 0, 3, 2}), 1.0 / 3.0, 1e-15);
  // Touching edges share no area.
  EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {1, 0, 2, 1}), 0.0);
  // Zero-area union is defined as 0.
  EXPECT_DOUBLE_EQ(iou({3, 3, 3, 3}, {3, 3, 3, 3}), 0.0);
}

BoundingBox random_box(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> pos(-50, 50), ext(0, 40);
  const double x = pos(gen), y = pos(gen);
  return {x, y, x + ext(gen), y + ext(gen)};
}

TEST(GeometryProperties, RandomBoxes) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_box(gen), b = random_box(gen);
    EXPECT_EQ(union_box(a, b), union_box(b, a));
    EXPECT_EQ(union_box(a, a), a);
    const auto u = union_box(a, b);
    EXPECT_LE(u.x_min, std::min(a.x_min, b.x_min));
    EXPECT_GE(u.x_max, std::max(a.x_max, b.x_max));
    EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
    EXPECT_GE(iou(a, b), 0.0);
    EXPECT_LE(iou(a, b), 1.0);
    if (a.area() > 0) {
      EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    }

    const Point p = box_center(a), q = box_center(b), r = box_center(random_box(gen));
    EXPECT_LE(euclidean_distance(p, r), euclidean_distance(p, q) + euclidean_distance(q, r) + 1e-12);
    EXPECT_DOUBLE_EQ(euclidean_distance(p, q), euclidean_distance(q, p));
  }
}

TEST(SceneValidate, RejectsBrokenTriplets) {
  const Vocabulary vocab{{"a", "b"}, {"p"}};
  Scene s{"img", 10.0, 10.0, {{0, {0, 0, 1, 1}}, {1, {1, 1, 2, 2}}}, {{0, 0, 1}}};
  EXPECT_NO_THROW(s.validate(vocab));

  auto bad = s;
  bad.triplets[0].object_index = 0;
  EXPECT_THROW(bad.validate(vocab), ValidationError);
  bad = s;
  bad.triplets[0].object_index = 5;
  EXPECT_THROW(bad.validate(vocab), ValidationError);
  bad = s;
  bad.triplets[0].predicate_id = 1;
  EXPECT_THROW(bad.validate(vocab), ValidationError);
  bad = s;
  bad.objects[1].class_id = 2;
  EXPECT_THROW(bad.validate(vocab), ValidationError);
  bad = s;
  bad.objects[1].box = {3, 0, 1, 1};
  EXPECT_THROW(bad.validate(vocab), ValidationError);
}

TEST(SceneValidate, BoxesOutsideImageAreAccepted) {
  const Vocabulary vocab{{"a", "b"}, {"p"}};
  Scene s{"img", 10.0, 10.0, {{0, {-5, -5, 20, 30}}, {1, {1, 1, 2, 2}}}, {{0, 0, 1}}};
  EXPECT_NO_THROW(s.validate(vocab));
  EXPECT_EQ(s.objects[0].box, (BoundingBox{-5, -5, 20, 30}));
}

TEST(VocabularyValidate, DuplicatesAndEmpty) {
  EXPECT_NO_THROW((Vocabulary{{"a"}, {"p"}}).validate());
  EXPECT_THROW((Vocabulary{{}, {"p"}}).validate(), ValidationError);
  EXPECT_THROW((Vocabulary{{"a"}, {}}).validate(), ValidationError);
  EXPECT_THROW((Vocabulary{{"a", "a"}, {"p"}}).validate(), ValidationError);
}

}  // namespace
}  // namespace fbe
