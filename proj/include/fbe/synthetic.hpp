#pragma once

// Synthetic scenes where the predicate between a fixed subject/object class pair is
// decided only by which cue object appears in the background. Pair geometry is drawn
// independently of the predicate, so box features alone cannot beat chance.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fbe/ingest.hpp"
#include "fbe/mlp.hpp"
#include "fbe/scene.hpp"

namespace fbe {

struct BackgroundCueConfig {
  std::size_t train_images = 300;
  std::size_t test_images = 300;
  std::size_t max_distractors = 3;
  double image_size = 100.0;
  std::uint64_t seed = 1;
};

/// Classes: 0 person, 1 horse, 2 fodder, 3 barrier, 4.. distractors.
/// Predicates: 0 ride (no cue), 1 feed (fodder present), 2 lead (barrier present).
inline Vocabulary background_cue_vocabulary() {
  return {{"person", "horse", "fodder", "barrier", "tree", "sky", "grass", "fence", "hat", "car"},
          {"ride", "feed", "lead"}};
}

namespace detail {

inline BoundingBox random_box(Rng& rng, double size) {
  const double w = rng.uniform(0.1, 0.5) * size;
  const double h = rng.uniform(0.1, 0.5) * size;
  const double x = rng.uniform(0.0, size - w);
  const double y = rng.uniform(0.0, size - h);
  // Integer corners keep centers and distances exact under translation.
  return {std::floor(x), std::floor(y), std::floor(x + w), std::floor(y + h)};
}

inline Scene background_cue_scene(Rng& rng, const BackgroundCueConfig& cfg, std::size_t idx,
                                  const char* prefix) {
  const auto vocab_size = background_cue_vocabulary().num_object_classes();
  Scene s;
  s.image_id = std::string(prefix) + std::to_string(idx);
  s.image_width = cfg.image_size;
  s.image_height = cfg.image_size;
  s.objects.push_back({0, random_box(rng, cfg.image_size)});
  s.objects.push_back({1, random_box(rng, cfg.image_size)});
  const auto predicate = static_cast<PredicateId>(rng.below(3));
  if (predicate == 1) s.objects.push_back({2, random_box(rng, cfg.image_size)});
  if (predicate == 2) s.objects.push_back({3, random_box(rng, cfg.image_size)});
  const auto distractors = rng.below(cfg.max_distractors + 1);
  for (std::uint64_t d = 0; d < distractors; ++d)
    s.objects.push_back({static_cast<ClassId>(4 + rng.below(vocab_size - 4)),
                         random_box(rng, cfg.image_size)});
  s.triplets.push_back({0, predicate, 1});
  return s;
}

}  // namespace detail

inline Dataset make_background_cue_dataset(const BackgroundCueConfig& cfg) {
  Rng rng(cfg.seed);
  Dataset ds;
  ds.vocabulary = background_cue_vocabulary();
  for (std::size_t i = 0; i < cfg.train_images; ++i)
    ds.train.scenes.push_back(detail::background_cue_scene(rng, cfg, i, "train_"));
  for (std::size_t i = 0; i < cfg.test_images; ++i)
    ds.test.scenes.push_back(detail::background_cue_scene(rng, cfg, i, "test_"));
  return ds;
}

}  // namespace fbe
