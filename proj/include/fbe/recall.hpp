#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "fbe/errors.hpp"
#include "fbe/mlp.hpp"
#include "fbe/pair_features.hpp"
#include "fbe/scene.hpp"
#include "fbe/text_io.hpp"

namespace fbe {

enum class Task { predicate_classification, relationship_detection };

inline std::string to_string(Task t) {
  return t == Task::predicate_classification ? "predicate" : "reldet";
}

/// A fully resolved <subject, predicate, object> with classes and boxes.
struct LabeledTriplet {
  ClassId subject_class = 0;
  BoundingBox subject_box;
  PredicateId predicate = 0;
  ClassId object_class = 0;
  BoundingBox object_box;

  bool operator==(const LabeledTriplet&) const = default;
};

struct Candidate {
  LabeledTriplet triplet;
  double score = 0.0;
};

struct PredictionSet {
  std::string image_id;
  std::vector<Candidate> candidates;
};

struct ImageGroundTruth {
  std::string image_id;
  std::vector<LabeledTriplet> triplets;
};

struct EvalConfig {
  std::size_t recall_x = 100;
  std::size_t k = 70;
  double iou_threshold = 0.5;

  void validate(std::size_t num_predicates) const {
    if (recall_x < 1) throw InputError("recall cutoff X must be at least 1");
    if (k < 1 || k > num_predicates)
      throw InputError("per-pair budget k must lie in [1, " + std::to_string(num_predicates) +
                       "], got " + std::to_string(k));
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
      throw InputError("IoU threshold must lie in (0, 1]");
  }
};

struct TripletType {
  ClassId subject_class = 0;
  PredicateId predicate = 0;
  ClassId object_class = 0;
  auto operator<=>(const TripletType&) const = default;
};

inline TripletType triplet_type(const Scene& scene, const RelationshipTriplet& t) {
  return {scene.objects[t.subject_index].class_id, t.predicate_id,
          scene.objects[t.object_index].class_id};
}

inline LabeledTriplet resolve(const Scene& scene, const RelationshipTriplet& t) {
  const auto& s = scene.objects[t.subject_index];
  const auto& o = scene.objects[t.object_index];
  return {s.class_id, s.box, t.predicate_id, o.class_id, o.box};
}

/// Ground truth per scene. With `mask`, only triplets whose flag is set are kept.
inline std::vector<ImageGroundTruth> ground_truth(const std::vector<Scene>& scenes,
                                                  const std::vector<std::vector<bool>>* mask = nullptr) {
  std::vector<ImageGroundTruth> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ImageGroundTruth gt{scenes[i].image_id, {}};
    for (std::size_t t = 0; t < scenes[i].triplets.size(); ++t) {
      if (mask && !(*mask)[i][t]) continue;
      gt.triplets.push_back(resolve(scenes[i], scenes[i].triplets[t]));
    }
    out.push_back(std::move(gt));
  }
  return out;
}

namespace detail {

inline auto pair_key(const LabeledTriplet& t) {
  return std::tie(t.subject_class, t.subject_box, t.object_class, t.object_box);
}

/// Global ranking: score descending, then (subject class, predicate, object class,
/// subject box, object box) ascending.
inline bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  const auto& x = a.triplet;
  const auto& y = b.triplet;
  return std::tie(x.subject_class, x.predicate, x.object_class, x.subject_box, x.object_box) <
         std::tie(y.subject_class, y.predicate, y.object_class, y.subject_box, y.object_box);
}

}  // namespace detail

/// Keeps at most k candidates per (subject, object) pair: highest score, ties by predicate id.
inline std::vector<Candidate> truncate_per_pair(std::vector<Candidate> candidates, std::size_t k) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    const auto ka = detail::pair_key(a.triplet);
    const auto kb = detail::pair_key(b.triplet);
    if (ka != kb) return ka < kb;
    if (a.score != b.score) return a.score > b.score;
    return a.triplet.predicate < b.triplet.predicate;
  });
  std::vector<Candidate> out;
  out.reserve(candidates.size());
  std::size_t run = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i > 0 && detail::pair_key(candidates[i].triplet) == detail::pair_key(candidates[i - 1].triplet))
      ++run;
    else
      run = 0;
    if (run < k) out.push_back(candidates[i]);
  }
  return out;
}

inline bool triplet_matches(const LabeledTriplet& candidate, const LabeledTriplet& truth, Task task,
                            double iou_threshold) {
  if (candidate.subject_class != truth.subject_class || candidate.object_class != truth.object_class ||
      candidate.predicate != truth.predicate)
    return false;
  if (task == Task::predicate_classification)
    return candidate.subject_box == truth.subject_box && candidate.object_box == truth.object_box;
  return iou(candidate.subject_box, truth.subject_box) >= iou_threshold &&
         iou(candidate.object_box, truth.object_box) >= iou_threshold;
}

struct ImageRecall {
  std::string image_id;
  std::size_t matched = 0;
  std::size_t total = 0;
  double recall() const { return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0; }
};

struct RecallReport {
  double recall = 0.0;         // mean of per-image recalls
  double pooled_recall = 0.0;  // sum matched / sum ground truth
  std::size_t images_evaluated = 0;
  std::vector<ImageRecall> per_image;  // images with ground truth only, input order
};

/// Matched count for one image: truncate to k per pair, rank, keep the top X, then
/// match greedily in rank order. A candidate takes the unmatched ground truth it
/// overlaps best (min of the two IoUs), ties to the earliest ground truth.
inline std::size_t match_image(const EvalConfig& config, const std::vector<LabeledTriplet>& truth,
                               std::vector<Candidate> candidates, Task task) {
  auto kept = truncate_per_pair(std::move(candidates), config.k);
  std::sort(kept.begin(), kept.end(), detail::ranks_before);
  if (kept.size() > config.recall_x) kept.resize(config.recall_x);

  std::vector<bool> used(truth.size(), false);
  std::size_t matched = 0;
  for (const auto& c : kept) {
    std::size_t best = truth.size();
    double best_overlap = -1.0;
    for (std::size_t g = 0; g < truth.size(); ++g) {
      if (used[g] || !triplet_matches(c.triplet, truth[g], task, config.iou_threshold)) continue;
      const double overlap = std::min(iou(c.triplet.subject_box, truth[g].subject_box),
                                      iou(c.triplet.object_box, truth[g].object_box));
      if (overlap > best_overlap) {
        best = g;
        best_overlap = overlap;
      }
    }
    if (best < truth.size()) {
      used[best] = true;
      ++matched;
    }
  }
  return matched;
}

inline RecallReport recall_at_x(const EvalConfig& config, const std::vector<ImageGroundTruth>& truth,
                                const std::vector<PredictionSet>& predictions, Task task) {
  if (config.recall_x < 1 || config.k < 1) throw InputError("recall needs X >= 1 and k >= 1");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < truth.size(); ++i) index.emplace(truth[i].image_id, i);
  std::vector<std::vector<Candidate>> by_image(truth.size());
  for (const auto& ps : predictions) {
    auto it = index.find(ps.image_id);
    if (it == index.end())
      throw InputError("predictions reference unknown image '" + ps.image_id + "'");
    auto& dst = by_image[it->second];
    dst.insert(dst.end(), ps.candidates.begin(), ps.candidates.end());
  }

  RecallReport rep;
  std::size_t matched_sum = 0, total_sum = 0;
  double recall_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].triplets.empty()) continue;
    ImageRecall ir{truth[i].image_id, match_image(config, truth[i].triplets, std::move(by_image[i]), task),
                   truth[i].triplets.size()};
    matched_sum += ir.matched;
    total_sum += ir.total;
    recall_sum += ir.recall();
    rep.per_image.push_back(std::move(ir));
  }
  rep.images_evaluated = rep.per_image.size();
  if (rep.images_evaluated) {
    rep.recall = recall_sum / static_cast<double>(rep.images_evaluated);
    rep.pooled_recall = static_cast<double>(matched_sum) / static_cast<double>(total_sum);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Zero-shot split
// ---------------------------------------------------------------------------

struct TripletRef {
  std::size_t scene = 0;
  std::size_t triplet = 0;
  bool operator==(const TripletRef&) const = default;
};

struct ZeroShotSplit {
  std::vector<TripletRef> zero_shot;
  std::vector<TripletRef> seen;
  std::size_t zero_shot_types = 0;
  std::size_t seen_types = 0;
  /// mask[scene][triplet] is true for zero-shot test triplets.
  std::vector<std::vector<bool>> mask;
};

/// A test triplet is zero-shot iff its (subject class, predicate, object class) never
/// occurs in training.
inline ZeroShotSplit zero_shot_split(const std::vector<Scene>& train, const std::vector<Scene>& test) {
  std::set<TripletType> train_types;
  for (const auto& s : train)
    for (const auto& t : s.triplets) train_types.insert(triplet_type(s, t));

  ZeroShotSplit out;
  std::set<TripletType> zs_types, seen_types;
  out.mask.resize(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    out.mask[i].assign(test[i].triplets.size(), false);
    for (std::size_t t = 0; t < test[i].triplets.size(); ++t) {
      const auto type = triplet_type(test[i], test[i].triplets[t]);
      if (train_types.count(type)) {
        out.seen.push_back({i, t});
        seen_types.insert(type);
      } else {
        out.zero_shot.push_back({i, t});
        zs_types.insert(type);
        out.mask[i][t] = true;
      }
    }
  }
  out.zero_shot_types = zs_types.size();
  out.seen_types = seen_types.size();
  return out;
}

// ---------------------------------------------------------------------------
// Candidate generation
// ---------------------------------------------------------------------------

inline void check_model_width(const MlpModel& model, const RelationshipFeaturizer& featurizer) {
  if (model.input_width() != featurizer.width())
    throw InputError("model expects features of width " + std::to_string(model.input_width()) +
                     " but the featurizer produces " + std::to_string(featurizer.width()));
}

/// Scores the top-k predicates for every ordered pair of distinct objects in `scene`.
/// `confidence`, if non-empty, multiplies in per-object detection confidences.
inline PredictionSet predict_scene(const MlpModel& model, const RelationshipFeaturizer& featurizer,
                                   const Scene& scene, std::size_t k,
                                   const std::vector<double>& confidence = {}) {
  PredictionSet ps{scene.image_id, {}};
  const std::size_t n = scene.objects.size();
  if (n >= 2) ps.candidates.reserve(n * (n - 1) * std::min(k, model.output_width()));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < n; ++o) {
      if (s == o) continue;
      const auto feature = featurizer(scene, s, o);
      const double conf = confidence.empty() ? 1.0 : confidence[s] * confidence[o];
      for (const auto& sp : predict_topk(model, feature, k)) {
        const auto& so = scene.objects[s];
        const auto& oo = scene.objects[o];
        ps.candidates.push_back(
            {{so.class_id, so.box, sp.predicate, oo.class_id, oo.box}, sp.score * conf});
      }
    }
  }
  return ps;
}

inline std::vector<PredictionSet> build_predictions_predicate_task(
    const MlpModel& model, const RelationshipFeaturizer& featurizer,
    const std::vector<Scene>& scenes, const EvalConfig& config) {
  check_model_width(model, featurizer);
  std::vector<PredictionSet> out;
  out.reserve(scenes.size());
  for (const auto& scene : scenes) out.push_back(predict_scene(model, featurizer, scene, config.k));
  return out;
}

struct Detection {
  ClassId class_id = 0;
  double confidence = 1.0;
  BoundingBox box;
  bool operator==(const Detection&) const = default;
};

using DetectionMap = std::map<std::string, std::vector<Detection>>;

/// Pairs detected objects instead of annotated ones. Scores are
/// probability * subject confidence * object confidence. With file-backed pair features,
/// indices refer to detection order within the image.
inline std::vector<PredictionSet> build_predictions_detection_task(
    const MlpModel& model, const RelationshipFeaturizer& featurizer,
    const std::vector<Scene>& scenes, const DetectionMap& detections, const EvalConfig& config) {
  check_model_width(model, featurizer);
  std::vector<PredictionSet> out;
  out.reserve(scenes.size());
  for (const auto& scene : scenes) {
    Scene detected{scene.image_id, scene.image_width, scene.image_height, {}, {}};
    std::vector<double> conf;
    if (auto it = detections.find(scene.image_id); it != detections.end()) {
      for (const auto& d : it->second) {
        detected.objects.push_back({d.class_id, d.box});
        conf.push_back(d.confidence);
      }
    }
    out.push_back(predict_scene(model, featurizer, detected, config.k, conf));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detections file
//   #fbe-detections v1
//   <image_id> <class_id> <confidence> <x_min> <y_min> <x_max> <y_max>
// ---------------------------------------------------------------------------

inline DetectionMap parse_detections(const std::string& text, const std::string& source,
                                     std::size_t num_classes) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty detections file");
  FileHeader::parse(line, "fbe-detections", 1, source);
  DetectionMap out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (tok.size() != 7) throw FormatError(where + ": detection record needs 7 fields");
    Detection d;
    d.class_id = static_cast<ClassId>(parse_uint(tok[1], where));
    if (d.class_id >= num_classes) throw ValidationError(where + ": class id out of range");
    d.confidence = parse_double(tok[2], where);
    d.box = {parse_double(tok[3], where), parse_double(tok[4], where), parse_double(tok[5], where),
             parse_double(tok[6], where)};
    if (!d.box.valid()) throw ValidationError(where + ": invalid box");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
      throw ValidationError(where + ": confidence must lie in [0, 1]");
    out[std::string(tok[0])].push_back(d);
  }
  return out;
}

inline std::string serialize_detections(const DetectionMap& detections) {
  std::string out = FileHeader{"fbe-detections", 1, {}}.to_line() + "\n";
  for (const auto& [id, dets] : detections)
    for (const auto& d : dets)
      out += id + " " + std::to_string(d.class_id) + " " + format_double(d.confidence) + " " +
             format_double(d.box.x_min) + " " + format_double(d.box.y_min) + " " +
             format_double(d.box.x_max) + " " + format_double(d.box.y_max) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Prediction dump
//   #fbe-predictions v1 [k=..]
//   <image_id> <s_class> <s_x_min> <s_y_min> <s_x_max> <s_y_max> <predicate>
//              <o_class> <o_x_min> <o_y_min> <o_x_max> <o_y_max> <score>
// Externally produced candidates can be scored with this format.
// ---------------------------------------------------------------------------

inline std::string serialize_predictions(const std::vector<PredictionSet>& sets,
                                         std::map<std::string, std::string> header_fields = {}) {
  std::string out = FileHeader{"fbe-predictions", 1, std::move(header_fields)}.to_line() + "\n";
  auto box = [](const BoundingBox& b) {
    return format_double(b.x_min) + " " + format_double(b.y_min) + " " + format_double(b.x_max) +
           " " + format_double(b.y_max);
  };
  for (const auto& ps : sets)
    for (const auto& c : ps.candidates) {
      const auto& t = c.triplet;
      out += ps.image_id + " " + std::to_string(t.subject_class) + " " + box(t.subject_box) + " " +
             std::to_string(t.predicate) + " " + std::to_string(t.object_class) + " " +
             box(t.object_box) + " " + format_double(c.score) + "\n";
    }
  return out;
}

inline std::vector<PredictionSet> parse_predictions(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty predictions file");
  FileHeader::parse(line, "fbe-predictions", 1, source);
  std::vector<PredictionSet> out;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (tok.size() != 13) throw FormatError(where + ": prediction record needs 13 fields");
    auto num = [&](std::size_t i) { return parse_double(tok[i], where); };
    Candidate c;
    c.triplet.subject_class = static_cast<ClassId>(parse_uint(tok[1], where));
    c.triplet.subject_box = {num(2), num(3), num(4), num(5)};
    c.triplet.predicate = static_cast<PredicateId>(parse_uint(tok[6], where));
    c.triplet.object_class = static_cast<ClassId>(parse_uint(tok[7], where));
    c.triplet.object_box = {num(8), num(9), num(10), num(11)};
    c.score = num(12);
    if (!std::isfinite(c.score)) throw ValidationError(where + ": score must be finite");
    const std::string id(tok[0]);
    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) out.push_back({id, {}});
    out[it->second].candidates.push_back(c);
  }
  return out;
}

}  // namespace fbe
