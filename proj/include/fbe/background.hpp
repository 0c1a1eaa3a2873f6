#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fbe/errors.hpp"
#include "fbe/fofe.hpp"
#include "fbe/scene.hpp"

namespace fbe {

inline constexpr double kDefaultForgettingFactor = 0.9;

struct FbeConfig {
  std::size_t num_classes = 1;
  double forgetting_factor = kDefaultForgettingFactor;

  void validate() const {
    if (num_classes < 1) throw InputError("background encoding needs at least one class");
    if (!(forgetting_factor > 0.0 && forgetting_factor < 1.0))
      throw InputError("forgetting factor must lie strictly between 0 and 1, got " +
                       std::to_string(forgetting_factor));
  }
};

using FbeVector = std::vector<double>;

struct BackgroundEntry {
  std::size_t object_index = 0;
  ClassId class_id = 0;
  double distance = 0.0;
  bool operator==(const BackgroundEntry&) const = default;
};

using OrderedBackground = std::vector<BackgroundEntry>;

namespace detail {

inline void check_pair(const Scene& scene, std::size_t subject_index, std::size_t object_index) {
  if (subject_index >= scene.objects.size() || object_index >= scene.objects.size())
    throw InputError("image '" + scene.image_id + "': pair (" + std::to_string(subject_index) +
                     ", " + std::to_string(object_index) + ") out of range for " +
                     std::to_string(scene.objects.size()) + " objects");
  if (subject_index == object_index)
    throw InputError("image '" + scene.image_id + "': subject and object index are both " +
                     std::to_string(subject_index));
}

}  // namespace detail

/// Every object other than the pair, sorted by distance from its box center to the
/// center of the pair's union box. Ties: class id, then annotation order.
inline OrderedBackground order_background(const Scene& scene, std::size_t subject_index,
                                          std::size_t object_index) {
  detail::check_pair(scene, subject_index, object_index);
  const Point anchor = box_center(
      union_box(scene.objects[subject_index].box, scene.objects[object_index].box));

  OrderedBackground out;
  out.reserve(scene.objects.size() - 2);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (i == subject_index || i == object_index) continue;
    const auto& obj = scene.objects[i];
    out.push_back({i, obj.class_id, euclidean_distance(box_center(obj.box), anchor)});
  }
  std::sort(out.begin(), out.end(), [](const BackgroundEntry& a, const BackgroundEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    return a.object_index < b.object_index;
  });
  return out;
}

/// Encodes from already-resolved classes: marks subject and object classes with 1
/// (set, so a shared class yields a single 1), then adds rho^i for the i-th background
/// class, i counted from 1.
inline FbeVector fbe_encode_classes(const FbeConfig& config, ClassId subject_class,
                                    ClassId object_class, std::span<const ClassId> background) {
  config.validate();
  FbeVector b(config.num_classes, 0.0);
  auto check = [&](ClassId c) {
    if (c >= config.num_classes)
      throw InputError("class id " + std::to_string(c) + " outside encoding length " +
                       std::to_string(config.num_classes));
  };
  check(subject_class);
  check(object_class);
  b[subject_class] = 1.0;
  b[object_class] = 1.0;
  double weight = 1.0;
  for (ClassId c : background) {
    check(c);
    weight *= config.forgetting_factor;
    b[c] += weight;
  }
  return b;
}

inline FbeVector fbe_encode(const FbeConfig& config, const Scene& scene, std::size_t subject_index,
                            std::size_t object_index) {
  const auto order = order_background(scene, subject_index, object_index);
  std::vector<ClassId> classes;
  classes.reserve(order.size());
  for (const auto& e : order) classes.push_back(e.class_id);
  return fbe_encode_classes(config, scene.objects[subject_index].class_id,
                            scene.objects[object_index].class_id, classes);
}

/// Sum of rho^i for i > m: (rho / (1 - rho)) * rho^m.
inline double tail_mass(double rho, unsigned m) {
  if (!(rho > 0.0 && rho < 1.0))
    throw InputError("tail mass needs 0 < rho < 1, got " + std::to_string(rho));
  return rho / (1.0 - rho) * std::pow(rho, static_cast<double>(m));
}

/// The class sequence an encoding is built from: (c_s, c_o, background classes by rank).
struct ClassSequenceKey {
  ClassId subject_class = 0;
  ClassId object_class = 0;
  std::vector<ClassId> background;

  /// Subject and object are marked identically, so the encoding cannot tell them apart.
  /// The canonical key orders the endpoint pair; background order is kept.
  ClassSequenceKey canonical() const {
    ClassSequenceKey k = *this;
    if (k.object_class < k.subject_class) std::swap(k.subject_class, k.object_class);
    return k;
  }

  std::string to_string() const {
    std::string s = "s=" + std::to_string(subject_class) + " o=" + std::to_string(object_class) +
                    " bg=[";
    for (std::size_t i = 0; i < background.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(background[i]);
    }
    return s + "]";
  }

  bool operator==(const ClassSequenceKey&) const = default;
  auto operator<=>(const ClassSequenceKey&) const = default;
};

inline ClassSequenceKey class_sequence_key(const Scene& scene, std::size_t subject_index,
                                           std::size_t object_index) {
  const auto order = order_background(scene, subject_index, object_index);
  ClassSequenceKey key{scene.objects[subject_index].class_id,
                       scene.objects[object_index].class_id, {}};
  key.background.reserve(order.size());
  for (const auto& e : order) key.background.push_back(e.class_id);
  return key;
}

struct Collision {
  ClassSequenceKey first;
  ClassSequenceKey second;
  double distance = 0.0;
};

struct UniquenessReport {
  std::size_t encodings_seen = 0;
  std::size_t distinct_keys = 0;
  /// Distinct ordered keys that differ only by swapping subject and object classes.
  std::size_t swapped_endpoint_pairs = 0;
  std::vector<Collision> collisions;
  bool unique() const { return collisions.empty(); }
};

/// Collects (key, vector) pairs and reports distinct keys whose vectors agree within the
/// max-norm tolerance. Keys are compared in canonical form (see ClassSequenceKey).
class UniquenessVerifier {
 public:
  explicit UniquenessVerifier(std::size_t length, double tolerance = kEncodingTolerance)
      : length_(length), tolerance_(tolerance) {
    if (!(tolerance > 0.0)) throw InputError("uniqueness tolerance must be positive");
  }

  void add(const ClassSequenceKey& key, FbeVector vector) {
    if (vector.size() != length_)
      throw InputError("encoding of length " + std::to_string(vector.size()) + ", expected " +
                       std::to_string(length_));
    ++seen_;
    ordered_keys_.insert(key);
    entries_.try_emplace(key.canonical(), std::move(vector));
  }

  UniquenessReport report() const {
    UniquenessReport rep;
    rep.encodings_seen = seen_;
    rep.distinct_keys = entries_.size();
    for (const auto& key : ordered_keys_) {
      if (key.subject_class < key.object_class) {
        ClassSequenceKey swapped = key;
        std::swap(swapped.subject_class, swapped.object_class);
        if (ordered_keys_.count(swapped)) ++rep.swapped_endpoint_pairs;
      }
    }

    // Vectors within tolerance t in max-norm have projections within t * sum(w) on any
    // nonnegative direction w, so a sweep over sorted projections finds every pair.
    std::vector<double> weights(length_);
    for (std::size_t i = 0; i < length_; ++i) weights[i] = std::sqrt(static_cast<double>(i) + 2.0);
    const double weight_sum = std::accumulate(weights.begin(), weights.end(), 0.0);

    struct Projected {
      double value;
      const ClassSequenceKey* key;
      const FbeVector* vec;
    };
    std::vector<Projected> items;
    items.reserve(entries_.size());
    for (const auto& [key, vec] : entries_) {
      double p = 0.0;
      for (std::size_t i = 0; i < length_; ++i) p += weights[i] * vec[i];
      items.push_back({p, &key, &vec});
    }
    std::sort(items.begin(), items.end(),
              [](const Projected& a, const Projected& b) { return a.value < b.value; });

    // Slack covers rounding in the projection itself.
    const double window = tolerance_ * weight_sum * (1.0 + 1e-6) + 1e-12 * weight_sum;
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t j = i + 1; j < items.size() && items[j].value - items[i].value <= window;
           ++j) {
        const double d = max_norm_distance(*items[i].vec, *items[j].vec);
        if (d <= tolerance_) {
          auto a = *items[i].key;
          auto b = *items[j].key;
          if (b < a) std::swap(a, b);
          rep.collisions.push_back({std::move(a), std::move(b), d});
        }
      }
    }
    std::sort(rep.collisions.begin(), rep.collisions.end(),
              [](const Collision& x, const Collision& y) {
                return std::tie(x.first, x.second) < std::tie(y.first, y.second);
              });
    return rep;
  }

 private:
  std::size_t length_;
  double tolerance_;
  std::size_t seen_ = 0;
  std::map<ClassSequenceKey, FbeVector> entries_;
  std::set<ClassSequenceKey> ordered_keys_;
};

/// Convenience wrapper over UniquenessVerifier for an in-memory list.
inline UniquenessReport verify_uniqueness(
    const FbeConfig& config, const std::vector<std::pair<ClassSequenceKey, FbeVector>>& encodings,
    double tolerance = kEncodingTolerance) {
  config.validate();
  UniquenessVerifier verifier(config.num_classes, tolerance);
  for (const auto& [key, vec] : encodings) verifier.add(key, vec);
  return verifier.report();
}

}  // namespace fbe
