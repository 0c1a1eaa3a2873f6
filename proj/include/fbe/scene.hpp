#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "fbe/errors.hpp"

namespace fbe {

using ClassId = std::uint32_t;
using PredicateId = std::uint32_t;

struct Vocabulary {
  std::vector<std::string> object_classes;
  std::vector<std::string> predicate_classes;

  std::size_t num_object_classes() const { return object_classes.size(); }
  std::size_t num_predicates() const { return predicate_classes.size(); }

  /// Throws ValidationError unless both lists are non-empty with unique names.
  void validate() const {
    auto check = [](const std::vector<std::string>& names, const char* what) {
      if (names.empty()) throw ValidationError(std::string(what) + " list is empty");
      std::unordered_set<std::string> seen;
      for (const auto& n : names) {
        if (!seen.insert(n).second)
          throw ValidationError(std::string("duplicate ") + what + " name '" + n + "'");
      }
    };
    check(object_classes, "object class");
    check(predicate_classes, "predicate");
  }

  bool operator==(const Vocabulary&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Axis-aligned box in image pixels, origin top-left. Never clipped to the image.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
  }

  bool operator==(const BoundingBox&) const = default;
  auto operator<=>(const BoundingBox&) const = default;
};

struct ObjectInstance {
  ClassId class_id = 0;
  BoundingBox box;
  bool operator==(const ObjectInstance&) const = default;
};

struct RelationshipTriplet {
  std::size_t subject_index = 0;
  PredicateId predicate_id = 0;
  std::size_t object_index = 0;
  bool operator==(const RelationshipTriplet&) const = default;
};

struct Scene {
  std::string image_id;
  std::optional<double> image_width;
  std::optional<double> image_height;
  std::vector<ObjectInstance> objects;
  std::vector<RelationshipTriplet> triplets;

  bool has_dimensions() const {
    return image_width && image_height && *image_width > 0.0 && *image_height > 0.0;
  }

  /// Throws ValidationError if any triplet or object breaks the scene invariants.
  void validate(const Vocabulary& vocab) const {
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& obj = objects[i];
      if (obj.class_id >= vocab.num_object_classes())
        throw ValidationError("image '" + image_id + "' object " + std::to_string(i) +
                              ": class id " + std::to_string(obj.class_id) + " out of range");
      if (!obj.box.valid())
        throw ValidationError("image '" + image_id + "' object " + std::to_string(i) +
                              ": invalid bounding box");
    }
    for (std::size_t t = 0; t < triplets.size(); ++t) {
      const auto& tr = triplets[t];
      const auto where = "image '" + image_id + "' triplet " + std::to_string(t);
      if (tr.subject_index >= objects.size() || tr.object_index >= objects.size())
        throw ValidationError(where + ": dangling object index");
      if (tr.subject_index == tr.object_index)
        throw ValidationError(where + ": subject and object are the same instance");
      if (tr.predicate_id >= vocab.num_predicates())
        throw ValidationError(where + ": predicate id " + std::to_string(tr.predicate_id) +
                              " out of range");
    }
  }

  bool operator==(const Scene&) const = default;
};

inline Point box_center(const BoundingBox& box) {
  return {(box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0};
}

/// Smallest box covering both inputs.
inline BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min), std::max(a.x_max, b.x_max),
          std::max(a.y_max, b.y_max)};
}

inline double euclidean_distance(const Point& p, const Point& q) {
  return std::hypot(p.x - q.x, p.y - q.y);
}

/// Intersection over union with continuous widths; 0 when the union has no area.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace fbe
