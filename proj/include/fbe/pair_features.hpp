#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "fbe/background.hpp"
#include "fbe/errors.hpp"
#include "fbe/scene.hpp"
#include "fbe/text_io.hpp"

namespace fbe {

inline constexpr std::size_t kGeometricFeatureWidth = 14;
inline constexpr double kLogRatioEpsilon = 1e-6;

/// Layout-agnostic pair descriptor from box geometry, in this order:
///   [0..3]  subject box / (W, H, W, H)
///   [4..7]  object box  / (W, H, W, H)
///   [8]     ln((sw/W + eps) / (ow/W + eps))
///   [9]     ln((sh/H + eps) / (oh/H + eps))
///   [10,11] (object center - subject center) / (W, H)
///   [12]    iou(subject, object)
///   [13]    union box area / (W * H)
/// Widths are normalized before the log so the whole vector is invariant to a common
/// rescaling of boxes and image.
inline std::vector<double> geometric_pair_features(const Scene& scene, std::size_t subject_index,
                                                   std::size_t object_index) {
  detail::check_pair(scene, subject_index, object_index);
  if (!scene.has_dimensions())
    throw InputError("image '" + scene.image_id +
                     "': geometric features need positive image width and height");
  const double w = *scene.image_width;
  const double h = *scene.image_height;
  const auto& s = scene.objects[subject_index].box;
  const auto& o = scene.objects[object_index].box;
  const Point sc = box_center(s);
  const Point oc = box_center(o);
  const BoundingBox u = union_box(s, o);

  std::vector<double> f;
  f.reserve(kGeometricFeatureWidth);
  f.insert(f.end(), {s.x_min / w, s.y_min / h, s.x_max / w, s.y_max / h});
  f.insert(f.end(), {o.x_min / w, o.y_min / h, o.x_max / w, o.y_max / h});
  f.push_back(std::log((s.width() / w + kLogRatioEpsilon) / (o.width() / w + kLogRatioEpsilon)));
  f.push_back(std::log((s.height() / h + kLogRatioEpsilon) / (o.height() / h + kLogRatioEpsilon)));
  f.push_back((oc.x - sc.x) / w);
  f.push_back((oc.y - sc.y) / h);
  f.push_back(iou(s, o));
  f.push_back(u.area() / (w * h));
  return f;
}

/// Externally computed pair features keyed by (image_id, subject_index, object_index).
///
/// File layout:
///   #fbe-features v1 width=<W>
///   <image_id> <subject_index> <object_index> <f_0> ... <f_{W-1}>
/// Blank lines and lines starting with "#" after the header are ignored.
class PrecomputedFeatures {
 public:
  using Key = std::tuple<std::string, std::size_t, std::size_t>;

  PrecomputedFeatures() = default;
  explicit PrecomputedFeatures(std::size_t width) : width_(width) {}

  static PrecomputedFeatures parse(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(source + ": empty features file");
    const auto header = FileHeader::parse(line, "fbe-features", 1, source);
    const auto width = static_cast<std::size_t>(parse_uint(header.get("width"), source));
    if (width == 0) throw FormatError(source + ": declared width must be positive");
    PrecomputedFeatures out(width);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      auto tok = split_ws(line);
      if (tok.empty() || tok[0].front() == '#') continue;
      const std::string where = source + ":" + std::to_string(lineno);
      if (tok.size() < 3) throw FormatError(where + ": record needs image_id and two indices");
      Key key{std::string(tok[0]), parse_uint(tok[1], where), parse_uint(tok[2], where)};
      std::vector<double> values;
      values.reserve(tok.size() - 3);
      for (std::size_t i = 3; i < tok.size(); ++i) values.push_back(parse_double(tok[i], where));
      out.records_[std::move(key)] = std::move(values);
    }
    return out;
  }

  static PrecomputedFeatures load(const std::string& path) { return parse(read_file(path), path); }

  std::size_t width() const { return width_; }
  std::size_t size() const { return records_.size(); }

  void insert(const std::string& image_id, std::size_t subject_index, std::size_t object_index,
              std::vector<double> values) {
    records_[{image_id, subject_index, object_index}] = std::move(values);
  }

  /// Width is checked on lookup so a single bad record does not poison the whole file.
  const std::vector<double>& lookup(const std::string& image_id, std::size_t subject_index,
                                    std::size_t object_index) const {
    auto it = records_.find({image_id, subject_index, object_index});
    const auto key_str = "(" + image_id + ", " + std::to_string(subject_index) + ", " +
                         std::to_string(object_index) + ")";
    if (it == records_.end()) throw LookupError("no precomputed features for " + key_str);
    if (it->second.size() != width_)
      throw FormatError("precomputed features for " + key_str + ": expected width " +
                        std::to_string(width_) + ", got " + std::to_string(it->second.size()));
    return it->second;
  }

  std::string serialize() const {
    FileHeader h{"fbe-features", 1, {{"width", std::to_string(width_)}}};
    std::string out = h.to_line() + "\n";
    for (const auto& [key, values] : records_) {
      out += std::get<0>(key) + " " + std::to_string(std::get<1>(key)) + " " +
             std::to_string(std::get<2>(key));
      for (double v : values) out += " " + format_double(v);
      out += "\n";
    }
    return out;
  }

 private:
  std::size_t width_ = 0;
  std::map<Key, std::vector<double>> records_;
};

inline std::vector<double> load_precomputed_features(const std::string& path,
                                                     const std::string& image_id,
                                                     std::size_t subject_index,
                                                     std::size_t object_index) {
  return PrecomputedFeatures::load(path).lookup(image_id, subject_index, object_index);
}

enum class FeatureKind { geometric, file };

inline std::string to_string(FeatureKind k) { return k == FeatureKind::geometric ? "geometric" : "file"; }

inline FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "geometric") return FeatureKind::geometric;
  if (s == "file") return FeatureKind::file;
  throw ConfigError("unknown feature provider '" + s + "' (expected geometric or file)");
}

/// Supplies the pair descriptor M. Width is fixed for the lifetime of the provider.
class FeatureProvider {
 public:
  static FeatureProvider geometric() { return FeatureProvider(FeatureKind::geometric, {}); }
  static FeatureProvider from_file(PrecomputedFeatures features) {
    return FeatureProvider(FeatureKind::file, std::move(features));
  }

  FeatureKind kind() const { return kind_; }
  std::size_t width() const {
    return kind_ == FeatureKind::geometric ? kGeometricFeatureWidth : file_.width();
  }

  std::vector<double> pair_features(const Scene& scene, std::size_t subject_index,
                                    std::size_t object_index) const {
    if (kind_ == FeatureKind::geometric)
      return geometric_pair_features(scene, subject_index, object_index);
    detail::check_pair(scene, subject_index, object_index);
    return file_.lookup(scene.image_id, subject_index, object_index);
  }

 private:
  FeatureProvider(FeatureKind kind, PrecomputedFeatures file) : kind_(kind), file_(std::move(file)) {}
  FeatureKind kind_;
  PrecomputedFeatures file_;
};

/// R = [M || B]. Widths are checked against what the caller declared.
inline std::vector<double> assemble_relationship_feature(std::span<const double> pair,
                                                         std::span<const double> background,
                                                         std::size_t pair_width,
                                                         std::size_t num_classes) {
  if (pair.size() != pair_width)
    throw InputError("pair feature width " + std::to_string(pair.size()) + ", expected " +
                     std::to_string(pair_width));
  if (background.size() != num_classes)
    throw InputError("background encoding width " + std::to_string(background.size()) +
                     ", expected " + std::to_string(num_classes));
  std::vector<double> r;
  r.reserve(pair.size() + background.size());
  r.insert(r.end(), pair.begin(), pair.end());
  r.insert(r.end(), background.begin(), background.end());
  return r;
}

/// Builds R for one ordered pair. With `use_background == false` the B block is omitted,
/// which is the ablation arm (pair features only).
struct RelationshipFeaturizer {
  FeatureProvider provider = FeatureProvider::geometric();
  FbeConfig background;
  bool use_background = true;

  std::size_t width() const { return provider.width() + (use_background ? background.num_classes : 0); }

  std::vector<double> operator()(const Scene& scene, std::size_t subject_index,
                                 std::size_t object_index) const {
    auto m = provider.pair_features(scene, subject_index, object_index);
    if (!use_background) {
      if (m.size() != provider.width())
        throw InputError("pair feature width " + std::to_string(m.size()) + ", expected " +
                         std::to_string(provider.width()));
      return m;
    }
    auto b = fbe_encode(background, scene, subject_index, object_index);
    return assemble_relationship_feature(m, b, provider.width(), background.num_classes);
  }
};

}  // namespace fbe
