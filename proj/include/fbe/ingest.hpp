#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fbe/errors.hpp"
#include "fbe/recall.hpp"
#include "fbe/scene.hpp"
#include "fbe/text_io.hpp"

namespace fbe {

/// A relationship record whose subject and object resolve to the same instance. It cannot
/// become a RelationshipTriplet, but it still counts toward raw dataset statistics.
struct SelfRelation {
  std::size_t scene = 0;
  std::size_t object_index = 0;
  PredicateId predicate = 0;
  bool operator==(const SelfRelation&) const = default;
};

struct Split {
  std::vector<Scene> scenes;
  std::vector<SelfRelation> self_relations;
  bool operator==(const Split&) const = default;
};

struct Dataset {
  Vocabulary vocabulary;
  Split train;
  Split test;
  bool operator==(const Dataset&) const = default;
};

/// Paths of the public VRD json layout.
struct AnnotationSource {
  std::string objects;
  std::string predicates;
  std::string train;
  std::string test;

  static AnnotationSource from_directory(const std::string& dir) {
    return {dir + "/objects.json", dir + "/predicates.json", dir + "/annotations_train.json",
            dir + "/annotations_test.json"};
  }
};

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline ordered_json parse_json_file(const std::string& path) {
  const auto text = read_file(path);
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline std::vector<std::string> parse_name_list(const std::string& path) {
  const auto j = parse_json_file(path);
  if (!j.is_array()) throw ParseError(path + ": expected a json array of names");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw ParseError(path + ": entry " + std::to_string(i) + " is not a string");
    names.push_back(j[i].get<std::string>());
  }
  return names;
}

inline std::int64_t require_int(const ordered_json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_number_integer())
    throw ParseError(where + ": missing integer field '" + key + "'");
  return j[key].get<std::int64_t>();
}

}  // namespace detail

/// Parses one annotation map (image filename -> relationship records) into scenes.
/// Record boxes are [y_min, y_max, x_min, x_max]. Objects are unified within an image
/// by exact (category, box); duplicate records are kept.
inline Split parse_annotation_map(const nlohmann::ordered_json& map, const Vocabulary& vocab,
                                  const std::string& source) {
  if (!map.is_object()) throw ParseError(source + ": expected a json object keyed by image");
  Split split;
  for (const auto& [image_id, records] : map.items()) {
    const std::size_t scene_index = split.scenes.size();
    Scene scene;
    scene.image_id = image_id;
    if (!records.is_array()) throw ParseError(source + ": image '" + image_id + "': expected a list");
    std::map<std::pair<ClassId, BoundingBox>, std::size_t> instance_of;

    for (std::size_t r = 0; r < records.size(); ++r) {
      const auto where = source + ": image '" + image_id + "' record " + std::to_string(r);
      const auto& rec = records[r];
      const auto pred = detail::require_int(rec, "predicate", where);
      if (pred < 0 || static_cast<std::size_t>(pred) >= vocab.num_predicates())
        throw ValidationError(where + ": predicate id " + std::to_string(pred) + " out of range");

      auto resolve_object = [&](const char* role) {
        if (!rec.contains(role)) throw ParseError(where + ": missing '" + role + "'");
        const auto& o = rec[role];
        const auto cat = detail::require_int(o, "category", where + " " + role);
        if (cat < 0 || static_cast<std::size_t>(cat) >= vocab.num_object_classes())
          throw ValidationError(where + " " + role + ": category " + std::to_string(cat) +
                                " out of range");
        if (!o.contains("bbox") || !o["bbox"].is_array() || o["bbox"].size() != 4)
          throw ParseError(where + " " + role + ": bbox must be a list of 4 numbers");
        double v[4];
        for (std::size_t i = 0; i < 4; ++i) {
          if (!o["bbox"][i].is_number())
            throw ParseError(where + " " + role + ": bbox entry " + std::to_string(i) +
                             " is not a number");
          v[i] = o["bbox"][i].get<double>();
        }
        const BoundingBox box{v[2], v[0], v[3], v[1]};
        if (!box.valid()) throw ValidationError(where + " " + role + ": degenerate bbox ordering");
        const ObjectInstance inst{static_cast<ClassId>(cat), box};
        auto [it, inserted] = instance_of.emplace(std::make_pair(inst.class_id, box), scene.objects.size());
        if (inserted) scene.objects.push_back(inst);
        return it->second;
      };
      const auto s = resolve_object("subject");
      const auto o = resolve_object("object");
      if (s == o)
        split.self_relations.push_back({scene_index, s, static_cast<PredicateId>(pred)});
      else
        scene.triplets.push_back({s, static_cast<PredicateId>(pred), o});
    }
    split.scenes.push_back(std::move(scene));
  }
  return split;
}

inline Dataset parse_annotations(const AnnotationSource& source) {
  Dataset ds;
  ds.vocabulary.object_classes = detail::parse_name_list(source.objects);
  ds.vocabulary.predicate_classes = detail::parse_name_list(source.predicates);
  ds.vocabulary.validate();
  ds.train = parse_annotation_map(detail::parse_json_file(source.train), ds.vocabulary, source.train);
  ds.test = parse_annotation_map(detail::parse_json_file(source.test), ds.vocabulary, source.test);
  return ds;
}

// ---------------------------------------------------------------------------
// Image dimension sidecar
//   <image_id> <width> <height>        one per line; "#" starts a comment line
// ---------------------------------------------------------------------------

using DimensionTable = std::unordered_map<std::string, std::pair<double, double>>;

inline DimensionTable parse_dimensions(const std::string& text, const std::string& source) {
  DimensionTable out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (tok.size() != 3) throw FormatError(where + ": expected '<image_id> <width> <height>'");
    const double w = parse_double(tok[1], where), h = parse_double(tok[2], where);
    if (!(w > 0.0 && h > 0.0)) throw ValidationError(where + ": dimensions must be positive");
    out[std::string(tok[0])] = {w, h};
  }
  return out;
}

inline void apply_dimensions(Dataset& ds, const DimensionTable& dims) {
  for (auto* split : {&ds.train, &ds.test})
    for (auto& s : split->scenes)
      if (auto it = dims.find(s.image_id); it != dims.end()) {
        s.image_width = it->second.first;
        s.image_height = it->second.second;
      }
}

// ---------------------------------------------------------------------------
// Normalized scene format
//
//   #fbe-scenes v1 tool=<version>
//   objects <L>
//   <name>                                  L lines, class id = line order
//   predicates <P>
//   <name>                                  P lines
//   split train <n_images>
//   image <image_id> <width|-> <height|-> <n_objects> <n_triplets> <n_self>
//   o <class_id> <x_min> <y_min> <x_max> <y_max>
//   t <subject_index> <predicate_id> <object_index>
//   self <object_index> <predicate_id>
//   split test <n_images>
//   ...
// Numbers use shortest round-trip decimals; image ids must not contain whitespace.
// ---------------------------------------------------------------------------

inline std::string serialize_dataset(const Dataset& ds) {
  std::ostringstream out;
  out << FileHeader{"fbe-scenes", 1, {{"tool", std::string(kToolVersion)}}}.to_line() << "\n";
  out << "objects " << ds.vocabulary.object_classes.size() << "\n";
  for (const auto& n : ds.vocabulary.object_classes) out << n << "\n";
  out << "predicates " << ds.vocabulary.predicate_classes.size() << "\n";
  for (const auto& n : ds.vocabulary.predicate_classes) out << n << "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
  for (const auto& [name, split] : {std::pair{"train", &ds.train}, std::pair{"test", &ds.test}}) {
    out << "split " << name << " " << split->scenes.size() << "\n";
    std::vector<std::vector<const SelfRelation*>> selfs(split->scenes.size());
    for (const auto& sr : split->self_relations) selfs[sr.scene].push_back(&sr);
    for (std::size_t i = 0; i < split->scenes.size(); ++i) {
      const auto& s = split->scenes[i];
      if (has_whitespace(s.image_id))
        throw FormatError("image id '" + s.image_id + "' is empty or contains whitespace");
      out << "image " << s.image_id << " " << opt(s.image_width) << " " << opt(s.image_height) << " "
          << s.objects.size() << " " << s.triplets.size() << " " << selfs[i].size() << "\n";
      for (const auto& o : s.objects)
        out << "o " << o.class_id << " " << format_double(o.box.x_min) << " "
            << format_double(o.box.y_min) << " " << format_double(o.box.x_max) << " "
            << format_double(o.box.y_max) << "\n";
      for (const auto& t : s.triplets)
        out << "t " << t.subject_index << " " << t.predicate_id << " " << t.object_index << "\n";
      for (const auto* sr : selfs[i]) out << "self " << sr->object_index << " " << sr->predicate << "\n";
    }
  }
  return out.str();
}

inline Dataset parse_dataset(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return source + ":" + std::to_string(lineno); };
  auto next = [&](const char* what) -> std::string& {
    if (!std::getline(in, line)) throw FormatError(source + ": truncated, expected " + what);
    ++lineno;
    return line;
  };
  FileHeader::parse(next("header"), "fbe-scenes", 1, source);

  Dataset ds;
  auto read_names = [&](const char* tag, std::vector<std::string>& names) {
    auto tok = split_ws(next(tag));
    if (tok.size() != 2 || tok[0] != tag) throw FormatError(where() + ": expected '" + tag + " <n>'");
    const auto n = parse_uint(tok[1], where());
    for (std::uint64_t i = 0; i < n; ++i) {
      auto& name = next("class name");
      if (!name.empty() && name.back() == '\r') name.pop_back();
      names.push_back(name);
    }
  };
  read_names("objects", ds.vocabulary.object_classes);
  read_names("predicates", ds.vocabulary.predicate_classes);
  ds.vocabulary.validate();

  for (const char* expected : {"train", "test"}) {
    auto tok = split_ws(next("split"));
    if (tok.size() != 3 || tok[0] != "split" || tok[1] != expected)
      throw FormatError(where() + ": expected 'split " + expected + " <n>'");
    Split& split = std::string(expected) == "train" ? ds.train : ds.test;
    const auto n_images = parse_uint(tok[2], where());
    for (std::uint64_t i = 0; i < n_images; ++i) {
      auto it = split_ws(next("image"));
      if (it.size() != 7 || it[0] != "image")
        throw FormatError(where() + ": expected image line with 6 fields");
      Scene s;
      s.image_id = std::string(it[1]);
      if (it[2] != "-") s.image_width = parse_double(it[2], where());
      if (it[3] != "-") s.image_height = parse_double(it[3], where());
      const auto n_obj = parse_uint(it[4], where()), n_tri = parse_uint(it[5], where()),
                 n_self = parse_uint(it[6], where());
      for (std::uint64_t k = 0; k < n_obj; ++k) {
        auto ot = split_ws(next("object"));
        if (ot.size() != 6 || ot[0] != "o") throw FormatError(where() + ": expected object line");
        s.objects.push_back({static_cast<ClassId>(parse_uint(ot[1], where())),
                             {parse_double(ot[2], where()), parse_double(ot[3], where()),
                              parse_double(ot[4], where()), parse_double(ot[5], where())}});
      }
      for (std::uint64_t k = 0; k < n_tri; ++k) {
        auto tt = split_ws(next("triplet"));
        if (tt.size() != 4 || tt[0] != "t") throw FormatError(where() + ": expected triplet line");
        s.triplets.push_back({parse_uint(tt[1], where()),
                              static_cast<PredicateId>(parse_uint(tt[2], where())),
                              parse_uint(tt[3], where())});
      }
      for (std::uint64_t k = 0; k < n_self; ++k) {
        auto st = split_ws(next("self relation"));
        if (st.size() != 3 || st[0] != "self") throw FormatError(where() + ": expected self line");
        const auto obj = parse_uint(st[1], where());
        if (obj >= s.objects.size()) throw ValidationError(where() + ": dangling object index");
        split.self_relations.push_back(
            {split.scenes.size(), obj, static_cast<PredicateId>(parse_uint(st[2], where()))});
      }
      s.validate(ds.vocabulary);
      split.scenes.push_back(std::move(s));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct DatasetStats {
  std::size_t train_images = 0;
  std::size_t test_images = 0;
  std::size_t object_classes = 0;
  std::size_t predicates = 0;
  /// Every relationship record, including duplicates and self relations.
  std::size_t triplet_instances = 0;
  std::size_t train_triplets = 0;
  std::size_t test_triplets = 0;
  /// Distinct (subject instance, predicate, object instance) per image, self relations excluded.
  std::size_t triplet_instances_dedup = 0;
  std::size_t self_relations = 0;
  std::size_t triplet_types = 0;
  std::size_t zero_shot_instances = 0;
  std::size_t zero_shot_types = 0;
  /// Zero-shot counts restricted to scene triplets (what zero_shot_split sees).
  std::size_t zero_shot_instances_scenes = 0;
  std::size_t zero_shot_types_scenes = 0;
};

inline std::vector<TripletType> raw_types(const Split& split) {
  std::vector<TripletType> out;
  for (const auto& s : split.scenes)
    for (const auto& t : s.triplets) out.push_back(triplet_type(s, t));
  for (const auto& sr : split.self_relations) {
    const auto c = split.scenes[sr.scene].objects[sr.object_index].class_id;
    out.push_back({c, sr.predicate, c});
  }
  return out;
}

inline DatasetStats compute_stats(const Dataset& ds) {
  DatasetStats st;
  st.train_images = ds.train.scenes.size();
  st.test_images = ds.test.scenes.size();
  st.object_classes = ds.vocabulary.num_object_classes();
  st.predicates = ds.vocabulary.num_predicates();
  st.self_relations = ds.train.self_relations.size() + ds.test.self_relations.size();

  const auto train_types = raw_types(ds.train);
  const auto test_types = raw_types(ds.test);
  st.train_triplets = train_types.size();
  st.test_triplets = test_types.size();
  st.triplet_instances = st.train_triplets + st.test_triplets;

  std::set<TripletType> all(train_types.begin(), train_types.end());
  all.insert(test_types.begin(), test_types.end());
  st.triplet_types = all.size();

  const std::set<TripletType> seen(train_types.begin(), train_types.end());
  std::set<TripletType> zs_types;
  for (const auto& t : test_types)
    if (!seen.count(t)) {
      ++st.zero_shot_instances;
      zs_types.insert(t);
    }
  st.zero_shot_types = zs_types.size();

  for (const auto* split : {&ds.train, &ds.test})
    for (const auto& s : split->scenes) {
      std::set<std::tuple<std::size_t, PredicateId, std::size_t>> uniq;
      for (const auto& t : s.triplets) uniq.insert({t.subject_index, t.predicate_id, t.object_index});
      st.triplet_instances_dedup += uniq.size();
    }

  const auto zs = zero_shot_split(ds.train.scenes, ds.test.scenes);
  st.zero_shot_instances_scenes = zs.zero_shot.size();
  st.zero_shot_types_scenes = zs.zero_shot_types;
  return st;
}

inline std::string format_stats(const DatasetStats& st) {
  std::ostringstream out;
  out << "images: " << st.train_images << " train / " << st.test_images << " test\n";
  out << "object classes: " << st.object_classes << "\n";
  out << "predicates: " << st.predicates << "\n";
  out << "triplets: " << st.triplet_instances << " (train " << st.train_triplets << ", test "
      << st.test_triplets << ")\n";
  out << "triplet types: " << st.triplet_types << "\n";
  out << "zero-shot: " << st.zero_shot_instances << " instances / " << st.zero_shot_types << " types\n";
  if (st.triplet_instances_dedup != st.triplet_instances || st.self_relations != 0) {
    out << "triplets after dedup: " << st.triplet_instances_dedup << "\n";
    out << "self relations (subject and object are the same instance): " << st.self_relations << "\n";
    out << "zero-shot over scene triplets: " << st.zero_shot_instances_scenes << " instances / "
        << st.zero_shot_types_scenes << " types\n";
  }
  return out.str();
}

}  // namespace fbe
