#pragma once

// Subcommand implementations behind the fbe command-line tool. Each command writes its
// report to `out`, diagnostics to `err`, and returns the process exit status:
//   0 success, 1 validation or verification failure, 2 usage / configuration error.

#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fbe/background.hpp"
#include "fbe/errors.hpp"
#include "fbe/ingest.hpp"
#include "fbe/mlp.hpp"
#include "fbe/pair_features.hpp"
#include "fbe/recall.hpp"
#include "fbe/text_io.hpp"

namespace fbe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  // Inputs. Exactly one of vrd_dir / scenes_path selects the annotations.
  std::string vrd_dir;
  std::string scenes_path;
  std::string dims_path;
  std::string features_path;
  std::string model_path;
  std::string detections_path;
  std::string predictions_path;

  // Outputs. "-" or empty writes the primary output to stdout where that makes sense.
  std::string out_path;
  std::string table_path;
  std::string dump_predictions_path;

  double rho = kDefaultForgettingFactor;
  std::uint64_t seed = 0;
  double tolerance = kEncodingTolerance;

  // Training overrides.
  std::string features = "geometric";
  bool no_background = false;
  std::optional<std::size_t> iterations;
  std::optional<std::vector<std::size_t>> hidden;
  std::optional<double> learning_rate;
  std::optional<double> momentum;
  std::optional<double> weight_decay;

  // Evaluation overrides.
  std::size_t recall_x = 100;
  std::size_t k = 70;
  double iou_threshold = 0.5;
};

/// Flag-level checks that must fail before any input is read.
inline void validate_flags(const RunConfig& cfg) {
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0))
    throw ConfigError("--rho must lie strictly between 0 and 1, got " + format_double(cfg.rho));
  if (!(cfg.tolerance > 0.0)) throw ConfigError("--tolerance must be positive");
  if (cfg.recall_x < 1) throw ConfigError("--recall-x must be at least 1");
  if (cfg.k < 1) throw ConfigError("--k must be at least 1");
  if (!(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0))
    throw ConfigError("--iou-thresh must lie in (0, 1]");
  if (!cfg.vrd_dir.empty() && !cfg.scenes_path.empty())
    throw ConfigError("pass either --vrd-dir or --scenes, not both");
  if (cfg.learning_rate && !(*cfg.learning_rate >= 0.0)) throw ConfigError("--lr must be non-negative");
  if (cfg.momentum && !(*cfg.momentum >= 0.0 && *cfg.momentum < 1.0))
    throw ConfigError("--momentum must lie in [0, 1)");
  if (cfg.weight_decay && !(*cfg.weight_decay >= 0.0))
    throw ConfigError("--weight-decay must be non-negative");
  if (cfg.hidden)
    for (auto w : *cfg.hidden)
      if (w == 0) throw ConfigError("--hidden widths must be positive");
  parse_feature_kind(cfg.features);
}

inline Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.vrd_dir.empty() && cfg.scenes_path.empty())
    throw ConfigError("no annotations given: pass --vrd-dir or --scenes");
  Dataset ds = cfg.scenes_path.empty()
                   ? parse_annotations(AnnotationSource::from_directory(cfg.vrd_dir))
                   : parse_dataset(read_file(cfg.scenes_path), cfg.scenes_path);
  if (!cfg.dims_path.empty())
    apply_dimensions(ds, parse_dimensions(read_file(cfg.dims_path), cfg.dims_path));
  for (const auto* split : {&ds.train, &ds.test})
    for (const auto& s : split->scenes) s.validate(ds.vocabulary);
  return ds;
}

namespace detail {

inline void emit(const RunConfig& cfg, std::ostream& out, const std::string& content) {
  if (cfg.out_path.empty() || cfg.out_path == "-")
    out << content;
  else
    write_file_atomic(cfg.out_path, content);
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

inline std::string percent(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v * 100.0;
  return s.str();
}

inline std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline RelationshipFeaturizer make_featurizer(FeatureKind kind, const std::string& features_path,
                                              std::size_t num_classes, double rho, bool background) {
  RelationshipFeaturizer f;
  f.background = {num_classes, rho};
  f.use_background = background;
  if (kind == FeatureKind::file) {
    if (features_path.empty())
      throw ConfigError("file-backed pair features need --features-file");
    f.provider = FeatureProvider::from_file(PrecomputedFeatures::load(features_path));
  }
  return f;
}

inline void require_dimensions(const std::vector<Scene>& scenes, const char* split) {
  std::size_t missing = 0;
  std::string example;
  for (const auto& s : scenes)
    if (s.objects.size() >= 2 && !s.has_dimensions()) {
      if (missing++ == 0) example = s.image_id;
    }
  if (missing)
    throw ConfigError(std::to_string(missing) + " " + split + " images lack width/height (e.g. '" +
                      example + "'); geometric features need --dims");
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_ingest(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    validate_flags(cfg);
    const auto ds = load_dataset(cfg);
    detail::emit(cfg, out, serialize_dataset(ds));
    return kExitOk;
  });
}

inline int cmd_stats(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    validate_flags(cfg);
    const auto ds = load_dataset(cfg);
    detail::emit(cfg, out, format_stats(compute_stats(ds)));
    return kExitOk;
  });
}

/// One record per labeled triplet, train split first, then test, in annotation order:
///   #fbe-encodings v1 L=<L> rho=<rho> seed=<seed> tool=<version>
///   <image_id> <subject_index> <object_index> <B_0> ... <B_{L-1}>
inline int cmd_encode_fbe(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    validate_flags(cfg);
    const auto ds = load_dataset(cfg);
    const FbeConfig fc{ds.vocabulary.num_object_classes(), cfg.rho};
    FileHeader h{"fbe-encodings",
                 1,
                 {{"L", std::to_string(fc.num_classes)},
                  {"rho", format_double(cfg.rho)},
                  {"seed", std::to_string(cfg.seed)},
                  {"tool", std::string(kToolVersion)}}};
    std::string text = h.to_line() + "\n";
    for (const auto* split : {&ds.train, &ds.test})
      for (const auto& s : split->scenes)
        for (const auto& t : s.triplets) {
          text += s.image_id + " " + std::to_string(t.subject_index) + " " +
                  std::to_string(t.object_index);
          for (double v : fbe_encode(fc, s, t.subject_index, t.object_index))
            text += " " + format_double(v);
          text += "\n";
        }
    detail::emit(cfg, out, text);
    return kExitOk;
  });
}

inline int cmd_verify_uniqueness(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    validate_flags(cfg);
    const auto ds = load_dataset(cfg);
    const FbeConfig fc{ds.vocabulary.num_object_classes(), cfg.rho};
    UniquenessVerifier verifier(fc.num_classes, cfg.tolerance);
    for (const auto* split : {&ds.train, &ds.test})
      for (const auto& s : split->scenes)
        for (const auto& t : s.triplets)
          verifier.add(class_sequence_key(s, t.subject_index, t.object_index),
                       fbe_encode(fc, s, t.subject_index, t.object_index));
    const auto rep = verifier.report();

    std::ostringstream text;
    text << FileHeader{"fbe-uniqueness",
                       1,
                       {{"rho", format_double(cfg.rho)},
                        {"tolerance", format_double(cfg.tolerance)},
                        {"seed", std::to_string(cfg.seed)},
                        {"tool", std::string(kToolVersion)}}}
                .to_line()
         << "\n";
    text << "encodings: " << rep.encodings_seen << "\n";
    text << "distinct class sequences: " << rep.distinct_keys << "\n";
    text << "subject/object swapped sequence pairs (identical by construction): "
         << rep.swapped_endpoint_pairs << "\n";
    text << "collisions: " << rep.collisions.size() << "\n";
    for (const auto& c : rep.collisions)
      text << "collision: " << c.first.to_string() << " <-> " << c.second.to_string()
           << " max-diff " << format_double(c.distance) << "\n";
    detail::emit(cfg, out, text.str());
    return rep.unique() ? kExitOk : kExitFailure;
  });
}

/// Checkpoint metadata keys written by cmd_train and read back by cmd_eval.
struct TrainedModel {
  Checkpoint checkpoint;
  FeatureKind features = FeatureKind::geometric;
  bool background = true;
  double rho = kDefaultForgettingFactor;
  std::size_t num_classes = 0;
};

inline TrainedModel load_trained_model(const std::string& path) {
  TrainedModel tm;
  tm.checkpoint = parse_checkpoint(read_file(path), path);
  const auto& md = tm.checkpoint.metadata;
  auto get = [&](const char* key) -> const std::string& {
    auto it = md.find(key);
    if (it == md.end()) throw FormatError(path + ": checkpoint lacks '" + key + "'");
    return it->second;
  };
  tm.features = parse_feature_kind(get("features"));
  tm.background = get("background") == "on";
  tm.rho = parse_double(get("rho"), path);
  tm.num_classes = parse_uint(get("num_classes"), path);
  return tm;
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    validate_flags(cfg);
    const auto kind = parse_feature_kind(cfg.features);
    if (cfg.out_path.empty() || cfg.out_path == "-")
      throw ConfigError("train needs --out <checkpoint path>");
    if (kind == FeatureKind::file && cfg.features_path.empty())
      throw ConfigError("--features file needs --features-file");
    const auto ds = load_dataset(cfg);
    if (kind == FeatureKind::geometric) detail::require_dimensions(ds.train.scenes, "training");

    const auto featurizer = detail::make_featurizer(kind, cfg.features_path,
                                                    ds.vocabulary.num_object_classes(), cfg.rho,
                                                    !cfg.no_background);
    GroupedDataset data;
    for (const auto& s : ds.train.scenes) {
      std::vector<TrainingExample> group;
      for (const auto& t : s.triplets)
        group.push_back({featurizer(s, t.subject_index, t.object_index), t.predicate_id});
      data.push_back(std::move(group));
    }

    MlpConfig mc;
    mc.input_width = featurizer.width();
    mc.output_width = ds.vocabulary.num_predicates();
    mc.seed = cfg.seed;
    if (cfg.hidden) mc.hidden_widths = *cfg.hidden;
    if (cfg.iterations) mc.iterations = *cfg.iterations;
    if (cfg.learning_rate) mc.learning_rate = *cfg.learning_rate;
    if (cfg.momentum) mc.momentum = *cfg.momentum;
    if (cfg.weight_decay) mc.weight_decay = *cfg.weight_decay;

    TrainOptions opts;
    opts.log_every = 100;
    opts.on_progress = [&](const TrainProgress& p) {
      out << "iter " << p.iteration << " loss " << detail::fixed(p.mean_loss, 6) << "\n";
    };
    Checkpoint ck;
    ck.config = mc;
    ck.model = train(mc, data, opts);
    ck.metadata = {{"features", to_string(kind)},
                   {"pair_width", std::to_string(featurizer.provider.width())},
                   {"background", cfg.no_background ? "off" : "on"},
                   {"rho", format_double(cfg.rho)},
                   {"num_classes", std::to_string(ds.vocabulary.num_object_classes())}};
    write_file_atomic(cfg.out_path, serialize_checkpoint(ck));
    out << "final training accuracy " << detail::fixed(accuracy(ck.model, data), 4) << "\n";
    return kExitOk;
  });
}

/// Scores predicate classification or relationship detection on the test split. Either a
/// checkpoint (--model) or an external prediction dump (--predictions) supplies candidates.
inline int cmd_eval(const RunConfig& cfg, Task task, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    validate_flags(cfg);
    if (cfg.model_path.empty() && cfg.predictions_path.empty())
      throw ConfigError("evaluation needs --model or --predictions");
    if (task == Task::relationship_detection && cfg.predictions_path.empty() &&
        cfg.detections_path.empty())
      throw ConfigError("relationship detection needs --detections");

    const auto ds = load_dataset(cfg);
    const EvalConfig ec{cfg.recall_x, cfg.k, cfg.iou_threshold};
    ec.validate(ds.vocabulary.num_predicates());

    std::map<std::string, std::string> header{{"task", to_string(task)},
                                              {"X", std::to_string(ec.recall_x)},
                                              {"k", std::to_string(ec.k)},
                                              {"tool", std::string(kToolVersion)}};
    if (task == Task::relationship_detection) header["iou"] = format_double(ec.iou_threshold);

    std::vector<PredictionSet> predictions;
    if (!cfg.predictions_path.empty()) {
      predictions = parse_predictions(read_file(cfg.predictions_path), cfg.predictions_path);
      header["source"] = "external";
    } else {
      const auto tm = load_trained_model(cfg.model_path);
      if (tm.num_classes != ds.vocabulary.num_object_classes())
        throw ValidationError("checkpoint was trained with " + std::to_string(tm.num_classes) +
                              " object classes, annotations have " +
                              std::to_string(ds.vocabulary.num_object_classes()));
      if (tm.checkpoint.model.output_width() != ds.vocabulary.num_predicates())
        throw ValidationError("checkpoint predicts " +
                              std::to_string(tm.checkpoint.model.output_width()) +
                              " predicates, annotations have " +
                              std::to_string(ds.vocabulary.num_predicates()));
      if (tm.features == FeatureKind::geometric) detail::require_dimensions(ds.test.scenes, "test");
      const auto featurizer =
          detail::make_featurizer(tm.features, cfg.features_path, tm.num_classes, tm.rho, tm.background);
      header["source"] = "model";
      header["seed"] = std::to_string(tm.checkpoint.config.seed);
      header["rho"] = format_double(tm.rho);
      if (task == Task::predicate_classification) {
        predictions = build_predictions_predicate_task(tm.checkpoint.model, featurizer,
                                                       ds.test.scenes, ec);
      } else {
        const auto dets = parse_detections(read_file(cfg.detections_path), cfg.detections_path,
                                           ds.vocabulary.num_object_classes());
        predictions = build_predictions_detection_task(tm.checkpoint.model, featurizer,
                                                       ds.test.scenes, dets, ec);
      }
    }

    const auto zs = zero_shot_split(ds.train.scenes, ds.test.scenes);
    const auto all = recall_at_x(ec, ground_truth(ds.test.scenes), predictions, task);
    const auto zero = recall_at_x(ec, ground_truth(ds.test.scenes, &zs.mask), predictions, task);

    if (!cfg.dump_predictions_path.empty())
      write_file_atomic(cfg.dump_predictions_path, serialize_predictions(predictions, {{"k", std::to_string(ec.k)}}));
    if (!cfg.table_path.empty()) {
      std::map<std::string, ImageRecall> zmap;
      for (const auto& ir : zero.per_image) zmap.emplace(ir.image_id, ir);
      std::string table = FileHeader{"fbe-eval-table", 1, header}.to_line() + "\n";
      table += "# image_id matched total recall zs_matched zs_total zs_recall\n";
      for (const auto& ir : all.per_image) {
        table += ir.image_id + " " + std::to_string(ir.matched) + " " + std::to_string(ir.total) +
                 " " + detail::fixed(ir.recall(), 6);
        if (auto it = zmap.find(ir.image_id); it != zmap.end())
          table += " " + std::to_string(it->second.matched) + " " +
                   std::to_string(it->second.total) + " " + detail::fixed(it->second.recall(), 6);
        else
          table += " - - -";
        table += "\n";
      }
      write_file_atomic(cfg.table_path, table);
    }

    std::ostringstream text;
    text << FileHeader{"fbe-eval", 1, header}.to_line() << "\n";
    text << "task: "
         << (task == Task::predicate_classification ? "predicate classification"
                                                    : "relationship detection")
         << "\n";
    text << "images evaluated: " << all.images_evaluated << " (zero-shot subset: "
         << zero.images_evaluated << ")\n";
    text << "zero-shot test triplets: " << zs.zero_shot.size() << " / " << zs.zero_shot_types
         << " types\n";
    const std::string title = "Recall@" + std::to_string(ec.recall_x) + " (k = " + std::to_string(ec.k) + ")";
    text << std::left << std::setw(28) << title << std::right << std::setw(12) << "Entire Set"
         << std::setw(20) << "Zero-shot Subset" << "\n";
    text << std::left << std::setw(28) << "this run" << std::right << std::setw(12)
         << detail::percent(all.recall) << std::setw(20) << detail::percent(zero.recall) << "\n";
    text << "recall (per-image mean): " << detail::fixed(all.recall, 6) << " entire, "
         << detail::fixed(zero.recall, 6) << " zero-shot\n";
    text << "recall (pooled): " << detail::fixed(all.pooled_recall, 6) << " entire, "
         << detail::fixed(zero.pooled_recall, 6) << " zero-shot\n";
    detail::emit(cfg, out, text.str());
    return kExitOk;
  });
}

}  // namespace fbe
