// Command-line front end: fixed-size background encoding, predicate training and
// Recall@X evaluation over VRD-layout annotations.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fbe/commands.hpp"

namespace {

void add_annotation_options(CLI::App* cmd, fbe::RunConfig& cfg) {
  cmd->add_option("--vrd-dir", cfg.vrd_dir,
                  "Directory with objects.json, predicates.json, annotations_{train,test}.json");
  cmd->add_option("--scenes", cfg.scenes_path, "Normalized scene file written by 'ingest'");
  cmd->add_option("--dims", cfg.dims_path, "Image size sidecar: '<image_id> <width> <height>' lines");
}

void add_eval_options(CLI::App* cmd, fbe::RunConfig& cfg) {
  add_annotation_options(cmd, cfg);
  cmd->add_option("--model", cfg.model_path, "Checkpoint written by 'train'");
  cmd->add_option("--predictions", cfg.predictions_path,
                  "Score an external prediction dump instead of running a model");
  cmd->add_option("--features-file", cfg.features_path, "Precomputed pair features");
  cmd->add_option("--recall-x", cfg.recall_x, "Recall cutoff X")->capture_default_str();
  cmd->add_option("--k", cfg.k, "Predicates kept per object pair")->capture_default_str();
  cmd->add_option("--out", cfg.out_path, "Report path (default stdout)");
  cmd->add_option("--table", cfg.table_path, "Per-image recall table path");
  cmd->add_option("--dump-predictions", cfg.dump_predictions_path, "Write scored candidates here");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed-size background encoding for visual relationship detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fbe::kToolVersion));

  fbe::RunConfig cfg;
  std::size_t iterations = 0;
  std::vector<std::size_t> hidden;
  double lr = 0.0, momentum = 0.0, decay = 0.0;

  auto* ingest = app.add_subcommand("ingest", "Convert VRD json annotations to the normalized scene file");
  add_annotation_options(ingest, cfg);
  ingest->add_option("--out", cfg.out_path, "Output path (default stdout)");

  auto* stats = app.add_subcommand("stats", "Print dataset statistics including zero-shot counts");
  add_annotation_options(stats, cfg);
  stats->add_option("--out", cfg.out_path, "Output path (default stdout)");

  auto* encode = app.add_subcommand("encode-fbe", "Write the background encoding of every labeled triplet");
  add_annotation_options(encode, cfg);
  encode->add_option("--rho", cfg.rho, "Forgetting factor in (0, 1)")->capture_default_str();
  encode->add_option("--seed", cfg.seed, "Recorded in the header")->capture_default_str();
  encode->add_option("--out", cfg.out_path, "Output path (default stdout)");

  auto* verify = app.add_subcommand("verify-uniqueness",
                                    "Check that distinct class sequences never share an encoding");
  add_annotation_options(verify, cfg);
  verify->add_option("--rho", cfg.rho, "Forgetting factor in (0, 1)")->capture_default_str();
  verify->add_option("--tolerance", cfg.tolerance, "Max-norm equality tolerance")->capture_default_str();
  verify->add_option("--out", cfg.out_path, "Report path (default stdout)");

  auto* trn = app.add_subcommand("train", "Train the predicate classifier on the train split");
  add_annotation_options(trn, cfg);
  trn->add_option("--rho", cfg.rho, "Forgetting factor in (0, 1)")->capture_default_str();
  trn->add_option("--seed", cfg.seed, "Seed for initialization and image order")->capture_default_str();
  trn->add_option("--features", cfg.features, "Pair feature provider: geometric | file")->capture_default_str();
  trn->add_option("--features-file", cfg.features_path, "Precomputed pair features");
  trn->add_flag("--no-background", cfg.no_background, "Train on pair features only");
  auto* it_opt = trn->add_option("--iterations", iterations, "Training iterations (default 20000)");
  auto* hid_opt = trn->add_option("--hidden", hidden, "Hidden widths (default 256,64)")->delimiter(',');
  auto* lr_opt = trn->add_option("--lr", lr, "Learning rate (default 0.005)");
  auto* mom_opt = trn->add_option("--momentum", momentum, "Momentum (default 0.9)");
  auto* wd_opt = trn->add_option("--weight-decay", decay, "Weight decay (default 0.0005)");
  trn->add_option("--out", cfg.out_path, "Checkpoint path")->required();

  auto* evp = app.add_subcommand("eval-predicate", "Recall@X for predicate classification");
  add_eval_options(evp, cfg);

  auto* evr = app.add_subcommand("eval-reldet", "Recall@X for relationship detection");
  add_eval_options(evr, cfg);
  evr->add_option("--detections", cfg.detections_path, "Detections file");
  evr->add_option("--iou-thresh", cfg.iou_threshold, "Box match threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fbe::kExitUsage;
  }

  if (*it_opt) cfg.iterations = iterations;
  if (*hid_opt) cfg.hidden = hidden;
  if (*lr_opt) cfg.learning_rate = lr;
  if (*mom_opt) cfg.momentum = momentum;
  if (*wd_opt) cfg.weight_decay = decay;

  auto& out = std::cout;
  auto& err = std::cerr;
  if (*ingest) return fbe::cmd_ingest(cfg, out, err);
  if (*stats) return fbe::cmd_stats(cfg, out, err);
  if (*encode) return fbe::cmd_encode_fbe(cfg, out, err);
  if (*verify) return fbe::cmd_verify_uniqueness(cfg, out, err);
  if (*trn) return fbe::cmd_train(cfg, out, err);
  if (*evp) return fbe::cmd_eval(cfg, fbe::Task::predicate_classification, out, err);
  if (*evr) return fbe::cmd_eval(cfg, fbe::Task::relationship_detection, out, err);
  return fbe::kExitUsage;
}
