// Command-line front end: generate / train / track / eval / ablate.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "reftrack/checkpoint.hpp"
#include "reftrack/config.hpp"
#include "reftrack/dataset.hpp"
#include "reftrack/formats.hpp"
#include "reftrack/metrics.hpp"
#include "reftrack/pipeline.hpp"
#include "reftrack/trainer.hpp"

using namespace reftrack;

namespace {

// flag name -> RunConfig key; values resolve as defaults < config file < flags
const std::vector<std::pair<const char*, const char*>> kRunFlagMap = {
    {"--dataset", "dataset"},
    {"--out", "out_dir"},
    {"--epochs", "epochs"},
    {"--clip-len", "clip_len"},
    {"--lr-backbone", "lr_backbone"},
    {"--lr-transformer", "lr_transformer"},
    {"--weight-decay", "weight_decay"},
    {"--grad-clip", "grad_clip"},
    {"--flip-prob", "flip_prob"},
    {"--seed", "seed"},
    {"--checkpoint-every", "checkpoint_every"},
    {"--d", "d"},
    {"--n-detect", "n_detect"},
    {"--enc-layers", "enc_layers"},
    {"--dec-layers", "dec_layers"},
    {"--heads", "heads"},
    {"--alpha", "alpha"},
    {"--beta-conf", "beta_conf"},
    {"--beta-ref", "beta_ref"},
    {"--miss-tolerance", "miss_tolerance"},
    {"--disable-ice", "disable_ice"},
    {"--disable-lgd", "disable_lgd"},
    {"--detach-propagation", "detach_propagation"},
    {"--lambda-cls", "lambda_cls"},
    {"--lambda-l1", "lambda_l1"},
    {"--lambda-giou", "lambda_giou"},
    {"--lambda-ref", "lambda_ref"},
    {"--lambda-mask", "lambda_mask"},
    {"--lambda-dice", "lambda_dice"},
    {"--focal-alpha", "focal_alpha"},
    {"--focal-gamma", "focal_gamma"},
    {"--match-use-box", "match_use_box"},
    {"--match-use-mask", "match_use_mask"},
};

void add_run_config_flags(CLI::App* cmd, std::string& config_path) {
  cmd->add_option("--config", config_path, "key = value config file (defaults < file < flags)");
  for (const auto& [flag, key] : kRunFlagMap) {
    if (std::string(key).rfind("disable", 0) == 0 || std::string(key) == "detach_propagation") {
      cmd->add_flag(flag);
    } else {
      cmd->add_option(flag);
    }
  }
}

RunConfig resolve_run_config(CLI::App* cmd, const std::string& config_path) {
  RunConfig cfg;
  if (!config_path.empty()) apply_key_values(cfg, load_key_value_file(config_path));
  std::map<std::string, std::string> flag_kv;
  for (const auto& [flag, key] : kRunFlagMap) {
    const CLI::Option* opt = cmd->get_option_no_throw(flag);
    if (opt && opt->count() > 0) flag_kv[key] = opt->as<std::string>();
  }
  apply_key_values(cfg, flag_kv);
  return cfg;
}

nlohmann::json result_json(const HotaResult& r) {
  nlohmann::json j;
  j["HOTA"] = r.hota;
  j["DetA"] = r.det_a;
  j["AssA"] = r.ass_a;
  j["DetRe"] = r.det_re;
  j["DetPr"] = r.det_pr;
  j["AssRe"] = r.ass_re;
  j["AssPr"] = r.ass_pr;
  j["LocA"] = r.loc_a;
  j["thresholds"] = r.thresholds;
  j["HOTA_per_threshold"] = r.hota_per_threshold;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"referring multi-object tracking and segmentation toolkit"};
  app.require_subcommand(1);

  SceneSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "render a synthetic referring-tracking benchmark");
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_option("--seed", spec.seed);
  gen->add_option("--frames", spec.frames);
  gen->add_option("--canvas-h", spec.canvas_h);
  gen->add_option("--canvas-w", spec.canvas_w);
  gen->add_option("--min-objects", spec.min_objects);
  gen->add_option("--max-objects", spec.max_objects);
  gen->add_option("--min-radius", spec.min_radius);
  gen->add_option("--max-radius", spec.max_radius);
  gen->add_option("--occlusion-prob", spec.occlusion_prob);
  gen->add_option("--static-prob", spec.static_prob);
  gen->add_option("--train-sequences", spec.train_sequences);
  gen->add_option("--test-sequences", spec.test_sequences);
  gen->add_option("--expressions-per-sequence", spec.expressions_per_sequence);

  std::string train_config_path;
  auto* tr = app.add_subcommand("train", "train on a generated dataset");
  add_run_config_flags(tr, train_config_path);

  std::string ckpt_path, seq_dir, expression, pred_out;
  auto* tk = app.add_subcommand("track", "run online tracking for one expression");
  tk->add_option("--checkpoint", ckpt_path)->required();
  tk->add_option("--sequence", seq_dir, "sequence directory with frame_*.ppm")->required();
  tk->add_option("--expression", expression)->required();
  tk->add_option("--out", pred_out, "prediction file path")->required();

  std::string pred_path, gt_path, mode_name = "box", json_out;
  auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
  ev->add_option("--pred", pred_path)->required();
  ev->add_option("--gt", gt_path)->required();
  ev->add_option("--mode", mode_name)->check(CLI::IsMember({"box", "mask"}));
  ev->add_option("--json", json_out, "also write a machine-readable result record");

  std::string ablate_config_path, sweep = "alpha", table_out;
  auto* ab = app.add_subcommand("ablate", "train and evaluate a sweep of model variants");
  add_run_config_flags(ab, ablate_config_path);
  ab->add_option("--sweep", sweep)->check(CLI::IsMember({"alpha", "components", "cues"}));
  ab->add_option("--table-out", table_out, "write the table to a file as well");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const int unsat = generate_dataset(spec, gen_out);
      std::cout << "dataset written to " << gen_out;
      if (unsat > 0) std::cout << " (" << unsat << " expression files have no referent)";
      std::cout << "\n";
      return 0;
    }

    if (*tr) {
      RunConfig cfg = resolve_run_config(tr, train_config_path);
      TrainResult result = train(cfg);
      std::cout << "checkpoint: " << result.checkpoint_path << "\n";
      std::cout << "log: " << result.log_path << "\n";
      if (!result.epochs.empty()) std::cout << result.epochs.back().format() << "\n";
      return 0;
    }

    if (*tk) {
      Model model = load_checkpoint(ckpt_path).to_model();
      SequenceFile pred = track_sequence(model, seq_dir, expression);
      write_sequence_file(pred_out, pred);
      std::cout << "wrote " << pred.records.size() << " records to " << pred_out << "\n";
      return 0;
    }

    if (*ev) {
      SequenceFile pred = read_sequence_file(pred_path);
      SequenceFile gt = read_sequence_file(gt_path);
      const SimilarityMode mode =
          mode_name == "mask" ? SimilarityMode::MaskIou : SimilarityMode::BoxIou;
      HotaResult r = evaluate_pair(pred, gt, mode);
      std::cout << format_report(r);
      if (!json_out.empty()) {
        std::ofstream out(json_out);
        out << result_json(r).dump(2) << "\n";
      }
      return 0;
    }

    if (*ab) {
      RunConfig cfg = resolve_run_config(ab, ablate_config_path);
      std::vector<AblationRow> rows = run_ablation(cfg, sweep);
      const std::string table = format_ablation_table(rows);
      std::cout << table;
      if (!table_out.empty()) {
        std::ofstream out(table_out);
        out << table;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
