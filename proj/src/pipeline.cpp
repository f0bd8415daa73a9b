#include "reftrack/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "reftrack/checkpoint.hpp"
#include "reftrack/trainer.hpp"

namespace fs = std::filesystem;

namespace reftrack {

namespace {

TrackRowUpdate row_update(const DecoderOutput& out, int row, int d) {
  TrackRowUpdate u;
  u.embedding = reshape(slice_rows(out.embeddings, row, 1), {d});
  u.box = reshape(slice_rows(out.boxes, row, 1), {4});
  u.conf = out.conf[static_cast<std::size_t>(row)];
  u.ref = out.ref[static_cast<std::size_t>(row)];
  return u;
}

std::vector<std::string> list_frames(const std::string& seq_dir) {
  std::vector<std::string> frames;
  for (int f = 0;; ++f) {
    std::string path = frame_path(seq_dir, f);
    if (!fs::exists(path)) break;
    frames.push_back(std::move(path));
  }
  if (frames.empty()) throw std::runtime_error("track: no frames under " + seq_dir);
  return frames;
}

}  // namespace

SequenceFile track_frames(const Model& model, const std::vector<Tensor>& frames,
                          const std::string& expression, const std::string& sequence_name) {
  NoGradGuard no_grad;
  const ModelConfig& cfg = model.config();
  const int d = cfg.d;

  SequenceFile out;
  out.sequence = sequence_name;
  out.expression = expression;
  out.frames = static_cast<int>(frames.size());
  out.canvas_h = cfg.frame_h;
  out.canvas_w = cfg.frame_w;
  out.mask_h = cfg.frame_h / 4;
  out.mask_w = cfg.frame_w / 4;

  Expression expr = tokenize(expression, model.vocab());
  TextEncoder::Output text = model.encode_text(expr);

  TrackSet tracks;
  for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
    if (frames[static_cast<std::size_t>(f)].dim(0) != cfg.frame_h ||
        frames[static_cast<std::size_t>(f)].dim(1) != cfg.frame_w) {
      throw std::invalid_argument("track: frame " + std::to_string(f) + " is " +
                                  shape_str(frames[static_cast<std::size_t>(f)].shape()) +
                                  " but the checkpoint expects " + std::to_string(cfg.frame_h) +
                                  "x" + std::to_string(cfg.frame_w));
    }
    Frame frame;
    frame.image = frames[static_cast<std::size_t>(f)];
    frame.index = f;
    Model::FrameResult res = model.run_frame(frame, text, tracks.tracks());

    struct Emission {
      int track_id;
      int batch_row;
      double conf, ref;
    };
    std::vector<Emission> emissions;

    // existing tracks first: their rows sit after the detect block
    std::vector<TrackRowUpdate> track_rows;
    for (int t = 0; t < tracks.size(); ++t) {
      const int row = res.batch.n_detect + t;
      track_rows.push_back(row_update(res.output, row, d));
      const double conf = res.output.conf[static_cast<std::size_t>(row)];
      const double ref = res.output.ref[static_cast<std::size_t>(row)];
      if (conf >= cfg.beta_conf && ref >= cfg.beta_ref) {
        emissions.push_back({tracks.tracks()[static_cast<std::size_t>(t)].id, row, conf, ref});
      }
    }
    tracks.propagate(track_rows, cfg.alpha, cfg.beta_conf, cfg.beta_ref, cfg.miss_tolerance);

    // births from detect rows passing both thresholds
    std::vector<TrackRowUpdate> birth_rows;
    std::vector<int> birth_batch_rows;
    for (int r = 0; r < res.batch.n_detect; ++r) {
      const double conf = res.output.conf[static_cast<std::size_t>(r)];
      const double ref = res.output.ref[static_cast<std::size_t>(r)];
      if (conf >= cfg.beta_conf && ref >= cfg.beta_ref) {
        birth_rows.push_back(row_update(res.output, r, d));
        birth_batch_rows.push_back(r);
      }
    }
    std::vector<int> new_ids = tracks.spawn(birth_rows, cfg.beta_conf, cfg.beta_ref);
    for (std::size_t i = 0; i < new_ids.size(); ++i) {
      emissions.push_back({new_ids[i], birth_batch_rows[i],
                           res.output.conf[static_cast<std::size_t>(birth_batch_rows[i])],
                           res.output.ref[static_cast<std::size_t>(birth_batch_rows[i])]});
    }

    if (emissions.empty()) continue;

    // masks only for rows that survived thresholding
    std::vector<int> rows;
    for (const Emission& e : emissions) rows.push_back(e.batch_row);
    Tensor mask_logits = model.masks_for_rows(res, rows);

    for (std::size_t i = 0; i < emissions.size(); ++i) {
      const Emission& e = emissions[i];
      TrackRecord rec;
      rec.frame = f;
      rec.id = e.track_id;
      rec.box = Box{res.output.boxes.at({e.batch_row, 0}), res.output.boxes.at({e.batch_row, 1}),
                    res.output.boxes.at({e.batch_row, 2}), res.output.boxes.at({e.batch_row, 3})};
      rec.conf = e.conf;
      rec.ref = e.ref;
      BinMask mask{out.mask_h, out.mask_w,
                   std::vector<std::uint8_t>(static_cast<std::size_t>(out.mask_h) * out.mask_w, 0)};
      for (int px = 0; px < out.mask_h * out.mask_w; ++px) {
        mask.data[static_cast<std::size_t>(px)] =
            mask_logits.at({static_cast<int>(i), px}) > 0.0 ? 1 : 0;
      }
      rec.mask = std::move(mask);
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

SequenceFile track_sequence(const Model& model, const std::string& seq_dir,
                            const std::string& expression) {
  std::vector<std::string> paths = list_frames(seq_dir);
  std::vector<Tensor> frames;
  frames.reserve(paths.size());
  for (const std::string& p : paths) frames.push_back(read_ppm(p));
  return track_frames(model, frames, expression, fs::path(seq_dir).filename().string());
}

TrajectorySet trajectory_from_file(const SequenceFile& sf, bool referred_only, bool need_masks) {
  if (sf.frames <= 0) throw std::invalid_argument("trajectory: file lacks a frame count");
  TrajectorySet ts;
  ts.frames.assign(static_cast<std::size_t>(sf.frames), {});
  for (const TrackRecord& r : sf.records) {
    if (referred_only && r.ref < 0.5) continue;
    TrajectoryEntry e;
    e.id = r.id;
    e.box = r.box;
    if (r.mask.has_value()) {
      e.mask = *r.mask;
    } else if (need_masks) {
      throw std::invalid_argument("trajectory: record for frame " + std::to_string(r.frame) +
                                  " id " + std::to_string(r.id) + " lacks a mask");
    }
    ts.frames[static_cast<std::size_t>(r.frame)].push_back(std::move(e));
  }
  return ts;
}

HotaResult evaluate_pair(const SequenceFile& pred, const SequenceFile& gt, SimilarityMode mode) {
  const bool need_masks = mode == SimilarityMode::MaskIou;
  TrajectorySet p = trajectory_from_file(pred, false, need_masks);
  TrajectorySet g = trajectory_from_file(gt, true, need_masks);
  return evaluate(p, g, mode);
}

SplitEval evaluate_on_split(const Model& model, const DatasetIndex& index, bool test_split,
                            bool occlusion_only) {
  const auto& seqs = test_split ? index.test : index.train;
  std::vector<TrajectorySet> preds_box, gts_box;
  std::vector<TrajectorySet> preds_mask, gts_mask;
  int pairs = 0;
  for (const auto& seq : seqs) {
    if (occlusion_only && !seq.occlusion) continue;
    for (const std::string& gt_path : seq.gt_files) {
      SequenceFile gt = read_sequence_file(gt_path);
      SequenceFile pred = track_sequence(model, seq.dir, gt.expression);
      preds_box.push_back(trajectory_from_file(pred, false, false));
      gts_box.push_back(trajectory_from_file(gt, true, false));
      preds_mask.push_back(trajectory_from_file(pred, false, true));
      gts_mask.push_back(trajectory_from_file(gt, true, true));
      ++pairs;
    }
  }
  if (pairs == 0) throw std::runtime_error("evaluate: split selection matched no sequences");
  SplitEval out;
  out.box = evaluate_many(preds_box, gts_box, SimilarityMode::BoxIou);
  out.mask = evaluate_many(preds_mask, gts_mask, SimilarityMode::MaskIou);
  out.pairs = pairs;
  return out;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::string& sweep) {
  struct Cell {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Cell> cells;
  auto derived = [&](const std::string& name) {
    RunConfig cfg = base;
    cfg.out_dir = (fs::path(base.out_dir) / name).string();
    return Cell{name, cfg};
  };

  if (sweep == "alpha") {
    for (int i = 0; i <= 5; ++i) {
      const double alpha = 0.2 * i;
      char name[32];
      std::snprintf(name, sizeof(name), "alpha=%.1f", alpha);
      Cell c = derived(name);
      c.cfg.model.alpha = alpha;
      cells.push_back(std::move(c));
    }
  } else if (sweep == "components") {
    cells.push_back(derived("full"));
    Cell no_ice = derived("no_ice");
    no_ice.cfg.model.disable_ice = true;
    cells.push_back(std::move(no_ice));
    Cell no_lgd = derived("no_lgd");
    no_lgd.cfg.model.disable_lgd = true;
    cells.push_back(std::move(no_lgd));
  } else if (sweep == "cues") {
    cells.push_back(derived("box+mask"));
    Cell box_only = derived("box_only");
    box_only.cfg.match_use_mask = false;
    cells.push_back(std::move(box_only));
    Cell mask_only = derived("mask_only");
    mask_only.cfg.match_use_box = false;
    cells.push_back(std::move(mask_only));
  } else {
    throw std::invalid_argument("ablate: unknown sweep '" + sweep + "'");
  }

  std::vector<AblationRow> rows;
  for (Cell& cell : cells) {
    TrainResult tr = train(cell.cfg);
    Model model = load_checkpoint(tr.checkpoint_path).to_model();
    DatasetIndex index = load_dataset_index(cell.cfg.dataset);
    SplitEval ev = evaluate_on_split(model, index, true);
    rows.push_back({cell.name, ev.box, ev.mask});
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %-10s %-10s %-10s %-10s %-10s %-10s\n", "cell",
                "HOTA(box)", "DetA(box)", "AssA(box)", "HOTA(mask)", "DetA(mask)", "AssA(mask)");
  out << line;
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-12s %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n",
                  r.cell.c_str(), r.box.hota, r.box.det_a, r.box.ass_a, r.mask.hota, r.mask.det_a,
                  r.mask.ass_a);
    out << line;
  }
  return out.str();
}

}  // namespace reftrack
