#include "reftrack/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "reftrack/losses.hpp"
#include "reftrack/matching.hpp"

namespace fs = std::filesystem;

namespace reftrack {

std::string EpochStats::format() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "epoch %d loss %.6f cls %.6f ref %.6f l1 %.6f giou %.6f mask %.6f dice %.6f clips %d",
                epoch, total, cls, ref, l1, giou, mask, dice, clips);
  return buf;
}

std::vector<GroundTruthFrame> ground_truth_frames(const SequenceFile& sf) {
  std::vector<GroundTruthFrame> frames(static_cast<std::size_t>(sf.frames));
  for (const TrackRecord& r : sf.records) {
    GtObject obj;
    obj.id = r.id;
    obj.box = r.box;
    obj.referred = r.ref >= 0.5;
    if (r.mask.has_value()) obj.mask = *r.mask;
    frames[static_cast<std::size_t>(r.frame)].objects.push_back(std::move(obj));
  }
  return frames;
}

Tensor flip_image(const Tensor& image) {
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out = Tensor::zeros({h, w, c});
  const double* src = image.data();
  double* dst = out.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        dst[(static_cast<std::size_t>(y) * w + x) * c + ch] =
            src[(static_cast<std::size_t>(y) * w + (w - 1 - x)) * c + ch];
      }
    }
  }
  return out;
}

void flip_ground_truth(GroundTruthFrame& gt) {
  for (GtObject& obj : gt.objects) {
    obj.box.cx = 1.0 - obj.box.cx;
    if (obj.mask.h > 0) {
      for (int y = 0; y < obj.mask.h; ++y) {
        std::reverse(obj.mask.data.begin() + static_cast<long>(y) * obj.mask.w,
                     obj.mask.data.begin() + static_cast<long>(y + 1) * obj.mask.w);
      }
    }
  }
}

void flip_expression_tokens(Expression& expr, const Vocabulary& vocab) {
  const int left = vocab.id("left");
  const int right = vocab.id("right");
  for (int& id : expr.token_ids) {
    if (id == left) id = right;
    else if (id == right) id = left;
  }
}

namespace {

TrackRowUpdate row_update(const DecoderOutput& out, int row, int d) {
  TrackRowUpdate u;
  u.embedding = reshape(slice_rows(out.embeddings, row, 1), {d});
  u.box = reshape(slice_rows(out.boxes, row, 1), {4});
  u.conf = out.conf[static_cast<std::size_t>(row)];
  u.ref = out.ref[static_cast<std::size_t>(row)];
  return u;
}

struct ClipSample {
  const DatasetIndex::SequenceRef* seq = nullptr;
  int gt_index = 0;
  int start = 0;
  bool flip = false;
};

}  // namespace

TrainResult train(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  if (cfg.dataset.empty()) throw std::invalid_argument("train: dataset path required");

  DatasetIndex index = load_dataset_index(cfg.dataset);
  if (index.train.empty()) throw std::runtime_error("train: dataset has no train split");
  if (index.spec.frames < cfg.clip_len) {
    throw std::invalid_argument("train: clip_len exceeds sequence length");
  }
  cfg.model.frame_h = index.spec.canvas_h;
  cfg.model.frame_w = index.spec.canvas_w;

  Vocabulary vocab(index.vocab_tokens);
  cfg.model.vocab_size = vocab.size();

  Rng init_rng(cfg.seed);
  Model model(cfg.model, vocab, init_rng);

  AdamW opt;
  for (const Parameter& p : model.parameters()) {
    const bool backbone = p.name.rfind("visual.", 0) == 0;
    opt.add(p, backbone ? cfg.lr_backbone : cfg.lr_transformer, cfg.weight_decay);
  }

  MatchWeights match_weights;
  match_weights.loss = cfg.loss;
  match_weights.use_box = cfg.match_use_box;
  match_weights.use_mask = cfg.match_use_mask;
  const bool need_masks = cfg.loss.mask > 0 || cfg.loss.dice > 0;

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream rc(fs::path(cfg.out_dir) / "run_config.txt");
    rc << to_key_values(cfg);
  }
  std::ofstream log(fs::path(cfg.out_dir) / "train_log.txt");
  if (!log) throw std::runtime_error("train: cannot write log in " + cfg.out_dir);

  Rng sampler(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  TrainResult result;
  result.log_path = (fs::path(cfg.out_dir) / "train_log.txt").string();
  result.checkpoint_path = (fs::path(cfg.out_dir) / "model.ckpt").string();

  const int d = cfg.model.d;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // seeded Fisher-Yates keeps the visit order reproducible
    std::vector<int> order(index.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(sampler.uniform_int(0, i))]);
    }

    EpochStats stats;
    stats.epoch = epoch;
    for (int seq_pos : order) {
      const DatasetIndex::SequenceRef& seq = index.train[static_cast<std::size_t>(seq_pos)];
      ClipSample clip;
      clip.seq = &seq;
      clip.gt_index = seq.gt_files.empty()
                          ? -1
                          : sampler.uniform_int(0, static_cast<int>(seq.gt_files.size()) - 1);
      clip.start = sampler.uniform_int(0, seq.frames - cfg.clip_len);
      clip.flip = sampler.bernoulli(cfg.flip_prob);
      if (clip.gt_index < 0) continue;

      SequenceFile sf = read_sequence_file(seq.gt_files[static_cast<std::size_t>(clip.gt_index)]);
      std::vector<GroundTruthFrame> gt_frames = ground_truth_frames(sf);
      Expression expr = tokenize(sf.expression, vocab);
      if (clip.flip) flip_expression_tokens(expr, vocab);
      TextEncoder::Output text = model.encode_text(expr);

      TrackSet tracks;
      Tensor clip_loss = Tensor::scalar(0.0);
      double sum_cls = 0, sum_ref = 0, sum_l1 = 0, sum_giou = 0, sum_mask = 0, sum_dice = 0;

      for (int f = clip.start; f < clip.start + cfg.clip_len; ++f) {
        Frame frame;
        frame.image = read_ppm(frame_path(seq.dir, f));
        if (clip.flip) frame.image = flip_image(frame.image);
        frame.index = f;

        GroundTruthFrame gt = gt_frames[static_cast<std::size_t>(f)];
        if (clip.flip) flip_ground_truth(gt);

        Model::FrameResult res = model.run_frame(frame, text, tracks.tracks());
        if (need_masks) model.add_masks_all_rows(res);

        Assignment assign = assign_labels(res.batch, res.output, tracks.tracks(), gt, match_weights);
        LossBreakdown lb = total_loss(res.output, assign, gt, cfg.loss);
        clip_loss = add(clip_loss, lb.total);
        sum_cls += lb.cls;
        sum_ref += lb.ref;
        sum_l1 += lb.l1;
        sum_giou += lb.giou;
        sum_mask += lb.mask;
        sum_dice += lb.dice;

        // lifecycle: advance existing tracks, then convert matched detect
        // rows into track queries for the next frame
        std::vector<TrackRowUpdate> track_rows;
        for (int t = 0; t < tracks.size(); ++t) {
          track_rows.push_back(row_update(res.output, res.batch.n_detect + t, d));
        }
        tracks.propagate(track_rows, cfg.model.alpha, cfg.model.beta_conf, cfg.model.beta_ref,
                         cfg.model.miss_tolerance, cfg.model.detach_propagation);
        if (f + 1 < clip.start + cfg.clip_len) {
          for (auto [row, g] : assign.pairs) {
            if (row < res.batch.n_detect) {
              tracks.spawn_bound(row_update(res.output, row, d),
                                 gt.objects[static_cast<std::size_t>(g)].id,
                                 cfg.model.detach_propagation);
            }
          }
        }
      }

      const double loss_value = clip_loss.value();
      if (!std::isfinite(loss_value)) {
        std::ostringstream diag;
        diag << "train: non-finite loss in " << seq.name << " gt_" << clip.gt_index << " frames ["
             << clip.start << ", " << clip.start + cfg.clip_len << ") flip=" << clip.flip
             << " terms: cls " << sum_cls << " ref " << sum_ref << " l1 " << sum_l1 << " giou "
             << sum_giou << " mask " << sum_mask << " dice " << sum_dice;
        throw std::runtime_error(diag.str());
      }

      opt.zero_grad();
      backward(clip_loss);
      if (cfg.grad_clip > 0) opt.clip_grad_norm(cfg.grad_clip);
      opt.step();

      stats.total += loss_value;
      stats.cls += sum_cls;
      stats.ref += sum_ref;
      stats.l1 += sum_l1;
      stats.giou += sum_giou;
      stats.mask += sum_mask;
      stats.dice += sum_dice;
      stats.clips += 1;
    }

    const double inv = 1.0 / std::max(1, stats.clips);
    stats.total *= inv;
    stats.cls *= inv;
    stats.ref *= inv;
    stats.l1 *= inv;
    stats.giou *= inv;
    stats.mask *= inv;
    stats.dice *= inv;
    log << stats.format() << "\n";
    log.flush();
    result.epochs.push_back(stats);

    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch < cfg.epochs) {
      std::ostringstream rng_state;
      rng_state << sampler.engine();
      save_checkpoint((fs::path(cfg.out_dir) / ("model_epoch" + std::to_string(epoch) + ".ckpt")).string(),
                      Checkpoint::from_model(model, &opt, rng_state.str()));
    }
  }

  std::ostringstream rng_state;
  rng_state << sampler.engine();
  save_checkpoint(result.checkpoint_path, Checkpoint::from_model(model, &opt, rng_state.str()));
  return result;
}

}  // namespace reftrack
