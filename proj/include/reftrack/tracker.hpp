#pragma once

#include <vector>

#include "reftrack/tensor.hpp"

namespace reftrack {

/// One tracked object carried across frames.
struct TrackState {
  int id = -1;
  Tensor content;     // q^c, [d]
  Tensor anchor;      // box prior, [4] normalized cx,cy,w,h
  double last_conf = 0.0;
  double last_ref = 0.0;
  int miss_count = 0;
  int age = 0;        // frames alive
  int bound_gt = -1;  // training-time label binding; -1 at inference
};

/// Momentum content update: alpha * e_prev + (1 - alpha) * q_c_prev.
Tensor update_track_query(const Tensor& e_prev, const Tensor& q_c_prev, double alpha);

/// Per-row decoder result handed to the lifecycle state machine.
struct TrackRowUpdate {
  Tensor embedding;  // [d]
  Tensor box;        // [4]
  double conf = 0.0;
  double ref = 0.0;
};

/// Alive tracks in stable order plus the id counter. Single-owner mutable
/// state advanced frame by frame.
class TrackSet {
 public:
  const std::vector<TrackState>& tracks() const { return tracks_; }
  std::vector<TrackState>& tracks() { return tracks_; }
  int size() const { return static_cast<int>(tracks_.size()); }
  bool empty() const { return tracks_.empty(); }
  int next_id() const { return next_id_; }
  void clear();

  /// Advances every alive track from its decoder row (same order as
  /// tracks()). Anchor <- predicted box, content <- momentum blend; the miss
  /// counter resets when both scores clear the thresholds and the track dies
  /// after miss_tolerance consecutive misses.
  void propagate(const std::vector<TrackRowUpdate>& rows, double alpha, double beta_conf,
                 double beta_ref, int miss_tolerance, bool detach = false);

  /// Inference births: every row passing both thresholds becomes a track.
  /// Returns the new ids in row order.
  std::vector<int> spawn(const std::vector<TrackRowUpdate>& detect_rows, double beta_conf,
                         double beta_ref);

  /// Training birth from a matched detect row, bound to a ground-truth id.
  int spawn_bound(const TrackRowUpdate& row, int gt_id, bool detach = false);

 private:
  int push(const TrackRowUpdate& row, int gt_id, bool detach);

  std::vector<TrackState> tracks_;
  int next_id_ = 1;
};

}  // namespace reftrack
