#include "reftrack/tracker.hpp"

#include <stdexcept>

namespace reftrack {

Tensor update_track_query(const Tensor& e_prev, const Tensor& q_c_prev, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("update_track_query: alpha " + std::to_string(alpha) +
                                " outside [0,1]");
  }
  return add(mul_scalar(e_prev, alpha), mul_scalar(q_c_prev, 1.0 - alpha));
}

void TrackSet::clear() {
  tracks_.clear();
  next_id_ = 1;
}

void TrackSet::propagate(const std::vector<TrackRowUpdate>& rows, double alpha, double beta_conf,
                         double beta_ref, int miss_tolerance, bool detach) {
  if (rows.size() != tracks_.size()) {
    throw std::logic_error("propagate: got " + std::to_string(rows.size()) + " rows for " +
                           std::to_string(tracks_.size()) + " tracks");
  }
  std::vector<TrackState> alive;
  alive.reserve(tracks_.size());
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    TrackState& t = tracks_[i];
    const TrackRowUpdate& row = rows[i];
    t.anchor = detach ? row.box.detached() : row.box;
    Tensor blended = update_track_query(row.embedding, t.content, alpha);
    t.content = detach ? blended.detached() : blended;
    t.last_conf = row.conf;
    t.last_ref = row.ref;
    t.age += 1;
    if (row.conf >= beta_conf && row.ref >= beta_ref) {
      t.miss_count = 0;
    } else {
      t.miss_count += 1;
    }
    if (t.miss_count < miss_tolerance) alive.push_back(std::move(t));
  }
  tracks_ = std::move(alive);
}

std::vector<int> TrackSet::spawn(const std::vector<TrackRowUpdate>& detect_rows, double beta_conf,
                                 double beta_ref) {
  std::vector<int> ids;
  for (const TrackRowUpdate& row : detect_rows) {
    if (row.conf >= beta_conf && row.ref >= beta_ref) {
      ids.push_back(push(row, -1, false));
    }
  }
  return ids;
}

int TrackSet::spawn_bound(const TrackRowUpdate& row, int gt_id, bool detach) {
  return push(row, gt_id, detach);
}

int TrackSet::push(const TrackRowUpdate& row, int gt_id, bool detach) {
  TrackState t;
  t.id = next_id_++;
  t.content = detach ? row.embedding.detached() : row.embedding;
  t.anchor = detach ? row.box.detached() : row.box;
  t.last_conf = row.conf;
  t.last_ref = row.ref;
  t.age = 1;
  t.bound_gt = gt_id;
  tracks_.push_back(std::move(t));
  return tracks_.back().id;
}

}  // namespace reftrack
