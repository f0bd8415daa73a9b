#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reftrack/losses.hpp"
#include "reftrack/matching.hpp"
#include "support/finite_diff.hpp"
#include "support/oracles.hpp"

using namespace reftrack;
using reftrack::testing::brute_force_assignment;
using reftrack::testing::check_gradients;

namespace {

DecoderOutput make_output(const std::vector<double>& conf_logits,
                          const std::vector<std::array<double, 4>>& boxes,
                          const std::vector<double>& ref_logits = {},
                          const std::vector<std::vector<double>>& mask_logits = {}) {
  const int rows = static_cast<int>(conf_logits.size());
  DecoderOutput out;
  out.conf_logits = Tensor::from({rows, 1}, conf_logits);
  std::vector<double> ref = ref_logits.empty() ? conf_logits : ref_logits;
  out.ref_logits = Tensor::from({rows, 1}, ref);
  std::vector<double> flat;
  for (const auto& b : boxes) flat.insert(flat.end(), b.begin(), b.end());
  out.boxes = Tensor::from({rows, 4}, flat);
  out.embeddings = Tensor::zeros({rows, 4});
  if (!mask_logits.empty()) {
    std::vector<double> m;
    for (const auto& row : mask_logits) m.insert(m.end(), row.begin(), row.end());
    out.mask_logits = Tensor::from({rows, static_cast<int>(mask_logits[0].size())}, m);
  }
  out.conf.resize(static_cast<std::size_t>(rows));
  out.ref.resize(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    out.conf[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-conf_logits[static_cast<std::size_t>(i)]));
    out.ref[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-ref[static_cast<std::size_t>(i)]));
  }
  return out;
}

QueryBatch make_batch(int n_detect, const std::vector<int>& track_ids) {
  QueryBatch b;
  b.n_detect = n_detect;
  b.n_track = static_cast<int>(track_ids.size());
  b.origins.assign(static_cast<std::size_t>(b.rows()), RowOrigin::Detect);
  b.track_ids.assign(static_cast<std::size_t>(b.rows()), -1);
  for (std::size_t i = 0; i < track_ids.size(); ++i) {
    b.origins[static_cast<std::size_t>(n_detect) + i] = RowOrigin::Track;
    b.track_ids[static_cast<std::size_t>(n_detect) + i] = track_ids[i];
  }
  return b;
}

TrackState bound_track(int id, int gt_id) {
  TrackState t;
  t.id = id;
  t.bound_gt = gt_id;
  t.content = Tensor::zeros({4});
  t.anchor = Tensor::from({4}, {0.5, 0.5, 0.2, 0.2});
  return t;
}

GtObject gt_obj(int id, Box b, bool referred, BinMask mask = {}) {
  GtObject o;
  o.id = id;
  o.box = b;
  o.referred = referred;
  o.mask = mask;
  return o;
}

}  // namespace

TEST_CASE("giou hand geometry") {
  // identical unit boxes
  Box unit{0.5, 0.5, 1.0, 1.0};
  CHECK(giou(unit, unit) == doctest::Approx(1.0).epsilon(1e-12));

  // corners [0,0]-[1,1] vs [2,0]-[3,1]: 0 - (3-2)/3
  Box a{0.5, 0.5, 1.0, 1.0};
  Box b{2.5, 0.5, 1.0, 1.0};
  CHECK(giou(a, b) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));

  // corners [0,0]-[2,2] vs [1,1]-[3,3]: IoU 1/7, enclosing 3x3
  Box c{1.0, 1.0, 2.0, 2.0};
  Box d{2.0, 2.0, 2.0, 2.0};
  CHECK(giou(c, d) == doctest::Approx(1.0 / 7.0 - 2.0 / 9.0).epsilon(1e-12));

  // degenerate zero-area boxes take the IoU->0 limit
  Box point{0.2, 0.2, 0.0, 0.0};
  CHECK(giou(point, point) == 0.0);
  CHECK(giou(point, unit) == doctest::Approx(0.0 - (1.0 - 1.0) / 1.0).epsilon(1e-9));
  CHECK(giou(a, b) >= -1.0);
  CHECK(giou(a, b) <= 1.0);
}

TEST_CASE("mask iou including the empty-over-empty rule") {
  BinMask m1{2, 2, {1, 1, 0, 0}};
  BinMask m2{2, 2, {1, 0, 1, 0}};
  CHECK(mask_iou(m1, m1) == 1.0);
  CHECK(mask_iou(m1, m2) == doctest::Approx(1.0 / 3.0));
  BinMask empty{2, 2, {0, 0, 0, 0}};
  CHECK(mask_iou(empty, empty) == 0.0);
  CHECK(mask_iou(m1, empty) == 0.0);
}

TEST_CASE("binary dice loss is zero exactly for identical nonempty masks") {
  BinMask m1{2, 2, {1, 1, 0, 0}};
  BinMask m2{2, 2, {0, 0, 1, 1}};
  BinMask empty{2, 2, {0, 0, 0, 0}};
  CHECK(dice_loss_binary(m1, m1) == 0.0);
  CHECK(dice_loss_binary(m1, m2) == 1.0);
  CHECK(dice_loss_binary(empty, empty) == 1.0);
  CHECK(dice_loss_binary(m1, empty) == 1.0);
  BinMask overlap{2, 2, {1, 0, 1, 0}};
  const double v = dice_loss_binary(m1, overlap);
  CHECK(v > 0.0);
  CHECK(v < 1.0);
}

TEST_CASE("hungarian solves the 2x2 hand case") {
  Assignment a = hungarian({{1, 2}, {3, 0}});
  REQUIRE(a.pairs.size() == 2);
  CHECK(a.pairs[0] == std::pair<int, int>{0, 0});
  CHECK(a.pairs[1] == std::pair<int, int>{1, 1});
  CHECK(assignment_total({{1, 2}, {3, 0}}, a) == 1.0);
}

TEST_CASE("hungarian picks the diagonal on diagonal-dominant matrices") {
  std::vector<std::vector<double>> cost(4, std::vector<double>(4, 10.0));
  for (int i = 0; i < 4; ++i) cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = i * 0.1;
  Assignment a = hungarian(cost);
  for (int i = 0; i < 4; ++i) CHECK(a.pairs[static_cast<std::size_t>(i)] == std::pair<int, int>{i, i});
}

TEST_CASE("hungarian equals brute force on random matrices incl. rectangular") {
  Rng rng(123);
  for (int trial = 0; trial < 120; ++trial) {
    const int m = rng.uniform_int(1, 6);
    const int n = rng.uniform_int(1, 6);
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(m),
                                          std::vector<double>(static_cast<std::size_t>(n)));
    for (auto& row : cost) {
      for (double& v : row) v = rng.uniform(-5.0, 5.0);
    }
    Assignment a = hungarian(cost);
    CHECK(a.pairs.size() == static_cast<std::size_t>(std::min(m, n)));
    const double best = brute_force_assignment(cost);
    CHECK(assignment_total(cost, a) == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("hungarian rejects NaN") {
  CHECK_THROWS_AS(hungarian({{std::nan(""), 1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("hungarian handles empty input") {
  Assignment a = hungarian({});
  CHECK(a.pairs.empty());
}

TEST_CASE("match cost prefers the exact match") {
  // prediction 0 reproduces gt 0 exactly; any mismatched pairing costs more
  auto out = make_output({4.0, -1.0},
                         {{{0.3, 0.3, 0.2, 0.2}}, {{0.7, 0.7, 0.1, 0.1}}});
  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(1, Box{0.3, 0.3, 0.2, 0.2}, true));
  gt.objects.push_back(gt_obj(2, Box{0.8, 0.6, 0.3, 0.3}, true));
  MatchWeights mw;
  mw.use_mask = false;
  auto cost = match_cost(out, {0, 1}, gt, {0, 1}, mw);
  CHECK(cost[0][0] < cost[0][1]);
  CHECK(cost[0][0] < cost[1][0]);
}

TEST_CASE("zero mask weights reduce the cost to the box-only form") {
  auto out = make_output({1.0}, {{{0.4, 0.4, 0.2, 0.2}}}, {},
                         {{1.0, -1.0, 0.5, -0.5}});
  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(1, Box{0.5, 0.5, 0.2, 0.2}, true, BinMask{2, 2, {1, 0, 0, 0}}));

  MatchWeights box_only;
  box_only.use_mask = false;
  MatchWeights zero_lambda;
  zero_lambda.loss.mask = 0.0;
  zero_lambda.loss.dice = 0.0;
  auto c1 = match_cost(out, {0}, gt, {0}, box_only);
  auto c2 = match_cost(out, {0}, gt, {0}, zero_lambda);
  CHECK(c1[0][0] == doctest::Approx(c2[0][0]).epsilon(1e-12));
}

TEST_CASE("empty gt list yields an empty cost matrix and no matches") {
  auto out = make_output({1.0}, {{{0.4, 0.4, 0.2, 0.2}}});
  GroundTruthFrame gt;
  MatchWeights mw;
  mw.use_mask = false;
  auto cost = match_cost(out, {0}, gt, {}, mw);
  CHECK(cost.size() == 1);
  CHECK(cost[0].empty());

  QueryBatch batch = make_batch(1, {});
  Assignment a = assign_labels(batch, out, {}, gt, mw);
  CHECK(a.pairs.empty());
  CHECK(a.unmatched_rows == std::vector<int>{0});
}

TEST_CASE("mask evidence breaks box-cost ties") {
  // identical boxes and scores; masks crossed between rows and gts
  const double big = 9.0;
  auto out = make_output(
      {0.0, 0.0},
      {{{0.5, 0.5, 0.2, 0.2}}, {{0.5, 0.5, 0.2, 0.2}}}, {},
      {{-big, -big, -big, big}, {big, -big, -big, -big}});
  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(1, Box{0.5, 0.5, 0.2, 0.2}, true, BinMask{2, 2, {1, 0, 0, 0}}));
  gt.objects.push_back(gt_obj(2, Box{0.5, 0.5, 0.2, 0.2}, true, BinMask{2, 2, {0, 0, 0, 1}}));

  MatchWeights box_only;
  box_only.use_mask = false;
  Assignment plain = assign_labels(make_batch(2, {}), out, {}, gt, box_only);
  REQUIRE(plain.pairs.size() == 2);
  CHECK(plain.pairs[0] == std::pair<int, int>{0, 0});  // deterministic tie-break

  MatchWeights with_mask;
  Assignment masked = assign_labels(make_batch(2, {}), out, {}, gt, with_mask);
  REQUIRE(masked.pairs.size() == 2);
  CHECK(masked.pairs[0] == std::pair<int, int>{0, 1});
  CHECK(masked.pairs[1] == std::pair<int, int>{1, 0});
}

TEST_CASE("first frame reduces to pure hungarian over referred gts") {
  auto out = make_output({3.0, 2.0, -2.0},
                         {{{0.2, 0.2, 0.1, 0.1}}, {{0.7, 0.7, 0.2, 0.2}}, {{0.5, 0.5, 0.5, 0.5}}});
  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(10, Box{0.21, 0.2, 0.1, 0.1}, true));
  gt.objects.push_back(gt_obj(11, Box{0.7, 0.71, 0.2, 0.2}, true));
  gt.objects.push_back(gt_obj(12, Box{0.5, 0.5, 0.4, 0.4}, false));  // visible, not referred

  MatchWeights mw;
  mw.use_mask = false;
  Assignment a = assign_labels(make_batch(3, {}), out, {}, gt, mw);
  REQUIRE(a.pairs.size() == 2);
  CHECK(a.pairs[0] == std::pair<int, int>{0, 0});
  CHECK(a.pairs[1] == std::pair<int, int>{1, 1});
  // the non-referred object is never a positive target
  CHECK(a.unmatched_gts == std::vector<int>{2});
}

TEST_CASE("track rows keep their binding regardless of cost") {
  auto out = make_output({0.0, 0.0},
                         {{{0.9, 0.9, 0.1, 0.1}}, {{0.9, 0.9, 0.1, 0.1}}});
  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(7, Box{0.1, 0.1, 0.1, 0.1}, true));  // far from the track's row

  MatchWeights mw;
  mw.use_mask = false;
  QueryBatch batch = make_batch(1, {5});
  std::vector<TrackState> tracks{bound_track(5, 7)};
  Assignment a = assign_labels(batch, out, tracks, gt, mw);
  REQUIRE(a.pairs.size() == 1);
  CHECK(a.pairs[0] == std::pair<int, int>{1, 0});  // track row beats every detect row
  CHECK(a.unmatched_rows == std::vector<int>{0});
}

TEST_CASE("absent or non-referred bound gt leaves the track row negative") {
  auto out = make_output({0.0, 0.0}, {{{0.5, 0.5, 0.1, 0.1}}, {{0.5, 0.5, 0.1, 0.1}}});
  MatchWeights mw;
  mw.use_mask = false;
  QueryBatch batch = make_batch(1, {5});
  std::vector<TrackState> tracks{bound_track(5, 7)};

  GroundTruthFrame absent;  // gt 7 vanished this frame
  Assignment a = assign_labels(batch, out, tracks, absent, mw);
  CHECK(a.pairs.empty());
  CHECK(a.unmatched_rows == std::vector<int>{0, 1});

  GroundTruthFrame unreferred;
  unreferred.objects.push_back(gt_obj(7, Box{0.5, 0.5, 0.1, 0.1}, false));
  Assignment b = assign_labels(batch, out, tracks, unreferred, mw);
  CHECK(b.pairs.empty());
  // the claimed id stays off-limits for detect rows even while not referred
  CHECK(b.unmatched_gts == std::vector<int>{0});
}

TEST_CASE("duplicate gt ids are rejected") {
  auto out = make_output({0.0}, {{{0.5, 0.5, 0.1, 0.1}}});
  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(3, Box{0.5, 0.5, 0.1, 0.1}, true));
  gt.objects.push_back(gt_obj(3, Box{0.6, 0.6, 0.1, 0.1}, true));
  MatchWeights mw;
  CHECK_THROWS_AS(assign_labels(make_batch(1, {}), out, {}, gt, mw), std::invalid_argument);
}

TEST_CASE("total_loss vanishes on perfect predictions") {
  const double big = 30.0;
  auto out = make_output(
      {big, -big}, {{{0.3, 0.3, 0.2, 0.2}}, {{0.8, 0.8, 0.1, 0.1}}}, {big, -big},
      {{big, -big, -big, -big}, {-big, -big, -big, -big}});
  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(1, Box{0.3, 0.3, 0.2, 0.2}, true, BinMask{2, 2, {1, 0, 0, 0}}));

  Assignment a;
  a.pairs = {{0, 0}};
  a.unmatched_rows = {1};
  LossWeights w;
  auto breakdown = total_loss(out, a, gt, w);
  CHECK(breakdown.positives == 1);
  CHECK(breakdown.l1 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(breakdown.giou < 1e-6);
  CHECK(breakdown.cls < 1e-6);
  CHECK(breakdown.ref < 1e-6);
  CHECK(breakdown.mask < 1e-6);
  CHECK(breakdown.dice < 1e-6);
  CHECK(breakdown.value() < 1e-5);
}

TEST_CASE("total_loss is invariant to gt order") {
  auto out = make_output({2.0, 1.0, -1.0},
                         {{{0.3, 0.3, 0.2, 0.2}}, {{0.7, 0.7, 0.2, 0.2}}, {{0.5, 0.5, 0.3, 0.3}}},
                         {1.5, 0.5, -0.5},
                         {{1, 0, 0, -1}, {0, 1, -1, 0}, {0, 0, 0, 0}});
  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(1, Box{0.31, 0.3, 0.2, 0.2}, true, BinMask{2, 2, {1, 0, 0, 0}}));
  gt.objects.push_back(gt_obj(2, Box{0.7, 0.72, 0.2, 0.2}, true, BinMask{2, 2, {0, 1, 0, 0}}));

  GroundTruthFrame swapped;
  swapped.objects = {gt.objects[1], gt.objects[0]};

  MatchWeights mw;
  LossWeights w;
  auto a1 = assign_labels(make_batch(3, {}), out, {}, gt, mw);
  auto a2 = assign_labels(make_batch(3, {}), out, {}, swapped, mw);
  const double v1 = total_loss(out, a1, gt, w).value();
  const double v2 = total_loss(out, a2, swapped, w).value();
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-12));
}

TEST_CASE("total_loss gradients match finite differences through the heads") {
  Rng rng(41);
  const int rows = 3, d = 8, pixels = 4;
  Tensor emb = Tensor::zeros({rows, d}, true);
  for (std::size_t i = 0; i < emb.numel(); ++i) emb.data()[i] = rng.uniform(-1, 1);
  Linear conf_head(d, 1, rng), ref_head(d, 1, rng);
  Mlp box_head(d, d, 4, 3, rng);
  Mlp seg_head(d, d, pixels, 2, rng);
  Tensor anchors = Tensor::from({rows, 4}, {0.3, 0.3, 0.2, 0.2, 0.7, 0.7, 0.2, 0.2, 0.5, 0.5, 0.3, 0.3});

  GroundTruthFrame gt;
  gt.objects.push_back(gt_obj(1, Box{0.35, 0.3, 0.22, 0.2}, true, BinMask{2, 2, {1, 0, 0, 0}}));
  gt.objects.push_back(gt_obj(2, Box{0.65, 0.7, 0.2, 0.25}, true, BinMask{2, 2, {0, 1, 1, 0}}));
  Assignment a;
  a.pairs = {{0, 0}, {1, 1}};
  a.unmatched_rows = {2};
  LossWeights w;

  auto loss_fn = [&] {
    DecoderOutput out;
    out.embeddings = emb;
    out.boxes = sigmoid(add(logit(anchors), box_head.forward(emb)));
    out.conf_logits = conf_head.forward(emb);
    out.ref_logits = ref_head.forward(emb);
    out.mask_logits = seg_head.forward(emb);
    return total_loss(out, a, gt, w).total;
  };

  ParamList params;
  conf_head.collect("conf", params);
  ref_head.collect("ref", params);
  box_head.collect("box", params);
  seg_head.collect("seg", params);
  std::vector<Tensor> leaves{emb};
  for (auto& p : params) leaves.push_back(p.tensor);
  Rng idx_rng(17);
  auto report = check_gradients(loss_fn, leaves, 1e-5, 10, &idx_rng);
  CHECK(report.worst_rel < 1e-3);
}
