#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reftrack/metrics.hpp"
#include "reftrack/nn.hpp"
#include "support/hota_oracle.hpp"

using namespace reftrack;

namespace {

TrajectoryEntry entry(int id, Box b) { return {id, b, std::nullopt}; }

TrajectorySet single_object_track(int frames, int id, double step = 0.0) {
  TrajectorySet ts;
  for (int f = 0; f < frames; ++f) {
    ts.frames.push_back({entry(id, Box{0.3 + step * f, 0.4, 0.2, 0.2})});
  }
  return ts;
}

}  // namespace

TEST_CASE("similarity hand cases") {
  TrajectoryEntry a = entry(1, Box{0.5, 0.5, 0.2, 0.2});
  CHECK(similarity(a, a, SimilarityMode::BoxIou) == doctest::Approx(1.0).epsilon(1e-12));

  TrajectoryEntry c = entry(1, Box{1.0, 1.0, 2.0, 2.0});
  TrajectoryEntry d = entry(2, Box{2.0, 2.0, 2.0, 2.0});
  CHECK(similarity(c, d, SimilarityMode::BoxIou) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));

  TrajectoryEntry m1{1, {}, BinMask{2, 2, {1, 1, 0, 0}}};
  TrajectoryEntry m2{2, {}, BinMask{2, 2, {0, 0, 1, 1}}};
  CHECK(similarity(m1, m2, SimilarityMode::MaskIou) == 0.0);
  CHECK(similarity(m1, m1, SimilarityMode::MaskIou) == 1.0);
  CHECK_THROWS_AS(similarity(entry(1, {}), m1, SimilarityMode::MaskIou), std::invalid_argument);
}

TEST_CASE("perfect tracking scores 1.0 on every metric") {
  TrajectorySet gt = single_object_track(10, 1, 0.02);
  TrajectorySet pred = single_object_track(10, 5, 0.02);
  HotaResult r = evaluate(pred, gt, SimilarityMode::BoxIou);
  CHECK(r.hota == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.det_a == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.ass_a == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.det_re == doctest::Approx(1.0));
  CHECK(r.det_pr == doctest::Approx(1.0));
  CHECK(r.ass_re == doctest::Approx(1.0));
  CHECK(r.ass_pr == doctest::Approx(1.0));
  CHECK(r.loc_a == doctest::Approx(1.0));
}

TEST_CASE("mid-sequence identity switch gives HOTA sqrt(1/2) at every threshold") {
  TrajectorySet gt = single_object_track(10, 1);
  TrajectorySet pred;
  for (int f = 0; f < 10; ++f) {
    pred.frames.push_back({entry(f < 5 ? 100 : 200, Box{0.3, 0.4, 0.2, 0.2})});
  }
  HotaResult r = evaluate(pred, gt, SimilarityMode::BoxIou);
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    CHECK(r.det_a_per_threshold[i] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.ass_a_per_threshold[i] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(r.hota_per_threshold[i] - std::sqrt(0.5)) <= 1e-9);
  }
  CHECK(std::abs(r.hota - std::sqrt(0.5)) <= 1e-9);
}

TEST_CASE("empty predictions score zero") {
  TrajectorySet gt = single_object_track(6, 1);
  TrajectorySet pred;
  pred.frames.assign(6, {});
  HotaResult r = evaluate(pred, gt, SimilarityMode::BoxIou);
  CHECK(r.det_re == 0.0);
  CHECK(r.det_a == 0.0);
  CHECK(r.hota == 0.0);
}

TEST_CASE("geometric-mean identity holds per threshold") {
  Rng rng(9);
  TrajectorySet gt, pred;
  for (int f = 0; f < 8; ++f) {
    std::vector<TrajectoryEntry> gtf, pf;
    for (int o = 0; o < 3; ++o) {
      Box b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.2, 0.25};
      gtf.push_back(entry(o, b));
      Box shifted = b;
      shifted.cx += rng.uniform(-0.1, 0.1);
      if (rng.bernoulli(0.8)) pf.push_back(entry(o + (rng.bernoulli(0.2) ? 10 : 0), shifted));
    }
    gt.frames.push_back(gtf);
    pred.frames.push_back(pf);
  }
  HotaResult r = evaluate(pred, gt, SimilarityMode::BoxIou);
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    CHECK(std::abs(r.hota_per_threshold[i] -
                   std::sqrt(r.det_a_per_threshold[i] * r.ass_a_per_threshold[i])) <= 1e-12);
  }
  CHECK(r.hota >= 0.0);
  CHECK(r.hota <= 1.0);
  CHECK(r.loc_a >= 0.0);
  CHECK(r.loc_a <= 1.0);
}

TEST_CASE("adding a pure false positive never improves DetA or HOTA") {
  TrajectorySet gt = single_object_track(6, 1);
  TrajectorySet pred = single_object_track(6, 9);
  HotaResult base = evaluate(pred, gt, SimilarityMode::BoxIou);

  TrajectorySet noisy = pred;
  noisy.frames[2].push_back(entry(77, Box{0.9, 0.9, 0.1, 0.1}));  // overlaps nothing
  HotaResult r = evaluate(noisy, gt, SimilarityMode::BoxIou);
  CHECK(r.det_a <= base.det_a);
  CHECK(r.hota <= base.hota);
}

TEST_CASE("duplicate prediction ids in a frame are rejected") {
  TrajectorySet gt = single_object_track(2, 1);
  TrajectorySet pred = single_object_track(2, 4);
  pred.frames[1].push_back(entry(4, Box{0.8, 0.8, 0.1, 0.1}));
  CHECK_THROWS_AS(evaluate(pred, gt, SimilarityMode::BoxIou), std::invalid_argument);
}

TEST_CASE("frame range mismatch is rejected") {
  TrajectorySet gt = single_object_track(3, 1);
  TrajectorySet pred = single_object_track(4, 1);
  CHECK_THROWS_AS(evaluate(pred, gt, SimilarityMode::BoxIou), std::invalid_argument);
}

TEST_CASE("evaluator matches the exhaustive reference on random instances") {
  Rng rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const int frames = rng.uniform_int(1, 6);
    const int n_gt = rng.uniform_int(1, 3);
    TrajectorySet gt, pred;
    std::vector<reftrack::testing::OracleFrame> oracle_frames;

    for (int f = 0; f < frames; ++f) {
      std::vector<TrajectoryEntry> gtf, pf;
      for (int o = 0; o < n_gt; ++o) {
        if (rng.bernoulli(0.85)) {
          gtf.push_back(entry(o, Box{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                     rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)}));
        }
      }
      const int n_pred = rng.uniform_int(0, 3);
      for (int p = 0; p < n_pred; ++p) {
        pf.push_back(entry(p + (rng.bernoulli(0.15) ? 5 : 0),
                           Box{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                               rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)}));
      }
      // drop accidental duplicate pred ids
      std::vector<TrajectoryEntry> dedup;
      for (const auto& e : pf) {
        bool dup = false;
        for (const auto& d : dedup) dup = dup || d.id == e.id;
        if (!dup) dedup.push_back(e);
      }
      gt.frames.push_back(gtf);
      pred.frames.push_back(dedup);

      reftrack::testing::OracleFrame of;
      for (const auto& e : dedup) of.pred_ids.push_back(e.id);
      for (const auto& e : gtf) of.gt_ids.push_back(e.id);
      of.sim.assign(dedup.size(), std::vector<double>(gtf.size(), 0.0));
      for (std::size_t i = 0; i < dedup.size(); ++i) {
        for (std::size_t j = 0; j < gtf.size(); ++j) {
          of.sim[i][j] = box_iou(dedup[i].box, gtf[j].box);
        }
      }
      oracle_frames.push_back(of);
    }

    HotaResult mine = evaluate(pred, gt, SimilarityMode::BoxIou);
    auto ref = reftrack::testing::hota_reference(oracle_frames);
    CHECK(mine.det_a == doctest::Approx(ref.det_a).epsilon(1e-9));
    CHECK(mine.ass_a == doctest::Approx(ref.ass_a).epsilon(1e-9));
    CHECK(mine.hota == doctest::Approx(ref.hota).epsilon(1e-9));
  }
}

TEST_CASE("multi-sequence evaluation concatenates counts") {
  TrajectorySet gt1 = single_object_track(4, 1);
  TrajectorySet pred1 = single_object_track(4, 1);
  TrajectorySet gt2 = single_object_track(4, 1);
  TrajectorySet pred2;
  pred2.frames.assign(4, {});

  HotaResult r = evaluate_many({pred1, pred2}, {gt1, gt2}, SimilarityMode::BoxIou);
  // half the gt detections are found: DetRe 0.5 at every threshold
  CHECK(r.det_re == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.det_a == doctest::Approx(0.5).epsilon(1e-12));
}
