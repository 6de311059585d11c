#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sparsedet/eval.hpp"
#include "sparsedet/rng.hpp"
#include "support/oracles.hpp"

using namespace sparsedet;

namespace {

Detection det(int scene, int cls, const OrientedBox& box, double score) {
  return {scene, cls, box, score};
}

GtBox gt(int scene, int cls, const OrientedBox& box) { return {scene, cls, box}; }

// Random single-class evaluation problem: some detections overlap gts, some
// are background noise.
void random_problem(Rng& rng, std::vector<Detection>& dets, std::vector<GtBox>& gts) {
  dets.clear();
  gts.clear();
  const int n_scenes = rng.uniform_int(1, 3);
  for (int s = 0; s < n_scenes; ++s) {
    const int n_gt = rng.uniform_int(1, 6);
    for (int g = 0; g < n_gt; ++g) {
      const OrientedBox box(rng.uniform(3, 17), rng.uniform(3, 17), rng.uniform(2, 4),
                            rng.uniform(1.5, 3), rng.uniform(-1.5, 1.5));
      gts.push_back(::gt(s, 0, box));
      if (rng.uniform() < 0.8) {
        // jittered true positive candidate
        dets.push_back(det(s, 0,
                           OrientedBox(box.cx() + rng.normal(0, 0.3),
                                       box.cy() + rng.normal(0, 0.3),
                                       box.w() * rng.uniform(0.85, 1.15),
                                       box.h() * rng.uniform(0.85, 1.15),
                                       box.theta() + rng.normal(0, 0.1)),
                           rng.uniform(0.3, 1.0)));
      }
    }
    for (int f = rng.uniform_int(0, 4); f > 0; --f) {
      dets.push_back(det(s, 0,
                         OrientedBox(rng.uniform(3, 17), rng.uniform(3, 17),
                                     rng.uniform(2, 4), rng.uniform(1.5, 3),
                                     rng.uniform(-1.5, 1.5)),
                         rng.uniform(0.0, 0.6)));
    }
  }
}

}  // namespace

TEST_CASE("decode basics") {
  // Hand-crafted dense output on a 4x4 grid, one class.
  DenseOutput out;
  out.class_logits = Grid3<double>(4, 4, 1, -10.0);
  out.quality = Grid2<double>(4, 4, 0.9);
  out.regression = Grid3<double>(4, 4, 5, 0.0);

  SUBCASE("threshold above every score yields nothing") {
    CHECK(decode(out, 0, {.score_thr = 0.9, .nms_thr = 0.5}).empty());
  }
  SUBCASE("single strong cell produces the regressed box") {
    out.class_logits.at(2, 1, 0) = 8.0;
    out.regression.at(2, 1, 0) = 0.4;           // dx
    out.regression.at(2, 1, 1) = -0.2;          // dy
    out.regression.at(2, 1, 2) = std::log(3.0); // w
    out.regression.at(2, 1, 3) = std::log(2.0); // h
    out.regression.at(2, 1, 4) = 0.3;           // theta
    const auto dets = decode(out, 5, {.score_thr = 0.5, .nms_thr = 0.5});
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].scene_id == 5);
    CHECK(dets[0].class_id == 0);
    CHECK(dets[0].box.cx() == doctest::Approx(1.5 + 0.4));
    CHECK(dets[0].box.cy() == doctest::Approx(2.5 - 0.2));
    CHECK(dets[0].box.w() == doctest::Approx(3.0));
    CHECK(dets[0].box.h() == doctest::Approx(2.0));
    CHECK(dets[0].box.theta() == doctest::Approx(0.3));
    CHECK(dets[0].score == doctest::Approx(sigmoid(8.0) * 0.9));
  }
  SUBCASE("threshold validation") {
    CHECK_THROWS_AS(decode(out, 0, {.score_thr = 0.0, .nms_thr = 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(decode(out, 0, {.score_thr = 0.5, .nms_thr = 1.5}),
                    std::invalid_argument);
  }
}

TEST_CASE("decode matches the exhaustive suppression oracle") {
  Rng rng(51);
  for (int rep = 0; rep < 10; ++rep) {
    DenseOutput out;
    out.class_logits = Grid3<double>(6, 6, 2);
    out.quality = Grid2<double>(6, 6);
    out.regression = Grid3<double>(6, 6, 5);
    for (double& v : out.class_logits.data) v = rng.uniform(-4, 2);
    for (double& v : out.quality.data) v = rng.uniform(0.2, 1.0);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) {
        out.regression.at(y, x, 0) = rng.uniform(-0.5, 0.5);
        out.regression.at(y, x, 1) = rng.uniform(-0.5, 0.5);
        out.regression.at(y, x, 2) = rng.uniform(0.5, 1.2);
        out.regression.at(y, x, 3) = rng.uniform(0.3, 0.9);
        out.regression.at(y, x, 4) = rng.uniform(-1.5, 1.5);
      }
    }
    const DecodeConfig cfg{.score_thr = 0.3, .nms_thr = 0.4};
    const auto got = decode(out, 0, cfg);

    // oracle: collect per-class candidates above threshold, suppress
    // exhaustively per class
    const Grid3<double> scores = joint_confidence(out);
    std::vector<Detection> expected;
    for (int c = 0; c < 2; ++c) {
      std::vector<OrientedBox> boxes;
      std::vector<double> ss;
      for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
          if (scores.at(y, x, c) <= cfg.score_thr) continue;
          boxes.emplace_back(x + 0.5 + out.regression.at(y, x, 0),
                             y + 0.5 + out.regression.at(y, x, 1),
                             std::exp(out.regression.at(y, x, 2)),
                             std::exp(out.regression.at(y, x, 3)),
                             out.regression.at(y, x, 4));
          ss.push_back(scores.at(y, x, c));
        }
      }
      for (size_t idx : oracles::brute_force_nms(boxes, ss, cfg.nms_thr)) {
        expected.push_back(det(0, c, boxes[idx], ss[idx]));
      }
    }
    REQUIRE(got.size() == expected.size());
    std::vector<bool> used(expected.size(), false);
    for (const Detection& d : got) {
      bool found = false;
      for (size_t i = 0; i < expected.size(); ++i) {
        if (!used[i] && expected[i].class_id == d.class_id &&
            expected[i].score == d.score && expected[i].box == d.box) {
          used[i] = found = true;
          break;
        }
      }
      CHECK(found);
    }
  }
}

TEST_CASE("average precision hand fixtures") {
  const OrientedBox box(5, 5, 3, 2, 0.2);

  SUBCASE("detections equal to ground truth give AP 1 at any scores") {
    const std::vector<GtBox> gts{gt(0, 0, box), gt(1, 0, box)};
    const std::vector<Detection> dets{det(0, 0, box, 0.3), det(1, 0, box, 0.9)};
    CHECK(average_precision(dets, gts, 0.5).ap == doctest::Approx(1.0));
  }
  SUBCASE("no detections give AP 0") {
    const std::vector<GtBox> gts{gt(0, 0, box)};
    CHECK(average_precision({}, gts, 0.5).ap == 0.0);
  }
  SUBCASE("no ground truth flags the class and pins AP to 1") {
    const ApResult r = average_precision({det(0, 0, box, 0.5)}, {}, 0.5);
    CHECK(r.ap == 1.0);
    CHECK_FALSE(r.defined);
  }
  SUBCASE("TP above FP gives AP 1; swapped gives 0.5") {
    const std::vector<GtBox> gts{gt(0, 0, box)};
    const OrientedBox far_box(15, 15, 3, 2, 0.0);
    const std::vector<Detection> tp_first{det(0, 0, box, 0.9), det(0, 0, far_box, 0.8)};
    CHECK(average_precision(tp_first, gts, 0.5).ap == doctest::Approx(1.0));
    const std::vector<Detection> fp_first{det(0, 0, box, 0.8), det(0, 0, far_box, 0.9)};
    CHECK(average_precision(fp_first, gts, 0.5).ap == doctest::Approx(0.5));
  }
  SUBCASE("each ground truth matches at most once") {
    const std::vector<GtBox> gts{gt(0, 0, box)};
    const std::vector<Detection> dets{det(0, 0, box, 0.9), det(0, 0, box, 0.8)};
    // second detection is an unmatched duplicate: precision falls to 1/2
    // beyond recall 1, envelope keeps AP at 1
    CHECK(average_precision(dets, gts, 0.5).ap == doctest::Approx(1.0));
  }
}

TEST_CASE("AP is rank-invariant under monotone score transforms") {
  Rng rng(53);
  std::vector<Detection> dets;
  std::vector<GtBox> gts;
  for (int rep = 0; rep < 30; ++rep) {
    random_problem(rng, dets, gts);
    const double base = average_precision(dets, gts, 0.5).ap;
    auto transformed = dets;
    for (Detection& d : transformed) d.score = 2.0 * std::atan(3.0 * d.score) + 7.0;
    CHECK(average_precision(transformed, gts, 0.5).ap == base);  // exact
  }
}

TEST_CASE("AP is non-increasing in the IoU threshold") {
  Rng rng(57);
  std::vector<Detection> dets;
  std::vector<GtBox> gts;
  for (int rep = 0; rep < 30; ++rep) {
    random_problem(rng, dets, gts);
    double prev = 1.0;
    for (double thr : {0.5, 0.6, 0.7, 0.8, 0.9}) {
      const double ap = average_precision(dets, gts, thr).ap;
      CHECK(ap <= prev + 1e-12);
      prev = ap;
    }
  }
}

TEST_CASE("adding a lowest-score FP never raises AP; adding a TP never lowers it") {
  Rng rng(59);
  std::vector<Detection> dets;
  std::vector<GtBox> gts;
  for (int rep = 0; rep < 30; ++rep) {
    random_problem(rng, dets, gts);
    const double base = average_precision(dets, gts, 0.5).ap;

    auto with_fp = dets;
    with_fp.push_back(det(0, 0, OrientedBox(50, 50, 2, 2, 0), 1e-6));
    CHECK(average_precision(with_fp, gts, 0.5).ap <= base + 1e-12);

    auto with_tp = dets;
    auto more_gts = gts;
    const OrientedBox extra(30, 30, 3, 2, 0.4);
    more_gts.push_back(gt(0, 0, extra));
    with_tp.push_back(det(0, 0, extra, 0.999));
    CHECK(average_precision(with_tp, more_gts, 0.5).ap >= base - 1e-12);
  }
}

TEST_CASE("map_report aggregates per class and excludes empty classes") {
  const OrientedBox b0(4, 4, 3, 2, 0.1);
  const OrientedBox b1(10, 10, 3, 2, -0.4);
  const std::vector<GtBox> gts{gt(0, 0, b0), gt(0, 2, b1)};
  const std::vector<Detection> dets{det(0, 0, b0, 0.9), det(0, 2, b1, 0.8)};

  const MapReport report = map_report(dets, gts, 4);
  CHECK(report.evaluated_classes == 2);  // classes 1 and 3 have no gt
  CHECK(report.ap50 == doctest::Approx(1.0));
  CHECK(report.ap75 == doctest::Approx(1.0));
  CHECK(report.map5095 == doctest::Approx(1.0));
  REQUIRE(report.per_class.size() == 2);
  CHECK(report.per_class[0].class_id == 0);
  CHECK(report.per_class[1].class_id == 2);
  CHECK(report.ap50 >= report.ap75);

  CHECK_THROWS_AS(map_report(dets, {}, 4), std::invalid_argument);

  const std::string text = report_to_text(report, {"a", "b", "c", "d"});
  CHECK(text.find("mAP(50:95)") != std::string::npos);
  const std::string csv = report_to_csv(report, {"a", "b", "c", "d"});
  CHECK(csv.find("__summary__") != std::string::npos);
}

TEST_CASE("ap50 >= ap75 on random corpora") {
  Rng rng(61);
  std::vector<Detection> dets;
  std::vector<GtBox> gts;
  for (int rep = 0; rep < 20; ++rep) {
    random_problem(rng, dets, gts);
    const MapReport report = map_report(dets, gts, 1);
    CHECK(report.ap50 >= report.ap75 - 1e-12);
  }
}
