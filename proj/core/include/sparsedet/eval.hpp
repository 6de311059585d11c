#pragma once

#include <string>
#include <vector>

#include "sparsedet/geometry.hpp"
#include "sparsedet/model.hpp"
#include "sparsedet/scene.hpp"

namespace sparsedet {

struct Detection {
  int scene_id = 0;
  int class_id = 0;
  OrientedBox box;
  double score = 0.0;
};

struct GtBox {
  int scene_id = 0;
  int class_id = 0;
  OrientedBox box;
};

struct DecodeConfig {
  double score_thr = 0.05;
  double nms_thr = 0.3;
};

/// Cells whose joint confidence exceeds score_thr become detections with the
/// box read off the regression head; per-class rotated NMS follows.
std::vector<Detection> decode(const DenseOutput& out, int scene_id,
                              const DecodeConfig& cfg);

std::vector<GtBox> gt_boxes(const std::vector<Scene>& corpus);

struct ApResult {
  double ap = 0.0;
  /// False when the class has no ground truth (AP fixed at 1 and excluded
  /// from mAP averaging).
  bool defined = true;
  int num_gt = 0;
};

/// All-point interpolated AP. Detections match greedily (descending score)
/// to the highest-IoU unmatched ground truth of the same scene and class at
/// rotated IoU >= iou_thr; ties prefer the lower gt index. Inputs are
/// treated as one class pool.
ApResult average_precision(const std::vector<Detection>& dets,
                           const std::vector<GtBox>& gts, double iou_thr);

struct PerClassAp {
  int class_id = 0;
  int num_gt = 0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap5095 = 0.0;
};

struct MapReport {
  double map5095 = 0.0;  // mean over IoU 0.50:0.05:0.95
  double ap50 = 0.0;
  double ap75 = 0.0;
  int evaluated_classes = 0;  // classes with at least one ground truth
  std::vector<PerClassAp> per_class;
};

/// Per-class AP averaged over classes with at least one ground truth.
/// Throws std::invalid_argument when gts is empty.
MapReport map_report(const std::vector<Detection>& dets,
                     const std::vector<GtBox>& gts, int num_classes);

std::string report_to_text(const MapReport& report,
                           const std::vector<std::string>& class_names);
std::string report_to_csv(const MapReport& report,
                          const std::vector<std::string>& class_names);

}  // namespace sparsedet
