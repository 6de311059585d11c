#include "sparsedet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sparsedet {

namespace {

// Keeps regressed sizes positive and sane on untrained heads.
double clamp_size(double log_size) {
  return std::exp(std::clamp(log_size, -3.0, 5.0));
}

}  // namespace

std::vector<Detection> decode(const DenseOutput& out, int scene_id,
                              const DecodeConfig& cfg) {
  if (!(cfg.score_thr > 0.0) || cfg.score_thr >= 1.0 || !(cfg.nms_thr > 0.0) ||
      cfg.nms_thr > 1.0) {
    throw std::invalid_argument("decode: thresholds out of range");
  }
  const Grid3<double> scores = joint_confidence(out);
  const int C = scores.c;

  std::vector<Detection> dets;
  for (int c = 0; c < C; ++c) {
    std::vector<OrientedBox> boxes;
    std::vector<double> box_scores;
    for (int y = 0; y < scores.h; ++y) {
      for (int x = 0; x < scores.w; ++x) {
        const double s = scores.at(y, x, c);
        if (s <= cfg.score_thr) continue;
        const double px = x + 0.5;
        const double py = y + 0.5;
        boxes.emplace_back(px + out.regression.at(y, x, 0),
                           py + out.regression.at(y, x, 1),
                           clamp_size(out.regression.at(y, x, 2)),
                           clamp_size(out.regression.at(y, x, 3)),
                           out.regression.at(y, x, 4));
        box_scores.push_back(s);
      }
    }
    for (size_t idx : rotated_nms(boxes, box_scores, cfg.nms_thr)) {
      dets.push_back({scene_id, c, boxes[idx], box_scores[idx]});
    }
  }
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return a.score > b.score;
  });
  return dets;
}

std::vector<GtBox> gt_boxes(const std::vector<Scene>& corpus) {
  std::vector<GtBox> out;
  for (const Scene& scene : corpus) {
    for (const Instance& inst : scene.instances) {
      out.push_back({scene.id, inst.class_id, inst.box});
    }
  }
  return out;
}

ApResult average_precision(const std::vector<Detection>& dets,
                           const std::vector<GtBox>& gts, double iou_thr) {
  ApResult res;
  res.num_gt = static_cast<int>(gts.size());
  if (gts.empty()) {
    res.ap = 1.0;
    res.defined = false;
    return res;
  }
  if (dets.empty()) {
    res.ap = 0.0;
    return res;
  }

  std::vector<size_t> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });

  std::vector<bool> matched(gts.size(), false);
  std::vector<double> tp(dets.size(), 0.0);
  for (size_t rank = 0; rank < order.size(); ++rank) {
    const Detection& det = dets[order[rank]];
    double best_iou = 0.0;
    int best_gt = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].scene_id != det.scene_id ||
          gts[g].class_id != det.class_id) {
        continue;
      }
      const double iou = rotated_iou(det.box, gts[g].box);
      if (iou >= iou_thr && iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      matched[best_gt] = true;
      tp[rank] = 1.0;
    }
  }

  // All-point interpolation: area under the monotone precision envelope.
  double cum_tp = 0.0;
  std::vector<double> precision(dets.size());
  std::vector<double> recall(dets.size());
  for (size_t i = 0; i < dets.size(); ++i) {
    cum_tp += tp[i];
    precision[i] = cum_tp / static_cast<double>(i + 1);
    recall[i] = cum_tp / static_cast<double>(gts.size());
  }
  for (size_t i = dets.size() - 1; i-- > 0;) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < dets.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  res.ap = ap;
  return res;
}

MapReport map_report(const std::vector<Detection>& dets,
                     const std::vector<GtBox>& gts, int num_classes) {
  if (gts.empty()) {
    throw std::invalid_argument("map_report: empty ground truth");
  }

  std::vector<double> thresholds;
  for (int i = 0; i < 10; ++i) thresholds.push_back(0.50 + 0.05 * i);

  MapReport report;
  double sum50 = 0.0, sum75 = 0.0, sum5095 = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<Detection> cd;
    std::vector<GtBox> cg;
    for (const Detection& d : dets) {
      if (d.class_id == c) cd.push_back(d);
    }
    for (const GtBox& g : gts) {
      if (g.class_id == c) cg.push_back(g);
    }
    if (cg.empty()) continue;  // flagged: class without ground truth is skipped

    PerClassAp row;
    row.class_id = c;
    row.num_gt = static_cast<int>(cg.size());
    double acc = 0.0;
    for (size_t ti = 0; ti < thresholds.size(); ++ti) {
      const double ap = average_precision(cd, cg, thresholds[ti]).ap;
      acc += ap;
      if (ti == 0) row.ap50 = ap;
      if (ti == 5) row.ap75 = ap;
    }
    row.ap5095 = acc / static_cast<double>(thresholds.size());
    report.per_class.push_back(row);
    sum50 += row.ap50;
    sum75 += row.ap75;
    sum5095 += row.ap5095;
  }

  report.evaluated_classes = static_cast<int>(report.per_class.size());
  if (report.evaluated_classes > 0) {
    report.ap50 = sum50 / report.evaluated_classes;
    report.ap75 = sum75 / report.evaluated_classes;
    report.map5095 = sum5095 / report.evaluated_classes;
  }
  return report;
}

std::string report_to_text(const MapReport& report,
                           const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "class            gt     AP50    AP75    AP50:95\n";
  for (const PerClassAp& row : report.per_class) {
    std::string name = row.class_id < static_cast<int>(class_names.size())
                           ? class_names[row.class_id]
                           : "class_" + std::to_string(row.class_id);
    name.resize(16, ' ');
    os << name << " " << row.num_gt << "\t" << row.ap50 << "  " << row.ap75 << "  "
       << row.ap5095 << "\n";
  }
  os << "mAP(50:95) " << report.map5095 << "  AP50 " << report.ap50 << "  AP75 "
     << report.ap75 << "  (over " << report.evaluated_classes << " classes)\n";
  return os.str();
}

std::string report_to_csv(const MapReport& report,
                          const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "class,num_gt,ap50,ap75,ap5095\n";
  for (const PerClassAp& row : report.per_class) {
    const std::string name = row.class_id < static_cast<int>(class_names.size())
                                 ? class_names[row.class_id]
                                 : "class_" + std::to_string(row.class_id);
    os << name << "," << row.num_gt << "," << row.ap50 << "," << row.ap75 << ","
       << row.ap5095 << "\n";
  }
  os << "__summary__," << report.evaluated_classes << "," << report.ap50 << ","
     << report.ap75 << "," << report.map5095 << "\n";
  return os.str();
}

}  // namespace sparsedet
