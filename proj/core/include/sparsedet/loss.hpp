#pragma once

#include <vector>

#include "sparsedet/assign.hpp"
#include "sparsedet/model.hpp"
#include "sparsedet/scene.hpp"

namespace sparsedet {

enum class AhrMode {
  /// The three-case form exactly as printed: positives are modulated by
  /// p_t^gamma and negatives by (1-p_t)^gamma.
  kAsWritten,
  /// Conventional focal modulators: (1-p_t)^gamma on positives, p_t^gamma on
  /// negatives. The hard-negative w scaling is applied identically.
  kStandardFocal,
};

struct AhrConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  double thr = 0.9;
  double w = 0.15;
  AhrMode mode = AhrMode::kAsWritten;
};

struct ScalarLoss {
  double loss = 0.0;
  double dloss_dlogit = 0.0;
};

/// Adaptive hard-negative reweighting loss for one (cell, class) score.
/// Negatives with p_t > thr are scaled by w. The gradient is taken w.r.t.
/// the pre-sigmoid logit. Throws std::invalid_argument unless p_t is
/// strictly inside (0, 1).
ScalarLoss ahr_loss(double p_t, bool is_positive, const AhrConfig& cfg);

struct LossResult {
  double loss = 0.0;
  double cls = 0.0;
  double quality = 0.0;
  double regression = 0.0;
  OutputGrads grads;
};

/// Supervised composite over one scene: AHR classification at every
/// (cell, class) pair (positive where the mask is set), quality BCE toward 1
/// and smooth-L1 box regression at positive cells only. Classification is
/// normalized by the number of positive pairs (min 1), quality/regression by
/// the number of positive cells (min 1); the three parts sum with unit
/// weights.
LossResult supervised_loss(const DenseOutput& out,
                           const std::vector<Instance>& annotations,
                           const Grid3<uint8_t>& gt_mask, const AhrConfig& cfg);

/// Unsupervised distillation: selected (cell, class) pairs get BCE between
/// the student probability and the teacher joint confidence as a soft
/// target; every other pair gets the negative branch of the classification
/// loss. Total is normalized by |selected|; an empty selection yields a zero
/// loss.
LossResult distill_loss(const DenseOutput& student,
                        const Grid3<double>& teacher_scores,
                        const SelectionSet& selected, const AhrConfig& cfg);

/// Smooth-L1 (Huber with delta 1): 0.5 d^2 for |d| < 1 else |d| - 0.5.
double smooth_l1(double d);
double smooth_l1_grad(double d);

}  // namespace sparsedet
