#include "sparsedet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sparsedet/errors.hpp"

namespace sparsedet {

namespace {

constexpr double kProbEps = 1e-12;

// Composite losses clamp probabilities away from the open-interval bounds so
// saturated logits stay differentiable; a non-finite probability means the
// parameters blew up and is a training failure, not a precondition bug.
double clamp_prob(double p) {
  if (!std::isfinite(p)) {
    throw NumericalError("loss: non-finite probability (diverging parameters)");
  }
  return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

// Numerically stable BCE against a soft target, computed from the logit:
// L = max(z, 0) - z t + log(1 + exp(-|z|)),  dL/dz = sigmoid(z) - t.
double stable_bce(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace

ScalarLoss ahr_loss(double p_t, bool is_positive, const AhrConfig& cfg) {
  if (!(p_t > 0.0) || !(p_t < 1.0)) {
    throw std::invalid_argument("ahr_loss: p_t must be strictly inside (0, 1)");
  }
  const double p = p_t;
  const double q = 1.0 - p_t;
  const double a = cfg.alpha;
  const double g = cfg.gamma;

  ScalarLoss out;
  if (is_positive) {
    if (cfg.mode == AhrMode::kAsWritten) {
      out.loss = -a * std::pow(p, g) * std::log(p);
      out.dloss_dlogit = -a * std::pow(p, g) * q * (g * std::log(p) + 1.0);
    } else {
      out.loss = -a * std::pow(q, g) * std::log(p);
      out.dloss_dlogit = -a * std::pow(q, g) * (q - g * p * std::log(p));
    }
    return out;
  }

  const double scale = (p > cfg.thr) ? cfg.w : 1.0;  // hard-negative down-weight
  if (cfg.mode == AhrMode::kAsWritten) {
    out.loss = -(1.0 - a) * std::pow(q, g) * std::log(q) * scale;
    out.dloss_dlogit = (1.0 - a) * p * std::pow(q, g) * (g * std::log(q) + 1.0) * scale;
  } else {
    out.loss = -(1.0 - a) * std::pow(p, g) * std::log(q) * scale;
    out.dloss_dlogit = (1.0 - a) * std::pow(p, g) * (p - g * q * std::log(q)) * scale;
  }
  return out;
}

double smooth_l1(double d) {
  const double ad = std::abs(d);
  return ad < 1.0 ? 0.5 * d * d : ad - 0.5;
}

double smooth_l1_grad(double d) {
  if (d > 1.0) return 1.0;
  if (d < -1.0) return -1.0;
  return d;
}

LossResult supervised_loss(const DenseOutput& out,
                           const std::vector<Instance>& annotations,
                           const Grid3<uint8_t>& gt_mask, const AhrConfig& cfg) {
  const int H = out.class_logits.h;
  const int W = out.class_logits.w;
  const int C = out.class_logits.c;
  if (gt_mask.h != H || gt_mask.w != W || gt_mask.c != C) {
    throw std::invalid_argument("supervised_loss: mask shape mismatch");
  }

  LossResult res;
  res.grads = OutputGrads::zeros(H, W, C);

  size_t n_pos_pairs = 0;
  for (uint8_t m : gt_mask.data) n_pos_pairs += (m != 0);
  size_t n_pos_cells = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        if (gt_mask.at(y, x, c) != 0) {
          ++n_pos_cells;
          break;
        }
      }
    }
  }
  const double pair_norm = 1.0 / static_cast<double>(std::max<size_t>(1, n_pos_pairs));
  const double cell_norm = 1.0 / static_cast<double>(std::max<size_t>(1, n_pos_cells));

  // Classification: AHR over every (cell, class) pair.
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        const double p = clamp_prob(sigmoid(out.class_logits.at(y, x, c)));
        const ScalarLoss s = ahr_loss(p, gt_mask.at(y, x, c) != 0, cfg);
        res.cls += s.loss * pair_norm;
        res.grads.d_class_logits.at(y, x, c) += s.dloss_dlogit * pair_norm;
      }
    }
  }

  // Quality toward 1 and box regression at positive cells only. The target
  // box at a cell is the smallest annotated box covering its center.
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      bool positive = false;
      for (int c = 0; c < C; ++c) {
        if (gt_mask.at(y, x, c) != 0) {
          positive = true;
          break;
        }
      }
      if (!positive) continue;

      const double q = clamp_prob(out.quality.at(y, x));
      res.quality += -std::log(q) * cell_norm;
      res.grads.d_quality_logit.at(y, x) += (q - 1.0) * cell_norm;

      const Vec2 p{x + 0.5, y + 0.5};
      const OrientedBox* target = nullptr;
      double best_area = std::numeric_limits<double>::infinity();
      for (const Instance& inst : annotations) {
        if (inst.box.area() < best_area && point_in_box(p, inst.box)) {
          best_area = inst.box.area();
          target = &inst.box;
        }
      }
      if (target == nullptr) continue;  // mask cell without a covering box cannot happen
      const double t[kRegressionDim] = {target->cx() - p.x, target->cy() - p.y,
                                        std::log(target->w()), std::log(target->h()),
                                        target->theta()};
      for (int k = 0; k < kRegressionDim; ++k) {
        const double d = out.regression.at(y, x, k) - t[k];
        res.regression += smooth_l1(d) * cell_norm;
        res.grads.d_regression.at(y, x, k) += smooth_l1_grad(d) * cell_norm;
      }
    }
  }

  res.loss = res.cls + res.quality + res.regression;
  return res;
}

LossResult distill_loss(const DenseOutput& student,
                        const Grid3<double>& teacher_scores,
                        const SelectionSet& selected, const AhrConfig& cfg) {
  const int H = student.class_logits.h;
  const int W = student.class_logits.w;
  const int C = student.class_logits.c;
  if (teacher_scores.h != H || teacher_scores.w != W || teacher_scores.c != C) {
    throw std::invalid_argument("distill_loss: teacher score shape mismatch");
  }
  for (const SelectionEntry& e : selected.entries()) {
    if (e.y < 0 || e.y >= H || e.x < 0 || e.x >= W || e.class_id < 0 || e.class_id >= C) {
      throw std::invalid_argument("distill_loss: selected pixel out of bounds");
    }
  }

  LossResult res;
  res.grads = OutputGrads::zeros(H, W, C);
  if (selected.empty()) return res;  // valid: no pseudo-label supervision

  const double norm = 1.0 / static_cast<double>(selected.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        const double z = student.class_logits.at(y, x, c);
        if (selected.contains(y, x, c)) {
          const double t = std::clamp(teacher_scores.at(y, x, c), 0.0, 1.0);
          res.cls += stable_bce(z, t) * norm;
          res.grads.d_class_logits.at(y, x, c) += (sigmoid(z) - t) * norm;
        } else {
          const ScalarLoss s = ahr_loss(clamp_prob(sigmoid(z)), false, cfg);
          res.cls += s.loss * norm;
          res.grads.d_class_logits.at(y, x, c) += s.dloss_dlogit * norm;
        }
      }
    }
  }
  res.loss = res.cls;
  return res;
}

}  // namespace sparsedet
