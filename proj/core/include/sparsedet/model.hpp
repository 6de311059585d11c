#pragma once

#include <cstdint>
#include <vector>

#include "sparsedet/common.hpp"

namespace sparsedet {

constexpr int kRegressionDim = 5;  // dx, dy, log w, log h, theta

struct ModelShape {
  int feature_dim = 0;
  int num_classes = 0;
  int hidden_dim = 0;  // 0 = linear heads directly on the raster

  bool operator==(const ModelShape&) const = default;
  /// Input width seen by the heads.
  int head_dim() const { return hidden_dim > 0 ? hidden_dim : feature_dim; }
  size_t param_count() const;
};

/// All weights in one flat buffer so the optimizer, EMA update, checksums and
/// checkpoints can treat parameters uniformly. Layout (see offsets in the
/// accessors): [hidden W, hidden b,] classifier W, classifier b, quality w,
/// quality b, regression W, regression b.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(ModelShape shape);

  static ModelParams random_init(ModelShape shape, uint64_t seed, double scale = 0.01);

  const ModelShape& shape() const { return shape_; }
  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

  double& hidden_w(int f, int hd) { return data_[hidden_w_off_ + static_cast<size_t>(f) * shape_.hidden_dim + hd]; }
  double hidden_w(int f, int hd) const { return data_[hidden_w_off_ + static_cast<size_t>(f) * shape_.hidden_dim + hd]; }
  double& hidden_b(int hd) { return data_[hidden_b_off_ + hd]; }
  double hidden_b(int hd) const { return data_[hidden_b_off_ + hd]; }

  double& cls_w(int f, int c) { return data_[cls_w_off_ + static_cast<size_t>(f) * shape_.num_classes + c]; }
  double cls_w(int f, int c) const { return data_[cls_w_off_ + static_cast<size_t>(f) * shape_.num_classes + c]; }
  double& cls_b(int c) { return data_[cls_b_off_ + c]; }
  double cls_b(int c) const { return data_[cls_b_off_ + c]; }

  double& quality_w(int f) { return data_[q_w_off_ + f]; }
  double quality_w(int f) const { return data_[q_w_off_ + f]; }
  double& quality_b() { return data_[q_b_off_]; }
  double quality_b() const { return data_[q_b_off_]; }

  double& reg_w(int f, int k) { return data_[reg_w_off_ + static_cast<size_t>(f) * kRegressionDim + k]; }
  double reg_w(int f, int k) const { return data_[reg_w_off_ + static_cast<size_t>(f) * kRegressionDim + k]; }
  double& reg_b(int k) { return data_[reg_b_off_ + k]; }
  double reg_b(int k) const { return data_[reg_b_off_ + k]; }

  bool finite() const;
  uint64_t checksum() const { return hash_doubles(data_); }

  bool operator==(const ModelParams& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  ModelShape shape_;
  std::vector<double> data_;
  size_t hidden_w_off_ = 0, hidden_b_off_ = 0;
  size_t cls_w_off_ = 0, cls_b_off_ = 0;
  size_t q_w_off_ = 0, q_b_off_ = 0;
  size_t reg_w_off_ = 0, reg_b_off_ = 0;
};

/// Per-cell head outputs. quality is the post-sigmoid value, strictly inside
/// (0, 1); class_logits are pre-sigmoid.
struct DenseOutput {
  Grid3<double> class_logits;  // H x W x C
  Grid2<double> quality;       // H x W
  Grid3<double> regression;    // H x W x 5
};

/// Hidden activations kept for the backward pass (empty for linear models).
struct ForwardCache {
  Grid3<double> hidden;
};

DenseOutput forward(const ModelParams& params, const Grid3<double>& features,
                    ForwardCache* cache = nullptr);

/// Gradients of a loss w.r.t. the head outputs, all in pre-activation space.
struct OutputGrads {
  Grid3<double> d_class_logits;
  Grid2<double> d_quality_logit;
  Grid3<double> d_regression;

  static OutputGrads zeros(int h, int w, int c);
};

/// Accumulates dLoss/dparams into grad_accum by chaining output gradients
/// through the heads (and hidden layer when present).
void backward(const ModelParams& params, const Grid3<double>& features,
              const ForwardCache& cache, const OutputGrads& out_grads,
              ModelParams& grad_accum);

/// S[y][x][c] = sigmoid(class_logit) * quality.
Grid3<double> joint_confidence(const DenseOutput& out);

double sigmoid(double z);

struct SgdConfig {
  double lr = 0.0025;
  double momentum = 0.9;
  double weight_decay = 0.0001;
};

/// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
/// Throws NumericalError on non-finite gradients.
void sgd_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity,
              const SgdConfig& cfg);

}  // namespace sparsedet
