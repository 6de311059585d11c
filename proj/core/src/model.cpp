#include "sparsedet/model.hpp"

#include <cmath>
#include <stdexcept>

#include "sparsedet/errors.hpp"
#include "sparsedet/rng.hpp"

namespace sparsedet {

size_t ModelShape::param_count() const {
  const size_t hd = head_dim();
  size_t n = 0;
  if (hidden_dim > 0) n += static_cast<size_t>(feature_dim) * hidden_dim + hidden_dim;
  n += hd * num_classes + num_classes;  // classifier
  n += hd + 1;                          // quality
  n += hd * kRegressionDim + kRegressionDim;
  return n;
}

ModelParams::ModelParams(ModelShape shape) : shape_(shape) {
  const size_t hd = shape.head_dim();
  size_t off = 0;
  if (shape.hidden_dim > 0) {
    hidden_w_off_ = off;
    off += static_cast<size_t>(shape.feature_dim) * shape.hidden_dim;
    hidden_b_off_ = off;
    off += shape.hidden_dim;
  }
  cls_w_off_ = off;
  off += hd * shape.num_classes;
  cls_b_off_ = off;
  off += shape.num_classes;
  q_w_off_ = off;
  off += hd;
  q_b_off_ = off;
  off += 1;
  reg_w_off_ = off;
  off += hd * kRegressionDim;
  reg_b_off_ = off;
  off += kRegressionDim;
  data_.assign(off, 0.0);
}

ModelParams ModelParams::random_init(ModelShape shape, uint64_t seed, double scale) {
  ModelParams p(shape);
  Rng rng(derive_seed(seed, 0x1417u));
  for (double& v : p.data_) v = rng.normal(0.0, scale);
  return p;
}

bool ModelParams::finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

DenseOutput forward(const ModelParams& params, const Grid3<double>& features,
                    ForwardCache* cache) {
  const ModelShape& shape = params.shape();
  if (features.c != shape.feature_dim) {
    throw std::invalid_argument("forward: feature dim mismatch");
  }
  const int H = features.h;
  const int W = features.w;
  const int C = shape.num_classes;
  const int hd = shape.head_dim();

  DenseOutput out;
  out.class_logits = Grid3<double>(H, W, C);
  out.quality = Grid2<double>(H, W);
  out.regression = Grid3<double>(H, W, kRegressionDim);
  if (cache != nullptr && shape.hidden_dim > 0) {
    cache->hidden = Grid3<double>(H, W, shape.hidden_dim);
  }

  std::vector<double> head_in(hd);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (shape.hidden_dim > 0) {
        for (int j = 0; j < shape.hidden_dim; ++j) {
          double z = params.hidden_b(j);
          for (int f = 0; f < shape.feature_dim; ++f) {
            z += features.at(y, x, f) * params.hidden_w(f, j);
          }
          head_in[j] = std::tanh(z);
          if (cache != nullptr) cache->hidden.at(y, x, j) = head_in[j];
        }
      } else {
        for (int f = 0; f < hd; ++f) head_in[f] = features.at(y, x, f);
      }

      for (int c = 0; c < C; ++c) {
        double z = params.cls_b(c);
        for (int f = 0; f < hd; ++f) z += head_in[f] * params.cls_w(f, c);
        out.class_logits.at(y, x, c) = z;
      }
      double qz = params.quality_b();
      for (int f = 0; f < hd; ++f) qz += head_in[f] * params.quality_w(f);
      out.quality.at(y, x) = sigmoid(qz);
      for (int k = 0; k < kRegressionDim; ++k) {
        double z = params.reg_b(k);
        for (int f = 0; f < hd; ++f) z += head_in[f] * params.reg_w(f, k);
        out.regression.at(y, x, k) = z;
      }
    }
  }
  return out;
}

OutputGrads OutputGrads::zeros(int h, int w, int c) {
  OutputGrads g;
  g.d_class_logits = Grid3<double>(h, w, c, 0.0);
  g.d_quality_logit = Grid2<double>(h, w, 0.0);
  g.d_regression = Grid3<double>(h, w, kRegressionDim, 0.0);
  return g;
}

void backward(const ModelParams& params, const Grid3<double>& features,
              const ForwardCache& cache, const OutputGrads& out_grads,
              ModelParams& grad_accum) {
  const ModelShape& shape = params.shape();
  if (grad_accum.shape() != shape) {
    throw std::invalid_argument("backward: grad accumulator shape mismatch");
  }
  const int H = features.h;
  const int W = features.w;
  const int C = shape.num_classes;
  const int hd = shape.head_dim();
  const bool has_hidden = shape.hidden_dim > 0;

  std::vector<double> head_in(hd);
  std::vector<double> d_head(hd);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (has_hidden) {
        for (int j = 0; j < hd; ++j) head_in[j] = cache.hidden.at(y, x, j);
      } else {
        for (int f = 0; f < hd; ++f) head_in[f] = features.at(y, x, f);
      }
      std::fill(d_head.begin(), d_head.end(), 0.0);

      for (int c = 0; c < C; ++c) {
        const double g = out_grads.d_class_logits.at(y, x, c);
        if (g == 0.0) continue;
        grad_accum.cls_b(c) += g;
        for (int f = 0; f < hd; ++f) {
          grad_accum.cls_w(f, c) += g * head_in[f];
          d_head[f] += g * params.cls_w(f, c);
        }
      }
      const double gq = out_grads.d_quality_logit.at(y, x);
      if (gq != 0.0) {
        grad_accum.quality_b() += gq;
        for (int f = 0; f < hd; ++f) {
          grad_accum.quality_w(f) += gq * head_in[f];
          d_head[f] += gq * params.quality_w(f);
        }
      }
      for (int k = 0; k < kRegressionDim; ++k) {
        const double g = out_grads.d_regression.at(y, x, k);
        if (g == 0.0) continue;
        grad_accum.reg_b(k) += g;
        for (int f = 0; f < hd; ++f) {
          grad_accum.reg_w(f, k) += g * head_in[f];
          d_head[f] += g * params.reg_w(f, k);
        }
      }

      if (has_hidden) {
        for (int j = 0; j < hd; ++j) {
          // d tanh(z) / dz = 1 - tanh(z)^2
          const double dz = d_head[j] * (1.0 - head_in[j] * head_in[j]);
          if (dz == 0.0) continue;
          grad_accum.hidden_b(j) += dz;
          for (int f = 0; f < shape.feature_dim; ++f) {
            grad_accum.hidden_w(f, j) += dz * features.at(y, x, f);
          }
        }
      }
    }
  }
}

Grid3<double> joint_confidence(const DenseOutput& out) {
  Grid3<double> s(out.class_logits.h, out.class_logits.w, out.class_logits.c);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      const double q = out.quality.at(y, x);
      for (int c = 0; c < s.c; ++c) {
        s.at(y, x, c) = sigmoid(out.class_logits.at(y, x, c)) * q;
      }
    }
  }
  return s;
}

void sgd_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity,
              const SgdConfig& cfg) {
  if (params.shape() != grads.shape() || params.shape() != velocity.shape()) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  if (!grads.finite()) {
    throw NumericalError("sgd_step: non-finite gradient");
  }
  auto& p = params.flat();
  const auto& g = grads.flat();
  auto& v = velocity.flat();
  for (size_t i = 0; i < p.size(); ++i) {
    v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * p[i]);
    p[i] -= cfg.lr * v[i];
  }
}

}  // namespace sparsedet
