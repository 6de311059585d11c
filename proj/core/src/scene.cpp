#include "sparsedet/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "sparsedet/rng.hpp"

namespace sparsedet {

namespace {

constexpr uint64_t kTagSceneGen = 0x5ce9e;
constexpr uint64_t kTagSparsify = 0x59a25;

void validate_specs(const std::vector<CategorySpec>& specs) {
  if (specs.empty()) {
    throw std::invalid_argument("generate_corpus: empty category spec list");
  }
  for (size_t i = 0; i < specs.size(); ++i) {
    const CategorySpec& s = specs[i];
    if (s.id != static_cast<int>(i)) {
      throw std::invalid_argument("generate_corpus: category ids must be dense 0..C-1");
    }
    if (!(s.frequency_weight > 0.0)) {
      throw std::invalid_argument("generate_corpus: frequency_weight must be > 0");
    }
    if (!(s.size_min > 0.0) || s.size_max < s.size_min) {
      throw std::invalid_argument("generate_corpus: bad size range");
    }
    if (!(s.detectability > 0.0) || s.detectability > 1.0) {
      throw std::invalid_argument("generate_corpus: detectability must be in (0, 1]");
    }
  }
}

OrientedBox random_box(Rng& rng, const CategorySpec& spec, const CorpusConfig& cfg) {
  const double w = rng.uniform(spec.size_min, spec.size_max);
  const double h = w * rng.uniform(cfg.aspect_min, cfg.aspect_max);
  const double theta = rng.uniform(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
  const double r = 0.5 * std::hypot(w, h);
  const double mx = std::min(r, cfg.grid_w / 2.0);
  const double my = std::min(r, cfg.grid_h / 2.0);
  const double cx = rng.uniform(mx, cfg.grid_w - mx);
  const double cy = rng.uniform(my, cfg.grid_h - my);
  return OrientedBox(cx, cy, w, h, theta);
}

// Stamps blob evidence and geometry channels onto the raster. `best_area`
// tracks the smallest blob covering each cell so geometry channels describe
// the most specific owner.
void stamp_blob(const OrientedBox& box, int evidence_channel, double evidence_amp,
                int extra_channel, double extra_amp, const FeatureLayout& layout,
                Grid3<double>& features, Grid2<double>& best_area) {
  const int W = features.w;
  const int H = features.h;
  const double r = box.bounding_radius();
  const int x0 = std::max(0, static_cast<int>(std::floor(box.cx() - r)));
  const int x1 = std::min(W - 1, static_cast<int>(std::ceil(box.cx() + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.cy() - r)));
  const int y1 = std::min(H - 1, static_cast<int>(std::ceil(box.cy() + r)));

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p{x + 0.5, y + 0.5};
      if (!point_in_box(p, box)) continue;
      double& ev = features.at(y, x, evidence_channel);
      ev = std::max(ev, evidence_amp);
      if (extra_channel >= 0) {
        double& ex = features.at(y, x, extra_channel);
        ex = std::max(ex, extra_amp);
      }
      if (layout.geometry && box.area() < best_area.at(y, x)) {
        best_area.at(y, x) = box.area();
        const int g = layout.geom_begin();
        features.at(y, x, g + 0) = box.cx() - p.x;
        features.at(y, x, g + 1) = box.cy() - p.y;
        features.at(y, x, g + 2) = std::log(box.w());
        features.at(y, x, g + 3) = std::log(box.h());
        features.at(y, x, g + 4) = box.theta();
      }
    }
  }
}

}  // namespace

FeatureLayout feature_layout(const CorpusConfig& cfg, int num_classes) {
  return FeatureLayout{num_classes, cfg.clutter_channels, cfg.geometry_channels};
}

std::vector<Scene> generate_corpus(const std::vector<CategorySpec>& specs,
                                   int n_scenes, double density, uint64_t seed,
                                   const CorpusConfig& cfg) {
  validate_specs(specs);
  if (n_scenes <= 0) throw std::invalid_argument("generate_corpus: n_scenes must be > 0");
  if (!(density > 0.0)) throw std::invalid_argument("generate_corpus: density must be > 0");

  const int C = static_cast<int>(specs.size());
  const FeatureLayout layout = feature_layout(cfg, C);
  const int F = layout.dim();

  double weight_sum = 0.0;
  for (const auto& s : specs) weight_sum += s.frequency_weight;

  std::vector<Scene> corpus;
  corpus.reserve(n_scenes);
  for (int sid = 0; sid < n_scenes; ++sid) {
    Rng rng(derive_seed(seed, kTagSceneGen, static_cast<uint64_t>(sid)));
    Scene scene;
    scene.id = sid;
    scene.grid_h = cfg.grid_h;
    scene.grid_w = cfg.grid_w;
    scene.num_classes = C;
    scene.features = Grid3<double>(cfg.grid_h, cfg.grid_w, F, 0.0);

    Grid2<double> best_area(cfg.grid_h, cfg.grid_w,
                            std::numeric_limits<double>::infinity());

    const int n_inst = rng.poisson(density);
    scene.instances.reserve(n_inst);
    for (int i = 0; i < n_inst; ++i) {
      double u = rng.uniform() * weight_sum;
      int cls = C - 1;
      for (int c = 0; c < C; ++c) {
        u -= specs[c].frequency_weight;
        if (u < 0.0) {
          cls = c;
          break;
        }
      }
      scene.instances.push_back({cls, random_box(rng, specs[cls], cfg)});
    }
    for (const Instance& inst : scene.instances) {
      stamp_blob(inst.box, inst.class_id, specs[inst.class_id].detectability,
                 -1, 0.0, layout, scene.features, best_area);
    }

    const int n_clutter = cfg.clutter_channels > 0 ? rng.poisson(cfg.clutter_density) : 0;
    for (int i = 0; i < n_clutter; ++i) {
      const int bleed_cls = rng.uniform_int(0, C - 1);
      const int clutter_ch = layout.clutter_begin() + rng.uniform_int(0, cfg.clutter_channels - 1);
      const OrientedBox blob = random_box(rng, specs[bleed_cls], cfg);
      stamp_blob(blob, bleed_cls, cfg.clutter_bleed * specs[bleed_cls].detectability,
                 clutter_ch, cfg.clutter_amp, layout, scene.features, best_area);
    }

    for (double& v : scene.features.data) v += rng.normal(0.0, cfg.noise_sigma);

    corpus.push_back(std::move(scene));
  }
  return corpus;
}

SparseAnnotations sparsify(const Scene& scene, double rate,
                           bool at_least_one_per_class, uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("sparsify: rate must be in [0, 1]");
  }
  Rng rng(derive_seed(seed, kTagSparsify, static_cast<uint64_t>(scene.id)));

  std::vector<std::vector<size_t>> by_class(scene.num_classes);
  for (size_t i = 0; i < scene.instances.size(); ++i) {
    by_class[scene.instances[i].class_id].push_back(i);
  }

  std::vector<size_t> kept_idx;
  for (int c = 0; c < scene.num_classes; ++c) {
    auto& pool = by_class[c];
    if (pool.empty()) continue;
    const int n = static_cast<int>(pool.size());
    // ceil with an epsilon guard so exact products like 0.05 * 100 don't
    // round up an extra instance.
    int n_keep = static_cast<int>(std::ceil(rate * n - 1e-9));
    if (at_least_one_per_class) n_keep = std::max(1, n_keep);
    n_keep = std::clamp(n_keep, 0, n);
    // Partial Fisher-Yates: uniform sample without replacement.
    for (int i = 0; i < n_keep; ++i) {
      const int j = rng.uniform_int(i, n - 1);
      std::swap(pool[i], pool[j]);
      kept_idx.push_back(pool[i]);
    }
  }
  std::sort(kept_idx.begin(), kept_idx.end());

  SparseAnnotations out;
  out.scene_id = scene.id;
  out.kept.reserve(kept_idx.size());
  for (size_t i : kept_idx) out.kept.push_back(scene.instances[i]);
  out.removed_count = static_cast<int>(scene.instances.size() - kept_idx.size());
  return out;
}

Grid3<uint8_t> gt_pixel_mask(const std::vector<Instance>& annotations,
                             int grid_h, int grid_w, int num_classes) {
  Grid3<uint8_t> mask(grid_h, grid_w, num_classes, 0);
  for (const Instance& inst : annotations) {
    const OrientedBox& box = inst.box;
    const double r = box.bounding_radius();
    const int x0 = std::max(0, static_cast<int>(std::floor(box.cx() - r)));
    const int x1 = std::min(grid_w - 1, static_cast<int>(std::ceil(box.cx() + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(box.cy() - r)));
    const int y1 = std::min(grid_h - 1, static_cast<int>(std::ceil(box.cy() + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (point_in_box({x + 0.5, y + 0.5}, box)) {
          mask.at(y, x, inst.class_id) = 1;
        }
      }
    }
  }
  return mask;
}

std::set<int> class_set(const std::vector<Instance>& instances) {
  std::set<int> out;
  for (const Instance& inst : instances) out.insert(inst.class_id);
  return out;
}

OrientedBox flip_box_x(const OrientedBox& box, int grid_w) {
  return OrientedBox(grid_w - box.cx(), box.cy(), box.w(), box.h(), -box.theta());
}

std::vector<Instance> flip_instances_x(const std::vector<Instance>& instances, int grid_w) {
  std::vector<Instance> out;
  out.reserve(instances.size());
  for (const Instance& inst : instances) {
    out.push_back({inst.class_id, flip_box_x(inst.box, grid_w)});
  }
  return out;
}

Grid3<double> flip_features_x(const Grid3<double>& features, const FeatureLayout& layout) {
  Grid3<double> out(features.h, features.w, features.c);
  for (int y = 0; y < features.h; ++y) {
    for (int x = 0; x < features.w; ++x) {
      for (int k = 0; k < features.c; ++k) {
        out.at(y, x, k) = features.at(y, features.w - 1 - x, k);
      }
      if (layout.geometry) {
        const int g = layout.geom_begin();
        out.at(y, x, g + 0) = -out.at(y, x, g + 0);  // dx
        out.at(y, x, g + 4) = -out.at(y, x, g + 4);  // theta
      }
    }
  }
  return out;
}

}  // namespace sparsedet
