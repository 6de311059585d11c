#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sparsedet/common.hpp"
#include "sparsedet/geometry.hpp"

namespace sparsedet {

struct CategorySpec {
  int id = 0;
  std::string name;
  double frequency_weight = 1.0;   // relative sampling weight, > 0
  double size_min = 2.5;           // cells
  double size_max = 5.0;
  double detectability = 1.0;      // evidence amplitude inside instances, (0, 1]
};

struct Instance {
  int class_id = 0;
  OrientedBox box;
};

/// Synthetic stand-in for an image tile: a feature raster over an HxW cell
/// grid plus the full ground-truth instance list.
struct Scene {
  int id = 0;
  int grid_h = 0;
  int grid_w = 0;
  int num_classes = 0;
  Grid3<double> features;  // H x W x F
  std::vector<Instance> instances;
};

struct SparseAnnotations {
  int scene_id = 0;
  std::vector<Instance> kept;  // subset of the scene's instances
  int removed_count = 0;
};

/// Feature raster recipe. Channels are laid out as
///   [0, C)                      per-class evidence
///   [C, C+clutter_channels)     clutter evidence
///   [C+clutter_channels, +5)    box geometry (dx, dy, log w, log h, theta)
///                               of the smallest covering blob, when enabled
/// with zero-mean Gaussian noise added to every channel. Clutter blobs bleed
/// into a class evidence channel at clutter_bleed x detectability, which is
/// what makes confident background negatives exist at all.
struct CorpusConfig {
  int grid_h = 24;
  int grid_w = 24;
  double noise_sigma = 0.25;
  int clutter_channels = 2;
  double clutter_density = 2.0;  // expected clutter blobs per scene
  double clutter_amp = 1.0;
  double clutter_bleed = 1.2;
  double aspect_min = 0.5;  // short edge as a fraction of the long edge
  double aspect_max = 1.0;
  bool geometry_channels = true;
};

struct FeatureLayout {
  int num_classes = 0;
  int clutter = 0;
  bool geometry = false;

  int dim() const { return num_classes + clutter + (geometry ? 5 : 0); }
  int clutter_begin() const { return num_classes; }
  int geom_begin() const { return num_classes + clutter; }
};

FeatureLayout feature_layout(const CorpusConfig& cfg, int num_classes);

/// Deterministic corpus generation; each scene draws from an independent
/// stream derived from (seed, scene index). Instance counts are Poisson with
/// the given density; classes follow the normalized frequency weights.
/// Throws std::invalid_argument on an empty or malformed spec list.
std::vector<Scene> generate_corpus(const std::vector<CategorySpec>& specs,
                                   int n_scenes, double density, uint64_t seed,
                                   const CorpusConfig& cfg = {});

/// Per-category sampling without replacement: for every category present in
/// the scene, keeps ceil(rate * count) instances. With at_least_one_per_class
/// every present category keeps at least one instance even at rate 0.
SparseAnnotations sparsify(const Scene& scene, double rate,
                           bool at_least_one_per_class, uint64_t seed);

/// HxWxC mask of cells whose centers fall inside an annotated box of the
/// given class. Cell (y, x) has center (x + 0.5, y + 0.5).
Grid3<uint8_t> gt_pixel_mask(const std::vector<Instance>& annotations,
                             int grid_h, int grid_w, int num_classes);

/// Class ids present in an instance list.
std::set<int> class_set(const std::vector<Instance>& instances);

/// Mirror about the vertical axis: x -> W - x. Geometry channels that encode
/// signed quantities (dx, theta) are negated so the raster describes the
/// flipped world consistently.
OrientedBox flip_box_x(const OrientedBox& box, int grid_w);
std::vector<Instance> flip_instances_x(const std::vector<Instance>& instances, int grid_w);
Grid3<double> flip_features_x(const Grid3<double>& features, const FeatureLayout& layout);

}  // namespace sparsedet
