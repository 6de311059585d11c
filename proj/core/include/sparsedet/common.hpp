#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sparsedet {

/// Dense row-major (y, x, channel) raster. Used for feature maps, logits,
/// per-class score maps and boolean masks.
template <typename T>
struct Grid3 {
  int h = 0, w = 0, c = 0;
  std::vector<T> data;

  Grid3() = default;
  Grid3(int h_, int w_, int c_, T fill = T{})
      : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

  T& at(int y, int x, int k) {
    return data[(static_cast<size_t>(y) * w + x) * c + k];
  }
  const T& at(int y, int x, int k) const {
    return data[(static_cast<size_t>(y) * w + x) * c + k];
  }

  size_t size() const { return data.size(); }
  bool same_shape(const Grid3& o) const { return h == o.h && w == o.w && c == o.c; }
};

/// Dense row-major (y, x) raster.
template <typename T>
struct Grid2 {
  int h = 0, w = 0;
  std::vector<T> data;

  Grid2() = default;
  Grid2(int h_, int w_, T fill = T{})
      : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, fill) {}

  T& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
  const T& at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }

  size_t size() const { return data.size(); }
  bool same_shape(const Grid2& o) const { return h == o.h && w == o.w; }
};

/// FNV-1a 64-bit over raw bytes. Used for config/artifact fingerprints and
/// reproducibility checksums, not for security.
inline uint64_t fnv1a64(const void* bytes, size_t n,
                        uint64_t state = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    state ^= p[i];
    state *= 1099511628211ull;
  }
  return state;
}

inline uint64_t hash_doubles(const std::vector<double>& v) {
  return fnv1a64(v.data(), v.size() * sizeof(double));
}

}  // namespace sparsedet
