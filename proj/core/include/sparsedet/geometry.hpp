#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace sparsedet {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

/// Rotated rectangle in grid-cell units: center, side lengths, rotation.
/// Long-edge convention: after construction w >= h and theta is in
/// [-pi/2, pi/2). Construction normalizes; w and h must be positive.
class OrientedBox {
 public:
  OrientedBox(double cx, double cy, double w, double h, double theta);

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double theta() const { return theta_; }

  Vec2 center() const { return {cx_, cy_}; }
  double area() const { return w_ * h_; }
  /// Radius of the circumscribed circle.
  double bounding_radius() const;

  bool operator==(const OrientedBox& o) const = default;

 private:
  double cx_, cy_, w_, h_, theta_;
};

/// Vertices in counter-clockwise order (positive shoelace area).
std::array<Vec2, 4> corners(const OrientedBox& box);

/// Signed shoelace area of a simple polygon; positive when counter-clockwise.
double polygon_area(const std::vector<Vec2>& poly);

/// Intersection area of two oriented rectangles via Sutherland-Hodgman
/// clipping of a against b. Areas below 1e-12 collapse to zero.
double intersection_area(const OrientedBox& a, const OrientedBox& b);

/// IoU in [0, 1]. Symmetric; disjoint bounding circles short-circuit to 0.
double rotated_iou(const OrientedBox& a, const OrientedBox& b);

/// Greedy score-descending suppression. A box is removed when its IoU with an
/// already kept box exceeds iou_thr. Equal scores break ties toward the lower
/// original index. Throws std::invalid_argument on length mismatch or
/// iou_thr outside (0, 1].
std::vector<size_t> rotated_nms(const std::vector<OrientedBox>& boxes,
                                const std::vector<double>& scores,
                                double iou_thr);

/// True iff p, expressed in the box frame, lies within the half extents
/// (boundary inclusive).
bool point_in_box(Vec2 p, const OrientedBox& box);

}  // namespace sparsedet
