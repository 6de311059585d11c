#include "sparsedet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sparsedet {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDegenerateArea = 1e-12;

// Wrap an angle into [-pi/2, pi/2) modulo pi. Identity for in-range inputs
// so already normalized boxes round-trip bit-exactly.
double wrap_half_pi(double theta) {
  if (theta >= -kPi / 2.0 && theta < kPi / 2.0) return theta;
  theta = std::fmod(theta + kPi / 2.0, kPi);
  if (theta < 0.0) theta += kPi;
  return theta - kPi / 2.0;
}

}  // namespace

OrientedBox::OrientedBox(double cx, double cy, double w, double h, double theta)
    : cx_(cx), cy_(cy), w_(w), h_(h), theta_(theta) {
  if (!(w > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("OrientedBox: w and h must be positive");
  }
  if (w_ < h_) {
    std::swap(w_, h_);
    theta_ += kPi / 2.0;
  }
  theta_ = wrap_half_pi(theta_);
}

double OrientedBox::bounding_radius() const {
  return 0.5 * std::hypot(w_, h_);
}

std::array<Vec2, 4> corners(const OrientedBox& box) {
  const double c = std::cos(box.theta());
  const double s = std::sin(box.theta());
  const Vec2 u{c, s};           // long-edge direction
  const Vec2 v{-s, c};          // short-edge direction
  const double hw = 0.5 * box.w();
  const double hh = 0.5 * box.h();
  const Vec2 ctr = box.center();
  // (+,+) (-,+) (-,-) (+,-) in the local frame is counter-clockwise.
  return {ctr + hw * u + hh * v, ctr - hw * u + hh * v,
          ctr - hw * u - hh * v, ctr + hw * u - hh * v};
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    twice += cross(p, q);
  }
  return 0.5 * twice;
}

double intersection_area(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = corners(a);
  const auto cb = corners(b);
  std::vector<Vec2> subject(ca.begin(), ca.end());

  // Clip the subject against each edge of b. b's corners are CCW, so the
  // interior is to the left of every directed edge.
  for (int e = 0; e < 4 && subject.size() >= 3; ++e) {
    const Vec2 p1 = cb[e];
    const Vec2 p2 = cb[(e + 1) % 4];
    const Vec2 dir = p2 - p1;

    std::vector<Vec2> clipped;
    clipped.reserve(subject.size() + 2);
    for (size_t i = 0; i < subject.size(); ++i) {
      const Vec2 cur = subject[i];
      const Vec2 nxt = subject[(i + 1) % subject.size()];
      const double side_cur = cross(dir, cur - p1);
      const double side_nxt = cross(dir, nxt - p1);
      if (side_cur >= 0.0) clipped.push_back(cur);
      if ((side_cur > 0.0 && side_nxt < 0.0) || (side_cur < 0.0 && side_nxt > 0.0)) {
        const double t = side_cur / (side_cur - side_nxt);
        clipped.push_back(cur + t * (nxt - cur));
      }
    }
    subject = std::move(clipped);
  }

  const double area = polygon_area(subject);
  return area > kDegenerateArea ? area : 0.0;
}

double rotated_iou(const OrientedBox& a, const OrientedBox& b) {
  const Vec2 d = a.center() - b.center();
  const double reach = a.bounding_radius() + b.bounding_radius();
  if (dot(d, d) > reach * reach) return 0.0;

  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<size_t> rotated_nms(const std::vector<OrientedBox>& boxes,
                                const std::vector<double>& scores,
                                double iou_thr) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("rotated_nms: boxes and scores length mismatch");
  }
  if (!(iou_thr > 0.0) || iou_thr > 1.0) {
    throw std::invalid_argument("rotated_nms: iou_thr must be in (0, 1]");
  }

  std::vector<size_t> order(boxes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t i, size_t j) {
    if (scores[i] != scores[j]) return scores[i] > scores[j];
    return i < j;  // documented tie-break: lower original index wins
  });

  std::vector<size_t> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const size_t j = order[oj];
      if (suppressed[j]) continue;
      if (rotated_iou(boxes[i], boxes[j]) > iou_thr) suppressed[j] = true;
    }
  }
  return kept;
}

bool point_in_box(Vec2 p, const OrientedBox& box) {
  const double c = std::cos(box.theta());
  const double s = std::sin(box.theta());
  const Vec2 d = p - box.center();
  const double local_u = d.x * c + d.y * s;
  const double local_v = -d.x * s + d.y * c;
  return std::abs(local_u) <= 0.5 * box.w() && std::abs(local_v) <= 0.5 * box.h();
}

}  // namespace sparsedet
