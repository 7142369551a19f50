/*
 * Copyright 2026 The Fusemot Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fusemot/core.hpp"

namespace fusemot {

// ---------------------------------------------------------------------------
// Box types
// ---------------------------------------------------------------------------

/// Oriented 3D bounding box. `dimensions` stores (height, width, length);
/// length runs along the object's heading, width across it, height along the
/// vertical axis. `yaw` is the rotation about the vertical axis, kept in
/// (-pi, pi].
struct Box3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d dimensions = Eigen::Vector3d::Ones();  // (h, w, l)
  double yaw = 0.0;

  Box3D() = default;

  Box3D(const Eigen::Vector3d& position_, const Eigen::Vector3d& dimensions_,
        double yaw_)
      : position(position_), dimensions(dimensions_), yaw(wrap_angle(yaw_)) {
    if (!(dimensions.minCoeff() > 0.0)) {
      throw std::invalid_argument("box dimensions must be strictly positive");
    }
  }

  double height() const { return dimensions[0]; }
  double width() const { return dimensions[1]; }
  double length() const { return dimensions[2]; }
  double volume() const { return dimensions.prod(); }
};

inline bool operator==(const Box3D& a, const Box3D& b) {
  return a.position == b.position && a.dimensions == b.dimensions &&
         a.yaw == b.yaw;
}

/// Axis-aligned image-plane box in pixel coordinates, tagged with the camera
/// it lives in. Degenerate (zero or negative extent) boxes are rejected.
struct BoxImage {
  std::string camera_id;
  double left = 0.0;
  double top = 0.0;
  double right = 1.0;
  double bottom = 1.0;

  BoxImage() = default;

  BoxImage(std::string camera_id_, double left_, double top_, double right_,
           double bottom_)
      : camera_id(std::move(camera_id_)),
        left(left_),
        top(top_),
        right(right_),
        bottom(bottom_) {
    if (!(left < right) || !(top < bottom)) {
      throw std::invalid_argument("image box must have positive extent");
    }
  }

  double width() const { return right - left; }
  double height() const { return bottom - top; }
  double area() const { return width() * height(); }
};

inline bool operator==(const BoxImage& a, const BoxImage& b) {
  return a.camera_id == b.camera_id && a.left == b.left && a.top == b.top &&
         a.right == b.right && a.bottom == b.bottom;
}

/// Pinhole camera: upper-triangular intrinsics plus a world-to-camera rigid
/// transform. The camera looks down its own +z axis.
struct CameraModel {
  std::string camera_id;
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  RigidTransform extrinsics;  // world -> camera
  int image_width = 0;
  int image_height = 0;

  /// Throws ConfigError on an ill-formed model. Rotation orthonormality is
  /// enforced tightly here; parsers accept looser input and orthonormalize
  /// before constructing the model.
  void validate() const {
    if (camera_id.empty()) throw ConfigError("camera_id must be non-empty");
    if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0) ||
        !(intrinsics(2, 2) > 0.0)) {
      throw ConfigError("camera " + camera_id +
                        ": intrinsics diagonal must be positive");
    }
    if (std::abs(intrinsics(1, 0)) > 1e-9 ||
        std::abs(intrinsics(2, 0)) > 1e-9 ||
        std::abs(intrinsics(2, 1)) > 1e-9) {
      throw ConfigError("camera " + camera_id +
                        ": intrinsics must be upper-triangular");
    }
    if (rotation_orthonormality_error(extrinsics.rotation) > 1e-9) {
      throw ConfigError("camera " + camera_id +
                        ": extrinsic rotation is not orthonormal");
    }
    if (image_width <= 0 || image_height <= 0) {
      throw ConfigError("camera " + camera_id + ": image size must be positive");
    }
  }
};

/// Corners closer to the camera than this are treated as behind it.
inline constexpr double kMinProjectionDepth = 1e-3;

// ---------------------------------------------------------------------------
// Distances and overlaps
// ---------------------------------------------------------------------------

/// Orientation mismatch factor in [1, 2]: 1 for parallel headings, growing to
/// 2 as the headings disagree. The cosine of the yaw difference is clamped to
/// [0, 1] first, so anything at or beyond a right angle saturates at 2.
inline double orientation_penalty(double yaw_i, double yaw_j) {
  double c = std::cos(wrap_angle(yaw_i - yaw_j));
  c = std::clamp(c, 0.0, 1.0);
  return 2.0 - c;
}

/// Distance between two boxes as the Euclidean norm over the stacked
/// (position, dimensions) vectors, scaled by the orientation penalty.
inline double scaled_distance(const Box3D& a, const Box3D& b) {
  Eigen::Matrix<double, 6, 1> da, db;
  da << a.position, a.dimensions;
  db << b.position, b.dimensions;
  return (da - db).norm() * orientation_penalty(a.yaw, b.yaw);
}

/// Euclidean distance between box centers within the ground plane; the
/// vertical components are ignored.
inline double planar_distance(const Box3D& a, const Box3D& b,
                              int vertical_axis = kVerticalAxis) {
  auto [u, v] = ground_axes(vertical_axis);
  double du = a.position[u] - b.position[u];
  double dv = a.position[v] - b.position[v];
  return std::hypot(du, dv);
}

/// Intersection-over-union of two image boxes. Zero when they do not overlap
/// or live in different cameras.
inline double iou_2d(const BoxImage& a, const BoxImage& b) {
  if (a.camera_id != b.camera_id) return 0.0;
  double iw = std::min(a.right, b.right) - std::max(a.left, b.left);
  double ih = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace detail {

struct Vec2 {
  double u = 0.0;
  double v = 0.0;
};

/// Ground-plane footprint corners, counter-clockwise.
inline std::array<Vec2, 4> footprint(const Box3D& box, int vertical_axis) {
  auto [ga, gb] = ground_axes(vertical_axis);
  const double hl = 0.5 * box.length();
  const double hw = 0.5 * box.width();
  const std::array<std::pair<double, double>, 4> offsets = {
      std::pair{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  std::array<Vec2, 4> out;
  for (size_t i = 0; i < 4; ++i) {
    auto [du, dv] =
        rotate_ground(offsets[i].first, offsets[i].second, box.yaw,
                      vertical_axis);
    out[i] = {box.position[ga] + du, box.position[gb] + dv};
  }
  return out;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    acc += p.u * q.v - q.u * p.v;
  }
  return 0.5 * std::abs(acc);
}

/// Clips a convex polygon against one half-plane (inside = left of a->b).
inline std::vector<Vec2> clip_edge(const std::vector<Vec2>& poly,
                                   const Vec2& a, const Vec2& b) {
  auto side = [&](const Vec2& p) {
    return (b.u - a.u) * (p.v - a.v) - (b.v - a.v) * (p.u - a.u);
  };
  std::vector<Vec2> out;
  out.reserve(poly.size() + 1);
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& cur = poly[i];
    const Vec2& nxt = poly[(i + 1) % poly.size()];
    double sc = side(cur);
    double sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      double t = sc / (sc - sn);
      out.push_back({cur.u + t * (nxt.u - cur.u), cur.v + t * (nxt.v - cur.v)});
    }
  }
  return out;
}

/// Area of the intersection of two convex counter-clockwise quads.
inline double intersection_area(const std::array<Vec2, 4>& a,
                                const std::array<Vec2, 4>& b) {
  std::vector<Vec2> poly(a.begin(), a.end());
  for (size_t i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_edge(poly, b[i], b[(i + 1) % 4]);
  }
  return polygon_area(poly);
}

}  // namespace detail

/// Volumetric intersection-over-union of two oriented boxes sharing a
/// vertical axis: exact convex-polygon overlap in the ground plane times the
/// overlap of the vertical extents.
inline double iou_3d(const Box3D& a, const Box3D& b,
                     int vertical_axis = kVerticalAxis) {
  const double base =
      detail::intersection_area(detail::footprint(a, vertical_axis),
                                detail::footprint(b, vertical_axis));
  if (base <= 0.0) return 0.0;
  const double alo = a.position[vertical_axis] - 0.5 * a.height();
  const double ahi = a.position[vertical_axis] + 0.5 * a.height();
  const double blo = b.position[vertical_axis] - 0.5 * b.height();
  const double bhi = b.position[vertical_axis] + 0.5 * b.height();
  const double vert = std::min(ahi, bhi) - std::max(alo, blo);
  if (vert <= 0.0) return 0.0;
  const double inter = base * vert;
  return inter / (a.volume() + b.volume() - inter);
}

/// The eight corners of a box in world coordinates. Corner i uses sign bits
/// of i: bit 0 flips the half-length, bit 1 the half-width, bit 2 the
/// half-height, all before the yaw rotation is applied.
inline std::array<Eigen::Vector3d, 8> box_corners(
    const Box3D& box, int vertical_axis = kVerticalAxis) {
  auto [ga, gb] = ground_axes(vertical_axis);
  std::array<Eigen::Vector3d, 8> out;
  for (int i = 0; i < 8; ++i) {
    const double sl = (i & 1) ? 0.5 : -0.5;
    const double sw = (i & 2) ? 0.5 : -0.5;
    const double sh = (i & 4) ? 0.5 : -0.5;
    auto [du, dv] = rotate_ground(sl * box.length(), sw * box.width(), box.yaw,
                                  vertical_axis);
    Eigen::Vector3d corner = box.position;
    corner[ga] += du;
    corner[gb] += dv;
    corner[vertical_axis] += sh * box.height();
    out[i] = corner;
  }
  return out;
}

/// Projects a 3D box into a camera as the axis-aligned hull of its visible
/// corners, clipped to the image. Corners at depth <= kMinProjectionDepth are
/// dropped; fewer than two surviving corners, or a hull that degenerates
/// after clipping, yields nullopt.
inline std::optional<BoxImage> project_box(const Box3D& box,
                                           const CameraModel& cam,
                                           int vertical_axis = kVerticalAxis) {
  double min_u = std::numeric_limits<double>::infinity();
  double max_u = -std::numeric_limits<double>::infinity();
  double min_v = std::numeric_limits<double>::infinity();
  double max_v = -std::numeric_limits<double>::infinity();
  int visible = 0;
  for (const Eigen::Vector3d& corner : box_corners(box, vertical_axis)) {
    const Eigen::Vector3d in_cam = cam.extrinsics.apply(corner);
    if (in_cam.z() <= kMinProjectionDepth) continue;
    const Eigen::Vector3d pixel = cam.intrinsics * in_cam;
    const double u = pixel.x() / pixel.z();
    const double v = pixel.y() / pixel.z();
    min_u = std::min(min_u, u);
    max_u = std::max(max_u, u);
    min_v = std::min(min_v, v);
    max_v = std::max(max_v, v);
    ++visible;
  }
  if (visible < 2) return std::nullopt;
  min_u = std::max(min_u, 0.0);
  min_v = std::max(min_v, 0.0);
  max_u = std::min(max_u, static_cast<double>(cam.image_width));
  max_v = std::min(max_v, static_cast<double>(cam.image_height));
  if (!(min_u < max_u) || !(min_v < max_v)) return std::nullopt;
  return BoxImage(cam.camera_id, min_u, min_v, max_u, max_v);
}

}  // namespace fusemot
