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

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace fusemot {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error this library raises on bad input. Callers that
/// want a single catch site can catch this; the subclasses distinguish file
/// parsing problems from configuration problems from API misuse.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data (detections, poses, calibration, results files).
/// Carries the offending path and, when known, the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, int64_t line, const std::string& message)
      : Error(format(path, line, message)), path_(path), line_(line) {}

  ParseError(const std::string& path, const std::string& message)
      : ParseError(path, 0, message) {}

  const std::string& path() const { return path_; }
  int64_t line() const { return line_; }

 private:
  static std::string format(const std::string& path, int64_t line,
                            const std::string& message) {
    if (line > 0) {
      return path + ":" + std::to_string(line) + ": " + message;
    }
    return path + ": " + message;
  }

  std::string path_;
  int64_t line_;
};

/// Inconsistent or out-of-range configuration (tracker config, scenario,
/// evaluation setup).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

/// API contract violation on streaming input, e.g. frames fed to a tracker
/// out of order.
class SequencingError : public Error {
 public:
  explicit SequencingError(const std::string& what) : Error(what) {}
};

// ---------------------------------------------------------------------------
// Object classes
// ---------------------------------------------------------------------------

enum class ClassId : int {
  kCar = 0,
  kPedestrian,
  kBicycle,
  kBus,
  kMotorcycle,
  kTrailer,
  kTruck,
};

inline constexpr int kClassCount = 7;

inline constexpr std::array<ClassId, kClassCount> kAllClasses = {
    ClassId::kCar,       ClassId::kPedestrian, ClassId::kBicycle,
    ClassId::kBus,       ClassId::kMotorcycle, ClassId::kTrailer,
    ClassId::kTruck,
};

inline const char* class_name(ClassId id) {
  switch (id) {
    case ClassId::kCar:        return "car";
    case ClassId::kPedestrian: return "pedestrian";
    case ClassId::kBicycle:    return "bicycle";
    case ClassId::kBus:        return "bus";
    case ClassId::kMotorcycle: return "motorcycle";
    case ClassId::kTrailer:    return "trailer";
    case ClassId::kTruck:      return "truck";
  }
  throw std::invalid_argument("unknown class id");
}

inline std::optional<ClassId> class_from_name(const std::string& name) {
  for (ClassId id : kAllClasses) {
    if (name == class_name(id)) return id;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Angles and axes
// ---------------------------------------------------------------------------

/// Wraps an angle to (-pi, pi]. Exactly +pi stays +pi; -pi maps to +pi.
/// Angles already in range are returned untouched, so wrapping is idempotent
/// down to the bit.
inline double wrap_angle(double angle) {
  if (angle > -std::numbers::pi && angle <= std::numbers::pi) return angle;
  const double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle + std::numbers::pi, two_pi);
  if (a <= 0.0) a += two_pi;
  return a - std::numbers::pi;
}

/// World axis that points up. The default (1, the y axis) matches camera-style
/// coordinates where the ground plane is x/z; rigs may override it.
inline constexpr int kVerticalAxis = 1;

/// The two world axes spanning the ground plane for a given vertical axis,
/// ordered so that (first, second, vertical) keeps the usual handedness.
inline std::pair<int, int> ground_axes(int vertical_axis) {
  switch (vertical_axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    case 2: return {0, 1};
    default:
      throw std::invalid_argument("vertical axis must be 0, 1 or 2");
  }
}

/// Rotates a ground-plane offset (u along the first ground axis, v along the
/// second) by a yaw about the vertical axis. The sign convention follows the
/// right-hand rotation about that axis, so composing with a rigid transform
/// whose rotation is a pure vertical-axis rotation adds angles.
inline std::pair<double, double> rotate_ground(double u, double v, double yaw,
                                               int vertical_axis) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  switch (vertical_axis) {
    case 0: return {u * c - v * s, u * s + v * c};
    case 1: return {u * c + v * s, -u * s + v * c};
    case 2: return {u * c - v * s, u * s + v * c};
    default:
      throw std::invalid_argument("vertical axis must be 0, 1 or 2");
  }
}

/// Unit vector in the ground plane an object with the given yaw faces.
inline Eigen::Vector3d heading_direction(double yaw, int vertical_axis) {
  auto [a, b] = ground_axes(vertical_axis);
  auto [u, v] = rotate_ground(1.0, 0.0, yaw, vertical_axis);
  Eigen::Vector3d dir = Eigen::Vector3d::Zero();
  dir[a] = u;
  dir[b] = v;
  return dir;
}

/// Inverse of heading_direction: the yaw whose heading best matches the
/// ground-plane component of `direction`.
inline double yaw_from_direction(const Eigen::Vector3d& direction,
                                 int vertical_axis) {
  auto [a, b] = ground_axes(vertical_axis);
  double u = direction[a];
  double v = direction[b];
  switch (vertical_axis) {
    case 0: return std::atan2(v, u);
    case 1: return std::atan2(-v, u);
    case 2: return std::atan2(v, u);
    default:
      throw std::invalid_argument("vertical axis must be 0, 1 or 2");
  }
}

// ---------------------------------------------------------------------------
// Rigid transforms
// ---------------------------------------------------------------------------

/// Proper rigid transform p' = R p + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }
};

/// Composition: (a * b) applies b first, then a.
inline RigidTransform operator*(const RigidTransform& a,
                                const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

/// Max absolute entry of R^T R - I; zero for a perfect rotation.
inline double rotation_orthonormality_error(const Eigen::Matrix3d& rotation) {
  Eigen::Matrix3d residual =
      rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  return residual.cwiseAbs().maxCoeff();
}

/// Nearest proper rotation to an almost-orthonormal matrix (polar
/// decomposition via SVD). Used to clean up calibration matrices that are
/// orthonormal only to the precision they were published with.
inline Eigen::Matrix3d orthonormalize_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace fusemot
