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

#include <cmath>

#include <Eigen/Dense>

#include "fusemot/core.hpp"
#include "fusemot/geometry.hpp"

namespace fusemot {

// ---------------------------------------------------------------------------
// Constant-velocity Kalman filter over oriented boxes
// ---------------------------------------------------------------------------
//
// State (10): [x, y, z, yaw, h, w, l, vx, vy, vz]
// Observation (7): [x, y, z, yaw, h, w, l]
//
// Velocities are expressed in meters per frame; the transition simply adds
// them to the position. Yaw and dimensions are modeled as constant.

inline constexpr int kStateDim = 10;
inline constexpr int kObsDim = 7;
inline constexpr int kYawIndex = 3;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;
using ObsVector = Eigen::Matrix<double, kObsDim, 1>;
using ObsMatrix = Eigen::Matrix<double, kObsDim, kObsDim>;

/// Diagonal noise levels for the filter. Defaults follow the common
/// convention for per-frame box tracking: loose initial velocity uncertainty,
/// small process noise on position and velocity, none on yaw or dimensions.
struct NoiseConfig {
  double p0_observed = 10.0;    // initial variance of observed components
  double p0_velocity = 1000.0;  // initial variance of velocity components
  double q_position = 1e-2;     // process noise on x, y, z
  double q_velocity = 1e-2;     // process noise on vx, vy, vz
  double r_observation = 1.0;   // observation noise on every component
};

struct FilterState {
  StateVector mean = StateVector::Zero();
  StateMatrix covariance = StateMatrix::Identity();
};

namespace detail {

inline StateMatrix transition_matrix() {
  StateMatrix f = StateMatrix::Identity();
  for (int i = 0; i < 3; ++i) f(i, 7 + i) = 1.0;
  return f;
}

inline Eigen::Matrix<double, kObsDim, kStateDim> observation_matrix() {
  Eigen::Matrix<double, kObsDim, kStateDim> h;
  h.setZero();
  for (int i = 0; i < kObsDim; ++i) h(i, i) = 1.0;
  return h;
}

inline ObsVector box_to_observation(const Box3D& box) {
  ObsVector z;
  z << box.position, box.yaw, box.dimensions;
  return z;
}

}  // namespace detail

/// Starts a filter on a first 3D observation: observed components copied,
/// velocities zero, block-diagonal initial covariance.
inline FilterState init_filter(const Box3D& box, const NoiseConfig& noise) {
  FilterState s;
  s.mean.head<kObsDim>() = detail::box_to_observation(box);
  s.mean.tail<3>().setZero();
  s.covariance.setZero();
  for (int i = 0; i < kObsDim; ++i) s.covariance(i, i) = noise.p0_observed;
  for (int i = kObsDim; i < kStateDim; ++i) {
    s.covariance(i, i) = noise.p0_velocity;
  }
  return s;
}

/// Constant-velocity time update. Position gains one frame of velocity, the
/// covariance is propagated and inflated by the process noise, and yaw is
/// re-wrapped to (-pi, pi].
inline FilterState predict(const FilterState& state,
                           const NoiseConfig& noise) {
  static const StateMatrix f = detail::transition_matrix();
  StateMatrix q = StateMatrix::Zero();
  for (int i = 0; i < 3; ++i) q(i, i) = noise.q_position;
  for (int i = 7; i < kStateDim; ++i) q(i, i) = noise.q_velocity;

  FilterState out;
  out.mean = f * state.mean;
  out.mean[kYawIndex] = wrap_angle(out.mean[kYawIndex]);
  out.covariance = f * state.covariance * f.transpose() + q;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose().eval());
  return out;
}

/// Measurement update with an observed box. The yaw innovation is wrapped to
/// (-pi, pi]; when the wrapped innovation still exceeds a right angle the
/// observation's heading is flipped by pi first, so boxes reported facing
/// backwards do not yank the track around. Uses the Joseph form plus
/// symmetrization to keep the covariance positive semi-definite.
inline FilterState update(const FilterState& state, const Box3D& observation,
                          const NoiseConfig& noise) {
  static const Eigen::Matrix<double, kObsDim, kStateDim> h =
      detail::observation_matrix();
  const ObsMatrix r = ObsMatrix::Identity() * noise.r_observation;

  ObsVector z = detail::box_to_observation(observation);
  double innovation_yaw = wrap_angle(z[kYawIndex] - state.mean[kYawIndex]);
  if (std::abs(innovation_yaw) > 0.5 * std::numbers::pi) {
    z[kYawIndex] = wrap_angle(z[kYawIndex] + std::numbers::pi);
    innovation_yaw = wrap_angle(z[kYawIndex] - state.mean[kYawIndex]);
  }
  ObsVector innovation = z - h * state.mean;
  innovation[kYawIndex] = innovation_yaw;

  const ObsMatrix s = h * state.covariance * h.transpose() + r;
  const Eigen::Matrix<double, kStateDim, kObsDim> gain =
      state.covariance * h.transpose() * s.inverse();

  FilterState out;
  out.mean = state.mean + gain * innovation;
  out.mean[kYawIndex] = wrap_angle(out.mean[kYawIndex]);
  const StateMatrix joseph = StateMatrix::Identity() - gain * h;
  out.covariance = joseph * state.covariance * joseph.transpose() +
                   gain * r * gain.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose().eval());
  return out;
}

/// Minimum dimension a state box is clamped to when the filter drifts into
/// non-physical (zero or negative) sizes.
inline constexpr double kMinStateDimension = 0.01;

/// Reads the box out of a filter state. If any estimated dimension has
/// drifted to zero or below it is clamped to kMinStateDimension and
/// `degenerate` (when provided) is set.
inline Box3D state_to_box(const FilterState& state,
                          bool* degenerate = nullptr) {
  Eigen::Vector3d position = state.mean.head<3>();
  Eigen::Vector3d dims = state.mean.segment<3>(4);
  bool clamped = false;
  for (int i = 0; i < 3; ++i) {
    if (dims[i] <= 0.0) {
      dims[i] = kMinStateDimension;
      clamped = true;
    }
  }
  if (degenerate) *degenerate = clamped;
  return Box3D(position, dims, wrap_angle(state.mean[kYawIndex]));
}

}  // namespace fusemot
