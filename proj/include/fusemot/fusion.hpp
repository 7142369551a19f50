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

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fusemot/association.hpp"
#include "fusemot/core.hpp"
#include "fusemot/geometry.hpp"

namespace fusemot {

// ---------------------------------------------------------------------------
// Detections and fused instances
// ---------------------------------------------------------------------------

/// One 3D detector output, already in the tracking (world) frame.
struct Detection3D {
  Box3D box;
  double score = 0.0;
  ClassId class_id = ClassId::kCar;
  int64_t frame_index = 0;
};

/// One 2D detector output in a specific camera. `mask_payload` is an opaque
/// segmentation blob carried through to the output untouched.
struct Detection2D {
  BoxImage box;
  double score = 0.0;
  ClassId class_id = ClassId::kCar;
  int64_t frame_index = 0;
  std::optional<std::string> mask_payload;
};

/// A per-frame object hypothesis: a 3D detection, a 2D detection, or both
/// when fusion paired them up. At least one side is always present and both
/// sides agree on the class.
struct FusedInstance {
  std::optional<Detection3D> det3d;
  std::optional<Detection2D> det2d;
  ClassId class_id = ClassId::kCar;
};

// ---------------------------------------------------------------------------
// Camera-LiDAR fusion
// ---------------------------------------------------------------------------

/// Pairs 3D detections with 2D detections from one camera by greedily
/// maximizing the image-plane IoU between each 3D box's projection and the 2D
/// boxes, accepting pairs with IoU > min_overlap. Class-mismatched pairs are
/// forbidden outright. 3D boxes with an empty projection score zero overlap
/// everywhere, so they can never be paired. Rows index dets3d, columns
/// dets2d.
inline MatchSet fuse_single_camera(const std::vector<Detection3D>& dets3d,
                                   const std::vector<Detection2D>& dets2d,
                                   const CameraModel& camera,
                                   double min_overlap,
                                   int vertical_axis = kVerticalAxis) {
  const int rows = static_cast<int>(dets3d.size());
  const int cols = static_cast<int>(dets2d.size());
  Eigen::MatrixXd overlap(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const std::optional<BoxImage> projection =
        project_box(dets3d[r].box, camera, vertical_axis);
    for (int c = 0; c < cols; ++c) {
      if (dets3d[r].class_id != dets2d[c].class_id) {
        overlap(r, c) = -std::numeric_limits<double>::infinity();
      } else if (!projection) {
        overlap(r, c) = 0.0;
      } else {
        overlap(r, c) = iou_2d(*projection, dets2d[c].box);
      }
    }
  }
  return greedy_match(overlap, min_overlap, MatchSense::kMaximize);
}

/// Fuses one frame's detections across every camera. Each camera is matched
/// independently with fuse_single_camera; when a 3D detection wins 2D
/// partners in several cameras, the camera where its projection has the
/// largest clipped area keeps the pair (ties broken by camera_id order) and
/// the other cameras' 2D detections are released. Released detections are
/// not offered to other 3D detections again; they come back as 2D-only
/// instances.
///
/// Every input detection appears in exactly one output instance. Instances
/// are emitted in a deterministic order: one per 3D detection in input
/// order, then the leftover 2D detections camera by camera (in `cameras`
/// order) in input order.
inline std::vector<FusedInstance> fuse_frame(
    const std::vector<Detection3D>& dets3d,
    const std::map<std::string, std::vector<Detection2D>>& dets2d_by_camera,
    const std::vector<CameraModel>& cameras, double min_overlap,
    int vertical_axis = kVerticalAxis) {
  struct CameraPair {
    size_t camera_index;
    int det2d_index;
    double projected_area;
  };
  const int n3 = static_cast<int>(dets3d.size());
  std::vector<std::vector<CameraPair>> pairs(n3);
  std::vector<std::vector<char>> consumed(cameras.size());

  static const std::vector<Detection2D> kNo2d;
  for (size_t ci = 0; ci < cameras.size(); ++ci) {
    const CameraModel& cam = cameras[ci];
    auto it = dets2d_by_camera.find(cam.camera_id);
    const std::vector<Detection2D>& dets2d =
        it == dets2d_by_camera.end() ? kNo2d : it->second;
    consumed[ci].assign(dets2d.size(), 0);
    if (dets2d.empty() || dets3d.empty()) continue;

    const MatchSet matched =
        fuse_single_camera(dets3d, dets2d, cam, min_overlap, vertical_axis);
    for (const Match& m : matched.matches) {
      const std::optional<BoxImage> projection =
          project_box(dets3d[m.row].box, cam, vertical_axis);
      pairs[m.row].push_back({ci, m.col, projection ? projection->area() : 0.0});
      consumed[ci][m.col] = 1;
    }
  }

  std::vector<FusedInstance> out;
  out.reserve(dets3d.size());
  for (int i = 0; i < n3; ++i) {
    FusedInstance inst;
    inst.det3d = dets3d[i];
    inst.class_id = dets3d[i].class_id;
    if (!pairs[i].empty()) {
      const CameraPair* best = &pairs[i][0];
      for (const CameraPair& p : pairs[i]) {
        if (p.projected_area > best->projected_area ||
            (p.projected_area == best->projected_area &&
             cameras[p.camera_index].camera_id <
                 cameras[best->camera_index].camera_id)) {
          best = &p;
        }
      }
      for (const CameraPair& p : pairs[i]) {
        if (&p != best) consumed[p.camera_index][p.det2d_index] = 0;
      }
      inst.det2d =
          dets2d_by_camera.at(cameras[best->camera_index].camera_id)
              [best->det2d_index];
    }
    out.push_back(std::move(inst));
  }
  for (size_t ci = 0; ci < cameras.size(); ++ci) {
    auto it = dets2d_by_camera.find(cameras[ci].camera_id);
    if (it == dets2d_by_camera.end()) continue;
    for (size_t j = 0; j < it->second.size(); ++j) {
      if (consumed[ci][j]) continue;
      FusedInstance inst;
      inst.det2d = it->second[j];
      inst.class_id = it->second[j].class_id;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace fusemot
