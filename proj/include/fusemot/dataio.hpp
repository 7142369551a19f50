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
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fusemot/core.hpp"
#include "fusemot/fusion.hpp"
#include "fusemot/geometry.hpp"

namespace fusemot {

// ---------------------------------------------------------------------------
// Aggregate input types
// ---------------------------------------------------------------------------

/// Camera rig: the shared vertical-axis convention plus one model per camera.
struct Rig {
  int vertical_axis = kVerticalAxis;
  std::vector<CameraModel> cameras;

  const CameraModel* find(const std::string& camera_id) const {
    for (const CameraModel& cam : cameras) {
      if (cam.camera_id == camera_id) return &cam;
    }
    return nullptr;
  }
};

/// Everything the tracker consumes for one frame. 3D detections are in the
/// tracking (world) frame; `ego_pose` maps the sensor frame the detections
/// were measured in to the tracking frame and is used to place the rig's
/// cameras for this frame.
struct FrameInput {
  int64_t frame_index = 0;
  std::optional<double> timestamp;  // seconds; informational only
  std::vector<Detection3D> dets3d;
  std::map<std::string, std::vector<Detection2D>> dets2d_by_camera;
  RigidTransform ego_pose;
};

/// One reported object. `box3d` is absent for tracks that never received a
/// 3D detection; `boxes2d` holds at most one box per camera. The mask payload
/// rides along whenever the record carries a 2D box whose source detection
/// had one.
struct OutputRecord {
  int64_t track_id = 0;
  ClassId class_id = ClassId::kCar;
  std::optional<Box3D> box3d;
  double score = 0.0;
  bool confirmed = false;
  std::vector<BoxImage> boxes2d;
  std::optional<std::string> mask_payload;
};

inline bool operator==(const OutputRecord& a, const OutputRecord& b) {
  return a.track_id == b.track_id && a.class_id == b.class_id &&
         a.box3d == b.box3d && a.score == b.score &&
         a.confirmed == b.confirmed && a.boxes2d == b.boxes2d &&
         a.mask_payload == b.mask_payload;
}

struct FrameOutput {
  int64_t frame_index = 0;
  std::vector<OutputRecord> records;
};

inline bool operator==(const FrameOutput& a, const FrameOutput& b) {
  return a.frame_index == b.frame_index && a.records == b.records;
}

/// Detections grouped by sequence and frame.
struct FrameDetections {
  std::vector<Detection3D> dets3d;
  std::map<std::string, std::vector<Detection2D>> dets2d;
};

using DetectionMap = std::map<std::string, std::map<int64_t, FrameDetections>>;
using PoseMap = std::map<std::string, std::map<int64_t, RigidTransform>>;
using ResultMap = std::map<std::string, std::vector<FrameOutput>>;

// ---------------------------------------------------------------------------
// JSON access helpers
// ---------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline const json& require(const json& j, const char* key,
                           const std::string& path, int64_t line) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ParseError(path, line, std::string("missing field '") + key + "'");
  }
  return *it;
}

inline double as_finite(const json& j, const char* key,
                        const std::string& path, int64_t line) {
  if (!j.is_number()) {
    throw ParseError(path, line, std::string("field '") + key +
                                     "' must be a number");
  }
  const double v = j.get<double>();
  if (!std::isfinite(v)) {
    throw ParseError(path, line, std::string("field '") + key +
                                     "' must be finite");
  }
  return v;
}

inline int64_t as_integer(const json& j, const char* key,
                          const std::string& path, int64_t line) {
  if (!j.is_number_integer()) {
    throw ParseError(path, line, std::string("field '") + key +
                                     "' must be an integer");
  }
  return j.get<int64_t>();
}

inline std::string as_string(const json& j, const char* key,
                             const std::string& path, int64_t line) {
  if (!j.is_string()) {
    throw ParseError(path, line, std::string("field '") + key +
                                     "' must be a string");
  }
  return j.get<std::string>();
}

inline Eigen::Vector3d as_vec3(const json& j, const char* key,
                               const std::string& path, int64_t line) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(path, line, std::string("field '") + key +
                                     "' must be an array of 3 numbers");
  }
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v[i] = as_finite(j[i], key, path, line);
  return v;
}

inline std::array<double, 4> as_arr4(const json& j, const char* key,
                                     const std::string& path, int64_t line) {
  if (!j.is_array() || j.size() != 4) {
    throw ParseError(path, line, std::string("field '") + key +
                                     "' must be an array of 4 numbers");
  }
  std::array<double, 4> v{};
  for (int i = 0; i < 4; ++i) v[i] = as_finite(j[i], key, path, line);
  return v;
}

inline Eigen::Matrix3d as_mat3_rows(const json& j, const char* key,
                                    const std::string& path, int64_t line) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(path, line, std::string("field '") + key +
                                     "' must be a 3x3 array");
  }
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    const json& row = j[r];
    if (!row.is_array() || row.size() != 3) {
      throw ParseError(path, line, std::string("field '") + key +
                                       "' must be a 3x3 array");
    }
    for (int c = 0; c < 3; ++c) m(r, c) = as_finite(row[c], key, path, line);
  }
  return m;
}

inline Eigen::Matrix3d as_mat3_flat(const json& j, const char* key,
                                    const std::string& path, int64_t line) {
  if (!j.is_array() || j.size() != 9) {
    throw ParseError(path, line, std::string("field '") + key +
                                     "' must be an array of 9 numbers "
                                     "(row-major 3x3)");
  }
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = as_finite(j[i], key, path, line);
  return m;
}

inline json parse_json_line(const std::string& text, const std::string& path,
                            int64_t line) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(path, line, "invalid JSON");
  if (!j.is_object()) throw ParseError(path, line, "expected a JSON object");
  return j;
}

inline ClassId as_class(const json& j, const std::string& path, int64_t line) {
  const std::string name = as_string(j, "class", path, line);
  const std::optional<ClassId> id = class_from_name(name);
  if (!id) {
    std::string accepted;
    for (const ClassId known : kAllClasses) {
      if (!accepted.empty()) accepted += ", ";
      accepted += class_name(known);
    }
    throw ParseError(path, line,
                     "unknown class '" + name + "' (accepted: " + accepted +
                         ")");
  }
  return *id;
}

inline double as_score(const json& j, const std::string& path, int64_t line) {
  const double score = as_finite(j, "score", path, line);
  if (score < 0.0 || score > 1.0) {
    throw ParseError(path, line, "score must be in [0, 1]");
  }
  return score;
}

/// Rotation entries are accepted when orthonormal to within this bound, then
/// replaced by the nearest exact rotation; published calibrations are only
/// good to roughly their printed precision.
inline constexpr double kRotationGate = 1e-6;

inline Eigen::Matrix3d checked_rotation(const Eigen::Matrix3d& m,
                                        const std::string& path,
                                        int64_t line) {
  if (rotation_orthonormality_error(m) > kRotationGate) {
    throw ParseError(path, line, "rotation matrix is not orthonormal");
  }
  return orthonormalize_rotation(m);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Detections (JSON lines)
// ---------------------------------------------------------------------------
//
// One JSON object per line. Shared fields: "seq" (string, default "0"),
// "frame" (integer >= 0), "type" ("3d" | "2d"), "class", "score".
// 3D lines add "xyz", "hwl", "yaw"; 2D lines add "camera", "ltrb" and an
// optional "mask" string that is carried through untouched.

inline DetectionMap parse_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");

  DetectionMap out;
  std::string text;
  int64_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const detail::json j = detail::parse_json_line(text, path, line);

    std::string seq = "0";
    if (auto it = j.find("seq"); it != j.end()) {
      seq = detail::as_string(*it, "seq", path, line);
    }
    const int64_t frame =
        detail::as_integer(detail::require(j, "frame", path, line), "frame",
                           path, line);
    if (frame < 0) throw ParseError(path, line, "frame must be >= 0");
    const std::string type =
        detail::as_string(detail::require(j, "type", path, line), "type",
                          path, line);
    const ClassId class_id =
        detail::as_class(detail::require(j, "class", path, line), path, line);
    const double score =
        detail::as_score(detail::require(j, "score", path, line), path, line);

    FrameDetections& slot = out[seq][frame];
    if (type == "3d") {
      const Eigen::Vector3d xyz =
          detail::as_vec3(detail::require(j, "xyz", path, line), "xyz", path,
                          line);
      const Eigen::Vector3d hwl =
          detail::as_vec3(detail::require(j, "hwl", path, line), "hwl", path,
                          line);
      if (!(hwl.minCoeff() > 0.0)) {
        throw ParseError(path, line, "hwl entries must be positive");
      }
      const double yaw =
          detail::as_finite(detail::require(j, "yaw", path, line), "yaw",
                            path, line);
      Detection3D det;
      det.box = Box3D(xyz, hwl, yaw);
      det.score = score;
      det.class_id = class_id;
      det.frame_index = frame;
      slot.dets3d.push_back(std::move(det));
    } else if (type == "2d") {
      const std::string camera =
          detail::as_string(detail::require(j, "camera", path, line),
                            "camera", path, line);
      if (camera.empty()) throw ParseError(path, line, "camera must be non-empty");
      const std::array<double, 4> ltrb =
          detail::as_arr4(detail::require(j, "ltrb", path, line), "ltrb",
                          path, line);
      if (!(ltrb[0] < ltrb[2]) || !(ltrb[1] < ltrb[3])) {
        throw ParseError(path, line,
                         "ltrb must satisfy left < right and top < bottom");
      }
      Detection2D det;
      det.box = BoxImage(camera, ltrb[0], ltrb[1], ltrb[2], ltrb[3]);
      det.score = score;
      det.class_id = class_id;
      det.frame_index = frame;
      if (auto it = j.find("mask"); it != j.end()) {
        det.mask_payload = detail::as_string(*it, "mask", path, line);
      }
      slot.dets2d[camera].push_back(std::move(det));
    } else {
      throw ParseError(path, line, "type must be '3d' or '2d'");
    }
  }
  return out;
}

inline void merge_detections(DetectionMap& into, const DetectionMap& from) {
  for (const auto& [seq, frames] : from) {
    for (const auto& [frame, dets] : frames) {
      FrameDetections& slot = into[seq][frame];
      slot.dets3d.insert(slot.dets3d.end(), dets.dets3d.begin(),
                         dets.dets3d.end());
      for (const auto& [cam, list] : dets.dets2d) {
        auto& target = slot.dets2d[cam];
        target.insert(target.end(), list.begin(), list.end());
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Ego poses (JSON lines)
// ---------------------------------------------------------------------------
//
// One line per (seq, frame): {"seq", "frame", "rotation": [9 row-major],
// "translation": [3]}; the transform maps sensor coordinates to the tracking
// frame.

inline PoseMap parse_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");

  PoseMap out;
  std::string text;
  int64_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const detail::json j = detail::parse_json_line(text, path, line);

    std::string seq = "0";
    if (auto it = j.find("seq"); it != j.end()) {
      seq = detail::as_string(*it, "seq", path, line);
    }
    const int64_t frame =
        detail::as_integer(detail::require(j, "frame", path, line), "frame",
                           path, line);
    if (frame < 0) throw ParseError(path, line, "frame must be >= 0");

    RigidTransform pose;
    pose.rotation = detail::checked_rotation(
        detail::as_mat3_flat(detail::require(j, "rotation", path, line),
                             "rotation", path, line),
        path, line);
    pose.translation =
        detail::as_vec3(detail::require(j, "translation", path, line),
                        "translation", path, line);
    if (!out[seq].emplace(frame, pose).second) {
      throw ParseError(path, line, "duplicate pose for seq '" + seq +
                                       "' frame " + std::to_string(frame));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Camera rigs
// ---------------------------------------------------------------------------

namespace detail {

inline Rig rig_from_json(const json& j, const std::string& path) {
  Rig rig;
  if (auto it = j.find("up_axis"); it != j.end()) {
    const std::string axis = as_string(*it, "up_axis", path, 0);
    if (axis == "x") {
      rig.vertical_axis = 0;
    } else if (axis == "y") {
      rig.vertical_axis = 1;
    } else if (axis == "z") {
      rig.vertical_axis = 2;
    } else {
      throw ParseError(path, "up_axis must be 'x', 'y' or 'z'");
    }
  }
  const json& cameras = require(j, "cameras", path, 0);
  if (!cameras.is_array()) {
    throw ParseError(path, "field 'cameras' must be an array");
  }
  for (const json& cj : cameras) {
    if (!cj.is_object()) {
      throw ParseError(path, "camera entries must be objects");
    }
    CameraModel cam;
    cam.camera_id =
        as_string(require(cj, "camera_id", path, 0), "camera_id", path, 0);
    cam.intrinsics = as_mat3_rows(require(cj, "intrinsics", path, 0),
                                  "intrinsics", path, 0);
    if (auto it = cj.find("rotation"); it != cj.end()) {
      cam.extrinsics.rotation =
          checked_rotation(as_mat3_rows(*it, "rotation", path, 0), path, 0);
    }
    if (auto it = cj.find("translation"); it != cj.end()) {
      cam.extrinsics.translation = as_vec3(*it, "translation", path, 0);
    }
    const json& size = require(cj, "image_size", path, 0);
    if (!size.is_array() || size.size() != 2) {
      throw ParseError(path, "image_size must be [width, height]");
    }
    cam.image_width = static_cast<int>(
        as_integer(size[0], "image_size", path, 0));
    cam.image_height = static_cast<int>(
        as_integer(size[1], "image_size", path, 0));
    try {
      cam.validate();
    } catch (const ConfigError& e) {
      throw ParseError(path, e.what());
    }
    if (rig.find(cam.camera_id) != nullptr) {
      throw ParseError(path, "duplicate camera_id '" + cam.camera_id + "'");
    }
    rig.cameras.push_back(std::move(cam));
  }
  return rig;
}

inline json rig_to_json(const Rig& rig) {
  json j;
  j["up_axis"] = rig.vertical_axis == 0 ? "x"
                 : rig.vertical_axis == 1 ? "y"
                                          : "z";
  j["cameras"] = json::array();
  for (const CameraModel& cam : rig.cameras) {
    json cj;
    cj["camera_id"] = cam.camera_id;
    for (int r = 0; r < 3; ++r) {
      json row = json::array();
      for (int c = 0; c < 3; ++c) row.push_back(cam.intrinsics(r, c));
      cj["intrinsics"].push_back(row);
    }
    for (int r = 0; r < 3; ++r) {
      json row = json::array();
      for (int c = 0; c < 3; ++c) row.push_back(cam.extrinsics.rotation(r, c));
      cj["rotation"].push_back(row);
    }
    cj["translation"] = {cam.extrinsics.translation.x(),
                         cam.extrinsics.translation.y(),
                         cam.extrinsics.translation.z()};
    cj["image_size"] = {cam.image_width, cam.image_height};
    j["cameras"].push_back(cj);
  }
  return j;
}

}  // namespace detail

/// Parses a KITTI-style plain-text calibration file into a single-camera rig
/// (the left color camera). Required keys: P2, R0_rect or R_rect, and
/// Tr_velo_to_cam or Tr_velo_cam. The tracking frame is the rectified
/// reference-camera frame (x right, y down, z forward), the convention KITTI
/// labels and most published detections use, so the camera model's rotation
/// is the identity and its translation comes from P2's fourth column. The
/// rectification and LiDAR-to-camera rotations are still parsed and checked
/// for orthonormality to reject corrupt files.
inline Rig parse_calibration(const std::string& path,
                             int image_width = 1242, int image_height = 375) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");

  std::map<std::string, std::vector<double>> entries;
  std::string text;
  int64_t line = 0;
  std::map<std::string, int64_t> entry_lines;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string key;
    std::string rest;
    const size_t colon = text.find(':');
    if (colon != std::string::npos) {
      key = text.substr(0, colon);
      rest = text.substr(colon + 1);
    } else {
      std::istringstream head(text);
      head >> key;
      std::getline(head, rest);
    }
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) {
      key.pop_back();
    }
    if (key.empty()) throw ParseError(path, line, "missing key");
    std::istringstream values(rest);
    std::vector<double> numbers;
    double v = 0.0;
    while (values >> v) {
      if (!std::isfinite(v)) throw ParseError(path, line, "non-finite value");
      numbers.push_back(v);
    }
    if (!values.eof()) throw ParseError(path, line, "malformed number");
    entries[key] = std::move(numbers);
    entry_lines[key] = line;
  }

  auto fetch = [&](std::initializer_list<const char*> names,
                   size_t count) -> std::pair<const std::vector<double>*, int64_t> {
    for (const char* name : names) {
      auto it = entries.find(name);
      if (it == entries.end()) continue;
      if (it->second.size() != count) {
        throw ParseError(path, entry_lines[name],
                         std::string("key '") + name + "' must have " +
                             std::to_string(count) + " values");
      }
      return {&it->second, entry_lines[name]};
    }
    throw ParseError(path, std::string("missing key '") + *names.begin() + "'");
  };

  const auto [p2, p2_line] = fetch({"P2"}, 12);
  const auto [rect, rect_line] = fetch({"R0_rect", "R_rect"}, 9);
  const auto [tr, tr_line] = fetch({"Tr_velo_to_cam", "Tr_velo_cam"}, 12);

  Eigen::Matrix3d k;
  Eigen::Vector3d p4;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) k(r, c) = (*p2)[r * 4 + c];
    p4[r] = (*p2)[r * 4 + 3];
  }
  if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0) || !(k(2, 2) > 0.0) ||
      std::abs(k(1, 0)) > 1e-9 || std::abs(k(2, 0)) > 1e-9 ||
      std::abs(k(2, 1)) > 1e-9) {
    throw ParseError(path, p2_line,
                     "P2 left 3x3 must be upper-triangular with positive "
                     "diagonal");
  }

  Eigen::Matrix3d rect_m;
  for (int i = 0; i < 9; ++i) rect_m(i / 3, i % 3) = (*rect)[i];
  detail::checked_rotation(rect_m, path, rect_line);

  Eigen::Matrix3d velo_r;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) velo_r(r, c) = (*tr)[r * 4 + c];
  }
  detail::checked_rotation(velo_r, path, tr_line);

  CameraModel cam;
  cam.camera_id = "image_02";
  cam.intrinsics = k;
  cam.extrinsics.rotation = Eigen::Matrix3d::Identity();
  cam.extrinsics.translation = k.inverse() * p4;
  cam.image_width = image_width;
  cam.image_height = image_height;
  try {
    cam.validate();
  } catch (const ConfigError& e) {
    throw ParseError(path, e.what());
  }

  Rig rig;
  rig.vertical_axis = 1;
  rig.cameras.push_back(std::move(cam));
  return rig;
}

/// Loads a rig from either a native JSON rig description or a KITTI-style
/// calibration text file, dispatching on the first non-whitespace byte.
inline Rig parse_rig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  const size_t first = content.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw ParseError(path, "empty file");
  if (content[first] != '{') return parse_calibration(path);

  detail::json j = detail::json::parse(content, nullptr, false);
  if (j.is_discarded()) throw ParseError(path, "invalid JSON");
  if (!j.is_object()) throw ParseError(path, "expected a JSON object");
  return detail::rig_from_json(j, path);
}

inline void write_rig(const Rig& rig, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path, "cannot open file for writing");
  out << detail::rig_to_json(rig).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Frame assembly
// ---------------------------------------------------------------------------

/// Re-expresses 3D detections from the sensor frame in the tracking frame:
/// positions are transformed rigidly, the yaw follows the rotation of the
/// heading direction, dimensions are untouched.
inline std::vector<Detection3D> to_tracking_frame(
    std::vector<Detection3D> dets, const RigidTransform& ego_pose,
    int vertical_axis = kVerticalAxis) {
  for (Detection3D& det : dets) {
    const Eigen::Vector3d position = ego_pose.apply(det.box.position);
    const double yaw = yaw_from_direction(
        ego_pose.rotation * heading_direction(det.box.yaw, vertical_axis),
        vertical_axis);
    det.box = Box3D(position, det.box.dimensions, yaw);
  }
  return dets;
}

/// Clamps a 2D detection box to its camera's image bounds; boxes that end up
/// with no extent are dropped.
inline std::optional<BoxImage> clamp_to_image(const BoxImage& box,
                                              const CameraModel& cam) {
  const double left = std::max(box.left, 0.0);
  const double top = std::max(box.top, 0.0);
  const double right =
      std::min(box.right, static_cast<double>(cam.image_width));
  const double bottom =
      std::min(box.bottom, static_cast<double>(cam.image_height));
  if (!(left < right) || !(top < bottom)) return std::nullopt;
  return BoxImage(box.camera_id, left, top, right, bottom);
}

/// Assembles per-sequence frame inputs from parsed detections and poses.
/// The frame range is filled contiguously from the smallest to the largest
/// frame index seen in any input, so frames with no detections still age the
/// tracks. Unknown cameras raise ParseError (with `source` as the path shown
/// in the message); 2D boxes are clamped to their camera's image and dropped
/// when nothing remains. Missing poses default to the identity.
inline std::map<std::string, std::vector<FrameInput>> build_frame_inputs(
    const DetectionMap& detections, const PoseMap& poses, const Rig& rig,
    const std::string& source) {
  std::map<std::string, std::pair<int64_t, int64_t>> spans;
  auto widen = [&spans](const std::string& seq, int64_t frame) {
    auto [it, fresh] = spans.emplace(seq, std::make_pair(frame, frame));
    if (!fresh) {
      it->second.first = std::min(it->second.first, frame);
      it->second.second = std::max(it->second.second, frame);
    }
  };
  for (const auto& [seq, frames] : detections) {
    for (const auto& [frame, dets] : frames) widen(seq, frame);
  }
  for (const auto& [seq, frames] : poses) {
    for (const auto& [frame, pose] : frames) widen(seq, frame);
  }

  std::map<std::string, std::vector<FrameInput>> out;
  for (const auto& [seq, span] : spans) {
    std::vector<FrameInput>& inputs = out[seq];
    inputs.reserve(span.second - span.first + 1);
    const auto det_seq = detections.find(seq);
    const auto pose_seq = poses.find(seq);
    for (int64_t frame = span.first; frame <= span.second; ++frame) {
      FrameInput input;
      input.frame_index = frame;
      if (pose_seq != poses.end()) {
        auto it = pose_seq->second.find(frame);
        if (it != pose_seq->second.end()) input.ego_pose = it->second;
      }
      if (det_seq != detections.end()) {
        auto it = det_seq->second.find(frame);
        if (it != det_seq->second.end()) {
          input.dets3d = it->second.dets3d;
          for (const auto& [camera_id, list] : it->second.dets2d) {
            const CameraModel* cam = rig.find(camera_id);
            if (cam == nullptr) {
              throw ParseError(source, "unknown camera '" + camera_id +
                                           "' in seq '" + seq + "' frame " +
                                           std::to_string(frame));
            }
            std::vector<Detection2D>& target =
                input.dets2d_by_camera[camera_id];
            for (const Detection2D& det : list) {
              const std::optional<BoxImage> clamped =
                  clamp_to_image(det.box, *cam);
              if (!clamped) continue;
              Detection2D kept = det;
              kept.box = *clamped;
              target.push_back(std::move(kept));
            }
            if (target.empty()) input.dets2d_by_camera.erase(camera_id);
          }
        }
      }
      inputs.push_back(std::move(input));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detection and pose writers
// ---------------------------------------------------------------------------

/// Writes the 3D detections of assembled frames in the JSON-lines schema
/// parse_detections reads.
inline void write_detections_3d(const std::string& seq,
                                const std::vector<FrameInput>& frames,
                                std::ostream& out) {
  for (const FrameInput& frame : frames) {
    for (const Detection3D& det : frame.dets3d) {
      detail::json j;
      j["seq"] = seq;
      j["frame"] = frame.frame_index;
      j["type"] = "3d";
      j["class"] = class_name(det.class_id);
      j["xyz"] = {det.box.position.x(), det.box.position.y(),
                  det.box.position.z()};
      j["hwl"] = {det.box.dimensions[0], det.box.dimensions[1],
                  det.box.dimensions[2]};
      j["yaw"] = det.box.yaw;
      j["score"] = det.score;
      out << j.dump() << "\n";
    }
  }
}

/// Writes the 2D detections of assembled frames in the JSON-lines schema
/// parse_detections reads.
inline void write_detections_2d(const std::string& seq,
                                const std::vector<FrameInput>& frames,
                                std::ostream& out) {
  for (const FrameInput& frame : frames) {
    for (const auto& [camera_id, dets] : frame.dets2d_by_camera) {
      for (const Detection2D& det : dets) {
        detail::json j;
        j["seq"] = seq;
        j["frame"] = frame.frame_index;
        j["type"] = "2d";
        j["class"] = class_name(det.class_id);
        j["camera"] = camera_id;
        j["ltrb"] = {det.box.left, det.box.top, det.box.right,
                     det.box.bottom};
        j["score"] = det.score;
        if (det.mask_payload) j["mask"] = *det.mask_payload;
        out << j.dump() << "\n";
      }
    }
  }
}

/// Writes one pose line per frame in the schema parse_poses reads.
inline void write_poses(const std::string& seq,
                        const std::vector<FrameInput>& frames,
                        std::ostream& out) {
  for (const FrameInput& frame : frames) {
    detail::json j;
    j["seq"] = seq;
    j["frame"] = frame.frame_index;
    detail::json rotation = detail::json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        rotation.push_back(frame.ego_pose.rotation(r, c));
      }
    }
    j["rotation"] = rotation;
    j["translation"] = {frame.ego_pose.translation.x(),
                        frame.ego_pose.translation.y(),
                        frame.ego_pose.translation.z()};
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Result files
// ---------------------------------------------------------------------------

namespace detail {

inline json record_to_json(const std::string& seq, int64_t frame,
                           const OutputRecord& rec) {
  json j;
  j["seq"] = seq;
  j["frame"] = frame;
  j["track"] = rec.track_id;
  j["class"] = class_name(rec.class_id);
  j["score"] = rec.score;
  j["confirmed"] = rec.confirmed;
  if (rec.box3d) {
    json b;
    b["xyz"] = {rec.box3d->position.x(), rec.box3d->position.y(),
                rec.box3d->position.z()};
    b["hwl"] = {rec.box3d->dimensions[0], rec.box3d->dimensions[1],
                rec.box3d->dimensions[2]};
    b["yaw"] = rec.box3d->yaw;
    j["box3d"] = b;
  } else {
    j["box3d"] = nullptr;
  }
  j["boxes2d"] = json::array();
  for (const BoxImage& b : rec.boxes2d) {
    json bj;
    bj["camera"] = b.camera_id;
    bj["ltrb"] = {b.left, b.top, b.right, b.bottom};
    j["boxes2d"].push_back(bj);
  }
  if (rec.mask_payload) j["mask"] = *rec.mask_payload;
  return j;
}

}  // namespace detail

/// Writes tracker (or ground-truth) output as one JSON object per line.
/// Doubles are serialized with shortest round-trip precision, so reading the
/// file back reproduces the records exactly.
inline void write_json(const std::string& seq,
                       const std::vector<FrameOutput>& outputs,
                       std::ostream& out) {
  for (const FrameOutput& frame : outputs) {
    for (const OutputRecord& rec : frame.records) {
      out << detail::record_to_json(seq, frame.frame_index, rec).dump()
          << "\n";
    }
  }
}

inline void write_json(const std::string& seq,
                       const std::vector<FrameOutput>& outputs,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path, "cannot open file for writing");
  write_json(seq, outputs, out);
}

/// Reads result files written by write_json (used for both ground truth and
/// hypotheses). Frames are grouped per sequence in ascending frame order;
/// records keep file order within a frame.
inline ResultMap parse_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");

  std::map<std::string, std::map<int64_t, std::vector<OutputRecord>>> grouped;
  std::string text;
  int64_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const detail::json j = detail::parse_json_line(text, path, line);

    std::string seq = "0";
    if (auto it = j.find("seq"); it != j.end()) {
      seq = detail::as_string(*it, "seq", path, line);
    }
    const int64_t frame =
        detail::as_integer(detail::require(j, "frame", path, line), "frame",
                           path, line);
    if (frame < 0) throw ParseError(path, line, "frame must be >= 0");

    OutputRecord rec;
    rec.track_id =
        detail::as_integer(detail::require(j, "track", path, line), "track",
                           path, line);
    rec.class_id =
        detail::as_class(detail::require(j, "class", path, line), path, line);
    rec.score =
        detail::as_score(detail::require(j, "score", path, line), path, line);
    const detail::json& confirmed = detail::require(j, "confirmed", path, line);
    if (!confirmed.is_boolean()) {
      throw ParseError(path, line, "field 'confirmed' must be a boolean");
    }
    rec.confirmed = confirmed.get<bool>();

    const detail::json& box3d = detail::require(j, "box3d", path, line);
    if (!box3d.is_null()) {
      if (!box3d.is_object()) {
        throw ParseError(path, line, "field 'box3d' must be an object or null");
      }
      const Eigen::Vector3d xyz =
          detail::as_vec3(detail::require(box3d, "xyz", path, line), "xyz",
                          path, line);
      const Eigen::Vector3d hwl =
          detail::as_vec3(detail::require(box3d, "hwl", path, line), "hwl",
                          path, line);
      if (!(hwl.minCoeff() > 0.0)) {
        throw ParseError(path, line, "hwl entries must be positive");
      }
      const double yaw =
          detail::as_finite(detail::require(box3d, "yaw", path, line), "yaw",
                            path, line);
      rec.box3d = Box3D(xyz, hwl, yaw);
    }

    const detail::json& boxes2d = detail::require(j, "boxes2d", path, line);
    if (!boxes2d.is_array()) {
      throw ParseError(path, line, "field 'boxes2d' must be an array");
    }
    for (const detail::json& bj : boxes2d) {
      if (!bj.is_object()) {
        throw ParseError(path, line, "boxes2d entries must be objects");
      }
      const std::string camera =
          detail::as_string(detail::require(bj, "camera", path, line),
                            "camera", path, line);
      const std::array<double, 4> ltrb =
          detail::as_arr4(detail::require(bj, "ltrb", path, line), "ltrb",
                          path, line);
      if (!(ltrb[0] < ltrb[2]) || !(ltrb[1] < ltrb[3])) {
        throw ParseError(path, line,
                         "ltrb must satisfy left < right and top < bottom");
      }
      rec.boxes2d.emplace_back(camera, ltrb[0], ltrb[1], ltrb[2], ltrb[3]);
    }
    if (auto it = j.find("mask"); it != j.end()) {
      rec.mask_payload = detail::as_string(*it, "mask", path, line);
    }
    grouped[seq][frame].push_back(std::move(rec));
  }

  ResultMap out;
  for (auto& [seq, frames] : grouped) {
    std::vector<FrameOutput>& list = out[seq];
    for (auto& [frame, records] : frames) {
      FrameOutput fo;
      fo.frame_index = frame;
      fo.records = std::move(records);
      list.push_back(std::move(fo));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// KITTI tracking output
// ---------------------------------------------------------------------------

namespace detail {

inline std::string kitti_type(ClassId id) {
  switch (id) {
    case ClassId::kCar:        return "Car";
    case ClassId::kPedestrian: return "Pedestrian";
    case ClassId::kBicycle:    return "Cyclist";
    case ClassId::kBus:        return "Bus";
    case ClassId::kMotorcycle: return "Motorcycle";
    case ClassId::kTrailer:    return "Trailer";
    case ClassId::kTruck:      return "Truck";
  }
  throw std::invalid_argument("unknown class id");
}

}  // namespace detail

/// Writes tracker output as KITTI tracking rows, 17 space-separated fields:
/// frame track_id type truncated occluded alpha left top right bottom
/// h w l x y z rotation_y. Only records with a 3D box produce rows (the
/// format has no 3D-less representation); truncation and occlusion are not
/// estimated and written as 0. The observation angle alpha is derived from
/// rotation_y and the viewing direction as alpha = rotation_y - atan2(x, z),
/// wrapped to (-pi, pi]. Records without a 2D box write zeros for the image
/// box.
inline void write_kitti(const std::vector<FrameOutput>& outputs,
                        std::ostream& out) {
  for (const FrameOutput& frame : outputs) {
    for (const OutputRecord& rec : frame.records) {
      if (!rec.box3d) continue;
      const Box3D& box = *rec.box3d;
      double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;
      if (!rec.boxes2d.empty()) {
        left = rec.boxes2d[0].left;
        top = rec.boxes2d[0].top;
        right = rec.boxes2d[0].right;
        bottom = rec.boxes2d[0].bottom;
      }
      const double alpha = wrap_angle(
          box.yaw - std::atan2(box.position.x(), box.position.z()));
      char row[512];
      std::snprintf(row, sizeof(row),
                    "%lld %lld %s 0 0 %.6f %.6f %.6f %.6f %.6f %.6f %.6f "
                    "%.6f %.6f %.6f %.6f %.6f",
                    static_cast<long long>(frame.frame_index),
                    static_cast<long long>(rec.track_id),
                    detail::kitti_type(rec.class_id).c_str(), alpha, left,
                    top, right, bottom, box.dimensions[0], box.dimensions[1],
                    box.dimensions[2], box.position.x(), box.position.y(),
                    box.position.z(), box.yaw);
      out << row << "\n";
    }
  }
}

inline void write_kitti(const std::vector<FrameOutput>& outputs,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path, "cannot open file for writing");
  write_kitti(outputs, out);
}

}  // namespace fusemot
