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
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fusemot/core.hpp"
#include "fusemot/dataio.hpp"
#include "fusemot/fusion.hpp"
#include "fusemot/geometry.hpp"

namespace fusemot {

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// One simulated object on a constant-velocity trajectory. `start` is its
/// center at the spawn frame; at frame f it sits at
/// start + (f - spawn) * velocity. A missing yaw means "face the velocity".
struct ScenarioObject {
  int64_t track_id = 0;
  ClassId class_id = ClassId::kCar;
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d dimensions = Eigen::Vector3d::Ones();  // (h, w, l)
  std::optional<double> yaw;
  int64_t spawn = 0;
  int64_t despawn = -1;  // exclusive; -1 = end of scenario
};

/// Synthetic world: a rig, ground-truth trajectories, and a detector model
/// (dropout, noise, false positives, 3D sensing range). A fixed seed pins
/// every random draw.
struct Scenario {
  uint64_t seed = 0;
  int64_t frames = 0;
  double sensing_range = 100.0;
  double p_drop3d = 0.0;
  double p_drop2d = 0.0;
  double noise_position = 0.0;
  double noise_yaw = 0.0;
  double false_positive_rate = 0.0;
  Rig rig;
  std::vector<ScenarioObject> objects;

  /// Largest per-frame center step allowed, keeping trajectories continuous.
  static constexpr double kMaxStep = 10.0;

  void validate() const {
    if (frames < 1) throw ConfigError("scenario: frames must be >= 1");
    if (!(sensing_range > 0.0) || !std::isfinite(sensing_range)) {
      throw ConfigError("scenario: sensing_range must be > 0");
    }
    for (double p : {p_drop3d, p_drop2d}) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError("scenario: dropout probabilities must be in [0, 1]");
      }
    }
    if (!(noise_position >= 0.0) || !(noise_yaw >= 0.0) ||
        !(false_positive_rate >= 0.0)) {
      throw ConfigError("scenario: noise and false_positive_rate must be >= 0");
    }
    std::map<int64_t, int> seen;
    for (const ScenarioObject& obj : objects) {
      if (++seen[obj.track_id] > 1) {
        throw ConfigError("scenario: duplicate object id " +
                          std::to_string(obj.track_id));
      }
      if (!(obj.dimensions.minCoeff() > 0.0)) {
        throw ConfigError("scenario: object dimensions must be positive");
      }
      if (obj.velocity.norm() > kMaxStep) {
        throw ConfigError("scenario: per-frame step exceeds " +
                          std::to_string(kMaxStep) + " m");
      }
      const int64_t despawn = obj.despawn < 0 ? frames : obj.despawn;
      if (obj.spawn < 0 || obj.spawn >= despawn || despawn > frames) {
        throw ConfigError("scenario: object " + std::to_string(obj.track_id) +
                          " has an invalid spawn/despawn window");
      }
    }
  }
};

inline Scenario scenario_from_json(const nlohmann::json& j,
                                   const std::string& path) {
  using detail::as_finite;
  using detail::as_integer;
  using detail::as_vec3;
  using detail::require;
  if (!j.is_object()) throw ParseError(path, "expected a JSON object");

  Scenario sc;
  if (auto it = j.find("seed"); it != j.end()) {
    const int64_t seed = as_integer(*it, "seed", path, 0);
    if (seed < 0) throw ParseError(path, "seed must be >= 0");
    sc.seed = static_cast<uint64_t>(seed);
  }
  sc.frames = as_integer(require(j, "frames", path, 0), "frames", path, 0);
  if (auto it = j.find("sensing_range"); it != j.end()) {
    sc.sensing_range = as_finite(*it, "sensing_range", path, 0);
  }
  if (auto it = j.find("p_drop3d"); it != j.end()) {
    sc.p_drop3d = as_finite(*it, "p_drop3d", path, 0);
  }
  if (auto it = j.find("p_drop2d"); it != j.end()) {
    sc.p_drop2d = as_finite(*it, "p_drop2d", path, 0);
  }
  if (auto it = j.find("noise_position"); it != j.end()) {
    sc.noise_position = as_finite(*it, "noise_position", path, 0);
  }
  if (auto it = j.find("noise_yaw"); it != j.end()) {
    sc.noise_yaw = as_finite(*it, "noise_yaw", path, 0);
  }
  if (auto it = j.find("false_positive_rate"); it != j.end()) {
    sc.false_positive_rate = as_finite(*it, "false_positive_rate", path, 0);
  }
  sc.rig = detail::rig_from_json(require(j, "rig", path, 0), path);

  const nlohmann::json& objects = require(j, "objects", path, 0);
  if (!objects.is_array()) {
    throw ParseError(path, "field 'objects' must be an array");
  }
  for (const nlohmann::json& oj : objects) {
    if (!oj.is_object()) throw ParseError(path, "objects entries must be objects");
    ScenarioObject obj;
    obj.track_id = as_integer(require(oj, "id", path, 0), "id", path, 0);
    const std::string cls =
        detail::as_string(require(oj, "class", path, 0), "class", path, 0);
    const std::optional<ClassId> id = class_from_name(cls);
    if (!id) throw ParseError(path, "unknown class '" + cls + "'");
    obj.class_id = *id;
    obj.start = as_vec3(require(oj, "start", path, 0), "start", path, 0);
    obj.velocity =
        as_vec3(require(oj, "velocity", path, 0), "velocity", path, 0);
    obj.dimensions =
        as_vec3(require(oj, "dimensions", path, 0), "dimensions", path, 0);
    if (auto it = oj.find("yaw"); it != oj.end()) {
      obj.yaw = as_finite(*it, "yaw", path, 0);
    }
    if (auto it = oj.find("spawn"); it != oj.end()) {
      obj.spawn = as_integer(*it, "spawn", path, 0);
    }
    if (auto it = oj.find("despawn"); it != oj.end()) {
      obj.despawn = as_integer(*it, "despawn", path, 0);
    }
    sc.objects.push_back(std::move(obj));
  }
  try {
    sc.validate();
  } catch (const ConfigError& e) {
    throw ParseError(path, e.what());
  }
  return sc;
}

inline Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError(path, "invalid JSON");
  return scenario_from_json(j, path);
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GeneratedData {
  std::vector<FrameInput> frames;
  std::vector<FrameOutput> ground_truth;
};

/// Rolls a scenario forward. Per frame, objects are visited in declaration
/// order: a ground-truth record is always emitted; a 3D detection is emitted
/// when the object's center is within sensing range (Euclidean distance from
/// the origin) and survives the dropout draw, perturbed by the configured
/// noise; each camera that sees the box yields a 2D detection subject to its
/// own dropout draw. False positives (3D only) are appended last. Detection
/// scores are fixed constants (0.9 for true 3D, 0.8 for 2D, 0.5 for false
/// positives), so files generated from the same seed are byte-identical.
inline GeneratedData generate(const Scenario& scenario) {
  scenario.validate();
  std::mt19937_64 rng(scenario.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GeneratedData out;
  out.frames.reserve(scenario.frames);
  out.ground_truth.reserve(scenario.frames);
  const int vertical = scenario.rig.vertical_axis;

  for (int64_t f = 0; f < scenario.frames; ++f) {
    FrameInput input;
    input.frame_index = f;
    FrameOutput gt;
    gt.frame_index = f;

    for (const ScenarioObject& obj : scenario.objects) {
      const int64_t despawn = obj.despawn < 0 ? scenario.frames : obj.despawn;
      if (f < obj.spawn || f >= despawn) continue;

      const Eigen::Vector3d center =
          obj.start + static_cast<double>(f - obj.spawn) * obj.velocity;
      double yaw = 0.0;
      if (obj.yaw) {
        yaw = *obj.yaw;
      } else {
        auto [ga, gb] = ground_axes(vertical);
        if (std::hypot(obj.velocity[ga], obj.velocity[gb]) > 1e-9) {
          yaw = yaw_from_direction(obj.velocity, vertical);
        }
      }
      const Box3D box(center, obj.dimensions, yaw);

      OutputRecord rec;
      rec.track_id = obj.track_id;
      rec.class_id = obj.class_id;
      rec.box3d = box;
      rec.score = 1.0;
      rec.confirmed = true;
      for (const CameraModel& cam : scenario.rig.cameras) {
        const std::optional<BoxImage> projected =
            project_box(box, cam, vertical);
        if (projected) rec.boxes2d.push_back(*projected);
      }
      gt.records.push_back(rec);

      if (center.norm() <= scenario.sensing_range) {
        const bool dropped =
            scenario.p_drop3d > 0.0 && unit(rng) < scenario.p_drop3d;
        if (!dropped) {
          Eigen::Vector3d det_center = center;
          double det_yaw = yaw;
          if (scenario.noise_position > 0.0) {
            std::normal_distribution<double> noise(0.0,
                                                   scenario.noise_position);
            for (int i = 0; i < 3; ++i) det_center[i] += noise(rng);
          }
          if (scenario.noise_yaw > 0.0) {
            std::normal_distribution<double> noise(0.0, scenario.noise_yaw);
            det_yaw += noise(rng);
          }
          Detection3D det;
          det.box = Box3D(det_center, obj.dimensions, det_yaw);
          det.score = 0.9;
          det.class_id = obj.class_id;
          det.frame_index = f;
          input.dets3d.push_back(std::move(det));
        }
      }

      for (const CameraModel& cam : scenario.rig.cameras) {
        const std::optional<BoxImage> projected =
            project_box(box, cam, vertical);
        if (!projected) continue;
        const bool dropped =
            scenario.p_drop2d > 0.0 && unit(rng) < scenario.p_drop2d;
        if (dropped) continue;
        Detection2D det;
        det.box = *projected;
        det.score = 0.8;
        det.class_id = obj.class_id;
        det.frame_index = f;
        input.dets2d_by_camera[cam.camera_id].push_back(std::move(det));
      }
    }

    if (scenario.false_positive_rate > 0.0) {
      std::poisson_distribution<int> count(scenario.false_positive_rate);
      const int n = count(rng);
      auto [ga, gb] = ground_axes(vertical);
      for (int i = 0; i < n; ++i) {
        const double radius = scenario.sensing_range * std::sqrt(unit(rng));
        const double angle = 2.0 * std::numbers::pi * unit(rng);
        Eigen::Vector3d center = Eigen::Vector3d::Zero();
        center[ga] = radius * std::cos(angle);
        center[gb] = radius * std::sin(angle);
        center[vertical] = 0.75;
        const double yaw =
            wrap_angle(2.0 * std::numbers::pi * unit(rng) - std::numbers::pi);
        Detection3D det;
        det.box = Box3D(center, Eigen::Vector3d(1.5, 1.7, 4.0), yaw);
        det.score = 0.5;
        det.class_id = ClassId::kCar;
        det.frame_index = f;
        input.dets3d.push_back(std::move(det));
      }
    }

    out.frames.push_back(std::move(input));
    out.ground_truth.push_back(std::move(gt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CLEAR-MOT evaluation
// ---------------------------------------------------------------------------

enum class MatchCriterion {
  kIou2d,   // image IoU >= threshold (default 0.5), best camera
  kDist3d,  // ground-plane center distance <= threshold (default 2 m)
};

struct MotMetrics {
  double mota = 1.0;
  double recall = 1.0;
  double precision = 1.0;
  int64_t id_switches = 0;
  int64_t false_positives = 0;
  int64_t misses = 0;
  int64_t true_positives = 0;
  int64_t gt_count = 0;
};

namespace detail {

/// Recomputes the derived ratios from the counts. With no ground truth the
/// denominator is taken as 1, so MOTA stays finite and the <= 1 bound holds.
inline void finalize_metrics(MotMetrics& m) {
  const double gt = static_cast<double>(std::max<int64_t>(m.gt_count, 1));
  m.mota = 1.0 - static_cast<double>(m.false_positives + m.misses +
                                     m.id_switches) /
                     gt;
  m.recall = m.gt_count > 0
                 ? static_cast<double>(m.true_positives) / m.gt_count
                 : 1.0;
  const int64_t reported = m.true_positives + m.false_positives;
  m.precision = reported > 0
                    ? static_cast<double>(m.true_positives) / reported
                    : 1.0;
}

/// The box a record exposes in one camera for 2D matching: the stored image
/// box when present, otherwise the projection of its 3D box (static rig).
inline std::optional<BoxImage> record_box_in_camera(const OutputRecord& rec,
                                                    const CameraModel& cam,
                                                    int vertical_axis) {
  for (const BoxImage& box : rec.boxes2d) {
    if (box.camera_id == cam.camera_id) return box;
  }
  if (rec.box3d) return project_box(*rec.box3d, cam, vertical_axis);
  return std::nullopt;
}

}  // namespace detail

namespace detail {

/// A record prepared for matching under one criterion. For the 2D criterion
/// `boxes` holds one box per camera that can see the record (stored boxes
/// first, projected 3D boxes as the fallback when a rig is given).
struct EvalEntry {
  int64_t id = 0;
  const OutputRecord* rec = nullptr;
  std::vector<BoxImage> boxes;
};

inline std::vector<EvalEntry> eval_entries(const FrameOutput& frame,
                                           MatchCriterion criterion,
                                           const Rig* rig, int vertical_axis,
                                           const char* side) {
  std::map<int64_t, char> seen;
  std::vector<EvalEntry> out;
  for (const OutputRecord& rec : frame.records) {
    if (!seen.emplace(rec.track_id, 1).second) {
      throw ConfigError(std::string(side) + " frame " +
                        std::to_string(frame.frame_index) + " repeats track " +
                        std::to_string(rec.track_id));
    }
    EvalEntry entry;
    entry.id = rec.track_id;
    entry.rec = &rec;
    if (criterion == MatchCriterion::kDist3d) {
      if (!rec.box3d) continue;  // nothing to score under this criterion
    } else if (rig == nullptr) {
      entry.boxes = rec.boxes2d;
      if (entry.boxes.empty()) continue;
    } else {
      for (const CameraModel& cam : rig->cameras) {
        const std::optional<BoxImage> box =
            record_box_in_camera(rec, cam, vertical_axis);
        if (box) entry.boxes.push_back(*box);
      }
      if (entry.boxes.empty()) continue;
    }
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace detail

/// Accumulates FP/FN/IDSW counts over one aligned sequence, CLEAR-MOT style:
/// previous-frame correspondences that still satisfy the criterion carry
/// over, the remainder is matched greedily by best criterion value, and an
/// identity switch is counted whenever a ground-truth object's matched
/// hypothesis differs from its last known match. The 2D criterion compares
/// records camera by camera, taking the best IoU; records without a stored
/// image box fall back to projecting their 3D box through `rig` (required
/// for the 2D criterion when hypotheses carry bare 3D boxes). Records that
/// expose no geometry under the active criterion (no 3D box under the
/// distance criterion; visible in no camera under the IoU criterion) are
/// invisible to it and excluded from every count, so evaluating a ground
/// truth against itself is perfect for any scenario. Hypothesis frames
/// outside the ground-truth frame set are a frame-count mismatch and raise
/// ConfigError; ground-truth frames missing from the hypotheses count as
/// misses.
inline MotMetrics evaluate_sequence(const std::vector<FrameOutput>& gt,
                                    const std::vector<FrameOutput>& hypotheses,
                                    MatchCriterion criterion,
                                    const Rig* rig = nullptr,
                                    double iou_threshold = 0.5,
                                    double distance_threshold = 2.0) {
  const int vertical = rig ? rig->vertical_axis : kVerticalAxis;

  std::map<int64_t, const FrameOutput*> gt_frames;
  for (const FrameOutput& f : gt) {
    if (!gt_frames.emplace(f.frame_index, &f).second) {
      throw ConfigError("ground truth repeats frame " +
                        std::to_string(f.frame_index));
    }
  }
  std::map<int64_t, const FrameOutput*> hyp_frames;
  for (const FrameOutput& f : hypotheses) {
    if (!gt_frames.count(f.frame_index)) {
      throw ConfigError(
          "frame-count mismatch: hypothesis frame " +
          std::to_string(f.frame_index) + " has no ground-truth frame");
    }
    if (!hyp_frames.emplace(f.frame_index, &f).second) {
      throw ConfigError("hypotheses repeat frame " +
                        std::to_string(f.frame_index));
    }
  }

  // Pair value under the criterion; nullopt = cannot match.
  auto pair_value = [&](const detail::EvalEntry& g,
                        const detail::EvalEntry& h) -> std::optional<double> {
    if (criterion == MatchCriterion::kDist3d) {
      const double d =
          planar_distance(*g.rec->box3d, *h.rec->box3d, vertical);
      if (d > distance_threshold) return std::nullopt;
      return d;
    }
    double best = -1.0;
    for (const BoxImage& gb : g.boxes) {
      for (const BoxImage& hb : h.boxes) {
        best = std::max(best, iou_2d(gb, hb));
      }
    }
    if (best < iou_threshold) return std::nullopt;
    return best;
  };
  const bool higher_is_better = criterion == MatchCriterion::kIou2d;

  MotMetrics metrics;
  std::map<int64_t, int64_t> carry;     // previous frame's gt -> hyp
  std::map<int64_t, int64_t> last_hyp;  // persistent gt -> last matched hyp

  for (const auto& [frame_index, gt_frame] : gt_frames) {
    const auto hyp_it = hyp_frames.find(frame_index);
    static const FrameOutput kEmpty;
    const FrameOutput& hyp_frame =
        hyp_it == hyp_frames.end() ? kEmpty : *hyp_it->second;

    const std::vector<detail::EvalEntry> gt_entries = detail::eval_entries(
        *gt_frame, criterion, rig, vertical, "ground truth");
    const std::vector<detail::EvalEntry> hyp_entries = detail::eval_entries(
        hyp_frame, criterion, rig, vertical, "hypothesis");
    std::map<int64_t, const detail::EvalEntry*> gt_by_id;
    for (const detail::EvalEntry& e : gt_entries) gt_by_id.emplace(e.id, &e);
    std::map<int64_t, const detail::EvalEntry*> hyp_by_id;
    for (const detail::EvalEntry& e : hyp_entries) hyp_by_id.emplace(e.id, &e);

    std::map<int64_t, int64_t> matches;
    std::map<int64_t, char> hyp_used;

    // Carry over correspondences that still hold.
    for (const auto& [gt_id, hyp_id] : carry) {
      const auto g = gt_by_id.find(gt_id);
      const auto h = hyp_by_id.find(hyp_id);
      if (g == gt_by_id.end() || h == hyp_by_id.end()) continue;
      if (!pair_value(*g->second, *h->second)) continue;
      matches.emplace(gt_id, hyp_id);
      hyp_used.emplace(hyp_id, 1);
    }

    // Greedy best-first matching for the remainder.
    struct Pair {
      double value;
      int64_t gt_id;
      int64_t hyp_id;
    };
    std::vector<Pair> candidates;
    for (const detail::EvalEntry& g : gt_entries) {
      if (matches.count(g.id)) continue;
      for (const detail::EvalEntry& h : hyp_entries) {
        if (hyp_used.count(h.id)) continue;
        const std::optional<double> value = pair_value(g, h);
        if (value) candidates.push_back({*value, g.id, h.id});
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [higher_is_better](const Pair& a, const Pair& b) {
                if (a.value != b.value) {
                  return higher_is_better ? a.value > b.value
                                          : a.value < b.value;
                }
                if (a.gt_id != b.gt_id) return a.gt_id < b.gt_id;
                return a.hyp_id < b.hyp_id;
              });
    for (const Pair& p : candidates) {
      if (matches.count(p.gt_id) || hyp_used.count(p.hyp_id)) continue;
      matches.emplace(p.gt_id, p.hyp_id);
      hyp_used.emplace(p.hyp_id, 1);
    }

    for (const auto& [gt_id, hyp_id] : matches) {
      const auto it = last_hyp.find(gt_id);
      if (it != last_hyp.end() && it->second != hyp_id) {
        ++metrics.id_switches;
      }
      last_hyp[gt_id] = hyp_id;
    }
    metrics.gt_count += static_cast<int64_t>(gt_entries.size());
    metrics.true_positives += static_cast<int64_t>(matches.size());
    metrics.misses +=
        static_cast<int64_t>(gt_entries.size() - matches.size());
    metrics.false_positives +=
        static_cast<int64_t>(hyp_entries.size() - matches.size());
    carry = std::move(matches);
  }

  detail::finalize_metrics(metrics);
  return metrics;
}

/// Sums the counts of two evaluations and recomputes the ratios.
inline MotMetrics merge_metrics(const MotMetrics& a, const MotMetrics& b) {
  MotMetrics out;
  out.id_switches = a.id_switches + b.id_switches;
  out.false_positives = a.false_positives + b.false_positives;
  out.misses = a.misses + b.misses;
  out.true_positives = a.true_positives + b.true_positives;
  out.gt_count = a.gt_count + b.gt_count;
  detail::finalize_metrics(out);
  return out;
}

/// Evaluates every ground-truth sequence; hypothesis sequences unknown to
/// the ground truth are a mismatch error, missing ones count as all-miss.
inline std::map<std::string, MotMetrics> evaluate_all(
    const ResultMap& gt, const ResultMap& hypotheses, MatchCriterion criterion,
    const Rig* rig = nullptr, double iou_threshold = 0.5,
    double distance_threshold = 2.0) {
  for (const auto& [seq, frames] : hypotheses) {
    if (!gt.count(seq)) {
      throw ConfigError("hypothesis sequence '" + seq +
                        "' has no ground truth");
    }
  }
  static const std::vector<FrameOutput> kEmpty;
  std::map<std::string, MotMetrics> out;
  for (const auto& [seq, gt_frames] : gt) {
    const auto it = hypotheses.find(seq);
    const std::vector<FrameOutput>& hyp_frames =
        it == hypotheses.end() ? kEmpty : it->second;
    out.emplace(seq, evaluate_sequence(gt_frames, hyp_frames, criterion, rig,
                                       iou_threshold, distance_threshold));
  }
  return out;
}

}  // namespace fusemot
