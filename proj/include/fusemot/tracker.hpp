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
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fusemot/association.hpp"
#include "fusemot/core.hpp"
#include "fusemot/dataio.hpp"
#include "fusemot/fusion.hpp"
#include "fusemot/geometry.hpp"
#include "fusemot/motion.hpp"

namespace fusemot {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Per-class association knobs and lifecycle ages.
struct ClassConfig {
  double fusion_min_overlap = 0.01;  // image IoU gate for pairing 3D with 2D
  double stage1_threshold = 0.01;    // first-stage gate (sense depends on metric)
  double stage2_min_iou = 0.3;       // image IoU gate for the second stage
  int max_age = 3;                   // frames without any update before removal
  int confirm_2d_age = 3;            // max frames since a 2D update to confirm
};

/// Full tracker configuration. The built-in defaults are the published
/// KITTI-tuned constants; per-class overrides cover setups (like NuScenes)
/// that tune each class separately.
struct TrackerConfig {
  AssociationMetric stage1_metric = AssociationMetric::kScaledDistance;
  NoiseConfig noise;
  std::string reporting_camera;  // empty = first camera in the rig
  bool use_2d = true;            // false = ignore 2D detections entirely
  std::array<ClassConfig, kClassCount> classes{};

  const ClassConfig& for_class(ClassId id) const {
    return classes[static_cast<size_t>(id)];
  }

  void validate() const {
    for (ClassId id : kAllClasses) {
      const ClassConfig& c = for_class(id);
      const std::string name = class_name(id);
      if (!(c.fusion_min_overlap >= 0.0) ||
          !std::isfinite(c.fusion_min_overlap)) {
        throw ConfigError(name + ": fusion_min_overlap must be >= 0");
      }
      if (!(c.stage1_threshold >= 0.0) || !std::isfinite(c.stage1_threshold)) {
        throw ConfigError(name + ": stage1_threshold must be >= 0");
      }
      if (!(c.stage2_min_iou >= 0.0) || !std::isfinite(c.stage2_min_iou)) {
        throw ConfigError(name + ": stage2_min_iou must be >= 0");
      }
      if (c.max_age < 1) throw ConfigError(name + ": max_age must be >= 1");
      if (c.confirm_2d_age < 1) {
        throw ConfigError(name + ": confirm_2d_age must be >= 1");
      }
    }
    if (!(noise.p0_observed > 0.0) || !(noise.p0_velocity > 0.0) ||
        !(noise.q_position >= 0.0) || !(noise.q_velocity >= 0.0) ||
        !(noise.r_observation > 0.0)) {
      throw ConfigError(
          "noise: p0_* and r_observation must be > 0, q_* must be >= 0");
    }
  }
};

namespace detail {

inline const char* metric_name(AssociationMetric m) {
  switch (m) {
    case AssociationMetric::kScaledDistance: return "scaled_distance";
    case AssociationMetric::kPlanarDistance: return "planar_distance";
    case AssociationMetric::kIou3d:          return "iou_3d";
  }
  throw std::invalid_argument("unknown association metric");
}

inline AssociationMetric metric_from_name(const std::string& name) {
  if (name == "scaled_distance") return AssociationMetric::kScaledDistance;
  if (name == "planar_distance") return AssociationMetric::kPlanarDistance;
  if (name == "iou_3d") return AssociationMetric::kIou3d;
  throw ConfigError("unknown association metric '" + name +
                    "' (expected scaled_distance, planar_distance or iou_3d)");
}

inline void apply_class_overrides(ClassConfig& c, const json& j,
                                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    auto number = [&]() -> double {
      if (!v.is_number()) {
        throw ConfigError(where + "." + key + " must be a number");
      }
      const double d = v.get<double>();
      if (!std::isfinite(d)) {
        throw ConfigError(where + "." + key + " must be finite");
      }
      return d;
    };
    auto integer = [&]() -> int {
      if (!v.is_number_integer()) {
        throw ConfigError(where + "." + key + " must be an integer");
      }
      return v.get<int>();
    };
    if (key == "fusion_min_overlap") {
      c.fusion_min_overlap = number();
    } else if (key == "stage1_threshold") {
      c.stage1_threshold = number();
    } else if (key == "stage2_min_iou") {
      c.stage2_min_iou = number();
    } else if (key == "max_age") {
      c.max_age = integer();
    } else if (key == "confirm_2d_age") {
      c.confirm_2d_age = integer();
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace detail

/// Applies a JSON configuration document on top of `base`. The document may
/// override any subset of fields:
///   {"stage1_metric": ..., "reporting_camera": ..., "use_2d": ...,
///    "noise": {...}, "all_classes": {...}, "classes": {"car": {...}, ...}}
/// "all_classes" applies to every class before per-class entries.
inline TrackerConfig config_from_json(const nlohmann::json& j,
                                      TrackerConfig base = {}) {
  using nlohmann::json;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "stage1_metric") {
      if (!v.is_string()) throw ConfigError("stage1_metric must be a string");
      base.stage1_metric = detail::metric_from_name(v.get<std::string>());
    } else if (key == "reporting_camera") {
      if (!v.is_string()) throw ConfigError("reporting_camera must be a string");
      base.reporting_camera = v.get<std::string>();
    } else if (key == "use_2d") {
      if (!v.is_boolean()) throw ConfigError("use_2d must be a boolean");
      base.use_2d = v.get<bool>();
    } else if (key == "noise") {
      if (!v.is_object()) throw ConfigError("noise must be an object");
      for (auto nit = v.begin(); nit != v.end(); ++nit) {
        if (!nit.value().is_number()) {
          throw ConfigError("noise." + nit.key() + " must be a number");
        }
        const double d = nit.value().get<double>();
        if (!std::isfinite(d)) {
          throw ConfigError("noise." + nit.key() + " must be finite");
        }
        if (nit.key() == "p0_observed") {
          base.noise.p0_observed = d;
        } else if (nit.key() == "p0_velocity") {
          base.noise.p0_velocity = d;
        } else if (nit.key() == "q_position") {
          base.noise.q_position = d;
        } else if (nit.key() == "q_velocity") {
          base.noise.q_velocity = d;
        } else if (nit.key() == "r_observation") {
          base.noise.r_observation = d;
        } else {
          throw ConfigError("noise: unknown key '" + nit.key() + "'");
        }
      }
    } else if (key == "all_classes") {
      if (!v.is_object()) throw ConfigError("all_classes must be an object");
      for (ClassId id : kAllClasses) {
        detail::apply_class_overrides(base.classes[static_cast<size_t>(id)], v,
                                      "all_classes");
      }
    } else if (key == "classes") {
      if (!v.is_object()) throw ConfigError("classes must be an object");
      for (auto cit = v.begin(); cit != v.end(); ++cit) {
        const std::optional<ClassId> id = class_from_name(cit.key());
        if (!id) throw ConfigError("classes: unknown class '" + cit.key() + "'");
        if (!cit.value().is_object()) {
          throw ConfigError("classes." + cit.key() + " must be an object");
        }
        detail::apply_class_overrides(
            base.classes[static_cast<size_t>(*id)], cit.value(),
            "classes." + cit.key());
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  base.validate();
  return base;
}

inline nlohmann::json config_to_json(const TrackerConfig& cfg) {
  nlohmann::json j;
  j["stage1_metric"] = detail::metric_name(cfg.stage1_metric);
  j["reporting_camera"] = cfg.reporting_camera;
  j["use_2d"] = cfg.use_2d;
  j["noise"] = {{"p0_observed", cfg.noise.p0_observed},
                {"p0_velocity", cfg.noise.p0_velocity},
                {"q_position", cfg.noise.q_position},
                {"q_velocity", cfg.noise.q_velocity},
                {"r_observation", cfg.noise.r_observation}};
  for (ClassId id : kAllClasses) {
    const ClassConfig& c = cfg.for_class(id);
    j["classes"][class_name(id)] = {
        {"fusion_min_overlap", c.fusion_min_overlap},
        {"stage1_threshold", c.stage1_threshold},
        {"stage2_min_iou", c.stage2_min_iou},
        {"max_age", c.max_age},
        {"confirm_2d_age", c.confirm_2d_age}};
  }
  return j;
}

/// Loads a config file on top of the built-in defaults.
inline TrackerConfig load_config(const std::string& path,
                                 TrackerConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError(path, "invalid JSON");
  try {
    return config_from_json(j, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Tracks
// ---------------------------------------------------------------------------

/// Sentinel for "no 2D update has ever happened". Large enough that a track
/// can never confirm off it, small enough to survive per-frame increments.
inline constexpr int kNever2d = std::numeric_limits<int>::max() / 4;

struct Track {
  int64_t track_id = 0;
  ClassId class_id = ClassId::kCar;
  std::optional<FilterState> filter;
  std::optional<BoxImage> last_box2d;
  int64_t last_box2d_frame = -1;
  double score = 0.0;
  int frames_since_any_update = 0;
  int frames_since_2d_update = kNever2d;
  bool matched_this_frame = false;
  bool confirmed = false;
  std::optional<std::string> mask_payload;
};

/// Applies one matched instance to a track. The caller is responsible for
/// having advanced the track's staleness counters for the current frame; this
/// resets them according to what the instance carries. A 3D detection runs
/// the Kalman update (or starts the filter on a track born from 2D only) and
/// takes over the track score; a 2D detection overwrites the stored image box
/// and mask. A 2D-only match on a filtered track leaves the predicted 3D
/// state untouched. Tracks that have never seen 3D keep the best 2D score
/// seen so far as their bookkeeping score.
inline Track update_track(Track t, const FusedInstance& inst,
                          int64_t frame_index, const NoiseConfig& noise) {
  t.matched_this_frame = true;
  t.frames_since_any_update = 0;
  if (inst.det3d) {
    if (t.filter) {
      t.filter = update(*t.filter, inst.det3d->box, noise);
    } else {
      t.filter = init_filter(inst.det3d->box, noise);
    }
    t.score = inst.det3d->score;
  }
  if (inst.det2d) {
    t.last_box2d = inst.det2d->box;
    t.last_box2d_frame = frame_index;
    t.mask_payload = inst.det2d->mask_payload;
    t.frames_since_2d_update = 0;
    if (!t.filter) t.score = std::max(t.score, inst.det2d->score);
  }
  return t;
}

/// Terminates tracks that have gone max_age frames without any update and
/// recomputes the confirmed flag: matched this frame and 2D-updated within
/// the last confirm_2d_age frames. Expects counters already advanced for the
/// current frame. Returns (kept, terminated).
inline std::pair<std::vector<Track>, std::vector<Track>> lifecycle_sweep(
    std::vector<Track> tracks, const TrackerConfig& cfg) {
  std::vector<Track> kept;
  std::vector<Track> terminated;
  kept.reserve(tracks.size());
  for (Track& t : tracks) {
    const ClassConfig& c = cfg.for_class(t.class_id);
    if (t.frames_since_any_update >= c.max_age) {
      t.confirmed = false;
      terminated.push_back(std::move(t));
      continue;
    }
    t.confirmed =
        t.matched_this_frame && t.frames_since_2d_update <= c.confirm_2d_age;
    kept.push_back(std::move(t));
  }
  return {std::move(kept), std::move(terminated)};
}

/// Builds the frame's output records. Every track with a filter reports its
/// current 3D box; confirmed tracks report their raw score while unconfirmed
/// ones decay it by 0.5 per frame since the last 2D update. Image boxes are
/// only reported for confirmed tracks: filtered tracks project their state
/// into the reporting camera, 2D-only tracks reuse their stored box. Tracks
/// with neither a filter nor confirmation emit nothing.
inline FrameOutput report(const std::vector<Track>& tracks,
                          int64_t frame_index,
                          const std::vector<CameraModel>& frame_cameras,
                          const TrackerConfig& cfg, int vertical_axis) {
  const CameraModel* reporting_camera = nullptr;
  for (const CameraModel& cam : frame_cameras) {
    if (cfg.reporting_camera.empty() ||
        cam.camera_id == cfg.reporting_camera) {
      reporting_camera = &cam;
      break;
    }
  }

  FrameOutput out;
  out.frame_index = frame_index;
  for (const Track& t : tracks) {
    OutputRecord rec;
    rec.track_id = t.track_id;
    rec.class_id = t.class_id;
    rec.confirmed = t.confirmed;
    if (t.filter) {
      rec.box3d = state_to_box(*t.filter);
      rec.score = t.confirmed
                      ? t.score
                      : t.score * std::pow(0.5, t.frames_since_2d_update);
      if (t.confirmed && reporting_camera != nullptr) {
        const std::optional<BoxImage> projected =
            project_box(*rec.box3d, *reporting_camera, vertical_axis);
        if (projected) rec.boxes2d.push_back(*projected);
      }
    } else if (t.confirmed && t.last_box2d) {
      rec.score = t.score;
      rec.boxes2d.push_back(*t.last_box2d);
    } else {
      continue;
    }
    if (!rec.boxes2d.empty() && t.mask_payload) {
      rec.mask_payload = t.mask_payload;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tracker
// ---------------------------------------------------------------------------

struct TrackerStats {
  int64_t frames = 0;
  int64_t fused_pairs = 0;
  int64_t stage1_matches = 0;
  int64_t stage2_matches = 0;
  int64_t tracks_created = 0;
  int64_t tracks_terminated = 0;
};

/// Per-sequence tracker. Frames must arrive in strictly increasing
/// frame_index order; one instance must not be shared across sequences.
class Tracker {
 public:
  Tracker(TrackerConfig cfg, Rig rig)
      : cfg_(std::move(cfg)), rig_(std::move(rig)) {
    cfg_.validate();
    for (const CameraModel& cam : rig_.cameras) cam.validate();
    if (!cfg_.reporting_camera.empty() &&
        rig_.find(cfg_.reporting_camera) == nullptr) {
      throw ConfigError("reporting camera '" + cfg_.reporting_camera +
                        "' is not in the rig");
    }
  }

  const TrackerStats& stats() const { return stats_; }
  const std::vector<Track>& tracks() const { return tracks_; }

  FrameOutput step(const FrameInput& frame) {
    if (last_frame_ && frame.frame_index <= *last_frame_) {
      throw SequencingError(
          "frame " + std::to_string(frame.frame_index) +
          " arrived after frame " + std::to_string(*last_frame_));
    }
    last_frame_ = frame.frame_index;
    ++stats_.frames;

    for (const auto& [camera_id, dets] : frame.dets2d_by_camera) {
      if (rig_.find(camera_id) == nullptr) {
        throw ConfigError("unknown camera '" + camera_id +
                          "' in frame input");
      }
    }

    // Cameras for this frame: rig extrinsics composed with the inverse ego
    // pose, so they map tracking-frame points into each camera.
    std::vector<CameraModel> frame_cameras = rig_.cameras;
    const RigidTransform world_to_sensor = frame.ego_pose.inverse();
    for (CameraModel& cam : frame_cameras) {
      cam.extrinsics = cam.extrinsics * world_to_sensor;
    }

    // Begin-of-frame bookkeeping: clear match flags, advance staleness.
    for (Track& t : tracks_) {
      t.matched_this_frame = false;
      ++t.frames_since_any_update;
      if (t.frames_since_2d_update < kNever2d) ++t.frames_since_2d_update;
    }

    // (1) Fusion, per class.
    std::vector<FusedInstance> instances;
    for (ClassId class_id : kAllClasses) {
      std::vector<Detection3D> dets3d;
      for (const Detection3D& det : frame.dets3d) {
        if (det.class_id == class_id) dets3d.push_back(det);
      }
      std::map<std::string, std::vector<Detection2D>> dets2d;
      if (cfg_.use_2d) {
        for (const auto& [camera_id, list] : frame.dets2d_by_camera) {
          std::vector<Detection2D> subset;
          for (const Detection2D& det : list) {
            if (det.class_id == class_id) subset.push_back(det);
          }
          if (!subset.empty()) dets2d.emplace(camera_id, std::move(subset));
        }
      }
      if (dets3d.empty() && dets2d.empty()) continue;
      std::vector<FusedInstance> fused =
          fuse_frame(dets3d, dets2d, frame_cameras,
                     cfg_.for_class(class_id).fusion_min_overlap,
                     rig_.vertical_axis);
      for (FusedInstance& inst : fused) {
        if (inst.det3d && inst.det2d) ++stats_.fused_pairs;
        instances.push_back(std::move(inst));
      }
    }

    // (2) Kalman predict for every track with a filter.
    for (Track& t : tracks_) {
      if (t.filter) t.filter = predict(*t.filter, cfg_.noise);
    }

    // (3) First association stage, per class, on instances with 3D boxes
    // against tracks with filters.
    std::vector<int> instance_track(instances.size(), -1);
    std::vector<char> track_matched(tracks_.size(), 0);
    for (ClassId class_id : kAllClasses) {
      std::vector<int> inst_idx;
      std::vector<Box3D> observations;
      for (size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].class_id == class_id && instances[i].det3d) {
          inst_idx.push_back(static_cast<int>(i));
          observations.push_back(instances[i].det3d->box);
        }
      }
      std::vector<int> track_idx;
      std::vector<Box3D> predictions;
      for (size_t k = 0; k < tracks_.size(); ++k) {
        if (tracks_[k].class_id == class_id && tracks_[k].filter) {
          track_idx.push_back(static_cast<int>(k));
          predictions.push_back(state_to_box(*tracks_[k].filter));
        }
      }
      if (inst_idx.empty() || track_idx.empty()) continue;
      const MatchSet matched = associate_stage1(
          observations, predictions, cfg_.for_class(class_id).stage1_threshold,
          cfg_.stage1_metric, rig_.vertical_axis);
      for (const Match& m : matched.matches) {
        instance_track[inst_idx[m.row]] = track_idx[m.col];
        track_matched[track_idx[m.col]] = 1;
        ++stats_.stage1_matches;
      }
    }

    // (4) Second association stage, per class, on the leftovers that carry a
    // 2D box against tracks not matched in stage 1.
    if (cfg_.use_2d) {
      for (ClassId class_id : kAllClasses) {
        std::vector<int> inst_idx;
        std::vector<BoxImage> observations;
        for (size_t i = 0; i < instances.size(); ++i) {
          if (instances[i].class_id == class_id && instances[i].det2d &&
              instance_track[i] < 0) {
            inst_idx.push_back(static_cast<int>(i));
            observations.push_back(instances[i].det2d->box);
          }
        }
        std::vector<int> track_idx;
        std::vector<Stage2Track> candidates;
        for (size_t k = 0; k < tracks_.size(); ++k) {
          const Track& t = tracks_[k];
          if (t.class_id != class_id || track_matched[k]) continue;
          if (!t.filter && !t.last_box2d) continue;
          Stage2Track cand;
          if (t.filter) cand.predicted_box = state_to_box(*t.filter);
          cand.last_box2d = t.last_box2d;
          track_idx.push_back(static_cast<int>(k));
          candidates.push_back(std::move(cand));
        }
        if (inst_idx.empty() || track_idx.empty()) continue;
        const MatchSet matched = associate_stage2(
            observations, candidates, cfg_.for_class(class_id).stage2_min_iou,
            frame_cameras, rig_.vertical_axis);
        for (const Match& m : matched.matches) {
          instance_track[inst_idx[m.row]] = track_idx[m.col];
          track_matched[track_idx[m.col]] = 1;
          ++stats_.stage2_matches;
        }
      }
    }

    // (5) Apply matches in instance order; (6) unmatched instances start new
    // tracks.
    for (size_t i = 0; i < instances.size(); ++i) {
      if (instance_track[i] >= 0) {
        Track& t = tracks_[instance_track[i]];
        t = update_track(std::move(t), instances[i], frame.frame_index,
                         cfg_.noise);
      } else {
        tracks_.push_back(
            create_track(instances[i], frame.frame_index));
      }
    }

    // (7) Lifecycle sweep.
    auto [kept, terminated] = lifecycle_sweep(std::move(tracks_), cfg_);
    tracks_ = std::move(kept);
    stats_.tracks_terminated += static_cast<int64_t>(terminated.size());

    // (8) Report.
    return report(tracks_, frame.frame_index, frame_cameras, cfg_,
                  rig_.vertical_axis);
  }

 private:
  Track create_track(const FusedInstance& inst, int64_t frame_index) {
    Track t;
    t.track_id = next_track_id_++;
    t.class_id = inst.class_id;
    // Creation counts as this frame's match for lifecycle purposes, but not
    // as a 2D update: a brand-new track is never confirmed before its first
    // post-creation 2D match.
    t.matched_this_frame = true;
    t.frames_since_any_update = 0;
    t.frames_since_2d_update = kNever2d;
    if (inst.det3d) {
      t.filter = init_filter(inst.det3d->box, cfg_.noise);
      t.score = inst.det3d->score;
    }
    if (inst.det2d) {
      t.last_box2d = inst.det2d->box;
      t.last_box2d_frame = frame_index;
      t.mask_payload = inst.det2d->mask_payload;
      if (!t.filter) t.score = inst.det2d->score;
    }
    ++stats_.tracks_created;
    return t;
  }

  TrackerConfig cfg_;
  Rig rig_;
  std::vector<Track> tracks_;
  TrackerStats stats_;
  int64_t next_track_id_ = 1;
  std::optional<int64_t> last_frame_;
};

}  // namespace fusemot
