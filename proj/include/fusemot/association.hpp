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
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fusemot/core.hpp"
#include "fusemot/geometry.hpp"

namespace fusemot {

// ---------------------------------------------------------------------------
// Greedy bipartite matching
// ---------------------------------------------------------------------------

struct Match {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

inline bool operator==(const Match& a, const Match& b) {
  return a.row == b.row && a.col == b.col && a.value == b.value;
}

/// Partition of a bipartite matching problem: accepted pairs plus the rows
/// and columns that stayed unmatched (each listed in ascending order).
struct MatchSet {
  std::vector<Match> matches;
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
};

enum class MatchSense {
  kMinimize,  // lower is better; a pair qualifies when value < threshold
  kMaximize,  // higher is better; a pair qualifies when value > threshold
};

/// Greedy one-to-one matching over a dense value matrix. Qualifying pairs are
/// visited best-first and accepted while both endpoints are free. Ties on the
/// value are broken by lower row index, then lower column index, which makes
/// the result deterministic. +/-infinity entries can never qualify and act as
/// "forbidden pair" sentinels; NaN entries are likewise skipped.
inline MatchSet greedy_match(const Eigen::MatrixXd& values, double threshold,
                             MatchSense sense) {
  const int rows = static_cast<int>(values.rows());
  const int cols = static_cast<int>(values.cols());

  struct Candidate {
    double value;
    int row;
    int col;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = values(r, c);
      if (!std::isfinite(v)) continue;
      const bool qualifies =
          sense == MatchSense::kMinimize ? v < threshold : v > threshold;
      if (qualifies) candidates.push_back({v, r, c});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [sense](const Candidate& a, const Candidate& b) {
              if (a.value != b.value) {
                return sense == MatchSense::kMinimize ? a.value < b.value
                                                      : a.value > b.value;
              }
              if (a.row != b.row) return a.row < b.row;
              return a.col < b.col;
            });

  MatchSet out;
  std::vector<char> row_used(rows, 0);
  std::vector<char> col_used(cols, 0);
  for (const Candidate& cand : candidates) {
    if (row_used[cand.row] || col_used[cand.col]) continue;
    row_used[cand.row] = 1;
    col_used[cand.col] = 1;
    out.matches.push_back({cand.row, cand.col, cand.value});
  }
  for (int r = 0; r < rows; ++r) {
    if (!row_used[r]) out.unmatched_rows.push_back(r);
  }
  for (int c = 0; c < cols; ++c) {
    if (!col_used[c]) out.unmatched_cols.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tracker association stages
// ---------------------------------------------------------------------------

enum class AssociationMetric {
  kScaledDistance,
  kPlanarDistance,
  kIou3d,
};

/// First association stage: observation boxes against predicted track boxes
/// in 3D. Distance metrics are minimized with a strict < threshold; the IoU
/// metric is maximized with a strict > threshold. Rows index the
/// observations, columns the tracks.
inline MatchSet associate_stage1(const std::vector<Box3D>& observations,
                                 const std::vector<Box3D>& predictions,
                                 double threshold, AssociationMetric metric,
                                 int vertical_axis = kVerticalAxis) {
  const int rows = static_cast<int>(observations.size());
  const int cols = static_cast<int>(predictions.size());
  Eigen::MatrixXd values(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      switch (metric) {
        case AssociationMetric::kScaledDistance:
          values(r, c) = scaled_distance(observations[r], predictions[c]);
          break;
        case AssociationMetric::kPlanarDistance:
          values(r, c) =
              planar_distance(observations[r], predictions[c], vertical_axis);
          break;
        case AssociationMetric::kIou3d:
          values(r, c) = iou_3d(observations[r], predictions[c], vertical_axis);
          break;
      }
    }
  }
  const MatchSense sense = metric == AssociationMetric::kIou3d
                               ? MatchSense::kMaximize
                               : MatchSense::kMinimize;
  return greedy_match(values, threshold, sense);
}

/// A track as seen by the second stage: its predicted 3D box when it carries
/// a filter, and the image box from its most recent 2D update, if any.
struct Stage2Track {
  std::optional<Box3D> predicted_box;
  std::optional<BoxImage> last_box2d;
};

/// Second association stage: leftover 2D observations against leftover
/// tracks, by image-plane IoU, maximized with a strict > min_iou. A track's
/// reference box in a camera is the projection of its predicted 3D box when
/// it has one, otherwise its last 2D box (only valid in that box's own
/// camera). When one track matches observations in several cameras, the
/// camera where its reference box has the largest area wins (ties broken by
/// camera_id order); observations matched in losing cameras are released and
/// stay unmatched. Rows index the observations, columns the tracks.
inline MatchSet associate_stage2(const std::vector<BoxImage>& observations,
                                 const std::vector<Stage2Track>& tracks,
                                 double min_iou,
                                 const std::vector<CameraModel>& cameras,
                                 int vertical_axis = kVerticalAxis) {
  const int rows = static_cast<int>(observations.size());
  const int cols = static_cast<int>(tracks.size());

  struct CameraWin {
    double reference_area;
    std::string camera_id;
    int observation;
    double value;
  };
  std::vector<std::vector<CameraWin>> wins(cols);
  std::vector<char> obs_taken(rows, 0);

  for (const CameraModel& cam : cameras) {
    std::vector<int> cam_rows;
    for (int r = 0; r < rows; ++r) {
      if (observations[r].camera_id == cam.camera_id) cam_rows.push_back(r);
    }
    std::vector<int> cam_cols;
    std::vector<BoxImage> references;
    for (int c = 0; c < cols; ++c) {
      std::optional<BoxImage> ref;
      if (tracks[c].predicted_box) {
        ref = project_box(*tracks[c].predicted_box, cam, vertical_axis);
      } else if (tracks[c].last_box2d &&
                 tracks[c].last_box2d->camera_id == cam.camera_id) {
        ref = tracks[c].last_box2d;
      }
      if (ref) {
        cam_cols.push_back(c);
        references.push_back(*ref);
      }
    }
    if (cam_rows.empty() || cam_cols.empty()) continue;

    Eigen::MatrixXd values(cam_rows.size(), cam_cols.size());
    for (size_t r = 0; r < cam_rows.size(); ++r) {
      for (size_t c = 0; c < cam_cols.size(); ++c) {
        values(r, c) = iou_2d(observations[cam_rows[r]], references[c]);
      }
    }
    const MatchSet local = greedy_match(values, min_iou, MatchSense::kMaximize);
    for (const Match& m : local.matches) {
      const int col = cam_cols[m.col];
      wins[col].push_back({references[m.col].area(), cam.camera_id,
                           cam_rows[m.row], m.value});
      obs_taken[cam_rows[m.row]] = 1;
    }
  }

  MatchSet out;
  for (int c = 0; c < cols; ++c) {
    if (wins[c].empty()) continue;
    const CameraWin* best = &wins[c][0];
    for (const CameraWin& w : wins[c]) {
      if (w.reference_area > best->reference_area ||
          (w.reference_area == best->reference_area &&
           w.camera_id < best->camera_id)) {
        best = &w;
      }
    }
    for (const CameraWin& w : wins[c]) {
      if (&w != best) obs_taken[w.observation] = 0;
    }
    out.matches.push_back({best->observation, c, best->value});
    obs_taken[best->observation] = 1;
  }
  std::sort(out.matches.begin(), out.matches.end(),
            [](const Match& a, const Match& b) { return a.row < b.row; });

  std::vector<char> col_used(cols, 0);
  for (const Match& m : out.matches) col_used[m.col] = 1;
  for (int r = 0; r < rows; ++r) {
    if (!obs_taken[r]) out.unmatched_rows.push_back(r);
  }
  for (int c = 0; c < cols; ++c) {
    if (!col_used[c]) out.unmatched_cols.push_back(c);
  }
  return out;
}

}  // namespace fusemot
