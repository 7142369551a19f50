// Copyright 2026 The Fusemot Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fusemot/association.hpp"
#include "oracles.hpp"

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r == 0 ? 0 : static_cast<int>(rows[0].size());
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rows[i][j];
  return m;
}

bool same_match_set(const fusemot::MatchSet& a, const fusemot::MatchSet& b) {
  return a.matches == b.matches && a.unmatched_rows == b.unmatched_rows &&
         a.unmatched_cols == b.unmatched_cols;
}

fusemot::Box3D at(double x, double y, double z, double yaw = 0.0) {
  return fusemot::Box3D(Eigen::Vector3d(x, y, z),
                        Eigen::Vector3d(1.5, 1.7, 4.0), yaw);
}

TEST_CASE("greedy matching on small matrices") {
  const auto result =
      fusemot::greedy_match(to_matrix({{1, 5}, {2, 0.5}}), 3.0,
                            fusemot::MatchSense::kMinimize);
  REQUIRE(result.matches.size() == 2);
  CHECK(result.matches[0] == fusemot::Match{1, 1, 0.5});
  CHECK(result.matches[1] == fusemot::Match{0, 0, 1.0});
  CHECK(result.unmatched_rows.empty());
  CHECK(result.unmatched_cols.empty());

  const auto none =
      fusemot::greedy_match(to_matrix({{4, 5}, {6, 7}}), 3.0,
                            fusemot::MatchSense::kMinimize);
  CHECK(none.matches.empty());
  CHECK(none.unmatched_rows == std::vector<int>{0, 1});
  CHECK(none.unmatched_cols == std::vector<int>{0, 1});

  const auto empty = fusemot::greedy_match(Eigen::MatrixXd(0, 3), 1.0,
                                           fusemot::MatchSense::kMinimize);
  CHECK(empty.matches.empty());
  CHECK(empty.unmatched_rows.empty());
  CHECK(empty.unmatched_cols == std::vector<int>{0, 1, 2});

  const auto gains =
      fusemot::greedy_match(to_matrix({{0.9, 0.4}, {0.8, 0.85}}), 0.5,
                            fusemot::MatchSense::kMaximize);
  REQUIRE(gains.matches.size() == 2);
  CHECK(gains.matches[0] == fusemot::Match{0, 0, 0.9});
  CHECK(gains.matches[1] == fusemot::Match{1, 1, 0.85});
}

TEST_CASE("thresholds are strict and sentinels are skipped") {
  // A value exactly at the threshold never qualifies, in either sense.
  const auto at_min = fusemot::greedy_match(to_matrix({{3.0}}), 3.0,
                                            fusemot::MatchSense::kMinimize);
  CHECK(at_min.matches.empty());
  const auto at_max = fusemot::greedy_match(to_matrix({{0.5}}), 0.5,
                                            fusemot::MatchSense::kMaximize);
  CHECK(at_max.matches.empty());

  Eigen::MatrixXd forbidden(2, 2);
  forbidden << -kInf, 1.0, std::nan(""), 2.0;
  const auto got = fusemot::greedy_match(forbidden, 10.0,
                                         fusemot::MatchSense::kMinimize);
  REQUIRE(got.matches.size() == 1);
  CHECK(got.matches[0] == fusemot::Match{0, 1, 1.0});
  CHECK(got.unmatched_rows == std::vector<int>{1});
  CHECK(got.unmatched_cols == std::vector<int>{0});

  Eigen::MatrixXd gain_forbidden(1, 2);
  gain_forbidden << kInf, 0.7;
  const auto gain = fusemot::greedy_match(gain_forbidden, 0.1,
                                          fusemot::MatchSense::kMaximize);
  REQUIRE(gain.matches.size() == 1);
  CHECK(gain.matches[0] == fusemot::Match{0, 1, 0.7});
}

TEST_CASE("ties break by lower row then lower column") {
  const auto tied = fusemot::greedy_match(to_matrix({{1.0, 1.0}, {1.0, 1.0}}),
                                          5.0, fusemot::MatchSense::kMinimize);
  REQUIRE(tied.matches.size() == 2);
  CHECK(tied.matches[0] == fusemot::Match{0, 0, 1.0});
  CHECK(tied.matches[1] == fusemot::Match{1, 1, 1.0});
}

TEST_CASE("greedy matching equals the rescan oracle") {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<int> size(0, 8);
  std::uniform_real_distribution<double> value(0.0, 10.0);
  std::uniform_real_distribution<double> thresh(1.0, 9.0);
  for (int iter = 0; iter < 1000; ++iter) {
    const int rows = size(rng);
    const int cols = size(rng);
    std::vector<std::vector<double>> values(
        static_cast<size_t>(rows),
        std::vector<double>(static_cast<size_t>(cols)));
    for (auto& row : values)
      for (auto& cell : row) cell = value(rng);
    // Duplicated values exercise the tie-break path.
    if (rows > 1 && cols > 1 && iter % 3 == 0) {
      values[static_cast<size_t>(rows - 1)][static_cast<size_t>(cols - 1)] =
          values[0][0];
    }
    const double threshold = thresh(rng);
    const auto sense = iter % 2 == 0 ? fusemot::MatchSense::kMinimize
                                     : fusemot::MatchSense::kMaximize;
    Eigen::MatrixXd matrix(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        matrix(r, c) = values[static_cast<size_t>(r)][static_cast<size_t>(c)];
    const auto got = fusemot::greedy_match(matrix, threshold, sense);
    const auto want = oracles::greedy_reference(values, threshold, sense, cols);
    CHECK(same_match_set(got, want));
  }
}

TEST_CASE("stage 1 association") {
  // An observation exactly at a prediction matches at distance zero.
  const auto zero = fusemot::associate_stage1(
      {at(3, 0, 7)}, {at(3, 0, 7)}, 0.01,
      fusemot::AssociationMetric::kScaledDistance);
  REQUIRE(zero.matches.size() == 1);
  CHECK(zero.matches[0].value == 0.0);

  // 10 m away against a 7.5 m gate: unmatched.
  const auto far = fusemot::associate_stage1(
      {at(10, 0, 0)}, {at(0, 0, 0)}, 7.5,
      fusemot::AssociationMetric::kScaledDistance);
  CHECK(far.matches.empty());
  CHECK(far.unmatched_rows == std::vector<int>{0});
  CHECK(far.unmatched_cols == std::vector<int>{0});

  // Crossed distances resolve exactly like the oracle.
  const std::vector<fusemot::Box3D> obs = {at(0, 0, 0), at(5, 0, 0)};
  const std::vector<fusemot::Box3D> preds = {at(4.5, 0, 0), at(0.5, 0, 0)};
  const auto crossed = fusemot::associate_stage1(
      obs, preds, 100.0, fusemot::AssociationMetric::kScaledDistance);
  std::vector<std::vector<double>> values(2, std::vector<double>(2));
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      values[static_cast<size_t>(r)][static_cast<size_t>(c)] =
          fusemot::scaled_distance(obs[static_cast<size_t>(r)],
                                   preds[static_cast<size_t>(c)]);
  CHECK(same_match_set(crossed, oracles::greedy_reference(
                                    values, 100.0,
                                    fusemot::MatchSense::kMinimize)));

  // The IoU metric maximizes: overlapping boxes match, disjoint ones do not.
  const auto by_iou = fusemot::associate_stage1(
      {at(0.5, 0, 0)}, {at(0, 0, 0)}, 0.1, fusemot::AssociationMetric::kIou3d);
  CHECK(by_iou.matches.size() == 1);
  const auto by_iou_far = fusemot::associate_stage1(
      {at(50, 0, 0)}, {at(0, 0, 0)}, 0.1, fusemot::AssociationMetric::kIou3d);
  CHECK(by_iou_far.matches.empty());

  // Planar metric ignores vertical offsets.
  const auto planar = fusemot::associate_stage1(
      {at(0, 5, 0)}, {at(0, 0, 0)}, 0.5,
      fusemot::AssociationMetric::kPlanarDistance);
  CHECK(planar.matches.size() == 1);
}

TEST_CASE("stage 2 association") {
  fusemot::CameraModel cam;
  cam.camera_id = "cam";
  cam.intrinsics << 100, 0, 320, 0, 100, 240, 0, 0, 1;
  cam.extrinsics = fusemot::RigidTransform::identity();
  cam.image_width = 640;
  cam.image_height = 480;
  const std::vector<fusemot::CameraModel> cams = {cam};

  // A 2D-only track matches a repeat of its last box at IoU 1.
  const fusemot::BoxImage box("cam", 100, 100, 200, 200);
  fusemot::Stage2Track flat;
  flat.last_box2d = box;
  const auto exact = fusemot::associate_stage2({box}, {flat}, 0.3, cams);
  REQUIRE(exact.matches.size() == 1);
  CHECK(exact.matches[0].value == 1.0);

  // A track whose prediction projects outside every image stays unmatched.
  fusemot::Stage2Track behind;
  behind.predicted_box = at(0, 0, -20);
  const auto miss = fusemot::associate_stage2({box}, {behind}, 0.3, cams);
  CHECK(miss.matches.empty());
  CHECK(miss.unmatched_cols == std::vector<int>{0});

  // IoU 0.4 passes a 0.3 gate and fails a 0.5 gate.
  const fusemot::BoxImage ref("cam", 0, 0, 10, 10);
  const fusemot::BoxImage shifted("cam", 0, 0, 10, 4.0);
  REQUIRE(fusemot::iou_2d(ref, shifted) == Catch::Approx(0.4).margin(1e-9));
  fusemot::Stage2Track seen;
  seen.last_box2d = ref;
  CHECK(fusemot::associate_stage2({shifted}, {seen}, 0.3, cams)
            .matches.size() == 1);
  CHECK(fusemot::associate_stage2({shifted}, {seen}, 0.5, cams)
            .matches.empty());

  // When a filter exists its projection is the reference, not the stale box.
  fusemot::Stage2Track hybrid;
  hybrid.predicted_box = at(0, 0, 10);  // projects near the image center
  hybrid.last_box2d = fusemot::BoxImage("cam", 0, 0, 10, 10);
  const auto center_proj = fusemot::project_box(*hybrid.predicted_box, cam);
  REQUIRE(center_proj.has_value());
  const auto via_filter =
      fusemot::associate_stage2({*center_proj}, {hybrid}, 0.3, cams);
  REQUIRE(via_filter.matches.size() == 1);
  const auto via_stale = fusemot::associate_stage2(
      {fusemot::BoxImage("cam", 0, 0, 10, 10)}, {hybrid}, 0.3, cams);
  CHECK(via_stale.matches.empty());
}

TEST_CASE("stage 2 multi-camera resolution") {
  auto make_cam = [](const std::string& id, double cx) {
    fusemot::CameraModel cam;
    cam.camera_id = id;
    cam.intrinsics << 100, 0, cx, 0, 100, 240, 0, 0, 1;
    cam.extrinsics = fusemot::RigidTransform::identity();
    cam.image_width = 640;
    cam.image_height = 480;
    return cam;
  };
  // Camera b sees the same box with double the focal length, so the
  // projected reference area is larger there.
  auto cam_a = make_cam("a", 320.0);
  auto cam_b = make_cam("b", 320.0);
  cam_b.intrinsics(0, 0) = 200.0;
  cam_b.intrinsics(1, 1) = 200.0;
  const std::vector<fusemot::CameraModel> cams = {cam_a, cam_b};

  fusemot::Stage2Track track;
  track.predicted_box = at(0, 0, 12);
  const auto in_a = fusemot::project_box(*track.predicted_box, cam_a);
  const auto in_b = fusemot::project_box(*track.predicted_box, cam_b);
  REQUIRE(in_a.has_value());
  REQUIRE(in_b.has_value());
  REQUIRE(in_b->area() > in_a->area());

  // Observation 0 lives in camera a, observation 1 in camera b; the track
  // must take the larger-area camera and leave the other observation alone.
  const auto resolved =
      fusemot::associate_stage2({*in_a, *in_b}, {track}, 0.3, cams);
  REQUIRE(resolved.matches.size() == 1);
  CHECK(resolved.matches[0].row == 1);
  CHECK(resolved.matches[0].col == 0);
  CHECK(resolved.unmatched_rows == std::vector<int>{0});
}

}  // namespace
