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

#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fusemot/fusion.hpp"
#include "oracles.hpp"

namespace {

fusemot::CameraModel standard_camera(const std::string& id = "cam",
                                     double focal = 100.0) {
  fusemot::CameraModel cam;
  cam.camera_id = id;
  cam.intrinsics << focal, 0, 320, 0, focal, 240, 0, 0, 1;
  cam.extrinsics = fusemot::RigidTransform::identity();
  cam.image_width = 640;
  cam.image_height = 480;
  return cam;
}

fusemot::Detection3D det3d_at(double x, double y, double z,
                              fusemot::ClassId cls = fusemot::ClassId::kCar) {
  fusemot::Detection3D det;
  det.box = fusemot::Box3D(Eigen::Vector3d(x, y, z),
                           Eigen::Vector3d(1.5, 1.7, 4.0), 0.0);
  det.score = 0.9;
  det.class_id = cls;
  return det;
}

fusemot::Detection2D det2d_from(const fusemot::BoxImage& box,
                                fusemot::ClassId cls = fusemot::ClassId::kCar) {
  fusemot::Detection2D det;
  det.box = box;
  det.score = 0.8;
  det.class_id = cls;
  return det;
}

TEST_CASE("a perfect projection pairs at IoU 1") {
  const auto cam = standard_camera();
  const auto det = det3d_at(0, 0, 10);
  const auto projection = fusemot::project_box(det.box, cam);
  REQUIRE(projection.has_value());

  const auto pairs =
      fusemot::fuse_single_camera({det}, {det2d_from(*projection)}, cam, 0.01);
  REQUIRE(pairs.matches.size() == 1);
  CHECK(pairs.matches[0] == fusemot::Match{0, 0, 1.0});
}

TEST_CASE("a detection behind the camera never pairs") {
  const auto cam = standard_camera();
  const auto behind = det3d_at(0, 0, -10);
  const auto some_box = det2d_from(fusemot::BoxImage("cam", 100, 100, 200, 200));

  const auto pairs = fusemot::fuse_single_camera({behind}, {some_box}, cam, 0.01);
  CHECK(pairs.matches.empty());
  CHECK(pairs.unmatched_rows == std::vector<int>{0});
  CHECK(pairs.unmatched_cols == std::vector<int>{0});

  const auto instances = fusemot::fuse_frame(
      {behind}, {{"cam", {some_box}}}, {cam}, 0.01);
  REQUIRE(instances.size() == 2);
  CHECK(instances[0].det3d.has_value());
  CHECK_FALSE(instances[0].det2d.has_value());
  CHECK_FALSE(instances[1].det3d.has_value());
  CHECK(instances[1].det2d.has_value());
}

TEST_CASE("classes never fuse across categories") {
  const auto cam = standard_camera();
  const auto car = det3d_at(0, 0, 10, fusemot::ClassId::kCar);
  const auto projection = fusemot::project_box(car.box, cam);
  REQUIRE(projection.has_value());
  const auto walker = det2d_from(*projection, fusemot::ClassId::kPedestrian);

  const auto pairs = fusemot::fuse_single_camera({car}, {walker}, cam, 0.01);
  CHECK(pairs.matches.empty());

  const auto instances =
      fusemot::fuse_frame({car}, {{"cam", {walker}}}, {cam}, 0.01);
  REQUIRE(instances.size() == 2);
  CHECK(instances[0].class_id == fusemot::ClassId::kCar);
  CHECK(instances[1].class_id == fusemot::ClassId::kPedestrian);
}

TEST_CASE("crossed detections fuse to their own projections") {
  const auto cam = standard_camera();
  const auto left = det3d_at(-5, 0, 10);
  const auto right = det3d_at(5, 0, 10);
  const auto proj_left = fusemot::project_box(left.box, cam);
  const auto proj_right = fusemot::project_box(right.box, cam);
  REQUIRE(proj_left.has_value());
  REQUIRE(proj_right.has_value());

  // 2D inputs arrive in swapped order; fusion must cross the pairs.
  const auto instances = fusemot::fuse_frame(
      {left, right}, {{"cam", {det2d_from(*proj_right), det2d_from(*proj_left)}}},
      {cam}, 0.01);
  REQUIRE(instances.size() == 2);
  REQUIRE(instances[0].det3d.has_value());
  REQUIRE(instances[0].det2d.has_value());
  CHECK(instances[0].det3d->box == left.box);
  CHECK(instances[0].det2d->box == *proj_left);
  REQUIRE(instances[1].det2d.has_value());
  CHECK(instances[1].det2d->box == *proj_right);
}

TEST_CASE("zero 2D detections produce 3D-only instances") {
  const auto cam = standard_camera();
  const auto instances = fusemot::fuse_frame(
      {det3d_at(0, 0, 10), det3d_at(3, 0, 20)}, {}, {cam}, 0.01);
  REQUIRE(instances.size() == 2);
  for (const auto& inst : instances) {
    CHECK(inst.det3d.has_value());
    CHECK_FALSE(inst.det2d.has_value());
  }
}

TEST_CASE("multi-camera conflicts resolve to the larger projection") {
  const auto cam_a = standard_camera("a", 100.0);
  const auto cam_b = standard_camera("b", 200.0);
  const auto det = det3d_at(0, 0, 12);
  const auto in_a = fusemot::project_box(det.box, cam_a);
  const auto in_b = fusemot::project_box(det.box, cam_b);
  REQUIRE(in_a.has_value());
  REQUIRE(in_b.has_value());
  REQUIRE(in_b->area() > in_a->area());

  auto det_a = det2d_from(*in_a);
  det_a.mask_payload = "payload-a";
  auto det_b = det2d_from(*in_b);
  det_b.mask_payload = "payload-b";

  const auto instances = fusemot::fuse_frame(
      {det}, {{"a", {det_a}}, {"b", {det_b}}}, {cam_a, cam_b}, 0.01);
  REQUIRE(instances.size() == 2);
  REQUIRE(instances[0].det3d.has_value());
  REQUIRE(instances[0].det2d.has_value());
  CHECK(instances[0].det2d->box.camera_id == "b");
  CHECK(instances[0].det2d->mask_payload == "payload-b");
  // The released detection resurfaces as a 2D-only instance, not a pair.
  REQUIRE(instances[1].det2d.has_value());
  CHECK_FALSE(instances[1].det3d.has_value());
  CHECK(instances[1].det2d->box.camera_id == "a");
  CHECK(instances[1].det2d->mask_payload == "payload-a");
}

TEST_CASE("single-camera fusion equals the external greedy oracle") {
  const auto cam = standard_camera();
  std::mt19937_64 rng(91);
  std::uniform_int_distribution<int> count(0, 8);
  std::uniform_real_distribution<double> x(-20.0, 20.0);
  std::uniform_real_distribution<double> y(-2.0, 2.0);
  std::uniform_real_distribution<double> z(6.0, 40.0);
  std::uniform_real_distribution<double> pix_x(0.0, 600.0);
  std::uniform_real_distribution<double> pix_y(0.0, 440.0);
  std::uniform_real_distribution<double> extent(5.0, 120.0);
  std::uniform_int_distribution<int> cls(0, 1);
  std::uniform_real_distribution<double> chance(0.0, 1.0);

  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<fusemot::Detection3D> dets3d;
    const int n3 = count(rng);
    for (int i = 0; i < n3; ++i) {
      dets3d.push_back(det3d_at(x(rng), y(rng), z(rng),
                                cls(rng) == 0 ? fusemot::ClassId::kCar
                                              : fusemot::ClassId::kPedestrian));
    }
    std::vector<fusemot::Detection2D> dets2d;
    const int n2 = count(rng);
    for (int i = 0; i < n2; ++i) {
      fusemot::ClassId c = cls(rng) == 0 ? fusemot::ClassId::kCar
                                         : fusemot::ClassId::kPedestrian;
      // Half the boxes shadow a real projection so overlaps are non-trivial.
      if (!dets3d.empty() && chance(rng) < 0.5) {
        const auto& source = dets3d[static_cast<size_t>(i) % dets3d.size()];
        if (const auto proj = fusemot::project_box(source.box, cam)) {
          auto jittered = *proj;
          jittered.right += extent(rng) * 0.1;
          jittered.bottom += extent(rng) * 0.1;
          dets2d.push_back(det2d_from(jittered, c));
          continue;
        }
      }
      const double px = pix_x(rng);
      const double py = pix_y(rng);
      dets2d.push_back(det2d_from(
          fusemot::BoxImage("cam", px, py, px + extent(rng), py + extent(rng)),
          c));
    }

    const double threshold = 0.1;
    const auto got =
        fusemot::fuse_single_camera(dets3d, dets2d, cam, threshold);

    std::vector<std::vector<double>> overlap(
        static_cast<size_t>(n3), std::vector<double>(static_cast<size_t>(n2)));
    for (int r = 0; r < n3; ++r) {
      const auto proj = fusemot::project_box(dets3d[static_cast<size_t>(r)].box,
                                             cam);
      for (int c = 0; c < n2; ++c) {
        const auto& d2 = dets2d[static_cast<size_t>(c)];
        if (dets3d[static_cast<size_t>(r)].class_id != d2.class_id) {
          overlap[static_cast<size_t>(r)][static_cast<size_t>(c)] =
              -std::numeric_limits<double>::infinity();
        } else if (!proj) {
          overlap[static_cast<size_t>(r)][static_cast<size_t>(c)] = 0.0;
        } else {
          overlap[static_cast<size_t>(r)][static_cast<size_t>(c)] =
              fusemot::iou_2d(*proj, d2.box);
        }
      }
    }
    const auto want = oracles::greedy_reference(
        overlap, threshold, fusemot::MatchSense::kMaximize, n2);
    CHECK(got.matches == want.matches);
    CHECK(got.unmatched_rows == want.unmatched_rows);
    CHECK(got.unmatched_cols == want.unmatched_cols);

    // Conservation: every detection lands in exactly one instance.
    const auto instances = fusemot::fuse_frame(
        dets3d, {{"cam", dets2d}}, {cam}, threshold);
    size_t fused = 0;
    for (const auto& inst : instances) {
      REQUIRE((inst.det3d.has_value() || inst.det2d.has_value()));
      if (inst.det3d && inst.det2d) {
        ++fused;
        CHECK(inst.det3d->class_id == inst.det2d->class_id);
      }
    }
    CHECK(instances.size() ==
          static_cast<size_t>(n3) + static_cast<size_t>(n2) - fused);
    CHECK(fused == got.matches.size());
  }
}

}  // namespace
