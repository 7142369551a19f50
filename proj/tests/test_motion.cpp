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
#include <numbers>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "fusemot/motion.hpp"

namespace {

constexpr double kPi = std::numbers::pi;

fusemot::Box3D box_at(const Eigen::Vector3d& position, double yaw = 0.0) {
  return fusemot::Box3D(position, Eigen::Vector3d(1.5, 1.7, 4.0), yaw);
}

TEST_CASE("filter initialization") {
  const fusemot::NoiseConfig noise;
  const auto box = box_at(Eigen::Vector3d(1, 2, 3), 3.0 * kPi / 2.0);
  const auto state = fusemot::init_filter(box, noise);

  CHECK(state.mean.head<3>() == Eigen::Vector3d(1, 2, 3));
  CHECK(state.mean[fusemot::kYawIndex] ==
        Catch::Approx(-kPi / 2.0).margin(1e-12));
  CHECK(state.mean[4] == 1.5);
  CHECK(state.mean[5] == 1.7);
  CHECK(state.mean[6] == 4.0);
  CHECK(state.mean.tail<3>() == Eigen::Vector3d::Zero());

  for (int i = 0; i < 7; ++i) CHECK(state.covariance(i, i) == noise.p0_observed);
  for (int i = 7; i < 10; ++i)
    CHECK(state.covariance(i, i) == noise.p0_velocity);
  CHECK((state.covariance - state.covariance.transpose()).cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("prediction advances position by velocity") {
  const fusemot::NoiseConfig noise;
  auto state = fusemot::init_filter(box_at(Eigen::Vector3d::Zero()), noise);
  state.mean.tail<3>() = Eigen::Vector3d(1, 2, 3);
  const auto predicted = fusemot::predict(state, noise);
  CHECK(predicted.mean.head<3>() == Eigen::Vector3d(1, 2, 3));
  CHECK(predicted.mean.tail<3>() == Eigen::Vector3d(1, 2, 3));
  CHECK(predicted.mean.segment<4>(3) == state.mean.segment<4>(3));

  auto still = fusemot::init_filter(box_at(Eigen::Vector3d(4, 5, 6)), noise);
  const auto held = fusemot::predict(still, noise);
  CHECK(held.mean.head<3>() == Eigen::Vector3d(4, 5, 6));
}

TEST_CASE("prediction inflates a random diagonal covariance") {
  const fusemot::NoiseConfig noise;  // q entries are positive by default
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> variance(0.1, 20.0);
  for (int i = 0; i < 200; ++i) {
    fusemot::FilterState state =
        fusemot::init_filter(box_at(Eigen::Vector3d::Zero()), noise);
    for (int d = 0; d < fusemot::kStateDim; ++d)
      state.covariance(d, d) = variance(rng);
    const auto predicted = fusemot::predict(state, noise);
    CHECK(predicted.covariance.trace() > state.covariance.trace());
  }
}

TEST_CASE("update with the predicted mean is a no-op on the mean") {
  const fusemot::NoiseConfig noise;
  auto state = fusemot::init_filter(box_at(Eigen::Vector3d(2, 0, 8)), noise);
  state.mean.tail<3>() = Eigen::Vector3d(0.5, 0, -0.25);
  const auto predicted = fusemot::predict(state, noise);

  fusemot::Box3D obs(predicted.mean.head<3>(),
                     predicted.mean.segment<3>(4),
                     predicted.mean[fusemot::kYawIndex]);
  const auto updated = fusemot::update(predicted, obs, noise);
  CHECK(updated.mean == predicted.mean);
  CHECK(updated.covariance.trace() < predicted.covariance.trace());
}

TEST_CASE("yaw innovation wraps and flips") {
  const fusemot::NoiseConfig noise;
  const auto state = fusemot::init_filter(box_at(Eigen::Vector3d::Zero(), 0.0),
                                          noise);
  // Observed yaw 3.0 against predicted 0.0: the raw difference exceeds a
  // right angle, so the observation is treated as flipped by pi and the
  // effective innovation becomes 3.0 - pi.
  const auto updated =
      fusemot::update(state, box_at(Eigen::Vector3d::Zero(), 3.0), noise);
  const double gain = noise.p0_observed / (noise.p0_observed +
                                           noise.r_observation);
  CHECK(updated.mean[fusemot::kYawIndex] ==
        Catch::Approx(gain * (3.0 - kPi)).margin(1e-9));

  // A large negative observed yaw flips the other way.
  const auto updated2 =
      fusemot::update(state, box_at(Eigen::Vector3d::Zero(), -3.0), noise);
  CHECK(updated2.mean[fusemot::kYawIndex] ==
        Catch::Approx(gain * (kPi - 3.0)).margin(1e-9));
}

TEST_CASE("alternating yaw flips do not disturb position estimates") {
  const fusemot::NoiseConfig noise;
  const Eigen::Vector3d v(1.0, 0.0, 0.5);
  auto consistent = fusemot::init_filter(box_at(Eigen::Vector3d::Zero(), 0.3),
                                         noise);
  auto flipped = consistent;
  for (int frame = 1; frame <= 8; ++frame) {
    const Eigen::Vector3d p = v * frame;
    consistent = fusemot::predict(consistent, noise);
    flipped = fusemot::predict(flipped, noise);
    const double yaw = frame % 2 == 0 ? 0.3 : 0.3 + kPi;
    consistent = fusemot::update(consistent, box_at(p, 0.3), noise);
    flipped = fusemot::update(flipped, box_at(p, yaw), noise);
    CHECK((consistent.mean.head<3>() - flipped.mean.head<3>())
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    CHECK(std::abs(consistent.mean[fusemot::kYawIndex] -
                   flipped.mean[fusemot::kYawIndex]) < 1e-9);
  }
}

TEST_CASE("noiseless constant velocity converges") {
  fusemot::NoiseConfig noise;
  noise.r_observation = 1e-9;
  const Eigen::Vector3d start(10, 1, -5);
  const Eigen::Vector3d v(1.2, 0.0, -0.7);

  auto state = fusemot::init_filter(box_at(start), noise);
  for (int frame = 1; frame <= 5; ++frame) {
    state = fusemot::predict(state, noise);
    state = fusemot::update(state, box_at(start + v * frame), noise);
  }
  const auto ahead = fusemot::predict(state, noise);
  const Eigen::Vector3d truth = start + v * 6;
  CHECK((ahead.mean.head<3>() - truth).norm() < 1e-6);
}

TEST_CASE("covariance stays symmetric PSD over random cycles") {
  const fusemot::NoiseConfig noise;
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> pos(-30.0, 30.0);
  std::uniform_real_distribution<double> dim(0.3, 5.0);
  std::uniform_real_distribution<double> yaw(-kPi, kPi);

  auto state = fusemot::init_filter(box_at(Eigen::Vector3d::Zero()), noise);
  for (int i = 0; i < 1000; ++i) {
    state = fusemot::predict(state, noise);
    const fusemot::Box3D obs(Eigen::Vector3d(pos(rng), pos(rng), pos(rng)),
                             Eigen::Vector3d(dim(rng), dim(rng), dim(rng)),
                             yaw(rng));
    state = fusemot::update(state, obs, noise);
    CHECK((state.covariance - state.covariance.transpose())
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(state.covariance);
    CHECK(eig.eigenvalues().minCoeff() > -1e-9);
  }
}

TEST_CASE("state to box") {
  const fusemot::NoiseConfig noise;
  const auto box = box_at(Eigen::Vector3d(3, 2, 1), 0.4);
  const auto state = fusemot::init_filter(box, noise);
  bool degenerate = true;
  CHECK(fusemot::state_to_box(state, &degenerate) == box);
  CHECK_FALSE(degenerate);

  auto squashed = state;
  squashed.mean[4] = -0.2;
  const auto clamped = fusemot::state_to_box(squashed, &degenerate);
  CHECK(clamped.height() == 0.01);
  CHECK(degenerate);

  auto boundary = state;
  boundary.mean[fusemot::kYawIndex] = kPi;
  CHECK(fusemot::state_to_box(boundary).yaw == kPi);
}

}  // namespace
