// Copyright (c) 2026 The maglidar-calib Authors
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

/**
 * @file simulator.hpp
 * @brief Synthetic warehouse: ambient field plus point dipoles, calibration
 *        paths and a distorted, noisy magnetometer rig.
 */

#pragma once

#include "maglidar/core_types.hpp"
#include "maglidar/intrinsic.hpp"
#include "maglidar/magmap.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace maglidar {

using Rng = std::mt19937_64;

struct Dipole {
  Position position = Position::Zero();
  /// Moment in uT*m^3: B(r) = (3 (m . r_hat) r_hat - m) / |r|^3 in uT.
  Vec3 moment = Vec3::Zero();
};

struct WorldConfig {
  Box extent{Vec3(0.0, 0.0, 0.0), Vec3(45.0, 35.0, 3.0)};
  FieldVec ambient_field{20.0, 0.0, -45.0};
  std::vector<Dipole> dipoles;
  std::uint64_t rng_seed = 7;

  /// Extent and ambient field defaults plus the default rack layout.
  static WorldConfig with_default_dipoles();
  void validate() const;
};

/// Twelve dipoles on a 4 x 3 rack grid (3.5 m pitch) centered in `extent`,
/// at floor level, with seeded random moments of 40-70 uT*m^3.
std::vector<Dipole> default_dipole_layout(const Box& extent, std::uint64_t seed);

inline constexpr double kMinDipoleDistance = 0.05;  // m

/// Ambient field plus dipole superposition at `t` (map frame, uT).
FieldVec field_at(const WorldConfig& world, const Position& t);

enum class PathKind { kLawnmower, kPerimeter, kRandomWalk, kFigureEight, kDiagonalSweep };

std::string_view to_string(PathKind kind);
PathKind path_kind_from_string(std::string_view name);
inline constexpr PathKind kAllPathKinds[] = {PathKind::kLawnmower, PathKind::kPerimeter,
                                             PathKind::kRandomWalk, PathKind::kFigureEight,
                                             PathKind::kDiagonalSweep};

struct PathSpec {
  PathKind kind = PathKind::kLawnmower;
  double sample_spacing = 0.5;  // m between consecutive poses
  double z_height = 1.5;        // m, LiDAR height
  /// Horizontal area to cover; must lie inside the world extent with a 1 m
  /// margin. An empty region (min == max) means "extent minus margin".
  Box region;
  double lane_spacing = 2.0;    // lawnmower lanes / diagonal strokes, m
  std::uint64_t seed = 1;       // random walk
};

inline constexpr double kPathMargin = 1.0;  // m

/// LiDAR poses (lidar -> map) along the path, yaw aligned with the motion.
std::vector<Pose> generate_path(const PathSpec& spec, const WorldConfig& world);

struct SensorTruth {
  Vec3 t_m_l = Vec3::Zero();
  AffineDistortion distortion;
};

struct SensorRig {
  std::vector<SensorTruth> sensors;
  double noise_sigma = 0.1;  // uT

  void validate() const;
};

struct SampledData {
  Dataset measured;      // C B_l + H + noise
  Dataset ground_truth;  // B_l, undistorted and noise-free
};

/// Samples the world along `path` for one sensor of the rig. Fingerprint
/// poses are the LiDAR poses; readings are in the sensor frame.
SampledData sample_dataset(const WorldConfig& world, const std::vector<Pose>& path,
                           const SensorRig& rig, std::size_t sensor_index, Rng& rng,
                           double sample_period = 0.1);

/// C = I + scale M with M_ij ~ U[-0.2, 0.2]; H_i ~ U[-5, 5] * scale uT.
/// Redraws non-invertible C (at most 100 draws).
AffineDistortion random_distortion(Rng& rng, double scale = 1.0);

/// Mapping survey: ideal sensor (identity orientation, no distortion) on a
/// lattice over `region` in xy with the given z levels.
Dataset sample_lattice(const WorldConfig& world, const Box& region, double spacing,
                       const std::vector<double>& z_levels, double noise_sigma, Rng& rng,
                       const std::string& sensor_id = "mapping");

/// Uniformly random direction with radius uniform in [r_min, r_max].
Vec3 random_offset(Rng& rng, double r_min, double r_max);

}  // namespace maglidar
