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
 * @file core_types.hpp
 * @brief Frame-labeled geometric and magnetic primitives.
 *
 * Units are fixed across the library: positions in meters, magnetic field in
 * microtesla (uT). Rotations are held as matrices; quaternions are only
 * accepted at the file boundary.
 */

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace maglidar {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Position in meters.
using Position = Vec3;
/// Magnetic field vector in microtesla.
using FieldVec = Vec3;

enum class ErrorCode {
  kInvalidArgument,
  kFrameMismatch,
  kNotOrthonormal,
  kOutOfMap,
  kSingular,
  kRankDeficient,
  kNonConvergence,
  kIrregularGrid,
  kTooCloseToDipole,
  kParse,
};

std::string_view to_string(ErrorCode code);

/// Every failure in the library is reported through this type; the code
/// lets callers branch (e.g. skip a sample on kOutOfMap) without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Frame { kMag, kLidar, kMap };

std::string_view to_string(Frame frame);
Frame frame_from_string(std::string_view name);

bool all_finite(const Vec3& v);
bool all_finite(const Mat3& m);

/// True when R^T R = I and det R = +1, both to `tol`.
bool is_rotation(const Mat3& r, double tol = 1e-9);

Mat3 rot_z(double yaw);

/// Rigid transform mapping coordinates expressed in `from` into `to`.
class Pose {
 public:
  /// Identity transform between two frames.
  Pose(Frame from = Frame::kMap, Frame to = Frame::kMap);
  Pose(const Mat3& rotation, const Vec3& translation, Frame from, Frame to);

  /// Quaternion order is (w, x, y, z). Rejects |q| deviating from 1 by more
  /// than 1e-6. The quaternion is kept verbatim for serialization.
  static Pose from_quaternion(const Eigen::Vector4d& wxyz, const Vec3& translation,
                              Frame from, Frame to);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  /// (w, x, y, z), as supplied or derived from the rotation matrix.
  const Eigen::Vector4d& quaternion() const { return quaternion_; }
  Frame from() const { return from_; }
  Frame to() const { return to_; }

  /// R x + t.
  Position apply(const Position& x) const;
  /// Checked variant: `x_frame` must equal from().
  Position apply(const Position& x, Frame x_frame) const;

  Pose inverse() const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
  Eigen::Vector4d quaternion_;
  Frame from_;
  Frame to_;
};

/// Composition `outer * inner`: inner maps a->b, outer maps b->c.
Pose operator*(const Pose& outer, const Pose& inner);

Position pose_apply(const Pose& p, const Position& x);

/// R b, or R^T b with `inverse` set. Rejects non-orthonormal R.
FieldVec rotate_field(const Mat3& r, const FieldVec& b, bool inverse = false);

struct Fingerprint {
  double timestamp = 0.0;
  Pose pose;
  FieldVec reading = FieldVec::Zero();
};

/// Sanity bound on reading magnitude (uT), exclusive on both ends.
inline constexpr double kMaxReadingMagnitude = 1000.0;
inline constexpr std::size_t kMinIntrinsicSamples = 5;

struct Dataset {
  std::string sensor_id;
  std::vector<Fingerprint> samples;

  std::size_t size() const { return samples.size(); }
};

/// Throws kInvalidArgument if timestamps are not strictly increasing, a
/// value is non-finite, or a reading violates the magnitude bound.
void validate(const Dataset& dataset);

}  // namespace maglidar
