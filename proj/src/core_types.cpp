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

#include "maglidar/core_types.hpp"

#include <cmath>
#include <sstream>

namespace maglidar {

namespace {

Eigen::Vector4d quaternion_of(const Mat3& r) {
  Eigen::Quaterniond q(r);
  return {q.w(), q.x(), q.y(), q.z()};
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kFrameMismatch: return "FrameMismatch";
    case ErrorCode::kNotOrthonormal: return "NotOrthonormal";
    case ErrorCode::kOutOfMap: return "OutOfMap";
    case ErrorCode::kSingular: return "Singular";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kIrregularGrid: return "IrregularGrid";
    case ErrorCode::kTooCloseToDipole: return "TooCloseToDipole";
    case ErrorCode::kParse: return "Parse";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

std::string_view to_string(Frame frame) {
  switch (frame) {
    case Frame::kMag: return "mag";
    case Frame::kLidar: return "lidar";
    case Frame::kMap: return "map";
  }
  return "unknown";
}

Frame frame_from_string(std::string_view name) {
  if (name == "mag") return Frame::kMag;
  if (name == "lidar") return Frame::kLidar;
  if (name == "map") return Frame::kMap;
  throw Error(ErrorCode::kParse, "unknown frame label '" + std::string(name) + "'");
}

bool all_finite(const Vec3& v) { return v.allFinite(); }
bool all_finite(const Mat3& m) { return m.allFinite(); }

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Mat3 rot_z(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

Pose::Pose(Frame from, Frame to)
    : rotation_(Mat3::Identity()),
      translation_(Vec3::Zero()),
      quaternion_(1.0, 0.0, 0.0, 0.0),
      from_(from),
      to_(to) {}

Pose::Pose(const Mat3& rotation, const Vec3& translation, Frame from, Frame to)
    : rotation_(rotation), translation_(translation), from_(from), to_(to) {
  if (!is_rotation(rotation)) {
    throw Error(ErrorCode::kNotOrthonormal, "pose rotation is not a proper rotation matrix");
  }
  if (!translation.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "pose translation is not finite");
  }
  quaternion_ = quaternion_of(rotation);
}

Pose Pose::from_quaternion(const Eigen::Vector4d& wxyz, const Vec3& translation, Frame from,
                           Frame to) {
  if (!wxyz.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "quaternion is not finite");
  }
  const double norm = wxyz.norm();
  if (std::abs(norm - 1.0) > 1e-6) {
    std::ostringstream os;
    os << "quaternion norm " << norm << " deviates from 1 by more than 1e-6";
    throw Error(ErrorCode::kNotOrthonormal, os.str());
  }
  const Eigen::Vector4d u = wxyz / norm;
  const Eigen::Quaterniond q(u[0], u[1], u[2], u[3]);
  Pose pose(q.toRotationMatrix(), translation, from, to);
  pose.quaternion_ = wxyz;
  return pose;
}

Position Pose::apply(const Position& x) const { return rotation_ * x + translation_; }

Position Pose::apply(const Position& x, Frame x_frame) const {
  if (x_frame != from_) {
    throw Error(ErrorCode::kFrameMismatch,
                "point expressed in '" + std::string(to_string(x_frame)) +
                    "' but pose maps from '" + std::string(to_string(from_)) + "'");
  }
  return apply(x);
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return Pose(rt, -(rt * translation_), to_, from_);
}

Pose operator*(const Pose& outer, const Pose& inner) {
  if (inner.to() != outer.from()) {
    throw Error(ErrorCode::kFrameMismatch,
                "cannot compose: inner maps to '" + std::string(to_string(inner.to())) +
                    "' but outer maps from '" + std::string(to_string(outer.from())) + "'");
  }
  return Pose(outer.rotation() * inner.rotation(),
              outer.rotation() * inner.translation() + outer.translation(), inner.from(),
              outer.to());
}

Position pose_apply(const Pose& p, const Position& x) { return p.apply(x); }

FieldVec rotate_field(const Mat3& r, const FieldVec& b, bool inverse) {
  if (!is_rotation(r)) {
    throw Error(ErrorCode::kNotOrthonormal, "rotate_field needs an orthonormal rotation");
  }
  return inverse ? FieldVec(r.transpose() * b) : FieldVec(r * b);
}

void validate(const Dataset& dataset) {
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (!std::isfinite(s.timestamp) || !s.reading.allFinite() ||
        !s.pose.translation().allFinite()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sample " + std::to_string(i) + " contains non-finite values");
    }
    const double mag = s.reading.norm();
    if (!(mag > 0.0 && mag < kMaxReadingMagnitude)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sample " + std::to_string(i) + " reading magnitude outside (0, 1000) uT");
    }
    if (i > 0 && !(s.timestamp > dataset.samples[i - 1].timestamp)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "timestamps not strictly increasing at sample " + std::to_string(i));
    }
  }
}

}  // namespace maglidar
