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

#include "maglidar/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace maglidar {

namespace {

using Point2 = Eigen::Vector2d;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt_vec(const Vec3& v) {
  std::ostringstream os;
  os << '(' << v.x() << ", " << v.y() << ", " << v.z() << ')';
  return os.str();
}

/// Points every `spacing` meters of arc length along a polyline, starting at
/// its first vertex.
std::vector<Point2> resample(const std::vector<Point2>& vertices, double spacing) {
  std::vector<Point2> out;
  if (vertices.empty()) return out;
  out.push_back(vertices.front());
  double carry = 0.0;  // arc length walked since the last emitted point
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    const Point2 a = vertices[i - 1];
    const Point2 seg = vertices[i] - a;
    const double len = seg.norm();
    if (len <= 0.0) continue;
    double s = spacing - carry;
    while (s <= len + 1e-12) {
      out.push_back(a + seg * (s / len));
      s += spacing;
    }
    carry = len - (s - spacing);
  }
  return out;
}

/// Steps of exactly `spacing` between grid-aligned waypoints.
void walk_axis_aligned(std::vector<Point2>& out, const Point2& to, double spacing) {
  const Point2 from = out.back();
  const Point2 d = to - from;
  const int steps = static_cast<int>(std::lround(d.norm() / spacing));
  for (int k = 1; k <= steps; ++k) out.push_back(from + d * (static_cast<double>(k) / steps));
}

Box horizontal_region(const PathSpec& spec, const WorldConfig& world) {
  const Box usable = world.extent.inflated(-kPathMargin);
  Box r = spec.region;
  const bool empty = (r.max - r.min).head<2>().cwiseAbs().maxCoeff() == 0.0;
  if (empty) r = usable;
  if (r.min.x() >= r.max.x() || r.min.y() >= r.max.y()) {
    throw Error(ErrorCode::kInvalidArgument, "path region is empty");
  }
  if (r.min.x() < usable.min.x() - 1e-9 || r.min.y() < usable.min.y() - 1e-9 ||
      r.max.x() > usable.max.x() + 1e-9 || r.max.y() > usable.max.y() + 1e-9) {
    throw Error(ErrorCode::kInvalidArgument,
                "path region must lie inside the world extent with a 1 m margin");
  }
  return r;
}

std::vector<Point2> lawnmower(const Box& r, double s, double lane) {
  const double w = r.max.x() - r.min.x(), h = r.max.y() - r.min.y();
  const int nx = static_cast<int>(std::floor(w / s + 1e-9));
  const int lane_steps = std::max(1, static_cast<int>(std::lround(lane / s)));
  const int ny = static_cast<int>(std::floor(h / s + 1e-9));
  if (nx < 1 || ny < lane_steps) {
    throw Error(ErrorCode::kInvalidArgument, "region too small for a lawnmower pattern");
  }
  std::vector<Point2> pts{Point2(r.min.x(), r.min.y())};
  int row = 0;
  bool forward = true;
  while (true) {
    const double x_end = forward ? r.min.x() + nx * s : r.min.x();
    walk_axis_aligned(pts, Point2(x_end, pts.back().y()), s);
    if (row + lane_steps > ny) break;
    row += lane_steps;
    walk_axis_aligned(pts, Point2(pts.back().x(), r.min.y() + row * s), s);
    forward = !forward;
  }
  return pts;
}

std::vector<Point2> perimeter(const Box& r, double s) {
  const int nx = static_cast<int>(std::floor((r.max.x() - r.min.x()) / s + 1e-9));
  const int ny = static_cast<int>(std::floor((r.max.y() - r.min.y()) / s + 1e-9));
  if (nx < 1 || ny < 1) throw Error(ErrorCode::kInvalidArgument, "region too small for perimeter");
  const Point2 a(r.min.x(), r.min.y());
  const Point2 b(r.min.x() + nx * s, r.min.y());
  const Point2 c(b.x(), r.min.y() + ny * s);
  const Point2 d(a.x(), c.y());
  std::vector<Point2> pts{a};
  walk_axis_aligned(pts, b, s);
  walk_axis_aligned(pts, c, s);
  walk_axis_aligned(pts, d, s);
  walk_axis_aligned(pts, a, s);
  pts.pop_back();  // the loop closes one step short of the start
  return pts;
}

std::vector<Point2> random_walk(const Box& r, double s, double lane, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> turn(0.0, 0.25);
  std::uniform_real_distribution<double> uni(0.0, kTwoPi);
  const Point2 lo = r.min.head<2>(), hi = r.max.head<2>();
  const Point2 center = 0.5 * (lo + hi);
  const double length = (hi - lo).prod() / lane;
  const int steps = std::max(5, static_cast<int>(length / s));

  std::vector<Point2> pts{center};
  double heading = uni(rng);
  for (int k = 0; k < steps; ++k) {
    heading += turn(rng);
    Point2 next = pts.back() + s * Point2(std::cos(heading), std::sin(heading));
    int attempts = 0;
    while ((next.array() < lo.array()).any() || (next.array() > hi.array()).any()) {
      const Point2 to_center = center - pts.back();
      heading = std::atan2(to_center.y(), to_center.x()) + turn(rng);
      next = pts.back() + s * Point2(std::cos(heading), std::sin(heading));
      if (++attempts > 100) {
        throw Error(ErrorCode::kInvalidArgument, "region too small for a random walk");
      }
    }
    pts.push_back(next);
  }
  return pts;
}

std::vector<Point2> figure_eight(const Box& r, double s) {
  const Point2 lo = r.min.head<2>(), hi = r.max.head<2>();
  const Point2 c = 0.5 * (lo + hi);
  const Point2 half = 0.5 * (hi - lo);
  if (half.minCoeff() < 2.0 * s) {
    throw Error(ErrorCode::kInvalidArgument, "region too small for a figure eight");
  }
  // Gerono lemniscate (sin u, sin 2u), traced once at full size and once at
  // half size; both pass through the center at u = 0.
  std::vector<Point2> dense;
  constexpr int kDense = 4000;
  for (double scale : {1.0, 0.5}) {
    for (int k = 0; k <= kDense; ++k) {
      const double u = kTwoPi * k / kDense;
      dense.emplace_back(c.x() + scale * half.x() * std::sin(u),
                         c.y() + scale * half.y() * std::sin(2.0 * u));
    }
  }
  return resample(dense, s);
}

std::vector<Point2> diagonal_sweep(const Box& r, double s, double lane) {
  const double stroke = 2.0 * lane;
  const double x0 = r.min.x(), x1 = r.max.x(), y0 = r.min.y(), y1 = r.max.y();
  if (x1 - x0 < stroke) throw Error(ErrorCode::kInvalidArgument, "region too small for a sweep");
  std::vector<Point2> v{Point2(x0, y0)};
  bool up = true;
  for (double x = x0 + stroke; x <= x1 + 1e-9; x += stroke) {
    v.emplace_back(x, up ? y1 : y0);
    up = !up;
  }
  return resample(v, s);
}

}  // namespace

void WorldConfig::validate() const {
  if ((extent.max.array() <= extent.min.array()).any()) {
    throw Error(ErrorCode::kInvalidArgument, "world extent is empty");
  }
  const double b = ambient_field.norm();
  if (!(b > 20.0 && b < 70.0)) {
    throw Error(ErrorCode::kInvalidArgument, "ambient field magnitude must lie in (20, 70) uT");
  }
  for (const auto& d : dipoles) {
    if (!extent.contains(d.position) || !d.moment.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "dipole at " + fmt_vec(d.position) + " is outside the world extent");
    }
  }
}

std::vector<Dipole> default_dipole_layout(const Box& extent, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> strength(40.0, 70.0);
  const Vec3 c = extent.center();
  constexpr double kPitch = 3.5;
  std::vector<Dipole> out;
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 4; ++i) {
      Dipole d;
      d.position = Vec3(c.x() + (i - 1.5) * kPitch, c.y() + (j - 1.0) * kPitch, extent.min.z());
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      d.moment = strength(rng) * dir.normalized();
      out.push_back(d);
    }
  }
  return out;
}

WorldConfig WorldConfig::with_default_dipoles() {
  WorldConfig w;
  w.dipoles = default_dipole_layout(w.extent, w.rng_seed);
  return w;
}

FieldVec field_at(const WorldConfig& world, const Position& t) {
  if (!t.allFinite() || !world.extent.contains(t)) {
    throw Error(ErrorCode::kOutOfMap, "position " + fmt_vec(t) + " is outside the world");
  }
  FieldVec b = world.ambient_field;
  for (const auto& d : world.dipoles) {
    const Vec3 r = t - d.position;
    const double dist = r.norm();
    if (dist < kMinDipoleDistance) {
      throw Error(ErrorCode::kTooCloseToDipole,
                  "position " + fmt_vec(t) + " is within 5 cm of a dipole");
    }
    const Vec3 rhat = r / dist;
    b += (3.0 * d.moment.dot(rhat) * rhat - d.moment) / (dist * dist * dist);
  }
  return b;
}

std::string_view to_string(PathKind kind) {
  switch (kind) {
    case PathKind::kLawnmower: return "lawnmower";
    case PathKind::kPerimeter: return "perimeter";
    case PathKind::kRandomWalk: return "random_walk";
    case PathKind::kFigureEight: return "figure_eight";
    case PathKind::kDiagonalSweep: return "diagonal_sweep";
  }
  return "unknown";
}

PathKind path_kind_from_string(std::string_view name) {
  for (PathKind k : kAllPathKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::kParse, "unknown path kind '" + std::string(name) + "'");
}

std::vector<Pose> generate_path(const PathSpec& spec, const WorldConfig& world) {
  if (!(spec.sample_spacing > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sample_spacing must be > 0");
  }
  if (!(spec.lane_spacing > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lane_spacing must be > 0");
  }
  if (spec.z_height <= world.extent.min.z() || spec.z_height >= world.extent.max.z()) {
    throw Error(ErrorCode::kInvalidArgument, "z_height must lie strictly inside the extent");
  }
  const Box r = horizontal_region(spec, world);
  const double s = spec.sample_spacing;

  std::vector<Point2> pts;
  switch (spec.kind) {
    case PathKind::kLawnmower: pts = lawnmower(r, s, spec.lane_spacing); break;
    case PathKind::kPerimeter: pts = perimeter(r, s); break;
    case PathKind::kRandomWalk: pts = random_walk(r, s, spec.lane_spacing, spec.seed); break;
    case PathKind::kFigureEight: pts = figure_eight(r, s); break;
    case PathKind::kDiagonalSweep: pts = diagonal_sweep(r, s, spec.lane_spacing); break;
  }
  if (pts.size() < 2) throw Error(ErrorCode::kInvalidArgument, "path has fewer than 2 poses");

  std::vector<Pose> poses;
  poses.reserve(pts.size());
  double yaw = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i + 1 < pts.size()) {
      const Point2 d = pts[i + 1] - pts[i];
      if (d.norm() > 0.0) yaw = std::atan2(d.y(), d.x());
    }
    poses.emplace_back(rot_z(yaw), Vec3(pts[i].x(), pts[i].y(), spec.z_height), Frame::kLidar,
                       Frame::kMap);
  }
  return poses;
}

void SensorRig::validate() const {
  if (sensors.empty()) throw Error(ErrorCode::kInvalidArgument, "rig has no sensors");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise_sigma must be >= 0");
  for (const auto& s : sensors) {
    if (!(s.t_m_l.norm() <= 2.0)) {
      throw Error(ErrorCode::kInvalidArgument, "sensor lever arm longer than 2 m");
    }
    if (!s.distortion.invertible()) {
      throw Error(ErrorCode::kInvalidArgument, "sensor distortion C is not invertible");
    }
  }
}

SampledData sample_dataset(const WorldConfig& world, const std::vector<Pose>& path,
                           const SensorRig& rig, std::size_t sensor_index, Rng& rng,
                           double sample_period) {
  rig.validate();
  if (sensor_index >= rig.sensors.size()) {
    throw Error(ErrorCode::kInvalidArgument, "sensor index out of range");
  }
  const SensorTruth& truth = rig.sensors[sensor_index];
  std::normal_distribution<double> noise(0.0, 1.0);
  SampledData out;
  out.measured.sensor_id = out.ground_truth.sensor_id = "sensor_" + std::to_string(sensor_index);
  out.measured.samples.reserve(path.size());
  out.ground_truth.samples.reserve(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Pose& pose = path[i];
    const FieldVec b_e = field_at(world, pose.apply(truth.t_m_l));
    const FieldVec b_l = pose.rotation().transpose() * b_e;
    FieldVec b_m = apply(truth.distortion, b_l);
    if (rig.noise_sigma > 0.0) {
      b_m += rig.noise_sigma * Vec3(noise(rng), noise(rng), noise(rng));
    }
    const double ts = static_cast<double>(i) * sample_period;
    out.ground_truth.samples.push_back({ts, pose, b_l});
    out.measured.samples.push_back({ts, pose, b_m});
  }
  return out;
}

AffineDistortion random_distortion(Rng& rng, double scale) {
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "distortion scale must lie in (0, 1]");
  }
  std::uniform_real_distribution<double> m(-0.2, 0.2);
  std::uniform_real_distribution<double> h(-5.0, 5.0);
  for (int draw = 0; draw < 100; ++draw) {
    AffineDistortion d;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) d.C(i, j) = (i == j ? 1.0 : 0.0) + scale * m(rng);
    }
    for (int i = 0; i < 3; ++i) d.H(i) = scale * h(rng);
    if (d.invertible()) return d;
  }
  throw Error(ErrorCode::kSingular, "no invertible distortion in 100 draws");
}

Dataset sample_lattice(const WorldConfig& world, const Box& region, double spacing,
                       const std::vector<double>& z_levels, double noise_sigma, Rng& rng,
                       const std::string& sensor_id) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lattice spacing must be > 0");
  if (z_levels.empty()) throw Error(ErrorCode::kInvalidArgument, "lattice needs z levels");
  std::normal_distribution<double> noise(0.0, 1.0);
  const int nx = static_cast<int>(std::floor((region.max.x() - region.min.x()) / spacing + 1e-9));
  const int ny = static_cast<int>(std::floor((region.max.y() - region.min.y()) / spacing + 1e-9));
  Dataset ds;
  ds.sensor_id = sensor_id;
  double ts = 0.0;
  for (double z : z_levels) {
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i <= nx; ++i) {
        const Position p(region.min.x() + i * spacing, region.min.y() + j * spacing, z);
        FieldVec b = field_at(world, p);
        if (noise_sigma > 0.0) b += noise_sigma * Vec3(noise(rng), noise(rng), noise(rng));
        ds.samples.push_back({ts, Pose(Mat3::Identity(), p, Frame::kMag, Frame::kMap), b});
        ts += 0.1;
      }
    }
  }
  return ds;
}

Vec3 random_offset(Rng& rng, double r_min, double r_max) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> radius(r_min, r_max);
  Vec3 dir;
  do {
    dir = Vec3(gauss(rng), gauss(rng), gauss(rng));
  } while (dir.norm() < 1e-12);
  return radius(rng) * dir.normalized();
}

}  // namespace maglidar
