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

#include "maglidar/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace maglidar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

void report(const TrialCallback& cb, const TrialRecord& r) {
  if (cb) cb(r);
}

template <typename T>
std::vector<double> collect(const std::vector<TrialRecord>& trials, T&& field) {
  std::vector<double> out;
  for (const auto& t : trials) {
    if (t.ok) out.push_back(field(t));
  }
  return out;
}

}  // namespace

double metric_translation(const Vec3& t_hat, const Vec3& t_gt) { return (t_hat - t_gt).squaredNorm(); }

double metric_distortion(const Mat3& c_hat, const Mat3& c_gt) { return (c_hat - c_gt).norm(); }

double metric_bias(const Vec3& h_hat, const Vec3& h_gt) { return (h_hat - h_gt).squaredNorm(); }

ReadingError metric_reading_error(const Dataset& calibrated, const FieldMap& validation_map) {
  std::vector<Vec3> diffs;
  diffs.reserve(calibrated.samples.size());
  ReadingError out;
  for (const auto& f : calibrated.samples) {
    FieldQuery q;
    try {
      q = validation_map.query(fingerprint_position(f));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kOutOfMap) throw;
      ++out.skipped;
      continue;
    }
    diffs.push_back(f.reading - f.pose.rotation().transpose() * q.mean);
  }
  if (diffs.empty()) {
    throw Error(ErrorCode::kOutOfMap, "no calibrated sample lies inside the validation map");
  }
  const double n = static_cast<double>(diffs.size());
  for (const auto& d : diffs) {
    out.mean_sq += d.squaredNorm() / n;
    out.axis_mean += d / n;
    out.axis_mean_abs += d.cwiseAbs() / n;
  }
  if (diffs.size() > 1) {
    Vec3 var = Vec3::Zero();
    for (const auto& d : diffs) var += (d - out.axis_mean).cwiseAbs2();
    out.axis_std = (var / (n - 1.0)).cwiseSqrt();
  }
  out.samples = diffs.size();
  return out;
}

Dataset apply_calibration(const std::vector<Pose>& lidar_poses,
                          const std::vector<FieldVec>& measurements,
                          const std::vector<double>& timestamps, const Vec3& t_m_l,
                          const AffineDistortion& distortion, const std::string& sensor_id) {
  if (lidar_poses.size() != measurements.size() || timestamps.size() != measurements.size()) {
    throw Error(ErrorCode::kInvalidArgument, "poses, readings and timestamps differ in length");
  }
  Dataset out;
  out.sensor_id = sensor_id;
  out.samples.reserve(measurements.size());
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    const Pose& p = lidar_poses[i];
    out.samples.push_back({timestamps[i],
                           Pose(p.rotation(), p.apply(t_m_l), Frame::kMag, Frame::kMap),
                           compensate(distortion, measurements[i])});
  }
  return out;
}

MetricsReport evaluate_against_truth(const CalibrationResult& result, const SensorTruth& truth) {
  MetricsReport m;
  m.e_t = metric_translation(result.t_m_l, truth.t_m_l);
  m.e_C = metric_distortion(result.distortion.C, truth.distortion.C);
  m.e_H = metric_bias(result.distortion.H, truth.distortion.H);
  m.success = classify_success(result.t_m_l, truth.t_m_l);
  return m;
}

std::string_view to_string(Interpolation i) {
  return i == Interpolation::kSgpr ? "sgpr" : "bilinear";
}

Interpolation interpolation_from_string(std::string_view name) {
  if (name == "sgpr" || name == "s-gpr") return Interpolation::kSgpr;
  if (name == "bilinear") return Interpolation::kBilinear;
  throw Error(ErrorCode::kParse, "unknown interpolation '" + std::string(name) + "'");
}

void MapSpec::validate() const {
  check(spacing > 0.0, "map spacing must be > 0");
  check(!z_levels.empty(), "map needs at least one z level");
  check(std::is_sorted(z_levels.begin(), z_levels.end()) &&
            std::adjacent_find(z_levels.begin(), z_levels.end()) == z_levels.end(),
        "map z levels must be strictly increasing");
  check(region.max.x() > region.min.x() && region.max.y() > region.min.y(),
        "map region is empty");
  check(noise_sigma >= 0.0, "map noise_sigma must be >= 0");
  check(block_size > 0.0 && block_overlap >= 0.0, "invalid block size or overlap");
  hyper.validate();
}

Dataset survey(const WorldConfig& world, const MapSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  return sample_lattice(world, spec.region, spec.spacing, spec.z_levels, spec.noise_sigma, rng,
                        "survey");
}

std::shared_ptr<const FieldMap> build_field_map(const Dataset& fingerprints, const MapSpec& spec,
                                                Interpolation interpolation) {
  if (interpolation == Interpolation::kBilinear) {
    return std::make_shared<GridMap>(GridMap::build(fingerprints));
  }
  return std::make_shared<MagMap>(
      MagMap::build(fingerprints, spec.hyper, spec.block_size, spec.block_overlap));
}

std::vector<PathSpec> default_calibration_paths() {
  std::vector<PathSpec> out;
  for (PathKind kind : kAllPathKinds) {
    PathSpec p;
    p.kind = kind;
    p.z_height = 2.45;
    p.region = Box{Vec3(16.5, 13.0, 0.0), Vec3(28.5, 22.0, 0.0)};
    // Diagonal strokes revisit little of the area; denser sampling keeps H observable.
    if (kind == PathKind::kDiagonalSweep) p.sample_spacing = 0.25;
    out.push_back(p);
  }
  return out;
}

MapSpec default_validation_map() {
  MapSpec m;
  m.noise_sigma = 0.1;
  m.seed = 23;
  return m;
}

PathSpec default_validation_path() {
  PathSpec p = default_calibration_paths().front();
  p.kind = PathKind::kFigureEight;
  return p;
}

void SweepSpec::validate() const {
  world.validate();
  map.validate();
  calibration.validate();
  check(!paths.empty(), "sweep needs at least one path");
  check(!noise_levels.empty(), "sweep needs at least one noise level");
  for (double s : noise_levels) check(s >= 0.0, "noise levels must be >= 0");
  check(n_distortions >= 1 && n_initial_offsets >= 1, "trial counts must be >= 1");
  check(offset_min >= 0.0 && offset_range >= offset_min, "need 0 <= offset_min <= offset_range");
  check(distortion_scale > 0.0 && distortion_scale <= 1.0, "distortion_scale must lie in (0, 1]");
  check(lever_arm.norm() <= 2.0, "lever arm longer than 2 m");
  check(offset_bins.size() >= 2 && std::is_sorted(offset_bins.begin(), offset_bins.end()) &&
            offset_bins.front() >= 0.0,
        "offset_bins must be >= 2 ascending non-negative edges");
  check(!densities.empty(), "ablation needs at least one density");
  for (double d : densities) check(d > 0.0, "densities must be > 0");
  check(!interpolations.empty() && !solvers.empty(), "ablation needs interpolations and solvers");
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) {
    s.mean = s.std = s.median = s.min = s.max = kNaN;
    return s;
  }
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  s.min = values.front();
  s.max = values.back();
  return s;
}

std::uint64_t trial_seed(std::uint64_t sweep_seed, std::uint64_t cell, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(sweep_seed), static_cast<std::uint32_t>(sweep_seed >> 32),
                    static_cast<std::uint32_t>(cell), static_cast<std::uint32_t>(index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

TrialRecord run_trial(const SweepSpec& spec, const std::shared_ptr<const FieldMap>& map,
                      const PathSpec& path, double noise_sigma, std::uint64_t seed,
                      double offset_lo, double offset_hi, const CalibrationConfig& config) {
  TrialRecord r;
  r.path = path;
  r.noise_sigma = noise_sigma;
  r.density = spec.map.spacing;
  r.config = config;
  r.trial_seed = seed;

  Rng rng(seed);
  r.truth.t_m_l = spec.lever_arm;
  r.truth.distortion = random_distortion(rng, spec.distortion_scale);
  r.t0 = r.truth.t_m_l + random_offset(rng, offset_lo, offset_hi);
  r.offset = (r.t0 - r.truth.t_m_l).norm();

  SensorRig rig;
  rig.sensors = {r.truth};
  rig.noise_sigma = noise_sigma;
  const std::vector<Pose> poses = generate_path(path, spec.world);
  const SampledData data = sample_dataset(spec.world, poses, rig, 0, rng);

  CalibrationInput input;
  input.map = map;
  input.lidar_poses = poses;
  input.t0 = r.t0;
  for (const auto& f : data.measured.samples) input.measurements.push_back(f.reading);

  try {
    r.result = calibrate(input, config);
    r.ok = true;
    r.metrics = evaluate_against_truth(r.result, r.truth);
    r.bias_error = std::sqrt(r.metrics.e_H);
  } catch (const Error& err) {
    r.ok = false;
    r.error = err.what();
    r.metrics.e_t = r.metrics.e_C = r.metrics.e_H = kNaN;
    r.bias_error = kNaN;
    r.metrics.success = SuccessClass::kFailure;
  }
  return r;
}

Table1Report run_table1_sweep(const SweepSpec& spec, const TrialCallback& on_trial) {
  spec.validate();
  Table1Report rep;
  rep.spec = spec;
  const auto map = build_field_map(survey(spec.world, spec.map), spec.map, Interpolation::kSgpr);
  const int per_cell = spec.n_distortions * spec.n_initial_offsets;
  std::uint64_t cell = 0;
  for (const auto& path : spec.paths) {
    for (double noise : spec.noise_levels) {
      std::vector<TrialRecord> trials;
      for (int k = 0; k < per_cell; ++k) {
        TrialRecord r = run_trial(spec, map, path, noise, trial_seed(spec.seed, cell, k),
                                  spec.offset_min, spec.offset_range, spec.calibration);
        r.sweep = "table1";
        r.trial = k;
        report(on_trial, r);
        trials.push_back(std::move(r));
      }
      Table1Cell c;
      c.path = path.kind;
      c.noise_sigma = noise;
      c.e_t = summarize(collect(trials, [](const TrialRecord& t) { return t.metrics.e_t; }));
      c.e_C = summarize(collect(trials, [](const TrialRecord& t) { return t.metrics.e_C; }));
      c.e_H = summarize(collect(trials, [](const TrialRecord& t) { return t.metrics.e_H; }));
      c.failures = static_cast<std::size_t>(
          std::count_if(trials.begin(), trials.end(), [](const TrialRecord& t) { return !t.ok; }));
      rep.cells.push_back(c);
      rep.trials.insert(rep.trials.end(), trials.begin(), trials.end());
      ++cell;
    }
  }
  return rep;
}

SuccessReport run_success_sweep(const SweepSpec& spec, const TrialCallback& on_trial) {
  spec.validate();
  SuccessReport rep;
  rep.spec = spec;
  const auto map = build_field_map(survey(spec.world, spec.map), spec.map, Interpolation::kSgpr);
  const PathSpec& path = spec.paths.front();
  const double noise = spec.noise_levels.front();
  const int per_bin = spec.n_distortions * spec.n_initial_offsets;
  for (std::size_t b = 0; b + 1 < spec.offset_bins.size(); ++b) {
    SuccessBin bin;
    bin.lo = spec.offset_bins[b];
    bin.hi = spec.offset_bins[b + 1];
    std::size_t small = 0, medium = 0;
    for (int k = 0; k < per_bin; ++k) {
      TrialRecord r = run_trial(spec, map, path, noise, trial_seed(spec.seed, b, k), bin.lo,
                                bin.hi, spec.calibration);
      r.sweep = "success";
      r.trial = k;
      report(on_trial, r);
      if (r.metrics.success == SuccessClass::kSmall) ++small;
      if (r.metrics.success == SuccessClass::kMedium) ++medium;
      rep.trials.push_back(std::move(r));
    }
    bin.trials = static_cast<std::size_t>(per_bin);
    bin.small = static_cast<double>(small) / per_bin;
    bin.medium = static_cast<double>(medium) / per_bin;
    bin.failure = 1.0 - bin.small - bin.medium;
    rep.bins.push_back(bin);
  }
  return rep;
}

AblationReport run_ablation(const SweepSpec& spec, const TrialCallback& on_trial) {
  spec.validate();
  AblationReport rep;
  rep.spec = spec;
  const PathSpec& path = spec.paths.front();
  const double noise = spec.noise_levels.front();
  const int per_cell = spec.n_distortions * spec.n_initial_offsets;
  for (std::size_t di = 0; di < spec.densities.size(); ++di) {
    SweepSpec local = spec;
    local.map.spacing = spec.densities[di];
    const Dataset fingerprints = survey(spec.world, local.map);
    for (Interpolation interp : spec.interpolations) {
      const auto map = build_field_map(fingerprints, local.map, interp);
      for (IntrinsicSolver solver : spec.solvers) {
        CalibrationConfig config = spec.calibration;
        config.solver = solver;
        std::vector<TrialRecord> trials;
        for (int k = 0; k < per_cell; ++k) {
          // Same seed across interpolations and solvers: paired comparisons.
          TrialRecord r = run_trial(local, map, path, noise, trial_seed(spec.seed, di, k),
                                    spec.offset_min, spec.offset_range, config);
          r.sweep = "ablation";
          r.trial = k;
          r.interpolation = interp;
          report(on_trial, r);
          trials.push_back(std::move(r));
        }
        AblationCell c;
        c.density = local.map.spacing;
        c.interpolation = interp;
        c.solver = solver;
        c.bias_error = summarize(collect(trials, [](const TrialRecord& t) { return t.bias_error; }));
        c.e_t = summarize(collect(trials, [](const TrialRecord& t) { return t.metrics.e_t; }));
        c.failures = static_cast<std::size_t>(std::count_if(
            trials.begin(), trials.end(), [](const TrialRecord& t) { return !t.ok; }));
        rep.cells.push_back(c);
        rep.trials.insert(rep.trials.end(), trials.begin(), trials.end());
      }
    }
  }
  return rep;
}

TwoMapReport run_two_map_workflow(const TwoMapSpec& spec) {
  const SweepSpec& base = spec.base;
  base.validate();
  TwoMapReport rep;
  const auto cal_map =
      build_field_map(survey(base.world, base.map), base.map, Interpolation::kSgpr);
  const auto val_map = build_field_map(survey(base.world, spec.validation_map),
                                       spec.validation_map, Interpolation::kSgpr);

  rep.calibration = run_trial(base, cal_map, base.paths.front(), base.noise_levels.front(),
                              trial_seed(spec.seed, 0, 0), base.offset_min, base.offset_range,
                              base.calibration);
  rep.calibration.sweep = "two_map";
  if (!rep.calibration.ok) {
    throw Error(ErrorCode::kNonConvergence, "two-map calibration failed: " + rep.calibration.error);
  }

  // Fresh readings of the same sensor along the validation path.
  Rng rng(trial_seed(spec.seed, 1, 0));
  SensorRig rig;
  rig.sensors = {rep.calibration.truth};
  rig.noise_sigma = base.noise_levels.front();
  const std::vector<Pose> poses = generate_path(spec.validation_path, base.world);
  const SampledData data = sample_dataset(base.world, poses, rig, 0, rng);
  std::vector<FieldVec> raw;
  std::vector<double> stamps;
  for (const auto& f : data.measured.samples) {
    raw.push_back(f.reading);
    stamps.push_back(f.timestamp);
  }
  const Dataset before = apply_calibration(poses, raw, stamps, rep.calibration.t0,
                                           AffineDistortion::identity(), "uncalibrated");
  const Dataset after = apply_calibration(poses, raw, stamps, rep.calibration.result.t_m_l,
                                          rep.calibration.result.distortion, "calibrated");
  rep.uncalibrated = metric_reading_error(before, *val_map);
  rep.calibrated = metric_reading_error(after, *val_map);
  return rep;
}

}  // namespace maglidar
