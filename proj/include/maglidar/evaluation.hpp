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
 * @file evaluation.hpp
 * @brief Error metrics and the Monte-Carlo sweeps: per-path accuracy table,
 *        success rate versus initial offset, and the map x solver ablation.
 *
 * Every trial draws its randomness from a seed derived from the sweep seed
 * and the trial's coordinates, so any single row can be regenerated alone.
 */

#pragma once

#include "maglidar/core_types.hpp"
#include "maglidar/extrinsic.hpp"
#include "maglidar/intrinsic.hpp"
#include "maglidar/magmap.hpp"
#include "maglidar/simulator.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace maglidar {

/// Squared Euclidean norm, m^2.
double metric_translation(const Vec3& t_hat, const Vec3& t_gt);
/// Frobenius norm of the difference, unitless.
double metric_distortion(const Mat3& c_hat, const Mat3& c_gt);
/// Squared Euclidean norm, uT^2.
double metric_bias(const Vec3& h_hat, const Vec3& h_gt);

struct ReadingError {
  double mean_sq = 0.0;                     // mean |B_AC - B_MR|^2, uT^2
  Vec3 axis_mean_abs = Vec3::Zero();        // per-axis mean |difference|, uT
  Vec3 axis_mean = Vec3::Zero();            // per-axis signed mean, uT
  Vec3 axis_std = Vec3::Zero();             // per-axis std of the difference, uT
  std::size_t samples = 0;
  std::size_t skipped = 0;                  // outside the validation map
};

/// Compares each reading with the validation map's prediction at the
/// fingerprint position, rotated into the fingerprint's sensor frame.
ReadingError metric_reading_error(const Dataset& calibrated, const FieldMap& validation_map);

/// Calibrated fingerprints: poses become sensor -> map (R, R t + p) and
/// readings are compensated with the estimated distortion.
Dataset apply_calibration(const std::vector<Pose>& lidar_poses,
                          const std::vector<FieldVec>& measurements,
                          const std::vector<double>& timestamps, const Vec3& t_m_l,
                          const AffineDistortion& distortion, const std::string& sensor_id);

struct MetricsReport {
  double e_t = 0.0;  // m^2
  double e_C = 0.0;
  double e_H = 0.0;  // uT^2
  std::optional<ReadingError> reading;
  SuccessClass success = SuccessClass::kFailure;
};

MetricsReport evaluate_against_truth(const CalibrationResult& result, const SensorTruth& truth);

enum class Interpolation { kSgpr, kBilinear };
std::string_view to_string(Interpolation i);
Interpolation interpolation_from_string(std::string_view name);

/// Mapping survey: a noisy lattice sampled from the world with an ideal sensor.
struct MapSpec {
  Box region{Vec3(14.0, 10.5, 0.0), Vec3(31.0, 24.5, 0.0)};
  double spacing = 0.5;  // m, horizontal lattice pitch
  std::vector<double> z_levels{1.5, 1.75, 2.0, 2.25, 2.5};
  double noise_sigma = 0.0;  // uT
  GpHyperparams hyper;
  double block_size = kDefaultBlockSize;
  double block_overlap = kDefaultBlockOverlap;
  std::uint64_t seed = 11;

  void validate() const;
};

Dataset survey(const WorldConfig& world, const MapSpec& spec);
std::shared_ptr<const FieldMap> build_field_map(const Dataset& survey, const MapSpec& spec,
                                                Interpolation interpolation);

/// The five path families over the rack area of the default world, LiDAR
/// 2.45 m above the floor.
std::vector<PathSpec> default_calibration_paths();

struct SweepSpec {
  WorldConfig world = WorldConfig::with_default_dipoles();
  MapSpec map;
  std::vector<PathSpec> paths = default_calibration_paths();
  std::vector<double> noise_levels{0.1};  // uT
  int n_distortions = 50;
  int n_initial_offsets = 1;  // per distortion
  double offset_min = 0.0;    // m
  double offset_range = 1.0;  // m, maximum initial offset radius
  double distortion_scale = 1.0;
  Vec3 lever_arm{0.35, -0.25, -0.45};  // true t_m^l, m
  CalibrationConfig calibration;
  std::uint64_t seed = 1;

  /// Success sweep: offset bin edges (m), ascending.
  std::vector<double> offset_bins{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  /// Ablation: survey lattice pitches (m), dense to sparse.
  std::vector<double> densities{0.5, 1.0, 1.5};
  std::vector<Interpolation> interpolations{Interpolation::kSgpr, Interpolation::kBilinear};
  std::vector<IntrinsicSolver> solvers{IntrinsicSolver::kOls, IntrinsicSolver::kRrtls,
                                       IntrinsicSolver::kWrrtls};

  void validate() const;
};

/// Everything needed to reproduce one calibration trial, plus its outcome.
struct TrialRecord {
  std::string sweep;
  PathSpec path;
  double noise_sigma = 0.0;
  double density = 0.0;  // survey pitch, m
  Interpolation interpolation = Interpolation::kSgpr;
  CalibrationConfig config;
  int trial = 0;
  std::uint64_t trial_seed = 0;

  SensorTruth truth;
  Vec3 t0 = Vec3::Zero();
  double offset = 0.0;  // |t0 - t_gt|, m

  bool ok = false;  // false when calibrate threw
  CalibrationResult result;
  MetricsReport metrics;
  double bias_error = 0.0;  // |H_hat - H_gt|, uT
  std::string error;
};

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

Summary summarize(std::vector<double> values);

struct Table1Cell {
  PathKind path = PathKind::kLawnmower;
  double noise_sigma = 0.0;
  Summary e_t, e_C, e_H;
  std::size_t failures = 0;  // trials where calibrate threw
};

struct SuccessBin {
  double lo = 0.0, hi = 0.0;  // offset radius, m
  std::size_t trials = 0;
  double small = 0.0, medium = 0.0, failure = 0.0;  // fractions
};

struct AblationCell {
  double density = 0.0;
  Interpolation interpolation = Interpolation::kSgpr;
  IntrinsicSolver solver = IntrinsicSolver::kWrrtls;
  Summary bias_error;  // uT
  Summary e_t;
  std::size_t failures = 0;
};

using TrialCallback = std::function<void(const TrialRecord&)>;

struct Table1Report {
  SweepSpec spec;
  std::vector<Table1Cell> cells;
  std::vector<TrialRecord> trials;
};
struct SuccessReport {
  SweepSpec spec;
  std::vector<SuccessBin> bins;
  std::vector<TrialRecord> trials;
};
struct AblationReport {
  SweepSpec spec;
  std::vector<AblationCell> cells;
  std::vector<TrialRecord> trials;
};

/// Runs one trial: draws a distortion and an initial offset, samples the
/// path, and calibrates against `map`. Calibration errors are caught and
/// recorded as failures.
TrialRecord run_trial(const SweepSpec& spec, const std::shared_ptr<const FieldMap>& map,
                      const PathSpec& path, double noise_sigma, std::uint64_t trial_seed,
                      double offset_lo, double offset_hi, const CalibrationConfig& config);

/// Seed for trial `index` of cell `cell` (stable across runs and orderings).
std::uint64_t trial_seed(std::uint64_t sweep_seed, std::uint64_t cell, std::uint64_t index);

Table1Report run_table1_sweep(const SweepSpec& spec, const TrialCallback& on_trial = {});
/// Offsets drawn uniformly in radius within each bin.
SuccessReport run_success_sweep(const SweepSpec& spec, const TrialCallback& on_trial = {});
/// Uses the first path and first noise level of the spec.
AblationReport run_ablation(const SweepSpec& spec, const TrialCallback& on_trial = {});

/// Independent second survey: own seed and 0.1 uT survey noise.
MapSpec default_validation_map();
/// Figure-eight over the calibration area, a different family from the
/// default calibration path.
PathSpec default_validation_path();

struct TwoMapSpec {
  SweepSpec base;  // world, calibration map survey, path, noise, lever arm
  MapSpec validation_map = default_validation_map();
  PathSpec validation_path = default_validation_path();
  std::uint64_t seed = 5;
};

struct TwoMapReport {
  TrialRecord calibration;
  ReadingError uncalibrated;
  ReadingError calibrated;
};

/// Calibrates on one path against the calibration map, then scores the
/// compensated readings of a second path against the validation map.
TwoMapReport run_two_map_workflow(const TwoMapSpec& spec);

}  // namespace maglidar
