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
 * @file extrinsic.hpp
 * @brief Joint extrinsic/intrinsic calibration of a magnetometer against a
 *        prebuilt field map.
 *
 * For a candidate lever arm t (magnetometer origin in the LiDAR frame) each
 * sample i is projected to the map, t*_i = R_i t + p_i, the map is queried
 * there and the prediction is rotated back into the LiDAR frame,
 * B_l,i = R_i^T M(t*_i). The affine distortion (C, H) then has a closed-form
 * solution, leaving a 3-dof nonlinear least-squares problem in t:
 *
 *     e_i(t) = C B_l,i(t) + H - B_m,i
 *     J_i    = C R_i^T grad M(t*_i) R_i
 *
 * which is solved by Gauss-Newton, re-solving (C, H) at every iterate.
 */

#pragma once

#include "maglidar/core_types.hpp"
#include "maglidar/intrinsic.hpp"
#include "maglidar/magmap.hpp"

#include <Eigen/Core>

#include <memory>
#include <string>
#include <vector>

namespace maglidar {

enum class IntrinsicSolver { kOls, kTls, kRrtls, kWrrtls };
enum class OutOfMapPolicy { kSkipSample, kAbort };

std::string_view to_string(IntrinsicSolver s);
IntrinsicSolver intrinsic_solver_from_string(std::string_view name);

struct LambdaPolicy {
  enum class Kind { kFixed, kLCurve };
  Kind kind = Kind::kFixed;
  double lambda = 1e-6;
  std::vector<double> grid = default_lambda_grid();

  static LambdaPolicy fixed(double value) { return {Kind::kFixed, value, default_lambda_grid()}; }
  static LambdaPolicy l_curve(std::vector<double> g = default_lambda_grid()) {
    return {Kind::kLCurve, 0.0, std::move(g)};
  }
};

struct CalibrationConfig {
  int max_iterations = 100;
  double step_tolerance = 1e-5;  // m
  /// 0 runs plain Gauss-Newton (damped only when the normal matrix is
  /// ill-conditioned). A positive value switches to Levenberg steps with
  /// initial damping `damping * trace(J^T J) / 3`, rejecting any step that
  /// raises the cost.
  double damping = 0.0;
  LambdaPolicy lambda_policy;
  int tsvd_rank = kDefaultTsvdRank;
  OutOfMapPolicy out_of_map_policy = OutOfMapPolicy::kSkipSample;
  IntrinsicSolver solver = IntrinsicSolver::kWrrtls;
  /// Abort when more than this fraction of samples falls outside the map.
  double max_skip_fraction = 0.5;
  /// Floor (uT^2) on the summed predictive variance before inversion.
  double variance_floor = 1e-6;

  void validate() const;
};

struct CalibrationInput {
  std::shared_ptr<const FieldMap> map;
  std::vector<Pose> lidar_poses;     // LiDAR -> map, one per sample
  std::vector<FieldVec> measurements;  // raw magnetometer readings, uT
  Vec3 t0 = Vec3::Zero();

  void validate() const;
};

struct IterationRecord {
  Vec3 t = Vec3::Zero();
  double cost = 0.0;  // mean squared residual norm, uT^2
};

struct CalibrationResult {
  Vec3 t_m_l = Vec3::Zero();
  AffineDistortion distortion;
  bool converged = false;
  int iterations = 0;
  double final_rms = 0.0;  // uT
  std::vector<IterationRecord> trace;
  std::size_t skipped_samples = 0;
  double lambda = 0.0;
  std::string status;
};

/// Map predictions matched to the measurements at a candidate lever arm.
struct Correspondences {
  std::vector<std::size_t> used;   // indices into the input samples
  std::vector<FieldVec> b_l;       // map prediction rotated into the LiDAR frame
  std::vector<FieldVec> b_m;       // measurements
  std::vector<Mat3> gradient;      // map-frame field gradient (when requested)
  Eigen::VectorXd weights;         // normalized to mean 1
  std::size_t skipped = 0;
  bool ill_conditioned = false;    // any map query flagged negative variance
};

Correspondences build_correspondences(const CalibrationInput& input, const Vec3& t,
                                      const CalibrationConfig& config, bool with_gradient);

/// Regression problem from correspondences, lambda resolved per the policy.
RegressionProblem make_problem(const Correspondences& corr, const CalibrationConfig& config);

AffineDistortion solve_intrinsic(const Correspondences& corr, const CalibrationConfig& config,
                                 double* lambda_used = nullptr);

/// Residuals e_i = C B_l,i + H - B_m,i for the samples inside the map.
std::vector<FieldVec> residual(const CalibrationInput& input, const Vec3& t,
                               const AffineDistortion& d, const CalibrationConfig& config = {});

/// Stacked 3N x 3 Jacobian of residual() with respect to t.
Eigen::MatrixX3d jacobian(const CalibrationInput& input, const Vec3& t,
                          const AffineDistortion& d, const CalibrationConfig& config = {});

/// Solves (J^T J + mu I) dt = -J^T e. `damping` is an explicit mu; with 0 a
/// Levenberg term is added only when cond(J^T J) > 1e8, starting at
/// 1e-6 trace / 3 and growing x10. Throws kNonConvergence if the system
/// stays singular.
Vec3 gauss_newton_step(const Eigen::MatrixX3d& jac, const Eigen::VectorXd& e,
                       double damping = 0.0);

CalibrationResult calibrate(const CalibrationInput& input, const CalibrationConfig& config = {});

enum class SuccessClass { kSmall, kMedium, kFailure };
std::string_view to_string(SuccessClass c);

inline constexpr double kSmallErrorRadius = 0.02;   // m
inline constexpr double kMediumErrorRadius = 0.05;  // m

SuccessClass classify_success(const Vec3& t_hat, const Vec3& t_gt);

}  // namespace maglidar
