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
 * @file intrinsic.hpp
 * @brief Affine magnetometer distortion B_m = C B_l + H and its estimators.
 *
 * All estimators fit A = [C H] (3x4) from rows x_i = [B_l,i^T 1] and
 * y_i = B_m,i^T:
 *
 *  - solve_ols:    ordinary least squares on (X, Y).
 *  - solve_tls:    total least squares from the truncated SVD of the
 *                  extended matrix G = [Y X].
 *  - solve_wrrtls: weighted ridge regression on the rank-truncated
 *                  reconstruction (Xr, Yr) of G:
 *                      A = Yr^T W^T W Xr (Xr^T W^T W Xr + lambda I)^-1
 *                  The truncation itself runs on W G, so the weights also
 *                  decide which directions count as noise. With W = I this
 *                  is the unweighted ridge-regularized TLS.
 *
 * The homogeneous column carries no noise. It is handled by centering the
 * six field columns, so the mean direction takes one of the tsvd_rank
 * ranks, and it is reset to exact ones after reconstruction.
 */

#pragma once

#include "maglidar/core_types.hpp"

#include <Eigen/Core>

#include <vector>

namespace maglidar {

struct AffineDistortion {
  Mat3 C = Mat3::Identity();
  Vec3 H = Vec3::Zero();  // uT

  static AffineDistortion identity() { return {}; }
  /// A = [C H], 3x4.
  Eigen::Matrix<double, 3, 4> matrix() const;
  static AffineDistortion from_matrix(const Eigen::Matrix<double, 3, 4>& a);

  bool invertible() const;
};

inline constexpr double kMinDistortionDeterminant = 1e-9;
inline constexpr int kDefaultTsvdRank = 4;

/// C b + H.
FieldVec apply(const AffineDistortion& d, const FieldVec& b_l);
/// C^-1 (b_m - H). Throws kSingular when |det C| <= 1e-9.
FieldVec compensate(const AffineDistortion& d, const FieldVec& b_m);

struct RegressionProblem {
  Eigen::Matrix<double, Eigen::Dynamic, 4> X;  // rows [B_l^T 1]
  Eigen::Matrix<double, Eigen::Dynamic, 3> Y;  // rows B_m^T
  Eigen::VectorXd weights;                     // diagonal of W
  double lambda = 0.0;
  int tsvd_rank = kDefaultTsvdRank;

  /// Unit weights, lambda 0.
  static RegressionProblem from_pairs(const std::vector<FieldVec>& b_l,
                                      const std::vector<FieldVec>& b_m);

  Eigen::Index rows() const { return X.rows(); }
  void validate() const;
};

struct SolverDiagnostics {
  double condition_number = 1.0;
  Eigen::VectorXd singular_values;  // retained singular values of G (TLS family)
  double residual_rms = 0.0;        // uT, unweighted over the original data
  double lambda = 0.0;
};

/// Rank-truncated reconstruction of G = [Y X] with the homogeneous column
/// reset. The SVD runs on the weighted, weighted-mean-centered rows.
struct TruncatedData {
  Eigen::Matrix<double, Eigen::Dynamic, 4> X;
  Eigen::Matrix<double, Eigen::Dynamic, 3> Y;
  Eigen::VectorXd singular_values;  // all 7, descending
  int rank = kDefaultTsvdRank;
};

TruncatedData truncate_extended(const RegressionProblem& prob);

AffineDistortion solve_ols(const RegressionProblem& prob, SolverDiagnostics* diag = nullptr);
AffineDistortion solve_tls(const RegressionProblem& prob, SolverDiagnostics* diag = nullptr);
AffineDistortion solve_wrrtls(const RegressionProblem& prob, SolverDiagnostics* diag = nullptr);
/// solve_wrrtls with unit weights.
AffineDistortion solve_rrtls(const RegressionProblem& prob, SolverDiagnostics* diag = nullptr);

/// Weighted ridge solve on already-truncated data; the core of solve_wrrtls.
Eigen::Matrix<double, 3, 4> weighted_ridge(const Eigen::Matrix<double, Eigen::Dynamic, 4>& x,
                                           const Eigen::Matrix<double, Eigen::Dynamic, 3>& y,
                                           const Eigen::VectorXd& weights, double lambda);

/// 16 log-spaced values in [1e-8, 1e2].
std::vector<double> default_lambda_grid();
std::vector<double> log_spaced(double lo, double hi, int count);

struct LCurvePoint {
  double lambda = 0.0;
  double residual_norm = 0.0;  // |W (Xr A^T - Yr)|_F
  double solution_norm = 0.0;  // |A|_F
};

std::vector<LCurvePoint> l_curve(const RegressionProblem& prob, const std::vector<double>& grid);

/// Corner of the L-curve (log residual norm vs log solution norm) by maximum
/// discrete curvature over the weighted, truncated problem. Falls back to the
/// smallest lambda, with a warning, when the curve has no corner.
double select_lambda(const RegressionProblem& prob, const std::vector<double>& grid);

}  // namespace maglidar
