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

#include "maglidar/intrinsic.hpp"

#include "maglidar/log.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace maglidar {

namespace {

using MatX4 = Eigen::Matrix<double, Eigen::Dynamic, 4>;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Mat34 = Eigen::Matrix<double, 3, 4>;

constexpr double kRankDeficientCondition = 1e12;

double condition_of(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

double residual_rms(const RegressionProblem& prob, const Mat34& a) {
  const MatX3 r = prob.X * a.transpose() - prob.Y;
  return std::sqrt(r.squaredNorm() / static_cast<double>(prob.rows()));
}

/// Centered [Y X_fields] block; the homogeneous column is handled exactly.
struct Centered {
  Eigen::Matrix<double, Eigen::Dynamic, 6> data;
  Eigen::Matrix<double, 1, 6> mean;
};

/// Weighted centering: the mean uses the squared weights of W^T W and the
/// rows are scaled by W afterwards.
Centered center(const RegressionProblem& prob) {
  Centered c;
  c.data.resize(prob.rows(), 6);
  c.data.leftCols<3>() = prob.Y;
  c.data.rightCols<3>() = prob.X.leftCols<3>();
  const Eigen::VectorXd w2 = prob.weights.array().square();
  c.mean = (w2.transpose() * c.data) / w2.sum();
  c.data.rowwise() -= c.mean;
  c.data = prob.weights.asDiagonal() * c.data;
  return c;
}

RegressionProblem with_unit_weights(const RegressionProblem& prob) {
  RegressionProblem out = prob;
  out.weights = Eigen::VectorXd::Ones(prob.rows());
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Eigen::Matrix<double, 3, 4> AffineDistortion::matrix() const {
  Mat34 a;
  a.leftCols<3>() = C;
  a.col(3) = H;
  return a;
}

AffineDistortion AffineDistortion::from_matrix(const Eigen::Matrix<double, 3, 4>& a) {
  return AffineDistortion{a.leftCols<3>(), a.col(3)};
}

bool AffineDistortion::invertible() const {
  return C.allFinite() && std::abs(C.determinant()) > kMinDistortionDeterminant;
}

FieldVec apply(const AffineDistortion& d, const FieldVec& b_l) { return d.C * b_l + d.H; }

FieldVec compensate(const AffineDistortion& d, const FieldVec& b_m) {
  if (!d.invertible()) {
    throw Error(ErrorCode::kSingular,
                "distortion matrix C is near-singular (|det C| = " +
                    fmt(std::abs(d.C.determinant())) + ")");
  }
  return d.C.partialPivLu().solve(b_m - d.H);
}

RegressionProblem RegressionProblem::from_pairs(const std::vector<FieldVec>& b_l,
                                                const std::vector<FieldVec>& b_m) {
  if (b_l.size() != b_m.size()) {
    throw Error(ErrorCode::kInvalidArgument, "regression pairs have different lengths");
  }
  RegressionProblem p;
  const auto n = static_cast<Eigen::Index>(b_l.size());
  p.X.resize(n, 4);
  p.Y.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.X.row(i) << b_l[i].transpose(), 1.0;
    p.Y.row(i) = b_m[i].transpose();
  }
  p.weights = Eigen::VectorXd::Ones(n);
  return p;
}

void RegressionProblem::validate() const {
  const auto n = X.rows();
  if (Y.rows() != n || weights.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "X, Y and weights must have the same row count");
  }
  if (n < static_cast<Eigen::Index>(kMinIntrinsicSamples)) {
    throw Error(ErrorCode::kInvalidArgument,
                "intrinsic solve needs at least 5 samples, got " + std::to_string(n));
  }
  if (!X.allFinite() || !Y.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "regression data contains non-finite values");
  }
  if (!weights.allFinite() || weights.minCoeff() <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "weights must be finite and > 0");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be finite and >= 0");
  }
  if (tsvd_rank < 1 || tsvd_rank > 7) {
    throw Error(ErrorCode::kInvalidArgument, "tsvd_rank must lie in [1, 7]");
  }
}

AffineDistortion solve_ols(const RegressionProblem& prob, SolverDiagnostics* diag) {
  prob.validate();
  const double cond = condition_of(prob.X);
  if (!(cond < kRankDeficientCondition)) {
    throw Error(ErrorCode::kRankDeficient,
                "design matrix is rank deficient (condition number " + fmt(cond) + ")");
  }
  const MatX3 at = prob.X.colPivHouseholderQr().solve(prob.Y);
  const Mat34 a = at.transpose();
  if (diag) {
    diag->condition_number = cond;
    diag->singular_values.resize(0);
    diag->residual_rms = residual_rms(prob, a);
    diag->lambda = 0.0;
  }
  return AffineDistortion::from_matrix(a);
}

TruncatedData truncate_extended(const RegressionProblem& prob) {
  prob.validate();
  const Centered c = center(prob);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c.data, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const int keep = prob.tsvd_rank - 1;  // the mean/ones direction takes one rank

  Eigen::Matrix<double, Eigen::Dynamic, 6> recon(prob.rows(), 6);
  recon.setZero();
  if (keep > 0) {
    recon = prob.weights.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(keep) *
            svd.singularValues().head(keep).asDiagonal() * svd.matrixV().leftCols(keep).transpose();
  }
  recon.rowwise() += c.mean;

  TruncatedData out;
  out.rank = prob.tsvd_rank;
  out.Y = recon.leftCols<3>();
  out.X.resize(prob.rows(), 4);
  out.X.leftCols<3>() = recon.rightCols<3>();
  out.X.col(3).setOnes();

  Eigen::MatrixXd g(prob.rows(), 7);
  g << prob.Y, prob.X;
  out.singular_values = Eigen::JacobiSVD<Eigen::MatrixXd>(g).singularValues();
  return out;
}

AffineDistortion solve_tls(const RegressionProblem& weighted, SolverDiagnostics* diag) {
  weighted.validate();
  const RegressionProblem prob = with_unit_weights(weighted);
  if (prob.rows() < 7) {
    throw Error(ErrorCode::kInvalidArgument, "TLS needs at least 7 samples");
  }
  const Centered c = center(prob);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c.data, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const int keep = prob.tsvd_rank - 1;

  Mat34 a;
  if (keep <= 3) {
    // Trailing right-singular subspace V2 satisfies [Yc Xc] V2 ~ 0, hence
    // C^T V2_y = -V2_x.
    if (keep > 0 && s(keep - 1) - s(keep) <= 1e-12 * s(0)) {
      throw Error(ErrorCode::kSingular,
                  "TLS solution is not unique: singular values at the truncation point coincide");
    }
    const Eigen::MatrixXd v2 = svd.matrixV().rightCols(6 - keep);
    const Eigen::MatrixXd vy = v2.topRows(3);
    const Eigen::MatrixXd vx = v2.bottomRows(3);
    Eigen::JacobiSVD<Eigen::MatrixXd> vsvd(vy, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& vs = vsvd.singularValues();
    if (vs(vs.size() - 1) < 1e-12) {
      throw Error(ErrorCode::kSingular,
                  "TLS solution is not unique: trailing subspace is degenerate in the "
                  "observation block");
    }
    const Eigen::MatrixXd vy_pinv =
        vsvd.matrixV() * vs.cwiseInverse().asDiagonal() * vsvd.matrixU().transpose();
    const Mat3 cmat = (-vx * vy_pinv).transpose();
    a.leftCols<3>() = cmat;
    a.col(3) = c.mean.head<3>().transpose() - cmat * c.mean.tail<3>().transpose();
  } else {
    const TruncatedData td = truncate_extended(prob);
    a = weighted_ridge(td.X, td.Y, Eigen::VectorXd::Ones(prob.rows()), 0.0);
  }

  if (diag) {
    diag->condition_number = s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1)
                                                  : std::numeric_limits<double>::infinity();
    diag->singular_values = s.head(std::max(keep, 0));
    diag->residual_rms = residual_rms(prob, a);
    diag->lambda = 0.0;
  }
  return AffineDistortion::from_matrix(a);
}

Eigen::Matrix<double, 3, 4> weighted_ridge(const Eigen::Matrix<double, Eigen::Dynamic, 4>& x,
                                           const Eigen::Matrix<double, Eigen::Dynamic, 3>& y,
                                           const Eigen::VectorXd& weights, double lambda) {
  const Eigen::VectorXd w2 = weights.array().square();
  const Eigen::Matrix4d m =
      x.transpose() * w2.asDiagonal() * x + lambda * Eigen::Matrix4d::Identity();
  const Eigen::Matrix<double, 4, 3> rhs = x.transpose() * w2.asDiagonal() * y;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(m);
  const auto& ev = eig.eigenvalues();
  if (!(ev(0) > 1e-13 * ev(3)) || !(ev(3) > 0.0)) {
    throw Error(ErrorCode::kSingular,
                "X^T W^T W X + lambda I is numerically singular (lambda = " + fmt(lambda) +
                    "); use a larger lambda");
  }
  const Eigen::Matrix<double, 4, 3> at = m.ldlt().solve(rhs);
  return at.transpose();
}

AffineDistortion solve_wrrtls(const RegressionProblem& prob, SolverDiagnostics* diag) {
  const TruncatedData td = truncate_extended(prob);
  const Mat34 a = weighted_ridge(td.X, td.Y, prob.weights, prob.lambda);
  if (diag) {
    diag->condition_number = condition_of(prob.weights.asDiagonal() * td.X);
    diag->singular_values = td.singular_values.head(td.rank);
    diag->residual_rms = residual_rms(prob, a);
    diag->lambda = prob.lambda;
  }
  return AffineDistortion::from_matrix(a);
}

AffineDistortion solve_rrtls(const RegressionProblem& prob, SolverDiagnostics* diag) {
  return solve_wrrtls(with_unit_weights(prob), diag);
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) {
    throw Error(ErrorCode::kInvalidArgument, "log_spaced needs count >= 1 and 0 < lo <= hi");
  }
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i) out[i] = std::pow(10.0, a + (b - a) * i / (count - 1));
  return out;
}

std::vector<double> default_lambda_grid() { return log_spaced(1e-8, 1e2, 16); }

std::vector<LCurvePoint> l_curve(const RegressionProblem& prob, const std::vector<double>& grid) {
  const TruncatedData td = truncate_extended(prob);
  std::vector<LCurvePoint> pts;
  pts.reserve(grid.size());
  for (double lambda : grid) {
    const Mat34 a = weighted_ridge(td.X, td.Y, prob.weights, lambda);
    const MatX3 r = prob.weights.asDiagonal() * (td.X * a.transpose() - td.Y);
    pts.push_back({lambda, r.norm(), a.norm()});
  }
  return pts;
}

double select_lambda(const RegressionProblem& prob, const std::vector<double>& grid_in) {
  if (grid_in.empty()) throw Error(ErrorCode::kInvalidArgument, "lambda grid is empty");
  std::vector<double> grid = grid_in;
  std::sort(grid.begin(), grid.end());
  if (grid.size() == 1) return grid.front();
  if (grid.size() < 3) {
    warn("L-curve needs at least 3 lambda values; using the smallest");
    return grid.front();
  }

  const auto pts = l_curve(prob, grid);
  const auto n = pts.size();
  std::vector<Eigen::Vector2d> p(n);
  constexpr double kFloor = 1e-300;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = {std::log10(std::max(pts[i].residual_norm, kFloor)),
            std::log10(std::max(pts[i].solution_norm, kFloor))};
  }

  // Signed Menger curvature; with lambda increasing the curve runs down the
  // steep leg and then right along the flat leg, a counter-clockwise turn.
  double best_kappa = 0.0;
  std::size_t best = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const Eigen::Vector2d u = p[i] - p[i - 1];
    const Eigen::Vector2d v = p[i + 1] - p[i];
    const Eigen::Vector2d w = p[i + 1] - p[i - 1];
    const double lu = u.norm(), lv = v.norm(), lw = w.norm();
    if (lu < 1e-9 || lv < 1e-9 || lw < 1e-9) continue;
    const double kappa = 2.0 * (u.x() * v.y() - u.y() * v.x()) / (lu * lv * lw);
    if (kappa <= 0.0) continue;
    // A corner needs a steep leg before it: the solution norm must fall
    // faster than the residual grows.
    const double drop = p[0].y() - p[i].y();
    const double rise = p[i].x() - p[0].x();
    if (drop < 1e-3 || drop < rise) continue;
    if (kappa > best_kappa) {
      best_kappa = kappa;
      best = i;
    }
  }
  if (best_kappa <= 0.0) {
    warn("L-curve has no corner; using the smallest lambda");
    return grid.front();
  }
  return grid[best];
}

}  // namespace maglidar
