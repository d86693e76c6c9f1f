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

#include "maglidar/extrinsic.hpp"

#include "maglidar/log.hpp"

#include <Eigen/Eigenvalues>

#include <limits>
#include <cmath>
#include <sstream>

namespace maglidar {

namespace {

constexpr double kIllConditioned = 1e8;
constexpr int kMaxDampingEscalations = 30;
constexpr int kMaxRejectedSteps = 20;
constexpr double kCostSlack = 1e-9;

double mean_sq(const std::vector<FieldVec>& e) {
  if (e.empty()) return 0.0;
  double s = 0.0;
  for (const auto& v : e) s += v.squaredNorm();
  return s / static_cast<double>(e.size());
}

std::vector<FieldVec> residuals_of(const Correspondences& corr, const AffineDistortion& d) {
  std::vector<FieldVec> e(corr.b_l.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = d.C * corr.b_l[i] + d.H - corr.b_m[i];
  return e;
}

Eigen::MatrixX3d jacobian_of(const CalibrationInput& input, const Correspondences& corr,
                             const AffineDistortion& d) {
  Eigen::MatrixX3d jac(3 * static_cast<Eigen::Index>(corr.used.size()), 3);
  for (std::size_t k = 0; k < corr.used.size(); ++k) {
    const Mat3& r = input.lidar_poses[corr.used[k]].rotation();
    jac.block<3, 3>(3 * static_cast<Eigen::Index>(k), 0) =
        d.C * r.transpose() * corr.gradient[k] * r;
  }
  return jac;
}

Eigen::VectorXd stack(const std::vector<FieldVec>& e) {
  Eigen::VectorXd out(3 * static_cast<Eigen::Index>(e.size()));
  for (std::size_t i = 0; i < e.size(); ++i) out.segment<3>(3 * static_cast<Eigen::Index>(i)) = e[i];
  return out;
}

void require_invertible(const AffineDistortion& d) {
  if (!d.invertible()) {
    throw Error(ErrorCode::kInvalidArgument, "distortion matrix C must be invertible");
  }
}

}  // namespace

std::string_view to_string(IntrinsicSolver s) {
  switch (s) {
    case IntrinsicSolver::kOls: return "ols";
    case IntrinsicSolver::kTls: return "tls";
    case IntrinsicSolver::kRrtls: return "rrtls";
    case IntrinsicSolver::kWrrtls: return "wrrtls";
  }
  return "unknown";
}

IntrinsicSolver intrinsic_solver_from_string(std::string_view name) {
  if (name == "ols") return IntrinsicSolver::kOls;
  if (name == "tls") return IntrinsicSolver::kTls;
  if (name == "rrtls") return IntrinsicSolver::kRrtls;
  if (name == "wrrtls" || name == "w-rrtls") return IntrinsicSolver::kWrrtls;
  throw Error(ErrorCode::kParse, "unknown intrinsic solver '" + std::string(name) + "'");
}

void CalibrationConfig::validate() const {
  if (max_iterations < 1) throw Error(ErrorCode::kInvalidArgument, "max_iterations must be >= 1");
  if (!(step_tolerance > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "step_tolerance must be > 0");
  }
  if (!(damping >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "damping must be >= 0");
  if (tsvd_rank < 1 || tsvd_rank > 7) {
    throw Error(ErrorCode::kInvalidArgument, "tsvd_rank must lie in [1, 7]");
  }
  if (lambda_policy.kind == LambdaPolicy::Kind::kFixed && !(lambda_policy.lambda >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fixed lambda must be >= 0");
  }
  if (lambda_policy.kind == LambdaPolicy::Kind::kLCurve && lambda_policy.grid.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "L-curve lambda grid is empty");
  }
  if (!(max_skip_fraction >= 0.0 && max_skip_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "max_skip_fraction must lie in [0, 1]");
  }
  if (!(variance_floor > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "variance_floor must be > 0");
  }
}

void CalibrationInput::validate() const {
  if (!map) throw Error(ErrorCode::kInvalidArgument, "calibration input has no map");
  if (lidar_poses.size() != measurements.size()) {
    throw Error(ErrorCode::kInvalidArgument, "poses and measurements differ in length");
  }
  if (lidar_poses.size() < kMinIntrinsicSamples) {
    throw Error(ErrorCode::kInvalidArgument, "calibration needs at least 5 samples");
  }
  if (!t0.allFinite()) throw Error(ErrorCode::kInvalidArgument, "t0 is not finite");
  for (const auto& p : lidar_poses) {
    if (p.from() != Frame::kLidar || p.to() != Frame::kMap) {
      throw Error(ErrorCode::kFrameMismatch, "calibration poses must map lidar -> map");
    }
  }
}

Correspondences build_correspondences(const CalibrationInput& input, const Vec3& t,
                                      const CalibrationConfig& config, bool with_gradient) {
  const std::size_t n = input.lidar_poses.size();
  Correspondences corr;
  corr.used.reserve(n);
  corr.b_l.reserve(n);
  corr.b_m.reserve(n);
  std::vector<double> w;
  w.reserve(n);
  const bool weighted = input.map->provides_variance();

  for (std::size_t i = 0; i < n; ++i) {
    const Pose& pose = input.lidar_poses[i];
    const Position projected = pose.apply(t);
    FieldQuery q;
    Mat3 grad = Mat3::Zero();
    try {
      q = with_gradient ? input.map->query_with_gradient(projected, grad)
                        : input.map->query(projected);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kOutOfMap ||
          config.out_of_map_policy == OutOfMapPolicy::kAbort) {
        throw;
      }
      ++corr.skipped;
      continue;
    }
    corr.used.push_back(i);
    corr.b_l.push_back(pose.rotation().transpose() * q.mean);
    corr.b_m.push_back(input.measurements[i]);
    if (with_gradient) corr.gradient.push_back(grad);
    corr.ill_conditioned = corr.ill_conditioned || q.ill_conditioned;
    w.push_back(weighted ? 1.0 / std::max(q.variance.sum(), config.variance_floor) : 1.0);
  }

  if (corr.used.empty()) {
    throw Error(ErrorCode::kOutOfMap, "all samples project outside the map");
  }
  if (static_cast<double>(corr.skipped) > config.max_skip_fraction * static_cast<double>(n)) {
    std::ostringstream os;
    os << corr.skipped << " of " << n << " samples project outside the map";
    throw Error(ErrorCode::kOutOfMap, os.str());
  }
  corr.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  corr.weights /= corr.weights.mean();
  return corr;
}

RegressionProblem make_problem(const Correspondences& corr, const CalibrationConfig& config) {
  RegressionProblem prob = RegressionProblem::from_pairs(corr.b_l, corr.b_m);
  prob.tsvd_rank = config.tsvd_rank;
  if (config.solver == IntrinsicSolver::kWrrtls) prob.weights = corr.weights;
  if (config.lambda_policy.kind == LambdaPolicy::Kind::kFixed) {
    prob.lambda = config.lambda_policy.lambda;
  } else if (config.solver == IntrinsicSolver::kWrrtls ||
             config.solver == IntrinsicSolver::kRrtls) {
    prob.lambda = select_lambda(prob, config.lambda_policy.grid);
  }
  return prob;
}

AffineDistortion solve_intrinsic(const Correspondences& corr, const CalibrationConfig& config,
                                 double* lambda_used) {
  const RegressionProblem prob = make_problem(corr, config);
  if (lambda_used) *lambda_used = prob.lambda;
  switch (config.solver) {
    case IntrinsicSolver::kOls: return solve_ols(prob);
    case IntrinsicSolver::kTls: return solve_tls(prob);
    case IntrinsicSolver::kRrtls: return solve_rrtls(prob);
    case IntrinsicSolver::kWrrtls: return solve_wrrtls(prob);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown intrinsic solver");
}

std::vector<FieldVec> residual(const CalibrationInput& input, const Vec3& t,
                               const AffineDistortion& d, const CalibrationConfig& config) {
  input.validate();
  require_invertible(d);
  return residuals_of(build_correspondences(input, t, config, false), d);
}

Eigen::MatrixX3d jacobian(const CalibrationInput& input, const Vec3& t,
                          const AffineDistortion& d, const CalibrationConfig& config) {
  input.validate();
  require_invertible(d);
  return jacobian_of(input, build_correspondences(input, t, config, true), d);
}

Vec3 gauss_newton_step(const Eigen::MatrixX3d& jac, const Eigen::VectorXd& e, double damping) {
  if (jac.rows() != e.size()) {
    throw Error(ErrorCode::kInvalidArgument, "Jacobian and residual sizes differ");
  }
  const Mat3 jtj = jac.transpose() * jac;
  const Vec3 rhs = -(jac.transpose() * e);
  if (!jtj.allFinite() || !rhs.allFinite()) {
    throw Error(ErrorCode::kNonConvergence, "non-finite normal equations");
  }

  auto condition = [](const Mat3& m) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(m, Eigen::EigenvaluesOnly);
    const Vec3& ev = eig.eigenvalues();
    return ev(0) > 0.0 ? ev(2) / ev(0) : std::numeric_limits<double>::infinity();
  };

  double mu = damping;
  Mat3 system = jtj + mu * Mat3::Identity();
  if (damping == 0.0 && !(condition(system) <= kIllConditioned)) {
    mu = 1e-6 * jtj.trace() / 3.0;
    int escalations = 0;
    while (true) {
      system = jtj + mu * Mat3::Identity();
      if (mu > 0.0 && condition(system) <= kIllConditioned) break;
      if (!(mu > 0.0) || ++escalations > kMaxDampingEscalations) {
        throw Error(ErrorCode::kNonConvergence,
                    "normal matrix J^T J stays singular after damping; the field gradient "
                    "does not constrain the lever arm");
      }
      mu *= 10.0;
    }
  }
  if (!(condition(system) < std::numeric_limits<double>::infinity())) {
    throw Error(ErrorCode::kNonConvergence, "normal matrix J^T J + mu I is singular");
  }
  return system.ldlt().solve(rhs);
}

CalibrationResult calibrate(const CalibrationInput& input, const CalibrationConfig& config) {
  input.validate();
  config.validate();

  CalibrationResult result;
  Vec3 t = input.t0;
  const bool levenberg = config.damping > 0.0;
  double mu = -1.0;

  struct Evaluation {
    Correspondences corr;
    AffineDistortion d;
    double lambda = 0.0;
    double cost = 0.0;
  };
  auto evaluate = [&](const Vec3& at, bool with_gradient) {
    Evaluation ev;
    ev.corr = build_correspondences(input, at, config, with_gradient);
    ev.d = solve_intrinsic(ev.corr, config, &ev.lambda);
    ev.cost = mean_sq(residuals_of(ev.corr, ev.d));
    return ev;
  };

  Evaluation current = evaluate(t, true);
  try {
    while (result.iterations < config.max_iterations) {
      result.trace.push_back({t, current.cost});
      require_invertible(current.d);
      const Eigen::MatrixX3d jac = jacobian_of(input, current.corr, current.d);
      const Eigen::VectorXd e = stack(residuals_of(current.corr, current.d));

      Vec3 step;
      if (!levenberg) {
        step = gauss_newton_step(jac, e);
        t += step;
        ++result.iterations;
        current = evaluate(t, true);
      } else {
        const double scale = (jac.transpose() * jac).trace() / 3.0;
        if (mu < 0.0) mu = config.damping * scale;
        int rejected = 0;
        while (true) {
          step = gauss_newton_step(jac, e, std::max(mu, 1e-300));
          Evaluation trial;
          bool ok = true;
          try {
            trial = evaluate(t + step, true);
          } catch (const Error& err) {
            if (err.code() != ErrorCode::kOutOfMap && err.code() != ErrorCode::kSingular &&
                err.code() != ErrorCode::kRankDeficient) {
              throw;
            }
            ok = false;
          }
          if (ok && trial.cost <= current.cost + kCostSlack) {
            t += step;
            current = std::move(trial);
            mu = std::max(mu / 10.0, 1e-12 * scale);
            break;
          }
          mu *= 10.0;
          if (++rejected > kMaxRejectedSteps || step.norm() < config.step_tolerance) {
            step.setZero();
            break;
          }
        }
        ++result.iterations;
      }

      if (step.norm() < config.step_tolerance) {
        result.converged = true;
        break;
      }
    }
    result.status = result.converged ? "converged" : "reached max_iterations";
  } catch (const Error& err) {
    if (err.code() != ErrorCode::kNonConvergence) throw;
    result.converged = false;
    result.status = err.what();
  }

  result.trace.push_back({t, current.cost});
  result.t_m_l = t;
  result.distortion = current.d;
  result.final_rms = std::sqrt(current.cost);
  result.skipped_samples = current.corr.skipped;
  result.lambda = current.lambda;
  if (current.corr.ill_conditioned) {
    warn("map reported negative predictive variance; the GP factor may be ill-conditioned");
  }
  return result;
}

std::string_view to_string(SuccessClass c) {
  switch (c) {
    case SuccessClass::kSmall: return "small";
    case SuccessClass::kMedium: return "medium";
    case SuccessClass::kFailure: return "failure";
  }
  return "unknown";
}

SuccessClass classify_success(const Vec3& t_hat, const Vec3& t_gt) {
  const double d = (t_hat - t_gt).norm();
  if (!std::isfinite(d)) return SuccessClass::kFailure;
  if (d <= kSmallErrorRadius) return SuccessClass::kSmall;
  if (d <= kMediumErrorRadius) return SuccessClass::kMedium;
  return SuccessClass::kFailure;
}

}  // namespace maglidar
