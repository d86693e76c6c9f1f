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

// Acceptance suite: runs each acceptance criterion at full scale and prints
// one PASS/FAIL verdict line per criterion. Detail lines are indented.
//
// Exit status is non-zero when a criterion fails that is not listed with
// --expect-fail, or when a criterion cannot run at all.

#include "maglidar/evaluation.hpp"
#include "maglidar/io.hpp"

#include "CLI11.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

using namespace maglidar;

namespace {

struct Verdict {
  bool pass = false;
  std::string summary;
};

std::ostream& detail() { return std::cout << "    "; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 gaussian_vec(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return Vec3(g(rng), g(rng), g(rng));
}

Mat3 random_rotation(Rng& rng) {
  Mat3 m;
  for (int c = 0; c < 3; ++c) m.col(c) = gaussian_vec(rng);
  Eigen::HouseholderQR<Mat3> qr(m);
  Mat3 q = qr.householderQ();
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

// ---- criteria 1 and 2 ----

struct Table1Outcome {
  Verdict accuracy, independence;
};

Table1Outcome criterion_table1(int trials, const std::string& out_dir) {
  SweepSpec spec;
  spec.noise_levels = {0.1};
  spec.n_distortions = trials;
  spec.offset_range = 1.0;
  const Table1Report rep = run_table1_sweep(spec);
  if (!out_dir.empty()) save_json(to_json(rep), out_dir + "/table1.json");

  double worst_t = 0, worst_c = 0, worst_h = 0;
  double min_t = std::numeric_limits<double>::infinity(), max_t = 0;
  std::size_t failures = 0;
  for (const Table1Cell& c : rep.cells) {
    detail() << std::left << std::setw(14) << to_string(c.path) << " e_t " << fmt(c.e_t.mean)
             << " m^2  e_C " << fmt(c.e_C.mean) << "  e_H " << fmt(c.e_H.mean)
             << " uT^2  (n=" << c.e_t.count << ", failed " << c.failures << ")\n";
    worst_t = std::max(worst_t, c.e_t.mean);
    worst_c = std::max(worst_c, c.e_C.mean);
    worst_h = std::max(worst_h, c.e_H.mean);
    min_t = std::min(min_t, c.e_t.mean);
    max_t = std::max(max_t, c.e_t.mean);
    failures += c.failures;
  }
  Table1Outcome o;
  // A thrown calibration has no metrics; it counts against the criterion.
  o.accuracy.pass = failures == 0 && worst_t <= 0.01 && worst_c <= 0.02 && worst_h <= 0.3;
  o.accuracy.summary = "accuracy sweep: worst per-path mean e_t " + fmt(worst_t) +
                       " (<= 0.01), e_C " + fmt(worst_c) + " (<= 0.02), e_H " + fmt(worst_h) +
                       " (<= 0.3), failed trials " + std::to_string(failures);
  const double ratio = max_t / min_t;
  o.independence.pass = rep.cells.size() == 5 && ratio < 10.0;
  o.independence.summary =
      "path independence: max/min mean e_t across 5 paths " + fmt(ratio) + " (< 10)";
  return o;
}

// ---- criterion 3 ----

Verdict criterion_success(int trials, const std::string& out_dir) {
  SweepSpec spec;
  spec.noise_levels = {0.1};
  spec.n_distortions = trials;
  const SuccessReport rep = run_success_sweep(spec);
  if (!out_dir.empty()) save_json(to_json(rep), out_dir + "/success.json");

  double near_small = 0, near_fail = 0, near_n = 0, far_fail = 0, far_n = 0;
  for (const SuccessBin& b : rep.bins) {
    detail() << fmt(b.lo) << "-" << fmt(b.hi) << " m: small " << fmt(b.small) << "  medium "
             << fmt(b.medium) << "  failure " << fmt(b.failure) << "  (n=" << b.trials << ")\n";
    const double n = static_cast<double>(b.trials);
    if (b.hi <= 1.5 + 1e-9) {
      near_small += b.small * n;
      near_fail += b.failure * n;
      near_n += n;
    }
    if (b.lo >= 2.5 - 1e-9 && b.hi <= 3.0 + 1e-9) {
      far_fail += b.failure * n;
      far_n += n;
    }
  }
  Verdict v;
  const double small = near_small / near_n, fail_near = near_fail / near_n,
               fail_far = far_fail / far_n;
  v.pass = near_n > 0 && far_n > 0 && small >= 0.9 && fail_far > fail_near;
  v.summary = "success rate: small-error fraction at <= 1.5 m " + fmt(small) +
              " (>= 0.9); failure rate 2.5-3 m " + fmt(fail_far) + " vs <= 1.5 m " +
              fmt(fail_near) + " (must be greater)";
  return v;
}

// ---- criterion 4 ----

Verdict criterion_ablation(int trials, const std::string& out_dir) {
  SweepSpec spec;
  spec.noise_levels = {0.5};
  spec.n_distortions = trials;
  spec.densities = {1.5};  // sparsest survey pitch of the ablation grid
  // Initial lever arm at the truth: the criterion is about the intrinsic
  // solve, not about basin of attraction.
  spec.offset_range = 0.0;
  const AblationReport rep = run_ablation(spec);
  if (!out_dir.empty()) save_json(to_json(rep), out_dir + "/ablation.json");

  std::map<std::pair<Interpolation, IntrinsicSolver>, double> bias;
  for (const AblationCell& c : rep.cells) {
    detail() << "pitch " << fmt(c.density) << " m  " << std::left << std::setw(9)
             << to_string(c.interpolation) << std::setw(8) << to_string(c.solver)
             << " mean bias error " << fmt(c.bias_error.mean) << " uT  (median "
             << fmt(c.bias_error.median) << ", failed " << c.failures << ")\n";
    bias[{c.interpolation, c.solver}] = c.failures == 0 ? c.bias_error.mean
                                                        : std::numeric_limits<double>::infinity();
  }
  const auto b = [&](Interpolation i, IntrinsicSolver s) { return bias.at({i, s}); };
  const double ols = b(Interpolation::kSgpr, IntrinsicSolver::kOls);
  const double rr = b(Interpolation::kSgpr, IntrinsicSolver::kRrtls);
  const double wrr = b(Interpolation::kSgpr, IntrinsicSolver::kWrrtls);
  const bool ordering = wrr <= rr && rr <= ols;
  double min_gap = std::numeric_limits<double>::infinity();
  for (IntrinsicSolver s : spec.solvers) {
    min_gap = std::min(min_gap, b(Interpolation::kBilinear, s) - b(Interpolation::kSgpr, s));
  }
  Verdict v;
  v.pass = ordering && min_gap >= 0.2;
  v.summary = "ablation at pitch 1.5 m, sigma 0.5: s-GPR bias w-RRTLS " + fmt(wrr) +
              " / RRTLS " + fmt(rr) + " / OLS " + fmt(ols) + " (must be non-increasing); " +
              "smallest bilinear - s-GPR gap " + fmt(min_gap) + " uT (>= 0.2)";
  return v;
}

// ---- criterion 5 ----

Verdict criterion_two_map(const std::string& out_dir) {
  TwoMapSpec spec;
  const TwoMapReport rep = run_two_map_workflow(spec);
  if (!out_dir.empty()) {
    Json j;
    j["calibration"] = to_json(rep.calibration);
    j["uncalibrated"] = to_json(rep.uncalibrated);
    j["calibrated"] = to_json(rep.calibrated);
    save_json(j, out_dir + "/two_map.json");
  }
  const ReadingError& a = rep.calibrated;
  const ReadingError& u = rep.uncalibrated;
  detail() << "uncalibrated: mean " << fmt(u.axis_mean.x()) << ", " << fmt(u.axis_mean.y())
           << ", " << fmt(u.axis_mean.z()) << " uT  std " << fmt(u.axis_std.x()) << ", "
           << fmt(u.axis_std.y()) << ", " << fmt(u.axis_std.z()) << " uT\n";
  detail() << "calibrated:   mean " << fmt(a.axis_mean.x()) << ", " << fmt(a.axis_mean.y())
           << ", " << fmt(a.axis_mean.z()) << " uT  std " << fmt(a.axis_std.x()) << ", "
           << fmt(a.axis_std.y()) << ", " << fmt(a.axis_std.z()) << " uT  (n=" << a.samples
           << ", skipped " << a.skipped << ")\n";
  Verdict v;
  const double worst_mean = a.axis_mean.cwiseAbs().maxCoeff();
  v.pass = a.samples > 0 && worst_mean < 1.0 && (a.axis_std.array() < u.axis_std.array()).all();
  v.summary = "two-map workflow: worst per-axis |mean| reading error " + fmt(worst_mean) +
              " uT (< 1); per-axis std below uncalibrated on all axes: " +
              ((a.axis_std.array() < u.axis_std.array()).all() ? "yes" : "no");
  return v;
}

// ---- criterion 6 ----

struct Property {
  std::string name;
  std::function<std::pair<bool, std::string>()> run;
};

std::pair<bool, std::string> prop_gradient() {
  const WorldConfig w = WorldConfig::with_default_dipoles();
  Dataset fp;
  for (double z = 1.5; z <= 2.5 + 1e-9; z += 0.25) {
    for (double y = 15; y <= 18 + 1e-9; y += 0.25) {
      for (double x = 20; x <= 23 + 1e-9; x += 0.25) {
        const Vec3 p(x, y, z);
        fp.samples.push_back({0.0, Pose(Mat3::Identity(), p, Frame::kMag, Frame::kMap), field_at(w, p)});
      }
    }
  }
  const MagMap map = MagMap::build(fp, GpHyperparams{});
  Rng rng(5);
  const double h = 1e-4;
  double worst = 0;
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const Vec3 t(uniform(rng, 19.5, 23.5), uniform(rng, 14.5, 18.5), uniform(rng, 1.2, 2.8));
    bool same = true;
    Mat3 fd;
    for (int a = 0; a < 3; ++a) {
      Vec3 dt = Vec3::Zero();
      dt[a] = h;
      same = same && &map.block_for(t + dt) == &map.block_for(t) &&
             &map.block_for(t - dt) == &map.block_for(t);
      fd.col(a) = (map.query(t + dt).mean - map.query(t - dt).mean) / (2 * h);
    }
    if (!same) continue;
    const Mat3 g = map.query_gradient(t);
    worst = std::max(worst, (g - fd).norm() / g.norm());
    ++checked;
  }
  return {checked >= 200 && worst <= 1e-4,
          "worst relative error " + fmt(worst) + " over " + std::to_string(checked) + " points"};
}

struct Pairs {
  std::vector<FieldVec> b_l, b_m;
};

Pairs random_pairs(Rng& rng, int n, double noise) {
  const AffineDistortion d = random_distortion(rng);
  Pairs p;
  std::normal_distribution<double> g(0.0, noise);
  for (int i = 0; i < n; ++i) {
    const FieldVec b = random_rotation(rng) * FieldVec(20 + 3 * gaussian_vec(rng).x(), 0, -45);
    p.b_l.push_back(b + Vec3(g(rng), g(rng), g(rng)));
    p.b_m.push_back(apply(d, b) + Vec3(g(rng), g(rng), g(rng)));
  }
  return p;
}

std::pair<bool, std::string> prop_closed_form() {
  Rng rng(6);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Pairs p = random_pairs(rng, 80, 0.3);
    RegressionProblem prob = RegressionProblem::from_pairs(p.b_l, p.b_m);
    prob.weights = Eigen::VectorXd::NullaryExpr(80, [&]() { return uniform(rng, 0.2, 3.0); });
    prob.lambda = std::pow(10.0, uniform(rng, -6, 2));
    prob.tsvd_rank = 4 + trial % 4;
    const TruncatedData td = truncate_extended(prob);
    // Generic ridge: stacked least squares [W X; sqrt(l) I] A^T = [W Y; 0].
    const Eigen::Index n = td.X.rows();
    Eigen::MatrixXd a(n + 4, 4), b(n + 4, 3);
    a.topRows(n) = prob.weights.asDiagonal() * td.X;
    a.bottomRows(4) = std::sqrt(prob.lambda) * Eigen::MatrixXd::Identity(4, 4);
    b.topRows(n) = prob.weights.asDiagonal() * td.Y;
    b.bottomRows(4).setZero();
    const Eigen::MatrixXd oracle = a.colPivHouseholderQr().solve(b).transpose();
    const Eigen::Matrix<double, 3, 4> closed = solve_wrrtls(prob).matrix();
    const double scale = std::max(1.0, oracle.cwiseAbs().maxCoeff());
    worst = std::max(worst, (closed - oracle).cwiseAbs().maxCoeff() / scale);
  }
  return {worst <= 1e-8, "worst scaled difference " + fmt(worst) + " over 50 problems"};
}

std::pair<bool, std::string> prop_degeneracy() {
  Rng rng(7);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Pairs p = random_pairs(rng, 40, trial % 2 ? 0.3 : 0.0);
    RegressionProblem prob = RegressionProblem::from_pairs(p.b_l, p.b_m);
    prob.lambda = 0.0;
    prob.tsvd_rank = 7;
    worst = std::max(worst, (solve_wrrtls(prob).matrix() - solve_ols(prob).matrix()).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8, "worst difference to OLS " + fmt(worst)};
}

std::pair<bool, std::string> prop_round_trip() {
  Rng rng(8);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const AffineDistortion d = random_distortion(rng);
    const FieldVec b = 50.0 * gaussian_vec(rng);
    worst = std::max(worst, (compensate(d, apply(d, b)) - b).norm());
    worst = std::max(worst, (apply(d, compensate(d, b)) - b).norm());
  }
  return {worst <= 1e-10, "worst round-trip error " + fmt(worst) + " uT"};
}

std::pair<bool, std::string> prop_gn_step() {
  Rng rng(9);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixX3d g(60, 3);
    for (int r = 0; r < 60; ++r) g.row(r) = gaussian_vec(rng).transpose();
    const Vec3 t_star = gaussian_vec(rng), t = gaussian_vec(rng);
    worst = std::max(worst, (t + gauss_newton_step(g, g * (t - t_star)) - t_star).norm());
  }
  return {worst <= 1e-8, "worst one-step error " + fmt(worst) + " m"};
}

std::pair<bool, std::string> prop_grid_search() {
  const WorldConfig world = WorldConfig::with_default_dipoles();
  MapSpec ms;
  ms.spacing = 1.0;
  ms.z_levels = {1.5, 2.0, 2.5};
  const auto map = build_field_map(survey(world, ms), ms, Interpolation::kSgpr);

  PathSpec path = default_calibration_paths()[0];
  path.region = Box{Vec3(19.5, 15, 0), Vec3(25.5, 20, 0)};
  const std::vector<Pose> poses = generate_path(path, world);
  Rng rng(10);
  const Vec3 lever(0.35, -0.25, -0.45);
  SensorRig rig;
  rig.noise_sigma = 0.1;
  rig.sensors.push_back({lever, random_distortion(rng)});
  const SampledData data = sample_dataset(world, poses, rig, 0, rng);

  CalibrationInput in;
  in.map = map;
  in.lidar_poses = poses;
  for (const auto& f : data.measured.samples) in.measurements.push_back(f.reading);
  in.t0 = lever + Vec3(0.4, -0.3, 0.2);
  const CalibrationConfig cfg;
  const CalibrationResult r = calibrate(in, cfg);

  // Exhaustive 5 cm lattice over the +-1 m cube around the truth. Nodes that
  // push too many samples off the map have no cost.
  const double step = 0.05;
  const int half = 20;
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_t = Vec3::Zero();
  for (int i = -half; i <= half; ++i) {
    for (int j = -half; j <= half; ++j) {
      for (int k = -half; k <= half; ++k) {
        const Vec3 t = lever + step * Vec3(i, j, k);
        Correspondences corr;
        try {
          corr = build_correspondences(in, t, cfg, false);
        } catch (const Error&) {
          continue;
        }
        if (corr.skipped > 0) continue;  // compare costs over the same sample set
        RegressionProblem prob = RegressionProblem::from_pairs(corr.b_l, corr.b_m);
        prob.weights = corr.weights;
        prob.lambda = cfg.lambda_policy.lambda;
        AffineDistortion d;
        try {
          d = solve_wrrtls(prob);
        } catch (const Error&) {
          continue;
        }
        double cost = 0.0;
        for (std::size_t n = 0; n < corr.b_l.size(); ++n) {
          cost += (apply(d, corr.b_l[n]) - corr.b_m[n]).squaredNorm();
        }
        if (cost < best) {
          best = cost;
          best_t = t;
        }
      }
    }
  }
  const double gap = (best_t - r.t_m_l).cwiseAbs().maxCoeff();
  return {r.converged && gap <= step,
          "calibrate vs 41^3 grid minimum: max-axis gap " + fmt(gap) + " m (<= 0.05), " +
              std::to_string(poses.size()) + " samples"};
}

std::pair<bool, std::string> prop_identity_recovery() {
  // simulate -> map -> calibrate with no noise and no distortion. The map is
  // surveyed at the exact positions calibrate will query at the truth.
  const WorldConfig world = WorldConfig::with_default_dipoles();
  const Vec3 lever(0.35, -0.25, -0.45);
  const std::vector<Pose> poses = generate_path(default_calibration_paths()[0], world);
  SensorRig rig;
  rig.noise_sigma = 0.0;
  rig.sensors.push_back({lever, AffineDistortion::identity()});
  Rng rng(11);
  const SampledData data = sample_dataset(world, poses, rig, 0, rng);

  Dataset fp;
  for (const Pose& p : poses) {
    for (double dz : {-0.5, 0.0, 0.5}) {
      const Vec3 q = p.apply(lever) + Vec3(0, 0, dz);
      fp.samples.push_back({0.0, Pose(Mat3::Identity(), q, Frame::kMag, Frame::kMap), field_at(world, q)});
    }
  }
  GpHyperparams hyper;
  hyper.noise_variance = 1e-10;
  CalibrationInput in;
  in.map = std::make_shared<MagMap>(MagMap::build(fp, hyper));
  in.lidar_poses = poses;
  for (const auto& f : data.measured.samples) in.measurements.push_back(f.reading);
  in.t0 = lever;  // zero initial offset
  const CalibrationResult r = calibrate(in);
  const double e_t = metric_translation(r.t_m_l, lever);
  const double e_c = metric_distortion(r.distortion.C, Mat3::Identity());
  return {r.converged && e_t <= 1e-6 && e_c <= 1e-6,
          "e_t " + fmt(e_t) + " m^2, e_C " + fmt(e_c) + ", iterations " + std::to_string(r.iterations)};
}

Verdict criterion_properties() {
  const std::vector<Property> props{
      {"GP gradient vs finite differences (1e-4 rel)", prop_gradient},
      {"closed-form ridge vs generic solver (1e-8)", prop_closed_form},
      {"w-RRTLS degenerates to OLS (1e-8)", prop_degeneracy},
      {"compensate/apply round trip (1e-10)", prop_round_trip},
      {"GN one step on linear residuals (1e-8)", prop_gn_step},
      {"calibrate vs 5 cm grid search (one cell)", prop_grid_search},
      {"noise-free identity recovery (1e-6)", prop_identity_recovery},
  };
  int passed = 0;
  for (const Property& p : props) {
    std::pair<bool, std::string> res;
    try {
      res = p.run();
    } catch (const std::exception& e) {
      res = {false, std::string("threw: ") + e.what()};
    }
    detail() << (res.first ? "ok   " : "FAIL ") << p.name << ": " << res.second << "\n";
    passed += res.first ? 1 : 0;
  }
  Verdict v;
  v.pass = passed == static_cast<int>(props.size());
  v.summary = "property suite: " + std::to_string(passed) + "/" + std::to_string(props.size()) +
              " properties hold";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maglidar acceptance suite"};
  std::vector<int> only;
  std::vector<int> expect_fail;
  int trials = 50;
  std::string out_dir;
  app.add_option("--only", only, "Run only these criteria (1-6)")->check(CLI::Range(1, 6));
  app.add_option("--expect-fail", expect_fail,
                 "Criteria whose FAIL verdict does not affect the exit status")
      ->check(CLI::Range(1, 6));
  app.add_option("--trials", trials, "Trials per sweep cell (criteria use 50)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Directory for JSON reports");
  CLI11_PARSE(app, argc, argv);

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  if (trials != 50) std::cout << "note: " << trials << " trials per cell; verdicts are not at acceptance scale\n";
  const std::set<int> wanted(only.begin(), only.end());
  const std::set<int> tolerated(expect_fail.begin(), expect_fail.end());
  const auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

  std::map<int, Verdict> verdicts;
  const auto run = [&](int id, const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      verdicts[id] = {false, std::string("could not run: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    detail() << "(" << fmt(s) << " s)\n";
  };

  if (want(1) || want(2)) {
    std::cout << "criteria 1-2: accuracy sweep\n";
    run(1, [&] {
      const Table1Outcome o = criterion_table1(trials, out_dir);
      verdicts[1] = o.accuracy;
      verdicts[2] = o.independence;
    });
    if (verdicts.count(1) && !verdicts.count(2)) verdicts[2] = verdicts[1];
  }
  if (want(3)) {
    std::cout << "criterion 3: success-rate sweep\n";
    run(3, [&] { verdicts[3] = criterion_success(trials, out_dir); });
  }
  if (want(4)) {
    std::cout << "criterion 4: ablation\n";
    run(4, [&] { verdicts[4] = criterion_ablation(trials, out_dir); });
  }
  if (want(5)) {
    std::cout << "criterion 5: two-map workflow\n";
    run(5, [&] { verdicts[5] = criterion_two_map(out_dir); });
  }
  if (want(6)) {
    std::cout << "criterion 6: property suite\n";
    run(6, [&] { verdicts[6] = criterion_properties(); });
  }

  std::cout << "\n";
  int unexpected = 0;
  for (const auto& [id, v] : verdicts) {
    if (!want(id)) continue;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << v.summary;
    if (!v.pass && tolerated.count(id)) std::cout << " [expected failure]";
    std::cout << "\n";
    if (!v.pass && !tolerated.count(id)) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
