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

#include "doctest.h"
#include "test_support.hpp"

#include "maglidar/evaluation.hpp"
#include "maglidar/io.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace maglidar;
using namespace maglidar::testing;

namespace {

/// Small, fast sweep: one short path, sparse survey.
SweepSpec tiny_spec() {
  SweepSpec spec;
  spec.map.spacing = 1.0;
  spec.map.z_levels = {1.5, 2.0, 2.5};
  PathSpec p = default_calibration_paths()[0];
  p.region = Box{Vec3(19, 15, 0), Vec3(25, 20, 0)};
  spec.paths = {p};
  spec.n_distortions = 2;
  return spec;
}

Dataset sample_path_dataset() {
  const WorldConfig w = WorldConfig::with_default_dipoles();
  SensorRig rig;
  Rng rng(3);
  rig.sensors.push_back({Vec3(0.35, -0.25, -0.45), random_distortion(rng)});
  return sample_dataset(w, generate_path(default_calibration_paths()[1], w), rig, 0, rng).measured;
}

}  // namespace

TEST_CASE("metric examples") {
  const Vec3 t(0.35, -0.25, -0.45);
  CHECK(metric_translation(t, t) == 0.0);
  CHECK(metric_translation(Vec3(0.03, 0.04, 0), Vec3::Zero()) == doctest::Approx(0.0025).epsilon(1e-12));
  Rng rng(1);
  const Mat3 c = Mat3::Identity() + 0.1 * random_rotation(rng);
  CHECK(metric_distortion(c, c) == 0.0);
  CHECK(metric_distortion(c + 0.01 * Mat3::Identity(), c) ==
        doctest::Approx(0.01 * std::sqrt(3.0)).epsilon(1e-9));
  CHECK(metric_bias(Vec3(1, 2, 3), Vec3(1, 2, 3)) == 0.0);
  CHECK(metric_bias(Vec3(1, 2, 2), Vec3::Zero()) == doctest::Approx(9.0));

  CalibrationResult r;
  r.t_m_l = t + Vec3(0.03, 0, 0);
  SensorTruth truth{t, AffineDistortion::identity()};
  const MetricsReport m = evaluate_against_truth(r, truth);
  CHECK(m.e_t >= 0.0);
  CHECK(m.e_C == 0.0);
  CHECK(m.success == SuccessClass::kMedium);
}

TEST_CASE("summarize") {
  const Summary s = summarize({3.0, 1.0, 2.0, 4.0});
  CHECK(s.count == 4);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.min == 1.0);
  CHECK(s.max == 4.0);
  CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));  // sample std
  CHECK(summarize({}).count == 0);
}

TEST_CASE("reading error against a validation map") {
  const WorldConfig w = WorldConfig::with_default_dipoles();
  MapSpec ms;
  ms.spacing = 1.0;
  ms.z_levels = {1.5, 2.0, 2.5};
  const auto map = build_field_map(survey(w, ms), ms, Interpolation::kSgpr);

  const std::vector<Pose> poses = generate_path(default_calibration_paths()[0], w);
  const Vec3 lever(0.35, -0.25, -0.45);

  SUBCASE("readings equal to the map give zero error") {
    std::vector<FieldVec> readings;
    std::vector<double> stamps;
    for (const Pose& p : poses) {
      readings.push_back(p.rotation().transpose() * map->query(p.apply(lever)).mean);
      stamps.push_back(static_cast<double>(stamps.size()));
    }
    const Dataset cal =
        apply_calibration(poses, readings, stamps, lever, AffineDistortion::identity(), "s");
    const ReadingError e = metric_reading_error(cal, *map);
    CHECK(e.samples == poses.size());
    CHECK(e.mean_sq <= 1e-20);
    CHECK(e.axis_std.maxCoeff() <= 1e-10);
  }

  SUBCASE("compensation reduces the error") {
    SensorRig rig;
    Rng rng(4);
    rig.sensors.push_back({lever, random_distortion(rng)});
    const SampledData data = sample_dataset(w, poses, rig, 0, rng);
    std::vector<FieldVec> readings;
    std::vector<double> stamps;
    for (const auto& f : data.measured.samples) {
      readings.push_back(f.reading);
      stamps.push_back(f.timestamp);
    }
    const ReadingError raw = metric_reading_error(
        apply_calibration(poses, readings, stamps, lever, AffineDistortion::identity(), "s"), *map);
    const ReadingError fixed = metric_reading_error(
        apply_calibration(poses, readings, stamps, lever, rig.sensors[0].distortion, "s"), *map);
    CHECK(fixed.mean_sq < raw.mean_sq);
    CHECK(fixed.mean_sq >= 0.0);
  }
}

TEST_CASE("noise-free identity sweep recovers the truth") {
  SweepSpec spec = tiny_spec();
  spec.noise_levels = {0.0};
  spec.n_distortions = 1;
  spec.distortion_scale = 1e-9;
  spec.offset_range = 0.0;
  // Dense noise-free survey so map error does not mask the estimate.
  spec.map.region = Box{Vec3(17.5, 13.5, 0), Vec3(26.5, 21.5, 0)};
  spec.map.spacing = 0.25;
  spec.map.z_levels = {1.5, 1.75, 2.0, 2.25, 2.5};
  spec.map.hyper.noise_variance = 1e-6;
  const Table1Report rep = run_table1_sweep(spec);
  REQUIRE(rep.trials.size() == 1);
  const TrialRecord& r = rep.trials[0];
  REQUIRE(r.ok);
  CHECK(r.metrics.e_t <= 1e-6);
  CHECK(r.metrics.e_C <= 1e-3);
  CHECK(r.metrics.e_H <= 1e-4);
}

TEST_CASE("sweeps are deterministic and rows carry their config") {
  SweepSpec spec = tiny_spec();
  spec.calibration.max_iterations = 30;
  std::vector<int> seen;
  const Table1Report a = run_table1_sweep(spec, [&](const TrialRecord& r) { seen.push_back(r.trial); });
  const Table1Report b = run_table1_sweep(spec);
  CHECK(seen == std::vector<int>{0, 1});
  REQUIRE(a.trials.size() == b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    CHECK(to_json(a.trials[i]).dump() == to_json(b.trials[i]).dump());
    const Json row = to_json(a.trials[i]);
    CHECK(row.at("config").at("max_iterations") == 30);
    CHECK(row.contains("path"));
    CHECK(row.contains("trial_seed"));
  }
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(trials_csv(a.trials) == trials_csv(b.trials));
  const std::string csv = table1_csv(a);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("trial seeds are stable and distinct") {
  CHECK(trial_seed(1, 0, 0) == trial_seed(1, 0, 0));
  CHECK(trial_seed(1, 0, 0) != trial_seed(1, 0, 1));
  CHECK(trial_seed(1, 0, 0) != trial_seed(1, 1, 0));
  CHECK(trial_seed(1, 0, 0) != trial_seed(2, 0, 0));
}

TEST_CASE("fingerprint JSONL round-trip is bit-identical") {
  const Dataset d = sample_path_dataset();
  std::stringstream first;
  write_jsonl(d, first);
  const Dataset back = read_jsonl(first, d.sensor_id, Frame::kLidar, Frame::kMap);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.samples[i].timestamp == d.samples[i].timestamp);
    CHECK(back.samples[i].reading == d.samples[i].reading);
    CHECK(back.samples[i].pose.translation() == d.samples[i].pose.translation());
    CHECK(back.samples[i].pose.from() == Frame::kLidar);
  }
  std::stringstream second;
  write_jsonl(back, second);
  CHECK(first.str() == second.str());

  // Field order is part of the format.
  const std::string line = to_jsonl_record(d.samples[0]);
  CHECK(line.find("\"t\"") < line.find("\"p\""));
  CHECK(line.find("\"p\"") < line.find("\"q\""));
  CHECK(line.find("\"q\"") < line.find("\"B\""));
  CHECK(line.find('\n') == std::string::npos);
}

TEST_CASE("JSONL parse errors") {
  const auto parse = [](const std::string& s) {
    return code_of([&] { parse_jsonl_record(s, Frame::kLidar, Frame::kMap); });
  };
  CHECK(parse("{not json") == ErrorCode::kParse);
  CHECK(parse(R"({"t":0,"p":[1,2],"q":[1,0,0,0],"B":[1,2,3]})") == ErrorCode::kParse);
  CHECK(parse(R"({"t":0,"p":[1,2,3],"B":[1,2,3]})") == ErrorCode::kParse);
  CHECK(parse(R"({"t":0,"p":[1,2,3],"q":[2,0,0,0],"B":[1,2,3]})") == ErrorCode::kParse);
  CHECK_NOTHROW(parse_jsonl_record(R"({"t":0.5,"p":[1,2,3],"q":[1,0,0,0],"B":[1,2,3]})",
                                   Frame::kLidar, Frame::kMap));
}

TEST_CASE("map JSON round-trip answers queries identically") {
  const WorldConfig w = WorldConfig::with_default_dipoles();
  const Dataset fp = lattice_dataset(Vec3(20, 15, 1.5), Vec3(24, 18, 2.5), Vec3(0.5, 0.5, 0.5),
                                     [&](const Vec3& p) { return field_at(w, p); });
  const MagMap map = MagMap::build(fp, GpHyperparams{});
  const std::string text = map_to_json(map).dump();
  const MagMap back = map_from_json(Json::parse(text));
  CHECK(map_to_json(back).dump() == text);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 t(uniform(rng, 20, 24), uniform(rng, 15, 18), uniform(rng, 1.5, 2.5));
    const FieldQuery a = map.query(t), b = back.query(t);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
    CHECK(map.query_gradient(t) == back.query_gradient(t));
  }
  Json bad = map_to_json(map);
  bad["schema"] = "something/else";
  CHECK(code_of([&] { map_from_json(bad); }) == ErrorCode::kParse);
}

TEST_CASE("config and spec JSON round-trips") {
  CalibrationConfig c;
  c.max_iterations = 17;
  c.damping = 1e-3;
  c.lambda_policy = LambdaPolicy::l_curve({1e-6, 1e-3});
  c.out_of_map_policy = OutOfMapPolicy::kAbort;
  c.solver = IntrinsicSolver::kRrtls;
  CHECK(to_json(config_from_json(to_json(c))).dump() == to_json(c).dump());

  SweepSpec s = tiny_spec();
  s.noise_levels = {0.1, 0.5};
  s.interpolations = {Interpolation::kBilinear};
  CHECK(to_json(sweep_spec_from_json(to_json(s))).dump() == to_json(s).dump());

  const WorldConfig w = WorldConfig::with_default_dipoles();
  CHECK(to_json(world_from_json(to_json(w))).dump() == to_json(w).dump());

  SensorRig rig;
  Rng rng(6);
  rig.sensors.push_back({Vec3(0.1, 0.2, 0.3), random_distortion(rng)});
  CHECK(to_json(rig_from_json(to_json(rig))).dump() == to_json(rig).dump());

  CalibrationResult r;
  r.t_m_l = Vec3(0.1, -0.2, 0.3);
  r.distortion = rig.sensors[0].distortion;
  r.converged = true;
  r.iterations = 4;
  const CalibrationResult rb = result_from_json(to_json(r));
  CHECK(rb.t_m_l == r.t_m_l);
  CHECK(rb.distortion.C == r.distortion.C);
  CHECK(rb.distortion.H == r.distortion.H);
  CHECK(rb.iterations == 4);

  Json bad = to_json(c);
  bad["lambda_policy"]["kind"] = "magic";
  CHECK(code_of([&] { config_from_json(bad); }) == ErrorCode::kParse);
}

TEST_CASE("reports label metric units") {
  const Json m = to_json(MetricsReport{});
  CHECK(m.at("units").at("e_t") == "m^2");
  CHECK(m.at("units").at("e_H") == "uT^2");
}

TEST_CASE("file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "maglidar_io_test";
  std::filesystem::create_directories(dir);
  const Dataset d = sample_path_dataset();
  const std::string path = (dir / "sensor_0.jsonl").string();
  save_jsonl(d, path);
  const Dataset back = load_jsonl(path, Frame::kLidar, Frame::kMap);
  CHECK(back.sensor_id == "sensor_0");
  CHECK(back.size() == d.size());
  CHECK(code_of([&] { load_jsonl((dir / "missing.jsonl").string(), Frame::kLidar, Frame::kMap); }) ==
        ErrorCode::kInvalidArgument);
  std::filesystem::remove_all(dir);
}
