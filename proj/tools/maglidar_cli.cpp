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

// maglidar: command-line front end for simulation, mapping, calibration,
// evaluation and the Monte-Carlo sweeps. Run with --help for flags.

#include "maglidar/evaluation.hpp"
#include "maglidar/io.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace maglidar;

namespace {

Vec3 parse_xyz(const std::string& text) {
  std::stringstream s(text);
  std::string part;
  std::vector<double> v;
  while (std::getline(s, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "expected x,y,z but got '" + text + "'");
    }
  }
  if (v.size() != 3) throw Error(ErrorCode::kParse, "expected x,y,z but got '" + text + "'");
  return Vec3(v[0], v[1], v[2]);
}

PathSpec resolve_path(const std::string& arg) {
  if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".json") return path_from_json(load_json(arg));
  const PathKind kind = path_kind_from_string(arg);
  for (const auto& p : default_calibration_paths()) {
    if (p.kind == kind) return p;
  }
  throw Error(ErrorCode::kInvalidArgument, "no default path for " + arg);
}

SensorTruth find_truth(const Json& j, std::size_t sensor) {
  // Either a rig file (with "sensors") or a single {t_m_l, C, H} record.
  if (j.contains("sensors")) {
    const SensorRig rig = rig_from_json(j);
    if (sensor >= rig.sensors.size()) throw Error(ErrorCode::kInvalidArgument, "sensor index out of range");
    return rig.sensors[sensor];
  }
  SensorTruth t;
  t.t_m_l = vec3_from_json(j.at("t_m_l"));
  t.distortion.C = mat3_from_json(j.at("C"));
  t.distortion.H = vec3_from_json(j.at("H"));
  return t;
}

void emit(const Json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    save_json(j, out);
  }
}

struct SimulateArgs {
  std::string world, path = "lawnmower", rig, map_spec, out;
  std::uint64_t seed = 1;
  bool no_survey = false;
};

int run_simulate(const SimulateArgs& a) {
  const WorldConfig world = a.world.empty() ? WorldConfig::with_default_dipoles() : world_from_json(load_json(a.world));
  const PathSpec path = resolve_path(a.path);
  Rng rng(a.seed);
  SensorRig rig;
  if (a.rig.empty()) {
    rig.sensors.push_back({SweepSpec{}.lever_arm, random_distortion(rng)});
  } else {
    rig = rig_from_json(load_json(a.rig));
  }
  fs::create_directories(a.out);
  const auto poses = generate_path(path, world);
  for (std::size_t k = 0; k < rig.sensors.size(); ++k) {
    const SampledData data = sample_dataset(world, poses, rig, k, rng);
    save_jsonl(data.measured, (fs::path(a.out) / (data.measured.sensor_id + ".jsonl")).string());
    save_jsonl(data.ground_truth, (fs::path(a.out) / (data.measured.sensor_id + ".truth.jsonl")).string());
  }
  save_json(to_json(rig), (fs::path(a.out) / "truth.json").string());
  save_json(to_json(world), (fs::path(a.out) / "world.json").string());
  if (!a.no_survey) {
    const MapSpec spec = a.map_spec.empty() ? MapSpec{} : map_spec_from_json(load_json(a.map_spec));
    save_jsonl(survey(world, spec), (fs::path(a.out) / "mapping.jsonl").string());
  }
  std::cout << "wrote " << rig.sensors.size() << " sensor stream(s) of " << poses.size()
            << " samples to " << a.out << '\n';
  return 0;
}

struct BuildMapArgs {
  std::string fingerprints, hyper, out;
};

int run_build_map(const BuildMapArgs& a) {
  GpHyperparams hyper;
  double block = kDefaultBlockSize, overlap = kDefaultBlockOverlap;
  if (!a.hyper.empty()) {
    const Json j = load_json(a.hyper);
    hyper = hyper_from_json(j);
    block = j.value("block_size", block);
    overlap = j.value("block_overlap", overlap);
  }
  const Dataset data = load_jsonl(a.fingerprints, Frame::kMag, Frame::kMap);
  validate(data);
  const MagMap map = MagMap::build(data, hyper, block, overlap);
  save_map(map, a.out);
  std::cout << "map with " << map.blocks().size() << " blocks from " << data.size() << " fingerprints\n";
  return 0;
}

struct CalibrateArgs {
  std::string map, data, t0 = "0,0,0", config, out;
};

int run_calibrate(const CalibrateArgs& a) {
  const CalibrationConfig config = a.config.empty() ? CalibrationConfig{} : config_from_json(load_json(a.config));
  const Dataset data = load_jsonl(a.data, Frame::kLidar, Frame::kMap);
  validate(data);
  CalibrationInput input;
  input.map = std::make_shared<MagMap>(load_map(a.map));
  input.t0 = parse_xyz(a.t0);
  for (const auto& f : data.samples) {
    input.lidar_poses.push_back(f.pose);
    input.measurements.push_back(f.reading);
  }
  const CalibrationResult result = calibrate(input, config);
  Json j = to_json(result);
  j["sensor_id"] = data.sensor_id;
  j["config"] = to_json(config);
  emit(j, a.out);
  return result.converged ? 0 : 3;
}

struct EvaluateArgs {
  std::string result, truth, validation_map, data, out;
  std::size_t sensor = 0;
};

int run_evaluate(const EvaluateArgs& a) {
  const CalibrationResult result = result_from_json(load_json(a.result));
  Json out;
  if (!a.truth.empty()) {
    out["truth"] = to_json(evaluate_against_truth(result, find_truth(load_json(a.truth), a.sensor)));
  }
  if (!a.validation_map.empty()) {
    if (a.data.empty()) throw Error(ErrorCode::kInvalidArgument, "--validation-map needs --data");
    const MagMap map = load_map(a.validation_map);
    const Dataset raw = load_jsonl(a.data, Frame::kLidar, Frame::kMap);
    std::vector<Pose> poses;
    std::vector<FieldVec> readings;
    std::vector<double> stamps;
    for (const auto& f : raw.samples) {
      poses.push_back(f.pose);
      readings.push_back(f.reading);
      stamps.push_back(f.timestamp);
    }
    const Dataset before =
        apply_calibration(poses, readings, stamps, result.t_m_l, AffineDistortion::identity(), raw.sensor_id);
    const Dataset after =
        apply_calibration(poses, readings, stamps, result.t_m_l, result.distortion, raw.sensor_id);
    out["validation"] = {{"uncalibrated", to_json(metric_reading_error(before, map))},
                         {"calibrated", to_json(metric_reading_error(after, map))}};
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "give --truth and/or --validation-map");
  emit(out, a.out);
  return 0;
}

struct SweepArgs {
  std::string kind, spec, out;
  int trials = 0;
};

int run_sweep(const SweepArgs& a) {
  SweepSpec spec = a.spec.empty() ? SweepSpec{} : sweep_spec_from_json(load_json(a.spec));
  if (a.trials > 0) spec.n_distortions = a.trials;
  fs::create_directories(a.out);
  std::ofstream trials_out(fs::path(a.out) / "trials.jsonl");
  std::size_t done = 0;
  auto on_trial = [&](const TrialRecord& r) {
    trials_out << to_json(r).dump() << '\n';
    trials_out.flush();
    ++done;
    if (done % 10 == 0) std::cerr << "\r" << done << " trials" << std::flush;
  };
  const fs::path dir(a.out);
  if (a.kind == "table1") {
    const auto r = run_table1_sweep(spec, on_trial);
    save_json(to_json(r), (dir / "report.json").string());
    save_text(table1_csv(r), (dir / "report.csv").string());
    save_text(trials_csv(r.trials), (dir / "trials.csv").string());
  } else if (a.kind == "success") {
    const auto r = run_success_sweep(spec, on_trial);
    save_json(to_json(r), (dir / "report.json").string());
    save_text(success_csv(r), (dir / "report.csv").string());
    save_text(trials_csv(r.trials), (dir / "trials.csv").string());
  } else {
    const auto r = run_ablation(spec, on_trial);
    save_json(to_json(r), (dir / "report.json").string());
    save_text(ablation_csv(r), (dir / "report.csv").string());
    save_text(trials_csv(r.trials), (dir / "trials.csv").string());
  }
  std::cerr << "\r" << done << " trials, report in " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magnetometer-to-LiDAR calibration against a magnetic field map"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Sample a synthetic world along a path");
  s->add_option("--world", sim.world, "World JSON (default: built-in rack layout)");
  s->add_option("--path", sim.path, "Path kind (lawnmower, perimeter, random_walk, figure_eight, "
                                    "diagonal_sweep) or a PathSpec JSON file")->capture_default_str();
  s->add_option("--rig", sim.rig, "Rig JSON (default: one sensor with a random distortion)");
  s->add_option("--map-spec", sim.map_spec, "Mapping survey JSON for mapping.jsonl");
  s->add_flag("--no-survey", sim.no_survey, "Skip writing mapping.jsonl");
  s->add_option("--seed", sim.seed, "Noise and distortion seed")->capture_default_str();
  s->add_option("--out", sim.out, "Output directory")->required();

  BuildMapArgs bm;
  auto* b = app.add_subcommand("build-map", "Fit a block GP map to mag->map fingerprints");
  b->add_option("--fingerprints", bm.fingerprints, "Fingerprint JSONL")->required()->check(CLI::ExistingFile);
  b->add_option("--hyper", bm.hyper, "Hyperparameter JSON (may also set block_size, block_overlap)");
  b->add_option("--out", bm.out, "Map JSON")->required();

  CalibrateArgs ca;
  auto* c = app.add_subcommand("calibrate", "Estimate lever arm and distortion of one sensor");
  c->add_option("--map", ca.map, "Map JSON")->required()->check(CLI::ExistingFile);
  c->add_option("--data", ca.data, "LiDAR-pose fingerprint JSONL")->required()->check(CLI::ExistingFile);
  c->add_option("--t0", ca.t0, "Initial lever arm x,y,z in meters")->capture_default_str();
  c->add_option("--config", ca.config, "Calibration config JSON");
  c->add_option("--out", ca.out, "Result JSON (default: stdout)");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a calibration result");
  e->add_option("--result", ev.result, "Result JSON from calibrate")->required()->check(CLI::ExistingFile);
  e->add_option("--truth", ev.truth, "Rig JSON or a single {t_m_l, C, H} record");
  e->add_option("--sensor", ev.sensor, "Sensor index within a rig file")->capture_default_str();
  e->add_option("--validation-map", ev.validation_map, "Independent map JSON");
  e->add_option("--data", ev.data, "LiDAR-pose fingerprints scored against the validation map");
  e->add_option("--out", ev.out, "Metrics JSON (default: stdout)");

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Run a Monte-Carlo sweep");
  w->add_option("kind", sw.kind, "table1, success or ablation")
      ->required()
      ->check(CLI::IsMember({"table1", "success", "ablation"}));
  w->add_option("--spec", sw.spec, "SweepSpec JSON (default: built-in)");
  w->add_option("--trials", sw.trials, "Override n_distortions");
  w->add_option("--out", sw.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) return run_simulate(sim);
    if (*b) return run_build_map(bm);
    if (*c) return run_calibrate(ca);
    if (*e) return run_evaluate(ev);
    if (*w) return run_sweep(sw);
  } catch (const Error& err) {
    std::cerr << "error [" << to_string(err.code()) << "]: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 1;
}
