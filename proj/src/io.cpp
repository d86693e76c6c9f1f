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

#include "maglidar/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace maglidar {

namespace {

[[noreturn]] void parse_error(const std::string& what) { throw Error(ErrorCode::kParse, what); }

const Json& require(const Json& j, const char* key) {
  if (!j.is_object()) parse_error(std::string("expected an object holding '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) parse_error(std::string("missing field '") + key + "'");
  return *it;
}

double number(const Json& j, const char* what) {
  if (!j.is_number()) parse_error(std::string("field '") + what + "' must be a number");
  return j.get<double>();
}

template <typename T>
T value_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object()) parse_error(std::string("expected an object holding '") + key + "'");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    parse_error(std::string("field '") + key + "' has the wrong type");
  }
}

double num_or(const Json& j, const char* key, double fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return number(j.at(key), key);
}

std::string_view to_string(MeanMode m) {
  return m == MeanMode::kZero ? "zero" : "constant_per_block";
}

MeanMode mean_mode_from_string(std::string_view s) {
  if (s == "zero") return MeanMode::kZero;
  if (s == "constant_per_block") return MeanMode::kConstantPerBlock;
  parse_error("unknown mean_mode '" + std::string(s) + "'");
}

std::string_view to_string(OutOfMapPolicy p) {
  return p == OutOfMapPolicy::kAbort ? "abort" : "skip_sample";
}

OutOfMapPolicy out_of_map_from_string(std::string_view s) {
  if (s == "abort") return OutOfMapPolicy::kAbort;
  if (s == "skip_sample") return OutOfMapPolicy::kSkipSample;
  parse_error("unknown out_of_map_policy '" + std::string(s) + "'");
}

Eigen::Vector4d vec4_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) parse_error("expected an array of 4 numbers");
  Eigen::Vector4d v;
  for (int i = 0; i < 4; ++i) v(i) = number(j[i], "q");
  return v;
}

std::vector<double> doubles_from_json(const Json& j, const char* what) {
  if (!j.is_array()) parse_error(std::string("field '") + what + "' must be an array");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(number(e, what));
  return out;
}

std::string csv_number(double v) {
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

Json summary_or_null(const Summary& s) { return s.count == 0 ? Json(nullptr) : to_json(s); }

Json trace_to_json(const std::vector<IterationRecord>& trace) {
  Json out = Json::array();
  for (const auto& r : trace) out.push_back({{"t", to_json(r.t)}, {"cost", r.cost}});
  return out;
}

}  // namespace

// ---- fingerprints ----

std::string to_jsonl_record(const Fingerprint& f) {
  const auto& q = f.pose.quaternion();
  Json j;
  j["t"] = f.timestamp;
  j["p"] = to_json(f.pose.translation());
  j["q"] = {q(0), q(1), q(2), q(3)};
  j["B"] = to_json(f.reading);
  return j.dump();
}

Fingerprint parse_jsonl_record(const std::string& line, Frame from, Frame to) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    parse_error(std::string("malformed fingerprint record: ") + e.what());
  }
  Fingerprint f;
  f.timestamp = number(require(j, "t"), "t");
  const Vec3 p = vec3_from_json(require(j, "p"));
  const Eigen::Vector4d q = vec4_from_json(require(j, "q"));
  try {
    f.pose = Pose::from_quaternion(q, p, from, to);
  } catch (const Error& e) {
    parse_error(std::string("bad pose in fingerprint record: ") + e.what());
  }
  f.reading = vec3_from_json(require(j, "B"));
  return f;
}

void write_jsonl(const Dataset& dataset, std::ostream& out) {
  for (const auto& f : dataset.samples) out << to_jsonl_record(f) << '\n';
}

Dataset read_jsonl(std::istream& in, const std::string& sensor_id, Frame from, Frame to) {
  Dataset d;
  d.sensor_id = sensor_id;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      d.samples.push_back(parse_jsonl_record(line, from, to));
    } catch (const Error& e) {
      parse_error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return d;
}

void save_jsonl(const Dataset& dataset, const std::string& path) {
  std::ostringstream s;
  write_jsonl(dataset, s);
  save_text(s.str(), path);
}

Dataset load_jsonl(const std::string& path, Frame from, Frame to) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open " + path);
  std::string stem = path;
  if (auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (auto dot = stem.find('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  return read_jsonl(in, stem, from, to);
}

// ---- maps ----

Json map_to_json(const MagMap& map) {
  Json j;
  j["schema"] = kMapSchema;
  j["hyper"] = to_json(map.hyper());
  j["block_size"] = map.block_size();
  j["block_overlap"] = map.block_overlap();
  j["domain"] = to_json(map.domain());
  j["grid_origin"] = to_json(map.grid_origin());
  j["dims"] = map.dims();
  j["fallback_mean"] = to_json(map.fallback_mean());
  Json blocks = Json::array();
  for (const auto& b : map.blocks()) {
    Json jb;
    jb["index"] = map.block_index(b);
    jb["bounds"] = to_json(b.bounds());
    Json pos = Json::array(), fld = Json::array();
    for (const auto& p : b.positions()) pos.push_back(to_json(p));
    for (const auto& f : b.fields()) fld.push_back(to_json(f));
    jb["positions"] = std::move(pos);
    jb["fields"] = std::move(fld);
    blocks.push_back(std::move(jb));
  }
  j["blocks"] = std::move(blocks);
  return j;
}

MagMap map_from_json(const Json& j) {
  if (value_or<std::string>(j, "schema", "") != kMapSchema) {
    parse_error(std::string("map schema must be '") + kMapSchema + "'");
  }
  const GpHyperparams hyper = hyper_from_json(require(j, "hyper"));
  const auto dims = value_or<std::array<int, 3>>(j, "dims", {0, 0, 0});
  std::vector<BlockData> blocks;
  const Json& jb = require(j, "blocks");
  if (!jb.is_array()) parse_error("'blocks' must be an array");
  for (const auto& b : jb) {
    BlockData d;
    d.index = value_or<std::array<int, 3>>(b, "index", {0, 0, 0});
    d.bounds = box_from_json(require(b, "bounds"));
    for (const auto& p : require(b, "positions")) d.positions.push_back(vec3_from_json(p));
    for (const auto& f : require(b, "fields")) d.fields.push_back(vec3_from_json(f));
    if (d.positions.size() != d.fields.size()) parse_error("block positions and fields differ in length");
    blocks.push_back(std::move(d));
  }
  return MagMap::from_blocks(hyper, number(require(j, "block_size"), "block_size"),
                             number(require(j, "block_overlap"), "block_overlap"),
                             box_from_json(require(j, "domain")),
                             vec3_from_json(require(j, "grid_origin")), dims,
                             vec3_from_json(require(j, "fallback_mean")), blocks);
}

void save_map(const MagMap& map, const std::string& path) { save_json(map_to_json(map), path); }

MagMap load_map(const std::string& path) { return map_from_json(load_json(path)); }

// ---- small values ----

Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) parse_error("expected an array of 3 numbers");
  return Vec3(number(j[0], "vector"), number(j[1], "vector"), number(j[2], "vector"));
}

Json to_json(const Mat3& m) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(to_json(Vec3(m.row(r).transpose())));
  return rows;
}

Mat3 mat3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) parse_error("expected a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3_from_json(j[r]).transpose();
  return m;
}

Json to_json(const Box& b) { return {{"min", to_json(b.min)}, {"max", to_json(b.max)}}; }

Box box_from_json(const Json& j) {
  return Box{vec3_from_json(require(j, "min")), vec3_from_json(require(j, "max"))};
}

Json to_json(const GpHyperparams& h) {
  return {{"length_scale", h.length_scale},
          {"signal_variance", h.signal_variance},
          {"noise_variance", h.noise_variance},
          {"mean_mode", to_string(h.mean_mode)}};
}

GpHyperparams hyper_from_json(const Json& j) {
  GpHyperparams h;
  h.length_scale = num_or(j, "length_scale", h.length_scale);
  h.signal_variance = num_or(j, "signal_variance", h.signal_variance);
  h.noise_variance = num_or(j, "noise_variance", h.noise_variance);
  h.mean_mode = mean_mode_from_string(value_or<std::string>(j, "mean_mode", "constant_per_block"));
  h.validate();
  return h;
}

Json to_json(const WorldConfig& w) {
  Json dipoles = Json::array();
  for (const auto& d : w.dipoles) {
    dipoles.push_back({{"position", to_json(d.position)}, {"moment", to_json(d.moment)}});
  }
  return {{"extent", to_json(w.extent)},
          {"ambient_field", to_json(w.ambient_field)},
          {"rng_seed", w.rng_seed},
          {"dipoles", std::move(dipoles)}};
}

WorldConfig world_from_json(const Json& j) {
  WorldConfig w;
  if (j.contains("extent")) w.extent = box_from_json(j["extent"]);
  if (j.contains("ambient_field")) w.ambient_field = vec3_from_json(j["ambient_field"]);
  w.rng_seed = value_or<std::uint64_t>(j, "rng_seed", w.rng_seed);
  if (j.contains("dipoles")) {
    for (const auto& d : j["dipoles"]) {
      w.dipoles.push_back({vec3_from_json(require(d, "position")), vec3_from_json(require(d, "moment"))});
    }
  } else {
    w.dipoles = default_dipole_layout(w.extent, w.rng_seed);
  }
  w.validate();
  return w;
}

Json to_json(const PathSpec& p) {
  return {{"kind", to_string(p.kind)},
          {"sample_spacing", p.sample_spacing},
          {"z_height", p.z_height},
          {"region", to_json(p.region)},
          {"lane_spacing", p.lane_spacing},
          {"seed", p.seed}};
}

PathSpec path_from_json(const Json& j) {
  PathSpec p;
  p.kind = path_kind_from_string(value_or<std::string>(j, "kind", "lawnmower"));
  p.sample_spacing = num_or(j, "sample_spacing", p.sample_spacing);
  p.z_height = num_or(j, "z_height", p.z_height);
  if (j.contains("region")) p.region = box_from_json(j["region"]);
  p.lane_spacing = num_or(j, "lane_spacing", p.lane_spacing);
  p.seed = value_or<std::uint64_t>(j, "seed", p.seed);
  return p;
}

Json to_json(const SensorRig& rig) {
  Json sensors = Json::array();
  for (const auto& s : rig.sensors) {
    sensors.push_back({{"t_m_l", to_json(s.t_m_l)}, {"C", to_json(s.distortion.C)}, {"H", to_json(s.distortion.H)}});
  }
  return {{"noise_sigma", rig.noise_sigma}, {"sensors", std::move(sensors)}};
}

SensorRig rig_from_json(const Json& j) {
  SensorRig rig;
  rig.noise_sigma = num_or(j, "noise_sigma", rig.noise_sigma);
  for (const auto& s : require(j, "sensors")) {
    SensorTruth t;
    t.t_m_l = vec3_from_json(require(s, "t_m_l"));
    if (s.contains("C")) t.distortion.C = mat3_from_json(s["C"]);
    if (s.contains("H")) t.distortion.H = vec3_from_json(s["H"]);
    rig.sensors.push_back(t);
  }
  rig.validate();
  return rig;
}

Json to_json(const CalibrationConfig& c) {
  Json lambda;
  if (c.lambda_policy.kind == LambdaPolicy::Kind::kFixed) {
    lambda = {{"kind", "fixed"}, {"lambda", c.lambda_policy.lambda}};
  } else {
    lambda = {{"kind", "l_curve"}, {"grid", c.lambda_policy.grid}};
  }
  return {{"solver", to_string(c.solver)},
          {"max_iterations", c.max_iterations},
          {"step_tolerance", c.step_tolerance},
          {"damping", c.damping},
          {"lambda_policy", std::move(lambda)},
          {"tsvd_rank", c.tsvd_rank},
          {"out_of_map_policy", to_string(c.out_of_map_policy)},
          {"max_skip_fraction", c.max_skip_fraction},
          {"variance_floor", c.variance_floor}};
}

CalibrationConfig config_from_json(const Json& j) {
  CalibrationConfig c;
  c.solver = intrinsic_solver_from_string(value_or<std::string>(j, "solver", "wrrtls"));
  c.max_iterations = value_or<int>(j, "max_iterations", c.max_iterations);
  c.step_tolerance = num_or(j, "step_tolerance", c.step_tolerance);
  c.damping = num_or(j, "damping", c.damping);
  if (j.contains("lambda_policy")) {
    const Json& lp = j["lambda_policy"];
    const auto kind = value_or<std::string>(lp, "kind", "fixed");
    if (kind == "fixed") {
      c.lambda_policy = LambdaPolicy::fixed(num_or(lp, "lambda", c.lambda_policy.lambda));
    } else if (kind == "l_curve") {
      c.lambda_policy = lp.contains("grid") ? LambdaPolicy::l_curve(doubles_from_json(lp["grid"], "grid"))
                                            : LambdaPolicy::l_curve();
    } else {
      parse_error("unknown lambda_policy kind '" + kind + "'");
    }
  }
  c.tsvd_rank = value_or<int>(j, "tsvd_rank", c.tsvd_rank);
  c.out_of_map_policy = out_of_map_from_string(value_or<std::string>(j, "out_of_map_policy", "skip_sample"));
  c.max_skip_fraction = num_or(j, "max_skip_fraction", c.max_skip_fraction);
  c.variance_floor = num_or(j, "variance_floor", c.variance_floor);
  c.validate();
  return c;
}

Json to_json(const CalibrationResult& r) {
  return {{"t_m_l", to_json(r.t_m_l)},
          {"C", to_json(r.distortion.C)},
          {"H", to_json(r.distortion.H)},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"final_rms", r.final_rms},
          {"lambda", r.lambda},
          {"skipped_samples", r.skipped_samples},
          {"status", r.status},
          {"trace", trace_to_json(r.trace)},
          {"units", {{"t_m_l", "m"}, {"H", "uT"}, {"final_rms", "uT"}, {"trace.cost", "uT^2"}}}};
}

CalibrationResult result_from_json(const Json& j) {
  CalibrationResult r;
  r.t_m_l = vec3_from_json(require(j, "t_m_l"));
  r.distortion.C = mat3_from_json(require(j, "C"));
  r.distortion.H = vec3_from_json(require(j, "H"));
  r.converged = value_or<bool>(j, "converged", false);
  r.iterations = value_or<int>(j, "iterations", 0);
  r.final_rms = num_or(j, "final_rms", 0.0);
  r.lambda = num_or(j, "lambda", 0.0);
  r.skipped_samples = value_or<std::size_t>(j, "skipped_samples", 0);
  r.status = value_or<std::string>(j, "status", "");
  if (j.contains("trace")) {
    for (const auto& e : j["trace"]) r.trace.push_back({vec3_from_json(require(e, "t")), number(require(e, "cost"), "cost")});
  }
  return r;
}

Json to_json(const MapSpec& m) {
  return {{"region", to_json(m.region)},
          {"spacing", m.spacing},
          {"z_levels", m.z_levels},
          {"noise_sigma", m.noise_sigma},
          {"hyper", to_json(m.hyper)},
          {"block_size", m.block_size},
          {"block_overlap", m.block_overlap},
          {"seed", m.seed}};
}

MapSpec map_spec_from_json(const Json& j) {
  MapSpec m;
  if (j.contains("region")) m.region = box_from_json(j["region"]);
  m.spacing = num_or(j, "spacing", m.spacing);
  if (j.contains("z_levels")) m.z_levels = doubles_from_json(j["z_levels"], "z_levels");
  m.noise_sigma = num_or(j, "noise_sigma", m.noise_sigma);
  if (j.contains("hyper")) m.hyper = hyper_from_json(j["hyper"]);
  m.block_size = num_or(j, "block_size", m.block_size);
  m.block_overlap = num_or(j, "block_overlap", m.block_overlap);
  m.seed = value_or<std::uint64_t>(j, "seed", m.seed);
  m.validate();
  return m;
}

Json to_json(const SweepSpec& s) {
  Json paths = Json::array();
  for (const auto& p : s.paths) paths.push_back(to_json(p));
  Json interps = Json::array();
  for (auto i : s.interpolations) interps.push_back(to_string(i));
  Json solvers = Json::array();
  for (auto v : s.solvers) solvers.push_back(to_string(v));
  return {{"world", to_json(s.world)},
          {"map", to_json(s.map)},
          {"paths", std::move(paths)},
          {"noise_levels", s.noise_levels},
          {"n_distortions", s.n_distortions},
          {"n_initial_offsets", s.n_initial_offsets},
          {"offset_min", s.offset_min},
          {"offset_range", s.offset_range},
          {"distortion_scale", s.distortion_scale},
          {"lever_arm", to_json(s.lever_arm)},
          {"calibration", to_json(s.calibration)},
          {"seed", s.seed},
          {"offset_bins", s.offset_bins},
          {"densities", s.densities},
          {"interpolations", std::move(interps)},
          {"solvers", std::move(solvers)}};
}

SweepSpec sweep_spec_from_json(const Json& j) {
  SweepSpec s;
  if (j.contains("world")) s.world = world_from_json(j["world"]);
  if (j.contains("map")) s.map = map_spec_from_json(j["map"]);
  if (j.contains("paths")) {
    s.paths.clear();
    for (const auto& p : j["paths"]) s.paths.push_back(path_from_json(p));
  }
  if (j.contains("noise_levels")) s.noise_levels = doubles_from_json(j["noise_levels"], "noise_levels");
  s.n_distortions = value_or<int>(j, "n_distortions", s.n_distortions);
  s.n_initial_offsets = value_or<int>(j, "n_initial_offsets", s.n_initial_offsets);
  s.offset_min = num_or(j, "offset_min", s.offset_min);
  s.offset_range = num_or(j, "offset_range", s.offset_range);
  s.distortion_scale = num_or(j, "distortion_scale", s.distortion_scale);
  if (j.contains("lever_arm")) s.lever_arm = vec3_from_json(j["lever_arm"]);
  if (j.contains("calibration")) s.calibration = config_from_json(j["calibration"]);
  s.seed = value_or<std::uint64_t>(j, "seed", s.seed);
  if (j.contains("offset_bins")) s.offset_bins = doubles_from_json(j["offset_bins"], "offset_bins");
  if (j.contains("densities")) s.densities = doubles_from_json(j["densities"], "densities");
  if (j.contains("interpolations")) {
    s.interpolations.clear();
    for (const auto& i : j["interpolations"]) s.interpolations.push_back(interpolation_from_string(i.get<std::string>()));
  }
  if (j.contains("solvers")) {
    s.solvers.clear();
    for (const auto& v : j["solvers"]) s.solvers.push_back(intrinsic_solver_from_string(v.get<std::string>()));
  }
  s.validate();
  return s;
}

// ---- reports ----

Json to_json(const ReadingError& e) {
  return {{"mean_sq", e.mean_sq},
          {"axis_mean_abs", to_json(e.axis_mean_abs)},
          {"axis_mean", to_json(e.axis_mean)},
          {"axis_std", to_json(e.axis_std)},
          {"samples", e.samples},
          {"skipped", e.skipped},
          {"units", {{"mean_sq", "uT^2"}, {"axis_*", "uT"}}}};
}

Json to_json(const MetricsReport& m) {
  Json j = {{"e_t", m.e_t},
            {"e_C", m.e_C},
            {"e_H", m.e_H},
            {"success", to_string(m.success)},
            {"units", {{"e_t", "m^2"}, {"e_C", "1"}, {"e_H", "uT^2"}}}};
  if (m.reading) j["reading"] = to_json(*m.reading);
  return j;
}

Json to_json(const Summary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"std", s.std},
          {"median", s.median}, {"min", s.min}, {"max", s.max}};
}

Json to_json(const TrialRecord& r) {
  Json j;
  j["sweep"] = r.sweep;
  j["trial"] = r.trial;
  j["trial_seed"] = r.trial_seed;
  j["path"] = to_json(r.path);
  j["noise_sigma"] = r.noise_sigma;
  j["density"] = r.density;
  j["interpolation"] = to_string(r.interpolation);
  j["config"] = to_json(r.config);
  j["truth"] = {{"t_m_l", to_json(r.truth.t_m_l)},
                {"C", to_json(r.truth.distortion.C)},
                {"H", to_json(r.truth.distortion.H)}};
  j["t0"] = to_json(r.t0);
  j["offset"] = r.offset;
  j["ok"] = r.ok;
  if (r.ok) {
    Json res = to_json(r.result);
    res.erase("trace");
    res.erase("units");
    j["result"] = std::move(res);
    j["metrics"] = to_json(r.metrics);
    j["bias_error"] = r.bias_error;
  } else {
    j["error"] = r.error;
  }
  return j;
}

Json to_json(const Table1Report& r) {
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"path", to_string(c.path)},
                     {"noise_sigma", c.noise_sigma},
                     {"e_t", summary_or_null(c.e_t)},
                     {"e_C", summary_or_null(c.e_C)},
                     {"e_H", summary_or_null(c.e_H)},
                     {"failures", c.failures}});
  }
  return {{"sweep", "table1"}, {"spec", to_json(r.spec)}, {"cells", std::move(cells)}};
}

Json to_json(const SuccessReport& r) {
  Json bins = Json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"trials", b.trials},
                    {"small", b.small}, {"medium", b.medium}, {"failure", b.failure}});
  }
  return {{"sweep", "success"}, {"spec", to_json(r.spec)}, {"bins", std::move(bins)}};
}

Json to_json(const AblationReport& r) {
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"density", c.density},
                     {"interpolation", to_string(c.interpolation)},
                     {"solver", to_string(c.solver)},
                     {"bias_error", summary_or_null(c.bias_error)},
                     {"e_t", summary_or_null(c.e_t)},
                     {"failures", c.failures}});
  }
  return {{"sweep", "ablation"}, {"spec", to_json(r.spec)}, {"cells", std::move(cells)}};
}

std::string trials_csv(const std::vector<TrialRecord>& trials) {
  std::ostringstream s;
  s << "sweep,trial,trial_seed,path,noise_sigma,density,interpolation,solver,lambda_policy,"
       "tsvd_rank,max_iterations,offset,ok,t_x,t_y,t_z,e_t,e_C,e_H,bias_error,success,iterations\n";
  for (const auto& r : trials) {
    const auto& c = r.config;
    s << r.sweep << ',' << r.trial << ',' << r.trial_seed << ',' << to_string(r.path.kind) << ','
      << csv_number(r.noise_sigma) << ',' << csv_number(r.density) << ',' << to_string(r.interpolation)
      << ',' << to_string(c.solver) << ','
      << (c.lambda_policy.kind == LambdaPolicy::Kind::kFixed ? "fixed:" + csv_number(c.lambda_policy.lambda)
                                                             : std::string("l_curve"))
      << ',' << c.tsvd_rank << ',' << c.max_iterations << ',' << csv_number(r.offset) << ','
      << (r.ok ? 1 : 0) << ',' << csv_number(r.result.t_m_l.x()) << ',' << csv_number(r.result.t_m_l.y())
      << ',' << csv_number(r.result.t_m_l.z()) << ',' << csv_number(r.metrics.e_t) << ','
      << csv_number(r.metrics.e_C) << ',' << csv_number(r.metrics.e_H) << ',' << csv_number(r.bias_error)
      << ',' << to_string(r.metrics.success) << ',' << r.result.iterations << '\n';
  }
  return s.str();
}

std::string table1_csv(const Table1Report& r) {
  std::ostringstream s;
  s << "path,noise_sigma,n,e_t_mean,e_t_std,e_C_mean,e_C_std,e_H_mean,e_H_std,failures\n";
  for (const auto& c : r.cells) {
    s << to_string(c.path) << ',' << csv_number(c.noise_sigma) << ',' << c.e_t.count << ','
      << csv_number(c.e_t.mean) << ',' << csv_number(c.e_t.std) << ',' << csv_number(c.e_C.mean) << ','
      << csv_number(c.e_C.std) << ',' << csv_number(c.e_H.mean) << ',' << csv_number(c.e_H.std) << ','
      << c.failures << '\n';
  }
  return s.str();
}

std::string success_csv(const SuccessReport& r) {
  std::ostringstream s;
  s << "offset_lo,offset_hi,trials,small,medium,failure\n";
  for (const auto& b : r.bins) {
    s << csv_number(b.lo) << ',' << csv_number(b.hi) << ',' << b.trials << ',' << csv_number(b.small)
      << ',' << csv_number(b.medium) << ',' << csv_number(b.failure) << '\n';
  }
  return s.str();
}

std::string ablation_csv(const AblationReport& r) {
  std::ostringstream s;
  s << "density,interpolation,solver,n,bias_error_mean,bias_error_std,e_t_mean,failures\n";
  for (const auto& c : r.cells) {
    s << csv_number(c.density) << ',' << to_string(c.interpolation) << ',' << to_string(c.solver) << ','
      << c.bias_error.count << ',' << csv_number(c.bias_error.mean) << ',' << csv_number(c.bias_error.std)
      << ',' << csv_number(c.e_t.mean) << ',' << c.failures << '\n';
  }
  return s.str();
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    parse_error(path + ": " + e.what());
  }
}

void save_json(const Json& j, const std::string& path) { save_text(j.dump(2) + "\n", path); }

void save_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kInvalidArgument, "write failed for " + path);
}

}  // namespace maglidar
