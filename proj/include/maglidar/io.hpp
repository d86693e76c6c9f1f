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
 * @file io.hpp
 * @brief File formats: fingerprint JSONL, map container, and the JSON
 *        configs and reports used by the command-line tool.
 *
 * Fingerprint JSONL holds one record per line with a fixed field order:
 *
 *     {"t": seconds, "p": [x, y, z], "q": [w, x, y, z], "B": [bx, by, bz]}
 *
 * Doubles are written with the shortest representation that round-trips,
 * so read -> write reproduces every finite value bit for bit.
 */

#pragma once

#include "maglidar/core_types.hpp"
#include "maglidar/evaluation.hpp"
#include "maglidar/extrinsic.hpp"
#include "maglidar/magmap.hpp"
#include "maglidar/simulator.hpp"

#include "json.hpp"

#include <iosfwd>
#include <string>

namespace maglidar {

using Json = nlohmann::ordered_json;

inline constexpr const char* kMapSchema = "maglidar.magmap/1";

// Fingerprints.
std::string to_jsonl_record(const Fingerprint& f);
Fingerprint parse_jsonl_record(const std::string& line, Frame from, Frame to);
void write_jsonl(const Dataset& dataset, std::ostream& out);
Dataset read_jsonl(std::istream& in, const std::string& sensor_id, Frame from, Frame to);
void save_jsonl(const Dataset& dataset, const std::string& path);
Dataset load_jsonl(const std::string& path, Frame from, Frame to);

// Maps.
Json map_to_json(const MagMap& map);
MagMap map_from_json(const Json& j);
void save_map(const MagMap& map, const std::string& path);
MagMap load_map(const std::string& path);

// Small value types.
Json to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j);
Json to_json(const Mat3& m);
Mat3 mat3_from_json(const Json& j);
Json to_json(const Box& b);
Box box_from_json(const Json& j);

Json to_json(const GpHyperparams& h);
GpHyperparams hyper_from_json(const Json& j);
Json to_json(const WorldConfig& w);
WorldConfig world_from_json(const Json& j);
Json to_json(const PathSpec& p);
PathSpec path_from_json(const Json& j);
Json to_json(const SensorRig& rig);
SensorRig rig_from_json(const Json& j);
Json to_json(const CalibrationConfig& c);
CalibrationConfig config_from_json(const Json& j);
Json to_json(const CalibrationResult& r);
CalibrationResult result_from_json(const Json& j);
Json to_json(const MapSpec& m);
MapSpec map_spec_from_json(const Json& j);
Json to_json(const SweepSpec& s);
SweepSpec sweep_spec_from_json(const Json& j);

Json to_json(const MetricsReport& m);
Json to_json(const ReadingError& e);
Json to_json(const Summary& s);
/// One report row: the full configuration that produced the trial plus its outcome.
Json to_json(const TrialRecord& r);
Json to_json(const Table1Report& r);
Json to_json(const SuccessReport& r);
Json to_json(const AblationReport& r);

/// Flat CSV views for plotting; one row per trial or per cell.
std::string trials_csv(const std::vector<TrialRecord>& trials);
std::string table1_csv(const Table1Report& r);
std::string success_csv(const SuccessReport& r);
std::string ablation_csv(const AblationReport& r);

Json load_json(const std::string& path);
void save_json(const Json& j, const std::string& path);
void save_text(const std::string& text, const std::string& path);

}  // namespace maglidar
