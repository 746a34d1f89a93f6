// Copyright 2026 The UoI Toolkit Authors. All Rights Reserved.
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

#pragma once

#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uoi/box.hpp"
#include "uoi/evaluation.hpp"
#include "uoi/grouping.hpp"
#include "uoi/simulator.hpp"

namespace uoi {

/// Input failure carrying "file:line: message" context.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One line of a detection file. `box` is the detection output; `proposal`
/// (pre-regression box) is optional and only required by the grouping
/// pipelines that key on it.
struct DetectionRecord {
  int image_id = 0;
  int class_id = 0;
  double score = 0.0;
  Box box;
  std::optional<Box> proposal;
};

namespace detail {

using json = nlohmann::ordered_json;

inline Box parse_box_field(const json& value, const std::string& where) {
  if (!value.is_array() || value.size() != 4) {
    throw std::invalid_argument(where + ": expected [x1,y1,x2,y2]");
  }
  for (const auto& v : value) {
    if (!v.is_number()) {
      throw std::invalid_argument(where + ": coordinates must be numbers");
    }
  }
  try {
    return Box(value[0].get<double>(), value[1].get<double>(),
               value[2].get<double>(), value[3].get<double>());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(where + ": " + e.what());
  }
}

inline json box_to_json(const Box& b) {
  return json::array({b.x1, b.y1, b.x2, b.y2});
}

template <typename Fn>
std::vector<std::invoke_result_t<Fn, const json&>> read_jsonl(
    const std::string& path, Fn parse_record) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError(path + ": cannot open file");
  }
  std::vector<std::invoke_result_t<Fn, const json&>> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json parsed = json::parse(line);
      records.push_back(parse_record(parsed));
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << path << ":" << line_no << ": " << e.what();
      throw ParseError(os.str());
    }
  }
  return records;
}

inline const detail::json& require_field(const json& record,
                                         const char* name) {
  const auto it = record.find(name);
  if (it == record.end()) {
    throw std::invalid_argument(std::string("missing field '") + name + "'");
  }
  return *it;
}

}  // namespace detail

inline std::vector<DetectionRecord> read_detection_file(
    const std::string& path) {
  return detail::read_jsonl(path, [](const detail::json& j) {
    DetectionRecord rec;
    rec.image_id = detail::require_field(j, "image_id").get<int>();
    rec.class_id = detail::require_field(j, "class_id").get<int>();
    rec.score = detail::require_field(j, "score").get<double>();
    if (!(rec.score >= 0.0 && rec.score <= 1.0)) {
      throw std::invalid_argument("score must be in [0,1]");
    }
    rec.box = detail::parse_box_field(detail::require_field(j, "box"), "box");
    if (j.contains("proposal")) {
      rec.proposal = detail::parse_box_field(j["proposal"], "proposal");
    }
    return rec;
  });
}

inline void write_detection_file(std::ostream& out,
                                 std::span<const DetectionRecord> records) {
  for (const DetectionRecord& rec : records) {
    detail::json j;
    j["image_id"] = rec.image_id;
    j["class_id"] = rec.class_id;
    j["score"] = rec.score;
    j["box"] = detail::box_to_json(rec.box);
    if (rec.proposal) {
      j["proposal"] = detail::box_to_json(*rec.proposal);
    }
    out << j.dump() << '\n';
  }
}

inline void write_detection_file(const std::string& path,
                                 std::span<const DetectionRecord> records) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(path + ": cannot open for writing");
  }
  write_detection_file(out, records);
}

inline std::vector<GroundTruthBox> read_ground_truth_file(
    const std::string& path) {
  auto gts = detail::read_jsonl(path, [](const detail::json& j) {
    GroundTruthBox gt;
    gt.image_id = detail::require_field(j, "image_id").get<int>();
    gt.instance_id = detail::require_field(j, "instance_id").get<int>();
    gt.class_id = detail::require_field(j, "class_id").get<int>();
    gt.box = detail::parse_box_field(detail::require_field(j, "box"), "box");
    return gt;
  });
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (std::size_t k = i + 1; k < gts.size(); ++k) {
      if (gts[i].image_id == gts[k].image_id &&
          gts[i].instance_id == gts[k].instance_id) {
        std::ostringstream os;
        os << path << ": duplicate (image_id, instance_id) = ("
           << gts[i].image_id << ", " << gts[i].instance_id << ")";
        throw ParseError(os.str());
      }
    }
  }
  return gts;
}

inline void write_ground_truth_file(std::ostream& out,
                                    std::span<const GroundTruthBox> gts) {
  for (const GroundTruthBox& gt : gts) {
    detail::json j;
    j["image_id"] = gt.image_id;
    j["instance_id"] = gt.instance_id;
    j["class_id"] = gt.class_id;
    j["box"] = detail::box_to_json(gt.box);
    out << j.dump() << '\n';
  }
}

/// Reads a simulation config in `key = value` text form. Lines starting
/// with '#' and blank lines are skipped. Problems are collected across the
/// whole file and reported together, one per field.
inline SimConfig read_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError(path + ": cannot open file");
  }
  SimConfig config;
  std::vector<std::string> errors;
  std::string line;
  int line_no = 0;

  auto record_error = [&](const std::string& key, const std::string& what) {
    std::ostringstream os;
    os << path << ":" << line_no << ": " << key << ": " << what;
    errors.push_back(os.str());
  };

  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      record_error("(line)", "expected 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::istringstream vs(value);
    try {
      if (key == "seed") {
        config.rng_seed = std::stoull(value);
      } else if (key == "scenes") {
        config.n_scenes = std::stoi(value);
      } else if (key == "objects_per_scene") {
        if (!(vs >> config.objects_per_scene.first >>
              config.objects_per_scene.second)) {
          throw std::invalid_argument("expected two integers");
        }
      } else if (key == "image_size") {
        if (!(vs >> config.image_size.first >> config.image_size.second)) {
          throw std::invalid_argument("expected two integers");
        }
      } else if (key == "proposals_per_object") {
        if (!(vs >> config.proposals_per_object.first >>
              config.proposals_per_object.second)) {
          throw std::invalid_argument("expected two integers");
        }
      } else if (key == "proposal_iou_band") {
        if (!(vs >> config.proposal_iou_band.first >>
              config.proposal_iou_band.second)) {
          throw std::invalid_argument("expected two reals");
        }
      } else if (key == "regressor_mode") {
        if (value == "intersection") {
          config.regressor_mode = RegressorMode::kIntersection;
        } else if (value == "fullbox") {
          config.regressor_mode = RegressorMode::kFullBox;
        } else {
          throw std::invalid_argument("expected intersection|fullbox");
        }
      } else if (key == "sigma0") {
        config.sigma0 = std::stod(value);
      } else if (key == "kappa") {
        config.kappa = std::stod(value);
      } else if (key == "classifier_accuracy") {
        config.classifier_accuracy = std::stod(value);
      } else if (key == "classes") {
        config.num_classes = std::stoi(value);
      } else if (key == "k") {
        config.postprocess.k = std::stod(value);
      } else if (key == "m") {
        config.postprocess.m = std::stoi(value);
      } else if (key == "score_floor") {
        config.postprocess.score_floor = std::stod(value);
      } else if (key == "per_class") {
        if (value == "true") {
          config.postprocess.per_class = true;
        } else if (value == "false") {
          config.postprocess.per_class = false;
        } else {
          throw std::invalid_argument("expected true|false");
        }
      } else if (key == "pipeline") {
        config.pipeline = parse_pipeline(value);
      } else {
        throw std::invalid_argument("unknown key");
      }
    } catch (const std::exception& e) {
      record_error(key, e.what());
    }
  }
  for (const std::string& field_error : validate_config(config)) {
    errors.push_back(path + ": " + field_error);
  }
  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) {
      if (!joined.empty()) joined += "\n";
      joined += e;
    }
    throw ParseError(joined);
  }
  return config;
}

/// Writes a config back out in the same key-value form it is read from.
inline void write_sim_config(std::ostream& out, const SimConfig& config) {
  out << "seed = " << config.rng_seed << '\n'
      << "scenes = " << config.n_scenes << '\n'
      << "objects_per_scene = " << config.objects_per_scene.first << ' '
      << config.objects_per_scene.second << '\n'
      << "image_size = " << config.image_size.first << ' '
      << config.image_size.second << '\n'
      << "proposals_per_object = " << config.proposals_per_object.first << ' '
      << config.proposals_per_object.second << '\n'
      << "proposal_iou_band = " << config.proposal_iou_band.first << ' '
      << config.proposal_iou_band.second << '\n'
      << "regressor_mode = "
      << (config.regressor_mode == RegressorMode::kIntersection
              ? "intersection"
              : "fullbox")
      << '\n'
      << "sigma0 = " << config.sigma0 << '\n'
      << "kappa = " << config.kappa << '\n'
      << "classifier_accuracy = " << config.classifier_accuracy << '\n'
      << "classes = " << config.num_classes << '\n'
      << "k = " << config.postprocess.k << '\n'
      << "m = " << config.postprocess.m << '\n'
      << "score_floor = " << config.postprocess.score_floor << '\n'
      << "per_class = " << (config.postprocess.per_class ? "true" : "false")
      << '\n'
      << "pipeline = " << pipeline_name(config.pipeline) << '\n';
}

}  // namespace uoi
