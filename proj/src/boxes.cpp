// Copyright 2026 The kgeheads Authors
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

#include "kge/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "kge/core.hpp"
#include "text_util.hpp"

namespace kge {

void require_valid(const Box& b) {
  if (!b.valid() || !std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) ||
      !std::isfinite(b.y2))
    throw ConfigError("degenerate box [" + std::to_string(b.x1) + ", " + std::to_string(b.y1) +
                      ", " + std::to_string(b.x2) + ", " + std::to_string(b.y2) + "]");
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

double iou(const Box& a, const Box& b) {
  require_valid(a);
  require_valid(b);
  const double inter = intersection_area(a, b);
  return inter / (a.area() + b.area() - inter);
}

double giou(const Box& a, const Box& b) {
  require_valid(a);
  require_valid(b);
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double hull = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                      (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  return inter / uni - (hull - uni) / hull;
}

namespace {

using nlohmann::json;

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("box must be an array of 4 numbers");
  Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  require_valid(b);
  return b;
}

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

template <typename F>
void for_each_json_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

DetectionSet read_detections(std::istream& in) {
  DetectionSet out;
  for_each_json_line(in, [&out](const json& j) {
    Detection d;
    d.image_id = j.at("image_id").get<std::int64_t>();
    d.box = box_from_json(j.at("box"));
    d.cls = j.at("class").get<int>();
    d.score = j.at("score").get<double>();
    if (!(d.score >= 0.0 && d.score <= 1.0)) throw ConfigError("score outside [0, 1]");
    if (d.cls < 0) throw ConfigError("negative class id");
    out.push_back(d);
  });
  return out;
}

GroundtruthSet read_groundtruth(std::istream& in) {
  GroundtruthSet out;
  for_each_json_line(in, [&out](const json& j) {
    GroundtruthBox g;
    g.image_id = j.at("image_id").get<std::int64_t>();
    g.box = box_from_json(j.at("box"));
    g.cls = j.at("class").get<int>();
    if (g.cls < 1) throw ConfigError("groundtruth class ids start at 1");
    out.push_back(g);
  });
  return out;
}

DetectionSet load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open detections file " + path.string());
  return read_detections(in);
}

GroundtruthSet load_groundtruth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open groundtruth file " + path.string());
  return read_groundtruth(in);
}

void write_detections(std::ostream& out, const DetectionSet& dets) {
  for (const auto& d : dets)
    out << json{{"image_id", d.image_id}, {"box", box_to_json(d.box)}, {"class", d.cls},
                {"score", d.score}}
               .dump()
        << '\n';
}

void write_groundtruth(std::ostream& out, const GroundtruthSet& gts) {
  for (const auto& g : gts)
    out << json{{"image_id", g.image_id}, {"box", box_to_json(g.box)}, {"class", g.cls}}.dump()
        << '\n';
}

}  // namespace kge
