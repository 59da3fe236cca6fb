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

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

namespace kge {

// Axis-aligned box in pixel coordinates, y pointing down.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 < x2 && y1 < y2; }

  friend bool operator==(const Box&, const Box&) = default;
};

// Throws ConfigError on a degenerate box.
void require_valid(const Box& b);

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
// IoU minus the fraction of the enclosing hull not covered by the union.
double giou(const Box& a, const Box& b);

// Class ids: 0 is background, foreground classes are 1..C.
struct GroundtruthBox {
  std::int64_t image_id = 0;
  Box box;
  int cls = 0;
};

struct Detection {
  std::int64_t image_id = 0;
  Box box;
  int cls = 0;
  double score = 0.0;
};

using GroundtruthSet = std::vector<GroundtruthBox>;
using DetectionSet = std::vector<Detection>;

// JSON lines: {"image_id": int, "box": [x1,y1,x2,y2], "class": int, "score": real}.
// Groundtruth lines carry no score (any score field is ignored).
DetectionSet read_detections(std::istream& in);
GroundtruthSet read_groundtruth(std::istream& in);
DetectionSet load_detections(const std::filesystem::path& path);
GroundtruthSet load_groundtruth(const std::filesystem::path& path);
void write_detections(std::ostream& out, const DetectionSet& dets);
void write_groundtruth(std::ostream& out, const GroundtruthSet& gts);

}  // namespace kge
