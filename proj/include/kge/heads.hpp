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
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "kge/boxes.hpp"
#include "kge/core.hpp"
#include "kge/geometry.hpp"
#include "kge/losses.hpp"
#include "kge/prototypes.hpp"

namespace kge {

// Linear map from (tanh-activated) input features into prototype space.
struct ProjectionHead {
  Matrix weight;  // D x D_in
  Vector bias;    // D

  std::size_t input_dim() const { return weight.cols(); }
  std::size_t output_dim() const { return weight.rows(); }
};

ProjectionHead make_head(std::size_t input_dim, std::size_t output_dim, double init_scale,
                         std::uint64_t seed);

nlohmann::json to_json(const ProjectionHead& h);
ProjectionHead projection_head_from_json(const nlohmann::json& j);

// W * tanh(feature) + bias, then projected into the unit ball when the
// metric requires it.
Vector project(const ProjectionHead& head, std::span<const double> feature, const Metric& metric);

struct Classification {
  int cls = 0;          // 0 = background
  double score = 0.0;   // similarity of the winning candidate
  Vector similarities;  // per foreground class, index c-1
};

// Nearest-prototype classification. Implicit background: class 0 when the
// best similarity is below the threshold. Explicit background: the
// background vector competes as class 0. Ties go to the lowest class id.
Classification classify_nn(std::span<const double> query, const PrototypeSet& p,
                           const Metric& metric);

// Per class, local minima of the distance field in an 8-connected
// neighbourhood with distance below `max_distance`. On plateaus the first
// pixel in raster order wins. Each peak becomes a unit box centred on the
// pixel with score = similarity at the peak.
DetectionSet decode_keypoints(const EmbeddingMap& map, const PrototypeSet& p, const Metric& metric,
                              double max_distance, std::int64_t image_id = 0);

// Distance that corresponds to a similarity threshold: 2 * (1 - s).
inline double distance_for_similarity(double s) { return 2.0 * (1.0 - s); }

// Minimum-cost assignment of every row to a distinct column of a
// rows <= cols cost matrix. Returns the column chosen for each row.
std::vector<int> solve_assignment(const Matrix& cost);

struct MatchWeights {
  double similarity = 1.0;
  double giou = 2.0;
  double l1 = 5.0;
};

struct Prediction {
  Box box;
  Vector embedding;
};

struct MatchResult {
  std::vector<int> gt_to_prediction;   // prediction index per groundtruth
  std::vector<int> prediction_labels;  // matched class id, 0 if unmatched
  Matrix cost;                         // groundtruth x prediction
  double total_cost = 0.0;
};

// Matching cost -l_sim log sim + l_giou (1 - giou) + l_l1 |box diff|_1 with
// boxes normalised by the image size.
Matrix matching_cost(const std::vector<Prediction>& predictions,
                     const std::vector<GroundtruthBox>& groundtruth, const PrototypeSet& p,
                     const Metric& metric, const MatchWeights& w, double image_width,
                     double image_height);

MatchResult hungarian_match(const std::vector<Prediction>& predictions,
                            const std::vector<GroundtruthBox>& groundtruth, const PrototypeSet& p,
                            const Metric& metric, const MatchWeights& w, double image_width,
                            double image_height);

}  // namespace kge
