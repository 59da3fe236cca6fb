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
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kge/boxes.hpp"

namespace kge {

// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

struct APReport {
  double ap = 0.0;       // mean over classes and IoU thresholds
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap_w = 0.0;     // classes weighted by groundtruth count
  double ap_cat = 0.0;   // over categories, when a category map is given
  double ap_cat_w = 0.0;
  std::map<int, double> per_class;     // averaged over thresholds
  std::vector<int> excluded_classes;   // detected classes with no groundtruth
};

nlohmann::json to_json(const APReport& r);

// AP of a single class at a single IoU threshold: score-sorted detections
// greedily take the unmatched groundtruth box of highest IoU >= threshold;
// precision envelope sampled at 101 recall points.
double average_precision_single(const DetectionSet& dets, const GroundtruthSet& gts, int cls,
                                double iou_threshold);

// `category_of` maps class id -> category id (both >= 1); when given, the
// category metrics relabel detections and groundtruth before scoring.
APReport average_precision(const DetectionSet& dets, const GroundtruthSet& gts,
                           const std::vector<double>& iou_thresholds = coco_iou_thresholds(),
                           const std::map<int, int>* category_of = nullptr);

// Rows: groundtruth class 1..C. Columns 0..C-1: predicted class 1..C;
// column C: no detection with IoU >= floor (background/miss).
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::int64_t> counts;  // classes x (classes + 1)

  explicit ConfusionMatrix(std::size_t c = 0) : classes(c), counts(c * (c + 1), 0) {}
  std::int64_t& at(std::size_t gt, std::size_t pred) { return counts[gt * (classes + 1) + pred]; }
  std::int64_t at(std::size_t gt, std::size_t pred) const {
    return counts[gt * (classes + 1) + pred];
  }
  std::int64_t missed(std::size_t gt) const { return at(gt, classes); }
  std::int64_t row_total(std::size_t gt) const;
  std::int64_t total() const;
};

// For each groundtruth box, the highest-scoring detection in the same image
// with IoU >= iou_floor decides the predicted column.
ConfusionMatrix confusion_matrix(const DetectionSet& dets, const GroundtruthSet& gts,
                                 std::size_t classes, double iou_floor = 0.8);

// Confusion from parallel label vectors (1..C groundtruth, 0..C predictions;
// prediction 0 lands in the background column).
ConfusionMatrix confusion_from_labels(std::span<const int> truth, std::span<const int> predicted,
                                      std::size_t classes);

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& e,
                         const std::vector<std::string>& class_names);
// Reads the format written by write_confusion_csv (background column
// optional). Class names from the header go to `class_names` when given.
ConfusionMatrix read_confusion_csv(std::istream& in,
                                   std::vector<std::string>* class_names = nullptr);

// Base-2 Jensen-Shannon distance between two count rows, in [0, 1].
double js_distance(std::span<const double> p, std::span<const double> q);

struct ErrorComparison {
  std::vector<std::optional<double>> per_class;  // nullopt: row skipped
  std::vector<int> skipped;                      // class ids (1-based)
  double weighted_mean = 0.0;
};

// Per row, JS distance between the off-diagonal (misclassification) parts
// of the two C x C blocks; rows without errors in either matrix are skipped.
// The weighted mean uses `weights` (groundtruth counts) over kept rows.
ErrorComparison error_distribution_comparison(const ConfusionMatrix& a, const ConfusionMatrix& b,
                                              std::span<const double> weights);

void write_comparison_csv(std::ostream& out, const ErrorComparison& c,
                          const std::vector<std::string>& class_names);

struct CategoryConfusion {
  std::int64_t intra = 0;
  std::int64_t inter = 0;
  std::int64_t missed = 0;  // background column, not a confusion
  double fraction_intra = 0.0;
  bool fraction_defined = false;  // false when there are no confusions
};

// `category_of_class[c]` is the category index of class id c+1.
CategoryConfusion category_confusion(const ConfusionMatrix& e,
                                     const std::vector<int>& category_of_class);

nlohmann::json to_json(const CategoryConfusion& c);

}  // namespace kge
