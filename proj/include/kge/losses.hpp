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

#include <cstddef>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kge/boxes.hpp"
#include "kge/core.hpp"
#include "kge/geometry.hpp"
#include "kge/prototypes.hpp"

namespace kge {

// Similarities are clamped to [kSimilarityEps, 1 - kSimilarityEps] before
// any logarithm.
inline constexpr double kSimilarityEps = 1e-6;

struct ContrastiveLoss {
  double tau = 0.07;
  // false: the positive term is excluded from the denominator.
  bool include_positive_in_denominator = false;
};

struct FocalLoss {
  double alpha = 2.0;
  double beta = 4.0;
};

struct HingeLoss {
  double margin_floor = 0.1;
  int negatives = 5;
};

struct CrossEntropyLoss {};

struct LossConfig {
  std::variant<ContrastiveLoss, FocalLoss, HingeLoss, CrossEntropyLoss> kind = ContrastiveLoss{};
  Metric metric = Metric::cosine();

  void validate() const;
  std::string kind_name() const;
};

nlohmann::json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

struct LossOutput {
  double value = 0.0;
  Vector grad_query;
};

// Embedding map of H x W pixels with D channels, pixel-major.
struct EmbeddingMap {
  std::size_t height = 0, width = 0, dim = 0;
  std::vector<double> data;

  EmbeddingMap() = default;
  EmbeddingMap(std::size_t h, std::size_t w, std::size_t d)
      : height(h), width(w), dim(d), data(h * w * d, 0.0) {}

  std::span<double> pixel(std::size_t y, std::size_t x) {
    return {data.data() + (y * width + x) * dim, dim};
  }
  std::span<const double> pixel(std::size_t y, std::size_t x) const {
    return {data.data() + (y * width + x) * dim, dim};
  }
};

// One plane per foreground class (plane c-1 for class id c).
struct Heatmap {
  std::size_t height = 0, width = 0, classes = 0;
  std::vector<double> data;

  Heatmap() = default;
  Heatmap(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), classes(c), data(h * w * c, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

// -log( exp(s_pos / tau) / sum_{c != label} exp(s_c / tau) ). Label 0 is
// background with s_pos = 0. Lk metrics expect `query` and prototypes inside
// the unit ball; prototypes are projected here.
LossOutput contrastive_loss(std::span<const double> query, int label, const PrototypeSet& p,
                            const ContrastiveLoss& cfg, const Metric& metric);

struct FocalOutput {
  double value = 0.0;
  std::vector<double> grad_map;  // same layout as EmbeddingMap::data
  std::size_t centers = 0;
};

// Heatmap focal loss with similarities in place of class likelihoods:
// -(1-s)^a log s at centres (Y == 1), -(1-Y)^b s^a log(1-s) elsewhere,
// normalised by max(1, number of centres).
FocalOutput focal_embedding_loss(const EmbeddingMap& map, const PrototypeSet& p,
                                 const Heatmap& heatmap, const FocalLoss& cfg,
                                 const Metric& metric);

// Margin hinge over an explicit set of negatives. `negatives` holds class
// ids different from `label`.
LossOutput hinge_embedding_loss(std::span<const double> query, int label,
                                const std::vector<int>& negatives, const PrototypeSet& p,
                                double margin_floor, const Metric& metric);

// Samples cfg.negatives classes uniformly without replacement from
// {1..C} minus the label.
std::vector<int> sample_negatives(std::size_t classes, int label, int count,
                                  std::mt19937_64& rng);

LossOutput hinge_embedding_loss(std::span<const double> query, int label, const PrototypeSet& p,
                                const HingeLoss& cfg, const Metric& metric,
                                std::mt19937_64& rng);

// (d_pos + sum_f max(0, margin_f - d_f)) / (count + 1).
double hinge_value(double positive_distance, std::span<const double> negative_distances,
                   std::span<const double> margins);

// sigma = max(1, min(w, h) / 6); per-class pointwise max of Gaussians
// centred on the rounded box centre, which is exactly 1.
Heatmap render_heatmap(const std::vector<GroundtruthBox>& boxes, std::size_t width,
                       std::size_t height, std::size_t classes);

struct CrossEntropyOutput {
  double value = 0.0;
  Vector grad_query;
  Matrix grad_weights;  // same shape as the weight matrix
};

// -log softmax(W b)_label with W of shape (C+1) x D, row 0 = background.
CrossEntropyOutput cross_entropy_baseline(std::span<const double> query, int label,
                                          const Matrix& weights);

}  // namespace kge
