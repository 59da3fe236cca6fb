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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kge/core.hpp"
#include "kge/heads.hpp"
#include "kge/losses.hpp"
#include "kge/prototypes.hpp"

namespace kge {

enum class ClusterGeometry { AlignedWithPrototypes, Random };

struct DatasetSpec {
  std::size_t input_dim = 32;
  std::size_t samples_per_class = 100;
  double covariance_scale = 0.3;  // isotropic standard deviation
  double mean_scale = 1.0;        // norm of every cluster mean
  ClusterGeometry geometry = ClusterGeometry::AlignedWithPrototypes;
  double background_fraction = 0.0;  // of the whole dataset, in [0, 1)
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const DatasetSpec& s);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

struct Sample {
  Vector feature;
  int label = 0;  // 0 = background
};

struct SyntheticDataset {
  std::vector<Sample> samples;
  std::vector<Vector> class_means;  // index c-1
  DatasetSpec spec;
};

// Gaussian clusters, one per prototype. Aligned geometry places the means
// at mean_scale * A * t_c / |t_c| for a random isometry A, so mean distances
// are a linear image of prototype chord distances. Background samples lie
// in a shell outside all means.
SyntheticDataset generate_dataset(const DatasetSpec& spec, const PrototypeSet& p);

// Fresh foreground samples from the clusters of `data` (same means and
// covariance scale), for held-out evaluation.
SyntheticDataset draw_heldout(const SyntheticDataset& data, std::size_t samples_per_class,
                              std::uint64_t seed);

struct OptimizerSpec {
  double learning_rate = 0.05;
  int steps = 2000;
  int batch = 64;
  double momentum = 0.0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const OptimizerSpec& s);
OptimizerSpec optimizer_spec_from_json(const nlohmann::json& j);

struct TrainReport {
  std::vector<double> loss_trace;  // mean batch loss per step
  double final_accuracy = 0.0;
  std::vector<int> predictions;  // per dataset sample, after training
  double wall_clock_seconds = 0.0;
};

// Excludes wall-clock so identical runs serialise identically.
nlohmann::json to_json(const TrainReport& r);

// Mini-batch SGD on the head parameters. Batches are drawn with replacement;
// a batch at least as large as the dataset means full-batch descent. For cross-entropy, `p` is the
// learned classifier: its rows and explicit background vector are updated
// in place and classification is argmax of the logits. All other losses
// keep `p` fixed and classify by nearest prototype.
TrainReport train(ProjectionHead& head, const SyntheticDataset& data, const LossConfig& loss,
                  PrototypeSet& p, const OptimizerSpec& opt);

// Classifies every sample with the trained head.
std::vector<int> predict(const ProjectionHead& head, const SyntheticDataset& data,
                         const LossConfig& loss, const PrototypeSet& p);

// Weight matrix for cross_entropy_baseline: background row, then classes.
Matrix classifier_weights(const PrototypeSet& p);

// Max over coordinates of |g_fd - g_an| / max(1e-8, |g_fd| + |g_an|) with
// central differences of width 2*step.
double finite_difference_check(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, std::span<const double> analytic,
                               double step = 1e-5);

// Finite-difference comparison that separates roundoff-dominated
// coordinates: where |g_fd| + |g_an| < tiny, a relative error only measures
// the O(eps |f| / step) noise of the difference quotient, so those
// coordinates are compared in absolute terms instead.
struct GradientComparison {
  double max_relative_error = 0.0;   // over coordinates with |g_fd| + |g_an| >= tiny
  double max_tiny_abs_error = 0.0;   // max |g_fd - g_an| over the others
  int tiny_coordinates = 0;
  int coordinates = 0;
};

GradientComparison compare_gradients(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, std::span<const double> analytic,
                                     double step = 1e-5, double tiny = 1e-5);

struct GradcheckResult {
  std::string loss;
  int instances = 0;
  double max_relative_error = 0.0;
  double max_tiny_abs_error = 0.0;
  int tiny_coordinates = 0;
  int coordinates = 0;
  double seconds = 0.0;

  bool passed(double relative_tolerance = 1e-4, double absolute_tolerance = 1e-9) const {
    return max_relative_error < relative_tolerance && max_tiny_abs_error < absolute_tolerance;
  }
};

nlohmann::json to_json(const GradcheckResult& r);

// Finite-difference check over `instances` seeded random instances of the
// named loss ("contrastive", "focal", "hinge", "cross-entropy"); cosine and
// Manhattan metrics alternate. Hinge instances near a kink are redrawn.
GradcheckResult gradcheck_suite(const std::string& loss, int instances, std::uint64_t seed,
                                double step = 1e-5);

inline const std::vector<std::string> kLossNames = {"contrastive", "focal", "hinge",
                                                    "cross-entropy"};

}  // namespace kge
