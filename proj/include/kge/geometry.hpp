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

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kge/core.hpp"

namespace kge {

// Distance used for nearest-prototype classification. `Lk` with order 1 is
// the Manhattan distance; its inputs must be projected into the unit ball.
struct Metric {
  enum class Kind { Cosine, Lk };
  Kind kind = Kind::Cosine;
  double order = 1.0;  // only used by Lk

  static Metric cosine() { return {Kind::Cosine, 1.0}; }
  static Metric manhattan() { return {Kind::Lk, 1.0}; }
  static Metric lk(double order) { return {Kind::Lk, order}; }

  bool needs_projection() const { return kind == Kind::Lk; }
  std::string name() const;
  // "cosine", "manhattan", "euclidean", or "l<order>" such as "l3".
  static Metric parse(const std::string& name);

  friend bool operator==(const Metric&, const Metric&) = default;
};

// x / max(1, ||x||_2).
Vector project_unit_sphere(std::span<const double> x);
// Jacobian-transpose product of project_unit_sphere at `x` applied to `g`.
Vector project_unit_sphere_backward(std::span<const double> x, std::span<const double> g);

double lk_distance(std::span<const double> a, std::span<const double> b, double k = 1.0);
double cosine_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b, const Metric& m);

// Gradient of distance(a, b, m) with respect to `a`. Subgradient 0 where
// |a_d - b_d| = 0 for the Lk family.
Vector distance_grad(std::span<const double> a, std::span<const double> b, const Metric& m);

// 1 - d(a, b) / 2. Lk metrics require ||a||_2, ||b||_2 <= 1 + 1e-9.
double similarity(std::span<const double> a, std::span<const double> b, const Metric& m);
// d similarity / d a.
Vector similarity_grad(std::span<const double> a, std::span<const double> b, const Metric& m);

// Per-dimension (x - mean) / std with population std; zero-variance
// dimensions map to 0.
std::vector<Vector> zscore_standardize(const std::vector<Vector>& queries);

struct HubnessReport {
  int k = 0;
  std::vector<int> k_occurrence;
  double skewness = 0.0;
};

// k-occurrence of each prototype among the k nearest prototypes of every
// query, with the population skewness of the counts.
HubnessReport hubness(const std::vector<Vector>& queries, const Matrix& prototypes, int k,
                      const Metric& m);

nlohmann::json to_json(const HubnessReport& r);

}  // namespace kge
