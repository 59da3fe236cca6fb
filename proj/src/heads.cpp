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

#include "kge/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace kge {

using nlohmann::json;

ProjectionHead make_head(std::size_t input_dim, std::size_t output_dim, double init_scale,
                         std::uint64_t seed) {
  ProjectionHead h{Matrix(output_dim, input_dim), Vector(output_dim, 0.0)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init_scale);
  for (double& w : h.weight.data()) w = normal(rng);
  return h;
}

json to_json(const ProjectionHead& h) {
  json rows = json::array();
  for (std::size_t r = 0; r < h.weight.rows(); ++r) rows.push_back(h.weight.row_copy(r));
  return {{"input_dim", h.input_dim()}, {"output_dim", h.output_dim()}, {"weight", rows},
          {"bias", h.bias}};
}

ProjectionHead projection_head_from_json(const json& j) {
  try {
    ProjectionHead h;
    h.weight = Matrix::from_rows(j.at("weight").get<std::vector<Vector>>());
    h.bias = j.at("bias").get<Vector>();
    if (h.bias.size() != h.weight.rows()) throw ConfigError("head bias/weight shape mismatch");
    if (!all_finite(h.weight.data()) || !all_finite(h.bias))
      throw ConfigError("head parameters must be finite");
    return h;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("projection head JSON: ") + e.what());
  }
}

Vector project(const ProjectionHead& head, std::span<const double> feature, const Metric& metric) {
  if (feature.size() != head.input_dim())
    throw ConfigError("project: feature has " + std::to_string(feature.size()) +
                      " entries, head expects " + std::to_string(head.input_dim()));
  Vector activated(feature.begin(), feature.end());
  for (double& v : activated) v = std::tanh(v);
  Vector out = matvec(head.weight, activated);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += head.bias[i];
  return metric.needs_projection() ? project_unit_sphere(out) : out;
}

Classification classify_nn(std::span<const double> query, const PrototypeSet& p,
                           const Metric& metric) {
  if (query.size() != p.dim()) throw ConfigError("classify_nn: dimension mismatch");
  const PrototypeSet q = prepare_for_metric(p, metric);
  Classification out;
  out.similarities.reserve(q.size());
  int best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (int c = 1; c <= static_cast<int>(q.size()); ++c) {
    const double s = similarity(query, q.prototype(c), metric);
    out.similarities.push_back(s);
    if (s > best_sim) {
      best_sim = s;
      best = c;
    }
  }
  if (const auto* e = std::get_if<ExplicitBackground>(&q.background)) {
    // Class 0 has the lowest id, so it wins ties.
    const double s = similarity(query, e->vector, metric);
    if (s >= best_sim) {
      best_sim = s;
      best = 0;
    }
  } else if (best_sim < std::get<ImplicitBackground>(q.background).threshold) {
    best = 0;
  }
  out.cls = best;
  out.score = best_sim;
  return out;
}

DetectionSet decode_keypoints(const EmbeddingMap& map, const PrototypeSet& p, const Metric& metric,
                              double max_distance, std::int64_t image_id) {
  if (map.height == 0 || map.width == 0) throw ConfigError("decode_keypoints: empty map");
  if (map.dim != p.dim()) throw ConfigError("decode_keypoints: dimension mismatch");
  if (map.data.size() != map.height * map.width * map.dim)
    throw ConfigError("decode_keypoints: map storage does not match its shape");
  if (!all_finite(map.data)) throw ConfigError("decode_keypoints: map has non-finite entries");

  const PrototypeSet q = prepare_for_metric(p, metric);
  const std::size_t h = map.height, w = map.width;
  std::vector<Vector> pixels(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto px = map.pixel(y, x);
      pixels[y * w + x] = metric.needs_projection() ? project_unit_sphere(px)
                                                    : Vector(px.begin(), px.end());
    }

  DetectionSet out;
  std::vector<double> field(h * w);
  for (int c = 1; c <= static_cast<int>(q.size()); ++c) {
    for (std::size_t i = 0; i < h * w; ++i) field[i] = distance(pixels[i], q.prototype(c), metric);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const double d = field[i];
        if (!(d < max_distance)) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const auto ny = static_cast<std::ptrdiff_t>(y) + dy;
            const auto nx = static_cast<std::ptrdiff_t>(x) + dx;
            if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(h) ||
                nx >= static_cast<std::ptrdiff_t>(w))
              continue;
            const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
            if (field[j] < d || (field[j] == d && j < i)) {
              peak = false;
              break;
            }
          }
        if (!peak) continue;
        const double cx = static_cast<double>(x), cy = static_cast<double>(y);
        out.push_back({image_id, {cx - 0.5, cy - 0.5, cx + 0.5, cy + 0.5}, c, 1.0 - d / 2.0});
      }
  }
  return out;
}

std::vector<int> solve_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows(), m = cost.cols();
  if (n == 0) return {};
  if (n > m)
    throw ConfigError("assignment needs at least as many columns (" + std::to_string(m) +
                      ") as rows (" + std::to_string(n) + ")");
  if (!all_finite(cost.data())) throw ConfigError("assignment cost matrix must be finite");

  // Shortest augmenting paths with row/column potentials, 1-based with a
  // virtual column 0.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= m; ++j)
    if (match[j] != 0) row_to_col[match[j] - 1] = static_cast<int>(j - 1);
  return row_to_col;
}

Matrix matching_cost(const std::vector<Prediction>& predictions,
                     const std::vector<GroundtruthBox>& groundtruth, const PrototypeSet& p,
                     const Metric& metric, const MatchWeights& w, double image_width,
                     double image_height) {
  if (!(image_width > 0.0) || !(image_height > 0.0))
    throw ConfigError("matching_cost: image size must be positive");
  const PrototypeSet q = prepare_for_metric(p, metric);
  Matrix cost(groundtruth.size(), predictions.size());
  for (std::size_t g = 0; g < groundtruth.size(); ++g) {
    const auto& gt = groundtruth[g];
    if (gt.cls < 1 || static_cast<std::size_t>(gt.cls) > q.size())
      throw ConfigError("matching_cost: groundtruth class " + std::to_string(gt.cls) +
                        " out of range");
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const auto& pr = predictions[i];
      const double s = std::clamp(similarity(pr.embedding, q.prototype(gt.cls), metric),
                                  kSimilarityEps, 1.0 - kSimilarityEps);
      const double l1 = std::abs(pr.box.x1 - gt.box.x1) / image_width +
                        std::abs(pr.box.y1 - gt.box.y1) / image_height +
                        std::abs(pr.box.x2 - gt.box.x2) / image_width +
                        std::abs(pr.box.y2 - gt.box.y2) / image_height;
      cost(g, i) = -w.similarity * std::log(s) + w.giou * (1.0 - giou(pr.box, gt.box)) + w.l1 * l1;
    }
  }
  return cost;
}

MatchResult hungarian_match(const std::vector<Prediction>& predictions,
                            const std::vector<GroundtruthBox>& groundtruth, const PrototypeSet& p,
                            const Metric& metric, const MatchWeights& w, double image_width,
                            double image_height) {
  if (groundtruth.size() > predictions.size())
    throw ConfigError("hungarian_match: " + std::to_string(groundtruth.size()) +
                      " groundtruth boxes but only " + std::to_string(predictions.size()) +
                      " predictions");
  MatchResult r;
  r.cost = matching_cost(predictions, groundtruth, p, metric, w, image_width, image_height);
  r.gt_to_prediction = solve_assignment(r.cost);
  r.prediction_labels.assign(predictions.size(), 0);
  for (std::size_t g = 0; g < groundtruth.size(); ++g) {
    const auto i = static_cast<std::size_t>(r.gt_to_prediction[g]);
    r.prediction_labels[i] = groundtruth[g].cls;
    r.total_cost += r.cost(g, i);
  }
  return r;
}

}  // namespace kge
