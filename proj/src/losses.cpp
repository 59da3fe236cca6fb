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

#include "kge/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace kge {

using nlohmann::json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void LossConfig::validate() const {
  std::visit(overloaded{
                 [](const ContrastiveLoss& c) {
                   if (!(c.tau > 0.0)) throw ConfigError("contrastive loss: tau must be > 0");
                 },
                 [](const FocalLoss& f) {
                   if (!(f.alpha >= 0.0) || !(f.beta >= 0.0))
                     throw ConfigError("focal loss: alpha and beta must be >= 0");
                 },
                 [](const HingeLoss& h) {
                   if (!(h.margin_floor > 0.0))
                     throw ConfigError("hinge loss: margin floor must be > 0");
                   if (h.negatives < 1) throw ConfigError("hinge loss: need >= 1 negative");
                 },
                 [](const CrossEntropyLoss&) {},
             },
             kind);
  if (metric.kind == Metric::Kind::Lk && !(metric.order > 0.0))
    throw ConfigError("metric order must be > 0");
}

std::string LossConfig::kind_name() const {
  return std::visit(overloaded{
                        [](const ContrastiveLoss&) { return std::string("contrastive"); },
                        [](const FocalLoss&) { return std::string("focal"); },
                        [](const HingeLoss&) { return std::string("hinge"); },
                        [](const CrossEntropyLoss&) { return std::string("cross-entropy"); },
                    },
                    kind);
}

json to_json(const LossConfig& c) {
  json j = std::visit(
      overloaded{
          [](const ContrastiveLoss& l) {
            return json{{"kind", "contrastive"},
                        {"tau", l.tau},
                        {"include_positive_in_denominator", l.include_positive_in_denominator}};
          },
          [](const FocalLoss& l) {
            return json{{"kind", "focal"}, {"alpha", l.alpha}, {"beta", l.beta}};
          },
          [](const HingeLoss& l) {
            return json{{"kind", "hinge"}, {"margin_floor", l.margin_floor},
                        {"negatives", l.negatives}};
          },
          [](const CrossEntropyLoss&) { return json{{"kind", "cross-entropy"}}; },
      },
      c.kind);
  j["metric"] = c.metric.name();
  return j;
}

LossConfig loss_config_from_json(const json& j) {
  try {
    LossConfig c;
    const auto kind = j.value("kind", std::string("contrastive"));
    if (kind == "contrastive") {
      ContrastiveLoss l;
      l.tau = j.value("tau", l.tau);
      l.include_positive_in_denominator =
          j.value("include_positive_in_denominator", l.include_positive_in_denominator);
      c.kind = l;
    } else if (kind == "focal") {
      FocalLoss l;
      l.alpha = j.value("alpha", l.alpha);
      l.beta = j.value("beta", l.beta);
      c.kind = l;
    } else if (kind == "hinge") {
      HingeLoss l;
      l.margin_floor = j.value("margin_floor", l.margin_floor);
      l.negatives = j.value("negatives", l.negatives);
      c.kind = l;
    } else if (kind == "cross-entropy") {
      c.kind = CrossEntropyLoss{};
    } else {
      throw ConfigError("unknown loss kind '" + kind + "'");
    }
    c.metric = Metric::parse(j.value("metric", std::string("cosine")));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("loss config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

LossOutput contrastive_loss(std::span<const double> query, int label, const PrototypeSet& p,
                            const ContrastiveLoss& cfg, const Metric& metric) {
  if (!(cfg.tau > 0.0)) throw ConfigError("contrastive loss: tau must be > 0");
  const int classes = static_cast<int>(p.size());
  if (classes < 2) throw ConfigError("contrastive loss needs at least 2 classes");
  if (label < 0 || label > classes)
    throw ConfigError("label " + std::to_string(label) + " outside [0, " +
                      std::to_string(classes) + "]");
  if (query.size() != p.dim()) throw ConfigError("contrastive loss: dimension mismatch");
  const PrototypeSet q = prepare_for_metric(p, metric);

  std::vector<double> logits;
  std::vector<Vector> grads;
  logits.reserve(static_cast<std::size_t>(classes) + 1);
  double positive = 0.0;
  Vector positive_grad(query.size(), 0.0);
  for (int c = 1; c <= classes; ++c) {
    const double s = similarity(query, q.prototype(c), metric);
    if (c == label) {
      positive = s;
      positive_grad = similarity_grad(query, q.prototype(c), metric);
      if (!cfg.include_positive_in_denominator) continue;
    }
    logits.push_back(s / cfg.tau);
    grads.push_back(similarity_grad(query, q.prototype(c), metric));
  }
  if (label == 0 && cfg.include_positive_in_denominator) {
    logits.push_back(0.0);
    grads.emplace_back(query.size(), 0.0);
  }

  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  const double lse = top + std::log(sum);

  LossOutput out;
  out.value = lse - positive / cfg.tau;
  out.grad_query.assign(query.size(), 0.0);
  for (std::size_t d = 0; d < query.size(); ++d) out.grad_query[d] = -positive_grad[d] / cfg.tau;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double w = std::exp(logits[i] - lse) / cfg.tau;
    for (std::size_t d = 0; d < query.size(); ++d) out.grad_query[d] += w * grads[i][d];
  }
  return out;
}

FocalOutput focal_embedding_loss(const EmbeddingMap& map, const PrototypeSet& p,
                                 const Heatmap& heatmap, const FocalLoss& cfg,
                                 const Metric& metric) {
  if (map.height == 0 || map.width == 0) throw ConfigError("focal loss: empty embedding map");
  if (heatmap.height != map.height || heatmap.width != map.width)
    throw ConfigError("focal loss: heatmap is " + std::to_string(heatmap.height) + "x" +
                      std::to_string(heatmap.width) + ", embedding map is " +
                      std::to_string(map.height) + "x" + std::to_string(map.width));
  if (heatmap.classes != p.size())
    throw ConfigError("focal loss: heatmap has " + std::to_string(heatmap.classes) +
                      " class planes for " + std::to_string(p.size()) + " prototypes");
  if (map.dim != p.dim()) throw ConfigError("focal loss: embedding dimension mismatch");
  if (map.data.size() != map.height * map.width * map.dim)
    throw ConfigError("focal loss: embedding map storage does not match its shape");

  const PrototypeSet q = prepare_for_metric(p, metric);
  FocalOutput out;
  out.grad_map.assign(map.data.size(), 0.0);
  for (double y : heatmap.data)
    if (y == 1.0) ++out.centers;
  const double norm = static_cast<double>(std::max<std::size_t>(1, out.centers));
  const double a = cfg.alpha, b = cfg.beta;

  for (std::size_t y = 0; y < map.height; ++y)
    for (std::size_t x = 0; x < map.width; ++x) {
      const auto pix = map.pixel(y, x);
      for (std::size_t c = 0; c < q.size(); ++c) {
        const double raw = similarity(pix, q.matrix.row(c), metric);
        const double s = std::clamp(raw, kSimilarityEps, 1.0 - kSimilarityEps);
        const bool clamped = s != raw;
        const double target = heatmap.at(c, y, x);
        double value = 0.0, dvalue = 0.0;
        if (target == 1.0) {
          value = -std::pow(1.0 - s, a) * std::log(s);
          dvalue = (a == 0.0 ? 0.0 : a * std::pow(1.0 - s, a - 1.0) * std::log(s)) -
                   std::pow(1.0 - s, a) / s;
        } else {
          const double weight = std::pow(1.0 - target, b);
          value = -weight * std::pow(s, a) * std::log(1.0 - s);
          dvalue = -weight * ((a == 0.0 ? 0.0 : a * std::pow(s, a - 1.0) * std::log(1.0 - s)) -
                              std::pow(s, a) / (1.0 - s));
        }
        out.value += value / norm;
        if (clamped) continue;
        const Vector sg = similarity_grad(pix, q.matrix.row(c), metric);
        double* g = out.grad_map.data() + (y * map.width + x) * map.dim;
        for (std::size_t d = 0; d < map.dim; ++d) g[d] += dvalue * sg[d] / norm;
      }
    }
  return out;
}

double hinge_value(double positive_distance, std::span<const double> negative_distances,
                   std::span<const double> margins) {
  if (negative_distances.size() != margins.size())
    throw ConfigError("hinge_value: one margin per negative required");
  double total = positive_distance;
  for (std::size_t i = 0; i < margins.size(); ++i)
    total += std::max(0.0, margins[i] - negative_distances[i]);
  return total / static_cast<double>(margins.size() + 1);
}

LossOutput hinge_embedding_loss(std::span<const double> query, int label,
                                const std::vector<int>& negatives, const PrototypeSet& p,
                                double margin_floor, const Metric& metric) {
  const int classes = static_cast<int>(p.size());
  if (label < 1 || label > classes)
    throw ConfigError("hinge loss: label must be a foreground class in [1, " +
                      std::to_string(classes) + "]");
  if (negatives.empty() || static_cast<int>(negatives.size()) > classes - 1)
    throw ConfigError("hinge loss: need between 1 and C-1 = " + std::to_string(classes - 1) +
                      " negatives, got " + std::to_string(negatives.size()));
  if (query.size() != p.dim()) throw ConfigError("hinge loss: dimension mismatch");
  std::set<int> seen;
  for (int f : negatives)
    if (f < 1 || f > classes || f == label || !seen.insert(f).second)
      throw ConfigError("hinge loss: invalid negative class " + std::to_string(f));

  const PrototypeSet q = prepare_for_metric(p, metric);
  const auto positive = q.prototype(label);
  const double scale = 1.0 / static_cast<double>(negatives.size() + 1);

  LossOutput out;
  out.value = distance(query, positive, metric);
  out.grad_query = distance_grad(query, positive, metric);
  for (int f : negatives) {
    const auto neg = q.prototype(f);
    const double margin = std::max(margin_floor, distance(positive, neg, metric));
    const double slack = margin - distance(query, neg, metric);
    if (slack <= 0.0) continue;
    out.value += slack;
    const Vector g = distance_grad(query, neg, metric);
    for (std::size_t d = 0; d < g.size(); ++d) out.grad_query[d] -= g[d];
  }
  out.value *= scale;
  for (double& g : out.grad_query) g *= scale;
  return out;
}

std::vector<int> sample_negatives(std::size_t classes, int label, int count,
                                  std::mt19937_64& rng) {
  std::vector<int> pool;
  for (int c = 1; c <= static_cast<int>(classes); ++c)
    if (c != label) pool.push_back(c);
  if (count < 1 || static_cast<std::size_t>(count) > pool.size())
    throw ConfigError("cannot sample " + std::to_string(count) + " negatives from " +
                      std::to_string(pool.size()) + " classes");
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

LossOutput hinge_embedding_loss(std::span<const double> query, int label, const PrototypeSet& p,
                                const HingeLoss& cfg, const Metric& metric,
                                std::mt19937_64& rng) {
  if (cfg.negatives > static_cast<int>(p.size()) - 1)
    throw ConfigError("hinge loss: r = " + std::to_string(cfg.negatives) + " exceeds C-1 = " +
                      std::to_string(static_cast<int>(p.size()) - 1));
  return hinge_embedding_loss(query, label, sample_negatives(p.size(), label, cfg.negatives, rng),
                              p, cfg.margin_floor, metric);
}

Heatmap render_heatmap(const std::vector<GroundtruthBox>& boxes, std::size_t width,
                       std::size_t height, std::size_t classes) {
  if (width == 0 || height == 0) throw ConfigError("render_heatmap: empty image");
  Heatmap h(height, width, classes);
  for (const auto& g : boxes) {
    if (!(g.box.area() > 0.0)) throw ConfigError("render_heatmap: zero-area box");
    require_valid(g.box);
    if (g.box.x1 < 0.0 || g.box.y1 < 0.0 || g.box.x2 > static_cast<double>(width) ||
        g.box.y2 > static_cast<double>(height))
      throw ConfigError("render_heatmap: box outside the image");
    if (g.cls < 1 || static_cast<std::size_t>(g.cls) > classes)
      throw ConfigError("render_heatmap: class id " + std::to_string(g.cls) + " out of range");

    const double sigma = std::max(1.0, std::min(g.box.width(), g.box.height()) / 6.0);
    const auto clamp_px = [](double v, std::size_t n) {
      return std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(v + 0.5)),
                                      static_cast<std::ptrdiff_t>(n) - 1);
    };
    const auto cx = clamp_px((g.box.x1 + g.box.x2) / 2.0, width);
    const auto cy = clamp_px((g.box.y1 + g.box.y2) / 2.0, height);
    const auto c = static_cast<std::size_t>(g.cls - 1);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = static_cast<double>(static_cast<std::ptrdiff_t>(x) - cx);
        const double dy = static_cast<double>(static_cast<std::ptrdiff_t>(y) - cy);
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        h.at(c, y, x) = std::max(h.at(c, y, x), v);
      }
  }
  return h;
}

CrossEntropyOutput cross_entropy_baseline(std::span<const double> query, int label,
                                          const Matrix& weights) {
  if (weights.cols() != query.size()) throw ConfigError("cross entropy: dimension mismatch");
  if (label < 0 || static_cast<std::size_t>(label) >= weights.rows())
    throw ConfigError("cross entropy: label " + std::to_string(label) + " out of range");
  const std::size_t rows = weights.rows();
  Vector logits = matvec(weights, query);
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  const double lse = top + std::log(sum);

  CrossEntropyOutput out;
  out.value = lse - logits[static_cast<std::size_t>(label)];
  out.grad_query.assign(query.size(), 0.0);
  out.grad_weights = Matrix(rows, query.size());
  for (std::size_t c = 0; c < rows; ++c) {
    const double coeff = std::exp(logits[c] - lse) - (c == static_cast<std::size_t>(label) ? 1.0 : 0.0);
    for (std::size_t d = 0; d < query.size(); ++d) {
      out.grad_query[d] += coeff * weights(c, d);
      out.grad_weights(c, d) = coeff * query[d];
    }
  }
  return out;
}

}  // namespace kge
