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

#include "kge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace kge {

using nlohmann::json;

namespace {

std::string geometry_name(ClusterGeometry g) {
  return g == ClusterGeometry::AlignedWithPrototypes ? "aligned" : "random";
}

ClusterGeometry geometry_from_name(const std::string& s) {
  if (s == "aligned") return ClusterGeometry::AlignedWithPrototypes;
  if (s == "random") return ClusterGeometry::Random;
  throw ConfigError("unknown cluster geometry '" + s + "' (aligned | random)");
}

Vector random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = normal(rng);
    n = norm2(v);
  } while (n < 1e-12);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

json to_json(const DatasetSpec& s) {
  return {{"input_dim", s.input_dim},
          {"samples_per_class", s.samples_per_class},
          {"covariance_scale", s.covariance_scale},
          {"mean_scale", s.mean_scale},
          {"geometry", geometry_name(s.geometry)},
          {"background_fraction", s.background_fraction},
          {"seed", s.seed}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  try {
    DatasetSpec s;
    s.input_dim = j.value("input_dim", s.input_dim);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.covariance_scale = j.value("covariance_scale", s.covariance_scale);
    s.mean_scale = j.value("mean_scale", s.mean_scale);
    s.geometry = geometry_from_name(j.value("geometry", std::string("aligned")));
    s.background_fraction = j.value("background_fraction", s.background_fraction);
    s.seed = j.value("seed", s.seed);
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset spec: ") + e.what());
  }
}

SyntheticDataset generate_dataset(const DatasetSpec& spec, const PrototypeSet& p) {
  if (spec.covariance_scale < 0.0 || !std::isfinite(spec.covariance_scale))
    throw ConfigError("covariance scale must be finite and >= 0");
  if (!(spec.mean_scale > 0.0)) throw ConfigError("mean scale must be > 0");
  if (spec.input_dim == 0) throw ConfigError("input dimension must be positive");
  if (!(spec.background_fraction >= 0.0 && spec.background_fraction < 1.0))
    throw ConfigError("background fraction must lie in [0, 1)");
  p.validate();

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  SyntheticDataset ds;
  ds.spec = spec;
  const std::size_t classes = p.size();

  if (spec.geometry == ClusterGeometry::AlignedWithPrototypes) {
    if (p.dim() > spec.input_dim)
      throw ConfigError("aligned geometry needs input_dim >= prototype dim (" +
                        std::to_string(p.dim()) + ")");
    // Orthonormal columns: an isometric embedding of prototype space.
    std::vector<Vector> basis;
    for (std::size_t k = 0; k < p.dim(); ++k) {
      Vector v = random_unit(spec.input_dim, rng);
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) {
          const double proj = dot(v, b);
          for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * b[i];
        }
      const double n = norm2(v);
      for (double& x : v) x /= n;
      basis.push_back(std::move(v));
    }
    for (int c = 1; c <= static_cast<int>(classes); ++c) {
      const auto t = p.prototype(c);
      const double n = norm2(t);
      if (n == 0.0)
        throw ConfigError("aligned geometry: class '" + p.classes[static_cast<std::size_t>(c - 1)] +
                          "' has a zero prototype");
      Vector mean(spec.input_dim, 0.0);
      for (std::size_t k = 0; k < p.dim(); ++k)
        for (std::size_t i = 0; i < spec.input_dim; ++i)
          mean[i] += spec.mean_scale * t[k] / n * basis[k][i];
      ds.class_means.push_back(std::move(mean));
    }
  } else {
    for (std::size_t c = 0; c < classes; ++c) {
      Vector mean = random_unit(spec.input_dim, rng);
      for (double& x : mean) x *= spec.mean_scale;
      ds.class_means.push_back(std::move(mean));
    }
  }

  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      Sample sample{ds.class_means[c], static_cast<int>(c + 1)};
      if (spec.covariance_scale > 0.0)
        for (double& x : sample.feature) x += spec.covariance_scale * normal(rng);
      ds.samples.push_back(std::move(sample));
    }

  const std::size_t foreground = ds.samples.size();
  const auto background = static_cast<std::size_t>(std::llround(
      spec.background_fraction * static_cast<double>(foreground) / (1.0 - spec.background_fraction)));
  double outer = 0.0;
  for (const auto& m : ds.class_means) outer = std::max(outer, norm2(m));
  std::uniform_real_distribution<double> radius(1.5 * outer, 2.0 * outer);
  for (std::size_t s = 0; s < background; ++s) {
    Vector v = random_unit(spec.input_dim, rng);
    const double r = radius(rng);
    for (double& x : v) x *= r;
    ds.samples.push_back({std::move(v), 0});
  }
  return ds;
}

SyntheticDataset draw_heldout(const SyntheticDataset& data, std::size_t samples_per_class,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  SyntheticDataset out;
  out.spec = data.spec;
  out.spec.samples_per_class = samples_per_class;
  out.spec.background_fraction = 0.0;
  out.spec.seed = seed;
  out.class_means = data.class_means;
  for (std::size_t c = 0; c < data.class_means.size(); ++c)
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      Sample sample{data.class_means[c], static_cast<int>(c + 1)};
      if (data.spec.covariance_scale > 0.0)
        for (double& x : sample.feature) x += data.spec.covariance_scale * normal(rng);
      out.samples.push_back(std::move(sample));
    }
  return out;
}

json to_json(const OptimizerSpec& s) {
  return {{"learning_rate", s.learning_rate}, {"steps", s.steps}, {"batch", s.batch},
          {"momentum", s.momentum}, {"seed", s.seed}};
}

OptimizerSpec optimizer_spec_from_json(const json& j) {
  try {
    OptimizerSpec s;
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.steps = j.value("steps", s.steps);
    s.batch = j.value("batch", s.batch);
    s.momentum = j.value("momentum", s.momentum);
    s.seed = j.value("seed", s.seed);
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("optimizer spec: ") + e.what());
  }
}

json to_json(const TrainReport& r) {
  return {{"loss_trace", r.loss_trace},
          {"final_accuracy", r.final_accuracy},
          {"predictions", r.predictions}};
}

Matrix classifier_weights(const PrototypeSet& p) {
  Matrix w(p.size() + 1, p.dim());
  if (const auto* e = std::get_if<ExplicitBackground>(&p.background))
    std::copy(e->vector.begin(), e->vector.end(), w.row(0).begin());
  for (std::size_t r = 0; r < p.size(); ++r) {
    auto src = p.matrix.row(r);
    std::copy(src.begin(), src.end(), w.row(r + 1).begin());
  }
  return w;
}

namespace {

bool is_cross_entropy(const LossConfig& c) {
  return std::holds_alternative<CrossEntropyLoss>(c.kind);
}

struct Forward {
  Vector activated;  // tanh(feature)
  Vector pre;        // W a + bias
  Vector output;     // after unit-ball projection, when used
};

Forward forward(const ProjectionHead& head, std::span<const double> feature, bool project_output) {
  Forward f;
  f.activated.assign(feature.begin(), feature.end());
  for (double& v : f.activated) v = std::tanh(v);
  f.pre = matvec(head.weight, f.activated);
  for (std::size_t i = 0; i < f.pre.size(); ++i) f.pre[i] += head.bias[i];
  f.output = project_output ? project_unit_sphere(f.pre) : f.pre;
  return f;
}

struct SampleLoss {
  double value = 0.0;
  Vector grad_output;
  Matrix grad_classifier;
};

SampleLoss sample_loss(std::span<const double> output, int label, const LossConfig& cfg,
                       const PrototypeSet& p, const Matrix& classifier, std::mt19937_64& rng) {
  SampleLoss s;
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ContrastiveLoss>) {
          auto o = contrastive_loss(output, label, p, l, cfg.metric);
          s.value = o.value;
          s.grad_output = std::move(o.grad_query);
        } else if constexpr (std::is_same_v<T, FocalLoss>) {
          // A single sample is a 1x1 map whose centre lies on its class plane.
          EmbeddingMap m(1, 1, output.size());
          std::copy(output.begin(), output.end(), m.data.begin());
          Heatmap h(1, 1, p.size());
          if (label >= 1) h.at(static_cast<std::size_t>(label - 1), 0, 0) = 1.0;
          auto o = focal_embedding_loss(m, p, h, l, cfg.metric);
          s.value = o.value;
          s.grad_output = std::move(o.grad_map);
        } else if constexpr (std::is_same_v<T, HingeLoss>) {
          // Background has no prototype to pull towards; it contributes nothing.
          if (label == 0) {
            s.grad_output.assign(output.size(), 0.0);
            return;
          }
          auto o = hinge_embedding_loss(output, label, p, l, cfg.metric, rng);
          s.value = o.value;
          s.grad_output = std::move(o.grad_query);
        } else {
          auto o = cross_entropy_baseline(output, label, classifier);
          s.value = o.value;
          s.grad_output = std::move(o.grad_query);
          s.grad_classifier = std::move(o.grad_weights);
        }
      },
      cfg.kind);
  return s;
}

int argmax_logits(std::span<const double> output, const Matrix& classifier) {
  const Vector logits = matvec(classifier, output);
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace

std::vector<int> predict(const ProjectionHead& head, const SyntheticDataset& data,
                         const LossConfig& loss, const PrototypeSet& p) {
  const bool ce = is_cross_entropy(loss);
  const bool project_output = !ce && loss.metric.needs_projection();
  const Matrix classifier = ce ? classifier_weights(p) : Matrix();
  std::vector<int> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    const Forward f = forward(head, s.feature, project_output);
    out.push_back(ce ? argmax_logits(f.output, classifier)
                     : classify_nn(f.output, p, loss.metric).cls);
  }
  return out;
}

TrainReport train(ProjectionHead& head, const SyntheticDataset& data, const LossConfig& loss,
                  PrototypeSet& p, const OptimizerSpec& opt) {
  loss.validate();
  p.validate();
  if (data.samples.empty()) throw ConfigError("train: empty dataset");
  if (head.output_dim() != p.dim())
    throw ConfigError("train: head output dim " + std::to_string(head.output_dim()) +
                      " differs from prototype dim " + std::to_string(p.dim()));
  if (head.input_dim() != data.samples.front().feature.size())
    throw ConfigError("train: head input dim differs from feature dim");
  if (opt.batch < 1 || opt.steps < 0 || !(opt.learning_rate >= 0.0) ||
      !(opt.momentum >= 0.0 && opt.momentum < 1.0))
    throw ConfigError("train: invalid optimizer spec");

  const auto started = std::chrono::steady_clock::now();
  const bool ce = is_cross_entropy(loss);
  if (ce && !std::holds_alternative<ExplicitBackground>(p.background))
    p.background = ExplicitBackground{Vector(p.dim(), 0.0)};
  const bool project_output = !ce && loss.metric.needs_projection();

  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.samples.size() - 1);
  const std::size_t out_dim = head.output_dim(), in_dim = head.input_dim();
  Matrix velocity_w(out_dim, in_dim);
  Vector velocity_b(out_dim, 0.0);
  Matrix classifier = ce ? classifier_weights(p) : Matrix();
  Matrix velocity_c(classifier.rows(), classifier.cols());

  // A batch covering the dataset means full-batch descent in sample order.
  const bool full_batch = static_cast<std::size_t>(opt.batch) >= data.samples.size();
  const int batch = full_batch ? static_cast<int>(data.samples.size()) : opt.batch;

  TrainReport report;
  report.loss_trace.reserve(static_cast<std::size_t>(opt.steps));
  for (int step = 0; step < opt.steps; ++step) {
    Matrix grad_w(out_dim, in_dim);
    Vector grad_b(out_dim, 0.0);
    Matrix grad_c(classifier.rows(), classifier.cols());
    double total = 0.0;
    for (int i = 0; i < batch; ++i) {
      const Sample& s = data.samples[full_batch ? static_cast<std::size_t>(i) : pick(rng)];
      const Forward f = forward(head, s.feature, project_output);
      SampleLoss l = sample_loss(f.output, s.label, loss, p, classifier, rng);
      if (!std::isfinite(l.value) || !all_finite(l.grad_output)) {
        std::ostringstream msg;
        msg << "non-finite " << loss.kind_name() << " loss at step " << step << ", batch item "
            << i << " (label " << s.label << ", value " << l.value << ", |output| "
            << norm2(f.output) << ")";
        throw NumericError(msg.str());
      }
      total += l.value;
      const Vector g = project_output ? project_unit_sphere_backward(f.pre, l.grad_output)
                                      : l.grad_output;
      for (std::size_t r = 0; r < out_dim; ++r) {
        grad_b[r] += g[r];
        for (std::size_t c = 0; c < in_dim; ++c) grad_w(r, c) += g[r] * f.activated[c];
      }
      if (ce)
        for (std::size_t k = 0; k < grad_c.data().size(); ++k)
          grad_c.data()[k] += l.grad_classifier.data()[k];
    }
    const double scale = 1.0 / batch;
    report.loss_trace.push_back(total * scale);

    auto update = [&](std::span<double> param, std::span<double> velocity,
                      std::span<const double> grad) {
      for (std::size_t k = 0; k < param.size(); ++k) {
        velocity[k] = opt.momentum * velocity[k] + grad[k] * scale;
        param[k] -= opt.learning_rate * velocity[k];
      }
    };
    update(head.weight.data(), velocity_w.data(), grad_w.data());
    update(head.bias, velocity_b, grad_b);
    if (ce) update(classifier.data(), velocity_c.data(), grad_c.data());
  }

  if (ce) {
    auto& bg = std::get<ExplicitBackground>(p.background).vector;
    auto row0 = classifier.row(0);
    bg.assign(row0.begin(), row0.end());
    for (std::size_t r = 0; r < p.size(); ++r) {
      auto src = classifier.row(r + 1);
      std::copy(src.begin(), src.end(), p.matrix.row(r).begin());
    }
  }

  report.predictions = predict(head, data, loss, p);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    if (report.predictions[i] == data.samples[i].label) ++correct;
  report.final_accuracy = static_cast<double>(correct) / static_cast<double>(data.samples.size());
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// ---------------------------------------------------------------------------

namespace {

// Central difference quotient per coordinate.
Vector central_differences(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x, double step) {
  if (!(step > 0.0)) throw ConfigError("finite difference step must be > 0");
  Vector probe(x.begin(), x.end());
  Vector out(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = f(probe);
    probe[i] = orig - step;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite difference: non-finite evaluation at coordinate " +
                         std::to_string(i));
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

}  // namespace

double finite_difference_check(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, std::span<const double> analytic,
                               double step) {
  require_same_size(x, analytic, "finite_difference_check");
  const Vector fd = central_differences(f, x, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double err =
        std::abs(fd[i] - analytic[i]) / std::max(1e-8, std::abs(fd[i]) + std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

GradientComparison compare_gradients(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, std::span<const double> analytic,
                                     double step, double tiny) {
  require_same_size(x, analytic, "compare_gradients");
  const Vector fd = central_differences(f, x, step);
  GradientComparison out;
  out.coordinates = static_cast<int>(fd.size());
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double diff = std::abs(fd[i] - analytic[i]);
    const double size = std::abs(fd[i]) + std::abs(analytic[i]);
    if (size < tiny) {
      ++out.tiny_coordinates;
      out.max_tiny_abs_error = std::max(out.max_tiny_abs_error, diff);
    } else {
      out.max_relative_error = std::max(out.max_relative_error, diff / size);
    }
  }
  return out;
}

json to_json(const GradcheckResult& r) {
  return {{"loss", r.loss},
          {"instances", r.instances},
          {"max_relative_error", r.max_relative_error},
          {"max_tiny_abs_error", r.max_tiny_abs_error},
          {"tiny_coordinates", r.tiny_coordinates},
          {"coordinates", r.coordinates}};
}

namespace {

constexpr double kKinkMargin = 1e-3;

Vector gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

// A point strictly inside the unit ball, so finite-difference probes stay
// in the domain of the Lk similarity.
Vector inside_ball(std::size_t n, std::mt19937_64& rng) {
  Vector v = random_unit(n, rng);
  std::uniform_real_distribution<double> r(0.1, 0.9);
  const double s = r(rng);
  for (double& x : v) x *= s;
  return v;
}

PrototypeSet random_prototypes(std::size_t classes, std::size_t dim, std::mt19937_64& rng) {
  PrototypeSet p;
  p.matrix = Matrix(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) p.classes.push_back("c" + std::to_string(c + 1));
  for (double& v : p.matrix.data()) {
    std::normal_distribution<double> normal;
    v = normal(rng);
  }
  return p;
}

// True when every coordinate of `x` is at least kKinkMargin away from the
// matching coordinate of every prototype (Manhattan kinks).
bool clear_of_l1_kinks(std::span<const double> x, const PrototypeSet& p) {
  for (std::size_t c = 0; c < p.size(); ++c)
    for (std::size_t d = 0; d < p.dim(); ++d)
      if (std::abs(x[d] - p.matrix(c, d)) < kKinkMargin) return false;
  return true;
}

int uniform_int(int lo, int hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

GradientComparison check_contrastive(int instance, std::mt19937_64& rng, double step) {
  const Metric metric = instance % 2 == 0 ? Metric::cosine() : Metric::manhattan();
  while (true) {
    const auto classes = static_cast<std::size_t>(uniform_int(2, 8, rng));
    const auto dim = static_cast<std::size_t>(uniform_int(2, 10, rng));
    const PrototypeSet p = prepare_for_metric(random_prototypes(classes, dim, rng), metric);
    const Vector b = metric.needs_projection() ? inside_ball(dim, rng) : gaussian(dim, rng);
    if (metric.needs_projection() && !clear_of_l1_kinks(b, p)) continue;
    const double taus[] = {0.07, 0.2, 1.0};
    ContrastiveLoss cfg{taus[instance % 3], instance % 4 >= 2};
    const int label = uniform_int(0, static_cast<int>(classes), rng);
    const LossOutput out = contrastive_loss(b, label, p, cfg, metric);
    return compare_gradients(
        [&](std::span<const double> x) { return contrastive_loss(x, label, p, cfg, metric).value; },
        b, out.grad_query, step);
  }
}

GradientComparison check_focal(int instance, std::mt19937_64& rng, double step) {
  const Metric metric = instance % 2 == 0 ? Metric::cosine() : Metric::manhattan();
  while (true) {
    const auto h = static_cast<std::size_t>(uniform_int(2, 4, rng));
    const auto w = static_cast<std::size_t>(uniform_int(2, 4, rng));
    const auto dim = static_cast<std::size_t>(uniform_int(2, 5, rng));
    const auto classes = static_cast<std::size_t>(uniform_int(1, 3, rng));
    const PrototypeSet p = prepare_for_metric(random_prototypes(classes, dim, rng), metric);
    EmbeddingMap map(h, w, dim);
    bool ok = true;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const Vector v = metric.needs_projection() ? inside_ball(dim, rng) : gaussian(dim, rng);
        std::copy(v.begin(), v.end(), map.pixel(y, x).begin());
        if (metric.needs_projection() && !clear_of_l1_kinks(v, p)) ok = false;
      }
    if (!ok) continue;
    std::vector<GroundtruthBox> boxes;
    const int n_boxes = uniform_int(1, 2, rng);
    std::uniform_real_distribution<double> fx(0.0, static_cast<double>(w) - 1.0);
    std::uniform_real_distribution<double> fy(0.0, static_cast<double>(h) - 1.0);
    for (int i = 0; i < n_boxes; ++i) {
      const double x1 = fx(rng), y1 = fy(rng);
      boxes.push_back({0, {x1, y1, x1 + 1.0, y1 + 1.0},
                       uniform_int(1, static_cast<int>(classes), rng)});
    }
    const Heatmap heat = render_heatmap(boxes, w, h, classes);
    FocalLoss cfg;
    if (instance % 3 == 1) cfg = {1.5, 2.0};
    const FocalOutput out = focal_embedding_loss(map, p, heat, cfg, metric);
    return compare_gradients(
        [&](std::span<const double> x) {
          EmbeddingMap m = map;
          std::copy(x.begin(), x.end(), m.data.begin());
          return focal_embedding_loss(m, p, heat, cfg, metric).value;
        },
        map.data, out.grad_map, step);
  }
}

GradientComparison check_hinge(int instance, std::mt19937_64& rng, double step) {
  const Metric metric = instance % 2 == 0 ? Metric::cosine() : Metric::manhattan();
  while (true) {
    const auto classes = static_cast<std::size_t>(uniform_int(2, 8, rng));
    const auto dim = static_cast<std::size_t>(uniform_int(2, 10, rng));
    const PrototypeSet p = prepare_for_metric(random_prototypes(classes, dim, rng), metric);
    const Vector b = metric.needs_projection() ? inside_ball(dim, rng) : gaussian(dim, rng);
    if (metric.needs_projection() && !clear_of_l1_kinks(b, p)) continue;
    const int label = uniform_int(1, static_cast<int>(classes), rng);
    const int r = uniform_int(1, static_cast<int>(classes) - 1, rng);
    const auto negatives = sample_negatives(classes, label, r, rng);
    const double floor = 0.1;
    bool near_kink = false;
    for (int f : negatives) {
      const double margin = std::max(floor, distance(p.prototype(label), p.prototype(f), metric));
      if (std::abs(margin - distance(b, p.prototype(f), metric)) <= kKinkMargin) near_kink = true;
    }
    if (near_kink) continue;
    const LossOutput out = hinge_embedding_loss(b, label, negatives, p, floor, metric);
    return compare_gradients(
        [&](std::span<const double> x) {
          return hinge_embedding_loss(x, label, negatives, p, floor, metric).value;
        },
        b, out.grad_query, step);
  }
}

GradientComparison check_cross_entropy(std::mt19937_64& rng, double step) {
  const auto rows = static_cast<std::size_t>(uniform_int(2, 9, rng));
  const auto dim = static_cast<std::size_t>(uniform_int(2, 10, rng));
  Matrix w(rows, dim);
  for (double& v : w.data()) v = gaussian(1, rng)[0];
  const Vector b = gaussian(dim, rng);
  const int label = uniform_int(0, static_cast<int>(rows) - 1, rng);

  // Parameters packed as [b, W row-major].
  Vector packed(b);
  packed.insert(packed.end(), w.data().begin(), w.data().end());
  const CrossEntropyOutput out = cross_entropy_baseline(b, label, w);
  Vector analytic(out.grad_query);
  analytic.insert(analytic.end(), out.grad_weights.data().begin(), out.grad_weights.data().end());
  return compare_gradients(
      [&](std::span<const double> x) {
        Matrix wx(rows, dim);
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(dim), x.end(), wx.data().begin());
        return cross_entropy_baseline(x.first(dim), label, wx).value;
      },
      packed, analytic, step);
}

}  // namespace

GradcheckResult gradcheck_suite(const std::string& loss, int instances, std::uint64_t seed,
                                double step) {
  if (std::find(kLossNames.begin(), kLossNames.end(), loss) == kLossNames.end())
    throw ConfigError("unknown loss '" + loss + "'");
  if (instances < 1) throw ConfigError("gradcheck needs at least one instance");
  const auto started = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  GradcheckResult r;
  r.loss = loss;
  r.instances = instances;
  for (int i = 0; i < instances; ++i) {
    GradientComparison c;
    if (loss == "contrastive") c = check_contrastive(i, rng, step);
    else if (loss == "focal") c = check_focal(i, rng, step);
    else if (loss == "hinge") c = check_hinge(i, rng, step);
    else c = check_cross_entropy(rng, step);
    r.max_relative_error = std::max(r.max_relative_error, c.max_relative_error);
    r.max_tiny_abs_error = std::max(r.max_tiny_abs_error, c.max_tiny_abs_error);
    r.tiny_coordinates += c.tiny_coordinates;
    r.coordinates += c.coordinates;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

}  // namespace kge
