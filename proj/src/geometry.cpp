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

#include "kge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "text_util.hpp"

namespace kge {

namespace {
constexpr double kUnitBallSlack = 1e-9;

void require_in_unit_ball(std::span<const double> v) {
  if (norm2(v) > 1.0 + kUnitBallSlack)
    throw ConfigError("Lk similarity needs inputs projected into the unit ball (norm " +
                      std::to_string(norm2(v)) + ")");
}
}  // namespace

std::string Metric::name() const {
  if (kind == Kind::Cosine) return "cosine";
  if (order == 1.0) return "manhattan";
  if (order == 2.0) return "euclidean";
  std::string s = std::to_string(order);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return "l" + s;
}

Metric Metric::parse(const std::string& name) {
  if (name == "cosine") return cosine();
  if (name == "manhattan" || name == "l1") return manhattan();
  if (name == "euclidean") return lk(2.0);
  if (name.size() > 1 && name[0] == 'l') {
    if (auto k = detail::parse_double(std::string_view(name).substr(1)); k && *k > 0.0)
      return lk(*k);
  }
  throw ConfigError("unknown metric '" + name + "'");
}

Vector project_unit_sphere(std::span<const double> x) {
  const double scale = std::max(1.0, norm2(x));
  Vector out(x.begin(), x.end());
  for (double& v : out) v /= scale;
  // Rounding can leave the result a few ulps outside the ball, which would
  // make a second projection move it again.
  while (norm2(out) > 1.0)
    for (double& v : out) v = std::nextafter(v, 0.0);
  return out;
}

Vector project_unit_sphere_backward(std::span<const double> x, std::span<const double> g) {
  require_same_size(x, g, "project_unit_sphere_backward");
  const double n = norm2(x);
  Vector out(g.begin(), g.end());
  if (n <= 1.0) return out;
  // y = x / n  =>  J = (I - y y^T) / n, symmetric.
  double yg = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) yg += x[i] / n * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (g[i] - x[i] / n * yg) / n;
  return out;
}

double lk_distance(std::span<const double> a, std::span<const double> b, double k) {
  require_same_size(a, b, "lk_distance");
  if (!(k > 0.0)) throw ConfigError("lk_distance: order k must be positive");
  double s = 0.0;
  if (k == 1.0) {
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
  }
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(std::abs(a[i] - b[i]), k);
  return std::pow(s, 1.0 / k);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "cosine_distance");
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw ConfigError("cosine_distance: zero-norm input");
  const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  return 1.0 - c;
}

double distance(std::span<const double> a, std::span<const double> b, const Metric& m) {
  return m.kind == Metric::Kind::Cosine ? cosine_distance(a, b) : lk_distance(a, b, m.order);
}

Vector distance_grad(std::span<const double> a, std::span<const double> b, const Metric& m) {
  require_same_size(a, b, "distance_grad");
  Vector g(a.size(), 0.0);
  if (m.kind == Metric::Kind::Cosine) {
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw ConfigError("cosine_distance: zero-norm input");
    const double ab = dot(a, b);
    for (std::size_t i = 0; i < a.size(); ++i)
      g[i] = -(b[i] / (na * nb) - ab * a[i] / (na * na * na * nb));
    return g;
  }
  const double k = m.order;
  if (k == 1.0) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[i];
      g[i] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    }
    return g;
  }
  const double d = lk_distance(a, b, k);
  if (d == 0.0) return g;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (diff == 0.0) continue;
    g[i] = std::copysign(std::pow(std::abs(diff) / d, k - 1.0), diff);
  }
  return g;
}

double similarity(std::span<const double> a, std::span<const double> b, const Metric& m) {
  if (m.needs_projection()) {
    require_in_unit_ball(a);
    require_in_unit_ball(b);
  }
  return 1.0 - distance(a, b, m) / 2.0;
}

Vector similarity_grad(std::span<const double> a, std::span<const double> b, const Metric& m) {
  Vector g = distance_grad(a, b, m);
  for (double& v : g) v *= -0.5;
  return g;
}

std::vector<Vector> zscore_standardize(const std::vector<Vector>& queries) {
  if (queries.size() < 2) throw ConfigError("zscore_standardize: need at least 2 vectors");
  const std::size_t dim = queries.front().size();
  for (const auto& q : queries)
    if (q.size() != dim) throw ConfigError("zscore_standardize: dimension mismatch");
  const double n = static_cast<double>(queries.size());
  Vector mean(dim, 0.0), sd(dim, 0.0);
  for (const auto& q : queries)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += q[d];
  for (double& v : mean) v /= n;
  for (const auto& q : queries)
    for (std::size_t d = 0; d < dim; ++d) sd[d] += (q[d] - mean[d]) * (q[d] - mean[d]);
  for (double& v : sd) v = std::sqrt(v / n);

  std::vector<Vector> out(queries.size(), Vector(dim, 0.0));
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d)
      if (sd[d] > 0.0) out[i][d] = (queries[i][d] - mean[d]) / sd[d];
  return out;
}

HubnessReport hubness(const std::vector<Vector>& queries, const Matrix& prototypes, int k,
                      const Metric& m) {
  if (queries.empty()) throw ConfigError("hubness: empty query set");
  const std::size_t c = prototypes.rows();
  if (k < 1 || static_cast<std::size_t>(k) > c)
    throw ConfigError("hubness: k must lie in [1, number of prototypes]");

  HubnessReport r;
  r.k = k;
  r.k_occurrence.assign(c, 0);
  std::vector<std::size_t> order(c);
  std::vector<double> dist(c);
  for (const auto& q : queries) {
    for (std::size_t j = 0; j < c; ++j) dist[j] = distance(q, prototypes.row(j), m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&dist](std::size_t x, std::size_t y) { return dist[x] < dist[y]; });
    for (int j = 0; j < k; ++j) ++r.k_occurrence[order[static_cast<std::size_t>(j)]];
  }

  const double n = static_cast<double>(c);
  double mean = 0.0;
  for (int v : r.k_occurrence) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (int v : r.k_occurrence) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  r.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return r;
}

nlohmann::json to_json(const HubnessReport& r) {
  return {{"k", r.k}, {"k_occurrence", r.k_occurrence}, {"skewness", r.skewness}};
}

}  // namespace kge
