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

#include "kge/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "text_util.hpp"

namespace kge {

using nlohmann::json;

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Glove: return "glove";
    case Provenance::PpmiSvd: return "ppmi-svd";
    case Provenance::LearnedBaseline: return "learned-baseline";
    case Provenance::RandomOrthogonal: return "random-orthogonal";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "glove") return Provenance::Glove;
  if (s == "ppmi-svd") return Provenance::PpmiSvd;
  if (s == "learned-baseline") return Provenance::LearnedBaseline;
  if (s == "random-orthogonal") return Provenance::RandomOrthogonal;
  throw ConfigError("unknown prototype provenance '" + s + "'");
}

void PrototypeSet::validate() const {
  if (matrix.rows() < 1) throw ConfigError("prototype set needs at least one class");
  if (classes.size() != matrix.rows())
    throw ConfigError("prototype set has " + std::to_string(classes.size()) + " names for " +
                      std::to_string(matrix.rows()) + " rows");
  if (!all_finite(matrix.data())) throw ConfigError("prototype matrix has non-finite entries");
  if (const auto* e = std::get_if<ExplicitBackground>(&background)) {
    if (e->vector.size() != dim())
      throw ConfigError("background vector has length " + std::to_string(e->vector.size()) +
                        ", expected " + std::to_string(dim()));
    if (!all_finite(e->vector)) throw ConfigError("background vector has non-finite entries");
  }
}

PrototypeSet PrototypeSet::with_mean_background() const {
  PrototypeSet p = *this;
  Vector mean(dim(), 0.0);
  for (std::size_t r = 0; r < size(); ++r)
    for (std::size_t d = 0; d < dim(); ++d) mean[d] += matrix(r, d) / static_cast<double>(size());
  p.background = ExplicitBackground{std::move(mean)};
  return p;
}

PrototypeSet PrototypeSet::with_zero_background() const {
  PrototypeSet p = *this;
  p.background = ExplicitBackground{Vector(dim(), 0.0)};
  return p;
}

PrototypeSet PrototypeSet::with_implicit_background(double threshold) const {
  PrototypeSet p = *this;
  p.background = ImplicitBackground{threshold};
  return p;
}

PrototypeSet prepare_for_metric(const PrototypeSet& p, const Metric& m) {
  if (!m.needs_projection()) return p;
  PrototypeSet out = p;
  for (std::size_t r = 0; r < out.size(); ++r) {
    const Vector row = project_unit_sphere(p.matrix.row(r));
    std::copy(row.begin(), row.end(), out.matrix.row(r).begin());
  }
  if (auto* e = std::get_if<ExplicitBackground>(&out.background))
    e->vector = project_unit_sphere(e->vector);
  return out;
}

json to_json(const PrototypeSet& p) {
  json rows = json::array();
  for (std::size_t r = 0; r < p.size(); ++r) rows.push_back(p.matrix.row_copy(r));
  json bg;
  if (const auto* e = std::get_if<ExplicitBackground>(&p.background))
    bg = {{"kind", "explicit"}, {"vector", e->vector}};
  else
    bg = {{"kind", "implicit"}, {"threshold", std::get<ImplicitBackground>(p.background).threshold}};
  return {{"classes", p.classes},
          {"dim", p.dim()},
          {"matrix", rows},
          {"background_policy", bg},
          {"provenance", to_string(p.provenance)}};
}

PrototypeSet prototype_set_from_json(const json& j) {
  try {
    PrototypeSet p;
    p.classes = j.at("classes").get<std::vector<std::string>>();
    const auto dim = j.at("dim").get<std::size_t>();
    p.matrix = Matrix::from_rows(j.at("matrix").get<std::vector<Vector>>());
    if (p.matrix.cols() != dim && !p.matrix.empty())
      throw ConfigError("matrix rows have length " + std::to_string(p.matrix.cols()) +
                        ", declared dim " + std::to_string(dim));
    const auto& bg = j.at("background_policy");
    const auto kind = bg.at("kind").get<std::string>();
    if (kind == "explicit")
      p.background = ExplicitBackground{bg.at("vector").get<Vector>()};
    else if (kind == "implicit")
      p.background = ImplicitBackground{bg.at("threshold").get<double>()};
    else
      throw ConfigError("unknown background policy '" + kind + "'");
    p.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("prototype JSON: ") + e.what());
  }
}

PrototypeSet load_prototypes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open prototype file " + path.string());
  try {
    return prototype_set_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

Matrix ppmi_matrix(const KnowledgeGraph& g, const RelationWeights& relation_weights) {
  const std::size_t n = g.node_count();
  if (n == 0) throw ConfigError("ppmi_matrix: graph has no nodes");
  for (const auto& [rel, w] : relation_weights)
    if (!(w >= 0.0)) throw ConfigError("relation weight for '" + rel + "' is negative");

  Matrix a(n, n);
  for (const auto& e : g.edges()) {
    const auto it = relation_weights.find(e.relation);
    const double w = (it == relation_weights.end() ? 1.0 : it->second) * e.weight;
    a(e.source, e.target) += w;
    if (e.source != e.target) a(e.target, e.source) += w;
  }
  Matrix m(n, n);
  if (g.edges().empty()) return m;

  Vector row_mass(n, 0.0), col_mass(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      row_mass[i] += a(i, j);
      col_mass[j] += a(i, j);
      total += a(i, j);
    }
  if (!(total > 0.0)) throw ConfigError("ppmi_matrix: graph has zero total edge mass");

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j) > 0.0)
        m(i, j) = std::max(0.0, std::log(a(i, j) * total / (row_mass[i] * col_mass[j])));
  return m;
}

Matrix TruncatedSvd::factor() const {
  Matrix f = u;
  for (std::size_t r = 0; r < f.rows(); ++r)
    for (std::size_t c = 0; c < f.cols(); ++c) f(r, c) *= std::sqrt(singular[c]);
  return f;
}

Matrix TruncatedSvd::reconstruct() const {
  Matrix us = u;
  for (std::size_t r = 0; r < us.rows(); ++r)
    for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= singular[c];
  return us * v.transpose();
}

namespace {

// Cyclic Jacobi eigendecomposition of a small symmetric matrix. Returns the
// eigenvalues; `vectors` receives the eigenvectors as columns.
Vector symmetric_eigen(Matrix a, Matrix& vectors) {
  const std::size_t n = a.rows();
  vectors = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * std::max(1e-300, a.frobenius_norm() * a.frobenius_norm())) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors(k, p), vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  Vector values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
  return values;
}

// Rayleigh-Ritz step on the first `found` columns of out.v: the power
// iterates span the dominant subspace to high accuracy but are individually
// only converged to about sqrt(tolerance); solving the projected problem
// exactly restores orthonormal factors.
void refine(const Matrix& m, std::size_t found, TruncatedSvd& out) {
  const std::size_t rows = m.rows(), cols = m.cols();
  Matrix q(cols, found);
  for (std::size_t j = 0; j < found; ++j) {
    for (std::size_t c = 0; c < cols; ++c) q(c, j) = out.v(c, j);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        double d = 0.0;
        for (std::size_t c = 0; c < cols; ++c) d += q(c, i) * q(c, j);
        for (std::size_t c = 0; c < cols; ++c) q(c, j) -= d * q(c, i);
      }
      double n = 0.0;
      for (std::size_t c = 0; c < cols; ++c) n += q(c, j) * q(c, j);
      n = std::sqrt(n);
      for (std::size_t c = 0; c < cols; ++c) q(c, j) /= n;
    }
  }
  const Matrix b = m * q;
  Matrix w;
  const Vector lambda = symmetric_eigen(b.transpose() * b, w);
  std::vector<std::size_t> order(found);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return lambda[x] > lambda[y]; });
  const Matrix bw = b * w;
  const Matrix qw = q * w;
  for (std::size_t j = 0; j < found; ++j) {
    const std::size_t src = order[j];
    double sigma = 0.0;
    for (std::size_t r = 0; r < rows; ++r) sigma += bw(r, src) * bw(r, src);
    sigma = std::sqrt(sigma);
    out.singular[j] = sigma;
    for (std::size_t r = 0; r < rows; ++r) out.u(r, j) = bw(r, src) / sigma;
    for (std::size_t c = 0; c < cols; ++c) out.v(c, j) = qw(c, src);
  }
}

}  // namespace

TruncatedSvd truncated_svd(const Matrix& m, std::size_t k, const SvdOptions& opts) {
  if (k == 0 || k > std::min(m.rows(), m.cols()))
    throw ConfigError("truncated_svd: rank " + std::to_string(k) + " outside [1, " +
                      std::to_string(std::min(m.rows(), m.cols())) + "]");
  if (!all_finite(m.data())) throw ConfigError("truncated_svd: matrix has non-finite entries");

  const std::size_t rows = m.rows(), cols = m.cols();
  TruncatedSvd out{Matrix(rows, k), Vector(k, 0.0), Matrix(cols, k), 0, 0};
  Matrix residual = m;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal;
  // Components below this are numerically zero and get zero-padded.
  const double floor = std::max(m.frobenius_norm(), 1e-300) * 1e-12;

  for (std::size_t comp = 0; comp < k; ++comp) {
    const Matrix gram = residual.transpose() * residual;
    Vector x(cols);
    for (double& v : x) v = normal(rng);
    double nx = norm2(x);
    for (double& v : x) v /= nx;

    double lambda = 0.0, previous = -1.0;
    bool converged = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
      ++out.iterations;
      Vector y = matvec(gram, x);
      lambda = dot(x, y);
      const double ny = norm2(y);
      if (ny <= floor * floor) {
        lambda = 0.0;
        converged = true;
        break;
      }
      for (std::size_t i = 0; i < cols; ++i) x[i] = y[i] / ny;
      if (std::abs(lambda - previous) <= opts.tolerance * lambda) {
        converged = true;
        break;
      }
      previous = lambda;
    }
    if (!converged)
      throw NumericError("truncated_svd: component " + std::to_string(comp + 1) +
                         " did not converge within " + std::to_string(opts.max_iterations) +
                         " iterations");

    const Vector mx = matvec(residual, x);
    const double sigma = norm2(mx);
    if (lambda == 0.0 || sigma <= floor) {
      out.missing_rank = static_cast<int>(k - comp);
      break;
    }
    out.singular[comp] = sigma;
    for (std::size_t r = 0; r < rows; ++r) out.u(r, comp) = mx[r] / sigma;
    for (std::size_t c = 0; c < cols; ++c) out.v(c, comp) = x[c];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) residual(r, c) -= mx[r] * x[c];
  }
  const std::size_t found = k - static_cast<std::size_t>(out.missing_rank);
  if (found > 0) refine(m, found, out);
  return out;
}

GraphPrototypes build_graph_prototypes(const KnowledgeGraph& g,
                                       const std::vector<std::string>& classes, std::size_t dim,
                                       const RelationWeights& relation_weights) {
  if (classes.empty()) throw ConfigError("build_graph_prototypes: no classes given");
  std::vector<std::size_t> rows;
  for (const auto& c : classes) {
    const auto id = g.find(c);
    if (!id) throw ConfigError("class '" + c + "' is not a node of the graph");
    rows.push_back(*id);
  }
  if (dim == 0 || dim > g.node_count())
    throw ConfigError("embedding dimension " + std::to_string(dim) + " must lie in [1, " +
                      std::to_string(g.node_count()) + "] (graph node count)");

  GraphPrototypes out;
  const Matrix ppmi = ppmi_matrix(g, relation_weights);
  const TruncatedSvd svd = truncated_svd(ppmi, dim);
  if (svd.missing_rank > 0)
    out.warnings.push_back("PPMI matrix has rank below " + std::to_string(dim) + "; last " +
                           std::to_string(svd.missing_rank) + " dimensions are zero");
  const Matrix factor = svd.factor();

  PrototypeSet& p = out.prototypes;
  p.classes = classes;
  p.matrix = Matrix(classes.size(), dim);
  p.provenance = Provenance::PpmiSvd;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto src = factor.row(rows[i]);
    std::copy(src.begin(), src.end(), p.matrix.row(i).begin());
    if (norm2(src) == 0.0)
      out.warnings.push_back("class '" + classes[i] + "' has a zero prototype (no edge mass)");
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {
bool overlap(double lo1, double hi1, double lo2, double hi2) {
  return std::max(lo1, lo2) < std::min(hi1, hi2);
}
}  // namespace

std::vector<std::string> pair_relations(const Box& a, const Box& b, const SpatialRules& rules) {
  std::vector<std::string> out;
  const bool x_overlap = overlap(a.x1, a.x2, b.x1, b.x2);
  const bool y_overlap = overlap(a.y1, a.y2, b.y1, b.y2);
  if (intersection_area(a, b) > 0.0) out.emplace_back("touches");
  if (a.y2 < b.y1 && x_overlap) out.emplace_back("above");
  if (y_overlap && !x_overlap) out.emplace_back("besides");
  if (intersection_area(a, b) >= rules.holds_containment * b.area() &&
      b.area() < rules.holds_area_ratio * a.area())
    out.emplace_back("holds");
  if (std::abs(a.y2 - b.y1) <= rules.on_tolerance * a.height() && x_overlap)
    out.emplace_back("on");
  return out;
}

KnowledgeGraph build_cooccurrence_graph(const GroundtruthSet& gt,
                                        const std::vector<std::string>& class_names,
                                        const std::vector<std::string>& relations,
                                        const SpatialRules& rules) {
  const std::set<std::string> wanted(relations.begin(), relations.end());
  for (const auto& r : wanted)
    if (std::find(kSpatialRelations.begin(), kSpatialRelations.end(), r) ==
        kSpatialRelations.end())
      throw ConfigError("unknown spatial relation '" + r + "'");

  std::map<std::int64_t, std::vector<const GroundtruthBox*>> images;
  for (const auto& g : gt) {
    if (g.cls < 1 || static_cast<std::size_t>(g.cls) > class_names.size())
      throw ConfigError("groundtruth class id " + std::to_string(g.cls) + " has no name");
    require_valid(g.box);
    images[g.image_id].push_back(&g);
  }

  std::map<std::tuple<std::string, std::string, std::string>, double> counts;
  auto emit = [&](const std::string& src, const std::string& rel, const std::string& dst) {
    if (!wanted.contains(rel)) return;
    const bool symmetric = rel == "touches" || rel == "besides";
    if (symmetric && dst < src)
      counts[{dst, rel, src}] += 1.0;
    else
      counts[{src, rel, dst}] += 1.0;
  };
  for (const auto& [image, boxes] : images) {
    for (std::size_t i = 0; i < boxes.size(); ++i)
      for (std::size_t j = 0; j < boxes.size(); ++j) {
        if (i == j) continue;
        const auto& a = *boxes[i];
        const auto& b = *boxes[j];
        const auto& na = class_names[static_cast<std::size_t>(a.cls - 1)];
        const auto& nb = class_names[static_cast<std::size_t>(b.cls - 1)];
        for (const auto& rel : pair_relations(a.box, b.box, rules)) {
          // Symmetric relations are seen from both sides; count once.
          if ((rel == "touches" || rel == "besides") && j < i) continue;
          emit(na, rel, nb);
        }
      }
  }

  KnowledgeGraph g;
  for (const auto& c : class_names) g.add_node(c);
  for (const auto& [key, w] : counts)
    g.add_edge(std::get<0>(key), std::get<1>(key), std::get<2>(key), w);
  return g;
}

// ---------------------------------------------------------------------------

void EmbeddingTable::add(const std::string& name, Vector v) {
  if (dim_ == 0) dim_ = v.size();
  if (v.size() != dim_)
    throw ConfigError("embedding '" + name + "' has " + std::to_string(v.size()) +
                      " values, expected " + std::to_string(dim_));
  if (!all_finite(v)) throw ConfigError("embedding '" + name + "' has non-finite values");
  auto [it, inserted] = index_.try_emplace(name, names_.size());
  if (!inserted) throw ConfigError("duplicate embedding name '" + name + "'");
  names_.push_back(name);
  rows_.push_back(std::move(v));
}

const Vector& EmbeddingTable::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("'" + name + "' is not in the embedding table");
  return rows_[it->second];
}

EmbeddingTable parse_embedding_table(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(detail::trim(line));
    if (tokens.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + why);
    };
    if (tokens.size() < 2) fail("entry '" + tokens[0] + "' has no values");
    Vector v;
    v.reserve(tokens.size() - 1);
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto x = detail::parse_double(tokens[i]);
      if (!x) fail("token '" + tokens[i] + "' is not a finite number");
      v.push_back(*x);
    }
    try {
      table.add(tokens[0], std::move(v));
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }
  return table;
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding table " + path.string());
  try {
    return parse_embedding_table(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

PrototypeSet select_prototypes(const EmbeddingTable& table, const std::vector<std::string>& classes,
                               const std::map<std::string, std::string>& aliases) {
  if (classes.empty()) throw ConfigError("select_prototypes: no classes given");
  PrototypeSet p;
  p.classes = classes;
  p.matrix = Matrix(classes.size(), table.dim());
  p.provenance = Provenance::Glove;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto alias = aliases.find(classes[i]);
    const std::string& key = alias == aliases.end() ? classes[i] : alias->second;
    if (!table.contains(key)) {
      std::string msg = "class '" + classes[i] + "' not found in embedding table";
      if (key != classes[i]) msg += " (alias '" + key + "')";
      throw ConfigError(msg);
    }
    const auto& v = table.at(key);
    std::copy(v.begin(), v.end(), p.matrix.row(i).begin());
  }
  return p;
}

Matrix pairwise_distance_matrix(const PrototypeSet& p, const Metric& m) {
  const PrototypeSet q = prepare_for_metric(p, m);
  const std::size_t c = q.size();
  Matrix d(c, c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i + 1; j < c; ++j) d(i, j) = d(j, i) = distance(q.matrix.row(i), q.matrix.row(j), m);
  return d;
}

void write_distance_csv(std::ostream& out, const std::vector<std::string>& classes,
                        const Matrix& distances) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  out << "class";
  for (const auto& c : classes) out << ',' << quote(c);
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < distances.rows(); ++i) {
    out << quote(classes[i]);
    for (std::size_t j = 0; j < distances.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", distances(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

PrototypeSet random_orthogonal_prototypes(std::size_t classes, std::size_t dim,
                                          std::uint64_t seed) {
  if (classes < 1) throw ConfigError("random_orthogonal_prototypes: need at least one class");
  if (classes > dim)
    throw ConfigError("random_orthogonal_prototypes: " + std::to_string(classes) +
                      " classes do not fit orthogonally in " + std::to_string(dim) + " dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  PrototypeSet p;
  p.provenance = Provenance::RandomOrthogonal;
  p.matrix = Matrix(classes, dim);
  for (std::size_t r = 0; r < classes; ++r) {
    p.classes.push_back("class_" + std::to_string(r + 1));
    auto row = p.matrix.row(r);
    for (double& v : row) v = normal(rng);
    // Two Gram-Schmidt passes keep the Gram matrix at identity to ~1e-15.
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t q = 0; q < r; ++q) {
        const double proj = dot(row, p.matrix.row(q));
        for (std::size_t d = 0; d < dim; ++d) row[d] -= proj * p.matrix(q, d);
      }
    const double n = norm2(row);
    if (n < 1e-8) throw NumericError("random_orthogonal_prototypes: degenerate draw");
    for (double& v : row) v /= n;
  }
  return p;
}

}  // namespace kge
