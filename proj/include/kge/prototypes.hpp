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
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kge/boxes.hpp"
#include "kge/core.hpp"
#include "kge/geometry.hpp"
#include "kge/knowledge_graph.hpp"

namespace kge {

// Background decided by a similarity threshold against all foreground
// prototypes; no background vector.
struct ImplicitBackground {
  double threshold = 0.55;
};

// Background is an extra prototype competing as class 0.
struct ExplicitBackground {
  Vector vector;
};

using BackgroundPolicy = std::variant<ImplicitBackground, ExplicitBackground>;

enum class Provenance { Glove, PpmiSvd, LearnedBaseline, RandomOrthogonal };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// Fixed class prototypes. Row c-1 of `matrix` is the prototype of class id c.
struct PrototypeSet {
  std::vector<std::string> classes;
  Matrix matrix;
  BackgroundPolicy background = ImplicitBackground{};
  Provenance provenance = Provenance::PpmiSvd;

  std::size_t size() const { return matrix.rows(); }
  std::size_t dim() const { return matrix.cols(); }
  // Class id in 1..C.
  std::span<const double> prototype(int cls) const {
    return matrix.row(static_cast<std::size_t>(cls - 1));
  }

  // Throws ConfigError if any invariant is violated.
  void validate() const;

  // Mean of all prototypes as an explicit background vector.
  PrototypeSet with_mean_background() const;
  PrototypeSet with_zero_background() const;
  PrototypeSet with_implicit_background(double threshold) const;
};

// Copy of `p` with all rows (and any explicit background) passed through
// project_unit_sphere when the metric requires it.
PrototypeSet prepare_for_metric(const PrototypeSet& p, const Metric& m);

nlohmann::json to_json(const PrototypeSet& p);
PrototypeSet prototype_set_from_json(const nlohmann::json& j);
PrototypeSet load_prototypes(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Graph embeddings

// Missing relations weigh 1.
using RelationWeights = std::map<std::string, double>;

// Positive pointwise mutual information of the symmetrised, relation-weighted
// adjacency. Rows and columns with zero mass stay zero.
Matrix ppmi_matrix(const KnowledgeGraph& g, const RelationWeights& relation_weights = {});

struct TruncatedSvd {
  Matrix u;            // rows x k, orthonormal columns
  Vector singular;     // k values, descending
  Matrix v;            // cols x k, orthonormal columns
  int missing_rank = 0;  // trailing dimensions zero-padded because rank < k
  int iterations = 0;    // total power iterations

  // U_k * Sigma_k^{1/2}.
  Matrix factor() const;
  // U_k * Sigma_k * V_k^T.
  Matrix reconstruct() const;
};

struct SvdOptions {
  double tolerance = 1e-10;  // relative change of the eigenvalue estimate
  int max_iterations = 10000;
  std::uint64_t seed = 0x5eed;
};

// Best rank-k factorisation by power iteration on M^T M with deflation of M
// after each extracted component, finished by a Rayleigh-Ritz step on the
// recovered subspace.
TruncatedSvd truncated_svd(const Matrix& m, std::size_t k, const SvdOptions& opts = {});

struct GraphPrototypes {
  PrototypeSet prototypes;
  std::vector<std::string> warnings;
};

GraphPrototypes build_graph_prototypes(const KnowledgeGraph& g,
                                       const std::vector<std::string>& classes,
                                       std::size_t dim,
                                       const RelationWeights& relation_weights = {});

// Geometric rules that turn a same-image box pair into relation edges.
struct SpatialRules {
  double on_tolerance = 0.05;        // fraction of the upper box height
  double holds_containment = 0.9;    // fraction of the held box inside the holder
  double holds_area_ratio = 0.25;    // held area below this fraction of the holder
};

// Relations that `pair_relations` may emit.
inline const std::vector<std::string> kSpatialRelations = {"touches", "above", "besides",
                                                           "holds", "on"};

// Relations that hold from `a` to `b`. `touches` and `besides` are symmetric.
std::vector<std::string> pair_relations(const Box& a, const Box& b, const SpatialRules& rules = {});

// Co-occurrence graph over class names with edge weight = number of box
// pairs satisfying the relation. Symmetric relations are stored with the
// lexicographically smaller class name as source. Every class in
// `class_names` becomes a node.
KnowledgeGraph build_cooccurrence_graph(const GroundtruthSet& gt,
                                        const std::vector<std::string>& class_names,
                                        const std::vector<std::string>& relations = kSpatialRelations,
                                        const SpatialRules& rules = {});

// ---------------------------------------------------------------------------
// Word-embedding tables

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  void add(const std::string& name, Vector v);
  bool contains(const std::string& name) const { return index_.contains(name); }
  const Vector& at(const std::string& name) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::size_t dim_;
  std::vector<std::string> names_;
  std::vector<Vector> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

// `name v1 ... vD` per line, whitespace separated.
EmbeddingTable parse_embedding_table(std::istream& in);
EmbeddingTable load_embedding_table(const std::filesystem::path& path);

// Aliases map a class name to the table entry that stands in for it.
PrototypeSet select_prototypes(const EmbeddingTable& table, const std::vector<std::string>& classes,
                               const std::map<std::string, std::string>& aliases = {});

// ---------------------------------------------------------------------------

// C x C distances between prototypes; Lk metrics project rows first.
Matrix pairwise_distance_matrix(const PrototypeSet& p, const Metric& m);

void write_distance_csv(std::ostream& out, const std::vector<std::string>& classes,
                        const Matrix& distances);

// C pairwise orthonormal rows in D dimensions, deterministic per seed.
PrototypeSet random_orthogonal_prototypes(std::size_t classes, std::size_t dim,
                                          std::uint64_t seed);

}  // namespace kge
