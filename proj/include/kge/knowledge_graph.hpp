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
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "kge/core.hpp"

namespace kge {

struct Edge {
  std::size_t source = 0;
  std::string relation;
  std::size_t target = 0;
  double weight = 1.0;
};

// Typed, weighted, directed edge list over string-named nodes.
class KnowledgeGraph {
 public:
  // Returns the index of `name`, inserting it if new.
  std::size_t add_node(const std::string& name);
  // Endpoints must already exist when `strict`; otherwise they are created.
  void add_edge(const std::string& source, const std::string& relation,
                const std::string& target, double weight, bool strict = false);

  std::optional<std::size_t> find(const std::string& name) const;
  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<std::string> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Edge> edges_;
};

// Tab-separated edge list: `source<TAB>relation<TAB>target<TAB>weight`.
// Blank lines and lines starting with '#' are skipped. A line holding a
// single field declares a node. In strict mode, edges may only reference
// declared nodes.
KnowledgeGraph parse_graph(std::istream& in, bool strict = false);
KnowledgeGraph load_graph(const std::filesystem::path& path, bool strict = false);

// Rooted tree built from `isa` edges (child isa parent).
class Taxonomy {
 public:
  // Throws ConfigError unless the `isa` edges form a single-rooted tree.
  static Taxonomy from_graph(const KnowledgeGraph& g,
                             const std::string& relation = "isa");
  static Taxonomy from_parents(const std::map<std::string, std::string>& child_to_parent);

  bool contains(const std::string& node) const;
  const std::string& root() const { return names_[root_]; }
  int depth(const std::string& node) const;
  std::optional<std::string> parent(const std::string& node) const;
  bool is_leaf(const std::string& node) const;
  const std::vector<std::string>& nodes() const { return names_; }

  std::string lowest_common_ancestor(const std::string& a, const std::string& b) const;
  double wup_similarity(const std::string& a, const std::string& b) const;

 private:
  std::size_t id(const std::string& node) const;
  std::size_t lca_id(std::size_t a, std::size_t b) const;

  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::ptrdiff_t> parent_;  // -1 at the root
  std::vector<int> depth_;              // root has depth 1
  std::vector<int> child_count_;
  std::size_t root_ = 0;
};

// Total class -> category assignment. Category ids are taxonomy node names.
struct CategoryMap {
  std::vector<std::string> classes;
  std::vector<std::string> category_of;  // parallel to `classes`

  std::vector<std::string> categories() const;  // sorted, unique
  const std::string& at(const std::string& cls) const;
  // Category index (into categories()) for each class, in class order.
  std::vector<int> category_indices() const;
};

// Single-linkage clustering of `classes` under pairwise WUP similarity: two
// classes join when wup >= threshold. Each cluster is named by the lca of
// its members.
CategoryMap categorize(const Taxonomy& t, const std::vector<std::string>& classes,
                       double threshold = 0.6);

nlohmann::json to_json(const CategoryMap& cm);
CategoryMap category_map_from_json(const nlohmann::json& j);

}  // namespace kge
