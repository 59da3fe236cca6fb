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

#include "kge/knowledge_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "kge/core.hpp"
#include "text_util.hpp"

namespace kge {

std::size_t KnowledgeGraph::add_node(const std::string& name) {
  auto [it, inserted] = index_.try_emplace(name, nodes_.size());
  if (inserted) nodes_.push_back(name);
  return it->second;
}

void KnowledgeGraph::add_edge(const std::string& source, const std::string& relation,
                              const std::string& target, double weight, bool strict) {
  if (!(weight >= 0.0) || !std::isfinite(weight))
    throw ConfigError("edge " + source + " -" + relation + "-> " + target +
                      ": weight must be finite and nonnegative");
  if (strict) {
    for (const auto* n : {&source, &target})
      if (!index_.contains(*n)) throw ConfigError("edge references unknown node '" + *n + "'");
  }
  const std::size_t s = add_node(source);
  const std::size_t t = add_node(target);
  edges_.push_back({s, relation, t, weight});
}

std::optional<std::size_t> KnowledgeGraph::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

KnowledgeGraph parse_graph(std::istream& in, bool strict) {
  KnowledgeGraph g;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line.front() == '#') continue;
    const auto fields = detail::split(line, '\t');
    auto fail = [&](const std::string& why) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() == 1) {
      g.add_node(std::string(detail::trim(fields[0])));
      continue;
    }
    if (fields.size() != 4) fail("expected 4 tab-separated fields, got " +
                                 std::to_string(fields.size()));
    const auto weight = detail::parse_double(detail::trim(fields[3]));
    if (!weight) fail("weight '" + fields[3] + "' is not a number");
    if (*weight < 0.0) fail("negative weight " + fields[3]);
    try {
      g.add_edge(std::string(detail::trim(fields[0])), std::string(detail::trim(fields[1])),
                 std::string(detail::trim(fields[2])), *weight, strict);
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }
  return g;
}

KnowledgeGraph load_graph(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open graph file " + path.string());
  try {
    return parse_graph(in, strict);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Taxonomy

Taxonomy Taxonomy::from_graph(const KnowledgeGraph& g, const std::string& relation) {
  std::map<std::string, std::string> parents;
  std::set<std::string> seen;
  for (const auto& n : g.nodes()) seen.insert(n);
  for (const auto& e : g.edges()) {
    if (e.relation != relation) continue;
    const auto& child = g.nodes()[e.source];
    const auto& parent = g.nodes()[e.target];
    auto [it, inserted] = parents.emplace(child, parent);
    if (!inserted && it->second != parent)
      throw ConfigError("node '" + child + "' has multiple parents ('" + it->second +
                        "', '" + parent + "')");
  }
  Taxonomy t = from_parents(parents);
  // Isolated declared nodes would form extra roots.
  for (const auto& n : seen)
    if (!t.contains(n))
      throw ConfigError("node '" + n + "' is not connected to the taxonomy");
  return t;
}

Taxonomy Taxonomy::from_parents(const std::map<std::string, std::string>& child_to_parent) {
  Taxonomy t;
  auto intern = [&t](const std::string& n) {
    auto [it, inserted] = t.index_.try_emplace(n, t.names_.size());
    if (inserted) t.names_.push_back(n);
    return it->second;
  };
  for (const auto& [c, p] : child_to_parent) {
    intern(c);
    intern(p);
  }
  if (t.names_.empty()) throw ConfigError("taxonomy has no nodes");
  const std::size_t n = t.names_.size();
  t.parent_.assign(n, -1);
  t.child_count_.assign(n, 0);
  for (const auto& [c, p] : child_to_parent) {
    if (c == p) throw ConfigError("node '" + c + "' is its own parent");
    t.parent_[t.index_.at(c)] = static_cast<std::ptrdiff_t>(t.index_.at(p));
    ++t.child_count_[t.index_.at(p)];
  }
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i)
    if (t.parent_[i] < 0) roots.push_back(i);
  if (roots.size() != 1) {
    std::string msg = "taxonomy must have exactly one root, found " +
                      std::to_string(roots.size());
    for (std::size_t i = 0; i < std::min<std::size_t>(roots.size(), 5); ++i)
      msg += (i == 0 ? ": " : ", ") + t.names_[roots[i]];
    throw ConfigError(msg);
  }
  t.root_ = roots.front();

  t.depth_.assign(n, 0);
  t.depth_[t.root_] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    // Walk up until a node with known depth; a walk longer than n is a cycle.
    std::vector<std::size_t> path;
    std::size_t cur = i;
    while (t.depth_[cur] == 0) {
      path.push_back(cur);
      if (path.size() > n) throw ConfigError("taxonomy contains a cycle through '" +
                                             t.names_[i] + "'");
      cur = static_cast<std::size_t>(t.parent_[cur]);
    }
    int d = t.depth_[cur];
    for (auto it = path.rbegin(); it != path.rend(); ++it) t.depth_[*it] = ++d;
  }
  return t;
}

bool Taxonomy::contains(const std::string& node) const { return index_.contains(node); }

std::size_t Taxonomy::id(const std::string& node) const {
  auto it = index_.find(node);
  if (it == index_.end()) throw ConfigError("node '" + node + "' is not in the taxonomy");
  return it->second;
}

int Taxonomy::depth(const std::string& node) const { return depth_[id(node)]; }

std::optional<std::string> Taxonomy::parent(const std::string& node) const {
  const auto p = parent_[id(node)];
  if (p < 0) return std::nullopt;
  return names_[static_cast<std::size_t>(p)];
}

bool Taxonomy::is_leaf(const std::string& node) const { return child_count_[id(node)] == 0; }

std::size_t Taxonomy::lca_id(std::size_t a, std::size_t b) const {
  while (depth_[a] > depth_[b]) a = static_cast<std::size_t>(parent_[a]);
  while (depth_[b] > depth_[a]) b = static_cast<std::size_t>(parent_[b]);
  while (a != b) {
    a = static_cast<std::size_t>(parent_[a]);
    b = static_cast<std::size_t>(parent_[b]);
  }
  return a;
}

std::string Taxonomy::lowest_common_ancestor(const std::string& a, const std::string& b) const {
  return names_[lca_id(id(a), id(b))];
}

double Taxonomy::wup_similarity(const std::string& a, const std::string& b) const {
  const std::size_t ia = id(a), ib = id(b);
  return 2.0 * depth_[lca_id(ia, ib)] / static_cast<double>(depth_[ia] + depth_[ib]);
}

// ---------------------------------------------------------------------------
// Categories

std::vector<std::string> CategoryMap::categories() const {
  std::set<std::string> s(category_of.begin(), category_of.end());
  return {s.begin(), s.end()};
}

const std::string& CategoryMap::at(const std::string& cls) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == cls) return category_of[i];
  throw ConfigError("class '" + cls + "' has no category");
}

std::vector<int> CategoryMap::category_indices() const {
  const auto cats = categories();
  std::vector<int> out;
  out.reserve(classes.size());
  for (const auto& c : category_of)
    out.push_back(static_cast<int>(std::lower_bound(cats.begin(), cats.end(), c) - cats.begin()));
  return out;
}

CategoryMap categorize(const Taxonomy& t, const std::vector<std::string>& classes,
                       double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ConfigError("categorize: threshold must lie in (0, 1]");
  for (const auto& c : classes) {
    if (!t.contains(c)) throw ConfigError("class '" + c + "' is not in the taxonomy");
    if (!t.is_leaf(c)) throw ConfigError("class '" + c + "' is not a taxonomy leaf");
  }
  const std::size_t n = classes.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (t.wup_similarity(classes[i], classes[j]) >= threshold) {
        const auto ri = find(i), rj = find(j);
        if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
      }

  std::map<std::size_t, std::string> cluster_lca;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = find(i);
    auto [it, inserted] = cluster_lca.emplace(r, classes[i]);
    if (!inserted) it->second = t.lowest_common_ancestor(it->second, classes[i]);
  }
  // Distinct clusters can share an lca; disambiguate in first-member order.
  std::map<std::string, int> uses;
  std::map<std::size_t, std::string> cluster_name;
  for (const auto& [root, lca] : cluster_lca) {
    const int k = uses[lca]++;
    cluster_name[root] = k == 0 ? lca : lca + "#" + std::to_string(k + 1);
  }

  CategoryMap cm;
  cm.classes = classes;
  cm.category_of.reserve(n);
  for (std::size_t i = 0; i < n; ++i) cm.category_of.push_back(cluster_name[find(i)]);
  return cm;
}

nlohmann::json to_json(const CategoryMap& cm) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < cm.classes.size(); ++i) j[cm.classes[i]] = cm.category_of[i];
  return j;
}

CategoryMap category_map_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("category map must be a JSON object");
  CategoryMap cm;
  for (const auto& [cls, cat] : j.items()) {
    if (!cat.is_string() || cat.get<std::string>().empty())
      throw ConfigError("category for class '" + cls + "' must be a nonempty string");
    cm.classes.push_back(cls);
    cm.category_of.push_back(cat.get<std::string>());
  }
  return cm;
}

}  // namespace kge
