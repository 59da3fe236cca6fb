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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "kge/prototypes.hpp"
#include "oracles.hpp"

using kge::Matrix;
using kge::Metric;

namespace {

kge::KnowledgeGraph graph(const std::string& text) {
  std::istringstream in(text);
  return kge::parse_graph(in);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("ppmi_matrix on two nodes") {
  auto m = kge::ppmi_matrix(graph("a\tr\tb\t1\n"));
  REQUIRE(m.rows() == 2);
  // Symmetrised adjacency [[0,1],[1,0]]: P(a,b) = 1/2, P(a) = P(b) = 1/2.
  CHECK(m(0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(m(1, 0) == doctest::Approx(std::log(2.0)));
  CHECK(m(0, 0) == 0.0);
  CHECK(m(1, 1) == 0.0);
}

TEST_CASE("ppmi_matrix edge cases and symmetry") {
  auto isolated = graph("a\nb\nc\n");
  auto z = kge::ppmi_matrix(isolated);
  CHECK(z.rows() == 3);
  CHECK(z.frobenius_norm() == 0.0);
  CHECK_THROWS_AS(kge::ppmi_matrix(graph("a\tr\tb\t0\n")), kge::ConfigError);

  auto tri = kge::ppmi_matrix(graph("a\tr\tb\t1\nb\tr\tc\t1\na\tr\tc\t1\n"));
  CHECK(tri(0, 1) == doctest::Approx(tri(0, 2)));
  CHECK(tri(0, 1) == doctest::Approx(tri(1, 2)));

  // Random weighted graph: symmetric, non-negative.
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> node(0, 7);
  std::uniform_real_distribution<double> w(0.1, 3.0);
  kge::KnowledgeGraph g;
  for (int i = 0; i < 20; ++i)
    g.add_edge("n" + std::to_string(node(rng)), i % 2 ? "x" : "y", "n" + std::to_string(node(rng)),
               w(rng));
  auto p = kge::ppmi_matrix(g, {{"x", 2.0}});
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      CHECK(p(i, j) >= 0.0);
      CHECK(p(i, j) == p(j, i));
    }
}

TEST_CASE("truncated_svd basics") {
  auto id = kge::truncated_svd(Matrix::identity(3), 3);
  for (double s : id.singular) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(1);
  auto u = oracle::random_vector(rng, 6);
  auto v = oracle::random_vector(rng, 5);
  Matrix r1(6, 5);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) r1(i, j) = u[i] * v[j];
  auto svd = kge::truncated_svd(r1, 1);
  CHECK((r1 - svd.reconstruct()).frobenius_norm() < 1e-8);

  auto padded = kge::truncated_svd(r1, 3);
  CHECK(padded.missing_rank == 2);
  CHECK(padded.singular[1] == 0.0);
  CHECK(padded.factor().cols() == 3);
}

TEST_CASE("truncated_svd matches the Jacobi oracle") {
  std::mt19937_64 rng(2);
  auto m = oracle::random_matrix(rng, 8, 8);
  auto svd = kge::truncated_svd(m, 4);
  const double err = (m - svd.reconstruct()).frobenius_norm();
  CHECK(err == doctest::Approx(oracle::best_rank_k_error(m, 4)).epsilon(1e-9));
  auto sv = oracle::jacobi_singular_values(m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(svd.singular[i] == doctest::Approx(sv[i]).epsilon(1e-9));
  // Orthonormal factors.
  auto utu = svd.u.transpose() * svd.u;
  CHECK(max_abs_diff(utu, Matrix::identity(4)) < 1e-9);
}

TEST_CASE("truncated_svd factor on symmetric PSD input") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto b = oracle::random_matrix(rng, 7, 7);
    auto m = b * b.transpose();
    auto svd = kge::truncated_svd(m, 3);
    auto f = svd.factor();
    const double err = (m - f * f.transpose()).frobenius_norm();
    CHECK(err <= oracle::best_rank_k_error(m, 3) + 1e-8);
  }
}

TEST_CASE("build_graph_prototypes") {
  auto g = graph("a\tr\tb\t1\n");
  auto two = kge::build_graph_prototypes(g, {"a", "b"}, 2);
  CHECK(two.prototypes.size() == 2);
  CHECK(two.prototypes.dim() == 2);
  CHECK(kge::all_finite(two.prototypes.matrix.data()));
  // F F^T reproduces the PPMI matrix at full rank.
  auto f = two.prototypes.matrix;
  CHECK(max_abs_diff(f * f.transpose(), kge::ppmi_matrix(g)) < 1e-9 + 2 * std::log(2.0));
  CHECK(two.prototypes.provenance == kge::Provenance::PpmiSvd);

  auto single = kge::build_graph_prototypes(graph("a\tr\tb\t1\n"), {"a"}, 1);
  CHECK(single.prototypes.matrix.rows() == 1);
  CHECK(single.prototypes.matrix.cols() == 1);

  auto disconnected = kge::build_graph_prototypes(graph("a\tr\tb\t1\nz\n"), {"a", "z"}, 2);
  CHECK(kge::norm2(disconnected.prototypes.prototype(2)) == 0.0);
  CHECK(disconnected.warnings.size() == 1);

  CHECK_THROWS_AS(kge::build_graph_prototypes(g, {"a", "q"}, 2), kge::ConfigError);
  CHECK_THROWS_AS(kge::build_graph_prototypes(g, {"a"}, 3), kge::ConfigError);
}

TEST_CASE("pair_relations rule table") {
  kge::Box a{0, 0, 10, 10}, b{5, 5, 15, 15};
  auto r = kge::pair_relations(a, b);
  CHECK(std::find(r.begin(), r.end(), "touches") != r.end());

  kge::Box top{0, 0, 10, 10}, bottom{2, 20, 8, 30};
  auto above = kge::pair_relations(top, bottom);
  CHECK(std::find(above.begin(), above.end(), "above") != above.end());
  auto below = kge::pair_relations(bottom, top);
  CHECK(std::find(below.begin(), below.end(), "above") == below.end());

  kge::Box left{0, 0, 10, 10}, right{20, 2, 30, 8};
  auto side = kge::pair_relations(left, right);
  CHECK(std::find(side.begin(), side.end(), "besides") != side.end());

  kge::Box holder{0, 0, 100, 100}, held{10, 10, 30, 30};
  auto h = kge::pair_relations(holder, held);
  CHECK(std::find(h.begin(), h.end(), "holds") != h.end());

  kge::Box cup{40, 60, 60, 100}, table{0, 100.5, 100, 140};
  auto on = kge::pair_relations(cup, table);
  CHECK(std::find(on.begin(), on.end(), "on") != on.end());
}

TEST_CASE("build_cooccurrence_graph") {
  std::vector<std::string> names = {"cup", "table"};
  kge::GroundtruthSet lonely = {{0, {0, 0, 10, 10}, 1}, {1, {0, 0, 10, 10}, 2}};
  auto none = kge::build_cooccurrence_graph(lonely, names);
  CHECK(none.edges().empty());
  CHECK(none.node_count() == 2);

  kge::GroundtruthSet overlap = {{0, {0, 0, 10, 10}, 1}, {0, {5, 5, 15, 15}, 2}};
  auto t = kge::build_cooccurrence_graph(overlap, names, {"touches"});
  REQUIRE(t.edges().size() == 1);
  CHECK(t.edges()[0].relation == "touches");
  CHECK(t.edges()[0].weight == 1.0);

  kge::GroundtruthSet stacked = {{0, {2, 20, 8, 30}, 2}, {0, {0, 0, 10, 10}, 1}};
  auto a = kge::build_cooccurrence_graph(stacked, names, {"above"});
  REQUIRE(a.edges().size() == 1);
  CHECK(a.nodes()[a.edges()[0].source] == "cup");
  CHECK(a.nodes()[a.edges()[0].target] == "table");
}

TEST_CASE("build_cooccurrence_graph is order invariant") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(0, 80), size(5, 30);
  std::uniform_int_distribution<int> cls(1, 4), img(0, 5);
  kge::GroundtruthSet gt;
  for (int i = 0; i < 60; ++i) {
    double x = pos(rng), y = pos(rng);
    gt.push_back({img(rng), {x, y, x + size(rng), y + size(rng)}, cls(rng)});
  }
  std::vector<std::string> names = {"d", "c", "b", "a"};
  auto edge_set = [](const kge::KnowledgeGraph& g) {
    std::map<std::tuple<std::string, std::string, std::string>, double> out;
    for (const auto& e : g.edges())
      out[{g.nodes()[e.source], e.relation, g.nodes()[e.target]}] = e.weight;
    return out;
  };
  auto base = edge_set(kge::build_cooccurrence_graph(gt, names));
  CHECK_FALSE(base.empty());
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(gt.begin(), gt.end(), rng);
    CHECK(edge_set(kge::build_cooccurrence_graph(gt, names)) == base);
  }
}

TEST_CASE("embedding tables") {
  std::istringstream one("cat 1 0\n");
  auto t = kge::parse_embedding_table(one);
  CHECK(t.dim() == 2);
  CHECK(t.size() == 1);

  std::istringstream bad_dim("cat 1 0\ndog 1\n");
  CHECK_THROWS_WITH_AS(kge::parse_embedding_table(bad_dim), doctest::Contains("line 2"), kge::ConfigError);
  std::istringstream nan_token("cat 1 nan\n");
  CHECK_THROWS_AS(kge::parse_embedding_table(nan_token), kge::ConfigError);

  std::istringstream table("cat 1 0\ntable 0 1\n");
  auto tt = kge::parse_embedding_table(table);
  CHECK_THROWS_WITH_AS(kge::select_prototypes(tt, {"dining table"}), doctest::Contains("dining table"),
                       kge::ConfigError);
  auto p = kge::select_prototypes(tt, {"cat", "dining table"}, {{"dining table", "table"}});
  CHECK(p.classes == std::vector<std::string>{"cat", "dining table"});
  CHECK(p.prototype(2)[1] == 1.0);
  CHECK(p.provenance == kge::Provenance::Glove);
}

TEST_CASE("pairwise_distance_matrix") {
  kge::PrototypeSet same;
  same.classes = {"a", "b"};
  same.matrix = Matrix::from_rows({{0.3, 0.4}, {0.3, 0.4}});
  CHECK(kge::pairwise_distance_matrix(same, Metric::cosine()).frobenius_norm() == doctest::Approx(0.0));
  CHECK(kge::pairwise_distance_matrix(same, Metric::manhattan()).frobenius_norm() == 0.0);

  auto ortho = kge::random_orthogonal_prototypes(3, 3, 1);
  auto d = kge::pairwise_distance_matrix(ortho, Metric::cosine());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(d(i, j) == doctest::Approx(i == j ? 0.0 : 1.0));

  // Naive loop oracle on a 4-prototype fixture with norms above 1.
  kge::PrototypeSet four;
  four.classes = {"a", "b", "c", "d"};
  four.matrix = Matrix::from_rows({{2, 0, 1}, {0.1, 0.2, 0.3}, {-1, 3, 0}, {0.5, -0.5, 0.5}});
  for (auto m : {Metric::cosine(), Metric::manhattan()}) {
    auto got = kge::pairwise_distance_matrix(four, m);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        auto a = four.matrix.row_copy(i), b = four.matrix.row_copy(j);
        double expect = 0.0;
        if (m.kind == Metric::Kind::Cosine) {
          double ab = 0, aa = 0, bb = 0;
          for (int k = 0; k < 3; ++k) ab += a[k] * b[k], aa += a[k] * a[k], bb += b[k] * b[k];
          expect = 1.0 - ab / std::sqrt(aa * bb);
        } else {
          double na = std::max(1.0, std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]));
          double nb = std::max(1.0, std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]));
          for (int k = 0; k < 3; ++k) expect += std::abs(a[k] / na - b[k] / nb);
        }
        CHECK(got(i, j) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(got(i, j) == got(j, i));
        CHECK(got(i, j) >= 0.0);
        CHECK(got(i, j) <= 2.0 * std::sqrt(3.0) + 1e-12);
        if (m.kind == Metric::Kind::Cosine) CHECK(got(i, j) <= 2.0);
      }
  }
}

TEST_CASE("random_orthogonal_prototypes") {
  auto one = kge::random_orthogonal_prototypes(1, 4, 7);
  CHECK(kge::norm2(one.prototype(1)) == doctest::Approx(1.0));
  auto three = kge::random_orthogonal_prototypes(3, 3, 7);
  CHECK(max_abs_diff(three.matrix * three.matrix.transpose(), Matrix::identity(3)) < 1e-10);
  CHECK(kge::random_orthogonal_prototypes(3, 3, 7).matrix == three.matrix);
  CHECK_FALSE(kge::random_orthogonal_prototypes(3, 3, 8).matrix == three.matrix);
  CHECK(three.provenance == kge::Provenance::RandomOrthogonal);
  CHECK_THROWS_AS(kge::random_orthogonal_prototypes(4, 3, 7), kge::ConfigError);
}

TEST_CASE("prototype set JSON round-trip") {
  auto p = kge::random_orthogonal_prototypes(3, 5, 2).with_mean_background();
  auto back = kge::prototype_set_from_json(kge::to_json(p));
  CHECK(back.classes == p.classes);
  CHECK(back.matrix == p.matrix);
  CHECK(back.provenance == p.provenance);
  REQUIRE(std::holds_alternative<kge::ExplicitBackground>(back.background));
  CHECK(std::get<kge::ExplicitBackground>(back.background).vector ==
        std::get<kge::ExplicitBackground>(p.background).vector);

  auto implicit = p.with_implicit_background(0.7);
  auto back2 = kge::prototype_set_from_json(kge::to_json(implicit));
  CHECK(std::get<kge::ImplicitBackground>(back2.background).threshold == 0.7);

  auto j = kge::to_json(p);
  j["dim"] = 4;
  CHECK_THROWS_AS(kge::prototype_set_from_json(j), kge::ConfigError);
}
