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

#include <cmath>
#include <random>
#include <sstream>

#include "kge/evaluation.hpp"
#include "oracles.hpp"

using kge::Box;
using kge::ConfusionMatrix;

namespace {

// Single class, two groundtruth boxes in one image; detections ranked
// TP (0.9), FP (0.8), TP (0.7).
kge::GroundtruthSet fixture_gts() { return {{0, {0, 0, 10, 10}, 1}, {0, {20, 20, 30, 30}, 1}}; }
kge::DetectionSet fixture_dets() {
  return {{0, {0, 0, 10, 10}, 1, 0.9}, {0, {50, 50, 60, 60}, 1, 0.8}, {0, {20, 20, 30, 30}, 1, 0.7}};
}

ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  ConfusionMatrix e(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) e.at(i, j) = rows[i][j];
  return e;
}

}  // namespace

TEST_CASE("AP on the three-detection fixture") {
  // Precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1. Envelope: 1 up to recall
  // 0.5 (51 sample points), 2/3 after (50 points).
  const double expect = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
  CHECK(std::abs(kge::average_precision_single(fixture_dets(), fixture_gts(), 1, 0.5) - expect) < 1e-9);
  auto r = kge::average_precision(fixture_dets(), fixture_gts());
  CHECK(std::abs(r.ap - expect) < 1e-9);
  CHECK(std::abs(r.ap50 - expect) < 1e-9);
}

TEST_CASE("AP on perfect and empty detections") {
  kge::GroundtruthSet gts = {{0, {0, 0, 10, 10}, 1}, {1, {5, 5, 25, 15}, 2}, {1, {30, 0, 40, 40}, 1}};
  kge::DetectionSet perfect;
  for (const auto& g : gts) perfect.push_back({g.image_id, g.box, g.cls, 1.0});
  auto r = kge::average_precision(perfect, gts);
  CHECK(r.ap == 1.0);
  CHECK(r.ap50 == 1.0);
  CHECK(r.ap75 == 1.0);
  CHECK(r.ap_w == 1.0);
  for (auto& [c, v] : r.per_class) CHECK(v == 1.0);
  for (double t : kge::coco_iou_thresholds())
    CHECK(kge::average_precision_single(perfect, gts, 1, t) == 1.0);

  auto none = kge::average_precision({}, gts);
  CHECK(none.ap == 0.0);
  CHECK(none.ap_w == 0.0);
}

TEST_CASE("AP weighting, exclusions and categories") {
  kge::GroundtruthSet gts = {{0, {0, 0, 10, 10}, 1},
                             {0, {20, 0, 30, 10}, 1},
                             {0, {40, 0, 50, 10}, 1},
                             {0, {60, 0, 70, 10}, 2}};
  // Class 1 perfect; class 2 detected with the wrong label 3; class 4 has
  // no groundtruth at all.
  kge::DetectionSet dets = {{0, {0, 0, 10, 10}, 1, 0.9},
                            {0, {20, 0, 30, 10}, 1, 0.8},
                            {0, {40, 0, 50, 10}, 1, 0.7},
                            {0, {60, 0, 70, 10}, 3, 0.6},
                            {0, {90, 0, 99, 10}, 4, 0.5}};
  std::map<int, int> cat = {{1, 1}, {2, 2}, {3, 2}, {4, 3}};
  auto r = kge::average_precision(dets, gts, kge::coco_iou_thresholds(), &cat);
  CHECK(r.per_class.at(1) == 1.0);
  CHECK(r.per_class.at(2) == 0.0);
  CHECK(r.ap == doctest::Approx(0.5));
  CHECK(r.ap_w == doctest::Approx(0.75));
  CHECK(r.excluded_classes == std::vector<int>{3, 4});
  // Classes 2 and 3 share a category, so the mislabelled detection counts.
  CHECK(r.ap_cat == doctest::Approx(1.0));
  CHECK(r.ap_cat_w == doctest::Approx(1.0));
}

TEST_CASE("AP depends only on the score ranking") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pos(0, 50), jitter(-3, 3), unit(0, 1);
  std::uniform_int_distribution<int> cls(1, 3);
  for (int trial = 0; trial < 20; ++trial) {
    kge::GroundtruthSet gts;
    kge::DetectionSet dets;
    for (int i = 0; i < 15; ++i) {
      double x = pos(rng), y = pos(rng);
      gts.push_back({i % 3, {x, y, x + 10, y + 10}, cls(rng)});
      if (unit(rng) < 0.8) {
        double dx = jitter(rng), dy = jitter(rng);
        dets.push_back({i % 3, {x + dx, y + dy, x + dx + 10, y + dy + 10}, cls(rng), unit(rng)});
      }
    }
    auto base = kge::average_precision(dets, gts);
    for (auto& d : dets) d.score = std::pow(d.score, 3.0) * 0.5;
    auto rescaled = kge::average_precision(dets, gts);
    CHECK(rescaled.ap == base.ap);
    CHECK(rescaled.ap_w == base.ap_w);
    CHECK(base.ap >= 0.0);
    CHECK(base.ap <= 1.0);
  }
}

TEST_CASE("confusion_matrix rules") {
  kge::GroundtruthSet gts = {{0, {0, 0, 10, 10}, 1}, {0, {20, 0, 30, 10}, 2}};
  kge::DetectionSet correct = {{0, {0, 0, 10, 10}, 1, 0.9}, {0, {20, 0, 30, 10}, 2, 0.9}};
  auto diag = kge::confusion_matrix(correct, gts, 2);
  CHECK(diag.at(0, 0) == 1);
  CHECK(diag.at(1, 1) == 1);
  CHECK(diag.total() == 2);

  kge::DetectionSet two = {{0, {0, 0, 10, 10}, 1, 0.9}, {0, {0, 0, 10, 10}, 2, 0.8}};
  auto highest = kge::confusion_matrix(two, {gts[0]}, 2);
  CHECK(highest.at(0, 0) == 1);
  CHECK(highest.at(0, 1) == 0);

  // IoU = 79 / 100 against the groundtruth [0,10]^2: below the 0.8 floor.
  kge::DetectionSet shifted = {{0, {0, 0, 7.9, 10}, 1, 0.9}};
  CHECK(kge::iou(shifted[0].box, gts[0].box) == doctest::Approx(0.79));
  auto missed = kge::confusion_matrix(shifted, {gts[0]}, 2);
  CHECK(missed.missed(0) == 1);

  // Other image: never matched.
  kge::DetectionSet elsewhere = {{5, {0, 0, 10, 10}, 1, 0.9}};
  CHECK(kge::confusion_matrix(elsewhere, {gts[0]}, 2).missed(0) == 1);
}

TEST_CASE("confusion_matrix accounts for every groundtruth box") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pos(0, 40), jitter(-1.5, 1.5), unit(0, 1);
  std::uniform_int_distribution<int> cls(1, 4), pred(0, 4);
  for (int trial = 0; trial < 30; ++trial) {
    kge::GroundtruthSet gts;
    kge::DetectionSet dets;
    for (int i = 0; i < 25; ++i) {
      double x = pos(rng), y = pos(rng);
      gts.push_back({i % 2, {x, y, x + 10, y + 10}, cls(rng)});
      for (int k = 0; k < 2; ++k)
        dets.push_back({i % 2, {x + jitter(rng), y, x + 10 + jitter(rng), y + 10}, pred(rng), unit(rng)});
    }
    auto e = kge::confusion_matrix(dets, gts, 4);
    CHECK(e.total() == static_cast<std::int64_t>(gts.size()));
    for (auto v : e.counts) CHECK(v >= 0);
  }
}

TEST_CASE("confusion CSV round-trip") {
  auto e = from_rows({{5, 1, 0, 2}, {0, 3, 4, 0}, {1, 1, 1, 9}});
  std::ostringstream out;
  kge::write_confusion_csv(out, e, {"a", "b", "c"});
  CHECK(out.str().rfind("class,a,b,c,background\n", 0) == 0);
  std::istringstream in(out.str());
  auto back = kge::read_confusion_csv(in);
  CHECK(back.classes == 3);
  CHECK(back.counts == e.counts);
}

TEST_CASE("js_distance") {
  std::vector<double> p = {1, 2, 3}, q = {3, 0, 1}, r = {0, 0, 5}, s = {2, 4, 6};
  CHECK(kge::js_distance(p, s) == doctest::Approx(0.0));
  CHECK(kge::js_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == doctest::Approx(1.0));
  CHECK(kge::js_distance(p, q) == doctest::Approx(kge::js_distance(q, p)));
  CHECK(kge::js_distance(p, q) == doctest::Approx(oracle::js(p, q)).epsilon(1e-12));
  CHECK(kge::js_distance(q, r) == doctest::Approx(oracle::js(q, r)).epsilon(1e-12));
  CHECK_THROWS_AS(kge::js_distance(p, std::vector<double>{0, 0, 0}), kge::ConfigError);
  CHECK_THROWS_AS(kge::js_distance(p, std::vector<double>{1, 1}), kge::ConfigError);
}

TEST_CASE("property: JS distance is a bounded symmetric metric") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> n(2, 8);
  for (int i = 0; i < 1000; ++i) {
    const auto len = static_cast<std::size_t>(n(rng));
    auto draw = [&] {
      std::vector<double> v(len);
      for (auto& x : v) x = u(rng) < 0.3 ? 0.0 : u(rng);
      v[static_cast<std::size_t>(i) % len] += 0.1;
      return v;
    };
    auto a = draw(), b = draw(), c = draw();
    const double ab = kge::js_distance(a, b), ba = kge::js_distance(b, a);
    REQUIRE(ab == ba);
    REQUIRE(ab >= 0.0);
    REQUIRE(ab <= 1.0);
    REQUIRE(kge::js_distance(a, c) <= ab + kge::js_distance(b, c) + 1e-12);
  }
}

TEST_CASE("error_distribution_comparison") {
  auto a = from_rows({{5, 2, 1, 0}, {1, 6, 3, 2}, {0, 0, 9, 1}});
  auto same = kge::error_distribution_comparison(a, a, {});
  for (const auto& v : same.per_class)
    if (v) CHECK(*v == doctest::Approx(0.0));
  CHECK(same.skipped == std::vector<int>{3});

  auto b = a;
  b.at(1, 0) = 4;
  auto one_row = kge::error_distribution_comparison(a, b, {});
  int nonzero = 0;
  for (const auto& v : one_row.per_class)
    if (v && *v > 1e-12) ++nonzero;
  CHECK(nonzero == 1);

  // Direct recomputation on a 3-class fixture.
  auto x = from_rows({{4, 2, 1, 3}, {3, 5, 1, 0}, {1, 2, 7, 0}});
  auto y = from_rows({{6, 1, 3, 0}, {1, 2, 4, 1}, {2, 2, 8, 5}});
  std::vector<double> w = {10, 9, 10};
  auto cmp = kge::error_distribution_comparison(x, y, w);
  const double js0 = oracle::js({2, 1}, {1, 3});
  const double js1 = oracle::js({3, 1}, {1, 4});
  const double js2 = oracle::js({1, 2}, {2, 2});
  CHECK(*cmp.per_class[0] == doctest::Approx(js0).epsilon(1e-12));
  CHECK(*cmp.per_class[1] == doctest::Approx(js1).epsilon(1e-12));
  CHECK(*cmp.per_class[2] == doctest::Approx(js2).epsilon(1e-12));
  CHECK(cmp.weighted_mean == doctest::Approx((10 * js0 + 9 * js1 + 10 * js2) / 29.0).epsilon(1e-12));

  CHECK_THROWS_AS(kge::error_distribution_comparison(x, ConfusionMatrix(2), w), kge::ConfigError);
}

TEST_CASE("category_confusion") {
  auto diag = from_rows({{3, 0, 0}, {0, 4, 1}});
  auto d = kge::category_confusion(diag, {0, 1});
  CHECK(d.intra == 0);
  CHECK(d.inter == 0);
  CHECK(d.missed == 1);
  CHECK(d.fraction_intra == 0.0);
  CHECK_FALSE(d.fraction_defined);

  auto within = from_rows({{3, 2, 0}, {1, 4, 0}});
  auto w = kge::category_confusion(within, {0, 0});
  CHECK(w.fraction_intra == 1.0);

  // Classes 1,2 in category 0; classes 3,4 in category 1.
  auto mixed = from_rows({{9, 3, 1, 0, 2}, {2, 8, 0, 4, 0}, {0, 1, 7, 5, 1}, {1, 0, 2, 6, 0}});
  auto m = kge::category_confusion(mixed, {0, 0, 1, 1});
  // Intra: (1,2)=3, (2,1)=2, (3,4)=5, (4,3)=2. Inter: 1 + 4 + 1 + 1.
  CHECK(m.intra == 12);
  CHECK(m.inter == 7);
  CHECK(m.missed == 3);
  CHECK(m.fraction_intra == doctest::Approx(12.0 / 19.0));
  CHECK(m.fraction_defined);

  CHECK_THROWS_AS(kge::category_confusion(mixed, {0, 0, 1}), kge::ConfigError);
}

TEST_CASE("confusion_from_labels") {
  std::vector<int> truth = {1, 1, 2, 0, 3}, pred = {1, 2, 0, 1, 3};
  auto e = kge::confusion_from_labels(truth, pred, 3);
  CHECK(e.at(0, 0) == 1);
  CHECK(e.at(0, 1) == 1);
  CHECK(e.missed(1) == 1);
  CHECK(e.at(2, 2) == 1);
  CHECK(e.total() == 4);
}
