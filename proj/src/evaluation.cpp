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

#include "kge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <tuple>

#include "kge/core.hpp"
#include "text_util.hpp"

namespace kge {

using nlohmann::json;

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

json to_json(const APReport& r) {
  json per_class = json::object();
  for (const auto& [c, ap] : r.per_class) per_class[std::to_string(c)] = ap;
  return {{"AP", r.ap},         {"AP50", r.ap50},         {"AP75", r.ap75},
          {"AP_w", r.ap_w},     {"AP_cat", r.ap_cat},     {"AP_cat_w", r.ap_cat_w},
          {"per_class", per_class}, {"excluded_classes", r.excluded_classes}};
}

double average_precision_single(const DetectionSet& dets, const GroundtruthSet& gts, int cls,
                                double iou_threshold) {
  std::map<std::int64_t, std::vector<const Box*>> truth;
  std::size_t n_truth = 0;
  for (const auto& g : gts)
    if (g.cls == cls) {
      truth[g.image_id].push_back(&g.box);
      ++n_truth;
    }
  if (n_truth == 0) return 0.0;

  std::vector<const Detection*> ranked;
  for (const auto& d : dets)
    if (d.cls == cls) ranked.push_back(&d);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Detection* a, const Detection* b) { return a->score > b->score; });

  std::map<std::int64_t, std::vector<char>> used;
  for (const auto& [img, boxes] : truth) used[img].assign(boxes.size(), 0);

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const Detection& d = *ranked[i];
    auto it = truth.find(d.image_id);
    if (it != truth.end()) {
      double best = iou_threshold;
      std::ptrdiff_t best_j = -1;
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        if (used[d.image_id][j]) continue;
        const double o = iou(d.box, *it->second[j]);
        if (o >= best && (best_j < 0 || o > best)) {
          best = o;
          best_j = static_cast<std::ptrdiff_t>(j);
        }
      }
      if (best_j >= 0) {
        used[d.image_id][static_cast<std::size_t>(best_j)] = 1;
        ++tp;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_truth));
  }
  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto pos = std::lower_bound(recall.begin(), recall.end(), r) - recall.begin();
    if (static_cast<std::size_t>(pos) < precision.size()) sum += precision[static_cast<std::size_t>(pos)];
  }
  return sum / 101.0;
}

namespace {

struct ClassAp {
  std::map<int, double> mean_ap;
  std::map<int, std::size_t> counts;
};

ClassAp per_class_ap(const DetectionSet& dets, const GroundtruthSet& gts,
                     const std::vector<double>& thresholds) {
  ClassAp out;
  for (const auto& g : gts) ++out.counts[g.cls];
  for (const auto& [c, n] : out.counts) {
    double s = 0.0;
    for (double t : thresholds) s += average_precision_single(dets, gts, c, t);
    out.mean_ap[c] = s / static_cast<double>(thresholds.size());
  }
  return out;
}

std::pair<double, double> mean_and_weighted(const ClassAp& a) {
  if (a.mean_ap.empty()) return {0.0, 0.0};
  double mean = 0.0, weighted = 0.0, total = 0.0;
  for (const auto& [c, ap] : a.mean_ap) {
    mean += ap;
    weighted += ap * static_cast<double>(a.counts.at(c));
    total += static_cast<double>(a.counts.at(c));
  }
  return {mean / static_cast<double>(a.mean_ap.size()), weighted / total};
}

}  // namespace

APReport average_precision(const DetectionSet& dets, const GroundtruthSet& gts,
                           const std::vector<double>& iou_thresholds,
                           const std::map<int, int>* category_of) {
  if (iou_thresholds.empty()) throw ConfigError("average_precision: no IoU thresholds");
  APReport r;
  const ClassAp classes = per_class_ap(dets, gts, iou_thresholds);
  r.per_class = classes.mean_ap;
  std::tie(r.ap, r.ap_w) = mean_and_weighted(classes);

  std::set<int> excluded;
  for (const auto& d : dets)
    if (!classes.counts.contains(d.cls)) excluded.insert(d.cls);
  r.excluded_classes.assign(excluded.begin(), excluded.end());

  double ap50 = 0.0, ap75 = 0.0;
  for (const auto& [c, n] : classes.counts) {
    ap50 += average_precision_single(dets, gts, c, 0.5);
    ap75 += average_precision_single(dets, gts, c, 0.75);
  }
  if (!classes.counts.empty()) {
    r.ap50 = ap50 / static_cast<double>(classes.counts.size());
    r.ap75 = ap75 / static_cast<double>(classes.counts.size());
  }

  if (category_of != nullptr) {
    auto relabel = [category_of](int cls) {
      auto it = category_of->find(cls);
      if (it == category_of->end())
        throw ConfigError("class " + std::to_string(cls) + " has no category");
      return it->second;
    };
    DetectionSet cat_dets = dets;
    GroundtruthSet cat_gts = gts;
    for (auto& d : cat_dets)
      if (d.cls != 0) d.cls = relabel(d.cls);
    for (auto& g : cat_gts) g.cls = relabel(g.cls);
    std::tie(r.ap_cat, r.ap_cat_w) = mean_and_weighted(per_class_ap(cat_dets, cat_gts, iou_thresholds));
  }
  return r;
}

// ---------------------------------------------------------------------------

std::int64_t ConfusionMatrix::row_total(std::size_t gt) const {
  std::int64_t s = 0;
  for (std::size_t j = 0; j <= classes; ++j) s += at(gt, j);
  return s;
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ConfusionMatrix confusion_matrix(const DetectionSet& dets, const GroundtruthSet& gts,
                                 std::size_t classes, double iou_floor) {
  ConfusionMatrix e(classes);
  std::map<std::int64_t, std::vector<const Detection*>> by_image;
  for (const auto& d : dets) {
    if (d.cls < 0 || static_cast<std::size_t>(d.cls) > classes)
      throw ConfigError("detection class " + std::to_string(d.cls) + " out of range");
    by_image[d.image_id].push_back(&d);
  }
  for (const auto& g : gts) {
    if (g.cls < 1 || static_cast<std::size_t>(g.cls) > classes)
      throw ConfigError("groundtruth class " + std::to_string(g.cls) + " out of range");
    const Detection* best = nullptr;
    if (auto it = by_image.find(g.image_id); it != by_image.end())
      for (const Detection* d : it->second)
        if (iou(d->box, g.box) >= iou_floor && (best == nullptr || d->score > best->score))
          best = d;
    const auto row = static_cast<std::size_t>(g.cls - 1);
    const std::size_t col =
        (best == nullptr || best->cls == 0) ? classes : static_cast<std::size_t>(best->cls - 1);
    ++e.at(row, col);
  }
  return e;
}

ConfusionMatrix confusion_from_labels(std::span<const int> truth, std::span<const int> predicted,
                                      std::size_t classes) {
  if (truth.size() != predicted.size())
    throw ConfigError("confusion_from_labels: label vectors differ in length");
  ConfusionMatrix e(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0) continue;
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) > classes || predicted[i] < 0 ||
        static_cast<std::size_t>(predicted[i]) > classes)
      throw ConfigError("confusion_from_labels: label out of range");
    const std::size_t col = predicted[i] == 0 ? classes : static_cast<std::size_t>(predicted[i] - 1);
    ++e.at(static_cast<std::size_t>(truth[i] - 1), col);
  }
  return e;
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& e,
                         const std::vector<std::string>& class_names) {
  if (class_names.size() != e.classes) throw ConfigError("confusion CSV: one name per class");
  out << "class";
  for (const auto& n : class_names) out << ',' << n;
  out << ",background\n";
  for (std::size_t r = 0; r < e.classes; ++r) {
    out << class_names[r];
    for (std::size_t c = 0; c <= e.classes; ++c) out << ',' << e.at(r, c);
    out << '\n';
  }
}

ConfusionMatrix read_confusion_csv(std::istream& in, std::vector<std::string>* class_names) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("confusion CSV is empty");
  const auto header = detail::split(detail::trim(line), ',');
  if (header.size() < 2) throw ConfigError("confusion CSV header has no classes");
  const bool has_background = detail::trim(header.back()) == "background";
  const std::size_t classes = header.size() - 1 - (has_background ? 1 : 0);
  ConfusionMatrix e(classes);
  if (class_names != nullptr) {
    class_names->clear();
    for (std::size_t c = 1; c <= classes; ++c) class_names->emplace_back(detail::trim(header[c]));
  }
  for (std::size_t r = 0; r < classes; ++r) {
    if (!std::getline(in, line))
      throw ConfigError("confusion CSV has " + std::to_string(r) + " rows, expected " +
                        std::to_string(classes));
    const auto cells = detail::split(detail::trim(line), ',');
    if (cells.size() != header.size())
      throw ConfigError("confusion CSV row " + std::to_string(r + 1) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto v = detail::parse_double(detail::trim(cells[c]));
      if (!v || *v < 0.0 || *v != std::floor(*v))
        throw ConfigError("confusion CSV row " + std::to_string(r + 1) +
                          ": counts must be nonnegative integers");
      e.at(r, c - 1) = static_cast<std::int64_t>(*v);
    }
  }
  return e;
}

double js_distance(std::span<const double> p, std::span<const double> q) {
  require_same_size(p, q, "js_distance");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw ConfigError("js_distance: negative entry");
    sp += p[i];
    sq += q[i];
  }
  if (!(sp > 0.0) || !(sq > 0.0)) throw ConfigError("js_distance: all-zero row");
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i] / sp, qi = q[i] / sq, mi = 0.5 * (pi + qi);
    if (pi > 0.0) kl_p += pi * std::log2(pi / mi);
    if (qi > 0.0) kl_q += qi * std::log2(qi / mi);
  }
  return std::clamp(std::sqrt(std::max(0.0, 0.5 * (kl_p + kl_q))), 0.0, 1.0);
}

ErrorComparison error_distribution_comparison(const ConfusionMatrix& a, const ConfusionMatrix& b,
                                              std::span<const double> weights) {
  if (a.classes != b.classes)
    throw ConfigError("error comparison: confusion matrices have " + std::to_string(a.classes) +
                      " and " + std::to_string(b.classes) + " classes");
  const std::size_t c = a.classes;
  if (!weights.empty() && weights.size() != c)
    throw ConfigError("error comparison: need one weight per class");
  ErrorComparison out;
  out.per_class.assign(c, std::nullopt);
  double weighted = 0.0, total = 0.0;
  std::vector<double> pa, pb;
  for (std::size_t r = 0; r < c; ++r) {
    pa.clear();
    pb.clear();
    for (std::size_t j = 0; j < c; ++j) {
      if (j == r) continue;
      pa.push_back(static_cast<double>(a.at(r, j)));
      pb.push_back(static_cast<double>(b.at(r, j)));
    }
    const bool empty_a = std::all_of(pa.begin(), pa.end(), [](double v) { return v == 0.0; });
    const bool empty_b = std::all_of(pb.begin(), pb.end(), [](double v) { return v == 0.0; });
    if (empty_a || empty_b) {
      out.skipped.push_back(static_cast<int>(r + 1));
      continue;
    }
    const double js = js_distance(pa, pb);
    out.per_class[r] = js;
    const double w = weights.empty() ? static_cast<double>(a.row_total(r)) : weights[r];
    weighted += w * js;
    total += w;
  }
  out.weighted_mean = total > 0.0 ? weighted / total : 0.0;
  return out;
}

void write_comparison_csv(std::ostream& out, const ErrorComparison& c,
                          const std::vector<std::string>& class_names) {
  if (class_names.size() != c.per_class.size())
    throw ConfigError("comparison CSV: one name per class");
  out << "class,js_distance,skipped\n";
  char buf[32];
  for (std::size_t r = 0; r < c.per_class.size(); ++r) {
    out << class_names[r] << ',';
    if (c.per_class[r]) {
      std::snprintf(buf, sizeof buf, "%.17g", *c.per_class[r]);
      out << buf << ",0\n";
    } else {
      out << ",1\n";
    }
  }
  std::snprintf(buf, sizeof buf, "%.17g", c.weighted_mean);
  out << "weighted_mean," << buf << ",0\n";
}

CategoryConfusion category_confusion(const ConfusionMatrix& e,
                                     const std::vector<int>& category_of_class) {
  if (category_of_class.size() != e.classes)
    throw ConfigError("category_confusion: " + std::to_string(category_of_class.size()) +
                      " category assignments for " + std::to_string(e.classes) + " classes");
  CategoryConfusion out;
  for (std::size_t r = 0; r < e.classes; ++r) {
    out.missed += e.missed(r);
    for (std::size_t c = 0; c < e.classes; ++c) {
      if (c == r) continue;
      if (category_of_class[r] == category_of_class[c])
        out.intra += e.at(r, c);
      else
        out.inter += e.at(r, c);
    }
  }
  const auto confusions = out.intra + out.inter;
  out.fraction_defined = confusions > 0;
  out.fraction_intra =
      out.fraction_defined ? static_cast<double>(out.intra) / static_cast<double>(confusions) : 0.0;
  return out;
}

json to_json(const CategoryConfusion& c) {
  return {{"intra", c.intra},
          {"inter", c.inter},
          {"missed", c.missed},
          {"fraction_intra", c.fraction_intra},
          {"fraction_defined", c.fraction_defined}};
}

}  // namespace kge
