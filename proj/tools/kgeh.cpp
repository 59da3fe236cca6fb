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


// kgeh: command-line driver for the kgeheads library.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure,
// 4 gradient check outside tolerance. Every subcommand writes its artifacts
// into --out and nowhere else.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kge/boxes.hpp"
#include "kge/core.hpp"
#include "kge/evaluation.hpp"
#include "kge/heads.hpp"
#include "kge/knowledge_graph.hpp"
#include "kge/losses.hpp"
#include "kge/prototypes.hpp"
#include "kge/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Thread cap from KGEH_THREADS. All work is single-threaded, so the value is
// only validated and recorded.
int thread_cap() {
  const char* raw = std::getenv("KGEH_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096)
    throw kge::ConfigError(std::string("KGEH_THREADS must be a positive integer, got '") + raw +
                           "'");
  return static_cast<int>(v);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kge::ConfigError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw kge::ConfigError(path.string() + ": " + e.what());
  }
}

class OutDir {
 public:
  explicit OutDir(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw kge::ConfigError("cannot create " + dir_.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& content) const {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw kge::ConfigError("cannot write " + path.string());
  }
  void write(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }

 private:
  fs::path dir_;
};

template <class Writer>
std::string render(Writer&& w) {
  std::ostringstream s;
  w(s);
  return s.str();
}

json metadata(const std::string& command, json inputs) {
  return {{"command", command},
          {"version", kVersion},
          {"threads", thread_cap()},
          {"inputs", std::move(inputs)}};
}

// "a,b,c" or "@file" (names separated by commas, whitespace or newlines).
std::vector<std::string> parse_class_list(const std::string& spec) {
  std::string text = spec;
  if (!spec.empty() && spec[0] == '@') text = read_file(spec.substr(1));
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == ' ' || ch == '\t')
      flush();
    else
      cur += ch;
  }
  flush();
  if (out.empty()) throw kge::ConfigError("empty class list");
  return out;
}

std::map<std::string, double> read_relation_weights(const std::string& path) {
  std::map<std::string, double> w;
  if (path.empty()) return w;
  const json j = read_json(path);
  if (!j.is_object()) throw kge::ConfigError("relation weights must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw kge::ConfigError("relation weight for '" + k + "' must be a number");
    w[k] = v.get<double>();
  }
  return w;
}

std::map<std::string, std::string> read_aliases(const std::string& path) {
  std::map<std::string, std::string> a;
  if (path.empty()) return a;
  const json j = read_json(path);
  if (!j.is_object()) throw kge::ConfigError("aliases must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw kge::ConfigError("alias for '" + k + "' must be a string");
    a[k] = v.get<std::string>();
  }
  return a;
}

kge::PrototypeSet apply_background(const kge::PrototypeSet& p, const std::string& policy,
                                   std::optional<double> threshold) {
  if (policy == "implicit") {
    double thr = kge::ImplicitBackground{}.threshold;
    if (const auto* i = std::get_if<kge::ImplicitBackground>(&p.background)) thr = i->threshold;
    return p.with_implicit_background(threshold.value_or(thr));
  }
  if (threshold) throw kge::ConfigError("--threshold only applies to the implicit background");
  if (policy == "mean") return p.with_mean_background();
  if (policy == "zero") return p.with_zero_background();
  throw kge::ConfigError("unknown background policy '" + policy + "'");
}

// ---------------------------------------------------------------- build-prototypes

struct BuildArgs {
  std::string graph, table, classes, relation_weights, aliases, out;
  std::string background = "implicit";
  std::optional<double> threshold;
  std::size_t dim = 0;
  bool strict = false;
  bool random_orthogonal = false;
  std::uint64_t seed = 0;
};

int run_build(const BuildArgs& a) {
  const int sources = int(!a.graph.empty()) + int(!a.table.empty()) + int(a.random_orthogonal);
  if (sources != 1)
    throw kge::ConfigError("give exactly one of --graph, --table, --random-orthogonal");
  const auto classes = parse_class_list(a.classes);

  kge::PrototypeSet p;
  std::vector<std::string> warnings;
  json inputs = {{"classes", classes}};
  if (!a.graph.empty()) {
    if (a.dim == 0) throw kge::ConfigError("--dim is required with --graph");
    const auto g = kge::load_graph(a.graph, a.strict);
    const auto weights = read_relation_weights(a.relation_weights);
    auto built = kge::build_graph_prototypes(g, classes, a.dim, weights);
    p = std::move(built.prototypes);
    warnings = std::move(built.warnings);
    inputs["graph"] = a.graph;
    inputs["dim"] = a.dim;
    inputs["strict"] = a.strict;
    inputs["relation_weights"] = weights;
  } else if (!a.table.empty()) {
    const auto table = kge::load_embedding_table(a.table);
    if (a.dim != 0 && a.dim != table.dim())
      throw kge::ConfigError("--dim " + std::to_string(a.dim) + " does not match table dimension " +
                             std::to_string(table.dim()));
    const auto aliases = read_aliases(a.aliases);
    p = kge::select_prototypes(table, classes, aliases);
    inputs["table"] = a.table;
    inputs["aliases"] = aliases;
  } else {
    if (a.dim == 0) throw kge::ConfigError("--dim is required with --random-orthogonal");
    p = kge::random_orthogonal_prototypes(classes.size(), a.dim, a.seed);
    p.classes = classes;
    inputs["random_orthogonal"] = true;
    inputs["dim"] = a.dim;
    inputs["seed"] = a.seed;
  }
  p = apply_background(p, a.background, a.threshold);
  p.validate();
  inputs["background"] = a.background;
  if (a.threshold) inputs["threshold"] = *a.threshold;

  const OutDir out(a.out);
  out.write("prototypes.json", kge::to_json(p));
  for (const auto& [file, metric] : {std::pair{"distances_cosine.csv", kge::Metric::cosine()},
                                     std::pair{"distances_manhattan.csv", kge::Metric::manhattan()}}) {
    const auto d = kge::pairwise_distance_matrix(p, metric);
    out.write(file, render([&](std::ostream& s) { kge::write_distance_csv(s, p.classes, d); }));
  }
  json meta = metadata("build-prototypes", inputs);
  meta["warnings"] = warnings;
  meta["seed"] = a.seed;
  out.write("metadata.json", meta);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

// ---------------------------------------------------------------- train-head

struct TrainArgs {
  std::string config, prototypes, loss, metric, out;
  std::optional<double> tau, lr, momentum;
  std::optional<int> steps, batch;
  std::optional<std::uint64_t> seed;
};

// Precedence: built-in defaults < config file < command-line flags.
json resolve_train_config(const TrainArgs& a, fs::path& prototypes_path) {
  json c = json::object();
  if (!a.config.empty()) {
    c = read_json(a.config);
    if (!c.is_object()) throw kge::ConfigError("config must be a JSON object");
  }
  for (const char* section : {"loss", "dataset", "optimizer", "head"})
    if (!c.contains(section)) c[section] = json::object();

  if (!a.prototypes.empty()) {
    prototypes_path = a.prototypes;
  } else if (c.contains("prototypes")) {
    // Relative paths in a config file are relative to the file itself.
    prototypes_path = c["prototypes"].get<std::string>();
    if (prototypes_path.is_relative() && !a.config.empty())
      prototypes_path = fs::path(a.config).parent_path() / prototypes_path;
  } else {
    throw kge::ConfigError("no prototypes: set \"prototypes\" in the config or pass --prototypes");
  }
  c["prototypes"] = prototypes_path.string();

  json& loss = c["loss"];
  if (!a.loss.empty() && loss.value("kind", std::string("contrastive")) != a.loss) {
    json fresh = {{"kind", a.loss}};
    if (loss.contains("metric")) fresh["metric"] = loss["metric"];
    loss = fresh;
  }
  if (!a.metric.empty()) loss["metric"] = a.metric;
  if (a.tau) {
    if (loss.value("kind", std::string("contrastive")) != "contrastive")
      throw kge::ConfigError("--tau only applies to the contrastive loss");
    loss["tau"] = *a.tau;
  }
  json& opt = c["optimizer"];
  if (a.lr) opt["learning_rate"] = *a.lr;
  if (a.steps) opt["steps"] = *a.steps;
  if (a.batch) opt["batch"] = *a.batch;
  if (a.momentum) opt["momentum"] = *a.momentum;
  if (a.seed) c["seed"] = *a.seed;
  if (!c.contains("seed") || !c["seed"].is_number_unsigned())
    throw kge::ConfigError("a non-negative integer seed is required (config \"seed\" or --seed)");
  return c;
}

int run_train(const TrainArgs& a) {
  fs::path prototypes_path;
  json c = resolve_train_config(a, prototypes_path);

  // All randomness derives from the single recorded seed.
  const auto seed = c["seed"].get<std::uint64_t>();
  std::mt19937_64 seeds(seed);
  const std::uint64_t dataset_seed = seeds();
  const std::uint64_t head_seed = seeds();
  const std::uint64_t optimizer_seed = seeds();
  const std::uint64_t heldout_seed = seeds();

  kge::PrototypeSet p = kge::load_prototypes(prototypes_path);
  if (c.contains("background")) {
    const json& bg = c["background"];
    std::optional<double> thr;
    if (bg.contains("threshold")) thr = bg["threshold"].get<double>();
    p = apply_background(p, bg.value("policy", std::string("implicit")), thr);
  }
  const kge::LossConfig loss = kge::loss_config_from_json(c["loss"]);
  kge::DatasetSpec ds = kge::dataset_spec_from_json(c["dataset"]);
  ds.seed = dataset_seed;
  kge::OptimizerSpec opt = kge::optimizer_spec_from_json(c["optimizer"]);
  opt.seed = optimizer_seed;
  const double init_scale = c["head"].value("init_scale", 0.1);
  const int heldout_per_class = c.value("heldout_per_class", 0);
  if (heldout_per_class < 0) throw kge::ConfigError("heldout_per_class must be >= 0");

  const auto data = kge::generate_dataset(ds, p);
  auto head = kge::make_head(ds.input_dim, p.dim(), init_scale, head_seed);
  kge::TrainReport report = kge::train(head, data, loss, p, opt);
  std::cerr << "train-head: " << opt.steps << " steps in " << report.wall_clock_seconds << " s\n";

  auto confusion_of = [&](const kge::SyntheticDataset& d, const std::vector<int>& predicted) {
    std::vector<int> truth, pred;
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      if (d.samples[i].label == 0) continue;
      truth.push_back(d.samples[i].label);
      pred.push_back(predicted[i]);
    }
    return kge::confusion_from_labels(truth, pred, p.size());
  };

  const OutDir out(a.out);
  json report_json = kge::to_json(report);
  out.write("head.json", kge::to_json(head));
  out.write("confusion.csv", render([&](std::ostream& s) {
              kge::write_confusion_csv(s, confusion_of(data, report.predictions), p.classes);
            }));
  if (heldout_per_class > 0) {
    const auto heldout = kge::draw_heldout(data, static_cast<std::size_t>(heldout_per_class),
                                           heldout_seed);
    const auto predicted = kge::predict(head, heldout, loss, p);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
      correct += predicted[i] == heldout.samples[i].label;
    report_json["heldout_accuracy"] =
        predicted.empty() ? 0.0 : double(correct) / double(predicted.size());
    out.write("confusion_heldout.csv", render([&](std::ostream& s) {
                kge::write_confusion_csv(s, confusion_of(heldout, predicted), p.classes);
              }));
  }
  out.write("train_report.json", report_json);
  if (std::holds_alternative<kge::CrossEntropyLoss>(loss.kind))
    out.write("learned_prototypes.json", kge::to_json(p));

  json resolved = c;
  resolved["loss"] = kge::to_json(loss);
  resolved["dataset"] = kge::to_json(ds);
  resolved["optimizer"] = kge::to_json(opt);
  resolved["head"] = {{"init_scale", init_scale}};
  json meta = metadata("train-head", resolved);
  meta["seed"] = seed;
  meta["derived_seeds"] = {{"dataset", dataset_seed},
                           {"head", head_seed},
                           {"optimizer", optimizer_seed},
                           {"heldout", heldout_seed}};
  out.write("metadata.json", meta);
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string dets, gts, categories, prototypes, classes, out;
  double iou_floor = 0.8;
};

int run_evaluate(const EvaluateArgs& a) {
  // Class 0 marks background detections, which take no part in scoring.
  auto dets = kge::load_detections(a.dets);
  std::erase_if(dets, [](const kge::Detection& d) { return d.cls == 0; });
  const auto gts = kge::load_groundtruth(a.gts);

  std::vector<std::string> names;
  if (!a.prototypes.empty() && !a.classes.empty())
    throw kge::ConfigError("give at most one of --prototypes, --classes");
  if (!a.prototypes.empty()) names = kge::load_prototypes(a.prototypes).classes;
  if (!a.classes.empty()) names = parse_class_list(a.classes);
  if (names.empty()) {
    int top = 0;
    for (const auto& g : gts) top = std::max(top, g.cls);
    for (const auto& d : dets) top = std::max(top, d.cls);
    for (int c = 1; c <= top; ++c) names.push_back(std::to_string(c));
  }
  const int classes = static_cast<int>(names.size());
  for (const auto& g : gts)
    if (g.cls < 1 || g.cls > classes)
      throw kge::ConfigError("groundtruth class " + std::to_string(g.cls) + " outside 1.." +
                             std::to_string(classes));
  for (const auto& d : dets)
    if (d.cls < 1 || d.cls > classes)
      throw kge::ConfigError("detection class " + std::to_string(d.cls) + " outside 1.." +
                             std::to_string(classes));

  std::optional<kge::CategoryMap> cats;
  std::map<int, int> category_of;
  std::vector<int> category_index;
  if (!a.categories.empty()) {
    cats = kge::category_map_from_json(read_json(a.categories));
    const auto all = cats->categories();
    for (int c = 1; c <= classes; ++c) {
      const auto& cat = cats->at(names[c - 1]);
      const int idx = static_cast<int>(std::lower_bound(all.begin(), all.end(), cat) - all.begin());
      category_of[c] = idx + 1;
      category_index.push_back(idx);
    }
  }

  const auto report = kge::average_precision(dets, gts, kge::coco_iou_thresholds(),
                                             cats ? &category_of : nullptr);
  const auto confusion = kge::confusion_matrix(dets, gts, names.size(), a.iou_floor);

  const OutDir out(a.out);
  json ap = kge::to_json(report);
  if (!cats) {
    ap.erase("AP_cat");
    ap.erase("AP_cat_w");
  }
  out.write("ap_report.json", ap);
  out.write("confusion.csv",
            render([&](std::ostream& s) { kge::write_confusion_csv(s, confusion, names); }));
  if (cats)
    out.write("category_confusion.json",
              kge::to_json(kge::category_confusion(confusion, category_index)));
  out.write("metadata.json", metadata("evaluate", {{"dets", a.dets},
                                                   {"gts", a.gts},
                                                   {"categories", a.categories},
                                                   {"classes", names},
                                                   {"iou_floor", a.iou_floor}}));
  std::cout << "AP " << report.ap << "  AP50 " << report.ap50 << "  AP75 " << report.ap75 << "\n";
  return 0;
}

// ---------------------------------------------------------------- compare-errors

struct CompareArgs {
  std::string a, b, gt_counts, out;
};

kge::ConfusionMatrix load_confusion(const std::string& path, std::vector<std::string>& names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kge::ConfigError("cannot open " + path);
  return kge::read_confusion_csv(in, &names);
}

int run_compare(const CompareArgs& a) {
  std::vector<std::string> names_a, names_b;
  const auto ea = load_confusion(a.a, names_a);
  const auto eb = load_confusion(a.b, names_b);
  if (names_a != names_b) throw kge::ConfigError("confusion matrices have different classes");

  // Weights default to the groundtruth row totals of the first matrix.
  std::vector<double> weights;
  if (!a.gt_counts.empty()) {
    const json j = read_json(a.gt_counts);
    if (!j.is_array()) throw kge::ConfigError("--gt-counts must hold a JSON array");
    for (const auto& v : j) {
      if (!v.is_number()) throw kge::ConfigError("--gt-counts entries must be numbers");
      weights.push_back(v.get<double>());
    }
  } else {
    for (std::size_t r = 0; r < ea.classes; ++r) weights.push_back(double(ea.row_total(r)));
  }
  const auto cmp = kge::error_distribution_comparison(ea, eb, weights);

  const OutDir out(a.out);
  out.write("js.csv", render([&](std::ostream& s) { kge::write_comparison_csv(s, cmp, names_a); }));
  out.write("metadata.json", metadata("compare-errors", {{"confusion_a", a.a},
                                                         {"confusion_b", a.b},
                                                         {"gt_counts", a.gt_counts},
                                                         {"weights", weights}}));
  std::cout << "weighted JS distance " << cmp.weighted_mean << "\n";
  return 0;
}

// ---------------------------------------------------------------- decode-heatmap

struct DecodeArgs {
  std::string map, prototypes, out;
  std::string metric = "cosine";
  std::optional<double> threshold;
  std::int64_t image_id = 0;
};

kge::EmbeddingMap read_embedding_map(const std::string& path) {
  const json j = read_json(path);
  try {
    kge::EmbeddingMap m(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                        j.at("dim").get<std::size_t>());
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.data.size())
      throw kge::ConfigError("map data has " + std::to_string(data.size()) + " values, expected " +
                             std::to_string(m.data.size()));
    m.data = std::move(data);
    return m;
  } catch (const json::exception& e) {
    throw kge::ConfigError(path + ": " + e.what());
  }
}

int run_decode(const DecodeArgs& a) {
  const auto map = read_embedding_map(a.map);
  kge::PrototypeSet p = kge::load_prototypes(a.prototypes);
  const auto metric = kge::Metric::parse(a.metric);
  double thr = kge::ImplicitBackground{}.threshold;
  if (const auto* i = std::get_if<kge::ImplicitBackground>(&p.background)) thr = i->threshold;
  if (a.threshold) thr = *a.threshold;
  const auto dets =
      kge::decode_keypoints(map, p, metric, kge::distance_for_similarity(thr), a.image_id);

  const OutDir out(a.out);
  out.write("detections.jsonl", render([&](std::ostream& s) { kge::write_detections(s, dets); }));
  out.write("metadata.json", metadata("decode-heatmap", {{"map", a.map},
                                                         {"prototypes", a.prototypes},
                                                         {"metric", metric.name()},
                                                         {"similarity_threshold", thr},
                                                         {"image_id", a.image_id}}));
  std::cout << dets.size() << " detections\n";
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string loss = "all";
  std::string out;
  int instances = 100;
  std::uint64_t seed = 0;
  double step = 1e-5;
};

int run_gradcheck(const GradcheckArgs& a) {
  std::vector<std::string> losses = kge::kLossNames;
  if (a.loss != "all") losses = {a.loss};
  if (a.instances < 1) throw kge::ConfigError("--instances must be positive");

  bool ok = true;
  json results = json::array();
  for (const auto& name : losses) {
    const auto r = kge::gradcheck_suite(name, a.instances, a.seed, a.step);
    const bool passed = r.passed();
    ok = ok && passed;
    std::printf("%-14s instances %d  max rel err %.3e  max abs err (tiny grads) %.3e  %s\n",
                r.loss.c_str(), r.instances, r.max_relative_error, r.max_tiny_abs_error,
                passed ? "ok" : "FAILED");
    std::cerr << name << ": " << r.seconds << " s\n";
    json j = kge::to_json(r);
    j["passed"] = passed;
    results.push_back(j);
  }
  std::fflush(stdout);
  if (!a.out.empty()) {
    const OutDir out(a.out);
    out.write("gradcheck.json", results);
    out.write("metadata.json", metadata("gradcheck", {{"loss", a.loss},
                                                      {"instances", a.instances},
                                                      {"seed", a.seed},
                                                      {"step", a.step}}));
  }
  return ok ? 0 : 4;
}

// ---------------------------------------------------------------- categorize

struct CategorizeArgs {
  std::string taxonomy, classes, out;
  std::string relation = "isa";
  double threshold = 0.6;
};

int run_categorize(const CategorizeArgs& a) {
  const auto g = kge::load_graph(a.taxonomy);
  const auto t = kge::Taxonomy::from_graph(g, a.relation);
  const auto classes = parse_class_list(a.classes);
  const auto cm = kge::categorize(t, classes, a.threshold);

  const OutDir out(a.out);
  out.write("categories.json", kge::to_json(cm));
  out.write("metadata.json", metadata("categorize", {{"taxonomy", a.taxonomy},
                                                     {"relation", a.relation},
                                                     {"classes", classes},
                                                     {"threshold", a.threshold}}));
  std::cout << cm.categories().size() << " categories\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kgeh: knowledge-graph-embedded classification heads"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  BuildArgs build;
  auto* cmd_build = app.add_subcommand("build-prototypes", "Build class prototypes");
  cmd_build->add_option("--graph", build.graph, "Edge list (source, relation, target, weight)");
  cmd_build->add_option("--table", build.table, "Word-vector table (token v1 v2 ...)");
  cmd_build->add_flag("--random-orthogonal", build.random_orthogonal,
                      "Random orthonormal prototypes (control)");
  cmd_build->add_option("--classes", build.classes, "Comma-separated class names or @file")
      ->required();
  cmd_build->add_option("--dim", build.dim, "Embedding dimension");
  cmd_build->add_option("--relation-weights", build.relation_weights,
                        "JSON object relation -> weight");
  cmd_build->add_option("--aliases", build.aliases, "JSON object class -> table token");
  cmd_build->add_option("--background", build.background, "implicit, mean or zero")
      ->check(CLI::IsMember({"implicit", "mean", "zero"}));
  cmd_build->add_option("--threshold", build.threshold, "Implicit background similarity threshold");
  cmd_build->add_flag("--strict", build.strict, "Edges may only reference declared nodes");
  cmd_build->add_option("--seed", build.seed, "Seed for --random-orthogonal");
  cmd_build->add_option("--out", build.out, "Output directory")->required();

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train-head", "Train a projection head on synthetic data");
  cmd_train->add_option("--config", train.config, "JSON experiment config");
  cmd_train->add_option("--prototypes", train.prototypes, "Prototype JSON");
  cmd_train->add_option("--loss", train.loss, "Loss kind")
      ->check(CLI::IsMember(kge::kLossNames));
  cmd_train->add_option("--metric", train.metric, "cosine, manhattan, euclidean or l<k>");
  cmd_train->add_option("--tau", train.tau, "Contrastive temperature");
  cmd_train->add_option("--steps", train.steps, "Optimizer steps");
  cmd_train->add_option("--lr", train.lr, "Learning rate");
  cmd_train->add_option("--batch", train.batch, "Batch size");
  cmd_train->add_option("--momentum", train.momentum, "Momentum");
  cmd_train->add_option("--seed", train.seed, "Experiment seed");
  cmd_train->add_option("--out", train.out, "Output directory")->required();

  EvaluateArgs eval;
  auto* cmd_eval = app.add_subcommand("evaluate", "AP and confusion analysis of detections");
  cmd_eval->add_option("--dets", eval.dets, "Detections JSONL")->required();
  cmd_eval->add_option("--gts", eval.gts, "Groundtruth JSONL")->required();
  cmd_eval->add_option("--categories", eval.categories, "JSON object class name -> category");
  cmd_eval->add_option("--prototypes", eval.prototypes, "Prototype JSON (class names)");
  cmd_eval->add_option("--classes", eval.classes, "Comma-separated class names or @file");
  cmd_eval->add_option("--iou-floor", eval.iou_floor, "IoU floor of the confusion matrix");
  cmd_eval->add_option("--out", eval.out, "Output directory")->required();

  CompareArgs cmp;
  auto* cmd_cmp = app.add_subcommand("compare-errors", "Per-class JS distance of error profiles");
  cmd_cmp->add_option("--confusion-a", cmp.a, "Confusion CSV")->required();
  cmd_cmp->add_option("--confusion-b", cmp.b, "Confusion CSV")->required();
  cmd_cmp->add_option("--gt-counts", cmp.gt_counts, "JSON array of groundtruth counts per class");
  cmd_cmp->add_option("--out", cmp.out, "Output directory")->required();

  DecodeArgs dec;
  auto* cmd_dec = app.add_subcommand("decode-heatmap", "Nearest-prototype keypoint decoding");
  cmd_dec->add_option("--map", dec.map, "Embedding map JSON {height, width, dim, data}")
      ->required();
  cmd_dec->add_option("--prototypes", dec.prototypes, "Prototype JSON")->required();
  cmd_dec->add_option("--metric", dec.metric, "Distance metric");
  cmd_dec->add_option("--threshold", dec.threshold, "Similarity threshold");
  cmd_dec->add_option("--image-id", dec.image_id, "Image id of the detections");
  cmd_dec->add_option("--out", dec.out, "Output directory")->required();

  GradcheckArgs gc;
  auto* cmd_gc = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  std::vector<std::string> gc_choices = kge::kLossNames;
  gc_choices.push_back("all");
  cmd_gc->add_option("--loss", gc.loss, "Loss name or all")->check(CLI::IsMember(gc_choices));
  cmd_gc->add_option("--instances", gc.instances, "Random instances per loss");
  cmd_gc->add_option("--seed", gc.seed, "Seed");
  cmd_gc->add_option("--step", gc.step, "Central difference step");
  cmd_gc->add_option("--out", gc.out, "Output directory");

  CategorizeArgs cat;
  auto* cmd_cat = app.add_subcommand("categorize", "Group classes by WUP similarity");
  cmd_cat->add_option("--taxonomy", cat.taxonomy, "Edge list holding the isa tree")->required();
  cmd_cat->add_option("--classes", cat.classes, "Comma-separated class names or @file")->required();
  cmd_cat->add_option("--relation", cat.relation, "Relation of the tree edges");
  cmd_cat->add_option("--threshold", cat.threshold, "Minimum WUP similarity to merge");
  cmd_cat->add_option("--out", cat.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    thread_cap();
    if (*cmd_build) return run_build(build);
    if (*cmd_train) return run_train(train);
    if (*cmd_eval) return run_evaluate(eval);
    if (*cmd_cmp) return run_compare(cmp);
    if (*cmd_dec) return run_decode(dec);
    if (*cmd_gc) return run_gradcheck(gc);
    if (*cmd_cat) return run_categorize(cat);
  } catch (const kge::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
