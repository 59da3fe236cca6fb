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

#include <set>

#include "cli_fixture.hpp"
#include "kge/evaluation.hpp"
#include "kge/prototypes.hpp"

using namespace cli_fixture;
using nlohmann::json;

TEST_CASE("build-prototypes writes loadable prototypes and both distance tables") {
  const auto dir = scratch("cli_build");
  REQUIRE(write_inputs(dir));
  const auto p = kge::load_prototypes(dir / "protos/prototypes.json");
  CHECK(p.classes == std::vector<std::string>{"cat", "dog", "car", "bus"});
  CHECK(p.dim() == 4);
  CHECK(kge::to_json(p) == json::parse(slurp(dir / "protos/prototypes.json")));
  CHECK(fs::exists(dir / "protos/distances_cosine.csv"));
  CHECK(fs::exists(dir / "protos/distances_manhattan.csv"));
  CHECK(fs::exists(dir / "protos/metadata.json"));
}

TEST_CASE("configuration errors exit with 2") {
  const auto dir = scratch("cli_errors");
  REQUIRE(write_inputs(dir));
  CHECK(run(dir, "build-prototypes --graph graph.tsv --classes cat,dog --dim 8 --out x") == 2);
  CHECK(run(dir, "build-prototypes --graph graph.tsv --classes cat,unicorn --dim 2 --out x") == 2);
  CHECK(run(dir, "build-prototypes --graph missing.tsv --classes cat --dim 2 --out x") == 2);
  CHECK(run(dir, "train-head --prototypes protos/prototypes.json --out x") == 2);  // no seed
  CHECK(run(dir, "train-head --config train.json --metric l0 --out x") == 2);
  CHECK(run(dir, "gradcheck --loss nonsense") == 2);
  CHECK(run(dir, "no-such-command") == 2);
  CHECK(run(dir, "gradcheck --instances 1", "KGEH_THREADS=0") == 2);
  CHECK(run(dir, "gradcheck --instances 1", "KGEH_THREADS=two") == 2);
  CHECK_FALSE(fs::exists(dir / "x"));
}

TEST_CASE("thread cap is validated and recorded") {
  const auto dir = scratch("cli_threads");
  REQUIRE(write_inputs(dir));
  REQUIRE(run(dir, "categorize --taxonomy graph.tsv --classes cat,dog --out t", "KGEH_THREADS=3") ==
          0);
  CHECK(json::parse(slurp(dir / "t/metadata.json")).at("threads") == 3);
}

TEST_CASE("evaluate on perfect detections reports AP 1") {
  const auto dir = scratch("cli_perfect");
  REQUIRE(write_inputs(dir));
  spit(dir / "perfect.jsonl", [] {
    std::string out;
    std::istringstream in(kGroundtruth);
    for (std::string line; std::getline(in, line);) {
      auto j = json::parse(line);
      j["score"] = 0.9;
      out += j.dump() + "\n";
    }
    return out;
  }());
  REQUIRE(run(dir, "evaluate --dets perfect.jsonl --gts gts.jsonl --out ev") == 0);
  const auto report = json::parse(slurp(dir / "ev/ap_report.json"));
  CHECK(report.at("AP").get<double>() == 1.0);
  CHECK(report.at("AP50").get<double>() == 1.0);
  CHECK_FALSE(report.contains("AP_cat"));
  std::ifstream in(dir / "ev/confusion.csv");
  const auto e = kge::read_confusion_csv(in);
  for (std::size_t r = 0; r < 4; ++r) CHECK(e.at(r, r) == 1);
  CHECK(e.total() == 4);
}

TEST_CASE("evaluate with categories counts intra- and inter-category confusions") {
  const auto dir = scratch("cli_categories");
  REQUIRE(write_inputs(dir));
  REQUIRE(write_derived_inputs(dir));
  const auto cats = json::parse(slurp(dir / "cats/categories.json"));
  CHECK(cats == json{{"cat", "animal"}, {"dog", "animal"}, {"car", "vehicle"}, {"bus", "vehicle"}});
  REQUIRE(run(dir, "evaluate --dets dets.jsonl --gts gts.jsonl --prototypes protos/prototypes.json"
                   " --categories cats/categories.json --out ev") == 0);
  // The dog box is detected as cat: one confusion, inside "animal".
  const auto cc = json::parse(slurp(dir / "ev/category_confusion.json"));
  CHECK(cc.at("intra") == 1);
  CHECK(cc.at("inter") == 0);
  CHECK(cc.at("fraction_intra").get<double>() == 1.0);
}

TEST_CASE("compare-errors of identical matrices is all zeros") {
  const auto dir = scratch("cli_compare");
  REQUIRE(write_inputs(dir));
  REQUIRE(write_derived_inputs(dir));
  REQUIRE(run(dir, "compare-errors --confusion-a train/confusion.csv"
                   " --confusion-b train/confusion.csv --out js") == 0);
  std::istringstream in(slurp(dir / "js/js.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "class,js_distance,skipped");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    const std::string value = line.substr(first + 1, second - first - 1);
    CHECK((value.empty() || value == "0"));
  }
  CHECK(rows == 5);  // four classes plus the weighted mean
}

TEST_CASE("train-head outputs and flag precedence") {
  const auto dir = scratch("cli_train");
  REQUIRE(write_inputs(dir));
  REQUIRE(run(dir, "train-head --config train.json --steps 50 --seed 4 --out t") == 0);
  const auto meta = json::parse(slurp(dir / "t/metadata.json"));
  CHECK(meta.at("seed") == 4);
  CHECK(meta.at("inputs").at("optimizer").at("steps") == 50);
  CHECK(meta.at("inputs").at("optimizer").at("batch") == 32);  // from the config file
  CHECK(meta.at("derived_seeds").size() == 4);
  const auto report = json::parse(slurp(dir / "t/train_report.json"));
  CHECK(report.at("loss_trace").size() == 50);
  CHECK(report.at("predictions").size() == 160);
  CHECK(report.contains("heldout_accuracy"));
  CHECK_FALSE(report.contains("wall_clock_seconds"));
  CHECK(fs::exists(dir / "t/head.json"));
  CHECK(fs::exists(dir / "t/confusion.csv"));
  CHECK_FALSE(fs::exists(dir / "t/learned_prototypes.json"));

  REQUIRE(run(dir, "train-head --config train.json --loss cross-entropy --steps 20 --out ce") == 0);
  CHECK(fs::exists(dir / "ce/learned_prototypes.json"));
  CHECK(run(dir, "train-head --config train.json --loss hinge --tau 0.5 --out bad") == 2);
}

TEST_CASE("decode-heatmap recovers the planted peaks") {
  const auto dir = scratch("cli_decode");
  REQUIRE(write_inputs(dir));
  REQUIRE(run(dir, "decode-heatmap --map map.json --prototypes protos/prototypes.json"
                   " --threshold 0.99 --image-id 7 --out d") == 0);
  std::istringstream in(slurp(dir / "d/detections.jsonl"));
  std::set<std::tuple<int, double, double>> found;
  for (std::string line; std::getline(in, line);) {
    const auto j = json::parse(line);
    CHECK(j.at("image_id") == 7);
    const auto box = j.at("box");
    found.insert({j.at("class").get<int>(), box[0].get<double>() + 0.5,
                  box[1].get<double>() + 0.5});
  }
  CHECK(found == std::set<std::tuple<int, double, double>>{{1, 3.0, 2.0}, {3, 6.0, 6.0}});
}

TEST_CASE("gradcheck exits 0 and writes its report") {
  const auto dir = scratch("cli_gradcheck");
  REQUIRE(run(dir, "gradcheck --instances 10 --out g") == 0);
  const auto results = json::parse(slurp(dir / "g/gradcheck.json"));
  REQUIRE(results.size() == 4);
  for (const auto& r : results) {
    CHECK(r.at("passed") == true);
    CHECK(r.at("max_relative_error").get<double>() < 1e-4);
  }
  CHECK(slurp(dir / "kgeh.stdout").find("max rel err") != std::string::npos);
  // A step this large cannot meet the tolerance.
  CHECK(run(dir, "gradcheck --loss contrastive --instances 5 --step 0.5") == 4);
}

TEST_CASE("subcommands write only inside --out") {
  const auto dir = scratch("cli_confined");
  REQUIRE(write_inputs(dir));
  REQUIRE(write_derived_inputs(dir));
  std::set<std::string> before;
  for (const auto& e : fs::directory_iterator(dir)) before.insert(e.path().filename().string());
  for (const auto& [name, args] : subcommand_runs()) {
    REQUIRE(run(dir, args + " --out out_" + name) == 0);
    before.insert("out_" + name);
  }
  std::set<std::string> after;
  for (const auto& e : fs::directory_iterator(dir)) after.insert(e.path().filename().string());
  CHECK(after == before);
}
