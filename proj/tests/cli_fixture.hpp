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


// Input files and a process runner for tests that drive the kgeh binary.

#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cli_fixture {

namespace fs = std::filesystem;

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

// Runs `kgeh <args>` inside `cwd`, returning the exit status. Output goes to
// log files in `cwd` so test logs stay readable. `env` holds optional
// VAR=value assignments for the child.
inline int run(const fs::path& cwd, const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd '" + cwd.string() + "' && " + env + " '" KGEH_BINARY "' " + args +
                          " >>kgeh.stdout 2>>kgeh.stderr";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

// Fresh scratch directory below the build tree.
inline fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(KGEH_SCRATCH) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Every regular file below `dir`, keyed by relative path.
inline std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

inline const char* kGraph =
    "# toy taxonomy with two related pairs\n"
    "animal\tisa\tentity\t1\n"
    "vehicle\tisa\tentity\t1\n"
    "cat\tisa\tanimal\t1\n"
    "dog\tisa\tanimal\t1\n"
    "car\tisa\tvehicle\t1\n"
    "bus\tisa\tvehicle\t1\n"
    "cat\trelatedto\tdog\t1\n"
    "car\trelatedto\tbus\t1\n";

inline const char* kGroundtruth =
    "{\"image_id\": 1, \"box\": [0, 0, 10, 10], \"class\": 1}\n"
    "{\"image_id\": 1, \"box\": [20, 20, 30, 30], \"class\": 2}\n"
    "{\"image_id\": 2, \"box\": [5, 5, 15, 15], \"class\": 3}\n"
    "{\"image_id\": 2, \"box\": [40, 40, 50, 60], \"class\": 4}\n";

// Same boxes as kGroundtruth, plus one confusion and one stray box.
inline const char* kDetections =
    "{\"image_id\": 1, \"box\": [0, 0, 10, 10], \"class\": 1, \"score\": 0.9}\n"
    "{\"image_id\": 1, \"box\": [20, 20, 30, 30], \"class\": 1, \"score\": 0.8}\n"
    "{\"image_id\": 2, \"box\": [5, 5, 15, 15], \"class\": 3, \"score\": 0.7}\n"
    "{\"image_id\": 2, \"box\": [40, 40, 50, 60], \"class\": 4, \"score\": 0.6}\n"
    "{\"image_id\": 2, \"box\": [60, 60, 70, 70], \"class\": 2, \"score\": 0.5}\n";

inline const char* kTrainConfig =
    "{\n"
    "  \"prototypes\": \"protos/prototypes.json\",\n"
    "  \"seed\": 11,\n"
    "  \"loss\": {\"kind\": \"contrastive\", \"tau\": 0.07, \"metric\": \"cosine\"},\n"
    "  \"dataset\": {\"input_dim\": 8, \"samples_per_class\": 40},\n"
    "  \"optimizer\": {\"steps\": 200, \"batch\": 32},\n"
    "  \"heldout_per_class\": 50\n"
    "}\n";

// 9x9 map with the cat prototype at (2, 3) and the car prototype at (6, 6);
// every other pixel holds a vector far from both.
inline nlohmann::json embedding_map(const std::vector<std::vector<double>>& prototypes) {
  const std::size_t h = 9, w = 9, d = prototypes[0].size();
  std::vector<double> data;
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t k = 0; k < d; ++k) data.push_back(-(prototypes[0][k] + prototypes[2][k]));
  auto put = [&](std::size_t y, std::size_t x, const std::vector<double>& v) {
    for (std::size_t k = 0; k < d; ++k) data[(y * w + x) * d + k] = v[k];
  };
  put(2, 3, prototypes[0]);
  put(6, 6, prototypes[2]);
  return {{"height", h}, {"width", w}, {"dim", d}, {"data", data}};
}

// Writes every input file into `dir`, building prototypes with kgeh itself.
inline bool write_inputs(const fs::path& dir) {
  spit(dir / "graph.tsv", kGraph);
  spit(dir / "gts.jsonl", kGroundtruth);
  spit(dir / "dets.jsonl", kDetections);
  spit(dir / "train.json", kTrainConfig);
  spit(dir / "counts.json", "[1, 1, 1, 1]\n");
  if (run(dir, "build-prototypes --graph graph.tsv --classes cat,dog,car,bus --dim 4 --out protos") != 0)
    return false;
  const auto p = nlohmann::json::parse(slurp(dir / "protos/prototypes.json"));
  spit(dir / "map.json",
       embedding_map(p.at("matrix").get<std::vector<std::vector<double>>>()).dump());
  return true;
}

// One invocation per subcommand; callers append `--out <dir>`.
inline std::vector<std::pair<std::string, std::string>> subcommand_runs() {
  return {
      {"build-prototypes", "build-prototypes --graph graph.tsv --classes cat,dog,car,bus --dim 4"},
      {"train-head", "train-head --config train.json"},
      {"evaluate",
       "evaluate --dets dets.jsonl --gts gts.jsonl --prototypes protos/prototypes.json"
       " --categories cats/categories.json"},
      {"compare-errors",
       "compare-errors --confusion-a eval/confusion.csv --confusion-b train/confusion.csv"
       " --gt-counts counts.json"},
      {"decode-heatmap", "decode-heatmap --map map.json --prototypes protos/prototypes.json"},
      {"gradcheck", "gradcheck --instances 20"},
      {"categorize", "categorize --taxonomy graph.tsv --classes cat,dog,car,bus"},
  };
}

// Runs everything subcommand_runs() needs as inputs: categories, an
// evaluation and a training run.
inline bool write_derived_inputs(const fs::path& dir) {
  return run(dir, "categorize --taxonomy graph.tsv --classes cat,dog,car,bus --out cats") == 0 &&
         run(dir, "evaluate --dets dets.jsonl --gts gts.jsonl --prototypes protos/prototypes.json"
                  " --out eval") == 0 &&
         run(dir, "train-head --config train.json --out train") == 0;
}

}  // namespace cli_fixture
