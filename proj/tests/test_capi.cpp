#include <doctest.h>

#include <hazgraph/hazgraph.h>

#include <nlohmann/json.hpp>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kWorkedGraph = R"({
  "graph_id": "worked",
  "source_rationale": {"record_id": 1, "text": "spill on floor"},
  "cluster_id": null,
  "nodes": [
    {"id": "h", "label": "spill", "attributes": ["wet", "wide"], "is_hazard": true},
    {"id": "p", "label": "floor", "attributes": ["concrete"], "is_hazard": false}
  ],
  "edges": [{"source": "h", "target": "p", "relation": "on"}]
})";

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hazgraph_capi_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("version and error strings are always available") {
  CHECK(hg_version() != nullptr);
  CHECK(hg_last_error() != nullptr);
}

TEST_CASE("cosine similarity kernel: hand value and argument validation") {
  const double u[3] = {1, 2, 2};
  const double v[3] = {2, 1, 2};
  double out = 0;
  REQUIRE(hg_cosine_similarity(u, v, 3, &out) == HG_OK);
  CHECK(std::abs(out - 8.0 / 9.0) < 1e-12);

  CHECK(hg_cosine_similarity(nullptr, v, 3, &out) == HG_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(hg_last_error()) > 0);

  const double zero[3] = {0, 0, 0};
  CHECK(hg_cosine_similarity(zero, v, 3, &out) == HG_ERR_INVALID_ARGUMENT);
}

TEST_CASE("frechet distance kernel: scalar case and PSD validation") {
  const double mean[1] = {0};
  const double cov_a[1] = {4};
  const double cov_b[1] = {1};
  double out = 0;
  REQUIRE(hg_frechet_distance(mean, cov_a, mean, cov_b, 1, &out) == HG_OK);
  CHECK(std::abs(out - 1.0) < 1e-12);

  const double bad[1] = {-2};
  CHECK(hg_frechet_distance(mean, cov_a, mean, bad, 1, &out) == HG_ERR_NOT_PSD);
}

TEST_CASE("entropy kernel: uniform 16 bins = 4 bits, range errors surface") {
  double values[16];
  for (int i = 0; i < 16; ++i) values[i] = (i + 0.5) / 16.0;
  double bits = 0;
  REQUIRE(hg_shannon_entropy(values, 16, 0.0, 1.0, 16, &bits) == HG_OK);
  CHECK(bits == 4.0);

  values[0] = 2.0;
  CHECK(hg_shannon_entropy(values, 16, 0.0, 1.0, 16, &bits) == HG_ERR_OUT_OF_RANGE);
}

TEST_CASE("hdbscan kernel labels duplicate families and flags noise") {
  std::vector<double> points;
  for (int f = 0; f < 2; ++f) {
    for (int i = 0; i < 5; ++i) {
      points.push_back(f * 4.0);
      points.push_back(1.0);
    }
  }
  points.push_back(100.0);
  points.push_back(100.0);

  std::vector<int32_t> labels(11);
  std::vector<double> probabilities(11);
  REQUIRE(hg_hdbscan(points.data(), 11, 2, 3, 2, 0, labels.data(), probabilities.data()) == HG_OK);
  CHECK(labels[0] >= 0);
  CHECK(labels[5] >= 0);
  CHECK(labels[0] != labels[5]);
  CHECK(labels[10] == -1);
  CHECK(probabilities[10] == 0.0);

  CHECK(hg_hdbscan(points.data(), 1, 2, 3, 2, 0, labels.data(), nullptr) ==
        HG_ERR_TOO_FEW_POINTS);
}

TEST_CASE("graph assertion derivation through the C surface") {
  char* out = nullptr;
  REQUIRE(hg_graph_assertions(kWorkedGraph, &out) == HG_OK);
  REQUIRE(out != nullptr);
  json rows = json::parse(out);
  hg_string_free(out);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0]["text"] == "The spill is wet.");
  CHECK(rows[3]["kind"] == "relation");

  CHECK(hg_graph_assertions("{\"nodes\": []}", &out) == HG_ERR_PARSE);
}

TEST_CASE("graph score through the C surface reproduces the hand-computed value") {
  const char* scores = R"({"n:h:0": 0.8, "n:h:1": 0.6, "n:p:0": 1.0, "e:0": 0.5})";
  char* out = nullptr;
  REQUIRE(hg_graph_score(kWorkedGraph, scores, 2.0, 1.5, &out) == HG_OK);
  json breakdown = json::parse(out);
  hg_string_free(out);
  CHECK(std::abs(breakdown["s_graph"].get<double>() - 0.70) < 1e-12);

  REQUIRE(hg_graph_score(kWorkedGraph, scores, 1.0, 1.0, &out) == HG_OK);
  breakdown = json::parse(out);
  hg_string_free(out);
  CHECK(std::abs(breakdown["s_graph"].get<double>() - 2.2 / 3.0) < 1e-12);

  CHECK(hg_graph_score(kWorkedGraph, R"({"n:h:0": 0.8})", 2.0, 1.5, &out) == HG_ERR_NOT_FOUND);
  CHECK(hg_graph_score(kWorkedGraph, "not json", 2.0, 1.5, &out) == HG_ERR_INVALID_ARGUMENT);
  CHECK(hg_graph_score(kWorkedGraph, scores, -1.0, 1.5, &out) == HG_ERR_INVALID_ARGUMENT);
}

TEST_CASE("pipeline lifecycle through the C surface") {
  TempDir tmp;
  json config;
  config["work_dir"] = (tmp.path / "work").string();
  config["cache_dir"] = (tmp.path / "cache").string();
  config["prompt_dir"] = HG_PROMPT_DIR;
  config["hdbscan"] = {{"min_cluster_size", 3}, {"min_samples", 2}};
  const std::string config_text = config.dump();

  hg_pipeline* pipeline = nullptr;
  REQUIRE(hg_pipeline_open(config_text.c_str(), &pipeline) == HG_OK);
  REQUIRE(pipeline != nullptr);

  const std::string csv = std::string(HG_FIXTURE_DIR) + "/sir_20row.csv";
  char* summary = nullptr;
  REQUIRE(hg_pipeline_run_all(pipeline, csv.c_str(), 1, nullptr, &summary) == HG_OK);
  json report = json::parse(summary);
  hg_string_free(summary);
  CHECK(report["classify"]["total"] == 20);
  CHECK(report["item_failures"] == 0);

  // Stage-by-stage calls are cache hits now.
  REQUIRE(hg_pipeline_classify(pipeline, csv.c_str(), &summary) == HG_OK);
  json classify_summary = json::parse(summary);
  hg_string_free(summary);
  CHECK(classify_summary["cache_hit"] == true);

  hg_pipeline_close(pipeline);
}

TEST_CASE("pipeline open failures map onto C statuses") {
  hg_pipeline* pipeline = nullptr;
  CHECK(hg_pipeline_open("this is not json", &pipeline) == HG_ERR_CONFIG);
  CHECK(pipeline == nullptr);

  // Missing prompt dir.
  CHECK(hg_pipeline_open(R"({"prompt_dir": "/nonexistent/prompts"})", &pipeline) ==
        HG_ERR_CONFIG);

  TempDir tmp;
  json config;
  config["work_dir"] = (tmp.path / "work").string();
  config["prompt_dir"] = HG_PROMPT_DIR;
  REQUIRE(hg_pipeline_open(config.dump().c_str(), &pipeline) == HG_OK);
  char* summary = nullptr;
  CHECK(hg_pipeline_classify(pipeline, "/nonexistent/file.csv", &summary) == HG_ERR_IO);
  CHECK(std::strlen(hg_last_error()) > 0);
  hg_pipeline_close(pipeline);
}
