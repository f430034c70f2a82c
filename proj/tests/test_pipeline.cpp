#include <doctest.h>

#include <nlohmann/json.hpp>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "core/errors.hpp"
#include "core/pipeline.hpp"
#include "core/util.hpp"

using namespace hazgraph;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempTree {
  fs::path root;

  TempTree() {
    static int counter = 0;
    root = fs::temp_directory_path() /
           ("hazgraph_pipe_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
};

// Offline config over the mock backends, tuned for the 20-narrative fixture.
pipeline::PipelineConfig fixture_config(const fs::path& root, std::uint64_t seed = 42) {
  json j;
  j["seed"] = seed;
  j["work_dir"] = (root / "work").string();
  j["cache_dir"] = (root / "cache").string();
  j["prompt_dir"] = HG_PROMPT_DIR;
  j["hdbscan"] = {{"min_cluster_size", 3}, {"min_samples", 2}};
  j["entropy"] = {{"bins", 16}};
  return pipeline::PipelineConfig::from_json(j.dump());
}

std::string fixture_csv() { return std::string(HG_FIXTURE_DIR) + "/sir_20row.csv"; }

// Content hashes of every stage artifact under the work tree.
std::map<std::string, std::string> report_hashes(const fs::path& work) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(work)) {
    if (entry.is_regular_file()) {
      out[fs::relative(entry.path(), work).string()] =
          util::sha256_hex(util::read_file(entry.path()));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("run-all on the 20-narrative fixture completes offline with sane stage summaries") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root));
  auto report = pipe.run_all(fixture_csv());

  CHECK(report["classify"]["total"] == 20);
  const auto& counts = report["classify"]["counts"];
  CHECK(counts["preventable_hazard"].get<int>() >= 13);  // 13 keyword rows + up to 2 generic
  CHECK(counts["non_external_factor"].get<int>() >= 3);
  CHECK(counts["insufficient_information"].get<int>() >= 2);
  CHECK(report["classify"]["item_failures"] == 0);

  CHECK(report["cluster"]["clusters"].get<int>() >= 3);
  CHECK(report["generate"]["graphs"].get<int>() >= 3);
  CHECK(report["generate"]["item_failures"] == 0);
  CHECK(report["score"]["scored"] == report["generate"]["graphs"]);
  CHECK(report["analyze"]["pairs"].get<int>() >= 6 * report["generate"]["graphs"].get<int>());
  CHECK(report["item_failures"] == 0);

  // The matched-vs-shuffled negative control exists on the VQA metric.
  CHECK(report["analyze"]["negative_control"].contains("matched_mean_vqa"));
  CHECK(report["analyze"]["negative_control"].contains("shuffled_in_domain_mean_vqa"));

  // Stage artifacts all exist.
  const fs::path work = tree.root / "work";
  for (const char* rel :
       {"classify/batch.jsonl", "classify/summary.json", "classify/skipped.log",
        "cluster/assignment.jsonl", "cluster/summaries.json", "generate/graphs.jsonl",
        "generate/prompts.jsonl", "generate/rejections.jsonl", "score/breakdowns.jsonl",
        "score/scores.jsonl", "report/comparison.json", "report/entropy.json",
        "report/run_summary.json", "report/config_snapshot.json", "report/dist/overview.svg",
        "manifest.json"}) {
    CHECK(fs::exists(work / rel));
  }

  // Entropy table covers all three metrics for matched scores.
  json entropy = json::parse(util::read_file(work / "report/entropy.json"));
  std::set<std::string> matched_metrics;
  for (const auto& row : entropy) {
    if (row["group"].get<std::string>().rfind("shuffle:", 0) != 0) {
      matched_metrics.insert(row["metric"].get<std::string>());
    }
  }
  CHECK(matched_metrics == std::set<std::string>{"blip_style", "clip_style", "vqa_graph"});
}

TEST_CASE("two fresh runs with the same seed produce hash-identical report bundles") {
  TempTree tree_a, tree_b;
  pipeline::Pipeline pipe_a(fixture_config(tree_a.root));
  pipeline::Pipeline pipe_b(fixture_config(tree_b.root));
  pipe_a.run_all(fixture_csv());
  pipe_b.run_all(fixture_csv());
  CHECK(report_hashes(tree_a.root / "work") == report_hashes(tree_b.root / "work"));

  // A different seed changes at least something in the bundle.
  TempTree tree_c;
  pipeline::Pipeline pipe_c(fixture_config(tree_c.root, 43));
  pipe_c.run_all(fixture_csv());
  CHECK(report_hashes(tree_a.root / "work") != report_hashes(tree_c.root / "work"));
}

TEST_CASE("rerun over an existing work tree is a cache hit with zero backend calls") {
  TempTree tree;
  {
    pipeline::Pipeline pipe(fixture_config(tree.root));
    pipe.run_all(fixture_csv());
    CHECK(pipe.gw().mock().backend_calls.load() > 0);
  }
  {
    pipeline::Pipeline pipe(fixture_config(tree.root));
    auto report = pipe.run_all(fixture_csv());
    CHECK(pipe.gw().mock().backend_calls.load() == 0);
    CHECK(report["classify"]["cache_hit"] == true);
    CHECK(report["analyze"]["cache_hit"] == true);
  }
}

TEST_CASE("resumability: deleting only the report recomputes only the report") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root));
  pipe.run_all(fixture_csv());
  const auto before = report_hashes(tree.root / "work");

  fs::remove_all(tree.root / "work" / "report");
  pipeline::Pipeline resumed(fixture_config(tree.root));
  auto report = resumed.run_all(fixture_csv());
  CHECK(report["classify"]["cache_hit"] == true);
  CHECK(report["cluster"]["cache_hit"] == true);
  CHECK(report["generate"]["cache_hit"] == true);
  CHECK(report["score"]["cache_hit"] == true);
  CHECK(report["analyze"]["cache_hit"] == false);
  CHECK(report_hashes(tree.root / "work") == before);
}

TEST_CASE("a partial run resumes from the last completed stage") {
  TempTree tree;
  {
    pipeline::Pipeline pipe(fixture_config(tree.root));
    pipe.classify(fixture_csv());
    pipe.cluster();
  }
  pipeline::Pipeline resumed(fixture_config(tree.root));
  auto report = resumed.run_all(fixture_csv());
  CHECK(report["classify"]["cache_hit"] == true);
  CHECK(report["cluster"]["cache_hit"] == true);
  CHECK(report["generate"]["cache_hit"] == false);
  CHECK(report["analyze"]["cache_hit"] == false);
}

TEST_CASE("config changes invalidate downstream stages") {
  TempTree tree;
  {
    pipeline::Pipeline pipe(fixture_config(tree.root));
    pipe.run_all(fixture_csv());
  }
  auto config = fixture_config(tree.root);
  config.weights.lambda_node = 3.0;  // scoring-relevant change
  pipeline::Pipeline pipe(config);
  auto report = pipe.run_all(fixture_csv());
  CHECK(report["score"]["cache_hit"] == false);
}

TEST_CASE("stages demand their upstream artifacts") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root));
  CHECK_THROWS_AS(pipe.cluster(), Error);   // classify has not run
  CHECK_THROWS_AS(pipe.score(), Error);     // generate has not run
}

TEST_CASE("an unparseable graph from the backend is recorded and the run continues") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root));
  // The strapping cluster carries a "near bay two" member; its graph request
  // gets a junk reply while every other item proceeds normally.
  pipe.gw().mock().script_chat("plastic strapping coiled beside packing bay near bay two",
                               "sorry, no graph { today");
  auto report = pipe.run_all(fixture_csv());
  CHECK(report["generate"]["item_failures"] == 1);
  CHECK(report["generate"]["graphs"].get<int>() >= 2);
  CHECK(report["item_failures"].get<int>() >= 1);

  const std::string rejections =
      util::read_file(tree.root / "work" / "generate" / "rejections.jsonl");
  CHECK(rejections.find("UnparseableGraph") != std::string::npos);
  CHECK(rejections.find("near bay two") != std::string::npos);
}

TEST_CASE("cluster stage exports a 2-D scatter aligned with the assignment") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root));
  pipe.classify(fixture_csv());
  pipe.cluster();
  const std::string scatter = util::read_file(tree.root / "work" / "cluster" / "pca2d.csv");
  const std::string assignment =
      util::read_file(tree.root / "work" / "cluster" / "assignment.jsonl");
  const auto rows = std::count(scatter.begin(), scatter.end(), '\n');
  const auto points = std::count(assignment.begin(), assignment.end(), '\n');
  CHECK(rows == points + 1);  // header plus one row per embedded rationale
}

TEST_CASE("generate rejects an unknown cluster id") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root));
  pipe.classify(fixture_csv());
  pipe.cluster();
  try {
    pipe.generate(99);
    FAIL("expected UnknownCluster");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_cluster);
  }
}

TEST_CASE("empty CSV yields empty batch artifacts and a warning downstream") {
  TempTree tree;
  const fs::path csv = tree.root / "empty.csv";
  util::write_file_atomic(csv,
                          "ID,EventDate,Employer,Hospitalized,Amputation,Final Narrative,"
                          "NatureTitle,Part of Body Title,EventTitle,SourceTitle,"
                          "Secondary Source Title\n");
  pipeline::Pipeline pipe(fixture_config(tree.root));
  auto summary = pipe.classify(csv.string());
  CHECK(summary["total"] == 0);
  auto clusters = pipe.cluster();
  CHECK(clusters["clusters"] == 0);
  CHECK(clusters.contains("warning"));
}

TEST_CASE("out-of-domain pool shuffling scores against pool images") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root));
  pipe.classify(fixture_csv());
  pipe.cluster();
  pipe.generate(-1);
  pipe.score();

  // A small pool of deterministic PNGs.
  const fs::path pool = tree.root / "pool";
  fs::create_directories(pool);
  gateway::BackendConfig img;
  img.kind = gateway::BackendKind::mock;
  for (int i = 0; i < 3; ++i) {
    auto image = pipe.gw().generate_image("pool image " + std::to_string(i), img, 1000 + i);
    util::write_file_atomic(pool / ("flickr_" + std::to_string(i) + ".png"), image.image_bytes);
  }

  auto summary = pipe.analyze(true, pool.string());
  CHECK(summary["negative_control"].contains("shuffled_out_of_domain_mean_vqa"));
  const std::string entropy = util::read_file(tree.root / "work" / "report" / "entropy.json");
  CHECK(entropy.find("shuffle:out_of_domain") != std::string::npos);
  CHECK(entropy.find("shuffle:in_domain") != std::string::npos);
  CHECK(fs::exists(tree.root / "work" / "report" / "dist" /
                   "shuffled_out_of_domain_vqa_graph.csv"));

  // An empty pool directory is an error.
  const fs::path empty_pool = tree.root / "empty_pool";
  fs::create_directories(empty_pool);
  try {
    pipe.analyze(true, empty_pool.string());
    FAIL("expected PoolEmpty");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::pool_empty);
  }
}

TEST_CASE("analyze without the in-domain shuffle reports matched scores only") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root));
  pipe.classify(fixture_csv());
  pipe.cluster();
  pipe.generate(-1);
  pipe.score();
  auto summary = pipe.analyze(false, "");
  CHECK(summary["negative_control"].contains("matched_mean_vqa"));
  CHECK_FALSE(summary["negative_control"].contains("shuffled_in_domain_mean_vqa"));
}

TEST_CASE("remote backend without a key fails before any stage work") {
  TempTree tree;
  json j;
  j["work_dir"] = (tree.root / "work").string();
  j["prompt_dir"] = HG_PROMPT_DIR;
  j["backends"] = {{"chat", {{"kind", "remote_http"}, {"name", "nokey"},
                             {"url", "http://127.0.0.1:9/v1/chat"}}}};
  try {
    pipeline::Pipeline pipe(pipeline::PipelineConfig::from_json(j.dump()));
    FAIL("expected AuthFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::auth_failure);
  }
}

TEST_CASE("date window filtering applies before classification") {
  TempTree tree;
  auto config = fixture_config(tree.root);
  config.date_start = ingest::Date{2016, 1, 1};
  config.date_end = ingest::Date{2016, 12, 31};
  pipeline::Pipeline pipe(config);
  auto summary = pipe.classify(fixture_csv());
  CHECK(summary["total"] == 4);  // fixture rows dated 2016
}

TEST_CASE("config snapshot holds the effective configuration, without secrets") {
  TempTree tree;
  pipeline::Pipeline pipe(fixture_config(tree.root, 77));
  pipe.run_all(fixture_csv());
  json snapshot =
      json::parse(util::read_file(tree.root / "work" / "report" / "config_snapshot.json"));
  CHECK(snapshot["seed"] == 77);
  CHECK(snapshot["hdbscan"]["min_cluster_size"] == 3);
  CHECK(snapshot["backends"]["chat"]["kind"] == "mock");
  CHECK(snapshot.dump().find("api_key") == std::string::npos);
}
