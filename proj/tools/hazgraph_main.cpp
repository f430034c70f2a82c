// Command line front end for the hazgraph pipeline. All pipeline work goes
// through the shared-library C API; this binary only handles flags, config
// assembly, and exit codes.

#include <hazgraph/hazgraph.h>

#include <CLI11.hpp>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;

struct GlobalOptions {
  std::string config_path;
  std::string work_dir;
  std::string cache_dir;
  long long seed = -1;
  std::vector<std::string> backend_overrides;  // capability=name
};

json load_config(const GlobalOptions& global) {
  json config = json::object();
  if (!global.config_path.empty()) {
    FILE* file = std::fopen(global.config_path.c_str(), "rb");
    if (!file) {
      std::fprintf(stderr, "error: cannot open config file: %s\n", global.config_path.c_str());
      std::exit(2);
    }
    std::string text;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof(buf), file)) > 0) text.append(buf, got);
    std::fclose(file);
    config = json::parse(text, nullptr, false);
    if (config.is_discarded() || !config.is_object()) {
      std::fprintf(stderr, "error: config file is not a JSON object\n");
      std::exit(2);
    }
  }
  if (global.seed >= 0) config["seed"] = global.seed;
  if (!global.cache_dir.empty()) config["cache_dir"] = global.cache_dir;
  if (!global.work_dir.empty()) config["work_dir"] = global.work_dir;
  for (const auto& entry : global.backend_overrides) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= entry.size()) {
      std::fprintf(stderr, "error: --backend expects <capability>=<name>, got '%s'\n",
                   entry.c_str());
      std::exit(2);
    }
    const std::string capability = entry.substr(0, eq);
    const std::string name = entry.substr(eq + 1);
    config["backends"][capability]["name"] = name;
    // Mock backends are addressed by a name starting with "mock".
    config["backends"][capability]["kind"] =
        name.rfind("mock", 0) == 0 ? "mock" : "remote_http";
  }
  return config;
}

hg_pipeline* open_pipeline(const GlobalOptions& global) {
  const std::string config_text = load_config(global).dump();
  hg_pipeline* pipeline = nullptr;
  if (hg_pipeline_open(config_text.c_str(), &pipeline) != HG_OK) {
    std::fprintf(stderr, "error: %s\n", hg_last_error());
    std::exit(2);
  }
  return pipeline;
}

int finish(hg_pipeline* pipeline, hg_status status, char* summary) {
  if (summary) {
    std::printf("%s\n", summary);
    hg_string_free(summary);
  }
  hg_pipeline_close(pipeline);
  if (status == HG_OK) return 0;
  if (status == HG_ERR_ITEM_FAILURES) {
    std::fprintf(stderr, "warning: some items failed; see summary\n");
    return 1;
  }
  std::fprintf(stderr, "error: %s\n", hg_last_error());
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hazard scene-graph generation and evaluation pipeline"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--config", global.config_path, "pipeline config JSON file");
  app.add_option("--seed", global.seed, "override the pipeline seed");
  app.add_option("--cache-dir", global.cache_dir, "override the response cache directory");
  app.add_option("--work-dir", global.work_dir, "override the stage artifact directory");
  app.add_option("--backend", global.backend_overrides,
                 "override a backend as <capability>=<name>; names starting with 'mock' select "
                 "the offline mock");

  std::string csv_path;
  int cluster_id = -1;
  bool no_in_domain = false;
  std::string image_pool;

  auto* cmd_classify = app.add_subcommand("classify", "parse the SIR CSV and classify narratives");
  cmd_classify->add_option("csv", csv_path, "Severe Injury Reports CSV")->required();

  auto* cmd_cluster = app.add_subcommand("cluster", "embed and cluster hazard rationales");

  auto* cmd_generate =
      app.add_subcommand("generate", "build scene graphs, prompts, and images for one cluster");
  cmd_generate->add_option("--cluster", cluster_id, "cluster id (default: config / largest)");

  auto* cmd_score = app.add_subcommand("score", "score generated images against their graphs");

  auto* cmd_analyze = app.add_subcommand("analyze", "score distributions, shuffles, entropy");
  cmd_analyze->add_flag("--no-in-domain", no_in_domain, "skip the in-domain shuffle");
  cmd_analyze->add_option("--image-pool", image_pool, "directory of PNGs for the out-of-domain shuffle");

  auto* cmd_run_all = app.add_subcommand("run-all", "run every stage end to end");
  cmd_run_all->add_option("csv", csv_path, "Severe Injury Reports CSV")->required();
  cmd_run_all->add_flag("--no-in-domain", no_in_domain, "skip the in-domain shuffle");
  cmd_run_all->add_option("--image-pool", image_pool, "directory of PNGs for the out-of-domain shuffle");

  CLI11_PARSE(app, argc, argv);

  hg_pipeline* pipeline = open_pipeline(global);
  char* summary = nullptr;
  hg_status status = HG_ERR_INTERNAL;

  if (cmd_classify->parsed()) {
    status = hg_pipeline_classify(pipeline, csv_path.c_str(), &summary);
  } else if (cmd_cluster->parsed()) {
    status = hg_pipeline_cluster(pipeline, &summary);
  } else if (cmd_generate->parsed()) {
    status = hg_pipeline_generate(pipeline, cluster_id, &summary);
  } else if (cmd_score->parsed()) {
    status = hg_pipeline_score(pipeline, &summary);
  } else if (cmd_analyze->parsed()) {
    status = hg_pipeline_analyze(pipeline, no_in_domain ? 0 : 1,
                                 image_pool.empty() ? nullptr : image_pool.c_str(), &summary);
  } else if (cmd_run_all->parsed()) {
    status = hg_pipeline_run_all(pipeline, csv_path.c_str(), no_in_domain ? 0 : 1,
                                 image_pool.empty() ? nullptr : image_pool.c_str(), &summary);
  }

  return finish(pipeline, status, summary);
}
