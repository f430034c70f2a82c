#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "core/analysis.hpp"
#include "core/cluster.hpp"
#include "core/gateway.hpp"
#include "core/ingest.hpp"
#include "core/prompts.hpp"
#include "core/scoring.hpp"

namespace hazgraph::pipeline {

struct StageBackends {
  gateway::BackendConfig chat;         // classification
  gateway::BackendConfig graph_chat;   // scene-graph extraction
  gateway::BackendConfig prompt_chat;  // scene elaboration
  gateway::BackendConfig embed;        // text embeddings (clustering + clip text side)
  gateway::BackendConfig image;        // text-to-image
  gateway::BackendConfig vqa;          // assertion verification
  gateway::BackendConfig image_embed;  // clip image side
  gateway::BackendConfig match;        // blip-style match head
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::string cache_dir = "cache";
  std::string work_dir = "work";
  std::string prompt_dir = "data/prompts";
  std::size_t concurrency = 4;
  int selected_cluster = -1;  // -1 = largest cluster
  std::optional<ingest::Date> date_start;
  std::optional<ingest::Date> date_end;
  double classify_temperature = 0.0;
  double elaboration_temperature = 0.7;
  bool prompt_via_llm = true;  // false = deterministic template narration
  StageBackends backends;
  cluster::HdbscanParams hdbscan;
  scoring::Weights weights;
  analysis::EntropyBinning entropy;

  // Missing keys keep their defaults; backend api keys come only from env.
  static PipelineConfig from_json(const std::string& json_text);
  nlohmann::json to_json() const;

  // Fingerprint of everything that influences artifact content (excludes
  // cache_dir and concurrency).
  std::string fingerprint() const;
};

// Stage orchestrator. Every stage reads only persisted artifacts from the
// work directory and writes its own; a manifest of content hashes makes
// reruns skip stages whose inputs did not change.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  ~Pipeline();

  nlohmann::json classify(const std::string& csv_path);
  nlohmann::json cluster();
  nlohmann::json generate(int cluster_id);  // -1 = config / largest
  nlohmann::json score();
  nlohmann::json analyze(bool in_domain_shuffle, const std::string& image_pool_dir);
  nlohmann::json run_all(const std::string& csv_path, bool in_domain_shuffle = true,
                         const std::string& image_pool_dir = "");

  const PipelineConfig& config() const { return config_; }
  gateway::Gateway& gw() { return *gateway_; }

 private:
  struct StageResult {
    nlohmann::json summary;
    bool cache_hit = false;
  };

  std::filesystem::path work_path(const std::string& rel) const;
  nlohmann::json load_manifest() const;
  void save_manifest(const nlohmann::json& manifest) const;
  std::string artifact_hash(const std::string& rel) const;

  // Runs `body` unless the manifest already records this stage with the same
  // input hash and intact outputs. `body` returns the stage summary and must
  // write every path listed in `outputs`.
  StageResult run_stage(const std::string& stage, const std::string& input_hash,
                        const std::vector<std::string>& outputs,
                        const std::function<nlohmann::json()>& body);

  PipelineConfig config_;
  prompts::PromptLibrary prompts_;
  std::unique_ptr<gateway::Gateway> gateway_;
};

}  // namespace hazgraph::pipeline
