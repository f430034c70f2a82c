#include "core/pipeline.hpp"

#include <algorithm>
#include <set>

#include "core/classify.hpp"
#include "core/errors.hpp"
#include "core/png_codec.hpp"
#include "core/scenegraph.hpp"
#include "core/util.hpp"

namespace hazgraph::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

gateway::BackendConfig backend_from_json(const json& j, const std::string& default_name,
                                         std::uint64_t seed) {
  gateway::BackendConfig cfg;
  cfg.name = default_name;
  cfg.seed = seed;
  if (!j.is_null()) {
    cfg.name = j.value("name", cfg.name);
    const std::string kind = j.value("kind", "mock");
    if (kind == "mock") {
      cfg.kind = gateway::BackendKind::mock;
    } else if (kind == "remote_http") {
      cfg.kind = gateway::BackendKind::remote_http;
    } else {
      fail(ErrorCode::config_error, "unknown backend kind: " + kind);
    }
    cfg.endpoint_url = j.value("url", "");
    cfg.model = j.value("model", cfg.name);
    cfg.timeout_s = j.value("timeout_s", 30.0);
    cfg.max_retries = j.value("max_retries", 2);
    cfg.backoff_base_s = j.value("backoff_base_s", 0.5);
    cfg.seed = j.value("seed", seed);
    cfg.embedding_dim = j.value("embedding_dim", std::size_t{32});
  } else {
    cfg.model = cfg.name;
  }
  gateway::apply_env_overrides(cfg);
  return cfg;
}

json backend_to_json(const gateway::BackendConfig& cfg) {
  return {{"name", cfg.name},
          {"kind", cfg.kind == gateway::BackendKind::mock ? "mock" : "remote_http"},
          {"url", cfg.endpoint_url},
          {"model", cfg.model},
          {"timeout_s", cfg.timeout_s},
          {"max_retries", cfg.max_retries},
          {"backoff_base_s", cfg.backoff_base_s},
          {"seed", cfg.seed},
          {"embedding_dim", cfg.embedding_dim}};
}

std::optional<ingest::Date> date_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  auto parsed = ingest::Date::parse(j[key].get<std::string>());
  if (!parsed) fail(ErrorCode::config_error, std::string("bad date in config: ") + key);
  return parsed;
}

std::vector<json> read_jsonl(const fs::path& path) {
  const std::string text = util::read_file(path);
  std::vector<json> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = util::trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded()) fail(ErrorCode::io_error, "bad JSONL line in " + path.string());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    fail(ErrorCode::config_error, "config is not a JSON object");
  }
  PipelineConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.cache_dir = j.value("cache_dir", cfg.cache_dir);
  cfg.work_dir = j.value("work_dir", cfg.work_dir);
  cfg.prompt_dir = j.value("prompt_dir", cfg.prompt_dir);
  cfg.concurrency = j.value("concurrency", cfg.concurrency);
  cfg.selected_cluster = j.value("selected_cluster", cfg.selected_cluster);
  cfg.date_start = date_from_json(j, "date_start");
  cfg.date_end = date_from_json(j, "date_end");
  if (cfg.date_start.has_value() != cfg.date_end.has_value()) {
    fail(ErrorCode::config_error, "date_start and date_end must be set together");
  }
  cfg.classify_temperature = j.value("classify_temperature", cfg.classify_temperature);
  cfg.elaboration_temperature = j.value("elaboration_temperature", cfg.elaboration_temperature);
  cfg.prompt_via_llm = j.value("prompt_via_llm", cfg.prompt_via_llm);

  if (j.contains("hdbscan")) {
    const auto& h = j["hdbscan"];
    cfg.hdbscan.min_cluster_size = h.value("min_cluster_size", cfg.hdbscan.min_cluster_size);
    cfg.hdbscan.min_samples = h.value("min_samples", cfg.hdbscan.min_samples);
    const std::string metric = h.value("metric", "euclidean");
    if (metric == "euclidean") {
      cfg.hdbscan.metric = cluster::Metric::euclidean;
    } else if (metric == "cosine_distance") {
      cfg.hdbscan.metric = cluster::Metric::cosine_distance;
    } else {
      fail(ErrorCode::config_error, "unknown hdbscan metric: " + metric);
    }
  }
  if (j.contains("weights")) {
    cfg.weights.lambda_node = j["weights"].value("lambda_node", cfg.weights.lambda_node);
    cfg.weights.gamma_edge = j["weights"].value("gamma_edge", cfg.weights.gamma_edge);
  }
  if (j.contains("entropy")) {
    cfg.entropy.bins = j["entropy"].value("bins", cfg.entropy.bins);
  }

  const json backends = j.value("backends", json::object());
  auto pick = [&](const char* key, const char* fallback_name,
                  const json& fallback) -> gateway::BackendConfig {
    if (backends.contains(key)) return backend_from_json(backends[key], fallback_name, cfg.seed);
    if (!fallback.is_null()) return backend_from_json(fallback, fallback_name, cfg.seed);
    return backend_from_json(json(nullptr), fallback_name, cfg.seed);
  };
  const json chat_json = backends.contains("chat") ? backends["chat"] : json(nullptr);
  cfg.backends.chat = pick("chat", "mock-chat", json(nullptr));
  cfg.backends.graph_chat = pick("graph", "mock-chat", chat_json);
  cfg.backends.prompt_chat = pick("prompt", "mock-chat", chat_json);
  cfg.backends.embed = pick("embed", "mock-embed", json(nullptr));
  cfg.backends.image = pick("image", "mock-image", json(nullptr));
  cfg.backends.vqa = pick("vqa", "mock-vqa", json(nullptr));
  cfg.backends.image_embed = pick("image_embed", "mock-embed", json(nullptr));
  cfg.backends.match = pick("match", "mock-match", json(nullptr));
  // CLIP-style alignment needs one joint space.
  cfg.backends.image_embed.embedding_dim = cfg.backends.embed.embedding_dim;
  return cfg;
}

json PipelineConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["cache_dir"] = cache_dir;
  j["work_dir"] = work_dir;
  j["prompt_dir"] = prompt_dir;
  j["concurrency"] = concurrency;
  j["selected_cluster"] = selected_cluster;
  j["date_start"] = date_start ? json(date_start->to_iso()) : json(nullptr);
  j["date_end"] = date_end ? json(date_end->to_iso()) : json(nullptr);
  j["classify_temperature"] = classify_temperature;
  j["elaboration_temperature"] = elaboration_temperature;
  j["prompt_via_llm"] = prompt_via_llm;
  j["hdbscan"] = {{"min_cluster_size", hdbscan.min_cluster_size},
                  {"min_samples", hdbscan.min_samples},
                  {"metric", hdbscan.metric == cluster::Metric::euclidean ? "euclidean"
                                                                          : "cosine_distance"}};
  j["weights"] = {{"lambda_node", weights.lambda_node}, {"gamma_edge", weights.gamma_edge}};
  j["entropy"] = {{"bins", entropy.bins}};
  j["backends"] = {{"chat", backend_to_json(backends.chat)},
                   {"graph", backend_to_json(backends.graph_chat)},
                   {"prompt", backend_to_json(backends.prompt_chat)},
                   {"embed", backend_to_json(backends.embed)},
                   {"image", backend_to_json(backends.image)},
                   {"vqa", backend_to_json(backends.vqa)},
                   {"image_embed", backend_to_json(backends.image_embed)},
                   {"match", backend_to_json(backends.match)}};
  return j;
}

std::string PipelineConfig::fingerprint() const {
  json j = to_json();
  j["cache_dir"] = "";
  j["concurrency"] = 0;
  j["work_dir"] = "";
  return util::sha256_hex(j.dump());
}

Pipeline::Pipeline(PipelineConfig config)
    : config_(std::move(config)), prompts_(prompts::PromptLibrary::load(config_.prompt_dir)) {
  const gateway::BackendConfig* all[] = {
      &config_.backends.chat,  &config_.backends.graph_chat, &config_.backends.prompt_chat,
      &config_.backends.embed, &config_.backends.image,      &config_.backends.vqa,
      &config_.backends.image_embed, &config_.backends.match};
  for (const auto* cfg : all) {
    cfg->validate();
    // Fail before any stage work rather than mid-pipeline.
    if (cfg->kind == gateway::BackendKind::remote_http && cfg->api_key.empty()) {
      fail(ErrorCode::auth_failure,
           "backend '" + cfg->name + "' is remote but no API key is set in the environment");
    }
  }
  gateway::GatewayOptions options;
  options.cache_dir = config_.cache_dir;
  options.max_in_flight = std::max<std::size_t>(1, config_.concurrency);
  gateway_ = std::make_unique<gateway::Gateway>(options);
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::work_path(const std::string& rel) const {
  return fs::path(config_.work_dir) / rel;
}

json Pipeline::load_manifest() const {
  if (auto text = util::read_file_if_exists(work_path("manifest.json"))) {
    json manifest = json::parse(*text, nullptr, false);
    if (!manifest.is_discarded() && manifest.is_object()) return manifest;
  }
  return json{{"stages", json::object()}};
}

void Pipeline::save_manifest(const json& manifest) const {
  util::write_file_atomic(work_path("manifest.json"), manifest.dump(2) + "\n");
}

std::string Pipeline::artifact_hash(const std::string& rel) const {
  auto content = util::read_file_if_exists(work_path(rel));
  if (!content) fail(ErrorCode::io_error, "stage did not produce expected artifact: " + rel);
  return util::sha256_hex(*content);
}

Pipeline::StageResult Pipeline::run_stage(const std::string& stage, const std::string& input_hash,
                                          const std::vector<std::string>& outputs,
                                          const std::function<json()>& body) {
  json manifest = load_manifest();
  if (manifest["stages"].contains(stage)) {
    const json& entry = manifest["stages"][stage];
    if (entry.value("input_hash", "") == input_hash && entry.contains("outputs")) {
      bool intact = true;
      for (const auto& [rel, hash] : entry["outputs"].items()) {
        auto content = util::read_file_if_exists(work_path(rel));
        if (!content || util::sha256_hex(*content) != hash.get<std::string>()) {
          intact = false;
          break;
        }
      }
      if (intact) {
        json summary = entry.value("summary", json::object());
        summary["cache_hit"] = true;
        return {summary, true};
      }
    }
  }

  json summary = body();
  json output_hashes = json::object();
  for (const auto& rel : outputs) {
    const fs::path path = work_path(rel);
    if (fs::is_directory(path)) {
      std::vector<std::string> files;
      for (const auto& entry : fs::recursive_directory_iterator(path)) {
        if (entry.is_regular_file()) {
          files.push_back(fs::relative(entry.path(), fs::path(config_.work_dir)).string());
        }
      }
      std::sort(files.begin(), files.end());
      for (const auto& file : files) output_hashes[file] = artifact_hash(file);
    } else {
      output_hashes[rel] = artifact_hash(rel);
    }
  }

  manifest = load_manifest();
  manifest["stages"][stage] = {{"input_hash", input_hash},
                               {"outputs", std::move(output_hashes)},
                               {"summary", summary}};
  save_manifest(manifest);
  summary["cache_hit"] = false;
  return {summary, false};
}

namespace {

// Input fingerprint of an upstream stage = its recorded output hash map.
std::string upstream_fingerprint(const json& manifest, const std::string& stage) {
  if (!manifest["stages"].contains(stage)) {
    fail(ErrorCode::config_error, "stage '" + stage + "' has not run yet; run it first");
  }
  return manifest["stages"][stage]["outputs"].dump();
}

}  // namespace

json Pipeline::classify(const std::string& csv_path) {
  const std::string csv_text = util::read_file(csv_path);
  const std::string input_hash =
      util::sha256_hex(config_.fingerprint() + "|classify|" + util::sha256_hex(csv_text));

  auto result = run_stage(
      "classify", input_hash,
      {"classify/batch.jsonl", "classify/summary.json", "classify/skipped.log"}, [&]() -> json {
        ingest::Corpus corpus = ingest::parse_sir_csv(csv_text, /*strict=*/false, csv_path);
        if (config_.date_start && config_.date_end) {
          corpus = ingest::filter_date_range(corpus, *config_.date_start, *config_.date_end);
        }
        classify::ClassifyOptions options;
        options.temperature = config_.classify_temperature;
        options.concurrency = config_.concurrency;
        auto batch = classify::classify_corpus(corpus, *gateway_, config_.backends.chat, prompts_,
                                               options);

        std::size_t item_failures = 0;
        for (const auto& item : batch.items) {
          if (!item.flags.empty()) ++item_failures;
        }

        util::write_file_atomic(work_path("classify/batch.jsonl"), classify::batch_to_jsonl(batch));
        util::write_file_atomic(work_path("classify/skipped.log"), ingest::skipped_report(corpus));
        json summary;
        summary["stage"] = "classify";
        summary["total"] = batch.items.size();
        summary["counts"] = {
            {"preventable_hazard", batch.count(classify::HazardCategory::preventable_hazard)},
            {"non_external_factor", batch.count(classify::HazardCategory::non_external_factor)},
            {"insufficient_information",
             batch.count(classify::HazardCategory::insufficient_information)}};
        summary["skipped_rows"] = corpus.skipped.size();
        summary["item_failures"] = item_failures;
        util::write_file_atomic(work_path("classify/summary.json"), summary.dump(2) + "\n");
        return summary;
      });
  return result.summary;
}

json Pipeline::cluster() {
  json manifest = load_manifest();
  const std::string input_hash = util::sha256_hex(config_.fingerprint() + "|cluster|" +
                                                  upstream_fingerprint(manifest, "classify"));

  auto result = run_stage(
      "cluster", input_hash,
      {"cluster/assignment.jsonl", "cluster/summaries.json", "cluster/pca2d.csv"}, [&]() -> json {
        auto batch =
            classify::batch_from_jsonl(util::read_file(work_path("classify/batch.jsonl")));
        auto rationales = classify::filter_preventable(batch);

        json summary;
        summary["stage"] = "cluster";
        summary["rationales"] = rationales.size();

        if (rationales.size() < 2) {
          // Nothing to cluster; persist an all-noise assignment.
          std::string lines;
          for (const auto& r : rationales) {
            lines += json{{"rationale_ref", {{"record_id", r.record_id}, {"text", r.text}}},
                          {"label", -1},
                          {"probability", 0.0}}
                         .dump() +
                     "\n";
          }
          util::write_file_atomic(work_path("cluster/assignment.jsonl"), lines);
          util::write_file_atomic(work_path("cluster/summaries.json"), "[]\n");
          util::write_file_atomic(work_path("cluster/pca2d.csv"), "x,y,label\n");
          summary["clusters"] = 0;
          summary["noise"] = rationales.size();
          summary["warning"] = "fewer than 2 rationales; everything is noise";
          return summary;
        }

        auto embeddings =
            cluster::embed_rationales(rationales, *gateway_, config_.backends.embed);
        auto assignment = cluster::fit(embeddings, config_.hdbscan);
        auto summaries = cluster::summarize_clusters(assignment, embeddings,
                                                     config_.hdbscan.metric);

        util::write_file_atomic(work_path("cluster/assignment.jsonl"),
                                cluster::assignment_to_jsonl(assignment, embeddings));
        util::write_file_atomic(work_path("cluster/summaries.json"),
                                cluster::summaries_to_json(summaries));

        // 2-D scatter of the embedding space for eyeballing archetypes.
        auto projected = cluster::pca_project_2d(embeddings);
        std::string scatter = "x,y,label\n";
        char buf[80];
        for (std::size_t i = 0; i < projected.size(); ++i) {
          std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d\n", projected[i][0], projected[i][1],
                        assignment.labels[i]);
          scatter += buf;
        }
        util::write_file_atomic(work_path("cluster/pca2d.csv"), scatter);

        std::size_t noise = 0;
        for (int label : assignment.labels) {
          if (label < 0) ++noise;
        }
        summary["clusters"] = assignment.num_clusters();
        summary["noise"] = noise;
        if (assignment.num_clusters() == 0) {
          summary["warning"] = "no cluster met min_cluster_size; everything is noise";
        }
        return summary;
      });
  return result.summary;
}

json Pipeline::generate(int cluster_id) {
  json manifest = load_manifest();

  int chosen = cluster_id >= 0 ? cluster_id : config_.selected_cluster;
  if (chosen < 0) {
    // Largest cluster; summaries are sorted by size descending.
    json summaries = json::parse(util::read_file(work_path("cluster/summaries.json")));
    if (!summaries.is_array() || summaries.empty()) {
      fail(ErrorCode::unknown_cluster, "no clusters available to generate from");
    }
    chosen = summaries[0]["id"].get<int>();
  }

  const std::string input_hash =
      util::sha256_hex(config_.fingerprint() + "|generate|" + std::to_string(chosen) + "|" +
                       upstream_fingerprint(manifest, "cluster"));

  auto result = run_stage(
      "generate", input_hash,
      {"generate/graphs.jsonl", "generate/prompts.jsonl", "generate/rejections.jsonl",
       "generate/images"},
      [&]() -> json {
        auto rows = read_jsonl(work_path("cluster/assignment.jsonl"));
        std::vector<classify::HazardRationale> rationales;
        for (const auto& row : rows) {
          if (row.value("label", -1) != chosen) continue;
          rationales.push_back({row["rationale_ref"]["record_id"].get<std::int64_t>(),
                                row["rationale_ref"]["text"].get<std::string>()});
        }
        if (rationales.empty()) {
          fail(ErrorCode::unknown_cluster,
               "cluster " + std::to_string(chosen) + " has no members");
        }

        struct Item {
          std::optional<scenegraph::SceneGraph> graph;
          std::string prompt;
          std::string image_rel;
          std::string prompt_digest;
          std::uint32_t width = 0, height = 0;
          std::string error;
        };
        std::vector<Item> items(rationales.size());

        gateway::parallel_for(rationales.size(), config_.concurrency, [&](std::size_t i) {
          Item& item = items[i];
          try {
            auto request = scenegraph::build_graph_request(rationales[i], prompts_);
            const std::string reply =
                gateway_->chat_complete(request, config_.backends.graph_chat);
            auto graph = scenegraph::parse_scene_graph(reply, rationales[i]);
            graph.cluster_id = chosen;

            gateway::BackendConfig prompt_cfg = config_.backends.prompt_chat;
            const gateway::BackendConfig* prompt_backend =
                config_.prompt_via_llm ? &prompt_cfg : nullptr;
            item.prompt = scenegraph::graph_to_prompt(graph, *gateway_, prompt_backend, prompts_);

            const std::uint64_t image_seed = util::stable_hash64(graph.graph_id, config_.seed);
            auto image = gateway_->generate_image(item.prompt, config_.backends.image, image_seed);
            item.image_rel = "generate/images/" + graph.graph_id + ".png";
            util::write_file_atomic(work_path(item.image_rel), image.image_bytes);
            item.prompt_digest = image.prompt_digest;
            item.width = image.width;
            item.height = image.height;
            item.graph = std::move(graph);
          } catch (const Error& e) {
            if (e.code() == ErrorCode::auth_failure) throw;
            item.error = std::string(error_code_name(e.code())) + ": " + e.what();
          }
        });

        std::string graphs_jsonl, prompts_jsonl, rejections_jsonl;
        std::size_t ok = 0, rejected = 0;
        for (std::size_t i = 0; i < items.size(); ++i) {
          const Item& item = items[i];
          if (!item.error.empty()) {
            ++rejected;
            rejections_jsonl += json{{"record_id", rationales[i].record_id},
                                     {"rationale", rationales[i].text},
                                     {"error", item.error}}
                                    .dump() +
                                "\n";
            continue;
          }
          ++ok;
          graphs_jsonl += scenegraph::graph_to_json(*item.graph) + "\n";
          prompts_jsonl += json{{"graph_id", item.graph->graph_id},
                                {"prompt", item.prompt},
                                {"image", item.image_rel},
                                {"prompt_digest", item.prompt_digest},
                                {"width", item.width},
                                {"height", item.height},
                                {"generator", config_.backends.image.name}}
                               .dump() +
                           "\n";
        }
        fs::create_directories(work_path("generate/images"));
        util::write_file_atomic(work_path("generate/graphs.jsonl"), graphs_jsonl);
        util::write_file_atomic(work_path("generate/prompts.jsonl"), prompts_jsonl);
        util::write_file_atomic(work_path("generate/rejections.jsonl"), rejections_jsonl);

        json summary;
        summary["stage"] = "generate";
        summary["cluster_id"] = chosen;
        summary["graphs"] = ok;
        summary["item_failures"] = rejected;
        return summary;
      });
  return result.summary;
}

namespace {

gateway::ImageArtifact load_image_artifact(const fs::path& path, const std::string& digest,
                                           const std::string& tag) {
  gateway::ImageArtifact image;
  image.image_bytes = util::read_file(path);
  const auto header = png::read_header(image.image_bytes);
  image.width = header.width;
  image.height = header.height;
  image.prompt_digest = digest;
  image.generator_tag = tag;
  return image;
}

}  // namespace

json Pipeline::score() {
  json manifest = load_manifest();
  const std::string input_hash = util::sha256_hex(config_.fingerprint() + "|score|" +
                                                  upstream_fingerprint(manifest, "generate"));

  auto result = run_stage(
      "score", input_hash, {"score/breakdowns.jsonl", "score/scores.jsonl"}, [&]() -> json {
        auto graph_rows = read_jsonl(work_path("generate/graphs.jsonl"));
        auto prompt_rows = read_jsonl(work_path("generate/prompts.jsonl"));
        if (graph_rows.size() != prompt_rows.size()) {
          fail(ErrorCode::io_error, "graphs.jsonl and prompts.jsonl are out of step");
        }

        struct Item {
          std::string breakdown_line;
          std::vector<json> score_rows;
          std::string error;
        };
        std::vector<Item> items(graph_rows.size());
        const std::string model_tag = config_.backends.image.name;

        gateway::parallel_for(graph_rows.size(), config_.concurrency, [&](std::size_t i) {
          Item& item = items[i];
          try {
            auto graph = scenegraph::graph_from_json(graph_rows[i].dump());
            const auto& meta = prompt_rows[i];
            const std::string image_rel = meta["image"].get<std::string>();
            auto image = load_image_artifact(work_path(image_rel),
                                             meta["prompt_digest"].get<std::string>(), model_tag);
            const std::string prompt = meta["prompt"].get<std::string>();

            auto assertions = scenegraph::graph_to_assertions(graph);
            auto assertion_scores =
                scoring::score_assertions(image, assertions, *gateway_, config_.backends.vqa, 1);
            auto breakdown = scoring::aggregate_graph_score(graph, assertion_scores,
                                                            config_.weights);
            const double clip = scoring::embedding_alignment_score(
                prompt, image, *gateway_, config_.backends.embed, config_.backends.image_embed);
            const double blip =
                scoring::match_head_score(prompt, image, *gateway_, config_.backends.match);

            json breakdown_row = json::parse(
                scoring::breakdown_to_json(breakdown, config_.weights, graph.graph_id));
            item.breakdown_line = breakdown_row.dump();

            auto score_row = [&](analysis::MetricKind metric, double value) {
              return json{{"prompt_ref", graph.graph_id},
                          {"image_ref", image_rel},
                          {"model_tag", model_tag},
                          {"metric", analysis::metric_name(metric)},
                          {"value", value},
                          {"condition", "matched"}};
            };
            item.score_rows.push_back(score_row(analysis::MetricKind::vqa_graph, breakdown.s_graph));
            item.score_rows.push_back(score_row(analysis::MetricKind::clip_style, clip));
            item.score_rows.push_back(score_row(analysis::MetricKind::blip_style, blip));
          } catch (const Error& e) {
            if (e.code() == ErrorCode::auth_failure) throw;
            item.error = std::string(error_code_name(e.code())) + ": " + e.what();
          }
        });

        std::string breakdowns_jsonl, scores_jsonl;
        std::size_t ok = 0, failed = 0;
        json failures = json::array();
        for (const auto& item : items) {
          if (!item.error.empty()) {
            ++failed;
            failures.push_back(item.error);
            continue;
          }
          ++ok;
          breakdowns_jsonl += item.breakdown_line + "\n";
          for (const auto& row : item.score_rows) scores_jsonl += row.dump() + "\n";
        }
        util::write_file_atomic(work_path("score/breakdowns.jsonl"), breakdowns_jsonl);
        util::write_file_atomic(work_path("score/scores.jsonl"), scores_jsonl);

        json summary;
        summary["stage"] = "score";
        summary["scored"] = ok;
        summary["item_failures"] = failed;
        if (!failures.empty()) summary["failures"] = failures;
        return summary;
      });
  return result.summary;
}

json Pipeline::analyze(bool in_domain_shuffle, const std::string& image_pool_dir) {
  json manifest = load_manifest();

  std::string pool_fingerprint = "none";
  std::vector<fs::path> pool_files;
  if (!image_pool_dir.empty()) {
    if (!fs::is_directory(image_pool_dir)) {
      fail(ErrorCode::pool_empty, "image pool is not a directory: " + image_pool_dir);
    }
    for (const auto& entry : fs::directory_iterator(image_pool_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        pool_files.push_back(entry.path());
      }
    }
    std::sort(pool_files.begin(), pool_files.end());
    if (pool_files.empty()) fail(ErrorCode::pool_empty, "no .png files in " + image_pool_dir);
    std::string names;
    for (const auto& path : pool_files) {
      names += path.filename().string() + "|" + util::sha256_hex(util::read_file(path)) + "|";
    }
    pool_fingerprint = util::sha256_hex(names);
  }

  const std::string input_hash = util::sha256_hex(
      config_.fingerprint() + "|analyze|" + (in_domain_shuffle ? "in" : "noin") + "|" +
      pool_fingerprint + "|" + upstream_fingerprint(manifest, "score") + "|" +
      upstream_fingerprint(manifest, "generate"));

  auto result = run_stage(
      "analyze", input_hash,
      {"report/comparison.json", "report/entropy.json", "report/run_summary.json",
       "report/config_snapshot.json", "report/dist"},
      [&]() -> json {
        // Matched scores from the score stage.
        std::vector<analysis::ScoredPair> pairs;
        for (const auto& row : read_jsonl(work_path("score/scores.jsonl"))) {
          analysis::ScoredPair pair;
          pair.prompt_ref = row["prompt_ref"].get<std::string>();
          pair.image_ref = row["image_ref"].get<std::string>();
          pair.model_tag = row["model_tag"].get<std::string>();
          pair.value = row["value"].get<double>();
          auto metric = analysis::metric_from_name(row["metric"].get<std::string>());
          auto condition = analysis::condition_from_name(row["condition"].get<std::string>());
          if (!metric || !condition) fail(ErrorCode::io_error, "bad scores.jsonl row");
          pair.metric = *metric;
          pair.condition = *condition;
          pairs.push_back(std::move(pair));
        }
        if (pairs.empty()) fail(ErrorCode::empty_input, "no matched scores to analyze");

        auto graph_rows = read_jsonl(work_path("generate/graphs.jsonl"));
        auto prompt_rows = read_jsonl(work_path("generate/prompts.jsonl"));
        std::vector<scenegraph::SceneGraph> graphs;
        for (const auto& row : graph_rows) graphs.push_back(scenegraph::graph_from_json(row.dump()));

        const std::string model_tag = config_.backends.image.name;
        std::size_t item_failures = 0;

        // Scores one (graph, image) pairing under a shuffle condition.
        auto score_pairing = [&](const scenegraph::SceneGraph& graph, const std::string& prompt,
                                 const gateway::ImageArtifact& image, const std::string& image_ref,
                                 analysis::Condition condition) {
          auto push = [&](analysis::MetricKind metric, double value) {
            analysis::ScoredPair pair;
            pair.prompt_ref = graph.graph_id;
            pair.image_ref = image_ref;
            pair.model_tag = model_tag;
            pair.metric = metric;
            pair.value = value;
            pair.condition = condition;
            pairs.push_back(std::move(pair));
          };
          auto assertions = scenegraph::graph_to_assertions(graph);
          auto scores =
              scoring::score_assertions(image, assertions, *gateway_, config_.backends.vqa, 1);
          auto breakdown = scoring::aggregate_graph_score(graph, scores, config_.weights);
          push(analysis::MetricKind::vqa_graph, breakdown.s_graph);
          push(analysis::MetricKind::clip_style,
               scoring::embedding_alignment_score(prompt, image, *gateway_,
                                                  config_.backends.embed,
                                                  config_.backends.image_embed));
          push(analysis::MetricKind::blip_style,
               scoring::match_head_score(prompt, image, *gateway_, config_.backends.match));
        };

        json negative_control = json::object();

        if (in_domain_shuffle && graphs.size() >= 2) {
          std::vector<std::pair<std::string, std::string>> matched_refs;
          for (std::size_t i = 0; i < graphs.size(); ++i) {
            matched_refs.push_back(
                {graphs[i].graph_id, prompt_rows[i]["image"].get<std::string>()});
          }
          auto shuffled = analysis::negative_control_shuffle(
              matched_refs, analysis::ShuffleMode::in_domain, config_.seed);
          std::map<std::string, std::size_t> index_by_image;
          for (std::size_t i = 0; i < prompt_rows.size(); ++i) {
            index_by_image[prompt_rows[i]["image"].get<std::string>()] = i;
          }
          for (std::size_t i = 0; i < shuffled.size(); ++i) {
            const std::size_t j = index_by_image.at(shuffled[i].second);
            try {
              auto image = load_image_artifact(work_path(shuffled[i].second),
                                               prompt_rows[j]["prompt_digest"].get<std::string>(),
                                               model_tag);
              score_pairing(graphs[i], prompt_rows[i]["prompt"].get<std::string>(), image,
                            shuffled[i].second, analysis::Condition::shuffled_in_domain);
            } catch (const Error& e) {
              if (e.code() == ErrorCode::auth_failure) throw;
              ++item_failures;
            }
          }
        }

        if (!pool_files.empty()) {
          std::vector<std::string> pool_refs;
          for (const auto& path : pool_files) pool_refs.push_back(path.string());
          std::vector<std::pair<std::string, std::string>> matched_refs;
          for (std::size_t i = 0; i < graphs.size(); ++i) {
            matched_refs.push_back(
                {graphs[i].graph_id, prompt_rows[i]["image"].get<std::string>()});
          }
          auto shuffled = analysis::negative_control_shuffle(
              matched_refs, analysis::ShuffleMode::out_of_domain, config_.seed, pool_refs);
          for (std::size_t i = 0; i < shuffled.size(); ++i) {
            try {
              const std::string bytes_digest =
                  util::sha256_hex(util::read_file(shuffled[i].second));
              auto image = load_image_artifact(shuffled[i].second, bytes_digest, "pool");
              score_pairing(graphs[i], prompt_rows[i]["prompt"].get<std::string>(), image,
                            shuffled[i].second, analysis::Condition::shuffled_out_of_domain);
            } catch (const Error& e) {
              if (e.code() == ErrorCode::auth_failure) throw;
              ++item_failures;
            }
          }
        }

        // Negative-control deltas on the VQA graph metric.
        auto mean_of = [&](analysis::Condition condition) -> std::optional<double> {
          double total = 0;
          std::size_t count = 0;
          for (const auto& pair : pairs) {
            if (pair.metric == analysis::MetricKind::vqa_graph && pair.condition == condition) {
              total += pair.value;
              ++count;
            }
          }
          if (count == 0) return std::nullopt;
          return total / static_cast<double>(count);
        };
        if (auto matched = mean_of(analysis::Condition::matched)) {
          negative_control["matched_mean_vqa"] = *matched;
        }
        if (auto in_domain = mean_of(analysis::Condition::shuffled_in_domain)) {
          negative_control["shuffled_in_domain_mean_vqa"] = *in_domain;
          negative_control["in_domain_delta"] =
              negative_control["matched_mean_vqa"].get<double>() - *in_domain;
        }
        if (auto out_domain = mean_of(analysis::Condition::shuffled_out_of_domain)) {
          negative_control["shuffled_out_of_domain_mean_vqa"] = *out_domain;
        }

        // Table outputs: comparison over matched pairs, entropy over all.
        std::vector<analysis::ScoredPair> matched_only;
        for (const auto& pair : pairs) {
          if (pair.condition == analysis::Condition::matched) matched_only.push_back(pair);
        }
        auto comparison = analysis::summarize_scores(matched_only);
        auto entropy = analysis::entropy_table(pairs, config_.entropy);

        util::write_file_atomic(work_path("report/comparison.json"),
                                analysis::comparison_to_json(comparison));
        util::write_file_atomic(work_path("report/entropy.json"),
                                analysis::entropy_to_json(entropy));
        fs::create_directories(work_path("report/dist"));
        analysis::export_distributions(pairs, config_.entropy, work_path("report/dist"));

        // Local directories are run-location metadata, not experiment
        // parameters; dropping them keeps equal-seed bundles byte-identical.
        json snapshot = config_.to_json();
        snapshot.erase("work_dir");
        snapshot.erase("cache_dir");
        snapshot.erase("prompt_dir");
        util::write_file_atomic(work_path("report/config_snapshot.json"),
                                snapshot.dump(2) + "\n");

        json summary;
        summary["stage"] = "analyze";
        summary["pairs"] = pairs.size();
        summary["negative_control"] = negative_control;
        summary["item_failures"] = item_failures;
        util::write_file_atomic(work_path("report/run_summary.json"), summary.dump(2) + "\n");
        return summary;
      });
  return result.summary;
}

json Pipeline::run_all(const std::string& csv_path, bool in_domain_shuffle,
                       const std::string& image_pool_dir) {
  json report;
  report["classify"] = classify(csv_path);
  report["cluster"] = cluster();
  report["generate"] = generate(-1);
  report["score"] = score();
  report["analyze"] = analyze(in_domain_shuffle, image_pool_dir);

  std::size_t item_failures = 0;
  for (const auto& [stage, summary] : report.items()) {
    (void)stage;
    item_failures += summary.value("item_failures", std::size_t{0});
  }
  report["item_failures"] = item_failures;
  return report;
}

}  // namespace hazgraph::pipeline
