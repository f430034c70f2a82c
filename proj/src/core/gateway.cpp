#include "core/gateway.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "core/errors.hpp"
#include "core/png_codec.hpp"
#include "core/util.hpp"

namespace hazgraph::gateway {

using json = nlohmann::json;

namespace {

constexpr std::uint32_t kMockImageWidth = 256;
constexpr std::uint32_t kMockImageHeight = 64;

std::string env_stem(const std::string& name) {
  std::string out;
  for (char c : name) {
    unsigned char u = static_cast<unsigned char>(c);
    out.push_back(std::isalnum(u) ? static_cast<char>(std::toupper(u)) : '_');
  }
  return out;
}

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    fail(ErrorCode::config_error, "endpoint url missing scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool looks_like_content_rejection(const std::string& body) {
  return util::contains_ci(body, "content_policy") || util::contains_ci(body, "content policy") ||
         util::contains_ci(body, "safety system");
}

// One POST with retry/backoff. Transient failures (connect errors, timeouts,
// 408/429/5xx) are retried up to cfg.max_retries; auth and other client
// errors surface immediately.
json http_post_json(const BackendConfig& cfg, const json& payload) {
  if (cfg.api_key.empty()) {
    fail(ErrorCode::auth_failure,
         "backend '" + cfg.name + "' is remote but HG_" + env_stem(cfg.name) + "_KEY is not set");
  }
  const SplitUrl url = split_url(cfg.endpoint_url);
  const std::string body = payload.dump();

  for (int attempt = 0;; ++attempt) {
    httplib::Client client(url.base);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers = {{"Authorization", "Bearer " + cfg.api_key}};

    auto res = client.Post(url.path, headers, body, "application/json");

    std::optional<Error> transient;
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      transient = Error(ErrorCode::timeout,
                        std::string(timed_out ? "timeout" : "connection error") + " talking to " +
                            cfg.endpoint_url + " (" + httplib::to_string(err) + ")");
    } else if (res->status == 200) {
      json parsed = json::parse(res->body, nullptr, false);
      if (parsed.is_discarded()) {
        fail(ErrorCode::malformed_response, "backend '" + cfg.name + "' returned non-JSON body");
      }
      return parsed;
    } else if (res->status == 401 || res->status == 403) {
      fail(ErrorCode::auth_failure,
           "backend '" + cfg.name + "' rejected credentials (HTTP " + std::to_string(res->status) + ")");
    } else if (res->status == 429) {
      transient = Error(ErrorCode::rate_limited, "backend '" + cfg.name + "' rate limited (HTTP 429)");
    } else if (res->status == 408) {
      transient = Error(ErrorCode::timeout, "backend '" + cfg.name + "' HTTP 408");
    } else if (res->status >= 500) {
      transient = Error(ErrorCode::backend_error,
                        "backend '" + cfg.name + "' HTTP " + std::to_string(res->status));
    } else {
      if (looks_like_content_rejection(res->body)) {
        fail(ErrorCode::content_rejected, "backend '" + cfg.name + "' rejected the request content");
      }
      fail(ErrorCode::backend_error, "backend '" + cfg.name + "' HTTP " + std::to_string(res->status) +
                                         ": " + res->body.substr(0, 200));
    }

    if (attempt >= cfg.max_retries) throw *transient;
    const double delay_s = cfg.backoff_base_s * std::pow(2.0, attempt);
    std::this_thread::sleep_for(std::chrono::duration<double>(delay_s));
  }
}

std::string chat_message_content(const json& response, const std::string& backend_name) {
  if (response.contains("choices") && response["choices"].is_array() &&
      !response["choices"].empty()) {
    const auto& choice = response["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content") &&
        choice["message"]["content"].is_string()) {
      return choice["message"]["content"].get<std::string>();
    }
    if (choice.contains("text") && choice["text"].is_string()) {
      return choice["text"].get<std::string>();
    }
  }
  fail(ErrorCode::malformed_response, "backend '" + backend_name + "' chat response has no content");
}

// --- mock backends ---

// Expands a seeded hash into a unit vector; component values in [-1, 1).
std::vector<double> hash_vector(std::string_view key, std::uint64_t seed, std::size_t dim) {
  std::vector<double> v(dim);
  std::uint64_t state = util::stable_hash64(key, seed);
  for (std::size_t i = 0; i < dim; ++i) {
    v[i] = util::hash_to_unit(util::splitmix64(state)) * 2.0 - 1.0;
  }
  return v;
}

void normalize_in_place(std::vector<double>& v) {
  double norm2 = 0;
  for (double x : v) norm2 += x * x;
  const double norm = std::sqrt(norm2);
  if (norm < 1e-12) {
    if (!v.empty()) v[0] = 1.0;
    return;
  }
  for (double& x : v) x /= norm;
}

// Word-hash bag embedding: sum of seeded per-word vectors, unit-normalized.
// Identical texts map to identical vectors; texts sharing words land close.
std::vector<double> mock_embedding(const std::string& text, std::uint64_t seed, std::size_t dim) {
  std::vector<double> acc(dim, 0.0);
  for (const auto& word : util::split_words(util::to_lower(text))) {
    auto wv = hash_vector(word, seed, dim);
    for (std::size_t i = 0; i < dim; ++i) acc[i] += wv[i];
  }
  if (util::split_words(text).empty()) acc = hash_vector(text, seed, dim);
  normalize_in_place(acc);
  return acc;
}

// The live input in every prompt template is fenced between <<< and >>>.
std::optional<std::string> extract_fenced_input(const std::string& prompt) {
  auto start = prompt.find("<<<");
  if (start == std::string::npos) return std::nullopt;
  auto end = prompt.find(">>>", start + 3);
  if (end == std::string::npos) return std::nullopt;
  return util::trim(prompt.substr(start + 3, end - start - 3));
}

struct CategoryRule {
  const char* keyword;
  const char* rationale;  // nullptr = non-external factor
};

// Family bases share no words with each other so the bag-of-words mock
// embedding keeps the archetypes separable.
constexpr CategoryRule kCategoryRules[] = {
    {"strapping", "plastic strapping coiled beside packing bay"},
    {"strap", "plastic strapping coiled beside packing bay"},
    {"shrink wrap", "plastic strapping coiled beside packing bay"},
    {"plastic", "plastic strapping coiled beside packing bay"},
    {"cord", "extension cord stretched across office hallway"},
    {"cable", "extension cord stretched across office hallway"},
    {"spill", "standing water pooled near dock entrance"},
    {"wet floor", "standing water pooled near dock entrance"},
    {"water", "standing water pooled near dock entrance"},
    {"guardrail", "unguarded floor opening beside mezzanine stairs"},
    {"floor opening", "unguarded floor opening beside mezzanine stairs"},
    {"unguarded", "unguarded floor opening beside mezzanine stairs"},
    {"ladder", "ladder braced against uneven gravel surface"},
    {"pallet", "cardboard boxes crowding pedestrian walkway"},
    {"boxes", "cardboard boxes crowding pedestrian walkway"},
    {"lifting", nullptr},
    {"strain", nullptr},
    {"repetitive", nullptr},
    {"reaching", nullptr},
};

constexpr const char* kRationaleTails[] = {
    " near bay one",
    " near bay two",
    " near bay three",
};

std::string synthesize_classification(const std::string& narrative, std::uint64_t seed) {
  const std::string lowered = util::to_lower(narrative);
  const std::uint64_t h = util::stable_hash64(narrative, seed);

  std::optional<std::string> rationale;
  bool non_external = false;
  for (const auto& rule : kCategoryRules) {
    if (lowered.find(rule.keyword) == std::string::npos) continue;
    if (rule.rationale == nullptr) {
      non_external = true;
    } else {
      rationale = std::string(rule.rationale) + kRationaleTails[h % 3];
    }
    break;
  }

  json out;
  if (rationale) {
    out["category"] = "Preventable Hazard";
    out["rationale"] = *rationale;
  } else if (non_external) {
    out["category"] = "Non-External Factor";
  } else if (util::split_words(narrative).size() < 6) {
    out["category"] = "Insufficient Information";
  } else {
    switch (h % 3) {
      case 0:
        out["category"] = "Preventable Hazard";
        out["rationale"] =
            std::string("unsecured equipment cluttering maintenance corridor") + kRationaleTails[(h >> 8) % 3];
        break;
      case 1:
        out["category"] = "Non-External Factor";
        break;
      default:
        out["category"] = "Insufficient Information";
        break;
    }
  }
  return out.dump();
}

constexpr const char* kAttributePool[] = {"loose",  "discarded", "tangled", "frayed",
                                          "coiled", "torn",      "crumpled", "scattered"};

std::string synthesize_scene_graph(const std::string& rationale, std::uint64_t seed) {
  const std::uint64_t h = util::stable_hash64(rationale, seed);
  auto words = util::split_words(util::to_lower(rationale));
  std::string hazard_label = "hazard object";
  if (words.size() >= 2) hazard_label = words[0] + " " + words[1];

  const std::string lowered = util::to_lower(rationale);
  std::string surface = "work area floor";
  if (lowered.find("walkway") != std::string::npos) surface = "walkway";
  else if (lowered.find("warehouse") != std::string::npos) surface = "warehouse floor";
  else if (lowered.find("floor") != std::string::npos) surface = "workplace floor";

  json graph;
  graph["nodes"] = json::array({
      json{{"id", "n1"},
           {"label", hazard_label},
           {"attributes", json::array({kAttributePool[h % 8], kAttributePool[(h >> 8) % 8]})},
           {"is_hazard", true}},
      json{{"id", "n2"},
           {"label", surface},
           {"attributes", json::array({"concrete"})},
           {"is_hazard", false}},
      json{{"id", "n3"},
           {"label", "stacked boxes"},
           {"attributes", json::array({"cardboard"})},
           {"is_hazard", false}},
  });
  graph["edges"] = json::array({
      json{{"source", "n1"}, {"target", "n2"}, {"relation", "on"}},
      json{{"source", "n3"}, {"target", "n1"}, {"relation", "near"}},
  });
  return graph.dump();
}

std::string synthesize_scene_paragraph(const std::string& graph_json) {
  json graph = json::parse(graph_json, nullptr, false);
  if (graph.is_discarded() || !graph.contains("nodes")) {
    return "A workplace scene with an unspecified hazard.";
  }
  std::string out = "The scene shows";
  bool first = true;
  for (const auto& node : graph["nodes"]) {
    std::string label = node.value("label", "an object");
    out += first ? " " : ", ";
    first = false;
    if (node.contains("attributes") && node["attributes"].is_array() &&
        !node["attributes"].empty()) {
      std::string attrs;
      for (const auto& a : node["attributes"]) {
        if (!attrs.empty()) attrs += " and ";
        attrs += a.get<std::string>();
      }
      out += "a " + label + " that is " + attrs;
    } else {
      out += "a " + label;
    }
  }
  out += ".";
  if (graph.contains("edges")) {
    for (const auto& edge : graph["edges"]) {
      out += " The " + edge.value("source", "") + " labeled object is " +
             edge.value("relation", "near") + " the " + edge.value("target", "") + " labeled object.";
    }
  }
  return out;
}

std::string mock_chat_response(MockControls& mock, const ChatRequest& req, std::uint64_t seed) {
  {
    std::lock_guard<std::mutex> lock(mock.mu);
    if (!mock.chat_queue.empty()) {
      std::string response = mock.chat_queue.front();
      mock.chat_queue.pop_front();
      return response;
    }
    for (const auto& [needle, response] : mock.scripted_chat) {
      if (req.user_prompt.find(needle) != std::string::npos) return response;
    }
  }
  const auto fenced = extract_fenced_input(req.user_prompt);
  // Paragraph requests carry a graph JSON payload, so test its marker first.
  if (util::contains_ci(req.user_prompt, "one short paragraph")) {
    return synthesize_scene_paragraph(fenced.value_or(req.user_prompt));
  }
  if (req.user_prompt.find("\"category\"") != std::string::npos) {
    return synthesize_classification(fenced.value_or(req.user_prompt), seed);
  }
  if (req.user_prompt.find("\"is_hazard\"") != std::string::npos) {
    return synthesize_scene_graph(fenced.value_or(req.user_prompt), seed);
  }
  return "mock response " + util::to_hex(reinterpret_cast<const unsigned char*>(&seed), 4) + "-" +
         std::to_string(util::stable_hash64(req.user_prompt, seed) % 100000);
}

}  // namespace

void BackendConfig::validate() const {
  if (max_retries < 0) fail(ErrorCode::config_error, "max_retries must be >= 0");
  if (timeout_s <= 0) fail(ErrorCode::config_error, "timeout must be > 0");
  if (backoff_base_s < 0) fail(ErrorCode::config_error, "backoff_base must be >= 0");
  if (name.empty()) fail(ErrorCode::config_error, "backend name must be non-empty");
  if (kind == BackendKind::remote_http && endpoint_url.empty()) {
    fail(ErrorCode::config_error,
         "backend '" + name + "' is remote but no endpoint url is configured (set HG_" +
             env_stem(name) + "_URL)");
  }
}

void apply_env_overrides(BackendConfig& cfg) {
  const std::string stem = env_stem(cfg.name);
  if (auto url = util::getenv_str("HG_" + stem + "_URL")) cfg.endpoint_url = *url;
  if (auto key = util::getenv_str("HG_" + stem + "_KEY")) cfg.api_key = *key;
}

void MockControls::plant_vqa(const std::string& digest, const std::string& assertion, double score) {
  std::lock_guard<std::mutex> lock(mu);
  planted_vqa[{digest, assertion}] = score;
}

void MockControls::script_chat(const std::string& prompt_substring, const std::string& response) {
  std::lock_guard<std::mutex> lock(mu);
  scripted_chat.emplace_back(prompt_substring, response);
}

class Gateway::InFlightGuard {
 public:
  explicit InFlightGuard(Gateway& gw) : gw_(gw) {
    std::unique_lock<std::mutex> lock(gw_.inflight_mu_);
    gw_.inflight_cv_.wait(lock, [&] { return gw_.inflight_ < gw_.options_.max_in_flight; });
    ++gw_.inflight_;
  }
  ~InFlightGuard() {
    {
      std::lock_guard<std::mutex> lock(gw_.inflight_mu_);
      --gw_.inflight_;
    }
    gw_.inflight_cv_.notify_one();
  }

 private:
  Gateway& gw_;
};

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

std::string Gateway::cached_or_compute(const std::string& op, const std::string& key_material,
                                       const std::string& extension,
                                       const std::function<std::string()>& compute) {
  if (options_.cache_dir.empty()) {
    InFlightGuard guard(*this);
    mock_.backend_calls.fetch_add(1);
    return compute();
  }
  const std::string key = util::sha256_hex(key_material);
  const std::filesystem::path path =
      std::filesystem::path(options_.cache_dir) / op / (key + extension);
  if (auto cached = util::read_file_if_exists(path)) return *cached;
  std::string result;
  {
    InFlightGuard guard(*this);
    mock_.backend_calls.fetch_add(1);
    result = compute();
  }
  util::write_file_atomic(path, result);
  return result;
}

std::string Gateway::chat_complete(const ChatRequest& req, const BackendConfig& cfg) {
  cfg.validate();
  if (req.user_prompt.empty()) fail(ErrorCode::invalid_argument, "chat user_prompt is empty");
  if (req.temperature < 0 || req.temperature > 2) {
    fail(ErrorCode::invalid_argument, "temperature must be in [0,2]");
  }

  const std::string key = "chat|" + cfg.name + "|" + cfg.model + "|" + req.system_prompt + "|" +
                          req.user_prompt + "|" + std::to_string(req.temperature) + "|" +
                          std::to_string(req.max_tokens) + "|" +
                          (req.response_format_hint == ChatRequest::Format::json_object ? "json" : "text");
  const std::string wrapped = cached_or_compute("chat", key, ".json", [&] {
    std::string text;
    if (cfg.kind == BackendKind::mock) {
      text = mock_chat_response(mock_, req, cfg.seed);
    } else {
      json payload = {{"model", cfg.model},
                      {"temperature", req.temperature},
                      {"max_tokens", req.max_tokens},
                      {"messages", json::array({json{{"role", "system"}, {"content", req.system_prompt}},
                                                json{{"role", "user"}, {"content", req.user_prompt}}})}};
      if (req.response_format_hint == ChatRequest::Format::json_object) {
        payload["response_format"] = {{"type", "json_object"}};
      }
      text = chat_message_content(http_post_json(cfg, payload), cfg.name);
    }
    return json{{"result", text}}.dump();
  });
  return json::parse(wrapped)["result"].get<std::string>();
}

std::vector<EmbeddingVector> Gateway::embed_text(const std::vector<std::string>& texts,
                                                 const BackendConfig& cfg) {
  cfg.validate();
  if (texts.empty()) return {};
  for (const auto& t : texts) {
    if (util::trim(t).empty()) fail(ErrorCode::invalid_argument, "cannot embed empty text");
  }

  std::string key = "embed|" + cfg.name + "|" + cfg.model;
  for (const auto& t : texts) {
    key += "|";
    key += t;
  }
  const std::string wrapped = cached_or_compute("embed", key, ".json", [&]() -> std::string {
    json rows = json::array();
    if (cfg.kind == BackendKind::mock) {
      for (const auto& t : texts) {
        std::vector<double> v;
        {
          std::lock_guard<std::mutex> lock(mock_.mu);
          if (auto it = mock_.planted_text_embeddings.find(t);
              it != mock_.planted_text_embeddings.end()) {
            v = it->second;
          }
        }
        if (v.empty()) v = mock_embedding(t, cfg.seed, cfg.embedding_dim);
        rows.push_back(v);
      }
    } else {
      json payload = {{"model", cfg.model}, {"input", texts}};
      json response = http_post_json(cfg, payload);
      if (!response.contains("data") || !response["data"].is_array() ||
          response["data"].size() != texts.size()) {
        fail(ErrorCode::malformed_response,
             "backend '" + cfg.name + "' embedding response shape mismatch");
      }
      rows = json::array();
      std::vector<json> by_index(texts.size());
      for (const auto& item : response["data"]) {
        const std::size_t idx = item.value("index", rows.size());
        if (idx >= texts.size() || !item.contains("embedding")) {
          fail(ErrorCode::malformed_response, "backend '" + cfg.name + "' bad embedding item");
        }
        by_index[idx] = item["embedding"];
      }
      for (auto& row : by_index) rows.push_back(std::move(row));
    }
    return json{{"result", rows}}.dump();
  });

  const json rows = json::parse(wrapped)["result"];
  std::vector<EmbeddingVector> out;
  out.reserve(rows.size());
  std::size_t dim = 0;
  for (const auto& row : rows) {
    EmbeddingVector v;
    v.model_tag = cfg.name;
    v.values = row.get<std::vector<double>>();
    if (v.values.empty()) fail(ErrorCode::malformed_response, "empty embedding vector");
    for (double x : v.values) {
      if (!std::isfinite(x)) fail(ErrorCode::malformed_response, "non-finite embedding entry");
    }
    if (dim == 0) dim = v.values.size();
    if (v.values.size() != dim) {
      fail(ErrorCode::dimension_mismatch, "backend '" + cfg.name + "' returned mixed dimensions");
    }
    out.push_back(std::move(v));
  }
  return out;
}

EmbeddingVector Gateway::embed_image(const ImageArtifact& image, const BackendConfig& cfg) {
  cfg.validate();
  if (!png::has_png_signature(image.image_bytes)) {
    fail(ErrorCode::invalid_argument, "embed_image: not a PNG");
  }
  const std::string content_key = util::sha256_hex(image.image_bytes);
  const std::string key = "embed_image|" + cfg.name + "|" + cfg.model + "|" + content_key;
  const std::string wrapped = cached_or_compute("embed_image", key, ".json", [&]() -> std::string {
    std::vector<double> v;
    if (cfg.kind == BackendKind::mock) {
      {
        std::lock_guard<std::mutex> lock(mock_.mu);
        if (auto it = mock_.planted_image_embeddings.find(image.prompt_digest);
            it != mock_.planted_image_embeddings.end()) {
          v = it->second;
        }
      }
      if (v.empty()) {
        v = hash_vector(image.image_bytes, cfg.seed ^ 0x1aadeULL, cfg.embedding_dim);
        normalize_in_place(v);
      }
    } else {
      json payload = {{"model", cfg.model}, {"image_b64", util::base64_encode(image.image_bytes)}};
      json response = http_post_json(cfg, payload);
      if (response.contains("embedding") && response["embedding"].is_array()) {
        v = response["embedding"].get<std::vector<double>>();
      } else if (response.contains("data") && response["data"].is_array() &&
                 !response["data"].empty() && response["data"][0].contains("embedding")) {
        v = response["data"][0]["embedding"].get<std::vector<double>>();
      } else {
        fail(ErrorCode::malformed_response, "backend '" + cfg.name + "' image embedding shape");
      }
    }
    return json{{"result", v}}.dump();
  });
  EmbeddingVector v;
  v.model_tag = cfg.name;
  v.values = json::parse(wrapped)["result"].get<std::vector<double>>();
  if (v.values.empty()) fail(ErrorCode::malformed_response, "empty image embedding");
  return v;
}

ImageArtifact Gateway::generate_image(const std::string& prompt, const BackendConfig& cfg,
                                      std::uint64_t seed) {
  cfg.validate();
  if (util::trim(prompt).empty()) fail(ErrorCode::invalid_argument, "image prompt is empty");

  const std::string digest = util::sha256_hex(prompt + "\x1f" + std::to_string(seed));
  const std::string key = "image|" + cfg.name + "|" + cfg.model + "|" + prompt + "|" + std::to_string(seed);
  const std::string bytes = cached_or_compute("image", key, ".png", [&]() -> std::string {
    if (cfg.kind == BackendKind::mock) {
      return png::render_placeholder(kMockImageWidth, kMockImageHeight, digest);
    }
    json payload = {{"model", cfg.model},
                    {"prompt", prompt},
                    {"seed", seed},
                    {"response_format", "b64_json"}};
    json response = http_post_json(cfg, payload);
    std::string b64;
    if (response.contains("data") && response["data"].is_array() && !response["data"].empty() &&
        response["data"][0].contains("b64_json")) {
      b64 = response["data"][0]["b64_json"].get<std::string>();
    } else if (response.contains("image_b64")) {
      b64 = response["image_b64"].get<std::string>();
    } else {
      fail(ErrorCode::malformed_response, "backend '" + cfg.name + "' image response shape");
    }
    std::string decoded = util::base64_decode(b64);
    if (!png::has_png_signature(decoded)) {
      fail(ErrorCode::malformed_response, "backend '" + cfg.name + "' returned non-PNG image bytes");
    }
    return decoded;
  });

  const png::Header header = png::read_header(bytes);
  ImageArtifact artifact;
  artifact.image_bytes = bytes;
  artifact.width = header.width;
  artifact.height = header.height;
  artifact.generator_tag = cfg.name;
  artifact.prompt_digest = digest;
  return artifact;
}

double Gateway::answer_assertion(const VqaQuery& query, const BackendConfig& cfg) {
  cfg.validate();
  if (util::trim(query.assertion_text).empty()) {
    fail(ErrorCode::invalid_argument, "assertion_text is empty");
  }
  if (!png::has_png_signature(query.image.image_bytes)) {
    fail(ErrorCode::invalid_argument, "vqa query image is not a PNG");
  }

  const std::string content_key = util::sha256_hex(query.image.image_bytes);
  const std::string key = "vqa|" + cfg.name + "|" + cfg.model + "|" + content_key + "|" +
                          query.assertion_text;
  const std::string wrapped = cached_or_compute("vqa", key, ".json", [&]() -> std::string {
    double score;
    bool degraded = false;
    if (cfg.kind == BackendKind::mock) {
      std::optional<double> planted;
      {
        std::lock_guard<std::mutex> lock(mock_.mu);
        if (auto it = mock_.planted_vqa.find({query.image.prompt_digest, query.assertion_text});
            it != mock_.planted_vqa.end()) {
          planted = it->second;
        }
      }
      score = planted.value_or(util::hash_to_unit(
          util::stable_hash64(query.image.prompt_digest + "\x1f" + query.assertion_text, cfg.seed)));
    } else {
      // Assertion phrased as a yes/no question for the backend.
      std::string question = query.assertion_text;
      while (!question.empty() && (question.back() == '.' || question.back() == ' ')) question.pop_back();
      if (!question.empty()) question[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(question[0])));
      question = "Is it true that " + question + "?";

      json payload = {{"model", cfg.model},
                      {"image_b64", util::base64_encode(query.image.image_bytes)},
                      {"assertion", query.assertion_text},
                      {"question", question}};
      json response = http_post_json(cfg, payload);
      if (response.contains("yes_probability") && response["yes_probability"].is_number()) {
        score = response["yes_probability"].get<double>();
      } else if (response.contains("answer")) {
        const std::string answer = util::to_lower(util::trim(response["answer"].get<std::string>()));
        const bool yes = answer.rfind("yes", 0) == 0;
        if (response.contains("confidence") && response["confidence"].is_number()) {
          const double conf = response["confidence"].get<double>();
          score = yes ? conf : 1.0 - conf;
        } else {
          score = yes ? 0.99 : 0.01;
          degraded = true;
        }
      } else {
        fail(ErrorCode::malformed_response, "backend '" + cfg.name + "' VQA response shape");
      }
    }
    return json{{"result", score}, {"degraded_precision", degraded}}.dump();
  });

  const json parsed = json::parse(wrapped);
  if (parsed.value("degraded_precision", false)) {
    std::fprintf(stderr, "[hazgraph] warning: backend '%s' gave a text-only VQA answer; "
                         "score precision degraded\n", cfg.name.c_str());
  }
  const double score = parsed["result"].get<double>();
  if (!(score >= 0.0 && score <= 1.0)) {
    fail(ErrorCode::score_out_of_range,
         "backend '" + cfg.name + "' VQA score " + std::to_string(score) + " outside [0,1]");
  }
  return score;
}

double Gateway::match_score(const ImageArtifact& image, const std::string& text,
                            const BackendConfig& cfg) {
  cfg.validate();
  if (util::trim(text).empty()) fail(ErrorCode::invalid_argument, "match text is empty");

  const std::string content_key = util::sha256_hex(image.image_bytes);
  const std::string key = "match|" + cfg.name + "|" + cfg.model + "|" + content_key + "|" + text;
  const std::string wrapped = cached_or_compute("match", key, ".json", [&]() -> std::string {
    double score;
    if (cfg.kind == BackendKind::mock) {
      std::optional<double> planted;
      {
        std::lock_guard<std::mutex> lock(mock_.mu);
        if (auto it = mock_.planted_match.find(image.prompt_digest); it != mock_.planted_match.end()) {
          planted = it->second;
        }
      }
      score = planted.value_or(util::hash_to_unit(
          util::stable_hash64(image.prompt_digest + "\x1f" + text, cfg.seed ^ 0x5a5aULL)));
    } else {
      json payload = {{"model", cfg.model},
                      {"image_b64", util::base64_encode(image.image_bytes)},
                      {"text", text}};
      json response = http_post_json(cfg, payload);
      if (!response.contains("score") || !response["score"].is_number()) {
        fail(ErrorCode::malformed_response, "backend '" + cfg.name + "' match response shape");
      }
      score = response["score"].get<double>();
    }
    return json{{"result", score}}.dump();
  });

  const double score = json::parse(wrapped)["result"].get<double>();
  if (!(score >= 0.0 && score <= 1.0)) {
    fail(ErrorCode::score_out_of_range,
         "backend '" + cfg.name + "' match score " + std::to_string(score) + " outside [0,1]");
  }
  return score;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::size_t first_error_index = std::numeric_limits<std::size_t>::max();

  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace hazgraph::gateway
