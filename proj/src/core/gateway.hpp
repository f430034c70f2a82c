#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace hazgraph::gateway {

enum class BackendKind { remote_http, mock };

// Connection settings for one model capability. `name` doubles as the cache
// tag and the env-var stem: HG_<NAME>_URL / HG_<NAME>_KEY (uppercased).
struct BackendConfig {
  std::string name = "mock";
  BackendKind kind = BackendKind::mock;
  std::string endpoint_url;
  std::string api_key;  // populated from the environment, never from config files
  std::string model;
  double timeout_s = 30.0;
  int max_retries = 2;
  double backoff_base_s = 0.5;
  std::uint64_t seed = 0;            // mock determinism
  std::size_t embedding_dim = 32;    // mock embedding dimension

  void validate() const;
};

// Resolves endpoint_url/api_key from HG_<NAME>_URL / HG_<NAME>_KEY.
void apply_env_overrides(BackendConfig& cfg);

struct ChatRequest {
  enum class Format { free_text, json_object };

  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.0;
  int max_tokens = 1024;
  Format response_format_hint = Format::free_text;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_tag;

  std::size_t dim() const { return values.size(); }
};

struct ImageArtifact {
  std::string image_bytes;  // PNG
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::string generator_tag;
  std::string prompt_digest;  // content hash of (prompt, seed)
};

struct VqaQuery {
  const ImageArtifact& image;
  std::string assertion_text;
};

// Deterministic fakes standing in for the hosted models, plus the hooks the
// test harness uses to plant exact outputs.
struct MockControls {
  std::mutex mu;
  // Chat responses keyed by a substring of the user prompt; checked before
  // the synthesized default.
  std::vector<std::pair<std::string, std::string>> scripted_chat;
  // FIFO chat responses consumed before everything else (single-threaded tests).
  std::deque<std::string> chat_queue;
  std::map<std::pair<std::string, std::string>, double> planted_vqa;  // (prompt_digest, assertion)
  std::map<std::string, double> planted_match;                        // prompt_digest
  std::map<std::string, std::vector<double>> planted_text_embeddings;
  std::map<std::string, std::vector<double>> planted_image_embeddings;  // prompt_digest
  std::atomic<std::uint64_t> backend_calls{0};  // invocations that reached a backend (cache misses)

  void plant_vqa(const std::string& digest, const std::string& assertion, double score);
  void script_chat(const std::string& prompt_substring, const std::string& response);
};

struct GatewayOptions {
  std::string cache_dir;        // empty disables the response cache
  std::size_t max_in_flight = 4;
};

// Uniform client for every external model capability. Thread-safe; remote
// calls are retried with exponential backoff and bounded by max_in_flight.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});

  std::string chat_complete(const ChatRequest& req, const BackendConfig& cfg);
  std::vector<EmbeddingVector> embed_text(const std::vector<std::string>& texts,
                                          const BackendConfig& cfg);
  EmbeddingVector embed_image(const ImageArtifact& image, const BackendConfig& cfg);
  ImageArtifact generate_image(const std::string& prompt, const BackendConfig& cfg,
                               std::uint64_t seed);
  double answer_assertion(const VqaQuery& query, const BackendConfig& cfg);
  double match_score(const ImageArtifact& image, const std::string& text,
                     const BackendConfig& cfg);

  MockControls& mock() { return mock_; }
  const GatewayOptions& options() const { return options_; }

 private:
  class InFlightGuard;

  std::string cached_or_compute(const std::string& op, const std::string& key_material,
                                const std::string& extension,
                                const std::function<std::string()>& compute);

  GatewayOptions options_;
  MockControls mock_;
  std::mutex inflight_mu_;
  std::condition_variable inflight_cv_;
  std::size_t inflight_ = 0;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads; item order in any
// shared output is the caller's responsibility (index-addressed writes keep
// results deterministic). The first exception is rethrown after all workers
// finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace hazgraph::gateway
