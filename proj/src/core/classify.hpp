#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/gateway.hpp"
#include "core/ingest.hpp"
#include "core/prompts.hpp"

namespace hazgraph::classify {

enum class HazardCategory : int {
  preventable_hazard = 0,
  non_external_factor = 1,
  insufficient_information = 2,
};

const char* category_name(HazardCategory c);                      // snake_case wire name
std::optional<HazardCategory> category_from_name(std::string_view name);

// An (object + condition) hazard description tied back to its source record.
struct HazardRationale {
  std::int64_t record_id = 0;
  std::string text;

  bool operator==(const HazardRationale&) const = default;
};

struct HazardClassification {
  HazardCategory category = HazardCategory::insufficient_information;
  std::optional<std::string> rationale;  // present iff category == preventable_hazard
  std::int64_t record_id = 0;
  std::vector<std::string> flags;  // e.g. "parse_failure"

  bool operator==(const HazardClassification&) const = default;
};

struct ClassificationBatch {
  std::vector<HazardClassification> items;  // ordered by record_id
  std::array<std::size_t, 3> counts{};      // indexed by HazardCategory

  std::size_t count(HazardCategory c) const { return counts[static_cast<int>(c)]; }
};

struct ClassifyOptions {
  double temperature = 0.0;
  std::size_t concurrency = 4;
};

// Builds the inspection prompt: role framing, few-shot examples covering all
// three categories, a JSON answer contract, and the narrative verbatim.
gateway::ChatRequest build_classification_prompt(const ingest::OshaRecord& record,
                                                 const prompts::PromptLibrary& lib);

// Extracts the first JSON object from a raw model reply and maps category
// aliases onto the enum. Throws UnparseableResponse / UnknownCategory /
// MissingRationale.
HazardClassification parse_classification(const std::string& raw, std::int64_t record_id);

// One classification per record. Unparseable replies are retried once with a
// corrective nudge, then binned as insufficient_information with a
// "parse_failure" flag; only AuthFailure aborts the batch.
ClassificationBatch classify_corpus(const ingest::Corpus& corpus, gateway::Gateway& gw,
                                    const gateway::BackendConfig& cfg,
                                    const prompts::PromptLibrary& lib,
                                    const ClassifyOptions& options = {});

std::vector<HazardRationale> filter_preventable(const ClassificationBatch& batch);

// Line-delimited JSON persistence: {record_id, category, rationale, flags}.
std::string batch_to_jsonl(const ClassificationBatch& batch);
ClassificationBatch batch_from_jsonl(const std::string& text);

}  // namespace hazgraph::classify
