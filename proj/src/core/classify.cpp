#include "core/classify.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

#include "core/errors.hpp"
#include "core/util.hpp"

namespace hazgraph::classify {

using json = nlohmann::json;

const char* category_name(HazardCategory c) {
  switch (c) {
    case HazardCategory::preventable_hazard: return "preventable_hazard";
    case HazardCategory::non_external_factor: return "non_external_factor";
    case HazardCategory::insufficient_information: return "insufficient_information";
  }
  return "insufficient_information";
}

std::optional<HazardCategory> category_from_name(std::string_view name) {
  const std::string key = util::normalize_key(name);
  if (key == "preventablehazard") return HazardCategory::preventable_hazard;
  if (key == "nonexternalfactor") return HazardCategory::non_external_factor;
  if (key == "insufficientinformation") return HazardCategory::insufficient_information;
  return std::nullopt;
}

namespace {

std::string render_examples(const std::string& examples_json) {
  json examples = json::parse(examples_json, nullptr, false);
  if (examples.is_discarded() || !examples.is_array() || examples.empty()) {
    fail(ErrorCode::config_error, "classification_examples.json must be a non-empty array");
  }
  std::string out;
  for (const auto& ex : examples) {
    json answer;
    answer["category"] = ex.at("category").get<std::string>();
    if (ex.contains("rationale")) answer["rationale"] = ex["rationale"].get<std::string>();
    out += "Narrative: " + ex.at("narrative").get<std::string>() + "\n";
    out += "Answer: " + answer.dump() + "\n\n";
  }
  return util::trim(out);
}

}  // namespace

gateway::ChatRequest build_classification_prompt(const ingest::OshaRecord& record,
                                                 const prompts::PromptLibrary& lib) {
  if (util::trim(record.final_narrative).empty()) {
    fail(ErrorCode::invalid_argument, "record has an empty narrative");
  }
  gateway::ChatRequest req;
  req.system_prompt = lib.classification_system;
  req.user_prompt = prompts::render_template(
      lib.classification_user, {{"examples", render_examples(lib.classification_examples)},
                                {"narrative", record.final_narrative}});
  req.temperature = 0.0;
  req.response_format_hint = gateway::ChatRequest::Format::json_object;
  return req;
}

HazardClassification parse_classification(const std::string& raw, std::int64_t record_id) {
  auto block = util::extract_first_json_object(raw);
  if (!block) fail(ErrorCode::unparseable_response, "no JSON object in model reply");
  json parsed = json::parse(*block, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    fail(ErrorCode::unparseable_response, "reply JSON does not parse");
  }
  if (!parsed.contains("category") || !parsed["category"].is_string()) {
    fail(ErrorCode::unparseable_response, "reply JSON lacks a category field");
  }

  const std::string raw_category = parsed["category"].get<std::string>();
  const std::string key = util::normalize_key(raw_category);
  HazardClassification result;
  result.record_id = record_id;
  // Alias-tolerant mapping; models add plurals and qualifiers like "(avoidable)".
  if (key.find("preventable") != std::string::npos) {
    result.category = HazardCategory::preventable_hazard;
  } else if (key.find("nonexternal") != std::string::npos) {
    result.category = HazardCategory::non_external_factor;
  } else if (key.find("insufficient") != std::string::npos) {
    result.category = HazardCategory::insufficient_information;
  } else {
    fail(ErrorCode::unknown_category, "unrecognized category: '" + raw_category + "'");
  }

  if (result.category == HazardCategory::preventable_hazard) {
    if (!parsed.contains("rationale") || !parsed["rationale"].is_string()) {
      fail(ErrorCode::missing_rationale, "preventable hazard without rationale");
    }
    const std::string rationale = util::trim(parsed["rationale"].get<std::string>());
    if (util::split_words(rationale).size() < 2) {
      fail(ErrorCode::missing_rationale,
           "rationale must name an object and a condition: '" + rationale + "'");
    }
    result.rationale = rationale;
  }
  return result;
}

ClassificationBatch classify_corpus(const ingest::Corpus& corpus, gateway::Gateway& gw,
                                    const gateway::BackendConfig& cfg,
                                    const prompts::PromptLibrary& lib,
                                    const ClassifyOptions& options) {
  ClassificationBatch batch;
  if (corpus.records.empty()) return batch;

  std::vector<HazardClassification> results(corpus.records.size());
  gateway::parallel_for(corpus.records.size(), options.concurrency, [&](std::size_t i) {
    const auto& record = corpus.records[i];
    gateway::ChatRequest req = build_classification_prompt(record, lib);
    req.temperature = options.temperature;

    HazardClassification item;
    item.record_id = record.record_id;
    item.category = HazardCategory::insufficient_information;

    for (int attempt = 0; attempt < 2; ++attempt) {
      std::string reply;
      try {
        reply = gw.chat_complete(req, cfg);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::auth_failure) throw;
        item.flags.push_back(std::string("backend_error: ") + error_code_name(e.code()));
        break;
      }
      try {
        item = parse_classification(reply, record.record_id);
        break;
      } catch (const Error& e) {
        if (attempt == 1) {
          item.flags.push_back("parse_failure");
          item.flags.push_back(std::string("parse_error: ") + error_code_name(e.code()));
        } else {
          // Distinct retry request, so a cached reply cannot be replayed.
          req.user_prompt += "\n\nYour previous reply could not be parsed. "
                             "Respond with only the JSON object.";
        }
      }
    }
    results[i] = std::move(item);
  });

  std::stable_sort(results.begin(), results.end(),
                   [](const auto& a, const auto& b) { return a.record_id < b.record_id; });
  batch.items = std::move(results);
  for (const auto& item : batch.items) ++batch.counts[static_cast<int>(item.category)];
  return batch;
}

std::vector<HazardRationale> filter_preventable(const ClassificationBatch& batch) {
  std::vector<HazardRationale> out;
  for (const auto& item : batch.items) {
    if (item.category != HazardCategory::preventable_hazard) continue;
    out.push_back({item.record_id, item.rationale.value_or("")});
  }
  return out;
}

std::string batch_to_jsonl(const ClassificationBatch& batch) {
  std::string out;
  for (const auto& item : batch.items) {
    json row;
    row["record_id"] = item.record_id;
    row["category"] = category_name(item.category);
    if (item.rationale) row["rationale"] = *item.rationale;
    else row["rationale"] = nullptr;
    row["flags"] = item.flags;
    out += row.dump();
    out.push_back('\n');
  }
  return out;
}

ClassificationBatch batch_from_jsonl(const std::string& text) {
  ClassificationBatch batch;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = util::trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded()) fail(ErrorCode::io_error, "bad classification JSONL line");
    HazardClassification item;
    item.record_id = row.at("record_id").get<std::int64_t>();
    auto category = category_from_name(row.at("category").get<std::string>());
    if (!category) fail(ErrorCode::io_error, "bad category in classification JSONL");
    item.category = *category;
    if (row.contains("rationale") && row["rationale"].is_string()) {
      item.rationale = row["rationale"].get<std::string>();
    }
    if (row.contains("flags")) item.flags = row["flags"].get<std::vector<std::string>>();
    batch.items.push_back(std::move(item));
    ++batch.counts[static_cast<int>(batch.items.back().category)];
  }
  return batch;
}

}  // namespace hazgraph::classify
