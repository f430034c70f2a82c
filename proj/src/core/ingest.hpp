#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hazgraph::ingest {

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  auto operator<=>(const Date&) const = default;

  bool valid() const;
  std::string to_iso() const;

  // Accepts YYYY-MM-DD first, then M/D/YYYY.
  static std::optional<Date> parse(std::string_view text);
};

// One row of a Severe Injury Reports export.
struct OshaRecord {
  std::int64_t record_id = 0;
  Date event_date;
  std::string employer;
  bool hospitalized = false;
  bool amputation = false;
  std::string final_narrative;
  std::string nature_title;
  std::string part_of_body_title;
  std::string event_title;
  std::string source_title;
  std::optional<std::string> secondary_source_title;

  bool operator==(const OshaRecord&) const = default;
};

struct SkippedRow {
  std::size_t line = 0;
  std::string reason;
};

struct Corpus {
  std::vector<OshaRecord> records;  // in file row order
  std::string source_path;
  std::chrono::system_clock::time_point parsed_at{};
  std::vector<SkippedRow> skipped;  // non-strict parse report
};

// Parses an SIR CSV export. Header matching is case-insensitive and ignores
// whitespace/punctuation. In non-strict mode rows that violate record
// invariants are skipped and reported via Corpus::skipped; in strict mode the
// first such row aborts with MalformedRow. Rows with an empty final narrative
// are dropped (and counted) in both modes.
Corpus parse_sir_csv(std::string_view csv_text, bool strict, std::string source_path = "");
Corpus parse_sir_csv_file(const std::filesystem::path& path, bool strict);

Corpus filter_date_range(const Corpus& corpus, Date start, Date end);

// Serializes back to the Table-style column layout; parse(corpus_to_csv(c))
// round-trips field-equal.
std::string corpus_to_csv(const Corpus& corpus);

// Line-delimited skip report: "<line>\t<reason>".
std::string skipped_report(const Corpus& corpus);

}  // namespace hazgraph::ingest
