#include "core/ingest.hpp"

#include <charconv>
#include <set>
#include <unordered_map>

#include "core/csv.hpp"
#include "core/errors.hpp"
#include "core/util.hpp"

namespace hazgraph::ingest {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static const int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return kDays[m - 1];
}

std::optional<int> parse_int_field(std::string_view s) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

}  // namespace

bool Date::valid() const {
  return year >= 1 && month >= 1 && month <= 12 && day >= 1 && day <= days_in_month(year, month);
}

std::string Date::to_iso() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

std::optional<Date> Date::parse(std::string_view text) {
  std::string t = util::trim(text);
  auto try_split = [&](char sep, bool year_first) -> std::optional<Date> {
    std::size_t a = t.find(sep);
    if (a == std::string::npos) return std::nullopt;
    std::size_t b = t.find(sep, a + 1);
    if (b == std::string::npos || t.find(sep, b + 1) != std::string::npos) return std::nullopt;
    auto p0 = parse_int_field(std::string_view(t).substr(0, a));
    auto p1 = parse_int_field(std::string_view(t).substr(a + 1, b - a - 1));
    auto p2 = parse_int_field(std::string_view(t).substr(b + 1));
    if (!p0 || !p1 || !p2) return std::nullopt;
    Date d;
    if (year_first) {
      d = Date{*p0, *p1, *p2};
    } else {
      d = Date{*p2, *p0, *p1};
    }
    if (!d.valid()) return std::nullopt;
    return d;
  };
  // ISO first, then the M/D/YYYY form seen in older exports.
  if (auto d = try_split('-', true)) return d;
  if (auto d = try_split('/', false)) return d;
  return std::nullopt;
}

namespace {

struct ColumnIndex {
  std::size_t event_date, employer, hospitalized, amputation, narrative;
  std::size_t nature, part_of_body, event, source, secondary;
  std::optional<std::size_t> id;
};

ColumnIndex resolve_columns(const std::vector<std::string>& header) {
  std::unordered_map<std::string, std::size_t> by_key;
  for (std::size_t i = 0; i < header.size(); ++i) {
    by_key.emplace(util::normalize_key(header[i]), i);
  }
  auto need = [&](std::string_view name, const char* display) -> std::size_t {
    auto it = by_key.find(std::string(name));
    if (it == by_key.end()) fail(ErrorCode::missing_column, std::string("missing column: ") + display);
    return it->second;
  };
  ColumnIndex idx{};
  idx.event_date = need("eventdate", "EventDate");
  idx.employer = need("employer", "Employer");
  idx.hospitalized = need("hospitalized", "Hospitalized");
  idx.amputation = need("amputation", "Amputation");
  idx.narrative = need("finalnarrative", "Final Narrative");
  idx.nature = need("naturetitle", "NatureTitle");
  idx.part_of_body = need("partofbodytitle", "Part of Body Title");
  idx.event = need("eventtitle", "EventTitle");
  idx.source = need("sourcetitle", "SourceTitle");
  idx.secondary = need("secondarysourcetitle", "Secondary Source Title");
  if (auto it = by_key.find("id"); it != by_key.end()) idx.id = it->second;
  return idx;
}

// Indicator cells carry "0", "1", "" or occasionally a count.
std::optional<bool> parse_indicator(std::string_view cell) {
  std::string t = util::trim(cell);
  if (t.empty()) return false;
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
  return v != 0.0;
}

}  // namespace

Corpus parse_sir_csv(std::string_view csv_text, bool strict, std::string source_path) {
  if (!util::is_valid_utf8(csv_text)) {
    fail(ErrorCode::encoding_error, "input is not valid UTF-8");
  }
  Corpus corpus;
  corpus.source_path = std::move(source_path);
  corpus.parsed_at = std::chrono::system_clock::now();

  auto rows = csv::parse(csv_text);
  if (rows.empty()) fail(ErrorCode::missing_column, "empty input: no header row");
  const ColumnIndex idx = resolve_columns(rows[0].fields);

  std::set<std::int64_t> seen_ids;
  std::int64_t ordinal = 0;

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::int64_t row_ordinal = ordinal++;

    auto skip_or_throw = [&](const std::string& reason) {
      if (strict) {
        fail(ErrorCode::malformed_row,
             "line " + std::to_string(row.line) + ": " + reason);
      }
      corpus.skipped.push_back({row.line, reason});
    };

    auto cell = [&](std::size_t col) -> std::string_view {
      return col < row.fields.size() ? std::string_view(row.fields[col]) : std::string_view{};
    };

    std::size_t max_col = idx.secondary;
    for (std::size_t c : {idx.event_date, idx.employer, idx.hospitalized, idx.amputation,
                          idx.narrative, idx.nature, idx.part_of_body, idx.event, idx.source}) {
      max_col = std::max(max_col, c);
    }
    if (row.fields.size() <= max_col) {
      skip_or_throw("row has " + std::to_string(row.fields.size()) + " fields, expected at least " +
                    std::to_string(max_col + 1));
      continue;
    }

    OshaRecord rec;
    std::string narrative(cell(idx.narrative));
    if (util::trim(narrative).empty()) {
      // Unclassifiable either way; dropped in both modes.
      corpus.skipped.push_back({row.line, "empty final narrative"});
      continue;
    }
    rec.final_narrative = std::move(narrative);

    auto date = Date::parse(cell(idx.event_date));
    if (!date) {
      skip_or_throw("unparseable event date: '" + std::string(cell(idx.event_date)) + "'");
      continue;
    }
    rec.event_date = *date;

    auto hosp = parse_indicator(cell(idx.hospitalized));
    auto amp = parse_indicator(cell(idx.amputation));
    if (!hosp || !amp) {
      skip_or_throw("non-numeric indicator cell");
      continue;
    }
    rec.hospitalized = *hosp;
    rec.amputation = *amp;

    if (idx.id) {
      std::string t = util::trim(cell(*idx.id));
      std::int64_t value = 0;
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
      if (ec != std::errc{} || ptr != t.data() + t.size()) {
        skip_or_throw("unparseable record id: '" + t + "'");
        continue;
      }
      rec.record_id = value;
    } else {
      rec.record_id = row_ordinal;
    }
    if (!seen_ids.insert(rec.record_id).second) {
      skip_or_throw("duplicate record id: " + std::to_string(rec.record_id));
      continue;
    }

    rec.employer = std::string(cell(idx.employer));
    rec.nature_title = std::string(cell(idx.nature));
    rec.part_of_body_title = std::string(cell(idx.part_of_body));
    rec.event_title = std::string(cell(idx.event));
    rec.source_title = std::string(cell(idx.source));
    if (std::string sec(cell(idx.secondary)); !util::trim(sec).empty()) {
      rec.secondary_source_title = std::move(sec);
    }

    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

Corpus parse_sir_csv_file(const std::filesystem::path& path, bool strict) {
  return parse_sir_csv(util::read_file(path), strict, path.string());
}

Corpus filter_date_range(const Corpus& corpus, Date start, Date end) {
  if (!start.valid() || !end.valid() || end < start) {
    fail(ErrorCode::invalid_range,
         "invalid date range: " + start.to_iso() + " .. " + end.to_iso());
  }
  Corpus out;
  out.source_path = corpus.source_path;
  out.parsed_at = corpus.parsed_at;
  out.skipped = corpus.skipped;
  for (const auto& rec : corpus.records) {
    if (start <= rec.event_date && rec.event_date <= end) out.records.push_back(rec);
  }
  return out;
}

std::string corpus_to_csv(const Corpus& corpus) {
  std::string out = csv::write_row({"ID", "EventDate", "Employer", "Hospitalized", "Amputation",
                                    "Final Narrative", "NatureTitle", "Part of Body Title",
                                    "EventTitle", "SourceTitle", "Secondary Source Title"});
  for (const auto& r : corpus.records) {
    out += csv::write_row({std::to_string(r.record_id), r.event_date.to_iso(), r.employer,
                           r.hospitalized ? "1" : "0", r.amputation ? "1" : "0",
                           r.final_narrative, r.nature_title, r.part_of_body_title, r.event_title,
                           r.source_title, r.secondary_source_title.value_or("")});
  }
  return out;
}

std::string skipped_report(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.skipped) {
    out += std::to_string(s.line);
    out.push_back('\t');
    out += s.reason;
    out.push_back('\n');
  }
  return out;
}

}  // namespace hazgraph::ingest
