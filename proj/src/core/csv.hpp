#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace hazgraph::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line the row started on
};

// RFC 4180 style parser: quoted fields, doubled-quote escapes, embedded
// separators and newlines, CRLF or LF line endings.
std::vector<Row> parse(std::string_view text);

std::string escape_field(std::string_view field);
std::string write_row(const std::vector<std::string>& fields);

}  // namespace hazgraph::csv
