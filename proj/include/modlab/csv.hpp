#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace modlab::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based physical line where the record starts
};

/// Quotes a field when it contains a comma, quote, CR or LF (RFC 4180).
std::string escape(std::string_view field);

/// Joins escaped fields with commas and terminates with LF.
std::string format_row(const std::vector<std::string>& fields);

/// Parses RFC 4180 text. Accepts LF or CRLF record separators; quoted
/// fields may span lines. Throws ValidationError on an unterminated quote.
std::vector<Row> parse(std::string_view text);

}  // namespace modlab::csv
