#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace trapkit {

// RFC 4180: fields holding a comma, quote or line break are quoted, quotes doubled.
std::string csv_field(std::string_view value);
std::string csv_row(const std::vector<std::string>& fields);

// Accepts LF or CRLF line endings; a trailing newline does not add an empty row.
// Throws ParseError on an unterminated quoted field.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace trapkit
