#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace defect_sage::text {

// Trim, collapse internal whitespace runs to one space. Casing is preserved.
std::string normalize_whitespace(std::string_view s);

// ASCII lowercase; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view s);

// Comparison key for KB names: whitespace-normalized and lowercased.
std::string name_key(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

// Decodes UTF-8 into code points. Invalid sequences decode byte-wise so the
// result is total over arbitrary input.
std::u32string decode_utf8(std::string_view s);

std::vector<std::string> split_words(std::string_view s);

// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string> split_lines(std::string_view s);

std::string html_escape(std::string_view s);

// Shortest decimal rendering that round-trips typical KB bounds (65, 0.1, 2.5).
std::string format_number(double value);

}  // namespace defect_sage::text
