#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ifteval::text {

// ASCII-only helpers; the harness is English-centric and all normalization
// rules are defined over the ASCII range. Bytes >= 0x80 pass through.

std::string to_lower(std::string_view s);

// Replaces ASCII punctuation with spaces.
std::string strip_punct(std::string_view s);

// Trims leading/trailing whitespace and collapses internal runs to one space.
std::string collapse_ws(std::string_view s);

// lowercase + punctuation stripped + whitespace collapsed. This is the
// normalization used by exact_match and by label/entity comparisons.
std::string normalize(std::string_view s);

// normalize() then split on spaces. Empty input yields an empty vector.
std::vector<std::string> tokenize(std::string_view s);

// Replaces every occurrence of `placeholder` in `tmpl` with `value`.
std::string fill_placeholder(std::string tmpl, std::string_view placeholder,
                             std::string_view value);

}  // namespace ifteval::text
