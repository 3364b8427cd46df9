#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tlm {

// Splits UTF-8 text into lowercase terms. A maximal run of alphanumeric code
// points is one term; every other non-whitespace code point is a term of its
// own. Whitespace is dropped.
std::vector<std::string> tokenize(std::string_view text);

// True when `term` is a single non-alphanumeric character (punctuation/symbol).
bool is_punctuation_term(std::string_view term);

// Validates UTF-8. Returns false on overlong forms, surrogates, or truncation.
bool is_valid_utf8(std::string_view bytes);

}  // namespace tlm
