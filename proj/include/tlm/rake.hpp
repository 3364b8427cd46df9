#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace tlm {

using StopwordSet = std::unordered_set<std::string>;

/// Fixed English stopword list shipped with the toolkit (lowercase).
const StopwordSet& default_stopwords();

/// FNV-1a 64 over the sorted stopwords joined by '\n'; recorded alongside
/// retrieval results so a run can be tied to the exact list it used.
std::uint64_t stopword_list_hash(const StopwordSet& stopwords);

/// RAKE keyword extraction. Candidate phrases are maximal runs of tokens
/// containing neither stopwords nor punctuation. A word scores
/// degree/frequency, where each occurrence adds the length of its phrase to
/// the degree; a phrase scores the sum of its word scores. Returns up to
/// `max_keywords` distinct phrases, best first, ties by first occurrence.
std::vector<std::string> rake_keywords(std::string_view text, const StopwordSet& stopwords, std::size_t max_keywords);

}  // namespace tlm
