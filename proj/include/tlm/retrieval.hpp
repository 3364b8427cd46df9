#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tlm/corpus.hpp"
#include "tlm/inverted_index.hpp"
#include "tlm/rake.hpp"

namespace tlm {

enum class QueryMode { full_text, rake };
enum class RetrievalMethod { bm25, random };

std::string to_string(QueryMode m);
std::string to_string(RetrievalMethod m);
QueryMode parse_query_mode(const std::string& s);
RetrievalMethod parse_retrieval_method(const std::string& s);

struct RetrievalParams {
    std::size_t k = 50;
    RetrievalMethod method = RetrievalMethod::bm25;
    QueryMode query_mode = QueryMode::full_text;
    Bm25Params bm25;
    std::size_t rake_threshold = 512;  // token count above which RAKE queries kick in
    std::size_t max_keywords = 20;
    std::uint64_t stopwords_hash = 0;
    std::uint64_t seed = 0;  // random retrieval only

    friend bool operator==(const RetrievalParams&, const RetrievalParams&) = default;
};

/// The external set S: sorted unique doc ids plus, per task example, the
/// ranked hits that contributed to it.
struct RetrievalSet {
    std::vector<DocId> doc_ids;
    std::map<std::uint64_t, std::vector<ScoredDoc>> provenance;
    RetrievalParams params;

    friend bool operator==(const RetrievalSet&, const RetrievalSet&) = default;

    /// JSONL: one {"example_id", "hits"} line per example, then a footer
    /// object carrying the deduplicated set and the parameters.
    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static RetrievalSet load(std::istream& in);
    static RetrievalSet load(const std::filesystem::path& path);
};

/// Query terms for one example: all tokens, or the tokens of its RAKE phrases
/// when query_mode is rake and the text is longer than rake_threshold.
std::vector<std::string> build_query(const std::string& text, const RetrievalParams& params,
                                     const StopwordSet& stopwords = default_stopwords());

/// BM25 top-K per example, unioned. Labels are never read.
RetrievalSet retrieve_external(const InvertedIndex& index, std::span<const TaskExample> task, RetrievalParams params,
                               const StopwordSet& stopwords = default_stopwords());

/// K documents per example sampled uniformly without replacement from
/// `doc_ids` with a generator seeded by params.seed. Scores are recorded as 0.
RetrievalSet retrieve_random(std::span<const DocId> doc_ids, std::span<const TaskExample> task, RetrievalParams params);
RetrievalSet retrieve_random(const DocumentStore& store, std::span<const TaskExample> task, RetrievalParams params);

}  // namespace tlm
