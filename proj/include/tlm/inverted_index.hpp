#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tlm/bm25.hpp"
#include "tlm/corpus.hpp"

namespace tlm {

struct Posting {
    std::uint32_t doc;  // ordinal of the document in doc_ids() order
    std::uint32_t tf;
};

struct ScoredDoc {
    DocId doc_id = 0;
    double score = 0.0;
    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Orders by score descending, then doc id ascending.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
}

/// Term -> postings index over the alphanumeric terms of a document store.
/// Documents are addressed internally by ordinal in ascending doc id order,
/// so every postings list is sorted by doc id.
class InvertedIndex {
public:
    static InvertedIndex build(const DocumentStore& store);

    std::size_t num_docs() const noexcept { return doc_ids_.size(); }
    std::size_t num_terms() const noexcept { return terms_.size(); }
    double avg_doc_length() const noexcept { return avgdl_; }
    std::uint64_t total_length() const noexcept { return total_length_; }

    const std::vector<DocId>& doc_ids() const noexcept { return doc_ids_; }
    const std::vector<std::string>& terms() const noexcept { return terms_; }

    /// Empty span for unknown terms.
    std::span<const Posting> postings(std::string_view term) const;
    std::uint64_t df(std::string_view term) const { return postings(term).size(); }
    std::uint32_t tf(std::string_view term, DocId doc) const;

    /// Throws PreconditionError for an unknown doc id.
    std::size_t ordinal_of(DocId doc) const;
    std::uint32_t doc_length(DocId doc) const { return doc_lengths_[ordinal_of(doc)]; }
    std::uint32_t doc_length_at(std::size_t ordinal) const { return doc_lengths_[ordinal]; }

    /// Writes the "TLMIDX1" binary representation.
    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(std::istream& in);
    static InvertedIndex load(const std::filesystem::path& path);

private:
    void finalize();

    std::vector<DocId> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::vector<std::string> terms_;
    std::vector<std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::uint32_t> term_ids_;
    std::uint64_t total_length_ = 0;
    double avgdl_ = 0.0;
};

/// BM25 score of `doc` for the distinct terms of `query_terms`.
double bm25_score(const InvertedIndex& index, std::span<const std::string> query_terms, DocId doc,
                  const Bm25Params& params = {});

/// The k highest-scoring documents with positive score, ranked by ranks_before().
std::vector<ScoredDoc> top_k(const InvertedIndex& index, std::span<const std::string> query_terms, std::size_t k,
                             const Bm25Params& params = {});

}  // namespace tlm
