#include "tlm/inverted_index.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "tlm/binary_io.hpp"
#include "tlm/error.hpp"
#include "tlm/tokenizer.hpp"

namespace tlm {

namespace {

constexpr const char* kIndexHeader = "TLMIDX1\n";

// Distinct query terms in lexicographic order; fixes the summation order.
std::vector<std::string_view> distinct_terms(std::span<const std::string> query_terms) {
    std::set<std::string_view> uniq(query_terms.begin(), query_terms.end());
    return {uniq.begin(), uniq.end()};
}

}  // namespace

InvertedIndex InvertedIndex::build(const DocumentStore& store) {
    if (store.empty()) throw PreconditionError("cannot index an empty document store");
    InvertedIndex idx;
    std::vector<std::size_t> order(store.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return store.at(a).doc_id < store.at(b).doc_id; });

    idx.doc_ids_.reserve(order.size());
    idx.doc_lengths_.reserve(order.size());
    std::unordered_map<std::uint32_t, std::uint32_t> counts;
    for (std::size_t ordinal = 0; ordinal < order.size(); ++ordinal) {
        const Document& doc = store.at(order[ordinal]);
        idx.doc_ids_.push_back(doc.doc_id);
        counts.clear();
        std::uint32_t len = 0;
        for (const auto& term : doc.tokens) {
            if (is_punctuation_term(term)) continue;
            auto [it, inserted] = idx.term_ids_.try_emplace(term, static_cast<std::uint32_t>(idx.terms_.size()));
            if (inserted) {
                idx.terms_.push_back(term);
                idx.postings_.emplace_back();
            }
            ++counts[it->second];
            ++len;
        }
        idx.doc_lengths_.push_back(len);
        for (auto [term_id, tf] : counts) {
            idx.postings_[term_id].push_back({static_cast<std::uint32_t>(ordinal), tf});
        }
    }
    idx.finalize();
    return idx;
}

void InvertedIndex::finalize() {
    total_length_ = std::accumulate(doc_lengths_.begin(), doc_lengths_.end(), std::uint64_t{0});
    avgdl_ = doc_ids_.empty() ? 0.0 : static_cast<double>(total_length_) / static_cast<double>(doc_ids_.size());
}

std::span<const Posting> InvertedIndex::postings(std::string_view term) const {
    auto it = term_ids_.find(std::string(term));
    if (it == term_ids_.end()) return {};
    return postings_[it->second];
}

std::uint32_t InvertedIndex::tf(std::string_view term, DocId doc) const {
    auto ordinal = static_cast<std::uint32_t>(ordinal_of(doc));
    auto list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), ordinal, [](const Posting& p, std::uint32_t o) { return p.doc < o; });
    return (it != list.end() && it->doc == ordinal) ? it->tf : 0;
}

std::size_t InvertedIndex::ordinal_of(DocId doc) const {
    auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), doc);
    if (it == doc_ids_.end() || *it != doc) throw PreconditionError("unknown doc id " + std::to_string(doc));
    return static_cast<std::size_t>(it - doc_ids_.begin());
}

void InvertedIndex::save(std::ostream& out) const {
    out.write(kIndexHeader, static_cast<std::streamsize>(std::char_traits<char>::length(kIndexHeader)));
    binio::write<std::uint64_t>(out, doc_ids_.size());
    binio::write_span<DocId>(out, doc_ids_);
    binio::write_span<std::uint32_t>(out, doc_lengths_);
    binio::write<std::uint64_t>(out, terms_.size());
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        binio::write_string(out, terms_[t]);
        binio::write<std::uint64_t>(out, postings_[t].size());
        for (const auto& p : postings_[t]) {
            binio::write(out, p.doc);
            binio::write(out, p.tf);
        }
    }
}

void InvertedIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    save(out);
    if (!out) throw IoError("write failed: " + path.string());
}

InvertedIndex InvertedIndex::load(std::istream& in) {
    binio::expect_header(in, kIndexHeader);
    InvertedIndex idx;
    auto n_docs = binio::read<std::uint64_t>(in);
    if (n_docs > (1ULL << 32)) throw FormatError("index: document count out of range");
    idx.doc_ids_.resize(n_docs);
    idx.doc_lengths_.resize(n_docs);
    binio::read_span<DocId>(in, idx.doc_ids_);
    binio::read_span<std::uint32_t>(in, idx.doc_lengths_);
    if (!std::is_sorted(idx.doc_ids_.begin(), idx.doc_ids_.end())) throw FormatError("index: doc ids not sorted");
    auto n_terms = binio::read<std::uint64_t>(in);
    for (std::uint64_t t = 0; t < n_terms; ++t) {
        auto term = binio::read_string(in);
        auto n_post = binio::read<std::uint64_t>(in);
        if (n_post > n_docs) throw FormatError("index: postings longer than document count");
        std::vector<Posting> list(n_post);
        for (auto& p : list) {
            p.doc = binio::read<std::uint32_t>(in);
            p.tf = binio::read<std::uint32_t>(in);
            if (p.doc >= n_docs) throw FormatError("index: posting references unknown document");
        }
        if (!idx.term_ids_.emplace(term, static_cast<std::uint32_t>(t)).second) throw FormatError("index: duplicate term");
        idx.terms_.push_back(std::move(term));
        idx.postings_.push_back(std::move(list));
    }
    idx.finalize();
    return idx;
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return load(in);
}

double bm25_score(const InvertedIndex& index, std::span<const std::string> query_terms, DocId doc,
                  const Bm25Params& params) {
    const auto ordinal = index.ordinal_of(doc);
    const double dl = index.doc_length_at(ordinal);
    double score = 0.0;
    for (auto term : distinct_terms(query_terms)) {
        auto list = index.postings(term);
        auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                                   [](const Posting& p, std::size_t o) { return p.doc < o; });
        if (it == list.end() || it->doc != ordinal) continue;
        score += bm25_term_score(bm25_idf(index.num_docs(), list.size()), it->tf, dl, index.avg_doc_length(), params);
    }
    return score;
}

std::vector<ScoredDoc> top_k(const InvertedIndex& index, std::span<const std::string> query_terms, std::size_t k,
                             const Bm25Params& params) {
    if (k == 0) throw PreconditionError("K must be >= 1");
    std::vector<double> acc(index.num_docs(), 0.0);
    std::vector<std::uint32_t> touched;
    for (auto term : distinct_terms(query_terms)) {
        auto list = index.postings(term);
        if (list.empty()) continue;
        const double idf = bm25_idf(index.num_docs(), list.size());
        for (const auto& p : list) {
            if (acc[p.doc] == 0.0) touched.push_back(p.doc);
            acc[p.doc] += bm25_term_score(idf, p.tf, index.doc_length_at(p.doc), index.avg_doc_length(), params);
        }
    }
    std::vector<ScoredDoc> hits;
    hits.reserve(touched.size());
    for (auto ordinal : touched) hits.push_back({index.doc_ids()[ordinal], acc[ordinal]});
    const auto keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), ranks_before);
    hits.resize(keep);
    return hits;
}

}  // namespace tlm
