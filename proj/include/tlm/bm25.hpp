#pragma once

#include <cmath>
#include <cstdint>

namespace tlm {

/// Okapi BM25 free parameters. k1 saturates term frequency, b controls
/// document-length normalization.
struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
    friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

/// Lucene-style idf, ln(1 + (N - df + 0.5) / (df + 0.5)). Strictly positive
/// for every 0 <= df <= N, and non-increasing in df.
inline double bm25_idf(std::uint64_t num_docs, std::uint64_t df) {
    const double n = static_cast<double>(num_docs);
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

/// Contribution of one query term to one document's score.
inline double bm25_term_score(double idf, std::uint32_t tf, double doc_len, double avg_doc_len, const Bm25Params& p) {
    if (tf == 0) return 0.0;
    const double f = static_cast<double>(tf);
    const double norm = avg_doc_len > 0.0 ? doc_len / avg_doc_len : 1.0;
    return idf * f * (p.k1 + 1.0) / (f + p.k1 * (1.0 - p.b + p.b * norm));
}

}  // namespace tlm
