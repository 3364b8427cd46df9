#include "tlm/rake.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "tlm/tokenizer.hpp"

namespace tlm {

std::vector<std::string> rake_keywords(std::string_view text, const StopwordSet& stopwords, std::size_t max_keywords) {
    const auto tokens = tokenize(text);

    std::vector<std::vector<std::string>> candidates;
    std::vector<std::string> current;
    auto flush = [&] {
        if (!current.empty()) candidates.push_back(std::move(current));
        current.clear();
    };
    for (const auto& t : tokens) {
        if (is_punctuation_term(t) || stopwords.contains(t)) {
            flush();
        } else {
            current.push_back(t);
        }
    }
    flush();

    std::unordered_map<std::string, double> freq;
    std::unordered_map<std::string, double> degree;
    for (const auto& phrase : candidates) {
        for (const auto& w : phrase) {
            freq[w] += 1.0;
            degree[w] += static_cast<double>(phrase.size());
        }
    }

    struct Scored {
        std::string phrase;
        double score;
        std::size_t first_seen;
    };
    std::vector<Scored> scored;
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& phrase : candidates) {
        std::string joined;
        double score = 0.0;
        for (const auto& w : phrase) {
            if (!joined.empty()) joined.push_back(' ');
            joined += w;
            score += degree[w] / freq[w];
        }
        if (seen.emplace(joined, scored.size()).second) scored.push_back({std::move(joined), score, scored.size()});
    }

    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
    if (scored.size() > max_keywords) scored.resize(max_keywords);

    std::vector<std::string> out;
    out.reserve(scored.size());
    for (auto& s : scored) out.push_back(std::move(s.phrase));
    return out;
}

}  // namespace tlm
