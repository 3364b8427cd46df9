#include <algorithm>
#include <vector>

#include "tlm/rake.hpp"

namespace tlm {

const StopwordSet& default_stopwords() {
    static const StopwordSet words = {
        "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as",
        "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could",
        "did", "do", "does", "doing", "down", "during", "each", "either", "else", "ever", "every", "few", "for",
        "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him", "himself",
        "his", "how", "however", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "may", "me", "might",
        "more", "most", "must", "my", "myself", "neither", "no", "nor", "not", "now", "of", "off", "on", "once",
        "only", "or", "other", "ought", "our", "ours", "ourselves", "out", "over", "own", "same", "shall", "she",
        "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then",
        "there", "these", "they", "this", "those", "through", "thus", "to", "too", "under", "until", "up", "upon",
        "us", "very", "was", "we", "were", "what", "when", "where", "whether", "which", "while", "who", "whom",
        "whose", "why", "will", "with", "within", "without", "would", "yet", "you", "your", "yours", "yourself",
        "yourselves",
    };
    return words;
}

std::uint64_t stopword_list_hash(const StopwordSet& stopwords) {
    std::vector<std::string> sorted(stopwords.begin(), stopwords.end());
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ULL;
    };
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i > 0) mix('\n');
        for (char c : sorted[i]) mix(static_cast<unsigned char>(c));
    }
    return h;
}

}  // namespace tlm
