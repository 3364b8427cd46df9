#include "tlm/vocabulary.hpp"

#include "tlm/error.hpp"

namespace tlm {

namespace {
constexpr const char* kReserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "."};
}

Vocabulary::Vocabulary() {
    for (const char* t : kReserved) add(t);
}

Vocabulary Vocabulary::from_terms(std::vector<std::string> terms) {
    constexpr std::size_t n_reserved = std::size(kReserved);
    if (terms.size() < n_reserved) throw FormatError("vocabulary: missing reserved terms");
    for (std::size_t i = 0; i < n_reserved; ++i) {
        if (terms[i] != kReserved[i]) throw FormatError("vocabulary: reserved term mismatch at id " + std::to_string(i));
    }
    Vocabulary v;
    for (std::size_t i = n_reserved; i < terms.size(); ++i) {
        if (v.contains(terms[i])) throw FormatError("vocabulary: duplicate term '" + terms[i] + "'");
        v.add(terms[i]);
    }
    return v;
}

TokenId Vocabulary::add(std::string_view term) {
    std::string key(term);
    auto it = ids_.find(key);
    if (it != ids_.end()) return it->second;
    auto id = static_cast<TokenId>(terms_.size());
    terms_.push_back(key);
    ids_.emplace(std::move(key), id);
    return id;
}

TokenId Vocabulary::lookup(std::string_view term) const {
    auto it = ids_.find(std::string(term));
    return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view term) const { return ids_.contains(std::string(term)); }

const std::string& Vocabulary::term_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= terms_.size()) throw PreconditionError("token id out of range: " + std::to_string(id));
    return terms_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
}

}  // namespace tlm
