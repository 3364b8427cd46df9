#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tlm {

using TokenId = std::int32_t;

/// Term <-> id map. Ids 0..4 are the special tokens in the order
/// [PAD], [UNK], [CLS], [SEP], [MASK]; id 5 is always the period term ".".
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kCls = 2;
    static constexpr TokenId kSep = 3;
    static constexpr TokenId kMask = 4;
    static constexpr TokenId kPeriod = 5;
    static constexpr TokenId kNumSpecial = 5;

    Vocabulary();

    /// Rebuilds a vocabulary from an ordered term list (as produced by terms()).
    /// The list must start with the reserved entries.
    static Vocabulary from_terms(std::vector<std::string> terms);

    /// Returns the id of `term`, inserting it when absent.
    TokenId add(std::string_view term);

    /// Returns the id of `term` or kUnk.
    TokenId lookup(std::string_view term) const;
    bool contains(std::string_view term) const;

    const std::string& term_of(TokenId id) const;
    std::size_t size() const noexcept { return terms_.size(); }
    const std::vector<std::string>& terms() const noexcept { return terms_; }

    TokenId period_id() const noexcept { return kPeriod; }
    static bool is_special(TokenId id) noexcept { return id >= 0 && id < kNumSpecial; }

    std::vector<TokenId> encode(std::span<const std::string> tokens) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

private:
    std::vector<std::string> terms_;
    std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace tlm
