#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tlm/checkpoint.hpp"
#include "tlm/model.hpp"
#include "tlm/vocabulary.hpp"

namespace tlm {

enum class HeadCategory { positional, vertical, other };
std::string to_string(HeadCategory c);

/// [layer][head] -> L x L attention weights (query rows, key columns).
using AttentionTensor = std::vector<std::vector<Matrix<double>>>;

struct HeadStats {
    std::size_t layer = 0;
    std::size_t head = 0;
    HeadCategory category = HeadCategory::other;
    double fraction_adjacent = 0.0;  // argmax key at distance exactly 1
    double fraction_special = 0.0;   // argmax key is [CLS], [SEP] or "."
    Matrix<double> map;
};

struct AttentionProfile {
    std::string tag;
    std::size_t layers = 0;
    std::size_t heads_per_layer = 0;
    std::vector<TokenId> token_ids;  // probe sequence, non-pad positions
    std::vector<HeadStats> heads;    // layer-major
};

/// Positional when at least 90% of non-pad query rows put their maximum weight
/// on an adjacent token; otherwise vertical when more than 90% put it on
/// [CLS], [SEP] or the period. Argmax ties resolve to the smallest key index;
/// padded keys and queries are ignored. Requires at least 3 non-pad positions.
AttentionProfile classify_heads(const AttentionTensor& attention, std::span<const TokenId> token_ids,
                                std::span<const std::uint8_t> attention_mask, const Vocabulary& vocab);

/// Same, reading sequence 0 of a single-sequence forward pass.
template <typename T>
AttentionProfile classify_heads(const ForwardOutput<T>& output, const MaskedBatch& batch, const Vocabulary& vocab);

/// Tokenizes `sentence`, wraps it in [CLS]/[SEP], runs the checkpoint and
/// classifies every head.
AttentionProfile probe_checkpoint(const Checkpoint& ckpt, const std::string& sentence, const std::string& tag = "model");

struct CensusCounts {
    std::size_t positional = 0;
    std::size_t vertical = 0;
    std::size_t other = 0;
    std::size_t total() const { return positional + vertical + other; }
};

/// Category counts per model tag; profiles sharing a tag are summed.
std::map<std::string, CensusCounts> head_census(std::span<const AttentionProfile> profiles);

/// One JSON object per head: layer, head, category, fractions, matrix.
void export_heads_jsonl(const AttentionProfile& profile, std::ostream& out);

}  // namespace tlm
