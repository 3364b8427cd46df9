#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tlm/vocabulary.hpp"

namespace tlm {

enum class Origin : std::uint8_t { internal, external };
std::string to_string(Origin o);

/// One [CLS] ... [SEP] [PAD]* row of fixed length.
struct EncodedRow {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention;  // 1 for real tokens, 0 for padding
    std::size_t length() const { return static_cast<std::size_t>(std::count(attention.begin(), attention.end(), 1)); }
};

/// [CLS] + the first seq_len-2 ids + [SEP], padded. Used for internal data,
/// where the label belongs to the whole text.
EncodedRow encode_sequence(std::span<const TokenId> ids, std::size_t seq_len);

/// Consecutive non-overlapping chunks of seq_len-2 ids, each encoded as its
/// own row. Used for external data. An empty document yields no rows.
std::vector<EncodedRow> encode_chunks(std::span<const TokenId> ids, std::size_t seq_len);

struct MaskedBatch {
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::vector<TokenId> token_ids;            // batch_size x seq_len, row-major, after corruption
    std::vector<std::uint8_t> attention_mask;  // batch_size x seq_len
    std::vector<std::vector<std::int32_t>> mlm_positions;
    std::vector<std::vector<TokenId>> mlm_targets;
    std::optional<std::vector<int>> labels;  // present iff origin == internal
    Origin origin = Origin::internal;

    TokenId token(std::size_t row, std::size_t pos) const { return token_ids[row * seq_len + pos]; }
    bool attends(std::size_t row, std::size_t pos) const { return attention_mask[row * seq_len + pos] != 0; }
    std::size_t num_masked() const;

    friend bool operator==(const MaskedBatch&, const MaskedBatch&) = default;
};

struct MaskingConfig {
    double mask_prob = 0.15;
    double replace_with_mask = 0.8;
    double replace_with_random = 0.1;
};

struct MaskResult {
    std::vector<std::int32_t> positions;
    std::vector<TokenId> targets;
};

/// BERT-style corruption of `row` in place. Positions holding a special token
/// ([PAD], [UNK], [CLS], [SEP], [MASK]) are never selected. Random replacements are drawn uniformly from the
/// non-special ids [kNumSpecial, vocab_size).
MaskResult apply_mlm_mask(std::span<TokenId> row, std::size_t vocab_size, const MaskingConfig& cfg, std::mt19937_64& rng);
MaskResult apply_mlm_mask(std::span<TokenId> row, std::size_t vocab_size, const MaskingConfig& cfg, std::uint64_t seed);

enum class PlanMode : std::uint8_t { normal, external_only };

/// Stage-1 batch schedule: rho1 external batches followed by one internal
/// batch, repeated. rho1 = 0 means every batch is internal.
struct InterleavePlan {
    std::int64_t rho1 = 0;
    PlanMode mode = PlanMode::normal;
    std::int64_t total_steps = 0;
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::uint64_t seed = 0;

    std::vector<Origin> cycle() const;
    Origin origin_at(std::int64_t step) const;
    /// Number of internal batches among steps [0, step).
    std::int64_t internal_before(std::int64_t step) const;
    std::int64_t internal_count() const { return internal_before(total_steps); }
};

InterleavePlan make_plan(std::int64_t rho1, std::int64_t steps, std::size_t batch_size, std::size_t seq_len,
                         PlanMode mode, std::uint64_t seed);

/// Visits a pool in a fresh seeded permutation every epoch; draw n of the
/// stream maps to permutation(n / size)[n % size].
class EpochIterator {
public:
    EpochIterator(std::size_t pool_size, std::uint64_t seed) : size_(pool_size), seed_(seed) {}
    std::size_t at(std::uint64_t draw) const;
    std::size_t pool_size() const noexcept { return size_; }

private:
    std::size_t size_;
    std::uint64_t seed_;
    mutable std::uint64_t cached_epoch_ = ~std::uint64_t{0};
    mutable std::vector<std::size_t> perm_;
};

struct RowPool {
    std::vector<EncodedRow> rows;
    std::vector<int> labels;  // parallel to rows for internal pools, empty otherwise
};

/// Deterministic batch source. next_batch(step) is a pure function of the
/// constructor arguments and `step`, so batches may be produced in any order.
class BatchStream {
public:
    /// `data_seed` drives epoch shuffles; `mask_seed` drives corruption.
    /// mask = false yields uncorrupted batches with no MLM targets.
    BatchStream(InterleavePlan plan, const RowPool& internal, const RowPool& external, std::size_t vocab_size,
                std::uint64_t data_seed, std::uint64_t mask_seed, bool mask = true, MaskingConfig masking = {});

    MaskedBatch next_batch(std::int64_t step) const;
    const InterleavePlan& plan() const noexcept { return plan_; }

private:
    InterleavePlan plan_;
    const RowPool* internal_;
    const RowPool* external_;
    std::size_t vocab_size_;
    std::uint64_t mask_seed_;
    bool mask_;
    MaskingConfig masking_;
    EpochIterator internal_iter_;
    EpochIterator external_iter_;
};

/// Unmasked internal batch over rows [begin, end) of `pool`, in order.
MaskedBatch make_eval_batch(const RowPool& pool, std::size_t begin, std::size_t end);

/// Writes one JSON object per batch (debug inspection).
void dump_batches_jsonl(const BatchStream& stream, std::int64_t count, std::ostream& out);

}  // namespace tlm
