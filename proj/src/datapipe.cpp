#include "tlm/datapipe.hpp"

#include <numeric>
#include <ostream>

#include <json.hpp>

#include "tlm/error.hpp"

namespace tlm {

std::string to_string(Origin o) { return o == Origin::internal ? "internal" : "external"; }

namespace {

EncodedRow encode_span(std::span<const TokenId> ids, std::size_t seq_len) {
    EncodedRow row;
    row.ids.assign(seq_len, Vocabulary::kPad);
    row.attention.assign(seq_len, 0);
    row.ids[0] = Vocabulary::kCls;
    std::copy(ids.begin(), ids.end(), row.ids.begin() + 1);
    row.ids[ids.size() + 1] = Vocabulary::kSep;
    std::fill_n(row.attention.begin(), ids.size() + 2, std::uint8_t{1});
    return row;
}

void check_seq_len(std::size_t seq_len) {
    if (seq_len < 3) throw PreconditionError("seq_len must be >= 3");
}

std::mt19937_64 row_rng(std::uint64_t seed, std::int64_t step, std::size_t row) {
    const auto s = static_cast<std::uint64_t>(step);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                      static_cast<std::uint32_t>(row)};
    return std::mt19937_64(seq);
}

// Fixed offset so the two pools shuffle independently under one data seed.
constexpr std::uint64_t kExternalStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

EncodedRow encode_sequence(std::span<const TokenId> ids, std::size_t seq_len) {
    check_seq_len(seq_len);
    return encode_span(ids.first(std::min(ids.size(), seq_len - 2)), seq_len);
}

std::vector<EncodedRow> encode_chunks(std::span<const TokenId> ids, std::size_t seq_len) {
    check_seq_len(seq_len);
    const std::size_t chunk = seq_len - 2;
    std::vector<EncodedRow> rows;
    for (std::size_t off = 0; off < ids.size(); off += chunk) {
        rows.push_back(encode_span(ids.subspan(off, std::min(chunk, ids.size() - off)), seq_len));
    }
    return rows;
}

std::size_t MaskedBatch::num_masked() const {
    std::size_t n = 0;
    for (const auto& p : mlm_positions) n += p.size();
    return n;
}

MaskResult apply_mlm_mask(std::span<TokenId> row, std::size_t vocab_size, const MaskingConfig& cfg, std::mt19937_64& rng) {
    MaskResult out;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool can_randomize = vocab_size > static_cast<std::size_t>(Vocabulary::kNumSpecial);
    std::uniform_int_distribution<TokenId> random_token(Vocabulary::kNumSpecial,
                                                        can_randomize ? static_cast<TokenId>(vocab_size - 1)
                                                                      : Vocabulary::kNumSpecial);
    for (std::size_t i = 0; i < row.size(); ++i) {
        const TokenId id = row[i];
        if (Vocabulary::is_special(id)) continue;
        if (unit(rng) >= cfg.mask_prob) continue;
        out.positions.push_back(static_cast<std::int32_t>(i));
        out.targets.push_back(id);
        const double r = unit(rng);
        if (r < cfg.replace_with_mask) {
            row[i] = Vocabulary::kMask;
        } else if (r < cfg.replace_with_mask + cfg.replace_with_random) {
            if (can_randomize) row[i] = random_token(rng);
        }
    }
    return out;
}

MaskResult apply_mlm_mask(std::span<TokenId> row, std::size_t vocab_size, const MaskingConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return apply_mlm_mask(row, vocab_size, cfg, rng);
}

std::vector<Origin> InterleavePlan::cycle() const {
    if (mode == PlanMode::external_only) return {Origin::external};
    std::vector<Origin> c(static_cast<std::size_t>(rho1), Origin::external);
    c.push_back(Origin::internal);
    return c;
}

Origin InterleavePlan::origin_at(std::int64_t step) const {
    if (mode == PlanMode::external_only) return Origin::external;
    return (step % (rho1 + 1)) == rho1 ? Origin::internal : Origin::external;
}

std::int64_t InterleavePlan::internal_before(std::int64_t step) const {
    if (mode == PlanMode::external_only) return 0;
    return step / (rho1 + 1);
}

InterleavePlan make_plan(std::int64_t rho1, std::int64_t steps, std::size_t batch_size, std::size_t seq_len,
                         PlanMode mode, std::uint64_t seed) {
    if (steps < 1) throw PreconditionError("steps must be >= 1");
    if (rho1 < 0) throw PreconditionError("rho1 must be >= 0");
    if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
    check_seq_len(seq_len);
    return InterleavePlan{rho1, mode, steps, batch_size, seq_len, seed};
}

std::size_t EpochIterator::at(std::uint64_t draw) const {
    const std::uint64_t epoch = draw / size_;
    if (epoch != cached_epoch_) {
        perm_.resize(size_);
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        std::mt19937_64 rng(seed_ ^ epoch);
        std::shuffle(perm_.begin(), perm_.end(), rng);
        cached_epoch_ = epoch;
    }
    return perm_[draw % size_];
}

BatchStream::BatchStream(InterleavePlan plan, const RowPool& internal, const RowPool& external, std::size_t vocab_size,
                         std::uint64_t data_seed, std::uint64_t mask_seed, bool mask, MaskingConfig masking)
    : plan_(plan),
      internal_(&internal),
      external_(&external),
      vocab_size_(vocab_size),
      mask_seed_(mask_seed),
      mask_(mask),
      masking_(masking),
      internal_iter_(std::max<std::size_t>(internal.rows.size(), 1), data_seed),
      external_iter_(std::max<std::size_t>(external.rows.size(), 1), data_seed ^ kExternalStream) {
    if (plan_.mode == PlanMode::normal && internal.rows.empty()) throw PreconditionError("internal data is empty");
    if (internal.labels.size() != internal.rows.size()) throw PreconditionError("internal pool needs one label per row");
    const bool needs_external = plan_.mode == PlanMode::external_only || plan_.rho1 > 0;
    if (needs_external && external.rows.empty()) throw PreconditionError("external data is empty");
    for (const auto* pool : {internal_, external_}) {
        for (const auto& r : pool->rows) {
            if (r.ids.size() != plan_.seq_len) throw PreconditionError("pool row length differs from plan seq_len");
        }
    }
}

MaskedBatch BatchStream::next_batch(std::int64_t step) const {
    if (step < 0 || step >= plan_.total_steps) throw PreconditionError("step index out of range");
    MaskedBatch b;
    b.origin = plan_.origin_at(step);
    b.batch_size = plan_.batch_size;
    b.seq_len = plan_.seq_len;
    b.token_ids.resize(b.batch_size * b.seq_len);
    b.attention_mask.resize(b.batch_size * b.seq_len);
    b.mlm_positions.resize(b.batch_size);
    b.mlm_targets.resize(b.batch_size);

    const bool internal = b.origin == Origin::internal;
    const RowPool& pool = internal ? *internal_ : *external_;
    const EpochIterator& iter = internal ? internal_iter_ : external_iter_;
    const std::int64_t prior = internal ? plan_.internal_before(step) : step - plan_.internal_before(step);
    const auto first_draw = static_cast<std::uint64_t>(prior) * plan_.batch_size;
    if (internal) b.labels.emplace();

    for (std::size_t r = 0; r < b.batch_size; ++r) {
        const std::size_t src = iter.at(first_draw + r);
        const EncodedRow& row = pool.rows[src];
        std::span<TokenId> dst(b.token_ids.data() + r * b.seq_len, b.seq_len);
        std::copy(row.ids.begin(), row.ids.end(), dst.begin());
        std::copy(row.attention.begin(), row.attention.end(), b.attention_mask.begin() + static_cast<std::ptrdiff_t>(r * b.seq_len));
        if (internal) b.labels->push_back(pool.labels[src]);
        if (mask_) {
            auto rng = row_rng(mask_seed_, step, r);
            auto m = apply_mlm_mask(dst, vocab_size_, masking_, rng);
            b.mlm_positions[r] = std::move(m.positions);
            b.mlm_targets[r] = std::move(m.targets);
        }
    }
    return b;
}

MaskedBatch make_eval_batch(const RowPool& pool, std::size_t begin, std::size_t end) {
    if (begin >= end || end > pool.rows.size()) throw PreconditionError("bad evaluation range");
    MaskedBatch b;
    b.origin = Origin::internal;
    b.batch_size = end - begin;
    b.seq_len = pool.rows[begin].ids.size();
    b.mlm_positions.resize(b.batch_size);
    b.mlm_targets.resize(b.batch_size);
    b.labels.emplace();
    for (std::size_t i = begin; i < end; ++i) {
        b.token_ids.insert(b.token_ids.end(), pool.rows[i].ids.begin(), pool.rows[i].ids.end());
        b.attention_mask.insert(b.attention_mask.end(), pool.rows[i].attention.begin(), pool.rows[i].attention.end());
        b.labels->push_back(pool.labels.empty() ? 0 : pool.labels[i]);
    }
    return b;
}

void dump_batches_jsonl(const BatchStream& stream, std::int64_t count, std::ostream& out) {
    const auto n = std::min(count, stream.plan().total_steps);
    for (std::int64_t s = 0; s < n; ++s) {
        auto b = stream.next_batch(s);
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < b.batch_size; ++r) {
            auto first = b.token_ids.begin() + static_cast<std::ptrdiff_t>(r * b.seq_len);
            nlohmann::json row = {{"ids", std::vector<TokenId>(first, first + static_cast<std::ptrdiff_t>(b.seq_len))},
                                  {"mlm_positions", b.mlm_positions[r]},
                                  {"mlm_targets", b.mlm_targets[r]}};
            if (b.labels) row["label"] = (*b.labels)[r];
            rows.push_back(std::move(row));
        }
        out << nlohmann::json{{"step", s}, {"origin", to_string(b.origin)}, {"rows", std::move(rows)}}.dump() << '\n';
    }
}

}  // namespace tlm
