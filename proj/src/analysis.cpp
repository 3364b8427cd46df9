#include "tlm/analysis.hpp"

#include <ostream>

#include <json.hpp>

#include "tlm/datapipe.hpp"
#include "tlm/error.hpp"
#include "tlm/tokenizer.hpp"

namespace tlm {

std::string to_string(HeadCategory c) {
    switch (c) {
        case HeadCategory::positional: return "positional";
        case HeadCategory::vertical: return "vertical";
        case HeadCategory::other: return "other";
    }
    return "other";
}

AttentionProfile classify_heads(const AttentionTensor& attention, std::span<const TokenId> token_ids,
                                std::span<const std::uint8_t> attention_mask, const Vocabulary& vocab) {
    const std::size_t len = token_ids.size();
    if (attention_mask.size() != len) throw PreconditionError("attention mask length differs from token count");
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < len; ++i) {
        if (attention_mask[i] != 0) live.push_back(i);
    }
    if (live.size() < 3) throw PreconditionError("probe needs at least 3 non-pad positions");

    auto is_special = [&](TokenId id) {
        return id == Vocabulary::kCls || id == Vocabulary::kSep || id == vocab.period_id();
    };

    AttentionProfile profile;
    profile.layers = attention.size();
    profile.heads_per_layer = attention.empty() ? 0 : attention.front().size();
    for (auto i : live) profile.token_ids.push_back(token_ids[i]);

    for (std::size_t l = 0; l < attention.size(); ++l) {
        for (std::size_t h = 0; h < attention[l].size(); ++h) {
            const auto& m = attention[l][h];
            if (static_cast<std::size_t>(m.rows()) != len || static_cast<std::size_t>(m.cols()) != len) {
                throw PreconditionError("attention map shape differs from probe length");
            }
            std::size_t adjacent = 0, special = 0;
            for (auto q : live) {
                std::size_t best = live.front();
                for (auto k : live) {
                    if (m(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k)) >
                        m(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(best))) {
                        best = k;
                    }
                }
                if ((best > q ? best - q : q - best) == 1) ++adjacent;
                if (is_special(token_ids[best])) ++special;
            }
            HeadStats stats;
            stats.layer = l;
            stats.head = h;
            stats.fraction_adjacent = static_cast<double>(adjacent) / static_cast<double>(live.size());
            stats.fraction_special = static_cast<double>(special) / static_cast<double>(live.size());
            if (stats.fraction_adjacent >= 0.9) {
                stats.category = HeadCategory::positional;
            } else if (stats.fraction_special > 0.9) {
                stats.category = HeadCategory::vertical;
            }
            stats.map = m;
            profile.heads.push_back(std::move(stats));
        }
    }
    return profile;
}

template <typename T>
AttentionProfile classify_heads(const ForwardOutput<T>& output, const MaskedBatch& batch, const Vocabulary& vocab) {
    if (batch.batch_size != 1) throw PreconditionError("head classification expects a single-sequence probe");
    AttentionTensor tensor(output.attention.size());
    for (std::size_t l = 0; l < output.attention.size(); ++l) {
        for (std::size_t h = 0; h < output.heads; ++h) {
            tensor[l].push_back(output.attention_map(l, h, 0).template cast<double>());
        }
    }
    return classify_heads(tensor, batch.token_ids, batch.attention_mask, vocab);
}

template AttentionProfile classify_heads<float>(const ForwardOutput<float>&, const MaskedBatch&, const Vocabulary&);
template AttentionProfile classify_heads<double>(const ForwardOutput<double>&, const MaskedBatch&, const Vocabulary&);

AttentionProfile probe_checkpoint(const Checkpoint& ckpt, const std::string& sentence, const std::string& tag) {
    const auto ids = ckpt.vocab.encode(tokenize(sentence));
    const std::size_t seq_len = std::min(ckpt.config.max_seq_len, ids.size() + 2);
    RowPool pool;
    pool.rows.push_back(encode_sequence(ids, std::max<std::size_t>(seq_len, 3)));
    pool.labels.push_back(0);
    const auto batch = make_eval_batch(pool, 0, 1);
    const auto out = forward(ckpt.params, ckpt.config, batch);
    auto profile = classify_heads(out, batch, ckpt.vocab);
    profile.tag = tag;
    return profile;
}

std::map<std::string, CensusCounts> head_census(std::span<const AttentionProfile> profiles) {
    std::map<std::string, CensusCounts> census;
    for (const auto& p : profiles) {
        auto& c = census[p.tag];
        for (const auto& h : p.heads) {
            switch (h.category) {
                case HeadCategory::positional: ++c.positional; break;
                case HeadCategory::vertical: ++c.vertical; break;
                case HeadCategory::other: ++c.other; break;
            }
        }
    }
    return census;
}

void export_heads_jsonl(const AttentionProfile& profile, std::ostream& out) {
    for (const auto& h : profile.heads) {
        nlohmann::json matrix = nlohmann::json::array();
        for (Eigen::Index r = 0; r < h.map.rows(); ++r) {
            matrix.push_back(std::vector<double>(h.map.row(r).data(), h.map.row(r).data() + h.map.cols()));
        }
        out << nlohmann::json{{"tag", profile.tag},
                              {"layer", h.layer},
                              {"head", h.head},
                              {"category", to_string(h.category)},
                              {"fraction_adjacent", h.fraction_adjacent},
                              {"fraction_special", h.fraction_special},
                              {"tokens", profile.token_ids},
                              {"matrix", std::move(matrix)}}
                   .dump()
            << '\n';
    }
}

}  // namespace tlm
