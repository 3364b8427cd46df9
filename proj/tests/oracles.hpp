#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tlm/corpus.hpp"
#include "tlm/inverted_index.hpp"
#include "tlm/model.hpp"
#include "tlm/tokenizer.hpp"

namespace tlm::oracle {

/// BM25 scored document by document straight from token lists.
class BruteForceBm25 {
public:
    explicit BruteForceBm25(const DocumentStore& store, double k1 = 1.2, double b = 0.75) : k1_(k1), b_(b) {
        double total = 0.0;
        for (const auto& d : store.documents()) {
            docs_.push_back({d.doc_id, words(d)});
            total += static_cast<double>(docs_.back().words.size());
            for (const auto& t : std::set<std::string>(docs_.back().words.begin(), docs_.back().words.end())) df_[t] += 1.0;
        }
        n_ = static_cast<double>(docs_.size());
        avgdl_ = total / n_;
    }

    static std::vector<std::string> words(const Document& d) {
        std::vector<std::string> out;
        for (const auto& t : d.tokens) {
            if (!is_punctuation_term(t)) out.push_back(t);
        }
        return out;
    }

    std::vector<ScoredDoc> rank(const std::vector<std::string>& query, std::size_t k) const {
        const std::set<std::string> distinct(query.begin(), query.end());
        std::vector<ScoredDoc> all;
        for (const auto& d : docs_) {
            const double dl = static_cast<double>(d.words.size());
            double score = 0.0;
            for (const auto& t : distinct) {
                const double tf = static_cast<double>(std::count(d.words.begin(), d.words.end(), t));
                if (tf == 0.0) continue;
                const double df = df_.at(t);
                const double idf = std::log(1.0 + (n_ - df + 0.5) / (df + 0.5));
                score += idf * tf * (k1_ + 1.0) / (tf + k1_ * (1.0 - b_ + b_ * dl / avgdl_));
            }
            if (score > 0.0) all.push_back({d.id, score});
        }
        std::sort(all.begin(), all.end(), [](const ScoredDoc& x, const ScoredDoc& y) {
            return x.score != y.score ? x.score > y.score : x.doc_id < y.doc_id;
        });
        if (all.size() > k) all.resize(k);
        return all;
    }

private:
    struct Doc {
        DocId id;
        std::vector<std::string> words;
    };
    std::vector<Doc> docs_;
    std::map<std::string, double> df_;
    double n_ = 0.0, avgdl_ = 0.0, k1_, b_;
};

struct GradientCheck {
    double max_rel = 0.0;
    std::size_t coordinates = 0;
    std::set<std::string> tensors;  // names of the tensors sampled
    std::string worst;
    std::size_t floored = 0;  // coordinates where both values fall below the floor
};

/// Central differences of joint_loss against loss_and_gradients at sampled
/// coordinates of every tensor (4 + size/16 per tensor). The relative error
/// floors its denominator: the key-bias gradient is exactly zero (it cancels
/// in the softmax), and there the numeric estimate is pure roundoff of order
/// eps * |loss| / h, about 1.4e-10 for a loss near 82 at h = 1e-4. A floor of
/// 1e-5 keeps that noise a decade under a 1e-4 tolerance.
inline GradientCheck finite_difference_check(ModelParams<double> params, const ModelConfig& config,
                                             const MaskedBatch& batch, double rho2, double h, std::uint64_t seed,
                                             double floor = 1e-5) {
    ModelParams<double> grads;
    loss_and_gradients(params, config, batch, rho2, grads);
    auto loss_at = [&] { return joint_loss(forward(params, config, batch), batch, rho2).total; };
    std::mt19937_64 rng(seed);
    GradientCheck out;
    for_each_tensor(
        [&](const std::string& name, auto& t, const auto& g) {
            const auto n = static_cast<std::size_t>(t.size());
            const std::size_t take = std::min<std::size_t>(n, 4 + n / 16);
            for (std::size_t s = 0; s < take; ++s) {
                const auto i = static_cast<Eigen::Index>(rng() % n);
                const double orig = t.data()[i];
                t.data()[i] = orig + h;
                const double up = loss_at();
                t.data()[i] = orig - h;
                const double down = loss_at();
                t.data()[i] = orig;
                const double numeric = (up - down) / (2 * h);
                const double analytic = g.data()[i];
                const double rel =
                    std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
                if (std::max(std::abs(analytic), std::abs(numeric)) < floor) ++out.floored;
                if (rel >= out.max_rel) {
                    out.max_rel = rel;
                    out.worst = name + "[" + std::to_string(i) + "]";
                }
                ++out.coordinates;
            }
            out.tensors.insert(name);
        },
        params, grads);
    return out;
}

}  // namespace tlm::oracle
