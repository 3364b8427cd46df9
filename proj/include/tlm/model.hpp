#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tlm/datapipe.hpp"

namespace tlm {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden = 128;
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t ffn = 0;  // 0 means 4 * hidden
    std::size_t max_seq_len = 128;
    std::size_t num_classes = 2;
    double dropout = 0.0;

    std::size_t ffn_size() const noexcept { return ffn == 0 ? 4 * hidden : ffn; }
    std::size_t head_dim() const noexcept { return hidden / heads; }
    /// Throws ConfigError when a size is zero, hidden % heads != 0, or dropout != 0.
    void validate() const;
    /// Number of learnable scalars in ModelParams for this config.
    std::uint64_t num_params() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Weight matrices are stored input-major (in x out), so a linear layer is
/// x * W + b on row-vector activations.
template <typename T>
struct LayerParams {
    Matrix<T> wq, wk, wv, wo;
    RowVector<T> bq, bk, bv, bo;
    RowVector<T> ln1_gamma, ln1_beta;
    Matrix<T> w1;
    RowVector<T> b1;
    Matrix<T> w2;
    RowVector<T> b2;
    RowVector<T> ln2_gamma, ln2_beta;
};

template <typename T>
struct ModelParams {
    Matrix<T> token_embedding;     // V x H
    Matrix<T> position_embedding;  // max_seq_len x H
    std::vector<LayerParams<T>> layers;
    Matrix<T> lm_weight;  // H x V
    RowVector<T> lm_bias;
    Matrix<T> cls_weight;  // H x |Y|
    RowVector<T> cls_bias;

    /// Correctly shaped, all zeros.
    static ModelParams zeros(const ModelConfig& config);
};

/// Calls f(name, tensor_of_each_argument...) for every tensor in declaration
/// order. All arguments must share one config. This order is also the
/// checkpoint order.
template <typename F, typename First, typename... Rest>
void for_each_tensor(F&& f, First& first, Rest&... rest) {
    f(std::string("token_embedding"), first.token_embedding, rest.token_embedding...);
    f(std::string("position_embedding"), first.position_embedding, rest.position_embedding...);
    for (std::size_t l = 0; l < first.layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        f(p + "wq", first.layers[l].wq, rest.layers[l].wq...);
        f(p + "bq", first.layers[l].bq, rest.layers[l].bq...);
        f(p + "wk", first.layers[l].wk, rest.layers[l].wk...);
        f(p + "bk", first.layers[l].bk, rest.layers[l].bk...);
        f(p + "wv", first.layers[l].wv, rest.layers[l].wv...);
        f(p + "bv", first.layers[l].bv, rest.layers[l].bv...);
        f(p + "wo", first.layers[l].wo, rest.layers[l].wo...);
        f(p + "bo", first.layers[l].bo, rest.layers[l].bo...);
        f(p + "ln1_gamma", first.layers[l].ln1_gamma, rest.layers[l].ln1_gamma...);
        f(p + "ln1_beta", first.layers[l].ln1_beta, rest.layers[l].ln1_beta...);
        f(p + "w1", first.layers[l].w1, rest.layers[l].w1...);
        f(p + "b1", first.layers[l].b1, rest.layers[l].b1...);
        f(p + "w2", first.layers[l].w2, rest.layers[l].w2...);
        f(p + "b2", first.layers[l].b2, rest.layers[l].b2...);
        f(p + "ln2_gamma", first.layers[l].ln2_gamma, rest.layers[l].ln2_gamma...);
        f(p + "ln2_beta", first.layers[l].ln2_beta, rest.layers[l].ln2_beta...);
    }
    f(std::string("lm_weight"), first.lm_weight, rest.lm_weight...);
    f(std::string("lm_bias"), first.lm_bias, rest.lm_bias...);
    f(std::string("cls_weight"), first.cls_weight, rest.cls_weight...);
    f(std::string("cls_bias"), first.cls_bias, rest.cls_bias...);
}

template <typename U, typename T>
ModelParams<U> cast_params(const ModelParams<T>& src) {
    ModelParams<U> dst;
    dst.layers.resize(src.layers.size());
    for_each_tensor([](const std::string&, auto& d, const auto& s) { d = s.template cast<U>(); }, dst, src);
    return dst;
}

/// Truncated normal (sigma 0.02, cut at 3 sigma) weights and embeddings, zero
/// biases, layernorm scale 1 and shift 0. Deterministic in `seed`.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
struct LayerCache {
    Matrix<T> input;  // N x H
    Matrix<T> q, k, v, context;
    Matrix<T> ln1_xhat, x1;
    std::vector<T> ln1_rstd;
    Matrix<T> ffn_pre, ffn_act;
    Matrix<T> ln2_xhat;
    std::vector<T> ln2_rstd;
};

template <typename T>
struct ForwardOutput {
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::size_t heads = 0;
    Matrix<T> hidden;      // (B*L) x H, final layer
    Matrix<T> mlm_hidden;  // M x H, final hidden rows at masked positions
    Matrix<T> mlm_logits;  // M x V, rows follow batch.mlm_positions row by row
    Matrix<T> cls_logits;  // B x |Y|, read from position 0
    /// Per layer, (B*A*L) x L softmax weights; row ((b*A + h)*L + i) is query i
    /// of sequence b in head h.
    std::vector<Matrix<T>> attention;
    std::vector<LayerCache<T>> cache;

    auto attention_map(std::size_t layer, std::size_t head, std::size_t row) const {
        const auto first = static_cast<Eigen::Index>((row * heads + head) * seq_len);
        const auto l = static_cast<Eigen::Index>(seq_len);
        return attention[layer].block(first, 0, l, l);
    }
};

/// Post-layernorm BERT encoder: token + learned position embeddings, then
/// self-attention (pad keys masked out) and a GELU feed-forward block per
/// layer, each followed by residual add and layernorm.
template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const ModelConfig& config, const MaskedBatch& batch);

struct LossBreakdown {
    double total = 0.0;
    double mlm = 0.0;   // mean cross-entropy over masked positions, 0 if none
    double task = 0.0;  // mean cross-entropy of the CLS head, internal batches only
    std::size_t masked = 0;
};

/// External batches: loss = mlm. Internal batches: loss = rho2 * mlm + task.
template <typename T>
LossBreakdown joint_loss(const ForwardOutput<T>& output, const MaskedBatch& batch, double rho2);

/// Exact gradients of joint_loss with respect to every parameter. `grads` is
/// overwritten. Returns the loss that was differentiated.
template <typename T>
LossBreakdown backward(const ModelParams<T>& params, const ModelConfig& config, const MaskedBatch& batch,
                       const ForwardOutput<T>& output, double rho2, ModelParams<T>& grads);

template <typename T>
LossBreakdown loss_and_gradients(const ModelParams<T>& params, const ModelConfig& config, const MaskedBatch& batch,
                                 double rho2, ModelParams<T>& grads) {
    auto out = forward(params, config, batch);
    return backward(params, config, batch, out, rho2, grads);
}

/// Predicted class per row (argmax of the CLS logits, ties to the lower id).
template <typename T>
std::vector<int> predict(const ForwardOutput<T>& output);

}  // namespace tlm
