#include "tlm/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <type_traits>

#include "tlm/error.hpp"

namespace tlm {

using Eigen::Index;

namespace {

constexpr double kLayerNormEps = 1e-12;

Index idx(std::size_t v) { return static_cast<Index>(v); }

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <typename T>
void linear(const Matrix<T>& x, const Matrix<T>& w, const RowVector<T>& b, Matrix<T>& out) {
    out.noalias() = x * w;
    out.rowwise() += b;
}

template <typename T>
void layer_norm(const Matrix<T>& x, const RowVector<T>& gamma, const RowVector<T>& beta, Matrix<T>& xhat,
                std::vector<T>& rstd, Matrix<T>& out) {
    const Index n = x.rows();
    const T width = T(x.cols());
    xhat.resize(n, x.cols());
    out.resize(n, x.cols());
    rstd.resize(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) {
        const T mean = x.row(r).sum() / width;
        const T var = (x.row(r).array() - mean).square().sum() / width;
        const T inv = T(1) / std::sqrt(var + T(kLayerNormEps));
        rstd[static_cast<std::size_t>(r)] = inv;
        xhat.row(r) = (x.row(r).array() - mean) * inv;
        out.row(r) = xhat.row(r).cwiseProduct(gamma) + beta;
    }
}

// Returns dx; accumulates dgamma/dbeta.
template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& xhat, const std::vector<T>& rstd,
                              const RowVector<T>& gamma, RowVector<T>& dgamma, RowVector<T>& dbeta) {
    dgamma += dy.cwiseProduct(xhat).colwise().sum();
    dbeta += dy.colwise().sum();
    Matrix<T> dx(dy.rows(), dy.cols());
    const T width = T(dy.cols());
    for (Index r = 0; r < dy.rows(); ++r) {
        const RowVector<T> dxhat = dy.row(r).cwiseProduct(gamma);
        const T mean_d = dxhat.sum() / width;
        const T mean_dx = dxhat.cwiseProduct(xhat.row(r)).sum() / width;
        dx.row(r) = (dxhat.array() - mean_d - xhat.row(r).array() * mean_dx) * rstd[static_cast<std::size_t>(r)];
    }
    return dx;
}

template <typename T>
void softmax_rows(Matrix<T>& m) {
    for (Index r = 0; r < m.rows(); ++r) {
        const T mx = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - mx).exp();
        m.row(r) /= m.row(r).sum();
    }
}

// Mean cross-entropy of `logits` against `targets`; when `dlogits` is given it
// receives scale * d(mean CE)/d(logits).
template <typename T>
double cross_entropy(const Matrix<T>& logits, const std::vector<int>& targets, Matrix<T>* dlogits, double scale) {
    const Index n = logits.rows();
    if (n == 0) return 0.0;
    double total = 0.0;
    if (dlogits != nullptr) dlogits->resize(n, logits.cols());
    for (Index r = 0; r < n; ++r) {
        const double mx = static_cast<double>(logits.row(r).maxCoeff());
        double sum = 0.0;
        for (Index c = 0; c < logits.cols(); ++c) sum += std::exp(static_cast<double>(logits(r, c)) - mx);
        const double lse = mx + std::log(sum);
        const auto t = static_cast<Index>(targets[static_cast<std::size_t>(r)]);
        total += lse - static_cast<double>(logits(r, t));
        if (dlogits != nullptr) {
            const double coef = scale / static_cast<double>(n);
            for (Index c = 0; c < logits.cols(); ++c) {
                const double p = std::exp(static_cast<double>(logits(r, c)) - lse);
                (*dlogits)(r, c) = static_cast<T>(coef * (p - (c == t ? 1.0 : 0.0)));
            }
        }
    }
    return total / static_cast<double>(n);
}

std::vector<int> flat_mlm_targets(const MaskedBatch& batch) {
    std::vector<int> out;
    for (const auto& row : batch.mlm_targets) out.insert(out.end(), row.begin(), row.end());
    return out;
}

void check_batch(const MaskedBatch& batch, const ModelConfig& config) {
    if (batch.seq_len == 0 || batch.batch_size == 0) throw PreconditionError("empty batch");
    if (batch.seq_len > config.max_seq_len) throw PreconditionError("batch sequence length exceeds max_seq_len");
    if (batch.token_ids.size() != batch.batch_size * batch.seq_len ||
        batch.attention_mask.size() != batch.token_ids.size()) {
        throw PreconditionError("batch tensor sizes inconsistent");
    }
    for (auto id : batch.token_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
            throw PreconditionError("token id out of range: " + std::to_string(id));
        }
    }
    for (std::size_t r = 0; r < batch.batch_size; ++r) {
        if (!batch.attends(r, 0)) throw PreconditionError("row " + std::to_string(r) + " has no attended position 0");
        if (batch.mlm_positions[r].size() != batch.mlm_targets[r].size()) throw PreconditionError("mlm targets/positions mismatch");
        for (auto p : batch.mlm_positions[r]) {
            if (p < 0 || static_cast<std::size_t>(p) >= batch.seq_len) throw PreconditionError("mlm position out of range");
        }
        for (auto t : batch.mlm_targets[r]) {
            if (t < 0 || static_cast<std::size_t>(t) >= config.vocab_size) throw PreconditionError("mlm target out of range");
        }
    }
    if (batch.labels) {
        for (int y : *batch.labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= config.num_classes) throw PreconditionError("label out of range");
        }
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size == 0 || hidden == 0 || layers == 0 || heads == 0 || max_seq_len == 0 || num_classes == 0) {
        throw ConfigError("model sizes must all be >= 1");
    }
    if (hidden % heads != 0) throw ConfigError("hidden size must be divisible by the number of heads");
    if (dropout != 0.0) throw ConfigError("dropout is not supported (must be 0)");
}

std::uint64_t ModelConfig::num_params() const {
    const std::uint64_t h = hidden, f = ffn_size(), v = vocab_size;
    const std::uint64_t per_layer = 4 * (h * h + h) + 2 * h + (h * f + f) + (f * h + h) + 2 * h;
    return v * h + max_seq_len * h + layers * per_layer + (h * v + v) + (h * num_classes + num_classes);
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& c) {
    const Index h = idx(c.hidden), f = idx(c.ffn_size()), v = idx(c.vocab_size), y = idx(c.num_classes);
    ModelParams p;
    p.token_embedding = Matrix<T>::Zero(v, h);
    p.position_embedding = Matrix<T>::Zero(idx(c.max_seq_len), h);
    p.layers.resize(c.layers);
    for (auto& l : p.layers) {
        for (auto* w : {&l.wq, &l.wk, &l.wv, &l.wo}) *w = Matrix<T>::Zero(h, h);
        for (auto* b : {&l.bq, &l.bk, &l.bv, &l.bo, &l.ln1_gamma, &l.ln1_beta, &l.b2, &l.ln2_gamma, &l.ln2_beta}) {
            *b = RowVector<T>::Zero(h);
        }
        l.w1 = Matrix<T>::Zero(h, f);
        l.b1 = RowVector<T>::Zero(f);
        l.w2 = Matrix<T>::Zero(f, h);
    }
    p.lm_weight = Matrix<T>::Zero(h, v);
    p.lm_bias = RowVector<T>::Zero(v);
    p.cls_weight = Matrix<T>::Zero(h, y);
    p.cls_bias = RowVector<T>::Zero(y);
    return p;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    auto p = ModelParams<T>::zeros(config);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr double sigma = 0.02;
    auto draw = [&] {
        double z;
        do {
            z = normal(rng);
        } while (std::abs(z) > 3.0);
        return static_cast<T>(sigma * z);
    };
    for_each_tensor(
        [&](const std::string& name, auto& t) {
            using Tensor = std::decay_t<decltype(t)>;
            if (name.ends_with("gamma")) {
                t.setOnes();
            } else if constexpr (Tensor::RowsAtCompileTime != 1) {
                for (Index i = 0; i < t.size(); ++i) t.data()[i] = draw();
            }
        },
        p);
    return p;
}

template <typename T>
ForwardOutput<T> forward(const ModelParams<T>& params, const ModelConfig& config, const MaskedBatch& batch) {
    check_batch(batch, config);
    const Index B = idx(batch.batch_size), L = idx(batch.seq_len), H = idx(config.hidden);
    const Index A = idx(config.heads), D = idx(config.head_dim()), N = B * L;
    const T scale = T(1) / std::sqrt(T(D));

    ForwardOutput<T> out;
    out.batch_size = batch.batch_size;
    out.seq_len = batch.seq_len;
    out.heads = config.heads;

    Matrix<T> x(N, H);
    for (Index b = 0; b < B; ++b) {
        for (Index i = 0; i < L; ++i) {
            const auto id = batch.token_ids[static_cast<std::size_t>(b * L + i)];
            x.row(b * L + i) = params.token_embedding.row(id) + params.position_embedding.row(i);
        }
    }

    // Additive key mask per sequence.
    Matrix<T> key_bias = Matrix<T>::Zero(B, L);
    for (Index b = 0; b < B; ++b) {
        for (Index j = 0; j < L; ++j) {
            if (!batch.attends(static_cast<std::size_t>(b), static_cast<std::size_t>(j))) {
                key_bias(b, j) = -std::numeric_limits<T>::infinity();
            }
        }
    }

    out.cache.resize(config.layers);
    out.attention.resize(config.layers);
    Matrix<T> scores(L, L);
    Matrix<T> attn_out, residual;
    for (std::size_t l = 0; l < config.layers; ++l) {
        const auto& P = params.layers[l];
        auto& c = out.cache[l];
        c.input = x;
        linear(x, P.wq, P.bq, c.q);
        linear(x, P.wk, P.bk, c.k);
        linear(x, P.wv, P.bv, c.v);
        c.context.resize(N, H);
        auto& probs = out.attention[l];
        probs.resize(B * A * L, L);
        for (Index b = 0; b < B; ++b) {
            for (Index h = 0; h < A; ++h) {
                const auto q = c.q.block(b * L, h * D, L, D);
                const auto k = c.k.block(b * L, h * D, L, D);
                scores.noalias() = q * k.transpose();
                scores *= scale;
                scores.rowwise() += key_bias.row(b);
                softmax_rows(scores);
                probs.block((b * A + h) * L, 0, L, L) = scores;
                c.context.block(b * L, h * D, L, D).noalias() = scores * c.v.block(b * L, h * D, L, D);
            }
        }
        linear(c.context, P.wo, P.bo, attn_out);
        residual = x + attn_out;
        layer_norm(residual, P.ln1_gamma, P.ln1_beta, c.ln1_xhat, c.ln1_rstd, c.x1);
        linear(c.x1, P.w1, P.b1, c.ffn_pre);
        c.ffn_act = c.ffn_pre.unaryExpr([](T v) { return gelu(v); });
        linear(c.ffn_act, P.w2, P.b2, attn_out);
        residual = c.x1 + attn_out;
        layer_norm(residual, P.ln2_gamma, P.ln2_beta, c.ln2_xhat, c.ln2_rstd, x);
    }
    out.hidden = std::move(x);

    Matrix<T> cls_in(B, H);
    for (Index b = 0; b < B; ++b) cls_in.row(b) = out.hidden.row(b * L);
    linear(cls_in, params.cls_weight, params.cls_bias, out.cls_logits);

    const Index M = idx(batch.num_masked());
    out.mlm_hidden.resize(M, H);
    Index m = 0;
    for (Index b = 0; b < B; ++b) {
        for (auto pos : batch.mlm_positions[static_cast<std::size_t>(b)]) out.mlm_hidden.row(m++) = out.hidden.row(b * L + pos);
    }
    if (M > 0) {
        linear(out.mlm_hidden, params.lm_weight, params.lm_bias, out.mlm_logits);
    } else {
        out.mlm_logits.resize(0, idx(config.vocab_size));
    }
    return out;
}

template <typename T>
LossBreakdown joint_loss(const ForwardOutput<T>& output, const MaskedBatch& batch, double rho2) {
    LossBreakdown loss;
    loss.masked = batch.num_masked();
    loss.mlm = cross_entropy<T>(output.mlm_logits, flat_mlm_targets(batch), nullptr, 1.0);
    if (batch.origin == Origin::external) {
        loss.total = loss.mlm;
        return loss;
    }
    if (!batch.labels) throw PreconditionError("internal batch without labels");
    loss.task = cross_entropy<T>(output.cls_logits, *batch.labels, nullptr, 1.0);
    loss.total = rho2 * loss.mlm + loss.task;
    return loss;
}

template <typename T>
LossBreakdown backward(const ModelParams<T>& params, const ModelConfig& config, const MaskedBatch& batch,
                       const ForwardOutput<T>& output, double rho2, ModelParams<T>& grads) {
    const bool internal = batch.origin == Origin::internal;
    if (internal && !batch.labels) throw PreconditionError("internal batch without labels");
    const Index B = idx(batch.batch_size), L = idx(batch.seq_len), H = idx(config.hidden);
    const Index A = idx(config.heads), D = idx(config.head_dim()), N = B * L;
    const T scale = T(1) / std::sqrt(T(D));

    grads = ModelParams<T>::zeros(config);
    LossBreakdown loss;
    loss.masked = batch.num_masked();
    Matrix<T> dhidden = Matrix<T>::Zero(N, H);

    const double mlm_weight = internal ? rho2 : 1.0;
    if (loss.masked > 0) {
        Matrix<T> dlogits;
        loss.mlm = cross_entropy<T>(output.mlm_logits, flat_mlm_targets(batch), &dlogits, mlm_weight);
        grads.lm_weight.noalias() = output.mlm_hidden.transpose() * dlogits;
        grads.lm_bias = dlogits.colwise().sum();
        const Matrix<T> dm = dlogits * params.lm_weight.transpose();
        Index m = 0;
        for (Index b = 0; b < B; ++b) {
            for (auto pos : batch.mlm_positions[static_cast<std::size_t>(b)]) dhidden.row(b * L + pos) += dm.row(m++);
        }
    }
    if (internal) {
        Matrix<T> dlogits;
        loss.task = cross_entropy<T>(output.cls_logits, *batch.labels, &dlogits, 1.0);
        Matrix<T> cls_in(B, H);
        for (Index b = 0; b < B; ++b) cls_in.row(b) = output.hidden.row(b * L);
        grads.cls_weight.noalias() = cls_in.transpose() * dlogits;
        grads.cls_bias = dlogits.colwise().sum();
        const Matrix<T> dcls = dlogits * params.cls_weight.transpose();
        for (Index b = 0; b < B; ++b) dhidden.row(b * L) += dcls.row(b);
        loss.total = rho2 * loss.mlm + loss.task;
    } else {
        loss.total = loss.mlm;
    }

    Matrix<T> dx = std::move(dhidden);
    Matrix<T> dP(L, L), dS(L, L);
    for (std::size_t li = config.layers; li-- > 0;) {
        const auto& P = params.layers[li];
        auto& G = grads.layers[li];
        const auto& c = output.cache[li];
        const auto& probs = output.attention[li];

        // Feed-forward block.
        Matrix<T> ds2 = layer_norm_backward(dx, c.ln2_xhat, c.ln2_rstd, P.ln2_gamma, G.ln2_gamma, G.ln2_beta);
        G.w2.noalias() = c.ffn_act.transpose() * ds2;
        G.b2 = ds2.colwise().sum();
        Matrix<T> dpre = ds2 * P.w2.transpose();
        dpre.array() *= c.ffn_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
        G.w1.noalias() = c.x1.transpose() * dpre;
        G.b1 = dpre.colwise().sum();
        Matrix<T> dx1 = ds2;
        dx1.noalias() += dpre * P.w1.transpose();

        // Attention block.
        Matrix<T> ds1 = layer_norm_backward(dx1, c.ln1_xhat, c.ln1_rstd, P.ln1_gamma, G.ln1_gamma, G.ln1_beta);
        G.wo.noalias() = c.context.transpose() * ds1;
        G.bo = ds1.colwise().sum();
        const Matrix<T> dctx = ds1 * P.wo.transpose();
        Matrix<T> dq(N, H), dk(N, H), dv(N, H);
        for (Index b = 0; b < B; ++b) {
            for (Index h = 0; h < A; ++h) {
                const auto p = probs.block((b * A + h) * L, 0, L, L);
                const auto dc = dctx.block(b * L, h * D, L, D);
                dP.noalias() = dc * c.v.block(b * L, h * D, L, D).transpose();
                dv.block(b * L, h * D, L, D).noalias() = p.transpose() * dc;
                const auto row_dot = (p.array() * dP.array()).rowwise().sum().eval();
                dS = (p.array() * (dP.array().colwise() - row_dot)).matrix() * scale;
                dq.block(b * L, h * D, L, D).noalias() = dS * c.k.block(b * L, h * D, L, D);
                dk.block(b * L, h * D, L, D).noalias() = dS.transpose() * c.q.block(b * L, h * D, L, D);
            }
        }
        G.wq.noalias() = c.input.transpose() * dq;
        G.wk.noalias() = c.input.transpose() * dk;
        G.wv.noalias() = c.input.transpose() * dv;
        G.bq = dq.colwise().sum();
        G.bk = dk.colwise().sum();
        G.bv = dv.colwise().sum();
        dx = ds1;
        dx.noalias() += dq * P.wq.transpose();
        dx.noalias() += dk * P.wk.transpose();
        dx.noalias() += dv * P.wv.transpose();
    }

    for (Index b = 0; b < B; ++b) {
        for (Index i = 0; i < L; ++i) {
            const auto id = batch.token_ids[static_cast<std::size_t>(b * L + i)];
            grads.token_embedding.row(id) += dx.row(b * L + i);
            grads.position_embedding.row(i) += dx.row(b * L + i);
        }
    }
    return loss;
}

template <typename T>
std::vector<int> predict(const ForwardOutput<T>& output) {
    std::vector<int> pred(static_cast<std::size_t>(output.cls_logits.rows()));
    for (Index r = 0; r < output.cls_logits.rows(); ++r) {
        Index best = 0;
        for (Index c = 1; c < output.cls_logits.cols(); ++c) {
            if (output.cls_logits(r, c) > output.cls_logits(r, best)) best = c;
        }
        pred[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return pred;
}

#define TLM_INSTANTIATE(T)                                                                                           \
    template struct ModelParams<T>;                                                                                  \
    template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                       \
    template ForwardOutput<T> forward<T>(const ModelParams<T>&, const ModelConfig&, const MaskedBatch&);             \
    template LossBreakdown joint_loss<T>(const ForwardOutput<T>&, const MaskedBatch&, double);                       \
    template LossBreakdown backward<T>(const ModelParams<T>&, const ModelConfig&, const MaskedBatch&,                \
                                       const ForwardOutput<T>&, double, ModelParams<T>&);                            \
    template std::vector<int> predict<T>(const ForwardOutput<T>&);

TLM_INSTANTIATE(float)
TLM_INSTANTIATE(double)

#undef TLM_INSTANTIATE

}  // namespace tlm
