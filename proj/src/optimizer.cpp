#include "tlm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace tlm {

double LinearSchedule::at(std::int64_t step) const {
    if (warmup_steps > 0 && step < warmup_steps) {
        return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    const auto decay_span = std::max<std::int64_t>(total_steps - warmup_steps, 1);
    const double remaining = static_cast<double>(total_steps - step) / static_cast<double>(decay_span);
    return peak_lr * std::clamp(remaining, 0.0, 1.0);
}

AdamW::AdamW(const ModelConfig& config, AdamWConfig cfg)
    : cfg_(cfg), m_(ModelParams<float>::zeros(config)), v_(ModelParams<float>::zeros(config)) {}

void AdamW::step(ModelParams<float>& params, const ModelParams<float>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
    const float step_size = static_cast<float>(lr / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / bc2);
    const float eps = static_cast<float>(cfg_.eps);
    const float decay = static_cast<float>(lr * cfg_.weight_decay);
    for_each_tensor(
        [&](const std::string&, auto& p, const auto& g, auto& m, auto& v) {
            using Tensor = std::decay_t<decltype(p)>;
            m.array() = b1 * m.array() + (1.0F - b1) * g.array();
            v.array() = b2 * v.array() + (1.0F - b2) * g.array().square();
            if constexpr (Tensor::RowsAtCompileTime != 1) p.array() -= decay * p.array();
            p.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
        },
        params, grads, m_, v_);
}

}  // namespace tlm
