#pragma once

#include <cstdint>

#include "tlm/model.hpp"

namespace tlm {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 0.01;  // decoupled; skipped for biases and layernorm
};

/// Linear warmup from 0 to peak over warmup_steps, then linear decay to 0 at
/// total_steps.
struct LinearSchedule {
    double peak_lr = 1e-3;
    std::int64_t warmup_steps = 0;
    std::int64_t total_steps = 1;

    double at(std::int64_t step) const;
};

class AdamW {
public:
    AdamW(const ModelConfig& config, AdamWConfig cfg);

    void step(ModelParams<float>& params, const ModelParams<float>& grads, double lr);
    std::int64_t steps_taken() const noexcept { return t_; }

private:
    AdamWConfig cfg_;
    ModelParams<float> m_;
    ModelParams<float> v_;
    std::int64_t t_ = 0;
};

}  // namespace tlm
