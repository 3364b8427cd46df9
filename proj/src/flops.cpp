#include "tlm/flops.hpp"

#include <algorithm>

#include "tlm/error.hpp"

namespace tlm {

namespace {

uint128 checked_mul(uint128 a, uint128 b) {
    uint128 out = 0;
    if (__builtin_mul_overflow(a, b, &out)) throw ConfigError("FLOPs arithmetic overflows 128 bits");
    return out;
}

uint128 checked_add(uint128 a, uint128 b) {
    uint128 out = 0;
    if (__builtin_add_overflow(a, b, &out)) throw ConfigError("FLOPs arithmetic overflows 128 bits");
    return out;
}

}  // namespace

std::string to_decimal(uint128 value) {
    if (value == 0) return "0";
    std::string s;
    while (value > 0) {
        s.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
        value /= 10;
    }
    std::reverse(s.begin(), s.end());
    return s;
}

double FlopsReport::ratio_to(double baseline_flops) const {
    return static_cast<double>(est_flops) / baseline_flops;
}

FlopsReport make_flops_report(const std::vector<StageTokens>& stages, std::uint64_t param_count) {
    FlopsReport r;
    r.param_count = param_count;
    for (auto s : stages) {
        s.tokens = checked_mul(checked_mul(s.steps, s.batch_size), s.seq_len);
        r.total_tokens = checked_add(r.total_tokens, s.tokens);
        r.stages.push_back(std::move(s));
    }
    r.est_flops = checked_mul(checked_mul(6, param_count), r.total_tokens);
    return r;
}

}  // namespace tlm
