#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tlm {

using uint128 = unsigned __int128;

/// Decimal rendering of a 128-bit count.
std::string to_decimal(uint128 value);

struct StageTokens {
    std::string stage;
    std::uint64_t steps = 0;
    std::uint64_t batch_size = 0;
    std::uint64_t seq_len = 0;
    uint128 tokens = 0;  // steps * batch_size * seq_len
};

/// Training compute estimate: tokens = sum of steps x batch x seq_len over
/// stages; est_flops = 6 x param_count x tokens. Integer-exact.
struct FlopsReport {
    std::vector<StageTokens> stages;
    std::uint64_t param_count = 0;
    uint128 total_tokens = 0;
    uint128 est_flops = 0;

    /// est_flops / baseline_flops.
    double ratio_to(double baseline_flops) const;
};

/// Throws ConfigError if any product exceeds 128 bits.
FlopsReport make_flops_report(const std::vector<StageTokens>& stages, std::uint64_t param_count);

}  // namespace tlm
