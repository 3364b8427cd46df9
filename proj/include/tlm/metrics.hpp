#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tlm {

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct EvalResult {
    double accuracy = 0.0;
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassScores> per_class;
    std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
    std::size_t count = 0;
};

/// Single-label classification metrics. Precision, recall and F1 of a class
/// with an empty denominator are 0.
EvalResult compute_metrics(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes);

}  // namespace tlm
