#include "tlm/metrics.hpp"

#include "tlm/error.hpp"

namespace tlm {

namespace {
double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace

EvalResult compute_metrics(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes) {
    if (truth.empty()) throw PreconditionError("evaluation data is empty");
    if (truth.size() != predicted.size()) throw PreconditionError("prediction count differs from label count");
    EvalResult r;
    r.count = truth.size();
    r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        const auto p = static_cast<std::size_t>(predicted[i]);
        if (t >= num_classes || p >= num_classes) throw PreconditionError("class id out of range");
        ++r.confusion[t][p];
    }
    double tp_sum = 0, fp_sum = 0, fn_sum = 0, f1_sum = 0;
    r.per_class.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        double tp = static_cast<double>(r.confusion[c][c]);
        double fp = 0, fn = 0;
        for (std::size_t o = 0; o < num_classes; ++o) {
            if (o == c) continue;
            fp += static_cast<double>(r.confusion[o][c]);
            fn += static_cast<double>(r.confusion[c][o]);
        }
        auto& s = r.per_class[c];
        s.precision = safe_ratio(tp, tp + fp);
        s.recall = safe_ratio(tp, tp + fn);
        s.f1 = safe_ratio(2.0 * tp, 2.0 * tp + fp + fn);
        s.support = static_cast<std::size_t>(tp + fn);
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fn;
        f1_sum += s.f1;
    }
    r.accuracy = tp_sum / static_cast<double>(r.count);
    r.micro_f1 = safe_ratio(tp_sum, tp_sum + 0.5 * (fp_sum + fn_sum));
    r.macro_f1 = f1_sum / static_cast<double>(num_classes);
    return r;
}

}  // namespace tlm
