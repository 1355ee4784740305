#include "neurofuse/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace neurofuse {

AccF1 accuracy_f1(const std::vector<Prediction>& preds) {
    if (preds.empty()) throw MetricError("accuracy_f1: empty prediction list");
    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    for (const auto& p : preds) {
        if (p.predicted == p.truth) ++correct;
        if (p.predicted == 1 && p.truth == 1) ++tp;
        if (p.predicted == 1 && p.truth == 0) ++fp;
        if (p.predicted == 0 && p.truth == 1) ++fn;
    }
    AccF1 r;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    const std::size_t denom = 2 * tp + fp + fn;
    r.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    return r;
}

double auc(const std::vector<Prediction>& preds) {
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& p : preds) (p.truth == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw MetricError("auc undefined: both classes must be present");

    // Sum of ranks of positives, with mid-ranks for ties, gives the
    // Mann-Whitney statistic.
    std::vector<std::size_t> order(preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return preds[a].score < preds[b].score; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && preds[order[j]].score == preds[order[i]].score) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based mid-rank
        for (std::size_t k = i; k < j; ++k)
            if (preds[order[k]].truth == 1) rank_sum_pos += mid_rank;
        i = j;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) *
                                        (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MeanStd aggregate(const std::vector<double>& values) {
    if (values.empty()) throw MetricError("aggregate: empty value list");
    MeanStd r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

}  // namespace neurofuse
