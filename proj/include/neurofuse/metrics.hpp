#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace neurofuse {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Prediction {
    std::string subject_id;
    double score = 0.0;  // softmax probability of class 1
    int predicted = 0;
    int truth = 0;
};

struct AccF1 {
    double accuracy = 0.0;
    double f1 = 0.0;
};

/// Accuracy and binary F1 with class 1 (disorder) as positive; F1 = 0 when
/// 2TP + FP + FN = 0.
AccF1 accuracy_f1(const std::vector<Prediction>& preds);

/// Mann-Whitney AUC: fraction of (positive, negative) pairs with
/// score_pos > score_neg, ties counted 0.5. Rank-based O(n log n).
double auc(const std::vector<Prediction>& preds);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample std (divisor k-1); 0 for a single value
};

MeanStd aggregate(const std::vector<double>& values);

}  // namespace neurofuse
