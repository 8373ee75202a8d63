#pragma once

#include <cstddef>
#include <vector>

namespace fdia {

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const noexcept { return tp + fp + fn + tn; }
};

struct PointMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    ConfusionCounts counts;
    bool precision_degenerate = false;  ///< nothing predicted positive
    bool recall_degenerate = false;     ///< no positives in the truth
    double false_positive_rate = 0.0;   ///< FP / (FP + TN), 0 when there are no negatives
};

/// F1 = 2PR/(P+R), 0 when P+R = 0.
double f1_score(double precision, double recall);

PointMetrics point_metrics(const std::vector<bool>& predicted, const std::vector<bool>& truth);

struct LocalizationMetrics {
    double hit_at_k = 0.0;
    double mean_rank = 0.0;  ///< 1-based
    std::size_t k = 0;
};

/// `ranked` must list every bus once; `truth` is the attacked set.
LocalizationMetrics localization_metrics(const std::vector<int>& ranked, const std::vector<int>& truth, std::size_t k);

}  // namespace fdia
