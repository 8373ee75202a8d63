#include "fdia/metrics.hpp"

#include "fdia/error.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace fdia {

double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

PointMetrics point_metrics(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
    if (predicted.size() != truth.size())
        throw ValidationError("metrics: predicted mask has " + std::to_string(predicted.size()) +
                              " units, truth has " + std::to_string(truth.size()));
    PointMetrics m;
    auto& c = m.counts;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i] && truth[i]) ++c.tp;
        else if (predicted[i]) ++c.fp;
        else if (truth[i]) ++c.fn;
        else ++c.tn;
    }
    m.precision_degenerate = c.tp + c.fp == 0;
    m.recall_degenerate = c.tp + c.fn == 0;
    m.precision = m.precision_degenerate ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    m.recall = m.recall_degenerate ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    m.f1 = f1_score(m.precision, m.recall);
    m.false_positive_rate = c.fp + c.tn == 0 ? 0.0 : static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
    return m;
}

LocalizationMetrics localization_metrics(const std::vector<int>& ranked, const std::vector<int>& truth, std::size_t k) {
    if (truth.empty()) throw ValidationError("localization: empty truth set");
    if (std::set<int>(ranked.begin(), ranked.end()).size() != ranked.size())
        throw ValidationError("localization: ranking lists a bus twice");
    LocalizationMetrics m;
    m.k = k;
    std::size_t hits = 0;
    double rank_sum = 0.0;
    for (int bus : truth) {
        const auto it = std::find(ranked.begin(), ranked.end(), bus);
        if (it == ranked.end())
            throw ValidationError("localization: attacked bus " + std::to_string(bus) + " missing from ranking");
        const auto pos = static_cast<std::size_t>(it - ranked.begin());
        rank_sum += static_cast<double>(pos + 1);
        hits += pos < k;
    }
    m.hit_at_k = static_cast<double>(hits) / static_cast<double>(truth.size());
    m.mean_rank = rank_sum / static_cast<double>(truth.size());
    return m;
}

}  // namespace fdia
