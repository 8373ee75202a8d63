#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fdia {

/// Per-sample detector output. Row r of `sensor` scores sample `first_sample + r`.
struct AnomalyScoreSeries {
    std::string detector;
    std::vector<int> sensor_ids;
    Eigen::Index first_sample = 0;
    Eigen::VectorXd time;
    Eigen::MatrixXd sensor;   ///< a_i(t), samples x sensors, >= 0
    Eigen::VectorXd overall;  ///< A(t)
    double threshold = 0.0;
    Eigen::Array<bool, Eigen::Dynamic, 1> fired;

    Eigen::Index samples() const noexcept { return sensor.rows(); }
    double fired_fraction() const;
};

/// A(t) = max_i a_i(t).
Eigen::VectorXd max_over_sensors(const Eigen::MatrixXd& sensor_scores);

/// Per-sensor median and IQR of validation errors; IQR clamped below at `floor`.
struct RobustScale {
    Eigen::VectorXd median;
    Eigen::VectorXd iqr;
};
inline constexpr double kIqrFloor = 1e-6;
RobustScale fit_robust_scale(const Eigen::MatrixXd& errors, double floor = kIqrFloor);
/// |e - median| / iqr, column by column.
Eigen::MatrixXd robust_normalize(const Eigen::MatrixXd& errors, const RobustScale& scale);

/// Linear-interpolated quantile of an unsorted sample.
double quantile(std::vector<double> values, double q);

struct Threshold {
    double value = 0.0;
    bool degenerate = false;  ///< every validation score was zero
};
/// max(validation) * factor.
Threshold select_threshold(std::span<const double> validation_scores, double factor = 1.0);

/// Sets threshold and fired = overall > threshold.
void apply_threshold(AnomalyScoreSeries& series, double threshold);

struct Localization {
    std::vector<int> ranked;   ///< sensor ids, most anomalous first
    std::vector<double> mean;  ///< mean score, aligned with `ranked`
};
/// Ranks sensors by mean a_i over series rows [begin, end), descending, ties to the lower index.
Localization localize(const AnomalyScoreSeries& series, Eigen::Index begin, Eigen::Index end);
/// Same, with the span given in absolute sample indices.
Localization localize_samples(const AnomalyScoreSeries& series, Eigen::Index first, Eigen::Index last);

/// Majority vote of per-sample fired flags inside consecutive blocks of `width` samples over a
/// trace of `total` samples. Blocks without scored samples vote false.
std::vector<bool> majority_windows(const AnomalyScoreSeries& series, Eigen::Index total, Eigen::Index width);

/// CSV: t,A,fired,<sensor ids...>
void write_scores_csv(const std::filesystem::path& path, const AnomalyScoreSeries& series);

}  // namespace fdia
