#include "fdia/scores.hpp"

#include "fdia/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace fdia {

double AnomalyScoreSeries::fired_fraction() const {
    if (fired.size() == 0) return 0.0;
    return static_cast<double>(fired.count()) / static_cast<double>(fired.size());
}

Eigen::VectorXd max_over_sensors(const Eigen::MatrixXd& s) {
    if (s.cols() == 0) throw ValidationError("scores: no sensors");
    return s.rowwise().maxCoeff();
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

RobustScale fit_robust_scale(const Eigen::MatrixXd& errors, double floor) {
    if (errors.rows() == 0) throw ValidationError("robust scale: no validation errors");
    RobustScale s;
    s.median.resize(errors.cols());
    s.iqr.resize(errors.cols());
    for (Eigen::Index j = 0; j < errors.cols(); ++j) {
        std::vector<double> col(errors.col(j).data(), errors.col(j).data() + errors.rows());
        s.median(j) = quantile(col, 0.5);
        s.iqr(j) = std::max(floor, quantile(col, 0.75) - quantile(col, 0.25));
    }
    return s;
}

Eigen::MatrixXd robust_normalize(const Eigen::MatrixXd& errors, const RobustScale& scale) {
    if (errors.cols() != scale.median.size()) throw ValidationError("robust scale: sensor count mismatch");
    return ((errors.rowwise() - scale.median.transpose()).cwiseAbs().array().rowwise() /
            scale.iqr.transpose().array())
        .matrix();
}

Threshold select_threshold(std::span<const double> scores, double factor) {
    if (scores.empty()) throw ValidationError("select_threshold: no validation scores");
    if (!(factor > 0.0)) throw ValidationError("select_threshold: factor must be positive");
    const double mx = *std::max_element(scores.begin(), scores.end());
    return Threshold{mx * factor, mx == 0.0};
}

void apply_threshold(AnomalyScoreSeries& s, double threshold) {
    s.threshold = threshold;
    s.fired = s.overall.array() > threshold;
}

Localization localize(const AnomalyScoreSeries& s, Eigen::Index begin, Eigen::Index end) {
    begin = std::max<Eigen::Index>(begin, 0);
    end = std::min(end, s.samples());
    if (end <= begin) throw ValidationError("localize: empty span");
    const Eigen::VectorXd mean = s.sensor.middleRows(begin, end - begin).colwise().mean().transpose();
    std::vector<int> order(static_cast<std::size_t>(mean.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mean(a) > mean(b); });
    Localization loc;
    for (int i : order) {
        loc.ranked.push_back(s.sensor_ids[static_cast<std::size_t>(i)]);
        loc.mean.push_back(mean(i));
    }
    return loc;
}

Localization localize_samples(const AnomalyScoreSeries& s, Eigen::Index first, Eigen::Index last) {
    return localize(s, first - s.first_sample, last - s.first_sample);
}

std::vector<bool> majority_windows(const AnomalyScoreSeries& s, Eigen::Index total, Eigen::Index width) {
    if (width < 1) throw ValidationError("majority_windows: width must be positive");
    const Eigen::Index count = total / width;
    std::vector<bool> out(static_cast<std::size_t>(count), false);
    for (Eigen::Index w = 0; w < count; ++w) {
        Eigen::Index scored = 0, fired = 0;
        for (Eigen::Index k = w * width; k < (w + 1) * width; ++k) {
            const Eigen::Index r = k - s.first_sample;
            if (r < 0 || r >= s.fired.size()) continue;
            ++scored;
            fired += s.fired(r);
        }
        out[static_cast<std::size_t>(w)] = scored > 0 && 2 * fired > scored;
    }
    return out;
}

void write_scores_csv(const std::filesystem::path& path, const AnomalyScoreSeries& s) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "t,A,fired";
    for (int id : s.sensor_ids) out << ",bus_" << id;
    out << '\n';
    char buf[64];
    for (Eigen::Index r = 0; r < s.samples(); ++r) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d", s.time(r), s.overall(r), s.fired.size() ? int(s.fired(r)) : 0);
        out << buf;
        for (Eigen::Index j = 0; j < s.sensor.cols(); ++j) {
            std::snprintf(buf, sizeof buf, ",%.17g", s.sensor(r, j));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace fdia
