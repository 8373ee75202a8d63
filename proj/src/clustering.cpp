#include "fdia/clustering.hpp"

#include <cmath>

namespace fdia {

DetectionVerdict cluster_sensors(const Eigen::MatrixXd& features, const std::vector<int>& sensor_ids,
                                 double threshold, std::uint64_t seed) {
    if (features.rows() < 2) throw ValidationError("detector: window needs at least 2 sensors");
    if (static_cast<Eigen::Index>(sensor_ids.size()) != features.rows())
        throw ValidationError("detector: sensor id count differs from feature rows");
    DetectionVerdict v;
    const bool identical = (features.rowwise() - features.row(0)).cwiseAbs().maxCoeff() == 0.0;
    if (identical) {
        v.degenerate = true;
        return v;
    }
    const auto c = kmeans(features, 2, seed);
    const auto sizes = c.sizes();
    if (sizes[0] == 0 || sizes[1] == 0) {
        v.degenerate = true;
        return v;
    }
    v.silhouette = silhouette(features, c.assignment).mean;

    int minority = sizes[0] < sizes[1] ? 0 : 1;
    if (sizes[0] == sizes[1]) {
        v.tie = true;
        // Cluster whose members sit farther, on average, from the other centroid.
        double spread[2] = {0.0, 0.0};
        for (Eigen::Index i = 0; i < features.rows(); ++i) {
            const int a = c.assignment[static_cast<std::size_t>(i)];
            spread[a] += (features.row(i) - c.centroids.row(1 - a)).norm();
        }
        // Exact symmetry: the cluster holding the first row, so the labeling seed cannot matter.
        if (std::abs(spread[1] - spread[0]) <= 1e-12 * std::max(spread[0], spread[1]))
            minority = c.assignment[0];
        else
            minority = spread[1] > spread[0] ? 1 : 0;
    }
    v.minority_size = sizes[static_cast<std::size_t>(minority)];
    v.fired = v.silhouette >= threshold;
    if (v.fired)
        for (Eigen::Index i = 0; i < features.rows(); ++i)
            if (c.assignment[static_cast<std::size_t>(i)] == minority)
                v.flagged.push_back(sensor_ids[static_cast<std::size_t>(i)]);
    return v;
}

DetectionVerdict kmeans_window_detector(const WindowMatrix& window, double threshold,
                                        std::uint64_t seed) {
    return cluster_sensors(window.values, window.sensor_ids, threshold, seed);
}

}  // namespace fdia
