#pragma once

#include "fdia/dataset.hpp"
#include "fdia/error.hpp"
#include "fdia/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace fdia {

/// k-means partition of the rows of a point matrix.
struct Clustering {
    int k = 0;
    std::vector<int> assignment;          ///< point -> cluster
    Eigen::MatrixXd centroids;            ///< k x dim
    double objective = 0.0;               ///< within-cluster sum of squares
    int iterations = 0;
    int reseeds = 0;                      ///< empty-cluster re-seeds in the returned run
    std::vector<double> objective_history;

    std::vector<Eigen::Index> sizes() const {
        std::vector<Eigen::Index> s(static_cast<std::size_t>(k), 0);
        for (int a : assignment) ++s[static_cast<std::size_t>(a)];
        return s;
    }
};

struct KMeansOptions {
    int max_iterations = 300;
    int restarts = 10;  ///< independent k-means++ seedings; lowest objective wins
};

/// Sum over points of squared distance to the assigned centroid.
template <typename Derived>
double within_cluster_ss(const Eigen::MatrixBase<Derived>& points, const std::vector<int>& assignment,
                         const Eigen::MatrixXd& centroids) {
    double j = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        j += (points.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
    return j;
}

namespace detail {

template <typename Derived>
Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixBase<Derived>& points, int k, Rng& rng) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd centers(k, points.cols());
    centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0) {
            double r = rng.uniform() * total;
            for (pick = 0; pick + 1 < n; ++pick) {
                r -= d2(pick);
                if (r < 0) break;
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centers.row(c) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2(i) = std::min(d2(i), (points.row(i) - centers.row(c)).squaredNorm());
    }
    return centers;
}

template <typename Derived>
Clustering lloyd(const Eigen::MatrixBase<Derived>& points, Eigen::MatrixXd centers, int max_iterations) {
    const Eigen::Index n = points.rows();
    const int k = static_cast<int>(centers.rows());
    Clustering c;
    c.k = k;
    std::vector<int> prev;
    double last_j = std::numeric_limits<double>::infinity();
    auto check = [&](double j) {
        if (j > last_j + 1e-9 * (1.0 + std::abs(last_j)))
            throw NumericalError("k-means objective increased: " + std::to_string(last_j) +
                                 " -> " + std::to_string(j));
        last_j = j;
        c.objective_history.push_back(j);
    };
    for (int it = 0; it < max_iterations; ++it) {
        std::vector<int> assign(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            // Ties keep the current cluster so a re-seeded point is not pulled straight back.
            int best = prev.empty() ? 0 : prev[static_cast<std::size_t>(i)];
            double best_d = prev.empty() ? std::numeric_limits<double>::infinity()
                                         : (points.row(i) - centers.row(best)).squaredNorm();
            for (int j = 0; j < k; ++j) {
                const double d = (points.row(i) - centers.row(j)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            assign[static_cast<std::size_t>(i)] = best;
        }
        c.iterations = it + 1;
        check(within_cluster_ss(points, assign, centers));
        if (assign == prev) break;
        prev = assign;

        std::vector<Eigen::Index> count(static_cast<std::size_t>(k), 0);
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, points.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            sum.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
            ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
        }
        for (int j = 0; j < k; ++j)
            if (count[static_cast<std::size_t>(j)] > 0)
                centers.row(j) = sum.row(j) / static_cast<double>(count[static_cast<std::size_t>(j)]);
        // Empty cluster: move the point farthest from its centroid (taken from a
        // cluster with more than one member) into it.
        for (int j = 0; j < k; ++j) {
            if (count[static_cast<std::size_t>(j)] > 0) continue;
            Eigen::Index far = -1;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int a = assign[static_cast<std::size_t>(i)];
                if (count[static_cast<std::size_t>(a)] < 2) continue;
                const double d = (points.row(i) - centers.row(a)).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far < 0) break;
            const int from = assign[static_cast<std::size_t>(far)];
            --count[static_cast<std::size_t>(from)];
            count[static_cast<std::size_t>(j)] = 1;
            assign[static_cast<std::size_t>(far)] = j;
            centers.row(j) = points.row(far);
            Eigen::RowVectorXd rest = Eigen::RowVectorXd::Zero(points.cols());
            for (Eigen::Index i = 0; i < n; ++i)
                if (assign[static_cast<std::size_t>(i)] == from) rest += points.row(i);
            centers.row(from) = rest / static_cast<double>(count[static_cast<std::size_t>(from)]);
            ++c.reseeds;
        }
        check(within_cluster_ss(points, assign, centers));
        c.assignment = assign;
        prev = assign;
    }
    if (c.assignment.empty() || c.assignment != prev) c.assignment = prev;
    c.centroids = centers;
    c.objective = within_cluster_ss(points, c.assignment, c.centroids);
    return c;
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeding until the assignment is a fixpoint
/// (or `max_iterations`). Deterministic in `seed`.
template <typename Derived>
Clustering kmeans(const Eigen::MatrixBase<Derived>& points, int k, std::uint64_t seed,
                  const KMeansOptions& opts = {}) {
    if (k < 1) throw ValidationError("kmeans: k must be >= 1");
    if (points.rows() < k)
        throw ValidationError("kmeans: " + std::to_string(points.rows()) +
                              " points is fewer than k = " + std::to_string(k));
    if (!points.allFinite()) throw ValidationError("kmeans: non-finite coordinates");
    Clustering best;
    best.objective = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        Rng rng(hash_counter(seed, 0x6b6d65616e73ULL, static_cast<std::uint64_t>(r)));
        auto c = detail::lloyd(points, detail::kmeanspp_init(points, k, rng), opts.max_iterations);
        if (c.objective < best.objective) best = std::move(c);
    }
    return best;
}

struct SilhouetteReport {
    Eigen::VectorXd values;  ///< per point, in [-1, 1]
    double mean = 0.0;
};

/// Silhouette s = (b - a) / max(a, b) on Euclidean distances. Points alone in
/// their cluster get s = 0.
template <typename Derived>
SilhouetteReport silhouette(const Eigen::MatrixBase<Derived>& points, const std::vector<int>& assignment) {
    const Eigen::Index n = points.rows();
    if (n < 2) throw ValidationError("silhouette: needs at least 2 points");
    if (static_cast<Eigen::Index>(assignment.size()) != n)
        throw ValidationError("silhouette: assignment length differs from point count");
    int k = 0;
    for (int a : assignment) k = std::max(k, a + 1);
    std::vector<Eigen::Index> size(static_cast<std::size_t>(k), 0);
    for (int a : assignment) ++size[static_cast<std::size_t>(a)];
    int non_empty = 0;
    for (auto s : size) non_empty += s > 0;
    if (non_empty < 2) throw ValidationError("silhouette: undefined for a single cluster");

    SilhouetteReport rep;
    rep.values.resize(n);
    Eigen::VectorXd dist_sum(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist_sum.setZero();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) dist_sum(assignment[static_cast<std::size_t>(j)]) += (points.row(i) - points.row(j)).norm();
        const int own = assignment[static_cast<std::size_t>(i)];
        if (size[static_cast<std::size_t>(own)] < 2) {
            rep.values(i) = 0.0;
            continue;
        }
        const double a = dist_sum(own) / static_cast<double>(size[static_cast<std::size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c)
            if (c != own && size[static_cast<std::size_t>(c)] > 0)
                b = std::min(b, dist_sum(c) / static_cast<double>(size[static_cast<std::size_t>(c)]));
        const double denom = std::max(a, b);
        rep.values(i) = denom > 0 ? (b - a) / denom : 0.0;
    }
    rep.mean = rep.values.mean();
    return rep;
}

struct DetectionVerdict {
    Eigen::Index window = 0;
    bool fired = false;
    std::vector<int> flagged;
    double silhouette = 0.0;
    Eigen::Index minority_size = 0;
    bool tie = false;         ///< clusters were the same size
    bool degenerate = false;  ///< no separation possible (identical sensors)
};

/// Two-cluster split of per-sensor feature rows, gated on mean silhouette.
DetectionVerdict cluster_sensors(const Eigen::MatrixXd& features, const std::vector<int>& sensor_ids,
                                 double threshold, std::uint64_t seed);

/// Sensors-as-samples k-means detector on one window.
DetectionVerdict kmeans_window_detector(const WindowMatrix& window, double threshold,
                                        std::uint64_t seed);

}  // namespace fdia
