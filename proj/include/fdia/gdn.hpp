#pragma once

#include "fdia/graph_attention.hpp"
#include "fdia/layers.hpp"
#include "fdia/scores.hpp"
#include "fdia/trace.hpp"
#include "fdia/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fdia {

/// Windows of several multivariate series; target (s, t) uses rows [t - width, t) to predict row t.
struct SequenceSet {
    std::vector<Eigen::MatrixXd> series;  ///< samples x sensors
    std::vector<std::pair<int, Eigen::Index>> targets;
    Eigen::Index width = 0;

    /// Stacks the windows of the given targets as (B*sensors x width), one block per target.
    Eigen::MatrixXd sensor_blocks(std::span<const Eigen::Index> which) const;
    /// Stacks the windows as (B*width x sensors), one block per target.
    Eigen::MatrixXd time_blocks(std::span<const Eigen::Index> which) const;
    /// Next-sample values (B x sensors).
    Eigen::MatrixXd next_rows(std::span<const Eigen::Index> which) const;
};

Eigen::Index window_samples(double seconds, double sample_rate);
SequenceSet make_sequences(std::span<const MeasurementTrace> traces, Eigen::Index width, Eigen::Index stride);

struct GdnConfig {
    int embedding_dim = 16;
    int top_k = 15;
    int hidden = 32;  ///< output MLP width
    double window_seconds = 1.0;
    int train_stride = 2;
    double threshold_factor = 1.0;
    double negative_slope = 0.2;
    ad::TrainConfig train{3e-3, 60, 32, 0.1, 10, 1};
};

struct GdnModel {
    GdnConfig config;
    std::vector<int> sensor_ids;
    Eigen::Index window = 0;
    ad::Parameter embedding;  ///< sensors x d
    ad::Parameter weight;     ///< window x d
    ad::Parameter attention;  ///< 4d x 1, over g_i = [v_i || W x_i]
    ad::Dense hidden;
    ad::Dense output;
    RobustScale scale;
    double threshold = 0.0;
    bool threshold_degenerate = false;
    std::string normalization;
    ad::TrainingSummary summary;

    Eigen::Index sensors() const noexcept { return embedding.value.rows(); }
    std::vector<ad::Parameter*> parameters();
    LearnedGraph graph() const;
    /// Mask over the top-k neighbors; a node does not attend to itself.
    ad::BoolArray attention_mask() const;
    /// Predictions (B*sensors x 1) for the stacked sensor blocks.
    ad::Var forward(ad::Tape& tape, const Eigen::MatrixXd& blocks, const ad::BoolArray& mask);
    /// Forecasts for rows window..N-1 of x (samples x sensors).
    Eigen::MatrixXd forecast(const Eigen::MatrixXd& x);
};

GdnModel make_gdn(std::vector<int> sensor_ids, Eigen::Index window, const GdnConfig& cfg);

/// Traces must share one normalization frame and bus layout.
GdnModel train_gdn(std::span<const MeasurementTrace> normal, const GdnConfig& cfg);

/// Deviation scores a_i(t) from forecast error only; A(t) = max_i a_i(t).
AnomalyScoreSeries gdn_score(GdnModel& model, const MeasurementTrace& trace);

nlohmann::json to_json(GdnModel& model);
GdnModel gdn_from_json(const nlohmann::json& j);

}  // namespace fdia
