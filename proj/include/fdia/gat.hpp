#pragma once

#include "fdia/gdn.hpp"
#include "fdia/layers.hpp"
#include "fdia/scores.hpp"
#include "fdia/trace.hpp"
#include "fdia/training.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace fdia {

struct GatConfig {
    int hidden = 32;           ///< recurrent state width (encoder and decoder)
    int forecast_hidden = 64;
    double gamma = 0.5;        ///< weight of the forecast error in the combined score
    double window_seconds = 1.0;
    int train_stride = 3;
    double threshold_factor = 1.0;
    double negative_slope = 0.2;
    ad::TrainConfig train{1e-3, 30, 32, 0.1, 5, 1};
};

struct GatModel {
    GatConfig config;
    std::vector<int> sensor_ids;
    Eigen::Index window = 0;
    ad::GraphAttention feature;   ///< nodes = sensors, features = the window of one sensor
    ad::GraphAttention temporal;  ///< nodes = time steps, features = all sensors at one step
    ad::GRUCell encoder;
    ad::Dense forecast_hidden;
    ad::Dense forecast_out;
    ad::GRUCell decoder;
    ad::Dense reconstruct_out;
    RobustScale scale;
    double threshold = 0.0;
    bool threshold_degenerate = false;
    std::string normalization;
    ad::TrainingSummary summary;

    Eigen::Index sensors() const noexcept { return static_cast<Eigen::Index>(sensor_ids.size()); }
    std::vector<ad::Parameter*> parameters();

    struct Outputs {
        ad::Var forecast;        ///< B x sensors, next sample
        ad::Var reconstruction;  ///< (width*B) x sensors, row t*B + b is step t of window b
    };
    /// `time_blocks` stacks B windows as (B*width x sensors).
    Outputs forward(ad::Tape& tape, const Eigen::MatrixXd& time_blocks);
};

GatModel make_gat(std::vector<int> sensor_ids, Eigen::Index window, const GatConfig& cfg);

/// Reorders (B*width x sensors) window blocks to the step-major layout of Outputs::reconstruction.
Eigen::MatrixXd step_major(const Eigen::MatrixXd& time_blocks, Eigen::Index width);

/// Joint objective: forecast MSE + reconstruction MSE.
ad::Var gat_loss(GatModel& model, ad::Tape& tape, const Eigen::MatrixXd& time_blocks, const Eigen::MatrixXd& next);

GatModel train_gat(std::span<const MeasurementTrace> normal, const GatConfig& cfg);

/// Per-sensor gamma*|forecast error| + (1-gamma)*|reconstruction error of the window's last step|,
/// robust-normalized; A(t) = max over sensors.
AnomalyScoreSeries gat_score(GatModel& model, const MeasurementTrace& trace);

nlohmann::json to_json(GatModel& model);
GatModel gat_from_json(const nlohmann::json& j);

}  // namespace fdia
