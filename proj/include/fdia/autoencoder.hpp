#pragma once

#include "fdia/clustering.hpp"
#include "fdia/dataset.hpp"
#include "fdia/layers.hpp"
#include "fdia/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace fdia {

/// Dense encoder/decoder over one sample of all sensors (input width = sensor count).
struct AutoencoderModel {
    std::vector<ad::Dense> layers;
    std::vector<int> sensor_ids;
    std::uint64_t seed = 0;
    std::string normalization;  ///< reference to the stats file the inputs were scaled with

    Eigen::Index input_width() const;
    Eigen::Index bottleneck_width() const;
    /// x is (samples x sensors).
    Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& x) const;
    ad::Var forward(ad::Tape& tape, ad::Var x);
    std::vector<ad::Parameter*> parameters();
    void validate() const;
};

/// widths = {inputs, hidden..., inputs}; hidden layers use `activation`, the output is linear.
AutoencoderModel make_autoencoder(const std::vector<Eigen::Index>& widths, std::vector<int> sensor_ids,
                                  std::uint64_t seed, ad::Activation activation = ad::Activation::Tanh);
/// Default 67->32->8->32->67 shape for the given sensors.
AutoencoderModel make_default_autoencoder(std::vector<int> sensor_ids, std::uint64_t seed);

/// Trains in place (warm start from the current weights) on rows of `samples`.
ad::TrainingSummary train_autoencoder(AutoencoderModel& model, const Eigen::MatrixXd& samples,
                                      const ad::TrainConfig& cfg);

struct ReconstructionReport {
    Eigen::VectorXd sample_loss;   ///< squared Euclidean distance per sample
    Eigen::VectorXd sensor_error;  ///< mean squared residual per sensor
};

/// x is (samples x sensors).
ReconstructionReport reconstruction_report(const AutoencoderModel& model, const Eigen::MatrixXd& x);

/// Reconstructs the window and clusters sensors on their mean reconstruction error.
DetectionVerdict autoencoder_window_detector(const AutoencoderModel& model, const WindowMatrix& window,
                                             double threshold, std::uint64_t seed);

nlohmann::json to_json(AutoencoderModel& model);
AutoencoderModel autoencoder_from_json(const nlohmann::json& j);

}  // namespace fdia
