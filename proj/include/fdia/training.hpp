#pragma once

#include "fdia/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace fdia::ad {

struct TrainConfig {
    double learning_rate = 1e-3;
    int max_epochs = 200;
    int batch_size = 32;
    double validation_fraction = 0.1;
    int patience = 10;  ///< epochs without improvement; 0 stops after the first validation round
    std::uint64_t seed = 1;

    void validate() const;
};

struct TrainingSummary {
    int epochs = 0;
    int best_epoch = -1;
    double best_validation = 0.0;
    std::vector<double> training_loss;    ///< mean batch loss per epoch
    std::vector<double> validation_loss;  ///< one entry per validation round
};

/// Deterministic shuffled split; the validation part is ceil(fraction*n) when n > 1, else empty.
std::pair<std::vector<Index>, std::vector<Index>> split_indices(Index n, double fraction, std::uint64_t seed);

using BatchLoss = std::function<Var(Tape&, std::span<const Index>)>;
using ValidationLoss = std::function<double()>;

/// Minibatch Adam over `train` with early stopping on `validation_loss`; restores the best
/// parameters before returning. Starts from the current parameter values (warm start).
TrainingSummary fit(const std::vector<Parameter*>& params, const std::vector<Index>& train,
                    const BatchLoss& batch_loss, const ValidationLoss& validation_loss,
                    const TrainConfig& cfg);

}  // namespace fdia::ad
