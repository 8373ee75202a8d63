#include "fdia/training.hpp"

#include "fdia/error.hpp"
#include "fdia/layers.hpp"
#include "fdia/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fdia::ad {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
    if (max_epochs < 1) throw ValidationError("train: max_epochs must be positive");
    if (batch_size < 1) throw ValidationError("train: batch_size must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ValidationError("train: validation_fraction must lie in (0, 1)");
    if (patience < 0) throw ValidationError("train: patience must be non-negative");
}

namespace {

void shuffle(std::vector<Index>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::pair<std::vector<Index>, std::vector<Index>> split_indices(Index n, double fraction, std::uint64_t seed) {
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    Rng rng(hash_counter(seed, 0x5b17, 0));
    shuffle(all, rng);
    const Index nv = n > 1 ? std::max<Index>(1, static_cast<Index>(std::ceil(fraction * static_cast<double>(n)))) : 0;
    std::vector<Index> val(all.begin(), all.begin() + nv);
    std::vector<Index> train(all.begin() + nv, all.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    return {std::move(train), std::move(val)};
}

TrainingSummary fit(const std::vector<Parameter*>& params, const std::vector<Index>& train,
                    const BatchLoss& batch_loss, const ValidationLoss& validation_loss,
                    const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw ValidationError("train: no training samples");
    for (Parameter* p : params) {
        p->zero_grad();
        p->moment1.resize(0, 0);
        p->moment2.resize(0, 0);
    }
    Adam adam;
    adam.learning_rate = cfg.learning_rate;
    EarlyStopping stopper(cfg.patience);
    TrainingSummary summary;
    std::vector<Index> order = train;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng rng(hash_counter(cfg.seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
        shuffle(order, rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t len = std::min(batch, order.size() - start);
            Tape tape;
            Var loss = batch_loss(tape, std::span<const Index>(order.data() + start, len));
            const double value = loss.value()(0, 0);
            if (!std::isfinite(value))
                throw NumericalError("training: non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(batches));
            tape.backward(loss);
            adam.step(params);
            zero_grad(params);
            total += value;
            ++batches;
        }
        summary.training_loss.push_back(total / static_cast<double>(batches));
        summary.epochs = epoch + 1;
        const double v = validation_loss();
        summary.validation_loss.push_back(v);
        if (stopper.update(v, params) || v == 0.0) break;
    }
    stopper.restore(params);
    summary.best_epoch = stopper.best_epoch();
    summary.best_validation = stopper.best();
    return summary;
}

}  // namespace fdia::ad
