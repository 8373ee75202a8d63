#pragma once

#include "fdia/autodiff.hpp"
#include "fdia/rng.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace fdia::ad {

enum class Activation { Identity, Tanh, Relu, Sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
Var activate(Var x, Activation a);

/// Glorot-uniform initialised (rows x cols) parameter.
Parameter glorot(std::string name, Index rows, Index cols, Rng& rng);

/// y = x W + b, x is (batch x in).
struct Dense {
    Parameter weight;  ///< in x out
    Parameter bias;    ///< 1 x out
    Activation activation = Activation::Identity;

    Dense() = default;
    Dense(std::string name, Index in, Index out, Activation act, Rng& rng);
    Index in() const noexcept { return weight.value.rows(); }
    Index out() const noexcept { return weight.value.cols(); }
    Var forward(Tape& tape, Var x);
    Matrix predict(const Matrix& x) const;
    std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

/// Gated recurrent unit. Gate order in the packed weights: reset, update, candidate.
struct GRUCell {
    Parameter w_input;   ///< in x 3h
    Parameter w_hidden;  ///< h x 3h
    Parameter b_input;   ///< 1 x 3h
    Parameter b_hidden;  ///< 1 x 3h

    GRUCell() = default;
    GRUCell(std::string name, Index in, Index hidden, Rng& rng);
    Index in() const noexcept { return w_input.value.rows(); }
    Index hidden() const noexcept { return w_hidden.value.rows(); }

    /// x W_in + b_in for a stack of inputs; lets callers project every time step in one product.
    Var project(Tape& tape, Var x);
    /// One step given an already projected input (batch x 3h).
    Var step_projected(Tape& tape, Var projected, Var h);
    Var step(Tape& tape, Var x, Var h) { return step_projected(tape, project(tape, x), h); }
    std::vector<Parameter*> parameters() { return {&w_input, &w_hidden, &b_input, &b_hidden}; }
};

/// Single-head graph attention: logits leakyReLU(a^T [W h_i || W h_j]) softmaxed over N_i,
/// output ReLU(sum_j alpha_ij W h_j).
struct GraphAttention {
    Parameter weight;     ///< in x out
    Parameter attention;  ///< 2*out x 1
    double slope = 0.2;

    GraphAttention() = default;
    GraphAttention(std::string name, Index in, Index out, Rng& rng, double negative_slope = 0.2);
    Index in() const noexcept { return weight.value.rows(); }
    Index out() const noexcept { return weight.value.cols(); }

    Var transform(Tape& tape, Var h);
    /// Attention over rows of `keys` (width = attention.rows()/2).
    Var coefficients_from_keys(Tape& tape, Var keys, const BoolArray& mask);
    Var coefficients(Tape& tape, Var h, const BoolArray& mask);
    Var aggregate(Tape& tape, Var transformed, Var alpha);
    Var forward(Tape& tape, Var h, const BoolArray& mask);
    /// Batched form: `h` stacks B graphs of `block` nodes; `mask` is block x block, shared.
    Var forward_blocks(Tape& tape, Var h, const BoolArray& mask, Index block);
    std::vector<Parameter*> parameters() { return {&weight, &attention}; }
};

/// Adam with bias correction.
struct Adam {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;

    void step(const std::vector<Parameter*>& params);
};

/// Attention weights for stacked graphs: keys (B*block x width), mask block x block.
Var block_attention(Tape& tape, Var keys, Var attention, const BoolArray& mask, Index block, double slope);

void zero_grad(const std::vector<Parameter*>& params);

/// Tracks the best validation loss and its parameter snapshot.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}
    /// Returns true when training should stop.
    bool update(double validation_loss, const std::vector<Parameter*>& params);
    void restore(const std::vector<Parameter*>& params) const;
    double best() const noexcept { return best_; }
    int best_epoch() const noexcept { return best_epoch_; }
    int rounds() const noexcept { return rounds_; }

private:
    int patience_;
    int rounds_ = 0;
    int since_best_ = 0;
    int best_epoch_ = -1;
    double best_ = 0.0;
    std::vector<Matrix> snapshot_;
};

nlohmann::json to_json(const std::vector<Parameter*>& params);
/// Loads values by name and shape; throws on any missing or mis-shaped entry.
void from_json(const nlohmann::json& j, const std::vector<Parameter*>& params);

}  // namespace fdia::ad
