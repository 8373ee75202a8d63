#include "fdia/layers.hpp"

#include "fdia/error.hpp"

#include <cmath>

namespace fdia::ad {

std::string to_string(Activation a) {
    switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw ParseError("unknown activation '" + s + "'");
}

Var activate(Var x, Activation a) {
    switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return tanh(x);
    case Activation::Relu: return relu(x);
    case Activation::Sigmoid: return sigmoid(x);
    }
    return x;
}

namespace {

Matrix apply(const Matrix& x, Activation a) {
    switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return x.array().tanh().matrix();
    case Activation::Relu: return x.cwiseMax(0.0);
    case Activation::Sigmoid: return (1.0 / (1.0 + (-x.array()).exp())).matrix();
    }
    return x;
}

}  // namespace

Parameter glorot(std::string name, Index rows, Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix v(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) v(i, j) = rng.uniform(-limit, limit);
    return Parameter(std::move(name), std::move(v));
}

Dense::Dense(std::string name, Index in, Index out, Activation act, Rng& rng)
    : weight(glorot(name + ".weight", in, out, rng)),
      bias(name + ".bias", Matrix::Zero(1, out)),
      activation(act) {}

Var Dense::forward(Tape& tape, Var x) {
    if (x.cols() != in())
        throw ValidationError("dense " + weight.name + ": input width " + std::to_string(x.cols()) +
                              ", expected " + std::to_string(in()));
    return activate(add_row(matmul(x, tape.parameter(weight)), tape.parameter(bias)), activation);
}

Matrix Dense::predict(const Matrix& x) const {
    if (x.cols() != in())
        throw ValidationError("dense " + weight.name + ": input width " + std::to_string(x.cols()) +
                              ", expected " + std::to_string(in()));
    Matrix y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return apply(y, activation);
}

GRUCell::GRUCell(std::string name, Index in, Index hidden, Rng& rng)
    : w_input(glorot(name + ".w_input", in, 3 * hidden, rng)),
      w_hidden(glorot(name + ".w_hidden", hidden, 3 * hidden, rng)),
      b_input(name + ".b_input", Matrix::Zero(1, 3 * hidden)),
      b_hidden(name + ".b_hidden", Matrix::Zero(1, 3 * hidden)) {}

Var GRUCell::project(Tape& tape, Var x) {
    if (x.cols() != in())
        throw ValidationError("gru " + w_input.name + ": input width " + std::to_string(x.cols()) +
                              ", expected " + std::to_string(in()));
    return add_row(matmul(x, tape.parameter(w_input)), tape.parameter(b_input));
}

Var GRUCell::step_projected(Tape& tape, Var gi, Var h) {
    const Index hd = hidden();
    if (h.cols() != hd || gi.cols() != 3 * hd || gi.rows() != h.rows())
        throw ValidationError("gru " + w_input.name + ": state shape mismatch");
    Var gh = add_row(matmul(h, tape.parameter(w_hidden)), tape.parameter(b_hidden));
    Var r = sigmoid(slice_cols(gi, 0, hd) + slice_cols(gh, 0, hd));
    Var z = sigmoid(slice_cols(gi, hd, hd) + slice_cols(gh, hd, hd));
    Var n = tanh(slice_cols(gi, 2 * hd, hd) + r * slice_cols(gh, 2 * hd, hd));
    return one_minus(z) * n + z * h;
}

GraphAttention::GraphAttention(std::string name, Index in, Index out, Rng& rng, double negative_slope)
    : weight(glorot(name + ".weight", in, out, rng)),
      attention(glorot(name + ".attention", 2 * out, 1, rng)),
      slope(negative_slope) {}

Var GraphAttention::transform(Tape& tape, Var h) {
    if (h.cols() != in())
        throw ValidationError("attention " + weight.name + ": feature width " + std::to_string(h.cols()) +
                              ", expected " + std::to_string(in()));
    return matmul(h, tape.parameter(weight));
}

Var GraphAttention::coefficients_from_keys(Tape& tape, Var keys, const BoolArray& mask) {
    const Index width = attention.value.rows() / 2;
    if (keys.cols() != width)
        throw ValidationError("attention " + attention.name + ": key width " + std::to_string(keys.cols()) +
                              ", expected " + std::to_string(width));
    Var a = tape.parameter(attention);
    Var source = matmul(keys, slice_rows(a, 0, width));      // a1^T k_i
    Var target = matmul(keys, slice_rows(a, width, width));  // a2^T k_j
    return masked_softmax_rows(leaky_relu(outer_sum(source, transpose(target)), slope), mask);
}

Var GraphAttention::coefficients(Tape& tape, Var h, const BoolArray& mask) {
    return coefficients_from_keys(tape, transform(tape, h), mask);
}

Var GraphAttention::aggregate(Tape&, Var transformed, Var alpha) {
    if (alpha.cols() != transformed.rows())
        throw ValidationError("attention " + weight.name + ": alpha has " + std::to_string(alpha.cols()) +
                              " columns for " + std::to_string(transformed.rows()) + " nodes");
    return relu(matmul(alpha, transformed));
}

Var GraphAttention::forward(Tape& tape, Var h, const BoolArray& mask) {
    Var z = transform(tape, h);
    return aggregate(tape, z, coefficients_from_keys(tape, z, mask));
}

Var block_attention(Tape&, Var keys, Var attention, const BoolArray& mask, Index block, double slope) {
    const Index width = attention.rows() / 2;
    if (keys.cols() != width || attention.cols() != 1)
        throw ValidationError("attention: key width " + std::to_string(keys.cols()) + ", expected " +
                              std::to_string(width));
    if (mask.rows() != block || mask.cols() != block)
        throw ValidationError("attention: mask must be block x block");
    Var source = matmul(keys, slice_rows(attention, 0, width));
    Var target = matmul(keys, slice_rows(attention, width, width));
    const BoolArray tiled = mask.replicate(keys.rows() / block, 1);
    return masked_softmax_rows(leaky_relu(block_outer_sum(source, target, block), slope), tiled);
}

Var GraphAttention::forward_blocks(Tape& tape, Var h, const BoolArray& mask, Index block) {
    Var z = transform(tape, h);
    Var alpha = block_attention(tape, z, tape.parameter(attention), mask, block, slope);
    return relu(block_matmul(alpha, z, block));
}

void Adam::step(const std::vector<Parameter*>& params) {
    ++step_count;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (Parameter* p : params) {
        if (p->moment1.size() != p->value.size()) {
            p->moment1 = Matrix::Zero(p->value.rows(), p->value.cols());
            p->moment2 = Matrix::Zero(p->value.rows(), p->value.cols());
        }
        p->moment1 = beta1 * p->moment1 + (1.0 - beta1) * p->grad;
        p->moment2 = beta2 * p->moment2 + (1.0 - beta2) * p->grad.cwiseAbs2();
        p->value.array() -= learning_rate * (p->moment1.array() / c1) /
                            ((p->moment2.array() / c2).sqrt() + epsilon);
    }
}

void zero_grad(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

bool EarlyStopping::update(double loss, const std::vector<Parameter*>& params) {
    if (!std::isfinite(loss)) throw NumericalError("training: non-finite validation loss");
    const int epoch = rounds_++;
    if (best_epoch_ < 0 || loss < best_) {
        best_ = loss;
        best_epoch_ = epoch;
        since_best_ = 0;
        snapshot_.clear();
        for (const Parameter* p : params) snapshot_.push_back(p->value);
    } else {
        ++since_best_;
    }
    return since_best_ >= patience_;
}

void EarlyStopping::restore(const std::vector<Parameter*>& params) const {
    if (snapshot_.size() != params.size()) return;
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot_[i];
}

nlohmann::json to_json(const std::vector<Parameter*>& params) {
    nlohmann::json out = nlohmann::json::array();
    for (const Parameter* p : params) {
        std::vector<double> values(static_cast<std::size_t>(p->value.size()));
        // Row-major on disk.
        std::size_t k = 0;
        for (Index i = 0; i < p->value.rows(); ++i)
            for (Index j = 0; j < p->value.cols(); ++j) values[k++] = p->value(i, j);
        out.push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}, {"values", values}});
    }
    return out;
}

void from_json(const nlohmann::json& j, const std::vector<Parameter*>& params) {
    if (!j.is_array()) throw ParseError("checkpoint: parameters must be an array");
    for (Parameter* p : params) {
        const nlohmann::json* found = nullptr;
        for (const auto& e : j)
            if (e.value("name", std::string{}) == p->name) found = &e;
        if (!found) throw ParseError("checkpoint: missing parameter '" + p->name + "'");
        const auto shape = found->at("shape").get<std::vector<Index>>();
        if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols())
            throw ParseError("checkpoint: parameter '" + p->name + "' has shape mismatch");
        const auto values = found->at("values").get<std::vector<double>>();
        if (static_cast<Index>(values.size()) != p->value.size())
            throw ParseError("checkpoint: parameter '" + p->name + "' has wrong value count");
        std::size_t k = 0;
        for (Index r = 0; r < p->value.rows(); ++r)
            for (Index c = 0; c < p->value.cols(); ++c) p->value(r, c) = values[k++];
        p->zero_grad();
    }
}

}  // namespace fdia::ad
