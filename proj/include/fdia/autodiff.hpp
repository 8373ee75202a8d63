#pragma once

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace fdia::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Trainable tensor. `grad` accumulates across backward passes until zeroed.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix moment1;  // optimizer state
    Matrix moment2;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
    Index size() const noexcept { return value.size(); }
};

class Tape;

/// Handle to a node on a Tape.
class Var {
public:
    Var() = default;
    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    Tape* tape() const noexcept { return tape_; }
    int id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Reverse-mode tape over dense matrices. Build the graph with the free
/// functions below, then call backward() once on a 1x1 loss.
class Tape {
public:
    Var constant(Matrix value);
    Var parameter(Parameter& p);

    void backward(Var loss);
    const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].value; }
    /// Gradient of the last backward() target w.r.t. `v` (zero if unreached).
    Matrix grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    // Used by op implementations.
    using Backward = std::function<void(Tape&, const Matrix& upstream)>;
    Var record(Matrix value, std::vector<int> inputs, Backward backward);
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    void accumulate(int id, const Matrix& g);
    template <typename Expr>
    void accumulate_expr(int id, const Expr& g) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return;
        if (n.grad.size() == 0) n.grad = g;
        else n.grad += g;
    }
    void accumulate_block(int id, Index row, Index col, const Matrix& g);
    const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// Linear algebra
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  ///< elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_row(Var a, Var row);  ///< a (n x m) + broadcast row (1 x m)
Var transpose(Var a);
Var outer_sum(Var col, Var row);  ///< col (n x 1), row (1 x m) -> col_i + row_j

// Nonlinearities
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var one_minus(Var a);
Var square(Var a);
Var abs(Var a);

// Shape
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);
Var gather_rows(Var a, const std::vector<Index>& rows);

// Block-batched graph ops. A batch stacks B graphs of `block` nodes along the rows.
/// col, row (B*block x 1) -> (B*block x block): out[b*block+i, j] = col[b*block+i] + row[b*block+j].
Var block_outer_sum(Var col, Var row, Index block);
/// a (B*block x block), b (B*block x p) -> per-block products a_b * b_b.
Var block_matmul(Var a, Var b, Index block);
/// a (B*block x c) -> (B*c x block), transposing each block.
Var block_transpose(Var a, Index block);

/// Row-wise softmax restricted to `mask` (entries outside get weight 0).
Var masked_softmax_rows(Var logits, const BoolArray& mask);

// Reductions and losses (1 x 1 results)
Var sum(Var a);
Var mean(Var a);
/// Mean of squared differences against a constant target.
Var mse(Var prediction, const Matrix& target);

// Operator sugar
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace fdia::ad
