#include "fdia/autodiff.hpp"

#include "fdia/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fdia::ad {

namespace {

void require_same_tape(Var a, Var b) {
    if (a.tape() != b.tape() || !a.valid()) throw ValidationError("autodiff: operands on different tapes");
}

void require_shape(bool ok, const char* op, Var a, Var b) {
    if (!ok)
        throw ValidationError(std::string("autodiff: shape mismatch in ") + op + ": (" +
                              std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ") vs (" +
                              std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

}  // namespace

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, {}, &p, true});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::vector<int> inputs, Backward backward) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_[static_cast<std::size_t>(i)].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& g) { accumulate_expr(id, g); }

void Tape::accumulate_block(int id, Index row, Index col, const Matrix& g) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad.block(row, col, g.rows(), g.cols()) += g;
}

Matrix Tape::grad(Var v) const {
    const auto& n = nodes_[static_cast<std::size_t>(v.id_)];
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) throw ValidationError("autodiff: loss belongs to another tape");
    if (value(loss).size() != 1) throw ValidationError("autodiff: backward needs a scalar loss");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[static_cast<std::size_t>(loss.id_)].grad = Matrix::Ones(1, 1);
    for (int i = loss.id_; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.backward) {
            // Callbacks only touch earlier nodes, so the grad can be lent out.
            Matrix upstream = std::move(n.grad);
            n.backward(*this, upstream);
            n.grad = std::move(upstream);
        }
        if (n.param) n.param->grad += n.grad;
    }
}

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    require_shape(a.cols() == b.rows(), "matmul", a, b);
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
        if (t.needs_grad(ia)) t.accumulate_expr(ia, g * t.value_of(ib).transpose());
        if (t.needs_grad(ib)) t.accumulate_expr(ib, t.value_of(ia).transpose() * g);
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b);
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b);
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate_expr(ib, -g);
    });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b);
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(a.value().cwiseProduct(b.value()), {ia, ib},
                            [ia, ib](Tape& t, const Matrix& g) {
                                t.accumulate_expr(ia, g.cwiseProduct(t.value_of(ib)));
                                t.accumulate_expr(ib, g.cwiseProduct(t.value_of(ia)));
                            });
}

Var scale(Var a, double s) {
    const int ia = a.id();
    return a.tape()->record(a.value() * s, {ia},
                            [ia, s](Tape& t, const Matrix& g) { t.accumulate_expr(ia, g * s); });
}

Var add_scalar(Var a, double s) {
    const int ia = a.id();
    return a.tape()->record((a.value().array() + s).matrix(), {ia},
                            [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var add_row(Var a, Var row) {
    require_same_tape(a, row);
    require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a, row);
    const int ia = a.id(), ir = row.id();
    Matrix v = a.value().rowwise() + row.value().row(0);
    return a.tape()->record(std::move(v), {ia, ir}, [ia, ir](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate_expr(ir, g.colwise().sum());
    });
}

Var transpose(Var a) {
    const int ia = a.id();
    return a.tape()->record(a.value().transpose(), {ia},
                            [ia](Tape& t, const Matrix& g) { t.accumulate_expr(ia, g.transpose()); });
}

Var outer_sum(Var col, Var row) {
    require_same_tape(col, row);
    require_shape(col.cols() == 1 && row.rows() == 1, "outer_sum", col, row);
    const int ic = col.id(), ir = row.id();
    Matrix v = col.value().replicate(1, row.cols()).rowwise() + row.value().row(0);
    return col.tape()->record(std::move(v), {ic, ir}, [ic, ir](Tape& t, const Matrix& g) {
        t.accumulate_expr(ic, g.rowwise().sum());
        t.accumulate_expr(ir, g.colwise().sum());
    });
}

Var tanh(Var a) {
    const int ia = a.id();
    Matrix v = a.value().array().tanh().matrix();
    const int out = static_cast<int>(a.tape()->size());
    return a.tape()->record(std::move(v), {ia}, [ia, out](Tape& t, const Matrix& g) {
        const auto& y = t.value_of(out);
        t.accumulate_expr(ia, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

Var sigmoid(Var a) {
    const int ia = a.id();
    Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    const int out = static_cast<int>(a.tape()->size());
    return a.tape()->record(std::move(v), {ia}, [ia, out](Tape& t, const Matrix& g) {
        const auto& y = t.value_of(out);
        t.accumulate_expr(ia, (g.array() * y.array() * (1.0 - y.array())).matrix());
    });
}

Var relu(Var a) {
    const int ia = a.id();
    return a.tape()->record(a.value().cwiseMax(0.0), {ia}, [ia](Tape& t, const Matrix& g) {
        t.accumulate_expr(ia, (t.value_of(ia).array() > 0.0).select(g, 0.0).matrix());
    });
}

Var leaky_relu(Var a, double slope) {
    const int ia = a.id();
    Matrix v = (a.value().array() > 0.0).select(a.value(), slope * a.value().array()).matrix();
    return a.tape()->record(std::move(v), {ia}, [ia, slope](Tape& t, const Matrix& g) {
        t.accumulate_expr(ia, (t.value_of(ia).array() > 0.0).select(g, slope * g.array()).matrix());
    });
}

Var one_minus(Var a) {
    const int ia = a.id();
    return a.tape()->record((1.0 - a.value().array()).matrix(), {ia},
                            [ia](Tape& t, const Matrix& g) { t.accumulate_expr(ia, -g); });
}

Var square(Var a) {
    const int ia = a.id();
    return a.tape()->record(a.value().array().square().matrix(), {ia}, [ia](Tape& t, const Matrix& g) {
        t.accumulate_expr(ia, (2.0 * g.array() * t.value_of(ia).array()).matrix());
    });
}

Var abs(Var a) {
    const int ia = a.id();
    return a.tape()->record(a.value().cwiseAbs(), {ia}, [ia](Tape& t, const Matrix& g) {
        t.accumulate_expr(ia, (g.array() * t.value_of(ia).array().sign()).matrix());
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ValidationError("autodiff: concat_cols of nothing");
    const Index rows = parts.front().rows();
    Index cols = 0;
    std::vector<int> ids;
    std::vector<Index> offsets;
    for (const auto& p : parts) {
        require_same_tape(parts.front(), p);
        require_shape(p.rows() == rows, "concat_cols", parts.front(), p);
        offsets.push_back(cols);
        cols += p.cols();
        ids.push_back(p.id());
    }
    Matrix v(rows, cols);
    for (std::size_t i = 0; i < parts.size(); ++i) v.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
    return parts.front().tape()->record(std::move(v), ids, [ids, offsets](Tape& t, const Matrix& g) {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (t.needs_grad(ids[i]))
                t.accumulate_expr(ids[i], g.middleCols(offsets[i], t.value_of(ids[i]).cols()));
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ValidationError("autodiff: concat_rows of nothing");
    const Index cols = parts.front().cols();
    Index rows = 0;
    std::vector<int> ids;
    std::vector<Index> offsets;
    for (const auto& p : parts) {
        require_same_tape(parts.front(), p);
        require_shape(p.cols() == cols, "concat_rows", parts.front(), p);
        offsets.push_back(rows);
        rows += p.rows();
        ids.push_back(p.id());
    }
    Matrix v(rows, cols);
    for (std::size_t i = 0; i < parts.size(); ++i) v.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
    return parts.front().tape()->record(std::move(v), ids, [ids, offsets](Tape& t, const Matrix& g) {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (t.needs_grad(ids[i]))
                t.accumulate_expr(ids[i], g.middleRows(offsets[i], t.value_of(ids[i]).rows()));
    });
}

Var slice_rows(Var a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows())
        throw ValidationError("autodiff: slice_rows out of range");
    const int ia = a.id();
    return a.tape()->record(a.value().middleRows(start, count), {ia},
                            [ia, start](Tape& t, const Matrix& g) { t.accumulate_block(ia, start, 0, g); });
}

Var slice_cols(Var a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols())
        throw ValidationError("autodiff: slice_cols out of range");
    const int ia = a.id();
    return a.tape()->record(a.value().middleCols(start, count), {ia},
                            [ia, start](Tape& t, const Matrix& g) { t.accumulate_block(ia, 0, start, g); });
}

Var gather_rows(Var a, const std::vector<Index>& rows) {
    const int ia = a.id();
    const Index n = a.rows();
    Matrix v(static_cast<Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= n) throw ValidationError("autodiff: gather_rows index out of range");
        v.row(static_cast<Index>(i)) = a.value().row(rows[i]);
    }
    return a.tape()->record(std::move(v), {ia}, [ia, rows](Tape& t, const Matrix& g) {
        if (!t.needs_grad(ia)) return;
        Matrix acc = Matrix::Zero(t.value_of(ia).rows(), t.value_of(ia).cols());
        for (std::size_t i = 0; i < rows.size(); ++i) acc.row(rows[i]) += g.row(static_cast<Index>(i));
        t.accumulate(ia, acc);
    });
}

namespace {

Index block_count(Index rows, Index block, const char* op) {
    if (block < 1 || rows % block != 0)
        throw ValidationError(std::string("autodiff: ") + op + " rows " + std::to_string(rows) +
                              " not a multiple of block " + std::to_string(block));
    return rows / block;
}

}  // namespace

Var block_outer_sum(Var col, Var row, Index block) {
    require_same_tape(col, row);
    require_shape(col.cols() == 1 && row.cols() == 1 && col.rows() == row.rows(), "block_outer_sum", col, row);
    const Index nb = block_count(col.rows(), block, "block_outer_sum");
    Matrix v(col.rows(), block);
    for (Index b = 0; b < nb; ++b)
        v.middleRows(b * block, block) =
            col.value().middleRows(b * block, block).replicate(1, block).rowwise() +
            row.value().middleRows(b * block, block).transpose().row(0);
    const int ic = col.id(), ir = row.id();
    return col.tape()->record(std::move(v), {ic, ir}, [ic, ir, nb, block](Tape& t, const Matrix& g) {
        if (t.needs_grad(ic)) t.accumulate_expr(ic, g.rowwise().sum());
        if (t.needs_grad(ir)) {
            Matrix gr(nb * block, 1);
            for (Index b = 0; b < nb; ++b)
                gr.middleRows(b * block, block) = g.middleRows(b * block, block).colwise().sum().transpose();
            t.accumulate(ir, gr);
        }
    });
}

Var block_matmul(Var a, Var b, Index block) {
    require_same_tape(a, b);
    require_shape(a.cols() == block && a.rows() == b.rows(), "block_matmul", a, b);
    const Index nb = block_count(a.rows(), block, "block_matmul");
    Matrix v(a.rows(), b.cols());
    for (Index k = 0; k < nb; ++k)
        v.middleRows(k * block, block).noalias() =
            a.value().middleRows(k * block, block) * b.value().middleRows(k * block, block);
    const int ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(v), {ia, ib}, [ia, ib, nb, block](Tape& t, const Matrix& g) {
        const Matrix& av = t.value_of(ia);
        const Matrix& bv = t.value_of(ib);
        if (t.needs_grad(ia)) {
            Matrix ga(av.rows(), av.cols());
            for (Index k = 0; k < nb; ++k)
                ga.middleRows(k * block, block).noalias() =
                    g.middleRows(k * block, block) * bv.middleRows(k * block, block).transpose();
            t.accumulate(ia, ga);
        }
        if (t.needs_grad(ib)) {
            Matrix gb(bv.rows(), bv.cols());
            for (Index k = 0; k < nb; ++k)
                gb.middleRows(k * block, block).noalias() =
                    av.middleRows(k * block, block).transpose() * g.middleRows(k * block, block);
            t.accumulate(ib, gb);
        }
    });
}

namespace {

Matrix transpose_blocks(const Matrix& a, Index block) {
    const Index nb = a.rows() / block;
    const Index c = a.cols();
    Matrix v(nb * c, block);
    for (Index k = 0; k < nb; ++k) v.middleRows(k * c, c) = a.middleRows(k * block, block).transpose();
    return v;
}

}  // namespace

Var block_transpose(Var a, Index block) {
    block_count(a.rows(), block, "block_transpose");
    const int ia = a.id();
    const Index c = a.cols();
    return a.tape()->record(transpose_blocks(a.value(), block), {ia},
                            [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, transpose_blocks(g, c)); });
}

Var masked_softmax_rows(Var logits, const BoolArray& mask) {
    const auto& x = logits.value();
    if (mask.rows() != x.rows() || mask.cols() != x.cols())
        throw ValidationError("autodiff: softmax mask shape differs from logits");
    Matrix v = Matrix::Zero(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < x.cols(); ++j)
            if (mask(i, j)) mx = std::max(mx, x(i, j));
        if (mx == -std::numeric_limits<double>::infinity())
            throw ValidationError("attention: node " + std::to_string(i) + " has an empty neighborhood");
        double z = 0.0;
        for (Index j = 0; j < x.cols(); ++j)
            if (mask(i, j)) z += (v(i, j) = std::exp(x(i, j) - mx));
        v.row(i) /= z;
    }
    const int il = logits.id();
    const int out = static_cast<int>(logits.tape()->size());
    return logits.tape()->record(std::move(v), {il}, [il, out](Tape& t, const Matrix& g) {
        const auto& y = t.value_of(out);
        const Eigen::VectorXd dot = (g.cwiseProduct(y)).rowwise().sum();
        t.accumulate_expr(il, (y.array() * (g.colwise() - dot).array()).matrix());
    });
}

Var sum(Var a) {
    const int ia = a.id();
    Matrix v(1, 1);
    v(0, 0) = a.value().sum();
    return a.tape()->record(std::move(v), {ia}, [ia](Tape& t, const Matrix& g) {
        const auto& x = t.value_of(ia);
        t.accumulate_expr(ia, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
    });
}

Var mean(Var a) {
    const auto n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

Var mse(Var prediction, const Matrix& target) {
    const auto& p = prediction.value();
    if (p.rows() != target.rows() || p.cols() != target.cols())
        throw ValidationError("autodiff: mse target shape (" + std::to_string(target.rows()) + "x" +
                              std::to_string(target.cols()) + ") differs from prediction (" +
                              std::to_string(p.rows()) + "x" + std::to_string(p.cols()) + ")");
    const double n = static_cast<double>(p.size());
    Matrix diff = p - target;
    Matrix v(1, 1);
    v(0, 0) = diff.squaredNorm() / n;
    const int ip = prediction.id();
    return prediction.tape()->record(std::move(v), {ip}, [ip, diff = std::move(diff), n](Tape& t, const Matrix& g) {
        t.accumulate_expr(ip, diff * (2.0 * g(0, 0) / n));
    });
}

}  // namespace fdia::ad
