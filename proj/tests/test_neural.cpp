#include "gradcheck.hpp"
#include "support.hpp"

#include "fdia/autoencoder.hpp"
#include "fdia/error.hpp"
#include "fdia/layers.hpp"
#include "fdia/rng.hpp"
#include "fdia/training.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace fdia;
using namespace fdia::ad;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("elementwise and shape ops pass finite-difference checks") {
    Rng rng(1);
    Parameter a("a", random_matrix(3, 4, rng)), b("b", random_matrix(3, 4, rng)), c("c", random_matrix(4, 2, rng));
    Parameter row("row", random_matrix(1, 4, rng)), col("col", random_matrix(3, 1, rng));
    const Matrix target = random_matrix(3, 2, rng);
    const auto r = test::gradient_check({&a, &b, &c, &row, &col}, [&](Tape& t) {
        Var A = t.parameter(a), B = t.parameter(b), C = t.parameter(c), R = t.parameter(row), K = t.parameter(col);
        Var x = add_row(A * B + scale(A, 0.5) - B, R);
        x = concat_cols({tanh(x), sigmoid(slice_cols(x, 1, 2)), leaky_relu(x, 0.2)});
        x = slice_cols(x, 2, 4);
        Var y = matmul(x, C);
        y = add(y, outer_sum(K, slice_rows(C, 0, 1)));
        Var z = concat_rows({square(y), abs(add_scalar(y, 0.3)), one_minus(relu(y))});
        Var g = gather_rows(z, {0, 4, 8, 2});
        return add(mse(slice_rows(z, 0, 3), target), mean(g));
    });
    CHECK_MESSAGE(r.worst < kTol, r.where);
}

TEST_CASE("outer sums and masked softmax") {
    Rng rng(2);
    Parameter u("u", random_matrix(4, 1, rng)), v("v", random_matrix(1, 4, rng));
    BoolArray mask = BoolArray::Constant(4, 4, true);
    mask(0, 1) = mask(2, 3) = mask(3, 0) = false;
    const Matrix w = random_matrix(4, 4, rng);
    const auto r = test::gradient_check({&u, &v}, [&](Tape& t) {
        Var s = masked_softmax_rows(leaky_relu(outer_sum(t.parameter(u), t.parameter(v)), 0.2), mask);
        return sum(mul(s, t.constant(w)));
    });
    CHECK_MESSAGE(r.worst < kTol, r.where);

    Tape t;
    BoolArray empty = mask;
    empty.row(2).setConstant(false);
    try {
        masked_softmax_rows(t.constant(w), empty);
        FAIL("expected an empty-neighborhood error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("node 2") != std::string::npos);
    }
}

TEST_CASE("block-batched graph ops") {
    Rng rng(3);
    const Index block = 3, batch = 2;
    Parameter col("col", random_matrix(block * batch, 1, rng)), row("row", random_matrix(block * batch, 1, rng));
    Parameter feat("feat", random_matrix(block * batch, 2, rng));
    BoolArray mask = BoolArray::Constant(block, block, true);
    mask(1, 2) = false;
    const Matrix w = random_matrix(block * batch, 2, rng);
    const auto r = test::gradient_check({&col, &row, &feat}, [&](Tape& t) {
        Var logits = leaky_relu(block_outer_sum(t.parameter(col), t.parameter(row), block), 0.2);
        BoolArray tiled(block * batch, block);
        for (Index b = 0; b < batch; ++b) tiled.middleRows(b * block, block) = mask;
        Var alpha = masked_softmax_rows(logits, tiled);
        Var mixed = block_matmul(alpha, t.parameter(feat), block);
        Var flipped = block_transpose(mixed, block);
        return add(sum(mul(mixed, t.constant(w))), scale(sum(square(flipped)), 0.1));
    });
    CHECK_MESSAGE(r.worst < kTol, r.where);

    // Batched product agrees with per-block products.
    Tape t;
    Matrix a = random_matrix(block * batch, block, rng), b = random_matrix(block * batch, 2, rng);
    const Matrix out = block_matmul(t.constant(a), t.constant(b), block).value();
    for (Index i = 0; i < batch; ++i) {
        const Matrix expect = a.middleRows(i * block, block) * b.middleRows(i * block, block);
        CHECK((out.middleRows(i * block, block) - expect).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("dense layers pass finite-difference checks") {
    Rng rng(4);
    for (auto act : {Activation::Identity, Activation::Tanh, Activation::Sigmoid, Activation::Relu}) {
        Dense d("d", 5, 3, act, rng);
        d.bias.value = random_matrix(1, 3, rng, 0.3);
        Parameter x("x", random_matrix(7, 5, rng));
        const Matrix target = random_matrix(7, 3, rng);
        auto params = d.parameters();
        params.push_back(&x);
        const auto r = test::gradient_check(params, [&](Tape& t) { return mse(d.forward(t, t.parameter(x)), target); });
        CHECK_MESSAGE(r.worst < kTol, to_string(act) << ": " << r.where);
        CHECK((d.predict(x.value) - [&] {
                  Tape t;
                  return d.forward(t, t.constant(x.value)).value();
              }()).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("zero-weight dense layer outputs its bias") {
    Rng rng(5);
    Dense d("d", 4, 3, Activation::Identity, rng);
    d.weight.value.setZero();
    d.bias.value << 0.5, -1.0, 2.0;
    const Matrix y = d.predict(random_matrix(6, 4, rng));
    for (Index i = 0; i < 6; ++i) CHECK(y.row(i) == d.bias.value);
}

TEST_CASE("linear layer with squared error has the closed-form gradient") {
    Rng rng(6);
    Dense d("lin", 3, 1, Activation::Identity, rng);
    const Matrix x = random_matrix(10, 3, rng), y = random_matrix(10, 1, rng);
    d.weight.zero_grad();
    d.bias.zero_grad();
    Tape t;
    t.backward(mse(d.forward(t, t.constant(x)), y));
    const Matrix residual = (x * d.weight.value).rowwise() + d.bias.value.row(0) - y;
    const Matrix expect = 2.0 * x.transpose() * residual / 10.0;
    CHECK((d.weight.grad - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("GRU cell passes finite-difference checks over several steps") {
    Rng rng(7);
    GRUCell cell("gru", 3, 4, rng);
    for (auto* p : cell.parameters())
        if (p->name.find("b_") != std::string::npos || p->value.rows() == 1) p->value = random_matrix(1, 12, rng, 0.2);
    Parameter x("x", random_matrix(2 * 3, 3, rng));
    Parameter h0("h0", random_matrix(2, 4, rng, 0.5));
    auto params = cell.parameters();
    params.push_back(&x);
    params.push_back(&h0);
    const auto r = test::gradient_check(params, [&](Tape& t) {
        Var h = t.parameter(h0);
        Var proj = cell.project(t, t.parameter(x));
        for (Index s = 0; s < 3; ++s) h = cell.step_projected(t, slice_rows(proj, s * 2, 2), h);
        Var h2 = cell.step(t, slice_rows(t.parameter(x), 0, 2), h);
        return sum(mul(h2, h2));
    });
    CHECK_MESSAGE(r.worst < kTol, r.where);
}

TEST_CASE("graph attention layer passes finite-difference checks") {
    Rng rng(8);
    GraphAttention layer("gat", 3, 4, rng);
    Parameter h("h", random_matrix(5, 3, rng));
    BoolArray mask = BoolArray::Constant(5, 5, true);
    mask(0, 0) = mask(1, 3) = mask(4, 2) = false;
    const Matrix w = random_matrix(5, 4, rng);
    auto params = layer.parameters();
    params.push_back(&h);
    const auto r = test::gradient_check(params, [&](Tape& t) { return sum(mul(layer.forward(t, t.parameter(h), mask), t.constant(w))); });
    CHECK_MESSAGE(r.worst < kTol, r.where);

    SUBCASE("batched form agrees and differentiates") {
        Parameter hb("hb", random_matrix(10, 3, rng));
        const Matrix wb = random_matrix(10, 4, rng);
        auto pb = layer.parameters();
        pb.push_back(&hb);
        const auto rb = test::gradient_check(pb, [&](Tape& t) {
            return sum(mul(layer.forward_blocks(t, t.parameter(hb), mask, 5), t.constant(wb)));
        });
        CHECK_MESSAGE(rb.worst < kTol, rb.where);
        Tape t;
        const Matrix batched = layer.forward_blocks(t, t.constant(hb.value), mask, 5).value();
        for (Index b = 0; b < 2; ++b) {
            const Matrix one = layer.forward(t, t.constant(hb.value.middleRows(b * 5, 5)), mask).value();
            CHECK((batched.middleRows(b * 5, 5) - one).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("adam moves toward the minimum and early stopping tracks the best") {
    Parameter p("p", Matrix::Constant(1, 2, 3.0));
    Adam opt;
    opt.learning_rate = 0.1;
    for (int i = 0; i < 300; ++i) {
        p.zero_grad();
        Tape t;
        t.backward(sum(square(t.parameter(p))));
        opt.step({&p});
    }
    CHECK(p.value.cwiseAbs().maxCoeff() < 0.05);

    EarlyStopping stop(2);
    Parameter q("q", Matrix::Constant(1, 1, 0.0));
    const double losses[] = {5, 4, 4.5, 3, 3.5, 3.2, 9};
    bool stopped = false;
    int i = 0;
    for (; i < 7 && !stopped; ++i) {
        q.value(0, 0) = i;
        stopped = stop.update(losses[i], {&q});
    }
    CHECK(stopped);
    CHECK(i == 6);
    CHECK(stop.best() == 3.0);
    CHECK(stop.best_epoch() == 3);
    stop.restore({&q});
    CHECK(q.value(0, 0) == 3.0);

    EarlyStopping once(0);
    CHECK(once.update(1.0, {&q}));
    CHECK(once.rounds() == 1);
}

TEST_CASE("fit returns the best validation checkpoint and rejects non-finite losses") {
    Rng rng(9);
    const Matrix x = random_matrix(40, 2, rng), y = x * (Matrix(2, 1) << 1.5, -0.5).finished();
    Dense d("d", 2, 1, Activation::Identity, rng);
    std::vector<Index> all(40);
    for (Index i = 0; i < 40; ++i) all[static_cast<std::size_t>(i)] = i;
    auto val = [&] { return (d.predict(x) - y).array().square().mean(); };
    TrainConfig cfg{0.05, 50, 8, 0.1, 3, 4};
    const auto s = fit(d.parameters(), all, [&](Tape& t, std::span<const Index> rows) {
        Matrix xb(static_cast<Index>(rows.size()), 2), yb(static_cast<Index>(rows.size()), 1);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            xb.row(static_cast<Index>(i)) = x.row(rows[i]);
            yb.row(static_cast<Index>(i)) = y.row(rows[i]);
        }
        return mse(d.forward(t, t.constant(xb)), yb);
    }, val, cfg);
    CHECK(std::isfinite(s.best_validation));
    CHECK(val() == doctest::Approx(s.best_validation).epsilon(1e-12));
    CHECK(s.best_validation == *std::min_element(s.validation_loss.begin(), s.validation_loss.end()));
    for (double l : s.training_loss) CHECK(l >= 0);

    CHECK_THROWS_AS(fit(d.parameters(), all,
                        [&](Tape& t, std::span<const Index>) {
                            return scale(sum(t.parameter(d.bias)), std::numeric_limits<double>::quiet_NaN());
                        },
                        val, cfg),
                    NumericalError);

    TrainConfig bad = cfg;
    bad.validation_fraction = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.learning_rate = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("autoencoder shape and gradients") {
    auto m = make_default_autoencoder([] {
        std::vector<int> ids;
        for (int i = 2; i <= 68; ++i) ids.push_back(i);
        return ids;
    }(), 3);
    CHECK(m.input_width() == 67);
    CHECK(m.bottleneck_width() == 8);
    CHECK(m.layers.size() == 4);
    CHECK(m.layers.back().out() == 67);

    auto small = make_autoencoder({4, 3, 2, 3, 4}, {1, 2, 3, 4}, 11);
    Rng rng(10);
    const Matrix x = random_matrix(6, 4, rng);
    const auto r = test::gradient_check(small.parameters(), [&](Tape& t) {
        Var out = small.forward(t, t.constant(x));
        return mse(out, x);
    });
    CHECK_MESSAGE(r.worst < kTol, r.where);
    CHECK_THROWS_AS(make_autoencoder({4, 5, 4}, {1, 2, 3, 4}, 1).validate(), ValidationError);
}

TEST_CASE("reconstruction losses match a naive double loop") {
    auto m = make_autoencoder({5, 2, 5}, {1, 2, 3, 4, 5}, 12);
    Rng rng(11);
    const Matrix x = random_matrix(9, 5, rng);
    const auto rep = reconstruction_report(m, x);
    const Matrix xh = m.reconstruct(x);
    for (Index s = 0; s < 9; ++s) {
        double l = 0;
        for (Index j = 0; j < 5; ++j) l += (x(s, j) - xh(s, j)) * (x(s, j) - xh(s, j));
        CHECK(std::abs(rep.sample_loss(s) - l) < 1e-12);
        CHECK(rep.sample_loss(s) >= 0);
    }
    for (Index j = 0; j < 5; ++j) {
        double e = 0;
        for (Index s = 0; s < 9; ++s) e += (x(s, j) - xh(s, j)) * (x(s, j) - xh(s, j));
        CHECK(std::abs(rep.sensor_error(j) - e / 9.0) < 1e-12);
    }
}

TEST_CASE("rank-1 data is learned by a width-1 bottleneck") {
    Rng rng(12);
    Eigen::RowVectorXd dir(6);
    dir << 0.5, -0.3, 0.8, 0.1, -0.6, 0.2;
    dir.normalize();
    Matrix x(400, 6);
    for (Index i = 0; i < 400; ++i) x.row(i) = rng.uniform(-1, 1) * dir;
    // Closed-form rank-1 projection reconstructs exactly.
    Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinV);
    const Eigen::VectorXd v = svd.matrixV().col(0);
    CHECK((x - x * v * v.transpose()).squaredNorm() / 400 < 1e-20);

    auto m = make_autoencoder({6, 1, 6}, {1, 2, 3, 4, 5, 6}, 5, Activation::Identity);
    const auto s = train_autoencoder(m, x, TrainConfig{1e-2, 400, 32, 0.1, 30, 5});
    CHECK(s.training_loss.back() < 1e-3);
    CHECK(reconstruction_report(m, x).sample_loss.mean() < 1e-3 * 6);
}

TEST_CASE("autoencoder training contracts") {
    SUBCASE("zero data has zero loss immediately") {
        auto m = make_autoencoder({4, 2, 4}, {1, 2, 3, 4}, 6);
        const auto s = train_autoencoder(m, Matrix::Zero(50, 4), TrainConfig{1e-3, 20, 16, 0.1, 5, 1});
        CHECK(s.training_loss.front() == 0.0);
        CHECK(s.best_validation == 0.0);
        CHECK(s.epochs == 1);
    }
    SUBCASE("patience 0 runs one validation round") {
        Rng rng(13);
        auto m = make_autoencoder({4, 2, 4}, {1, 2, 3, 4}, 6);
        const auto s = train_autoencoder(m, random_matrix(50, 4, rng), TrainConfig{1e-3, 20, 16, 0.1, 0, 1});
        CHECK(s.validation_loss.size() == 1);
    }
    SUBCASE("fixed seed gives identical parameters") {
        Rng rng(14);
        const Matrix x = random_matrix(80, 4, rng);
        auto a = make_autoencoder({4, 2, 4}, {1, 2, 3, 4}, 8);
        auto b = make_autoencoder({4, 2, 4}, {1, 2, 3, 4}, 8);
        train_autoencoder(a, x, TrainConfig{1e-2, 15, 16, 0.1, 5, 3});
        train_autoencoder(b, x, TrainConfig{1e-2, 15, 16, 0.1, 5, 3});
        const auto pa = a.parameters(), pb = b.parameters();
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
        CHECK(to_json(a).dump() == to_json(b).dump());
        const auto back = autoencoder_from_json(to_json(a));
        CHECK(back.reconstruct(x) == a.reconstruct(x));
    }
    SUBCASE("non-finite input aborts") {
        auto m = make_autoencoder({4, 2, 4}, {1, 2, 3, 4}, 6);
        Matrix x = Matrix::Ones(20, 4);
        x(3, 1) = std::numeric_limits<double>::infinity();
        CHECK_THROWS(train_autoencoder(m, x, TrainConfig{1e-3, 5, 8, 0.1, 2, 1}));
    }
}

TEST_CASE("autoencoder window detector") {
    Rng rng(15);
    const Index sensors = 20;
    std::vector<int> ids;
    for (Index i = 0; i < sensors; ++i) ids.push_back(static_cast<int>(i + 2));
    const Matrix train = random_matrix(600, sensors, rng, 0.1);
    auto m = make_autoencoder({sensors, 16, 4, 16, sensors}, ids, 3);
    train_autoencoder(m, train, TrainConfig{1e-3, 30, 32, 0.1, 5, 2});

    WindowMatrix w;
    w.sensor_ids = ids;
    w.values = random_matrix(sensors, 50, rng, 0.1);
    w.values.row(7).array() += 1.0;  // 10 sigma
    const auto rep = reconstruction_report(m, w.values.transpose());
    Index worst = 0;
    rep.sensor_error.maxCoeff(&worst);
    CHECK(worst == 7);
    const auto v = autoencoder_window_detector(m, w, 0.8, 4);
    CHECK(v.fired);
    CHECK(v.flagged == std::vector<int>{ids[7]});

    WindowMatrix same;
    same.sensor_ids = ids;
    same.values = train.topRows(50).transpose();
    CHECK_FALSE(autoencoder_window_detector(m, same, 0.8, 4).fired);
}
