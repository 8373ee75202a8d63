#include "gradcheck.hpp"
#include "support.hpp"

#include "fdia/error.hpp"
#include "fdia/gat.hpp"
#include "fdia/gdn.hpp"
#include "fdia/graph_attention.hpp"
#include "fdia/rng.hpp"
#include "fdia/scores.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace fdia;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
    MatrixXd m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

Neighborhood random_neighborhood(Index n, Rng& rng) {
    Neighborhood nb(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j)
            if (rng.uniform() < 0.5) nb[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
        if (nb[static_cast<std::size_t>(i)].empty()) nb[static_cast<std::size_t>(i)].push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
    }
    return nb;
}

// Three shared oscillation modes mixed with fixed random weights per sensor, plus sensor noise.
// Sensors are correlated but not exact linear copies of each other.
MeasurementTrace sinusoid_trace(Index sensors, double seconds, double rate, double phase, std::uint64_t noise_seed,
                                double noise = 0.05) {
    const auto n = static_cast<Index>(std::lround(seconds * rate));
    Rng mix(5);
    MatrixXd gain(sensors, 3), offset(sensors, 3);
    for (Index j = 0; j < sensors; ++j)
        for (Index m = 0; m < 3; ++m) {
            gain(j, m) = mix.normal();
            offset(j, m) = mix.uniform(0, 6.28);
        }
    const double freq[3] = {1.3, 0.7, 2.1};
    MatrixXd a(n, sensors);
    for (Index k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / rate;
        for (Index j = 0; j < sensors; ++j) {
            double v = 0;
            for (Index m = 0; m < 3; ++m) v += gain(j, m) * std::sin(freq[m] * t + phase * static_cast<double>(m + 1) + offset(j, m));
            a(k, j) = v + noise * counter_normal(noise_seed, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k));
        }
    }
    std::vector<int> ids;
    for (Index j = 0; j < sensors; ++j) ids.push_back(static_cast<int>(j + 2));
    return test::make_trace(a, rate, ids);
}

GdnConfig small_gdn() {
    GdnConfig c;
    c.embedding_dim = 4;
    c.top_k = 4;
    c.hidden = 8;
    c.window_seconds = 1.0;
    c.train_stride = 1;
    c.train = {1e-2, 60, 16, 0.3, 10, 3};
    return c;
}

GatConfig small_gat() {
    GatConfig c;
    c.hidden = 6;
    c.forecast_hidden = 8;
    c.window_seconds = 1.0;
    c.train_stride = 2;
    c.train = {5e-3, 15, 16, 0.2, 5, 3};
    return c;
}

}  // namespace

TEST_CASE("attention coefficients") {
    Rng rng(1);
    ad::GraphAttention layer("att", 3, 4, rng);
    SUBCASE("identical features give uniform weights") {
        const MatrixXd h = MatrixXd::Constant(5, 3, 0.7);
        const auto nb = random_neighborhood(5, rng);
        const MatrixXd alpha = attention_coefficients(layer, h, nb);
        for (Index i = 0; i < 5; ++i) {
            const auto& ni = nb[static_cast<std::size_t>(i)];
            for (Index j = 0; j < 5; ++j) {
                const bool in = std::find(ni.begin(), ni.end(), static_cast<int>(j)) != ni.end();
                CHECK(alpha(i, j) == doctest::Approx(in ? 1.0 / static_cast<double>(ni.size()) : 0.0).epsilon(1e-14));
            }
        }
    }
    SUBCASE("rows are distributions on random inputs") {
        for (int trial = 0; trial < 100; ++trial) {
            const Index n = 2 + static_cast<Index>(rng.below(8));
            const MatrixXd h = random_matrix(n, 3, rng, 3.0);
            const auto nb = random_neighborhood(n, rng);
            const MatrixXd alpha = attention_coefficients(layer, h, nb);
            CHECK((alpha.array() >= 0).all());
            CHECK((alpha.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("two-node graph by hand") {
        ad::GraphAttention two("two", 1, 1, rng);
        two.weight.value(0, 0) = 2.0;
        two.attention.value << 0.5, -1.0;
        MatrixXd h(2, 1);
        h << 1.0, -0.5;
        const MatrixXd alpha = attention_coefficients(two, h, fully_connected(2));
        auto leaky = [](double x) { return x > 0 ? x : 0.2 * x; };
        const double wh[2] = {2.0, -1.0};
        for (int i = 0; i < 2; ++i) {
            const double e0 = leaky(0.5 * wh[i] - 1.0 * wh[0]);
            const double e1 = leaky(0.5 * wh[i] - 1.0 * wh[1]);
            CHECK(alpha(i, 0) == doctest::Approx(std::exp(e0) / (std::exp(e0) + std::exp(e1))).epsilon(1e-14));
        }
    }
    SUBCASE("empty neighborhood names the node") {
        Neighborhood nb{{0, 1}, {}, {2}};
        try {
            attention_coefficients(layer, random_matrix(3, 3, rng), nb);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("node 1") != std::string::npos);
        }
    }
}

TEST_CASE("attention aggregation") {
    Rng rng(2);
    ad::GraphAttention layer("agg", 3, 2, rng);
    const MatrixXd h = random_matrix(4, 3, rng);
    const MatrixXd wh = h * layer.weight.value;
    SUBCASE("one-hot selects a neighbor") {
        MatrixXd alpha = MatrixXd::Zero(4, 4);
        alpha(0, 2) = alpha(1, 0) = alpha(2, 3) = alpha(3, 3) = 1.0;
        const MatrixXd out = attention_aggregate(layer, h, alpha);
        CHECK((out.row(0) - wh.row(2).cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((out.row(2) - wh.row(3).cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("zero features give zero output") {
        const MatrixXd out = attention_aggregate(layer, MatrixXd::Zero(4, 3), MatrixXd::Constant(4, 4, 0.25));
        CHECK(out.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("uniform pair averages") {
        MatrixXd alpha = MatrixXd::Zero(4, 4);
        alpha(0, 1) = alpha(0, 3) = 0.5;
        const MatrixXd out = attention_aggregate(layer, h, alpha);
        const Eigen::RowVectorXd mean = 0.5 * (h.row(1) + h.row(3));
        CHECK((out.row(0) - (mean * layer.weight.value).cwiseMax(0.0)).cwiseAbs().maxCoeff() < 1e-14);
    }
    CHECK_THROWS(attention_aggregate(layer, h, MatrixXd::Zero(3, 4)));
}

TEST_CASE("top-k graph learning") {
    SUBCASE("orthogonal embeddings fall back to the lowest other index") {
        const auto g = learn_graph_topk(MatrixXd::Identity(4, 4), 1);
        CHECK(g.neighbors[0] == std::vector<int>{1});
        for (int i = 1; i < 4; ++i) CHECK(g.neighbors[static_cast<std::size_t>(i)] == std::vector<int>{0});
    }
    SUBCASE("equal embeddings pick the first k others") {
        const auto g = learn_graph_topk(MatrixXd::Constant(5, 3, 1.0), 2);
        CHECK(g.neighbors[0] == std::vector<int>{1, 2});
        CHECK(g.neighbors[1] == std::vector<int>{0, 2});
        CHECK(g.neighbors[4] == std::vector<int>{0, 1});
    }
    SUBCASE("parallel clusters stay together") {
        MatrixXd e(6, 2);
        e << 1, 0.01, 2, 0.02, 0.5, 0.004, 0.01, 1, 0.03, 3, 0.02, 2;
        const auto g = learn_graph_topk(e, 1);
        for (int i = 0; i < 6; ++i) CHECK((g.neighbors[static_cast<std::size_t>(i)][0] < 3) == (i < 3));
        // Brute-force cosine check.
        for (int i = 0; i < 6; ++i) {
            int best = -1;
            double bs = -2;
            for (int j = 0; j < 6; ++j) {
                if (j == i) continue;
                const double s = e.row(i).dot(e.row(j)) / (e.row(i).norm() * e.row(j).norm());
                if (s > bs) bs = s, best = j;
            }
            CHECK(g.neighbors[static_cast<std::size_t>(i)][0] == best);
        }
    }
    SUBCASE("zero-norm embeddings are flagged with similarity -1") {
        MatrixXd e = MatrixXd::Identity(3, 3);
        e.row(1).setZero();
        const auto g = learn_graph_topk(e, 1);
        CHECK(g.zero_norm == std::vector<int>{1});
        CHECK(g.similarity(0, 1) == -1.0);
    }
    SUBCASE("every node gets exactly k distinct non-self neighbors") {
        Rng rng(4);
        const auto g = learn_graph_topk(random_matrix(12, 4, rng), 5);
        for (int i = 0; i < 12; ++i) {
            auto nb = g.neighbors[static_cast<std::size_t>(i)];
            CHECK(nb.size() == 5);
            CHECK(std::find(nb.begin(), nb.end(), i) == nb.end());
            std::sort(nb.begin(), nb.end());
            CHECK(std::adjacent_find(nb.begin(), nb.end()) == nb.end());
        }
    }
    CHECK_THROWS(learn_graph_topk(MatrixXd::Identity(3, 3), 3));
}

TEST_CASE("overall score is the max over sensors") {
    MatrixXd s(2, 3);
    s << 0.1, 0.9, 0.3, 2.0, 0.0, 1.0;
    const VectorXd a = max_over_sensors(s);
    CHECK(a(0) == 0.9);
    CHECK(a(1) == 2.0);
    Rng rng(5);
    const MatrixXd r = random_matrix(50, 7, rng).cwiseAbs();
    const VectorXd m = max_over_sensors(r);
    for (Index t = 0; t < 50; ++t) {
        double best = r(t, 0);
        for (Index j = 1; j < 7; ++j) best = std::max(best, r(t, j));
        CHECK(m(t) == best);
    }
}

TEST_CASE("threshold selection") {
    const std::vector<double> v{0.5, 2.0, 1.0};
    CHECK(select_threshold(v, 1.0).value == 2.0);
    CHECK(select_threshold(v, 1.5).value == 3.0);
    const std::vector<double> z{0.0, 0.0};
    const auto t = select_threshold(z, 1.0);
    CHECK(t.value == 0.0);
    CHECK(t.degenerate);
    CHECK_THROWS(select_threshold(std::vector<double>{}, 1.0));
}

TEST_CASE("robust scale") {
    MatrixXd e(5, 2);
    e << 1, 3, 2, 3, 3, 3, 4, 3, 5, 3;
    const auto s = fit_robust_scale(e);
    CHECK(s.median(0) == 3.0);
    CHECK(s.iqr(0) == doctest::Approx(2.0));
    CHECK(s.iqr(1) == kIqrFloor);
    const MatrixXd n = robust_normalize(e, s);
    CHECK(n(4, 0) == doctest::Approx(1.0));
    CHECK((n.array() >= 0).all());
}

namespace {

AnomalyScoreSeries series_of(const MatrixXd& s) {
    AnomalyScoreSeries a;
    a.detector = "test";
    a.sensor = s;
    for (Index j = 0; j < s.cols(); ++j) a.sensor_ids.push_back(static_cast<int>(j + 10));
    a.time = uniform_grid(s.rows(), 1.0);
    a.overall = max_over_sensors(s);
    return a;
}

}  // namespace

TEST_CASE("localization ranking") {
    MatrixXd s = MatrixXd::Constant(6, 4, 1.0);
    s.col(2).array() += 3.0;
    const auto l = localize(series_of(s), 0, 6);
    CHECK(l.ranked.front() == 12);
    CHECK(l.ranked == std::vector<int>{12, 10, 11, 13});  // ties by index

    Rng rng(6);
    const MatrixXd r = random_matrix(30, 6, rng).cwiseAbs();
    const auto base = localize(series_of(r), 5, 25);
    const auto scaled = localize(series_of(3.7 * r), 5, 25);
    CHECK(base.ranked == scaled.ranked);
    for (Index t = 0; t < 30; ++t) {
        Index i = 0, k = 0;
        r.row(t).maxCoeff(&i);
        (2.5 * r.row(t)).maxCoeff(&k);
        CHECK(i == k);
    }
    CHECK_THROWS(localize(series_of(r), 10, 10));
}

TEST_CASE("majority windows") {
    MatrixXd s = MatrixXd::Zero(10, 1);
    auto a = series_of(s);
    a.first_sample = 2;
    a.fired = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(10, false);
    // samples 2..11 scored; window [0,4) has 2 scored samples, [4,8) four, [8,12) four.
    a.fired(0) = true;              // sample 2
    a.fired(2) = a.fired(3) = true;  // samples 4, 5
    a.fired(6) = a.fired(7) = a.fired(8) = true;  // samples 8, 9, 10
    const auto w = majority_windows(a, 12, 4);
    CHECK(w == std::vector<bool>{false, false, true});
}

TEST_CASE("gdn forward passes finite-difference checks") {
    GdnConfig cfg = small_gdn();
    auto m = make_gdn({2, 3, 4, 5, 6}, 4, cfg);
    Rng rng(7);
    for (auto* p : m.parameters()) p->value += random_matrix(p->value.rows(), p->value.cols(), rng, 0.1);
    const MatrixXd blocks = random_matrix(2 * 5, 4, rng);
    const MatrixXd target = random_matrix(2 * 5, 1, rng);
    const auto mask = m.attention_mask();
    const auto r = test::gradient_check(m.parameters(), [&](ad::Tape& t) { return ad::mse(m.forward(t, blocks, mask), target); });
    CHECK_MESSAGE(r.worst < 1e-4, r.where);
}

TEST_CASE("gat combined loss passes finite-difference checks") {
    GatConfig cfg = small_gat();
    auto m = make_gat({2, 3, 4}, 4, cfg);
    Rng rng(8);
    const MatrixXd blocks = random_matrix(2 * 4, 3, rng);
    const MatrixXd next = random_matrix(2, 3, rng);
    const auto r = test::gradient_check(m.parameters(), [&](ad::Tape& t) { return gat_loss(m, t, blocks, next); }, 1e-5, 40);
    CHECK_MESSAGE(r.worst < 1e-4, r.where);
}

TEST_CASE("gdn on constant traces forecasts exactly") {
    std::vector<MeasurementTrace> normal{test::make_trace(MatrixXd::Zero(100, 6), 10.0, {2, 3, 4, 5, 6, 7})};
    auto cfg = small_gdn();
    cfg.train.max_epochs = 3;
    auto m = train_gdn(normal, cfg);
    const auto s = gdn_score(m, normal[0]);
    CHECK(s.sensor.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(m.threshold_degenerate);
    CHECK(s.fired_fraction() == 0.0);
}

TEST_CASE("gdn on normal oscillations and an injected fault") {
    const Index sensors = 12;
    std::vector<MeasurementTrace> normal;
    for (int i = 0; i < 3; ++i) normal.push_back(sinusoid_trace(sensors, 30.0, 10.0, 0.7 * i, 100 + static_cast<std::uint64_t>(i)));
    auto m = train_gdn(normal, small_gdn());
    CHECK(m.summary.epochs >= 1);
    for (const auto& g : m.graph().neighbors) CHECK(g.size() == 4);

    // Fired fraction on the training traces stays small (threshold = validation maximum).
    double fired = 0, total = 0;
    for (const auto& t : normal) {
        const auto s = gdn_score(m, t);
        CHECK((s.sensor.array() >= 0).all());
        fired += s.fired_fraction() * static_cast<double>(s.samples());
        total += static_cast<double>(s.samples());
    }
    CHECK(fired / total <= 0.01);

    // Sensor 5 replaced by 10-sigma noise over the middle third.
    auto bad = sinusoid_trace(sensors, 30.0, 10.0, 0.35, 200);
    double sd = 0;
    for (Index k = 0; k < bad.samples(); ++k) sd += bad.angles(k, 5) * bad.angles(k, 5);
    sd = std::sqrt(sd / static_cast<double>(bad.samples()));
    for (Index k = 100; k < 200; ++k) bad.angles(k, 5) = 10 * sd * counter_normal(9, 5, static_cast<std::uint64_t>(k));
    const auto s = gdn_score(m, bad);
    int hits = 0, span = 0;
    for (Index r = 0; r < s.samples(); ++r) {
        const Index k = s.first_sample + r;
        if (k < 100 || k >= 200) continue;
        ++span;
        Index arg = 0;
        s.sensor.row(r).maxCoeff(&arg);
        hits += arg == 5;
    }
    // Neighbors forecast from the corrupted window too, so they share part of the error; the
    // corrupted sensor still leads the ranking and most per-step maxima.
    CHECK(static_cast<double>(hits) >= 0.5 * span);
    const auto where = localize_samples(s, 100, 200);
    CHECK(where.ranked.front() == 7);

    // Checkpoint round trip scores identically.
    auto back = gdn_from_json(to_json(m));
    CHECK(gdn_score(back, bad).sensor == s.sensor);
}

TEST_CASE("gat training contracts") {
    SUBCASE("constant traces give zero loss") {
        std::vector<MeasurementTrace> normal{test::make_trace(MatrixXd::Zero(60, 3), 10.0, {2, 3, 4})};
        auto cfg = small_gat();
        cfg.train.max_epochs = 2;
        const auto m = train_gat(normal, cfg);
        CHECK(m.summary.best_validation < 1e-12);
    }
    SUBCASE("gamma = 1 ignores the reconstruction head") {
        std::vector<MeasurementTrace> normal{sinusoid_trace(4, 12.0, 10.0, 0.0, 1)};
        auto cfg = small_gat();
        cfg.gamma = 1.0;
        cfg.train.max_epochs = 3;
        auto m = train_gat(normal, cfg);
        const auto before = gat_score(m, normal[0]);
        Rng rng(9);
        m.reconstruct_out.weight.value += random_matrix(m.reconstruct_out.weight.value.rows(), m.reconstruct_out.weight.value.cols(), rng);
        for (auto* p : m.decoder.parameters()) p->value += random_matrix(p->value.rows(), p->value.cols(), rng);
        const auto after = gat_score(m, normal[0]);
        CHECK(before.sensor == after.sensor);
        cfg.gamma = 1.5;
        CHECK_THROWS(train_gat(normal, cfg));
    }
    SUBCASE("scores stay at or below threshold on most normal data and the model round-trips") {
        std::vector<MeasurementTrace> normal{sinusoid_trace(4, 20.0, 10.0, 0.0, 1), sinusoid_trace(4, 20.0, 10.0, 1.0, 2)};
        auto m = train_gat(normal, small_gat());
        const auto s = gat_score(m, normal[0]);
        CHECK((s.sensor.array() >= 0).all());
        CHECK((s.overall - max_over_sensors(s.sensor)).cwiseAbs().maxCoeff() == 0.0);
        auto back = gat_from_json(to_json(m));
        CHECK(gat_score(back, normal[0]).sensor == s.sensor);
    }
}

TEST_CASE("physical topology neighborhood") {
    const auto net = test::toy_network();
    const auto nb = line_topology(net, {1, 2});
    CHECK(nb[0] == std::vector<int>{1});
    CHECK(nb[1] == std::vector<int>{0});
}
