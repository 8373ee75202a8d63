#include "fdia/gat.hpp"

#include "fdia/error.hpp"
#include "fdia/graph_attention.hpp"

namespace fdia {

using ad::Index;
using ad::Matrix;
using ad::Var;

std::vector<ad::Parameter*> GatModel::parameters() {
    std::vector<ad::Parameter*> out;
    for (auto* group : {&feature.weight, &feature.attention, &temporal.weight, &temporal.attention}) out.push_back(group);
    for (auto* p : encoder.parameters()) out.push_back(p);
    for (auto* p : forecast_hidden.parameters()) out.push_back(p);
    for (auto* p : forecast_out.parameters()) out.push_back(p);
    for (auto* p : decoder.parameters()) out.push_back(p);
    for (auto* p : reconstruct_out.parameters()) out.push_back(p);
    return out;
}

GatModel::Outputs GatModel::forward(ad::Tape& tape, const Eigen::MatrixXd& blocks) {
    const Index n = sensors();
    const Index w = window;
    if (blocks.cols() != n || blocks.rows() % w != 0)
        throw ValidationError("gat: input blocks have the wrong shape");
    const Index batch = blocks.rows() / w;
    const ad::BoolArray sensor_mask = ad::BoolArray::Constant(n, n, true);
    const ad::BoolArray time_mask = ad::BoolArray::Constant(w, w, true);

    Var x = tape.constant(blocks);                                   // (B*w x n)
    Var hf = feature.forward_blocks(tape, ad::block_transpose(x, w), sensor_mask, n);  // (B*n x w)
    Var ht = temporal.forward_blocks(tape, x, time_mask, w);         // (B*w x n)
    Var gi = encoder.project(tape, ad::concat_cols({x, ad::block_transpose(hf, n), ht}));

    std::vector<Index> rows(static_cast<std::size_t>(batch));
    Var h = tape.constant(Matrix::Zero(batch, encoder.hidden()));
    for (Index t = 0; t < w; ++t) {
        for (Index b = 0; b < batch; ++b) rows[static_cast<std::size_t>(b)] = b * w + t;
        h = encoder.step_projected(tape, ad::gather_rows(gi, rows), h);
    }

    Outputs out;
    out.forecast = forecast_out.forward(tape, forecast_hidden.forward(tape, h));

    Var dec_in = decoder.project(tape, h);
    Var s = tape.constant(Matrix::Zero(batch, decoder.hidden()));
    std::vector<Var> states;
    states.reserve(static_cast<std::size_t>(w));
    for (Index t = 0; t < w; ++t) {
        s = decoder.step_projected(tape, dec_in, s);
        states.push_back(s);
    }
    out.reconstruction = reconstruct_out.forward(tape, ad::concat_rows(states));
    return out;
}

GatModel make_gat(std::vector<int> sensor_ids, Index window, const GatConfig& cfg) {
    if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw ValidationError("gat: gamma must lie in [0, 1]");
    if (cfg.hidden < 1 || cfg.forecast_hidden < 1) throw ValidationError("gat: widths must be positive");
    if (sensor_ids.size() < 2) throw ValidationError("gat: needs at least 2 sensors");
    const auto n = static_cast<Index>(sensor_ids.size());
    GatModel m;
    m.config = cfg;
    m.sensor_ids = std::move(sensor_ids);
    m.window = window;
    Rng rng(hash_counter(cfg.train.seed, 0x9a7, 0));
    m.feature = ad::GraphAttention("feature", window, window, rng, cfg.negative_slope);
    m.temporal = ad::GraphAttention("temporal", n, n, rng, cfg.negative_slope);
    m.encoder = ad::GRUCell("encoder", 3 * n, cfg.hidden, rng);
    m.forecast_hidden = ad::Dense("forecast_hidden", cfg.hidden, cfg.forecast_hidden, ad::Activation::Relu, rng);
    m.forecast_out = ad::Dense("forecast_out", cfg.forecast_hidden, n, ad::Activation::Identity, rng);
    m.decoder = ad::GRUCell("decoder", cfg.hidden, cfg.hidden, rng);
    m.reconstruct_out = ad::Dense("reconstruct_out", cfg.hidden, n, ad::Activation::Identity, rng);
    return m;
}

Eigen::MatrixXd step_major(const Eigen::MatrixXd& blocks, Index w) {
    const Index batch = blocks.rows() / w;
    Matrix out(blocks.rows(), blocks.cols());
    for (Index b = 0; b < batch; ++b)
        for (Index t = 0; t < w; ++t) out.row(t * batch + b) = blocks.row(b * w + t);
    return out;
}

Var gat_loss(GatModel& m, ad::Tape& tape, const Eigen::MatrixXd& blocks, const Eigen::MatrixXd& next) {
    const auto out = m.forward(tape, blocks);
    return ad::add(ad::mse(out.forecast, next), ad::mse(out.reconstruction, step_major(blocks, m.window)));
}

namespace {

struct Errors {
    Matrix forecast;        // targets x sensors, absolute
    Matrix reconstruction;  // targets x sensors, absolute, last window step
};

Errors model_errors(GatModel& m, const SequenceSet& set, const std::vector<Index>& which) {
    const Index n = m.sensors();
    const Index w = m.window;
    Errors e{Matrix(static_cast<Index>(which.size()), n), Matrix(static_cast<Index>(which.size()), n)};
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < which.size(); start += chunk) {
        const std::size_t len = std::min(chunk, which.size() - start);
        std::span<const Index> part(which.data() + start, len);
        const Matrix blocks = set.time_blocks(part);
        const Matrix next = set.next_rows(part);
        ad::Tape tape;
        const auto out = m.forward(tape, blocks);
        const auto B = static_cast<Index>(len);
        const Matrix& f = out.forecast.value();
        const Matrix& r = out.reconstruction.value();
        for (Index b = 0; b < B; ++b) {
            e.forecast.row(static_cast<Index>(start) + b) = (f.row(b) - next.row(b)).cwiseAbs();
            e.reconstruction.row(static_cast<Index>(start) + b) =
                (r.row((w - 1) * B + b) - blocks.row(b * w + w - 1)).cwiseAbs();
        }
    }
    return e;
}

Matrix combine(const Errors& e, double gamma) { return gamma * e.forecast + (1.0 - gamma) * e.reconstruction; }

}  // namespace

GatModel train_gat(std::span<const MeasurementTrace> normal, const GatConfig& cfg) {
    if (normal.empty()) throw ValidationError("gat: no training traces");
    const Index window = window_samples(cfg.window_seconds, normal.front().sample_rate);
    const SequenceSet set = make_sequences(normal, window, cfg.train_stride);
    GatModel m = make_gat(normal.front().bus_ids, window, cfg);
    auto [train, val] = ad::split_indices(static_cast<Index>(set.targets.size()), cfg.train.validation_fraction,
                                          cfg.train.seed);
    if (val.empty()) val = train;

    m.summary = ad::fit(
        m.parameters(), train,
        [&](ad::Tape& tape, std::span<const Index> idx) {
            return gat_loss(m, tape, set.time_blocks(idx), set.next_rows(idx));
        },
        [&] {
            double total = 0.0;
            constexpr std::size_t chunk = 64;
            for (std::size_t start = 0; start < val.size(); start += chunk) {
                const std::size_t len = std::min(chunk, val.size() - start);
                std::span<const Index> part(val.data() + start, len);
                ad::Tape tape;
                total += gat_loss(m, tape, set.time_blocks(part), set.next_rows(part)).value()(0, 0) *
                         static_cast<double>(len);
            }
            return total / static_cast<double>(val.size());
        },
        cfg.train);

    const Matrix val_err = combine(model_errors(m, set, val), cfg.gamma);
    m.scale = fit_robust_scale(val_err);
    const Eigen::VectorXd a = max_over_sensors(robust_normalize(val_err, m.scale));
    const auto th = select_threshold(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                                     cfg.threshold_factor);
    m.threshold = th.value;
    m.threshold_degenerate = th.degenerate;
    return m;
}

AnomalyScoreSeries gat_score(GatModel& m, const MeasurementTrace& trace) {
    if (trace.bus_ids != m.sensor_ids) throw ValidationError("gat: trace bus layout differs from the model's");
    if (m.scale.median.size() != m.sensors()) throw ValidationError("gat: model has no fitted error scale");
    if (trace.samples() <= m.window) throw ValidationError("gat: trace shorter than one window");
    const SequenceSet set = make_sequences(std::span<const MeasurementTrace>(&trace, 1), m.window, 1);
    std::vector<Index> all(set.targets.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Index>(i);
    const Matrix err = combine(model_errors(m, set, all), m.config.gamma);
    AnomalyScoreSeries s;
    s.detector = "gat";
    s.sensor_ids = m.sensor_ids;
    s.first_sample = m.window;
    s.time = trace.time.tail(err.rows());
    s.sensor = robust_normalize(err, m.scale);
    s.overall = max_over_sensors(s.sensor);
    apply_threshold(s, m.threshold);
    return s;
}

nlohmann::json to_json(GatModel& m) {
    const auto& c = m.config;
    return {{"schema", "fdia.gat/1"},
            {"config",
             {{"hidden", c.hidden},
              {"forecast_hidden", c.forecast_hidden},
              {"gamma", c.gamma},
              {"window_seconds", c.window_seconds},
              {"train_stride", c.train_stride},
              {"threshold_factor", c.threshold_factor},
              {"negative_slope", c.negative_slope},
              {"seed", c.train.seed}}},
            {"sensor_ids", m.sensor_ids},
            {"window", m.window},
            {"normalization", m.normalization},
            {"threshold", m.threshold},
            {"threshold_degenerate", m.threshold_degenerate},
            {"error_median", std::vector<double>(m.scale.median.data(), m.scale.median.data() + m.scale.median.size())},
            {"error_iqr", std::vector<double>(m.scale.iqr.data(), m.scale.iqr.data() + m.scale.iqr.size())},
            {"parameters", ad::to_json(m.parameters())}};
}

GatModel gat_from_json(const nlohmann::json& j) {
    if (j.value("schema", std::string{}) != "fdia.gat/1")
        throw ParseError("gat checkpoint: unexpected schema '" + j.value("schema", std::string{}) + "'");
    GatConfig cfg;
    const auto& c = j.at("config");
    cfg.hidden = c.at("hidden").get<int>();
    cfg.forecast_hidden = c.at("forecast_hidden").get<int>();
    cfg.gamma = c.at("gamma").get<double>();
    cfg.window_seconds = c.at("window_seconds").get<double>();
    cfg.train_stride = c.at("train_stride").get<int>();
    cfg.threshold_factor = c.at("threshold_factor").get<double>();
    cfg.negative_slope = c.at("negative_slope").get<double>();
    cfg.train.seed = c.at("seed").get<std::uint64_t>();
    GatModel m = make_gat(j.at("sensor_ids").get<std::vector<int>>(), j.at("window").get<Index>(), cfg);
    m.normalization = j.value("normalization", std::string{});
    m.threshold = j.at("threshold").get<double>();
    m.threshold_degenerate = j.at("threshold_degenerate").get<bool>();
    const auto med = j.at("error_median").get<std::vector<double>>();
    const auto iqr = j.at("error_iqr").get<std::vector<double>>();
    m.scale.median = Eigen::Map<const Eigen::VectorXd>(med.data(), static_cast<Index>(med.size()));
    m.scale.iqr = Eigen::Map<const Eigen::VectorXd>(iqr.data(), static_cast<Index>(iqr.size()));
    ad::from_json(j.at("parameters"), m.parameters());
    return m;
}

}  // namespace fdia
