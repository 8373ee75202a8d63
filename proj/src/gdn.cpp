#include "fdia/gdn.hpp"

#include "fdia/error.hpp"

#include <cmath>

namespace fdia {

using ad::Index;
using ad::Matrix;

Eigen::MatrixXd SequenceSet::sensor_blocks(std::span<const Index> which) const {
    const Index n = series.front().cols();
    Matrix out(static_cast<Index>(which.size()) * n, width);
    for (std::size_t b = 0; b < which.size(); ++b) {
        const auto [s, t] = targets[static_cast<std::size_t>(which[b])];
        out.middleRows(static_cast<Index>(b) * n, n) = series[static_cast<std::size_t>(s)].middleRows(t - width, width).transpose();
    }
    return out;
}

Eigen::MatrixXd SequenceSet::time_blocks(std::span<const Index> which) const {
    const Index n = series.front().cols();
    Matrix out(static_cast<Index>(which.size()) * width, n);
    for (std::size_t b = 0; b < which.size(); ++b) {
        const auto [s, t] = targets[static_cast<std::size_t>(which[b])];
        out.middleRows(static_cast<Index>(b) * width, width) = series[static_cast<std::size_t>(s)].middleRows(t - width, width);
    }
    return out;
}

Eigen::MatrixXd SequenceSet::next_rows(std::span<const Index> which) const {
    Matrix out(static_cast<Index>(which.size()), series.front().cols());
    for (std::size_t b = 0; b < which.size(); ++b) {
        const auto [s, t] = targets[static_cast<std::size_t>(which[b])];
        out.row(static_cast<Index>(b)) = series[static_cast<std::size_t>(s)].row(t);
    }
    return out;
}

Index window_samples(double seconds, double rate) {
    const auto w = static_cast<Index>(std::llround(seconds * rate));
    if (w < 1) throw ValidationError("window shorter than one sample");
    return w;
}

SequenceSet make_sequences(std::span<const MeasurementTrace> traces, Index width, Index stride) {
    if (traces.empty()) throw ValidationError("detector training: no traces");
    if (stride < 1) throw ValidationError("detector training: stride must be positive");
    SequenceSet set;
    set.width = width;
    const auto& ids = traces.front().bus_ids;
    for (std::size_t s = 0; s < traces.size(); ++s) {
        const auto& tr = traces[s];
        if (tr.bus_ids != ids)
            throw ValidationError("detector training: trace " + tr.scenario_id + " has a different bus layout");
        if (!tr.angles.allFinite()) throw NumericalError("detector training: non-finite values in " + tr.scenario_id);
        if (tr.samples() <= width)
            throw ValidationError("detector training: trace " + tr.scenario_id + " is shorter than one window");
        set.series.push_back(tr.angles);
        for (Index t = width; t < tr.samples(); t += stride) set.targets.emplace_back(static_cast<int>(s), t);
    }
    return set;
}

std::vector<ad::Parameter*> GdnModel::parameters() {
    return {&embedding, &weight, &attention, &hidden.weight, &hidden.bias, &output.weight, &output.bias};
}

LearnedGraph GdnModel::graph() const { return learn_graph_topk(embedding.value, config.top_k); }

ad::BoolArray GdnModel::attention_mask() const {
    return neighborhood_mask(graph().neighbors);
}

ad::Var GdnModel::forward(ad::Tape& tape, const Eigen::MatrixXd& blocks, const ad::BoolArray& mask) {
    const Index n = sensors();
    if (blocks.cols() != window || blocks.rows() % n != 0)
        throw ValidationError("gdn: input blocks have the wrong shape");
    const Index batch = blocks.rows() / n;
    std::vector<Index> tile(static_cast<std::size_t>(batch * n));
    for (std::size_t i = 0; i < tile.size(); ++i) tile[i] = static_cast<Index>(i) % n;

    ad::Var v = ad::gather_rows(tape.parameter(embedding), tile);
    ad::Var z = ad::matmul(tape.constant(blocks), tape.parameter(weight));
    ad::Var keys = ad::concat_cols({v, z});
    ad::Var alpha = ad::block_attention(tape, keys, tape.parameter(attention), mask, n, config.negative_slope);
    ad::Var agg = ad::relu(ad::block_matmul(alpha, z, n));
    return output.forward(tape, hidden.forward(tape, ad::mul(agg, v)));
}

Eigen::MatrixXd GdnModel::forecast(const Eigen::MatrixXd& x) {
    if (x.cols() != sensors())
        throw ValidationError("gdn: trace has " + std::to_string(x.cols()) + " sensors, model expects " +
                              std::to_string(sensors()));
    if (x.rows() <= window) throw ValidationError("gdn: trace shorter than one window");
    const auto mask = attention_mask();
    const Index n = sensors();
    const Index count = x.rows() - window;
    Matrix pred(count, n);
    constexpr Index chunk = 64;
    for (Index start = 0; start < count; start += chunk) {
        const Index len = std::min(chunk, count - start);
        Matrix blocks(len * n, window);
        for (Index b = 0; b < len; ++b)
            blocks.middleRows(b * n, n) = x.middleRows(start + b, window).transpose();
        ad::Tape tape;
        const Matrix out = forward(tape, blocks, mask).value();
        for (Index b = 0; b < len; ++b) pred.row(start + b) = out.middleRows(b * n, n).transpose();
    }
    return pred;
}

GdnModel make_gdn(std::vector<int> sensor_ids, Index window, const GdnConfig& cfg) {
    const auto n = static_cast<Index>(sensor_ids.size());
    if (cfg.top_k < 1 || cfg.top_k >= n)
        throw ValidationError("gdn: top_k must lie in [1, sensors - 1]");
    if (cfg.embedding_dim < 1 || cfg.hidden < 1) throw ValidationError("gdn: widths must be positive");
    GdnModel m;
    m.config = cfg;
    m.sensor_ids = std::move(sensor_ids);
    m.window = window;
    Rng rng(hash_counter(cfg.train.seed, 0x6d, 0));
    const Index d = cfg.embedding_dim;
    m.embedding = ad::glorot("embedding", n, d, rng);
    m.weight = ad::glorot("weight", window, d, rng);
    m.attention = ad::glorot("attention", 4 * d, 1, rng);
    m.hidden = ad::Dense("hidden", d, cfg.hidden, ad::Activation::Relu, rng);
    m.output = ad::Dense("output", cfg.hidden, 1, ad::Activation::Identity, rng);
    return m;
}

namespace {

Matrix stacked_targets(const SequenceSet& set, std::span<const Index> which) {
    const Matrix rows = set.next_rows(which);
    Matrix out(rows.size(), 1);
    for (Index b = 0; b < rows.rows(); ++b) out.middleRows(b * rows.cols(), rows.cols()) = rows.row(b).transpose();
    return out;
}

// Absolute forecast errors (targets x sensors) over the given targets.
Matrix forecast_errors(GdnModel& m, const SequenceSet& set, const std::vector<Index>& which) {
    const auto mask = m.attention_mask();
    const Index n = m.sensors();
    Matrix err(static_cast<Index>(which.size()), n);
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < which.size(); start += chunk) {
        const std::size_t len = std::min(chunk, which.size() - start);
        std::span<const Index> part(which.data() + start, len);
        ad::Tape tape;
        const Matrix out = m.forward(tape, set.sensor_blocks(part), mask).value();
        const Matrix truth = set.next_rows(part);
        for (std::size_t b = 0; b < len; ++b)
            err.row(static_cast<Index>(start + b)) =
                (out.middleRows(static_cast<Index>(b) * n, n).transpose() - truth.row(static_cast<Index>(b))).cwiseAbs();
    }
    return err;
}

}  // namespace

GdnModel train_gdn(std::span<const MeasurementTrace> normal, const GdnConfig& cfg) {
    if (normal.empty()) throw ValidationError("gdn: no training traces");
    const Index window = window_samples(cfg.window_seconds, normal.front().sample_rate);
    const SequenceSet set = make_sequences(normal, window, cfg.train_stride);
    GdnModel m = make_gdn(normal.front().bus_ids, window, cfg);
    auto [train, val] = ad::split_indices(static_cast<Index>(set.targets.size()), cfg.train.validation_fraction,
                                          cfg.train.seed);
    if (val.empty()) val = train;

    m.summary = ad::fit(
        m.parameters(), train,
        [&](ad::Tape& tape, std::span<const Index> idx) {
            const auto mask = m.attention_mask();
            return ad::mse(m.forward(tape, set.sensor_blocks(idx), mask), stacked_targets(set, idx));
        },
        [&] { return forecast_errors(m, set, val).array().square().mean(); }, cfg.train);

    const Matrix val_err = forecast_errors(m, set, val);
    m.scale = fit_robust_scale(val_err);
    const Eigen::VectorXd a = max_over_sensors(robust_normalize(val_err, m.scale));
    const auto th = select_threshold(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                                     cfg.threshold_factor);
    m.threshold = th.value;
    m.threshold_degenerate = th.degenerate;
    return m;
}

AnomalyScoreSeries gdn_score(GdnModel& m, const MeasurementTrace& trace) {
    if (trace.bus_ids != m.sensor_ids) throw ValidationError("gdn: trace bus layout differs from the model's");
    if (m.scale.median.size() != m.sensors()) throw ValidationError("gdn: model has no fitted error scale");
    const Matrix pred = m.forecast(trace.angles);
    const Matrix err = (pred - trace.angles.bottomRows(pred.rows())).cwiseAbs();
    AnomalyScoreSeries s;
    s.detector = "gdn";
    s.sensor_ids = m.sensor_ids;
    s.first_sample = m.window;
    s.time = trace.time.tail(pred.rows());
    s.sensor = robust_normalize(err, m.scale);
    s.overall = max_over_sensors(s.sensor);
    apply_threshold(s, m.threshold);
    return s;
}

nlohmann::json to_json(GdnModel& m) {
    const auto& c = m.config;
    return {{"schema", "fdia.gdn/1"},
            {"config",
             {{"embedding_dim", c.embedding_dim},
              {"top_k", c.top_k},
              {"hidden", c.hidden},
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

GdnModel gdn_from_json(const nlohmann::json& j) {
    if (j.value("schema", std::string{}) != "fdia.gdn/1")
        throw ParseError("gdn checkpoint: unexpected schema '" + j.value("schema", std::string{}) + "'");
    GdnConfig cfg;
    const auto& c = j.at("config");
    cfg.embedding_dim = c.at("embedding_dim").get<int>();
    cfg.top_k = c.at("top_k").get<int>();
    cfg.hidden = c.at("hidden").get<int>();
    cfg.window_seconds = c.at("window_seconds").get<double>();
    cfg.train_stride = c.at("train_stride").get<int>();
    cfg.threshold_factor = c.at("threshold_factor").get<double>();
    cfg.negative_slope = c.at("negative_slope").get<double>();
    cfg.train.seed = c.at("seed").get<std::uint64_t>();
    GdnModel m = make_gdn(j.at("sensor_ids").get<std::vector<int>>(), j.at("window").get<Index>(), cfg);
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
