#include "fdia/autoencoder.hpp"

#include "fdia/error.hpp"

#include <cmath>

namespace fdia {

using ad::Index;

Index AutoencoderModel::input_width() const { return layers.empty() ? 0 : layers.front().in(); }

Index AutoencoderModel::bottleneck_width() const {
    Index w = input_width();
    for (const auto& l : layers) w = std::min(w, l.out());
    return w;
}

void AutoencoderModel::validate() const {
    if (layers.size() < 2) throw ValidationError("autoencoder: needs an encoder and a decoder layer");
    for (std::size_t i = 1; i < layers.size(); ++i)
        if (layers[i].in() != layers[i - 1].out())
            throw ValidationError("autoencoder: layer " + std::to_string(i) + " input width mismatch");
    if (layers.back().out() != input_width())
        throw ValidationError("autoencoder: decoder output width differs from input width");
    if (bottleneck_width() >= input_width())
        throw ValidationError("autoencoder: bottleneck must be narrower than the input");
    if (!sensor_ids.empty() && static_cast<Index>(sensor_ids.size()) != input_width())
        throw ValidationError("autoencoder: sensor list does not match input width");
}

Eigen::MatrixXd AutoencoderModel::reconstruct(const Eigen::MatrixXd& x) const {
    if (x.cols() != input_width())
        throw ValidationError("autoencoder: batch width " + std::to_string(x.cols()) + ", model expects " +
                              std::to_string(input_width()));
    Eigen::MatrixXd h = x;
    for (const auto& l : layers) h = l.predict(h);
    return h;
}

ad::Var AutoencoderModel::forward(ad::Tape& tape, ad::Var x) {
    for (auto& l : layers) x = l.forward(tape, x);
    return x;
}

std::vector<ad::Parameter*> AutoencoderModel::parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& l : layers)
        for (auto* p : l.parameters()) out.push_back(p);
    return out;
}

AutoencoderModel make_autoencoder(const std::vector<Index>& widths, std::vector<int> sensor_ids,
                                  std::uint64_t seed, ad::Activation activation) {
    if (widths.size() < 3) throw ValidationError("autoencoder: widths need input, bottleneck and output");
    AutoencoderModel m;
    m.seed = seed;
    m.sensor_ids = std::move(sensor_ids);
    Rng rng(hash_counter(seed, 0xae, 0));
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const bool last = i + 2 == widths.size();
        m.layers.emplace_back("layer" + std::to_string(i), widths[i], widths[i + 1],
                              last ? ad::Activation::Identity : activation, rng);
    }
    m.validate();
    return m;
}

AutoencoderModel make_default_autoencoder(std::vector<int> sensor_ids, std::uint64_t seed) {
    const auto n = static_cast<Index>(sensor_ids.size());
    return make_autoencoder({n, 32, 8, 32, n}, std::move(sensor_ids), seed);
}

ad::TrainingSummary train_autoencoder(AutoencoderModel& model, const Eigen::MatrixXd& samples,
                                      const ad::TrainConfig& cfg) {
    model.validate();
    if (samples.rows() < 1) throw ValidationError("autoencoder: no training samples");
    if (samples.cols() != model.input_width())
        throw ValidationError("autoencoder: data width " + std::to_string(samples.cols()) + ", model expects " +
                              std::to_string(model.input_width()));
    if (!samples.allFinite()) throw NumericalError("autoencoder: non-finite training data");
    auto [train, val] = ad::split_indices(samples.rows(), cfg.validation_fraction, cfg.seed);
    if (train.empty()) train = val;
    const auto params = model.parameters();

    auto gather = [&](std::span<const Index> idx) {
        Eigen::MatrixXd b(static_cast<Index>(idx.size()), samples.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) b.row(static_cast<Index>(i)) = samples.row(idx[i]);
        return b;
    };
    const Eigen::MatrixXd val_x = gather(val.empty() ? std::span<const Index>(train) : std::span<const Index>(val));

    return ad::fit(
        params, train,
        [&](ad::Tape& tape, std::span<const Index> idx) {
            Eigen::MatrixXd b = gather(idx);
            ad::Var out = model.forward(tape, tape.constant(b));
            return ad::mse(out, b);
        },
        [&] { return (model.reconstruct(val_x) - val_x).squaredNorm() / static_cast<double>(val_x.size()); },
        cfg);
}

ReconstructionReport reconstruction_report(const AutoencoderModel& model, const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd r = model.reconstruct(x) - x;
    ReconstructionReport rep;
    rep.sample_loss = r.rowwise().squaredNorm();
    rep.sensor_error = r.colwise().squaredNorm().transpose() / static_cast<double>(x.rows());
    return rep;
}

DetectionVerdict autoencoder_window_detector(const AutoencoderModel& model, const WindowMatrix& window,
                                             double threshold, std::uint64_t seed) {
    const auto rep = reconstruction_report(model, window.values.transpose());
    return cluster_sensors(rep.sensor_error, window.sensor_ids, threshold, seed);
}

nlohmann::json to_json(AutoencoderModel& model) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : model.layers)
        layers.push_back({{"in", l.in()}, {"out", l.out()}, {"activation", ad::to_string(l.activation)}});
    return {{"schema", "fdia.autoencoder/1"},
            {"seed", model.seed},
            {"sensor_ids", model.sensor_ids},
            {"normalization", model.normalization},
            {"layers", layers},
            {"parameters", ad::to_json(model.parameters())}};
}

AutoencoderModel autoencoder_from_json(const nlohmann::json& j) {
    if (j.value("schema", std::string{}) != "fdia.autoencoder/1")
        throw ParseError("autoencoder checkpoint: unexpected schema '" + j.value("schema", std::string{}) + "'");
    AutoencoderModel m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.sensor_ids = j.at("sensor_ids").get<std::vector<int>>();
    m.normalization = j.value("normalization", std::string{});
    Rng rng(0);
    std::size_t i = 0;
    for (const auto& l : j.at("layers"))
        m.layers.emplace_back("layer" + std::to_string(i++), l.at("in").get<Index>(), l.at("out").get<Index>(),
                              ad::activation_from_string(l.at("activation").get<std::string>()), rng);
    m.validate();
    ad::from_json(j.at("parameters"), m.parameters());
    return m;
}

}  // namespace fdia
