#include "fdia/dataset.hpp"

#include "fdia/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fdia {

using Eigen::Index;

MeasurementTrace to_angle_differences(const MeasurementTrace& trace, int reference_bus) {
    const Index ref = trace.column_of(reference_bus);
    if (ref < 0)
        throw ValidationError("angle differences: reference bus " + std::to_string(reference_bus) +
                              " is not in the trace");
    MeasurementTrace out;
    out.time = trace.time;
    out.sample_rate = trace.sample_rate;
    out.provenance = trace.provenance;
    out.scenario_id = trace.scenario_id;
    out.angles.resize(trace.samples(), trace.buses() - 1);
    Index j = 0;
    for (Index c = 0; c < trace.buses(); ++c) {
        if (c == ref) continue;
        out.angles.col(j) = trace.angles.col(c) - trace.angles.col(ref);
        if (trace.frequency) {
            if (!out.frequency) out.frequency = Eigen::MatrixXd(trace.samples(), trace.buses() - 1);
            out.frequency->col(j) = trace.frequency->col(c) - trace.frequency->col(ref);
        }
        out.bus_ids.push_back(trace.bus_ids[static_cast<std::size_t>(c)]);
        ++j;
    }
    return out;
}

bool NormalizationStats::any_clamped() const {
    return std::any_of(clamped.begin(), clamped.end(), [](bool b) { return b; });
}

namespace {

NormalizationStats stats_from_moments(std::vector<int> ids, const Eigen::VectorXd& mean,
                                      const Eigen::VectorXd& var, std::string method) {
    NormalizationStats s;
    s.bus_ids = std::move(ids);
    s.center = mean;
    s.scale.resize(mean.size());
    s.clamped.assign(static_cast<std::size_t>(mean.size()), false);
    for (Index i = 0; i < mean.size(); ++i) {
        const double sd = std::sqrt(std::max(var(i), 0.0));
        if (sd > kScaleFloor) {
            s.scale(i) = sd;
        } else {
            s.scale(i) = kScaleFloor;
            s.clamped[static_cast<std::size_t>(i)] = true;
        }
    }
    s.method = std::move(method);
    return s;
}

MeasurementTrace apply_stats(const MeasurementTrace& trace, const NormalizationStats& stats) {
    if (stats.bus_ids != trace.bus_ids)
        throw ValidationError("normalize: stats bus set does not match the trace columns");
    MeasurementTrace out = trace;
    out.frequency.reset();
    for (Index c = 0; c < trace.buses(); ++c) {
        if (stats.clamped[static_cast<std::size_t>(c)])
            out.angles.col(c).setZero();
        else
            out.angles.col(c) = (trace.angles.col(c).array() - stats.center(c)) / stats.scale(c);
    }
    return out;
}

}  // namespace

NormalizedTrace normalize(const MeasurementTrace& trace,
                          const std::optional<NormalizationStats>& stats, double pre_event_end) {
    validate(trace);
    if (stats) return {apply_stats(trace, *stats), *stats};

    Index n = 0;
    while (n < trace.samples() && trace.time(n) < pre_event_end - 1e-9) ++n;
    if (n == 0) throw ValidationError("normalize: no samples before t = " + std::to_string(pre_event_end));
    const auto block = trace.angles.topRows(n);
    const Eigen::VectorXd mean = block.colwise().mean().transpose();
    const Eigen::VectorXd var =
        (block.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() /
        static_cast<double>(n);
    auto s = stats_from_moments(trace.bus_ids, mean, var, "zscore-pre-event");
    return {apply_stats(trace, s), s};
}

NormalizationStats fit_normalization(std::span<const MeasurementTrace> traces) {
    if (traces.empty()) throw ValidationError("fit_normalization: no traces");
    const auto& ids = traces.front().bus_ids;
    const auto m = static_cast<Index>(ids.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(m);
    Index n = 0;
    for (const auto& t : traces) {
        if (t.bus_ids != ids) throw ValidationError("fit_normalization: bus sets differ");
        sum += t.angles.colwise().sum().transpose();
        n += t.samples();
    }
    const Eigen::VectorXd mean = sum / static_cast<double>(n);
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(m);
    for (const auto& t : traces)
        ss += (t.angles.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
    return stats_from_moments(ids, mean, ss / static_cast<double>(n), "zscore-pooled");
}

MeasurementTrace denormalize(const MeasurementTrace& trace, const NormalizationStats& stats) {
    if (stats.bus_ids != trace.bus_ids)
        throw ValidationError("denormalize: stats bus set does not match the trace columns");
    MeasurementTrace out = trace;
    for (Index c = 0; c < trace.buses(); ++c)
        out.angles.col(c) = (trace.angles.col(c).array() * stats.scale(c) + stats.center(c)).matrix();
    return out;
}

void write_stats(const NormalizationStats& stats, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["schema"] = "fdia.normalization/1";
    j["method"] = stats.method;
    j["bus_ids"] = stats.bus_ids;
    j["center"] = std::vector<double>(stats.center.data(), stats.center.data() + stats.center.size());
    j["scale"] = std::vector<double>(stats.scale.data(), stats.scale.data() + stats.scale.size());
    j["clamped"] = stats.clamped;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

NormalizationStats read_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        NormalizationStats s;
        s.method = j.at("method").get<std::string>();
        s.bus_ids = j.at("bus_ids").get<std::vector<int>>();
        const auto c = j.at("center").get<std::vector<double>>();
        const auto sc = j.at("scale").get<std::vector<double>>();
        s.clamped = j.at("clamped").get<std::vector<bool>>();
        if (c.size() != s.bus_ids.size() || sc.size() != s.bus_ids.size() ||
            s.clamped.size() != s.bus_ids.size())
            throw ParseError(path.string() + ": inconsistent lengths");
        s.center = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Index>(c.size()));
        s.scale = Eigen::Map<const Eigen::VectorXd>(sc.data(), static_cast<Index>(sc.size()));
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Eigen::Array<bool, Eigen::Dynamic, 1> sample_labels(const MeasurementTrace& trace,
                                                    const LabelMask& mask) {
    if (mask.cells.rows() != trace.samples())
        throw ValidationError("labels: mask has " + std::to_string(mask.cells.rows()) +
                              " samples, trace has " + std::to_string(trace.samples()));
    Eigen::Array<bool, Eigen::Dynamic, 1> out = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(trace.samples(), false);
    for (Index c = 0; c < trace.buses(); ++c) {
        auto it = std::find(mask.bus_ids.begin(), mask.bus_ids.end(), trace.bus_ids[static_cast<std::size_t>(c)]);
        if (it == mask.bus_ids.end()) continue;
        out = out || mask.cells.col(it - mask.bus_ids.begin());
    }
    return out;
}

std::vector<WindowMatrix> windows(const MeasurementTrace& trace, double width, double stride,
                                  const LabelMask& mask) {
    if (!(stride > 0)) throw ValidationError("windows: stride must be > 0");
    const auto w = static_cast<Index>(std::llround(width * trace.sample_rate));
    const auto s = static_cast<Index>(std::llround(stride * trace.sample_rate));
    if (w <= 0 || s <= 0) throw ValidationError("windows: width and stride must cover >= 1 sample");
    if (w > trace.samples()) throw ValidationError("windows: width exceeds the trace duration");
    if (mask.cells.rows() != trace.samples())
        throw ValidationError("windows: mask length differs from trace length");

    std::vector<Index> mask_col(static_cast<std::size_t>(trace.buses()), -1);
    for (Index c = 0; c < trace.buses(); ++c) {
        auto it = std::find(mask.bus_ids.begin(), mask.bus_ids.end(), trace.bus_ids[static_cast<std::size_t>(c)]);
        if (it != mask.bus_ids.end()) mask_col[static_cast<std::size_t>(c)] = it - mask.bus_ids.begin();
    }

    std::vector<WindowMatrix> out;
    for (Index start = 0; start + w <= trace.samples(); start += s) {
        WindowMatrix win;
        win.values = trace.angles.middleRows(start, w).transpose();
        win.sensor_ids = trace.bus_ids;
        win.first_sample = start;
        win.start = trace.time(start);
        win.width = static_cast<double>(w) / trace.sample_rate;
        for (Index c = 0; c < trace.buses(); ++c) {
            const Index mc = mask_col[static_cast<std::size_t>(c)];
            if (mc >= 0 && mask.cells.col(mc).segment(start, w).any())
                win.attacked_sensors.push_back(trace.bus_ids[static_cast<std::size_t>(c)]);
        }
        win.attacked = !win.attacked_sensors.empty();
        out.push_back(std::move(win));
    }
    return out;
}

}  // namespace fdia
