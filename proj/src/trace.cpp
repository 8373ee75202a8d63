#include "fdia/trace.hpp"

#include "fdia/error.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fdia {

using Eigen::Index;

std::string to_string(Provenance p) { return p == Provenance::True ? "true" : "attacked"; }

Provenance provenance_from_string(const std::string& s) {
    if (s == "true") return Provenance::True;
    if (s == "attacked") return Provenance::Attacked;
    throw ParseError("provenance: expected 'true' or 'attacked', got '" + s + "'");
}

Index MeasurementTrace::column_of(int bus_id) const noexcept {
    for (std::size_t i = 0; i < bus_ids.size(); ++i)
        if (bus_ids[i] == bus_id) return static_cast<Index>(i);
    return -1;
}

Eigen::VectorXd uniform_grid(Index count, double rate) {
    Eigen::VectorXd t(count);
    for (Index k = 0; k < count; ++k) t(k) = static_cast<double>(k) / rate;
    return t;
}

void validate(const MeasurementTrace& trace) {
    if (trace.time.size() != trace.angles.rows())
        throw ValidationError("trace: time grid has " + std::to_string(trace.time.size()) +
                              " samples but angle matrix has " +
                              std::to_string(trace.angles.rows()) + " rows");
    if (static_cast<Index>(trace.bus_ids.size()) != trace.angles.cols())
        throw ValidationError("trace: " + std::to_string(trace.bus_ids.size()) +
                              " bus ids for " + std::to_string(trace.angles.cols()) + " columns");
    if (!(trace.sample_rate > 0)) throw ValidationError("trace.sample_rate: must be > 0");
    const double period = 1.0 / trace.sample_rate;
    for (Index k = 1; k < trace.time.size(); ++k) {
        const double dt = trace.time(k) - trace.time(k - 1);
        if (!(dt > 0)) throw ValidationError("trace.time: not strictly increasing");
        if (std::abs(dt - period) > 1e-9 * std::max(1.0, std::abs(trace.time(k))))
            throw ValidationError("trace.time: grid is not uniform at sample " +
                                  std::to_string(k));
    }
    if (trace.frequency && (trace.frequency->rows() != trace.angles.rows() ||
                            trace.frequency->cols() != trace.angles.cols()))
        throw ValidationError("trace.frequency: shape differs from the angle matrix");
}

namespace {

std::filesystem::path meta_path(const std::filesystem::path& p) {
    return std::filesystem::path(p.string() + ".meta.json");
}

void append_number(std::string& line, double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    line.append(buf, static_cast<std::size_t>(n));
}

double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(where + ": not a number: '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

}  // namespace

void write_trace(const MeasurementTrace& trace, const std::filesystem::path& path) {
    validate(trace);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trace " + path.string());
    std::string line = "t";
    for (int id : trace.bus_ids) line += ",bus_" + std::to_string(id);
    out << line << '\n';
    for (Index k = 0; k < trace.samples(); ++k) {
        line.clear();
        append_number(line, trace.time(k));
        for (Index b = 0; b < trace.buses(); ++b) {
            line.push_back(',');
            append_number(line, trace.angles(k, b));
        }
        out << line << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());

    nlohmann::ordered_json meta;
    meta["schema"] = "fdia.trace/1";
    meta["provenance"] = to_string(trace.provenance);
    meta["scenario_id"] = trace.scenario_id;
    meta["sample_rate"] = trace.sample_rate;
    std::ofstream mout(meta_path(path), std::ios::binary);
    if (!mout) throw IoError("cannot write trace metadata for " + path.string());
    mout << meta.dump(2) << '\n';
}

MeasurementTrace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trace " + path.string());
    const std::string src = path.string();
    std::string header;
    if (!std::getline(in, header) || header.empty())
        throw ParseError(src + ": empty trace file");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const auto cols = split(header);
    if (cols.empty() || cols[0] != "t") throw ParseError(src + ": header must start with 't'");

    MeasurementTrace trace;
    for (std::size_t i = 1; i < cols.size(); ++i) {
        if (cols[i].substr(0, 4) != "bus_")
            throw ParseError(src + ": header column " + std::to_string(i) + " '" +
                             std::string(cols[i]) + "' is not bus_<id>");
        trace.bus_ids.push_back(static_cast<int>(
            parse_double(cols[i].substr(4), src + ": header column " + std::to_string(i))));
    }
    const auto expected = cols.size();

    std::vector<double> times, values;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != expected)
            throw ParseError(src + ":" + std::to_string(line_no) + ": schema mismatch, expected " +
                             std::to_string(expected) + " columns, got " +
                             std::to_string(cells.size()));
        const auto where = src + ":" + std::to_string(line_no);
        times.push_back(parse_double(cells[0], where));
        for (std::size_t i = 1; i < cells.size(); ++i) values.push_back(parse_double(cells[i], where));
    }
    const auto n = static_cast<Index>(times.size());
    const auto m = static_cast<Index>(trace.bus_ids.size());
    trace.time = Eigen::Map<Eigen::VectorXd>(times.data(), n);
    trace.angles = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), n, m);

    if (std::ifstream mi(meta_path(path)); mi) {
        try {
            const auto meta = nlohmann::json::parse(mi);
            trace.provenance = provenance_from_string(meta.at("provenance").get<std::string>());
            trace.scenario_id = meta.at("scenario_id").get<std::string>();
            trace.sample_rate = meta.at("sample_rate").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(meta_path(path).string() + ": " + e.what());
        }
    } else if (n >= 2) {
        trace.sample_rate = 1.0 / (trace.time(1) - trace.time(0));
    } else {
        throw ParseError(src + ": cannot infer sample rate without metadata");
    }
    validate(trace);
    return trace;
}

}  // namespace fdia
