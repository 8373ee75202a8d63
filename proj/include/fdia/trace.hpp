#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fdia {

enum class Provenance { True, Attacked };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Per-bus voltage-angle samples on a uniform time grid.
struct MeasurementTrace {
    Eigen::VectorXd time;              ///< s, strictly increasing and uniform
    Eigen::MatrixXd angles;            ///< samples x buses
    std::vector<int> bus_ids;          ///< column labels
    std::optional<Eigen::MatrixXd> frequency;  ///< per-bus estimate, pu
    Provenance provenance = Provenance::True;
    std::string scenario_id;
    double sample_rate = 0.0;          ///< Hz

    Eigen::Index samples() const noexcept { return angles.rows(); }
    Eigen::Index buses() const noexcept { return angles.cols(); }
    /// Column of `bus_id`, or -1.
    Eigen::Index column_of(int bus_id) const noexcept;
    double duration() const noexcept {
        return sample_rate > 0 ? static_cast<double>(samples()) / sample_rate : 0.0;
    }
};

/// Uniform grid t_k = k / rate, k = 0..count-1.
Eigen::VectorXd uniform_grid(Eigen::Index count, double rate);

void validate(const MeasurementTrace& trace);

/// CSV with header `t,bus_<id>,...`; metadata goes to `<path>.meta.json`.
void write_trace(const MeasurementTrace& trace, const std::filesystem::path& path);
MeasurementTrace read_trace(const std::filesystem::path& path);

}  // namespace fdia
