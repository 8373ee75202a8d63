#pragma once

#include "fdia/attack.hpp"
#include "fdia/trace.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fdia {

/// Replaces every column by phi_i - phi_ref and drops the reference column.
MeasurementTrace to_angle_differences(const MeasurementTrace& trace, int reference_bus);

inline constexpr double kScaleFloor = 1e-12;

struct NormalizationStats {
    std::vector<int> bus_ids;
    Eigen::VectorXd center;
    Eigen::VectorXd scale;      ///< > 0; clamped to kScaleFloor where variance vanished
    std::vector<bool> clamped;
    std::string method;

    bool any_clamped() const;
};

struct NormalizedTrace {
    MeasurementTrace trace;
    NormalizationStats stats;
};

/// Without `stats`: per-bus z-score fitted on samples with t < pre_event_end.
/// With `stats`: applies them (bus sets must match).
NormalizedTrace normalize(const MeasurementTrace& trace,
                          const std::optional<NormalizationStats>& stats = std::nullopt,
                          double pre_event_end = 1.0);

/// Pooled per-bus z-score over every sample of several traces (shared training frame).
NormalizationStats fit_normalization(std::span<const MeasurementTrace> traces);

MeasurementTrace denormalize(const MeasurementTrace& trace, const NormalizationStats& stats);

void write_stats(const NormalizationStats& stats, const std::filesystem::path& path);
NormalizationStats read_stats(const std::filesystem::path& path);

struct WindowMatrix {
    Eigen::MatrixXd values;          ///< sensors x samples
    std::vector<int> sensor_ids;
    Eigen::Index first_sample = 0;
    double start = 0.0;              ///< s
    double width = 0.0;              ///< s
    bool attacked = false;
    std::vector<int> attacked_sensors;
};

/// Left-to-right windows; a window is attacked iff any of its samples is labeled.
std::vector<WindowMatrix> windows(const MeasurementTrace& trace, double width, double stride,
                                  const LabelMask& mask);

/// Per-sample labels restricted to the trace's columns (mask may cover more buses).
Eigen::Array<bool, Eigen::Dynamic, 1> sample_labels(const MeasurementTrace& trace,
                                                    const LabelMask& mask);

}  // namespace fdia
