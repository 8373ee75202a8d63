#pragma once

#include "fdia/network.hpp"
#include "fdia/trace.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fdia {

struct GridEvent {
    enum class Kind { LoadChange };
    Kind kind = Kind::LoadChange;
    int bus = 0;
    double magnitude = 0.0;  ///< pu, positive = more demand
    double time = 0.0;       ///< s
};

struct SimConfig {
    double sample_rate = 50.0;        ///< Hz
    double duration = 30.0;           ///< s
    double step = 0.02;               ///< RK4 step, s
    bool measurement_feedback = true; ///< AGC reads measured (tapped) angles
    double noise_std = 0.0;           ///< additive angle noise, rad
    std::uint64_t noise_seed = 0;
    double agc_time_constant = 10.0;  ///< s
    double nominal_frequency = 60.0;  ///< Hz
    double divergence_bound = 1e3;

    Eigen::Index sample_count() const;
    int substeps() const;
};

void validate(const SimConfig& cfg);

struct OperatingPoint {
    Eigen::VectorXd bus_angles;        ///< rad, one per bus (network order)
    Eigen::VectorXd rotor_angles;      ///< rad, one per generator
    Eigen::VectorXd mechanical_power;  ///< pu, one per generator
    double residual = 0.0;             ///< max |B theta - P|, pu
};

/// DC power flow; any generation/load mismatch is taken by the first generator,
/// whose rotor angle is the zero reference.
OperatingPoint steady_state(const BusNetwork& net);

/// Rewrites measured bus angles (network column order) at one sample in place.
using MeasurementTap =
    std::function<void(Eigen::Index sample, double time, Eigen::Ref<Eigen::VectorXd> angles)>;

struct SimulationResult {
    MeasurementTrace trace;          ///< untapped measurements (true angles + sensor noise)
    Eigen::MatrixXd agc_setpoints;   ///< samples x areas, AGC integrator output, pu
    Eigen::MatrixXd generator_frequency;  ///< samples x generators, true deviation, pu
    Eigen::MatrixXd area_frequency_measured;  ///< samples x areas, what the AGC saw, pu
    std::vector<int> areas;
    bool diverged = false;
    std::string diagnostic;
};

/// Linearized swing dynamics with governors and AGC. Events must be sorted by time.
SimulationResult simulate(const BusNetwork& net, const std::vector<GridEvent>& events,
                          const SimConfig& cfg, const MeasurementTap& tap = {});

}  // namespace fdia
