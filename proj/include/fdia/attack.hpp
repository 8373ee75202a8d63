#pragma once

#include "fdia/simulator.hpp"
#include "fdia/trace.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fdia {

enum class AttackKind { Step, Poison, Ramp, Rtw };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackSpec {
    AttackKind kind = AttackKind::Step;
    std::vector<int> targets;
    double t1 = 2.0;  ///< s
    double t2 = 22.0; ///< s, inclusive
    double c = 1.0;         ///< step scale
    double mu = 0.0;        ///< poison mean
    double sigma = 0.0;     ///< poison standard deviation
    double m = 0.0;         ///< ramp gradient, 1/s
    double beta = 0.0;      ///< RTW gain, 1/s
    std::map<int, double> nominal;  ///< RTW reference angle per target bus
    bool rtw_literal = false;       ///< use c(t)*phi instead of (1 + c(t))*phi
    std::uint64_t seed = 0;
};

/// Checks 0 <= t1 < t2 <= horizon, targets non-empty/distinct/known, sigma >= 0,
/// RTW nominal present for every target.
void validate(const AttackSpec& spec, double horizon, const std::vector<int>& bus_ids);

/// Fills missing RTW nominal angles from the pre-event steady state.
void resolve_nominal(AttackSpec& spec, const BusNetwork& net, const OperatingPoint& op);

inline bool in_window(const AttackSpec& spec, double t) noexcept {
    return t >= spec.t1 - 1e-9 && t <= spec.t2 + 1e-9;
}

/// Attacked value of one in-window sample. `draw` is the poison realisation.
template <typename Scalar>
Scalar attacked_value(const AttackSpec& spec, Scalar phi, Scalar elapsed, Scalar nominal,
                      Scalar draw) {
    switch (spec.kind) {
        case AttackKind::Step:
            return static_cast<Scalar>(spec.c) * phi;
        case AttackKind::Poison:
            return phi + draw;
        case AttackKind::Ramp:
            return (Scalar(1) + static_cast<Scalar>(spec.m) * elapsed) * phi;
        case AttackKind::Rtw: {
            const Scalar ct = static_cast<Scalar>(spec.beta) * elapsed * (phi - nominal);
            return spec.rtw_literal ? ct * phi : (Scalar(1) + ct) * phi;
        }
    }
    return phi;
}

/// Poison realisation for (bus, sample); regenerable from the seed alone.
double poison_draw(const AttackSpec& spec, int bus_id, Eigen::Index sample);

/// Applies the attack to a copy of `trace`; samples outside [t1, t2] or on other
/// buses are copied bit-exactly.
MeasurementTrace apply_attack(const MeasurementTrace& trace, const AttackSpec& spec);

/// Same transformation sample by sample, for closing the AGC loop over attacked data.
MeasurementTap make_attack_tap(const AttackSpec& spec, const std::vector<int>& bus_ids);

struct LabelMask {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> cells;  ///< samples x buses
    Eigen::Array<bool, Eigen::Dynamic, 1> any;                  ///< per sample
    std::vector<int> bus_ids;

    Eigen::Index positives(Eigen::Index column) const { return cells.col(column).count(); }
};

LabelMask attack_label_mask(const AttackSpec& spec, const Eigen::VectorXd& time,
                            const std::vector<int>& bus_ids);

/// All-false mask for unattacked runs.
LabelMask empty_label_mask(Eigen::Index samples, const std::vector<int>& bus_ids);

}  // namespace fdia
