#include "fdia/simulator.hpp"

#include "fdia/error.hpp"
#include "fdia/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace fdia {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index SimConfig::sample_count() const {
    return static_cast<Index>(std::llround(duration * sample_rate));
}

int SimConfig::substeps() const {
    return static_cast<int>(std::llround(1.0 / (sample_rate * step)));
}

void validate(const SimConfig& cfg) {
    if (!(cfg.sample_rate > 0)) throw ValidationError("sim.sample_rate: must be > 0");
    if (!(cfg.duration > 0)) throw ValidationError("sim.duration: must be > 0");
    if (!(cfg.step > 0)) throw ValidationError("sim.step: must be > 0");
    const double period = 1.0 / cfg.sample_rate;
    if (cfg.step > period * (1 + 1e-12))
        throw ValidationError("sim.step: integration step exceeds the sample period");
    const double ratio = period / cfg.step;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
        throw ValidationError("sim.step: sample period is not a whole number of steps");
    const double samples = cfg.duration * cfg.sample_rate;
    if (std::abs(samples - std::round(samples)) > 1e-9)
        throw ValidationError("sim.duration: not a whole number of samples");
    if (cfg.noise_std < 0) throw ValidationError("sim.noise_std: must be >= 0");
    if (!(cfg.agc_time_constant > 0)) throw ValidationError("sim.agc_time_constant: must be > 0");
    if (!(cfg.nominal_frequency > 0)) throw ValidationError("sim.nominal_frequency: must be > 0");
}

namespace {

/// Node layout: every bus, plus one internal rotor node per generator with xd > 0.
/// Rotor nodes form the dynamic set S; all other nodes are algebraic (A) and are
/// eliminated by Kron reduction.
struct ReducedNetwork {
    Index nb = 0, ng = 0, nn = 0;
    std::vector<Index> rotor_node;  // per generator
    std::vector<Index> alg_pos;     // node -> position in A, or -1
    Index na = 0;
    MatrixXd laplacian;             // nn x nn
    MatrixXd kron;                  // ng x ng
    MatrixXd injection_gain;        // ng x na, B_SA B_AA^-1
    MatrixXd bus_from_rotor;        // nb x ng
    MatrixXd bus_from_injection;    // nb x na
};

ReducedNetwork reduce(const BusNetwork& net) {
    ReducedNetwork r;
    r.nb = static_cast<Index>(net.bus_count());
    r.ng = static_cast<Index>(net.generator_count());
    r.nn = r.nb;
    for (const auto& g : net.generators) {
        if (g.xd > 0)
            r.rotor_node.push_back(r.nn++);
        else
            r.rotor_node.push_back(static_cast<Index>(*net.index_of(g.bus)));
    }
    r.laplacian = MatrixXd::Zero(r.nn, r.nn);
    auto couple = [&](Index i, Index j, double b) {
        r.laplacian(i, i) += b;
        r.laplacian(j, j) += b;
        r.laplacian(i, j) -= b;
        r.laplacian(j, i) -= b;
    };
    for (const auto& l : net.lines)
        couple(static_cast<Index>(*net.index_of(l.from)), static_cast<Index>(*net.index_of(l.to)),
               l.susceptance);
    for (std::size_t g = 0; g < net.generators.size(); ++g)
        if (net.generators[g].xd > 0)
            couple(r.rotor_node[g], static_cast<Index>(*net.index_of(net.generators[g].bus)),
                   1.0 / net.generators[g].xd);

    std::vector<bool> is_state(r.nn, false);
    for (auto n : r.rotor_node) is_state[n] = true;
    r.alg_pos.assign(r.nn, -1);
    std::vector<Index> alg;
    for (Index n = 0; n < r.nn; ++n)
        if (!is_state[n]) {
            r.alg_pos[n] = static_cast<Index>(alg.size());
            alg.push_back(n);
        }
    r.na = static_cast<Index>(alg.size());

    MatrixXd b_ss(r.ng, r.ng), b_sa(r.ng, r.na), b_aa(r.na, r.na);
    for (Index i = 0; i < r.ng; ++i) {
        for (Index j = 0; j < r.ng; ++j) b_ss(i, j) = r.laplacian(r.rotor_node[i], r.rotor_node[j]);
        for (Index j = 0; j < r.na; ++j) b_sa(i, j) = r.laplacian(r.rotor_node[i], alg[j]);
    }
    for (Index i = 0; i < r.na; ++i)
        for (Index j = 0; j < r.na; ++j) b_aa(i, j) = r.laplacian(alg[i], alg[j]);

    MatrixXd aa_inv = MatrixXd::Zero(r.na, r.na);
    if (r.na > 0) {
        Eigen::LLT<MatrixXd> llt(b_aa);
        if (llt.info() != Eigen::Success)
            throw NumericalError("algebraic susceptance block is singular: some buses are "
                                 "islanded from every generator");
        aa_inv = llt.solve(MatrixXd::Identity(r.na, r.na));
    }
    r.injection_gain = b_sa * aa_inv;
    r.kron = b_ss - r.injection_gain * b_sa.transpose();
    const MatrixXd alg_from_rotor = -aa_inv * b_sa.transpose();  // na x ng

    r.bus_from_rotor = MatrixXd::Zero(r.nb, r.ng);
    r.bus_from_injection = MatrixXd::Zero(r.nb, r.na);
    for (Index b = 0; b < r.nb; ++b) {
        if (r.alg_pos[b] >= 0) {
            r.bus_from_rotor.row(b) = alg_from_rotor.row(r.alg_pos[b]);
            r.bus_from_injection.row(b) = aa_inv.row(r.alg_pos[b]);
        } else {
            for (Index g = 0; g < r.ng; ++g)
                if (r.rotor_node[g] == b) r.bus_from_rotor(b, g) = 1.0;
        }
    }
    return r;
}

}  // namespace

OperatingPoint steady_state(const BusNetwork& net) {
    validate(net);
    const auto red = reduce(net);
    VectorXd p = VectorXd::Zero(red.nn);
    for (Index b = 0; b < red.nb; ++b) p(b) -= net.buses[b].load;
    VectorXd pm(red.ng);
    for (Index g = 0; g < red.ng; ++g) pm(g) = net.generators[g].pm;
    const double mismatch = pm.sum() + p.sum();
    pm(0) -= mismatch;
    for (Index g = 0; g < red.ng; ++g) p(red.rotor_node[g]) += pm(g);

    const Index ref = red.rotor_node[0];
    std::vector<Index> keep;
    for (Index n = 0; n < red.nn; ++n)
        if (n != ref) keep.push_back(n);
    const auto m = static_cast<Index>(keep.size());
    MatrixXd b_red(m, m);
    VectorXd p_red(m);
    for (Index i = 0; i < m; ++i) {
        p_red(i) = p(keep[i]);
        for (Index j = 0; j < m; ++j) b_red(i, j) = red.laplacian(keep[i], keep[j]);
    }
    VectorXd theta = VectorXd::Zero(red.nn);
    if (m > 0) {
        Eigen::LLT<MatrixXd> llt(b_red);
        if (llt.info() != Eigen::Success)
            throw NumericalError("susceptance matrix is singular: network has an isolated island");
        const VectorXd sol = llt.solve(p_red);
        for (Index i = 0; i < m; ++i) theta(keep[i]) = sol(i);
    }

    OperatingPoint op;
    op.bus_angles = theta.head(red.nb);
    op.rotor_angles.resize(red.ng);
    for (Index g = 0; g < red.ng; ++g) op.rotor_angles(g) = theta(red.rotor_node[g]);
    op.mechanical_power = pm;
    op.residual = (red.laplacian * theta - p).cwiseAbs().maxCoeff();
    return op;
}

SimulationResult simulate(const BusNetwork& net, const std::vector<GridEvent>& events,
                          const SimConfig& cfg, const MeasurementTap& tap) {
    validate(cfg);
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.time < 0) throw ValidationError("events[" + std::to_string(i) + "].time: must be >= 0");
        if (!net.index_of(e.bus))
            throw ValidationError("events[" + std::to_string(i) + "].bus: unknown bus " +
                                  std::to_string(e.bus));
        if (i > 0 && events[i - 1].time > e.time)
            throw ValidationError("events: not sorted by time");
    }

    const auto op = steady_state(net);
    const auto red = reduce(net);
    const Index nb = red.nb, ng = red.ng;
    const Index n_samples = cfg.sample_count();
    const int substeps = cfg.substeps();
    const double period = 1.0 / cfg.sample_rate;
    const double h = period / substeps;
    const double ws = 2.0 * std::numbers::pi * cfg.nominal_frequency;

    VectorXd inertia(ng), damping(ng), droop(ng), tg(ng), part(ng);
    for (Index g = 0; g < ng; ++g) {
        const auto& gen = net.generators[g];
        inertia(g) = gen.inertia;
        damping(g) = gen.damping;
        droop(g) = gen.droop_gain;
        tg(g) = gen.governor_tc;
        part(g) = gen.participation;
    }
    const auto areas = net.areas();
    const auto n_areas = static_cast<Index>(areas.size());
    std::vector<Index> area_of(ng);
    VectorXd bias = VectorXd::Zero(n_areas);
    VectorXd gens_in_area = VectorXd::Zero(n_areas);
    std::vector<Index> gen_bus(ng);
    for (Index g = 0; g < ng; ++g) {
        const auto& gen = net.generators[g];
        area_of[g] = std::lower_bound(areas.begin(), areas.end(), gen.area) - areas.begin();
        bias(area_of[g]) += gen.droop_gain + gen.damping * ws;
        gens_in_area(area_of[g]) += 1.0;
        gen_bus[g] = static_cast<Index>(*net.index_of(gen.bus));
    }

    // Deviation state: [delta (ng), omega rad/s (ng), pm (ng)].
    VectorXd y = VectorXd::Zero(3 * ng);
    VectorXd agc = VectorXd::Zero(n_areas);
    VectorXd d_injection = VectorXd::Zero(red.na);  // algebraic-node injection change
    VectorXd d_rotor_load = VectorXd::Zero(ng);     // load change on xd=0 generator buses
    VectorXd pe_external = VectorXd::Zero(ng);
    VectorXd pref = VectorXd::Zero(ng);

    std::size_t next_event = 0;
    auto apply_due = [&](double t) {
        bool changed = false;
        while (next_event < events.size() && events[next_event].time <= t + 1e-9) {
            const auto& e = events[next_event++];
            const auto node = static_cast<Index>(*net.index_of(e.bus));
            if (red.alg_pos[node] >= 0) {
                d_injection(red.alg_pos[node]) -= e.magnitude;
            } else {
                for (Index g = 0; g < ng; ++g)
                    if (red.rotor_node[g] == node) d_rotor_load(g) += e.magnitude;
            }
            changed = true;
        }
        if (changed) pe_external = red.injection_gain * d_injection + d_rotor_load;
    };

    auto rhs = [&](const VectorXd& s) {
        VectorXd ds(3 * ng);
        const auto delta = s.segment(0, ng);
        const auto omega = s.segment(ng, ng);
        const auto pm = s.segment(2 * ng, ng);
        const VectorXd pe = red.kron * delta + pe_external;
        ds.segment(0, ng) = omega;
        ds.segment(ng, ng) = ((pm - pe).array() - damping.array() * omega.array()) / inertia.array();
        ds.segment(2 * ng, ng) =
            ((pref - pm).array() - droop.array() * omega.array() / ws) / tg.array();
        return ds;
    };

    auto bus_angles = [&](const VectorXd& s) -> VectorXd {
        return op.bus_angles + red.bus_from_rotor * s.segment(0, ng) +
               red.bus_from_injection * d_injection;
    };

    SimulationResult result;
    result.areas = areas;
    auto& trace = result.trace;
    trace.sample_rate = cfg.sample_rate;
    trace.bus_ids = net.bus_ids();
    trace.provenance = Provenance::True;
    trace.angles.resize(n_samples, nb);
    result.agc_setpoints.resize(n_samples, n_areas);
    result.generator_frequency.resize(n_samples, ng);
    result.area_frequency_measured.resize(n_samples, n_areas);

    VectorXd prev_feedback(nb);
    Index recorded = 0;
    for (Index k = 0; k < n_samples; ++k) {
        const double t = static_cast<double>(k) * period;
        apply_due(t);

        const VectorXd truth = bus_angles(y);
        VectorXd measured = truth;
        if (cfg.noise_std > 0)
            for (Index b = 0; b < nb; ++b)
                measured(b) += cfg.noise_std *
                               counter_normal(cfg.noise_seed, static_cast<std::uint64_t>(b),
                                              static_cast<std::uint64_t>(k));
        trace.angles.row(k) = measured.transpose();
        result.generator_frequency.row(k) = (y.segment(ng, ng) / ws).transpose();

        VectorXd feedback = truth;
        if (cfg.measurement_feedback) {
            feedback = measured;
            if (tap) tap(k, t, feedback);
        }
        VectorXd area_f = VectorXd::Zero(n_areas);
        if (k > 0) {
            for (Index g = 0; g < ng; ++g)
                area_f(area_of[g]) +=
                    (feedback(gen_bus[g]) - prev_feedback(gen_bus[g])) / (period * ws);
            area_f.array() /= gens_in_area.array();
        }
        prev_feedback = feedback;
        agc.array() -= bias.array() / cfg.agc_time_constant * area_f.array() * period;
        for (Index g = 0; g < ng; ++g) pref(g) = part(g) * agc(area_of[g]);
        result.agc_setpoints.row(k) = agc.transpose();
        result.area_frequency_measured.row(k) = area_f.transpose();
        recorded = k + 1;

        if (k + 1 == n_samples) break;
        for (int s = 0; s < substeps; ++s) {
            apply_due(t + s * h);
            const VectorXd k1 = rhs(y);
            const VectorXd k2 = rhs(y + 0.5 * h * k1);
            const VectorXd k3 = rhs(y + 0.5 * h * k2);
            const VectorXd k4 = rhs(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if (!y.allFinite() || y.cwiseAbs().maxCoeff() > cfg.divergence_bound) {
            std::ostringstream os;
            os << "integration diverged after t = " << t + period
               << " s (|state| exceeded " << cfg.divergence_bound << ")";
            result.diverged = true;
            result.diagnostic = os.str();
            break;
        }
    }

    if (recorded < n_samples) {
        trace.angles.conservativeResize(recorded, nb);
        result.agc_setpoints.conservativeResize(recorded, n_areas);
        result.generator_frequency.conservativeResize(recorded, ng);
        result.area_frequency_measured.conservativeResize(recorded, n_areas);
    }
    trace.time = uniform_grid(recorded, cfg.sample_rate);
    MatrixXd freq = MatrixXd::Zero(recorded, nb);
    for (Index k = 1; k < recorded; ++k)
        freq.row(k) = (trace.angles.row(k) - trace.angles.row(k - 1)) / (period * ws);
    trace.frequency = std::move(freq);
    return result;
}

}  // namespace fdia
