#include "fdia/attack.hpp"

#include "fdia/error.hpp"
#include "fdia/rng.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace fdia {

using Eigen::Index;

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::Step: return "step";
        case AttackKind::Poison: return "poison";
        case AttackKind::Ramp: return "ramp";
        case AttackKind::Rtw: return "rtw";
    }
    return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "step") return AttackKind::Step;
    if (s == "poison") return AttackKind::Poison;
    if (s == "ramp") return AttackKind::Ramp;
    if (s == "rtw") return AttackKind::Rtw;
    throw ParseError("attack.kind: unknown kind '" + s + "'");
}

void validate(const AttackSpec& spec, double horizon, const std::vector<int>& bus_ids) {
    if (!(spec.t1 >= 0.0)) throw ValidationError("attack.t1: must be >= 0");
    if (!(spec.t1 < spec.t2)) throw ValidationError("attack.t2: must be greater than t1");
    if (spec.t2 > horizon + 1e-9)
        throw ValidationError("attack.t2: window ends after the horizon");
    if (spec.targets.empty()) throw ValidationError("attack.targets: must not be empty");
    std::set<int> seen;
    for (int b : spec.targets) {
        if (!seen.insert(b).second)
            throw ValidationError("attack.targets: duplicate bus " + std::to_string(b));
        if (std::find(bus_ids.begin(), bus_ids.end(), b) == bus_ids.end())
            throw ValidationError("attack.targets: unknown bus " + std::to_string(b));
    }
    if (spec.sigma < 0.0) throw ValidationError("attack.sigma: must be >= 0");
    if (spec.kind == AttackKind::Rtw)
        for (int b : spec.targets)
            if (!spec.nominal.count(b))
                throw ValidationError("attack.nominal: missing reference angle for bus " +
                                      std::to_string(b));
}

void resolve_nominal(AttackSpec& spec, const BusNetwork& net, const OperatingPoint& op) {
    for (int b : spec.targets) {
        if (spec.nominal.count(b)) continue;
        auto idx = net.index_of(b);
        if (!idx) throw ValidationError("attack.targets: unknown bus " + std::to_string(b));
        spec.nominal[b] = op.bus_angles(static_cast<Index>(*idx));
    }
}

double poison_draw(const AttackSpec& spec, int bus_id, Index sample) {
    return spec.mu + spec.sigma * counter_normal(spec.seed, static_cast<std::uint64_t>(bus_id),
                                                 static_cast<std::uint64_t>(sample));
}

namespace {

double attack_sample(const AttackSpec& spec, int bus, Index sample, double t, double phi) {
    const double nominal = spec.kind == AttackKind::Rtw ? spec.nominal.at(bus) : 0.0;
    const double draw = spec.kind == AttackKind::Poison ? poison_draw(spec, bus, sample) : 0.0;
    return attacked_value(spec, phi, t - spec.t1, nominal, draw);
}

}  // namespace

MeasurementTrace apply_attack(const MeasurementTrace& trace, const AttackSpec& spec) {
    validate(trace);
    if (trace.samples() == 0) throw ValidationError("attack: empty trace");
    const double last = trace.time(trace.samples() - 1);
    if (spec.t1 < trace.time(0) - 1e-9 || spec.t2 > last + 1e-9)
        throw ValidationError("attack: window [" + std::to_string(spec.t1) + ", " +
                              std::to_string(spec.t2) + "] s is outside the trace");
    validate(spec, last, trace.bus_ids);

    MeasurementTrace out = trace;
    out.provenance = Provenance::Attacked;
    for (int bus : spec.targets) {
        const Index col = trace.column_of(bus);
        for (Index k = 0; k < trace.samples(); ++k) {
            const double t = trace.time(k);
            if (in_window(spec, t)) out.angles(k, col) = attack_sample(spec, bus, k, t, trace.angles(k, col));
        }
    }
    return out;
}

MeasurementTap make_attack_tap(const AttackSpec& spec, const std::vector<int>& bus_ids) {
    std::vector<std::pair<int, Index>> columns;
    for (int bus : spec.targets) {
        auto it = std::find(bus_ids.begin(), bus_ids.end(), bus);
        if (it == bus_ids.end())
            throw ValidationError("attack.targets: unknown bus " + std::to_string(bus));
        columns.emplace_back(bus, static_cast<Index>(it - bus_ids.begin()));
    }
    return [spec, columns](Index sample, double t, Eigen::Ref<Eigen::VectorXd> angles) {
        if (!in_window(spec, t)) return;
        for (const auto& [bus, col] : columns)
            angles(col) = attack_sample(spec, bus, sample, t, angles(col));
    };
}

LabelMask attack_label_mask(const AttackSpec& spec, const Eigen::VectorXd& time,
                            const std::vector<int>& bus_ids) {
    if (time.size() == 0) throw ValidationError("label mask: empty time grid");
    validate(spec, std::numeric_limits<double>::infinity(), bus_ids);
    LabelMask mask = empty_label_mask(time.size(), bus_ids);
    for (int bus : spec.targets) {
        const auto col = static_cast<Index>(
            std::find(bus_ids.begin(), bus_ids.end(), bus) - bus_ids.begin());
        for (Index k = 0; k < time.size(); ++k)
            if (in_window(spec, time(k))) mask.cells(k, col) = true;
    }
    mask.any = mask.cells.rowwise().any();
    return mask;
}

LabelMask empty_label_mask(Index samples, const std::vector<int>& bus_ids) {
    LabelMask mask;
    mask.bus_ids = bus_ids;
    mask.cells.setConstant(samples, static_cast<Index>(bus_ids.size()), false);
    mask.any.setConstant(samples, false);
    return mask;
}

}  // namespace fdia
