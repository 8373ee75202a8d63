#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fdia {

enum class BusType { Generator, Load };

struct Bus {
    int id = 0;
    BusType type = BusType::Load;
    double load = 0.0;  ///< active-power demand, pu
};

struct Line {
    int from = 0;
    int to = 0;
    double susceptance = 0.0;  ///< pu, b = 1/x
};

struct Generator {
    int bus = 0;
    double inertia = 0.0;        ///< M, pu s^2/rad
    double damping = 0.0;        ///< D, pu s/rad
    double droop_gain = 0.0;     ///< 1/R, pu power per pu frequency
    double governor_tc = 0.0;    ///< T_g, s
    double participation = 0.0;  ///< AGC share within its area
    int area = 0;
    double pm = 0.0;             ///< scheduled mechanical power, pu
    double xd = 0.0;             ///< transient reactance, pu (0 = rotor on terminal bus)
};

/// Immutable once validated; buses are kept sorted by id.
struct BusNetwork {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Generator> generators;

    std::size_t bus_count() const noexcept { return buses.size(); }
    std::size_t generator_count() const noexcept { return generators.size(); }
    std::optional<std::size_t> index_of(int bus_id) const;
    std::vector<int> bus_ids() const;
    /// Sorted distinct area ids.
    std::vector<int> areas() const;
};

BusNetwork parse_network(std::istream& in, std::string_view source = "<stream>");
BusNetwork load_network(const std::filesystem::path& path);

/// Throws ValidationError naming the offending field.
void validate(const BusNetwork& net);

/// 68 buses, 16 generators in 5 areas.
bool has_benchmark_shape(const BusNetwork& net);

std::string to_string(BusType type);

}  // namespace fdia
