#include "fdia/network.hpp"

#include "fdia/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace fdia {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct Row {
    std::size_t line_no;
    std::map<std::string, std::string> fields;
};

struct Section {
    std::vector<std::string> header;
    std::vector<Row> rows;
};

class RowReader {
public:
    RowReader(const Row& row, std::string_view section, std::string_view source)
        : row_(row), section_(section), source_(source) {}

    const std::string& raw(const std::string& key) const {
        auto it = row_.fields.find(key);
        if (it == row_.fields.end() || it->second.empty()) fail(key, "missing value");
        return it->second;
    }

    double number(const std::string& key) const {
        const auto& text = raw(key);
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value))
            fail(key, "not a number: '" + text + "'");
        return value;
    }

    int integer(const std::string& key) const {
        const auto& text = raw(key);
        int value = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size())
            fail(key, "not an integer: '" + text + "'");
        return value;
    }

    double number_or(const std::string& key, double fallback) const {
        auto it = row_.fields.find(key);
        return (it == row_.fields.end() || it->second.empty()) ? fallback : number(key);
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        std::ostringstream os;
        os << source_ << ":" << row_.line_no << ": [" << section_ << "] field '" << key
           << "': " << what;
        throw ParseError(os.str());
    }

private:
    const Row& row_;
    std::string_view section_;
    std::string_view source_;
};

std::map<std::string, Section> read_sections(std::istream& in, std::string_view source) {
    std::map<std::string, Section> sections;
    Section* current = nullptr;
    std::string current_name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        if (text.front() == '[') {
            if (text.back() != ']')
                throw ParseError(std::string(source) + ":" + std::to_string(line_no) +
                                 ": unterminated section header");
            current_name = text.substr(1, text.size() - 2);
            if (sections.count(current_name))
                throw ParseError(std::string(source) + ":" + std::to_string(line_no) +
                                 ": duplicate section [" + current_name + "]");
            current = &sections[current_name];
            continue;
        }
        if (!current)
            throw ParseError(std::string(source) + ":" + std::to_string(line_no) +
                             ": data outside of a section");
        auto cells = split_csv(text);
        if (current->header.empty()) {
            current->header = std::move(cells);
            continue;
        }
        if (cells.size() != current->header.size())
            throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": [" +
                             current_name + "] expected " +
                             std::to_string(current->header.size()) + " columns, got " +
                             std::to_string(cells.size()));
        Row row{line_no, {}};
        for (std::size_t i = 0; i < cells.size(); ++i) row.fields[current->header[i]] = cells[i];
        current->rows.push_back(std::move(row));
    }
    return sections;
}

const Section& require_section(const std::map<std::string, Section>& sections,
                               const std::string& name, std::string_view source) {
    auto it = sections.find(name);
    if (it == sections.end())
        throw ParseError(std::string(source) + ": missing section [" + name + "]");
    return it->second;
}

}  // namespace

std::optional<std::size_t> BusNetwork::index_of(int bus_id) const {
    auto it = std::lower_bound(buses.begin(), buses.end(), bus_id,
                               [](const Bus& b, int id) { return b.id < id; });
    if (it == buses.end() || it->id != bus_id) return std::nullopt;
    return static_cast<std::size_t>(it - buses.begin());
}

std::vector<int> BusNetwork::bus_ids() const {
    std::vector<int> ids;
    ids.reserve(buses.size());
    for (const auto& b : buses) ids.push_back(b.id);
    return ids;
}

std::vector<int> BusNetwork::areas() const {
    std::set<int> s;
    for (const auto& g : generators) s.insert(g.area);
    return {s.begin(), s.end()};
}

std::string to_string(BusType type) {
    return type == BusType::Generator ? "generator" : "load";
}

BusNetwork parse_network(std::istream& in, std::string_view source) {
    const auto sections = read_sections(in, source);
    BusNetwork net;

    for (const auto& row : require_section(sections, "buses", source).rows) {
        RowReader r(row, "buses", source);
        Bus bus;
        bus.id = r.integer("id");
        const auto& type = r.raw("type");
        if (type == "generator")
            bus.type = BusType::Generator;
        else if (type == "load")
            bus.type = BusType::Load;
        else
            r.fail("type", "expected 'generator' or 'load', got '" + type + "'");
        bus.load = r.number_or("load", 0.0);
        net.buses.push_back(bus);
    }
    for (const auto& row : require_section(sections, "lines", source).rows) {
        RowReader r(row, "lines", source);
        net.lines.push_back({r.integer("from"), r.integer("to"), r.number("susceptance")});
    }
    for (const auto& row : require_section(sections, "generators", source).rows) {
        RowReader r(row, "generators", source);
        Generator g;
        g.bus = r.integer("bus");
        g.inertia = r.number("inertia");
        g.damping = r.number("damping");
        g.droop_gain = r.number("droop_gain");
        g.governor_tc = r.number("governor_tc");
        g.participation = r.number("participation");
        g.area = r.integer("area");
        g.pm = r.number_or("pm", 0.0);
        g.xd = r.number_or("xd", 0.0);
        net.generators.push_back(g);
    }
    std::sort(net.buses.begin(), net.buses.end(),
              [](const Bus& a, const Bus& b) { return a.id < b.id; });
    validate(net);
    return net;
}

BusNetwork load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open network file " + path.string());
    return parse_network(in, path.string());
}

void validate(const BusNetwork& net) {
    auto fail = [](const std::string& msg) { throw ValidationError(msg); };
    if (net.buses.empty()) fail("buses: network has no buses");
    if (net.generators.empty()) fail("generators: network has no generators");

    for (std::size_t i = 0; i < net.buses.size(); ++i) {
        const auto& b = net.buses[i];
        if (b.id <= 0) fail("buses.id: bus id " + std::to_string(b.id) + " must be positive");
        if (i > 0 && net.buses[i - 1].id >= b.id)
            fail("buses.id: duplicate or unsorted bus id " + std::to_string(b.id));
    }

    for (std::size_t i = 0; i < net.lines.size(); ++i) {
        const auto& l = net.lines[i];
        const auto tag = "lines[" + std::to_string(i) + "]";
        if (!net.index_of(l.from))
            fail(tag + ".from: references unknown bus " + std::to_string(l.from));
        if (!net.index_of(l.to))
            fail(tag + ".to: references unknown bus " + std::to_string(l.to));
        if (l.from == l.to) fail(tag + ": self loop on bus " + std::to_string(l.from));
        if (!(l.susceptance > 0.0)) fail(tag + ".susceptance: must be > 0");
    }

    std::map<int, double> participation_by_area;
    std::set<int> generator_buses;
    for (std::size_t i = 0; i < net.generators.size(); ++i) {
        const auto& g = net.generators[i];
        const auto tag = "generators[" + std::to_string(i) + "]";
        auto idx = net.index_of(g.bus);
        if (!idx) fail(tag + ".bus: references unknown bus " + std::to_string(g.bus));
        if (net.buses[*idx].type != BusType::Generator)
            fail(tag + ".bus: bus " + std::to_string(g.bus) + " is not typed 'generator'");
        if (!generator_buses.insert(g.bus).second)
            fail(tag + ".bus: second generator on bus " + std::to_string(g.bus));
        if (!(g.inertia > 0.0)) fail(tag + ".inertia: must be > 0");
        if (!(g.damping > 0.0)) fail(tag + ".damping: must be > 0");
        if (g.droop_gain < 0.0) fail(tag + ".droop_gain: must be >= 0");
        if (!(g.governor_tc > 0.0)) fail(tag + ".governor_tc: must be > 0");
        if (g.participation < 0.0 || g.participation > 1.0)
            fail(tag + ".participation: must lie in [0, 1]");
        if (g.area < 1) fail(tag + ".area: must be >= 1");
        if (g.xd < 0.0) fail(tag + ".xd: must be >= 0");
        participation_by_area[g.area] += g.participation;
    }
    for (const auto& b : net.buses)
        if (b.type == BusType::Generator && !generator_buses.count(b.id))
            fail("buses.type: bus " + std::to_string(b.id) +
                 " is typed 'generator' but has no generator row");
    for (const auto& [area, sum] : participation_by_area)
        if (std::abs(sum - 1.0) > 1e-9)
            fail("generators.participation: area " + std::to_string(area) + " sums to " +
                 std::to_string(sum) + ", expected 1");

    // Connectivity by union-find over bus indices.
    std::vector<std::size_t> parent(net.buses.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& l : net.lines) parent[find(*net.index_of(l.from))] = find(*net.index_of(l.to));
    const auto root = find(0);
    for (std::size_t i = 0; i < net.buses.size(); ++i)
        if (find(i) != root)
            fail("lines: network is disconnected; bus " + std::to_string(net.buses[i].id) +
                 " is not reachable from bus " + std::to_string(net.buses[0].id));
}

bool has_benchmark_shape(const BusNetwork& net) {
    return net.bus_count() == 68 && net.generator_count() == 16 && net.areas().size() == 5;
}

}  // namespace fdia
