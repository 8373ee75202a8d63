#pragma once

#include "fdia/network.hpp"
#include "fdia/trace.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <sstream>
#include <string>

namespace fdia::test {

inline std::filesystem::path data_dir() { return FDIA_TEST_DATA_DIR; }
inline std::filesystem::path config_dir() { return FDIA_TEST_CONFIG_DIR; }

// One generator (rotor on its terminal bus) feeding one load over a single line.
inline std::string toy_network_text(double load = 0.5, double susceptance = 5.0) {
    std::ostringstream os;
    os << "[buses]\nid,type,load\n1,generator,0\n2,load," << load << "\n"
       << "[lines]\nfrom,to,susceptance\n1,2," << susceptance << "\n"
       << "[generators]\nbus,inertia,damping,droop_gain,governor_tc,participation,area,pm,xd\n"
       << "1,0.2,0.5,20,0.5,1.0,1," << load << ",0\n";
    return os.str();
}

inline BusNetwork toy_network(double load = 0.5, double susceptance = 5.0) {
    std::istringstream in(toy_network_text(load, susceptance));
    return parse_network(in, "toy");
}

inline MeasurementTrace make_trace(const Eigen::MatrixXd& angles, double rate, std::vector<int> ids = {}) {
    MeasurementTrace t;
    t.angles = angles;
    t.sample_rate = rate;
    t.time = uniform_grid(angles.rows(), rate);
    if (ids.empty())
        for (Eigen::Index j = 0; j < angles.cols(); ++j) ids.push_back(static_cast<int>(j + 1));
    t.bus_ids = std::move(ids);
    t.scenario_id = "test";
    return t;
}

}  // namespace fdia::test
