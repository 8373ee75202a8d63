#pragma once

#include "fdia/scenario.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fdia {

struct BarGroup {
    std::string label;            ///< x category (detector)
    std::vector<double> values;   ///< one per series
};

/// Grouped bar chart, values in [0, 1].
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& series,
                          const std::vector<BarGroup>& groups);

struct LineSeries {
    std::string label;
    std::vector<double> y;
    bool highlight = false;
};

std::string line_chart_svg(const std::string& title, const std::vector<double>& x, const std::vector<LineSeries>& lines,
                           double threshold = -1.0);

/// Per-cell outputs plus bars_<detector metrics>.svg and score charts.
void write_scenario_report(const ScenarioResult& result, const std::filesystem::path& dir);

/// Suite tables (metrics.csv, table_<placement>_<magnitude>.csv, bars.csv), summary.json and charts.
void write_suite_report(const SuiteResult& suite, const std::filesystem::path& dir);

}  // namespace fdia
