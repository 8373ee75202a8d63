#include "fdia/report.hpp"

#include "fdia/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <array>
#include <map>
#include <sstream>

namespace fdia {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v, const char* f = "%.4f") {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& series,
                          const std::vector<BarGroup>& groups) {
    const double w = 120.0 * static_cast<double>(std::max<std::size_t>(groups.size(), 1)) + 120.0, h = 320.0;
    const double left = 50.0, bottom = 40.0, top = 40.0, plot_h = h - bottom - top;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double y = top + plot_h * (1.0 - k / 4.0);
        s << "<line x1=\"" << left << "\" x2=\"" << w - 70 << "\" y1=\"" << y << "\" y2=\"" << y
          << "\" stroke=\"#ddd\"/>\n";
        s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
          << num(k / 4.0, "%.2f") << "</text>\n";
    }
    const double gw = 120.0, bw = (gw - 20.0) / static_cast<double>(std::max<std::size_t>(series.size(), 1));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double gx = left + 10.0 + gw * static_cast<double>(g);
        for (std::size_t k = 0; k < groups[g].values.size() && k < series.size(); ++k) {
            const double v = std::clamp(groups[g].values[k], 0.0, 1.0);
            s << "<rect x=\"" << gx + bw * static_cast<double>(k) << "\" y=\"" << top + plot_h * (1.0 - v)
              << "\" width=\"" << bw - 2 << "\" height=\"" << plot_h * v << "\" fill=\"" << kPalette[k % 6]
              << "\"/>\n";
        }
        s << "<text x=\"" << gx + (gw - 20.0) / 2 << "\" y=\"" << h - bottom + 16
          << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(groups[g].label) << "</text>\n";
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double y = top + 14.0 * static_cast<double>(k);
        s << "<rect x=\"" << w - 62 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[k % 6]
          << "\"/><text x=\"" << w - 48 << "\" y=\"" << y + 9 << "\" font-size=\"10\">" << escape(series[k])
          << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string line_chart_svg(const std::string& title, const std::vector<double>& x, const std::vector<LineSeries>& lines,
                           double threshold) {
    const double w = 720.0, h = 360.0, left = 60.0, right = 20.0, top = 40.0, bottom = 40.0;
    double ymax = threshold > 0.0 ? threshold : 0.0;
    for (const auto& l : lines)
        for (double v : l.y)
            if (std::isfinite(v)) ymax = std::max(ymax, v);
    if (ymax <= 0.0) ymax = 1.0;
    const double x0 = x.empty() ? 0.0 : x.front(), x1 = x.empty() ? 1.0 : x.back();
    auto px = [&](double v) { return left + (w - left - right) * (v - x0) / std::max(x1 - x0, 1e-12); };
    auto py = [&](double v) { return top + (h - top - bottom) * (1.0 - std::clamp(v / ymax, 0.0, 1.0)); };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
      << num(ymax, "%.3g") << "</text>\n";
    s << "<text x=\"" << left << "\" y=\"" << h - bottom + 16 << "\" font-size=\"10\">" << num(x0, "%.3g")
      << " s</text><text x=\"" << w - right << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"end\" font-size=\"10\">"
      << num(x1, "%.3g") << " s</text>\n";
    // Background series first so highlighted ones stay on top.
    for (int pass = 0; pass < 2; ++pass) {
        std::size_t hi = 0;
        for (const auto& l : lines) {
            if (l.highlight != (pass == 1)) continue;
            const std::string color = l.highlight ? kPalette[(hi++ + 3) % 6] : "#bbbbbb";
            s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << (l.highlight ? 1.6 : 0.6)
              << "\" points=\"";
            for (std::size_t i = 0; i < l.y.size() && i < x.size(); ++i)
                s << num(px(x[i]), "%.1f") << ',' << num(py(l.y[i]), "%.1f") << ' ';
            s << "\"><title>" << escape(l.label) << "</title></polyline>\n";
        }
    }
    if (threshold > 0.0)
        s << "<line x1=\"" << left << "\" x2=\"" << w - right << "\" y1=\"" << py(threshold) << "\" y2=\""
          << py(threshold) << "\" stroke=\"black\" stroke-dasharray=\"4 3\"/>\n";
    s << "</svg>\n";
    return s.str();
}

void write_scenario_report(const ScenarioResult& res, const fs::path& dir) {
    write_scenario_outputs(res, dir);
    try {
        std::vector<BarGroup> groups;
        for (const auto& d : res.detectors)
            groups.push_back({d.detector, {d.metrics.precision, d.metrics.recall, d.metrics.f1}});
        write_text(dir / "bars.svg", bar_chart_svg(res.config.id, {"precision", "recall", "F1"}, groups));
        std::vector<int> targets = res.config.attack ? res.config.attack->targets : std::vector<int>{};
        for (const auto& d : res.detectors) {
            if (!d.scores) continue;
            const auto& s = *d.scores;
            std::vector<double> x(s.time.data(), s.time.data() + s.time.size());
            std::vector<LineSeries> lines;
            for (Eigen::Index j = 0; j < s.sensor.cols(); ++j) {
                LineSeries l;
                l.label = "bus " + std::to_string(s.sensor_ids[static_cast<std::size_t>(j)]);
                l.y.assign(s.sensor.col(j).data(), s.sensor.col(j).data() + s.sensor.rows());
                l.highlight = std::find(targets.begin(), targets.end(), s.sensor_ids[static_cast<std::size_t>(j)]) != targets.end();
                lines.push_back(std::move(l));
            }
            write_text(dir / ("scores_" + d.detector + ".svg"),
                       line_chart_svg(res.config.id + " " + d.detector + " per-bus scores", x, lines, s.threshold));
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("report", e.what());
    }
}

void write_suite_report(const SuiteResult& suite, const fs::path& dir) {
    try {
        fs::create_directories(dir);
        std::vector<const ScenarioResult*> all;
        for (const auto& c : suite.cells) all.push_back(&c);
        if (suite.holdout) all.push_back(&*suite.holdout);
        for (const auto* c : all) write_scenario_report(*c, dir / "cells" / c->config.id);

        std::ostringstream csv;
        csv << "scenario,placement,magnitude,attack_kind,detector,precision,recall,f1,tp,fp,fn,tn,"
               "precision_degenerate,hit_at_k,mean_rank\n";
        std::map<std::string, std::map<std::string, std::map<std::string, const DetectorResult*>>> tables;
        json summary = json::object();
        for (const auto& c : suite.cells) {
            const std::string kind = c.config.attack ? to_string(c.config.attack->kind) : "none";
            const std::string table = c.config.placement + "_" + c.config.magnitude;
            for (const auto& d : c.detectors) {
                const auto& m = d.metrics;
                csv << c.config.id << ',' << c.config.placement << ',' << c.config.magnitude << ',' << kind << ','
                    << d.detector << ',' << num(m.precision) << ',' << num(m.recall) << ',' << num(m.f1) << ','
                    << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.fn << ',' << m.counts.tn << ','
                    << int(m.precision_degenerate) << ','
                    << (d.localization ? num(d.localization->hit_at_k) : "") << ','
                    << (d.localization ? num(d.localization->mean_rank) : "") << '\n';
                tables[table][kind][d.detector] = &d;
            }
            summary[c.config.id] = metrics_json(c);
        }
        write_text(dir / "metrics.csv", csv.str());

        for (const auto& [name, rows] : tables) {
            std::vector<std::string> detectors;
            for (const auto& [kind, dets] : rows)
                for (const auto& [d, _] : dets)
                    if (std::find(detectors.begin(), detectors.end(), d) == detectors.end()) detectors.push_back(d);
            std::ostringstream t;
            t << "attack_kind";
            for (const auto& d : detectors) t << ',' << d;
            t << '\n';
            for (const auto& [kind, dets] : rows) {
                t << kind;
                for (const auto& d : detectors) {
                    const auto it = dets.find(d);
                    t << ',';
                    if (it != dets.end()) {
                        const auto& m = it->second->metrics;
                        t << "F1: " << num(m.f1, "%.2f") << " / prec: " << num(m.precision, "%.2f")
                          << " / recall: " << num(m.recall, "%.2f");
                    }
                }
                t << '\n';
            }
            write_text(dir / ("table_" + name + ".csv"), t.str());
        }

        // Mean P/R/F1 per detector across cells (bar-chart data).
        std::map<std::string, std::array<double, 4>> agg;
        for (const auto& c : suite.cells)
            for (const auto& d : c.detectors) {
                auto& a = agg[d.detector];
                a[0] += d.metrics.precision;
                a[1] += d.metrics.recall;
                a[2] += d.metrics.f1;
                a[3] += 1.0;
            }
        std::ostringstream bars;
        bars << "detector,precision,recall,f1,cells\n";
        std::vector<BarGroup> groups;
        for (const auto& [d, a] : agg) {
            bars << d << ',' << num(a[0] / a[3]) << ',' << num(a[1] / a[3]) << ',' << num(a[2] / a[3]) << ','
                 << static_cast<int>(a[3]) << '\n';
            groups.push_back({d, {a[0] / a[3], a[1] / a[3], a[2] / a[3]}});
        }
        write_text(dir / "bars.csv", bars.str());
        write_text(dir / "bars.svg", bar_chart_svg("mean over cells", {"precision", "recall", "F1"}, groups));

        json out = {{"schema", "fdia.report/1"}, {"cells", summary}, {"failures", suite.failures}};
        if (suite.holdout) out["holdout"] = metrics_json(*suite.holdout);
        write_text(dir / "summary.json", out.dump(2) + "\n");
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("report", e.what());
    }
}

}  // namespace fdia
