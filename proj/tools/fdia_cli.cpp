// fdia: simulate grid scenarios, inject false data, train and evaluate detectors.

#include "fdia/error.hpp"
#include "fdia/report.hpp"
#include "fdia/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace fdia;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::string out;
    std::string models;
};

void add_common(CLI::App* app, Common& c, bool models) {
    app->add_option("-c,--config", c.config, "scenario or suite JSON")->required()->check(CLI::ExistingFile);
    app->add_option("-s,--seed", c.seed, "override the master seed");
    app->add_option("-j,--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    app->add_option("-o,--out", c.out, "output directory");
    if (models) app->add_option("-m,--models", c.models, "directory of trained models (trained when absent)");
}

int exit_code(const std::string& stage) {
    static const std::map<std::string, int> codes = {{"config", 2},  {"simulate", 3}, {"attack", 4},
                                                     {"normalize", 5}, {"train", 6},  {"detect", 7},
                                                     {"evaluate", 8}, {"report", 9}};
    const auto it = codes.find(stage);
    return it == codes.end() ? 1 : it->second;
}

ScenarioConfig scenario(const Common& c) {
    ScenarioConfig cfg = load_scenario(c.config);
    if (c.seed) cfg.apply_seed(*c.seed);
    if (!c.out.empty()) cfg.output = c.out;
    return cfg;
}

TrainedModels models_for(const ScenarioConfig& cfg, const Common& c) {
    if (!c.models.empty() && fs::exists(fs::path(c.models) / "normalization.json")) {
        try {
            return load_models(c.models);
        } catch (const std::exception& e) {
            throw StageError("train", std::string("loading models: ") + e.what());
        }
    }
    TrainedModels m = train_models(cfg, c.workers);
    if (!c.models.empty()) {
        try {
            save_models(m, c.models);
        } catch (const std::exception& e) {
            throw StageError("report", e.what());
        }
    }
    return m;
}

void print_metrics(const ScenarioResult& r) {
    for (const auto& d : r.detectors) {
        std::printf("%-24s %-12s P=%.3f R=%.3f F1=%.3f", r.config.id.c_str(), d.detector.c_str(), d.metrics.precision,
                    d.metrics.recall, d.metrics.f1);
        if (d.localization) std::printf(" hit@%zu=%.2f rank=%.1f", d.localization->k, d.localization->hit_at_k, d.localization->mean_rank);
        if (!d.error.empty()) std::printf(" error: %s", d.error.c_str());
        std::printf("\n");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"False data injection simulation and detection toolkit"};
    app.require_subcommand(1);
    Common c;

    auto* sim = app.add_subcommand("simulate", "run the grid model without attack and write the trace");
    add_common(sim, c, false);
    auto* atk = app.add_subcommand("attack", "simulate with the configured attack; write true/measured traces and labels");
    add_common(atk, c, false);
    auto* train = app.add_subcommand("train", "train GAT/GDN on the configured normal scenarios");
    add_common(train, c, false);
    auto* detect = app.add_subcommand("detect", "run the configured detectors on one scenario");
    add_common(detect, c, true);
    auto* eval = app.add_subcommand("evaluate", "detect and write metrics, tables and charts for one scenario");
    add_common(eval, c, true);
    auto* suite = app.add_subcommand("suite", "evaluate every scenario of a suite file");
    add_common(suite, c, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed() || atk->parsed()) {
            ScenarioConfig cfg = scenario(c);
            if (sim->parsed()) cfg.attack.reset();
            cfg.detectors.clear();
            TrainedModels frame;
            {
                // Normalization frame only; no detector training.
                BusNetwork net;
                try {
                    net = load_network(cfg.network);
                } catch (const StageError&) {
                    throw;
                } catch (const std::exception& e) {
                    throw StageError("config", e.what());
                }
                try {
                    frame.stats = fit_normalization(normal_traces(cfg, net));
                } catch (const StageError&) {
                    throw;
                } catch (const std::exception& e) {
                    throw StageError("simulate", e.what());
                }
            }
            const ScenarioResult r = run_scenario(cfg, frame);
            const fs::path dir = cfg.output;
            fs::create_directories(dir);
            write_trace(r.true_trace, dir / "true_trace.csv");
            if (atk->parsed()) {
                write_trace(r.measured, dir / "measured_trace.csv");
                std::ofstream lo(dir / "labels.csv");
                lo << "t";
                for (int id : r.labels.bus_ids) lo << ",bus_" << id;
                lo << '\n';
                for (Eigen::Index k = 0; k < r.labels.cells.rows(); ++k) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.17g", r.measured.time(k));
                    lo << buf;
                    for (Eigen::Index j = 0; j < r.labels.cells.cols(); ++j) lo << ',' << int(r.labels.cells(k, j));
                    lo << '\n';
                }
            }
            std::printf("wrote %s\n", dir.string().c_str());
        } else if (train->parsed()) {
            const ScenarioConfig cfg = scenario(c);
            const fs::path dir = c.out.empty() ? fs::path("models") : fs::path(c.out);
            const TrainedModels m = train_models(cfg, c.workers);
            try {
                save_models(m, dir);
            } catch (const std::exception& e) {
                throw StageError("report", e.what());
            }
            if (m.gat) std::printf("gat: %d epochs, threshold %.4g, %.1f s\n", m.gat->summary.epochs, m.gat->threshold, m.gat_seconds);
            if (m.gdn) std::printf("gdn: %d epochs, threshold %.4g, %.1f s\n", m.gdn->summary.epochs, m.gdn->threshold, m.gdn_seconds);
            std::printf("wrote %s\n", dir.string().c_str());
        } else if (detect->parsed() || eval->parsed()) {
            const ScenarioConfig cfg = scenario(c);
            TrainedModels m = models_for(cfg, c);
            const ScenarioResult r = run_scenario(cfg, m);
            if (eval->parsed()) write_scenario_report(r, cfg.output);
            else write_scenario_outputs(r, cfg.output);
            print_metrics(r);
        } else if (suite->parsed()) {
            SuiteConfig s = load_suite(c.config);
            if (c.seed)
                for (auto& cell : s.cells) cell.apply_seed(*c.seed);
            if (c.seed && s.holdout) s.holdout->apply_seed(*c.seed);
            const int workers = app.get_subcommand("suite")->get_option("--workers")->count() ? c.workers : s.workers;
            TrainedModels m = models_for(s.cells.front(), c);
            const SuiteResult r = run_suite(s, m, workers);
            const fs::path dir = c.out.empty() ? s.output : fs::path(c.out);
            write_suite_report(r, dir);
            for (const auto& cell : r.cells) print_metrics(cell);
            if (r.holdout) print_metrics(*r.holdout);
            for (const auto& f : r.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
            std::printf("wrote %s\n", dir.string().c_str());
        }
    } catch (const StageError& e) {
        std::fprintf(stderr, "error %s\n", e.what());
        return exit_code(e.stage());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error [unknown] %s\n", e.what());
        return 1;
    }
    return 0;
}
