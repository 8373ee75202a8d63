#include "fdia/scenario.hpp"

#include "fdia/error.hpp"
#include "fdia/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

namespace fdia {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// Resolves "include" recursively; the including file's keys win.
json read_with_includes(const fs::path& path, int depth = 0) {
    if (depth > 8) throw ParseError(path.string() + ": include chain too deep");
    json j = read_json(path);
    if (!j.is_object()) throw ParseError(path.string() + ": top level must be an object");
    if (j.contains("include")) {
        const fs::path inc = path.parent_path() / j.at("include").get<std::string>();
        json base = read_with_includes(inc, depth + 1);
        // the network path stays relative to the file that named it
        if (base.contains("network") && base["network"].is_string() && !j.contains("network"))
            base["network"] = fs::absolute(inc.parent_path() / base["network"].get<std::string>()).lexically_normal().string();
        j.erase("include");
        base.merge_patch(j);
        return base;
    }
    return j;
}

template <typename T>
T get(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw ParseError(ctx + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(ctx + "." + key + ": " + e.what());
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& ctx) {
    return j.contains(key) ? get<T>(j, key, ctx) : fallback;
}

std::vector<GridEvent> parse_events(const json& j, const std::string& ctx) {
    std::vector<GridEvent> out;
    if (!j.is_array()) throw ParseError(ctx + ": must be an array");
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string c = ctx + "[" + std::to_string(i) + "]";
        const auto kind = get_or<std::string>(j[i], "kind", "load_change", c);
        if (kind != "load_change") throw ParseError(c + ".kind: unsupported event '" + kind + "'");
        out.push_back(GridEvent{GridEvent::Kind::LoadChange, get<int>(j[i], "bus", c), get<double>(j[i], "magnitude", c),
                                get<double>(j[i], "time", c)});
    }
    return out;
}

json events_json(const std::vector<GridEvent>& events) {
    json out = json::array();
    for (const auto& e : events)
        out.push_back({{"kind", "load_change"}, {"bus", e.bus}, {"magnitude", e.magnitude}, {"time", e.time}});
    return out;
}

ad::TrainConfig parse_train(const json& j, ad::TrainConfig d, const std::string& ctx) {
    d.learning_rate = get_or(j, "learning_rate", d.learning_rate, ctx);
    d.max_epochs = get_or(j, "max_epochs", d.max_epochs, ctx);
    d.batch_size = get_or(j, "batch_size", d.batch_size, ctx);
    d.validation_fraction = get_or(j, "validation_fraction", d.validation_fraction, ctx);
    d.patience = get_or(j, "patience", d.patience, ctx);
    return d;
}

json train_json(const ad::TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"max_epochs", t.max_epochs}, {"batch_size", t.batch_size},
            {"validation_fraction", t.validation_fraction}, {"patience", t.patience}, {"seed", t.seed}};
}

std::vector<bool> to_vector(const Eigen::Array<bool, Eigen::Dynamic, 1>& a) {
    std::vector<bool> v(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) v[static_cast<std::size_t>(i)] = a(i);
    return v;
}

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

void ScenarioConfig::apply_seed(std::uint64_t s) {
    seed = s;
    settings.autoencoder.seed = hash_counter(s, 0xae, 1);
    settings.gat.train.seed = hash_counter(s, 0x9a7, 1);
    settings.gdn.train.seed = hash_counter(s, 0x6d, 1);
    if (attack) attack->seed = hash_counter(s, 0xa77, 1);
}

void ScenarioConfig::validate() const {
    if (id.empty()) throw ValidationError("scenario: id must not be empty");
    fdia::validate(sim);
    if (detectors.empty()) throw ValidationError("scenario " + id + ": no detectors selected");
    for (const auto& d : detectors)
        if (d != "kmeans" && d != "autoencoder" && d != "gat" && d != "gdn")
            throw ValidationError("scenario " + id + ": unknown detector '" + d + "'");
    const bool needs_training = std::any_of(detectors.begin(), detectors.end(),
                                            [](const std::string& d) { return d == "gat" || d == "gdn"; });
    if (training.empty())
        throw ValidationError("scenario " + id + ": training scenarios are required for the normalization frame");
    if (needs_training && training.size() < 1) throw ValidationError("scenario " + id + ": no training scenarios");
    if (evaluation_unit != "window" && evaluation_unit != "sample")
        throw ValidationError("scenario " + id + ": evaluation.unit must be 'window' or 'sample'");
    if (!(window_seconds > 0.0)) throw ValidationError("scenario " + id + ": evaluation.window_seconds must be positive");
    if (!(settings.kmeans_threshold >= -1.0)) throw ValidationError("scenario " + id + ": kmeans.threshold invalid");
    settings.autoencoder.validate();
    settings.gat.train.validate();
    settings.gdn.train.validate();
}

ScenarioConfig scenario_from_json(const json& j, const fs::path& base_dir) {
    const std::string ctx = "scenario";
    const auto schema = get<std::string>(j, "schema", ctx);
    if (schema != kScenarioSchema)
        throw ParseError("scenario: schema '" + schema + "' is not " + kScenarioSchema);
    ScenarioConfig c;
    c.source = j;
    c.id = get<std::string>(j, "id", ctx);
    c.placement = get_or<std::string>(j, "placement", "none", ctx);
    c.magnitude = get_or<std::string>(j, "magnitude", "none", ctx);
    c.network = base_dir / get<std::string>(j, "network", ctx);
    c.reference_bus = get<int>(j, "reference_bus", ctx);

    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        c.sim.sample_rate = get_or(s, "sample_rate", c.sim.sample_rate, "sim");
        c.sim.duration = get_or(s, "duration", c.sim.duration, "sim");
        c.sim.step = get_or(s, "step", c.sim.step, "sim");
        c.sim.noise_std = get_or(s, "noise_std", c.sim.noise_std, "sim");
        c.sim.agc_time_constant = get_or(s, "agc_time_constant", c.sim.agc_time_constant, "sim");
        c.sim.measurement_feedback = get_or(s, "measurement_feedback", c.sim.measurement_feedback, "sim");
        c.sim.nominal_frequency = get_or(s, "nominal_frequency", c.sim.nominal_frequency, "sim");
    }
    c.sim.noise_seed = get_or<std::uint64_t>(j, "noise_seed", 0, ctx);
    c.events = parse_events(j.value("events", json::array()), "events");

    if (j.contains("attack") && !j.at("attack").is_null()) {
        const auto& a = j.at("attack");
        AttackSpec s;
        s.kind = attack_kind_from_string(get<std::string>(a, "kind", "attack"));
        s.targets = get<std::vector<int>>(a, "targets", "attack");
        s.t1 = get_or(a, "t1", s.t1, "attack");
        s.t2 = get_or(a, "t2", s.t2, "attack");
        s.c = get_or(a, "c", s.c, "attack");
        s.mu = get_or(a, "mu", s.mu, "attack");
        s.sigma = get_or(a, "sigma", s.sigma, "attack");
        s.m = get_or(a, "m", s.m, "attack");
        s.beta = get_or(a, "beta", s.beta, "attack");
        s.rtw_literal = get_or(a, "rtw_literal", s.rtw_literal, "attack");
        if (a.contains("nominal"))
            for (const auto& [k, v] : a.at("nominal").items()) s.nominal[std::stoi(k)] = v.get<double>();
        c.attack = s;
    }

    c.detectors = get<std::vector<std::string>>(j, "detectors", ctx);
    auto& st = c.settings;
    if (j.contains("kmeans")) st.kmeans_threshold = get_or(j.at("kmeans"), "threshold", st.kmeans_threshold, "kmeans");
    if (j.contains("autoencoder")) {
        const auto& a = j.at("autoencoder");
        st.autoencoder_hidden = get_or(a, "hidden", st.autoencoder_hidden, "autoencoder");
        st.autoencoder = parse_train(a, st.autoencoder, "autoencoder");
    }
    if (j.contains("gat")) {
        const auto& g = j.at("gat");
        st.gat.hidden = get_or(g, "hidden", st.gat.hidden, "gat");
        st.gat.forecast_hidden = get_or(g, "forecast_hidden", st.gat.forecast_hidden, "gat");
        st.gat.gamma = get_or(g, "gamma", st.gat.gamma, "gat");
        st.gat.train_stride = get_or(g, "train_stride", st.gat.train_stride, "gat");
        st.gat.threshold_factor = get_or(g, "threshold_factor", st.gat.threshold_factor, "gat");
        st.gat.train = parse_train(g, st.gat.train, "gat");
    }
    if (j.contains("gdn")) {
        const auto& g = j.at("gdn");
        st.gdn.embedding_dim = get_or(g, "embedding_dim", st.gdn.embedding_dim, "gdn");
        st.gdn.top_k = get_or(g, "top_k", st.gdn.top_k, "gdn");
        st.gdn.hidden = get_or(g, "hidden", st.gdn.hidden, "gdn");
        st.gdn.train_stride = get_or(g, "train_stride", st.gdn.train_stride, "gdn");
        st.gdn.threshold_factor = get_or(g, "threshold_factor", st.gdn.threshold_factor, "gdn");
        st.gdn.train = parse_train(g, st.gdn.train, "gdn");
    }
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        c.evaluation_unit = get_or(e, "unit", c.evaluation_unit, "evaluation");
        c.window_seconds = get_or(e, "window_seconds", c.window_seconds, "evaluation");
    }
    st.gat.window_seconds = c.window_seconds;
    st.gdn.window_seconds = c.window_seconds;

    const auto& tr = j.value("training", json::array());
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const std::string tc = "training[" + std::to_string(i) + "]";
        c.training.push_back(NormalScenario{get<std::string>(tr[i], "id", tc), parse_events(tr[i].at("events"), tc + ".events"),
                                            get_or<std::uint64_t>(tr[i], "noise_seed", 0, tc)});
    }
    c.output = get_or<std::string>(j, "output", "out/" + c.id, ctx);
    c.apply_seed(get<std::uint64_t>(j, "seed", ctx));
    c.validate();
    return c;
}

ScenarioConfig load_scenario(const fs::path& path) {
    return staged("config", [&] { return scenario_from_json(read_with_includes(path), path.parent_path()); });
}

json to_json(const ScenarioConfig& c) {
    json j;
    j["schema"] = kScenarioSchema;
    j["id"] = c.id;
    j["placement"] = c.placement;
    j["magnitude"] = c.magnitude;
    j["network"] = c.network.filename().string();
    j["reference_bus"] = c.reference_bus;
    j["sim"] = {{"sample_rate", c.sim.sample_rate}, {"duration", c.sim.duration}, {"step", c.sim.step},
                {"noise_std", c.sim.noise_std}, {"agc_time_constant", c.sim.agc_time_constant},
                {"measurement_feedback", c.sim.measurement_feedback},
                {"nominal_frequency", c.sim.nominal_frequency}};
    j["noise_seed"] = c.sim.noise_seed;
    j["events"] = events_json(c.events);
    if (c.attack) {
        const auto& a = *c.attack;
        json nominal = json::object();
        for (const auto& [bus, v] : a.nominal) nominal[std::to_string(bus)] = v;
        j["attack"] = {{"kind", to_string(a.kind)}, {"targets", a.targets}, {"t1", a.t1}, {"t2", a.t2},
                       {"c", a.c}, {"mu", a.mu}, {"sigma", a.sigma}, {"m", a.m}, {"beta", a.beta},
                       {"rtw_literal", a.rtw_literal}, {"nominal", nominal}, {"seed", a.seed}};
    } else {
        j["attack"] = nullptr;
    }
    j["detectors"] = c.detectors;
    const auto& s = c.settings;
    j["kmeans"] = {{"threshold", s.kmeans_threshold}};
    json ae = train_json(s.autoencoder);
    ae["hidden"] = s.autoencoder_hidden;
    j["autoencoder"] = ae;
    json gat = train_json(s.gat.train);
    gat.update({{"hidden", s.gat.hidden}, {"forecast_hidden", s.gat.forecast_hidden}, {"gamma", s.gat.gamma},
                {"train_stride", s.gat.train_stride}, {"threshold_factor", s.gat.threshold_factor}});
    j["gat"] = gat;
    json gdn = train_json(s.gdn.train);
    gdn.update({{"embedding_dim", s.gdn.embedding_dim}, {"top_k", s.gdn.top_k}, {"hidden", s.gdn.hidden},
                {"train_stride", s.gdn.train_stride}, {"threshold_factor", s.gdn.threshold_factor}});
    j["gdn"] = gdn;
    j["evaluation"] = {{"unit", c.evaluation_unit}, {"window_seconds", c.window_seconds}};
    json tr = json::array();
    for (const auto& t : c.training)
        tr.push_back({{"id", t.id}, {"events", events_json(t.events)}, {"noise_seed", t.noise_seed}});
    j["training"] = tr;
    j["seed"] = c.seed;
    j["rng"] = std::string(kRngName);
    return j;
}

SuiteConfig load_suite(const fs::path& path) {
    return staged("config", [&] {
        const json j = read_with_includes(path);
        const auto schema = get<std::string>(j, "schema", "suite");
        if (schema != kSuiteSchema) throw ParseError("suite: schema '" + schema + "' is not " + kSuiteSchema);
        SuiteConfig s;
        s.id = get<std::string>(j, "id", "suite");
        s.workers = get_or(j, "workers", 1, "suite");
        s.output = get_or<std::string>(j, "output", "out/" + s.id, "suite");
        const auto cells = get_or(j, "scenarios", std::vector<std::string>{}, "suite");
        if (cells.empty()) throw ValidationError("suite " + s.id + ": no scenarios");
        for (const auto& c : cells) s.cells.push_back(load_scenario(path.parent_path() / c));
        if (j.contains("holdout")) s.holdout = load_scenario(path.parent_path() / j.at("holdout").get<std::string>());
        return s;
    });
}

std::vector<MeasurementTrace> normal_traces(const ScenarioConfig& cfg, const BusNetwork& net) {
    std::vector<MeasurementTrace> out;
    for (const auto& n : cfg.training) {
        SimConfig sim = cfg.sim;
        sim.noise_seed = n.noise_seed;
        auto r = simulate(net, n.events, sim);
        if (r.diverged) throw NumericalError("training scenario " + n.id + " diverged: " + r.diagnostic);
        r.trace.scenario_id = n.id;
        out.push_back(to_angle_differences(r.trace, cfg.reference_bus));
    }
    return out;
}

TrainedModels train_models(const ScenarioConfig& cfg, int workers) {
    const BusNetwork net = staged("config", [&] { return load_network(cfg.network); });
    auto traces = staged("simulate", [&] { return normal_traces(cfg, net); });
    TrainedModels models;
    staged("normalize", [&] {
        models.stats = fit_normalization(traces);
        for (auto& t : traces) t = normalize(t, models.stats).trace;
    });
    const bool want_gat = std::find(cfg.detectors.begin(), cfg.detectors.end(), "gat") != cfg.detectors.end();
    const bool want_gdn = std::find(cfg.detectors.begin(), cfg.detectors.end(), "gdn") != cfg.detectors.end();
    auto timed = [](auto&& f, double& seconds) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    staged("train", [&] {
        auto gat_job = [&] { timed([&] { models.gat = train_gat(traces, cfg.settings.gat); }, models.gat_seconds); };
        auto gdn_job = [&] { timed([&] { models.gdn = train_gdn(traces, cfg.settings.gdn); }, models.gdn_seconds); };
        if (want_gat && want_gdn && workers > 1) {
            std::exception_ptr err;
            std::thread t([&] {
                try {
                    gdn_job();
                } catch (...) {
                    err = std::current_exception();
                }
            });
            try {
                gat_job();
            } catch (...) {
                t.join();
                throw;
            }
            t.join();
            if (err) std::rethrow_exception(err);
        } else {
            if (want_gat) gat_job();
            if (want_gdn) gdn_job();
        }
    });
    return models;
}

void save_models(const TrainedModels& m, const fs::path& dir) {
    fs::create_directories(dir);
    write_stats(m.stats, dir / "normalization.json");
    auto dump = [&](const json& j, const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        out << j.dump(1) << '\n';
    };
    if (m.gat) {
        GatModel copy = *m.gat;
        copy.normalization = "normalization.json";
        dump(to_json(copy), "gat.json");
    }
    if (m.gdn) {
        GdnModel copy = *m.gdn;
        copy.normalization = "normalization.json";
        dump(to_json(copy), "gdn.json");
        write_adjacency_csv(dir / "gdn_graph.csv", copy.sensor_ids, copy.graph());
    }
}

TrainedModels load_models(const fs::path& dir) {
    TrainedModels m;
    m.stats = read_stats(dir / "normalization.json");
    if (fs::exists(dir / "gat.json")) m.gat = gat_from_json(read_json(dir / "gat.json"));
    if (fs::exists(dir / "gdn.json")) m.gdn = gdn_from_json(read_json(dir / "gdn.json"));
    return m;
}

namespace {

// Window verdicts spread over the samples they cover.
std::vector<bool> per_sample(const std::vector<bool>& windows, Eigen::Index width, Eigen::Index total) {
    std::vector<bool> out(static_cast<std::size_t>(total), false);
    for (std::size_t w = 0; w < windows.size(); ++w)
        for (Eigen::Index k = static_cast<Eigen::Index>(w) * width; k < (static_cast<Eigen::Index>(w) + 1) * width && k < total; ++k)
            out[static_cast<std::size_t>(k)] = windows[w];
    return out;
}

void score_based(DetectorResult& r, AnomalyScoreSeries s, const ScenarioResult& res, Eigen::Index width) {
    const Eigen::Index total = res.normalized.samples();
    if (res.config.evaluation_unit == "window") {
        r.predicted = majority_windows(s, total, width);
    } else {
        r.predicted.assign(static_cast<std::size_t>(total), false);
        for (Eigen::Index i = 0; i < s.fired.size(); ++i)
            r.predicted[static_cast<std::size_t>(s.first_sample + i)] = s.fired(i);
    }
    r.threshold = s.threshold;
    if (res.config.attack) {
        const auto& a = *res.config.attack;
        const auto& t = res.normalized.time;
        Eigen::Index first = -1, last = -1;
        for (Eigen::Index k = 0; k < t.size(); ++k)
            if (in_window(a, t(k))) {
                if (first < 0) first = k;
                last = k + 1;
            }
        if (first >= 0) {
            first = std::max(first, s.first_sample);
            if (last > first) {
                r.ranking = localize_samples(s, first, last);
                r.localization = localization_metrics(r.ranking->ranked, a.targets, a.targets.size());
            }
        }
    }
    r.scores = std::move(s);
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg, TrainedModels& models) {
    ScenarioResult res;
    res.config = cfg;
    const BusNetwork net = staged("config", [&] { return load_network(cfg.network); });
    const std::vector<int> ids = net.bus_ids();
    if (std::find(ids.begin(), ids.end(), cfg.reference_bus) == ids.end())
        throw StageError("config", "reference bus " + std::to_string(cfg.reference_bus) + " not in network");

    std::optional<AttackSpec> attack = cfg.attack;
    staged("attack", [&] {
        if (!attack) return;
        if (std::find(attack->targets.begin(), attack->targets.end(), cfg.reference_bus) != attack->targets.end())
            throw ValidationError("attack targets include the reference bus " + std::to_string(cfg.reference_bus));
        resolve_nominal(*attack, net, steady_state(net));
        validate(*attack, cfg.sim.duration, net.bus_ids());
        res.config.attack = attack;
    });

    staged("simulate", [&] {
        const MeasurementTap tap = attack ? make_attack_tap(*attack, net.bus_ids()) : MeasurementTap{};
        auto r = simulate(net, cfg.events, cfg.sim, tap);
        if (r.diverged) throw NumericalError("scenario " + cfg.id + " diverged: " + r.diagnostic);
        r.trace.scenario_id = cfg.id;
        res.true_trace = std::move(r.trace);
    });
    staged("attack", [&] {
        res.measured = attack ? apply_attack(res.true_trace, *attack) : res.true_trace;
        res.labels = attack ? attack_label_mask(*attack, res.measured.time, res.measured.bus_ids)
                            : empty_label_mask(res.measured.samples(), res.measured.bus_ids);
    });
    staged("normalize", [&] {
        res.normalized = normalize(to_angle_differences(res.measured, cfg.reference_bus), models.stats).trace;
    });

    const Eigen::Index width = window_samples(cfg.window_seconds, cfg.sim.sample_rate);
    const Eigen::Index total = res.normalized.samples();
    const auto wins = staged("evaluate", [&] {
        return windows(res.normalized, cfg.window_seconds, cfg.window_seconds, res.labels);
    });
    if (cfg.evaluation_unit == "window") {
        for (const auto& w : wins) res.truth.push_back(w.attacked);
    } else {
        res.truth = to_vector(res.labels.any);
    }

    staged("detect", [&] {
        for (const auto& name : cfg.detectors) {
            DetectorResult r;
            r.detector = name;
            try {
                if (name == "kmeans") {
                    std::vector<bool> fired;
                    for (std::size_t i = 0; i < wins.size(); ++i) {
                        auto v = kmeans_window_detector(wins[i], cfg.settings.kmeans_threshold,
                                                        hash_counter(cfg.seed, 0x63, i));
                        v.window = static_cast<Eigen::Index>(i);
                        fired.push_back(v.fired);
                        r.verdicts.push_back(std::move(v));
                    }
                    r.predicted = cfg.evaluation_unit == "window" ? fired : per_sample(fired, width, total);
                    r.threshold = cfg.settings.kmeans_threshold;
                } else if (name == "autoencoder") {
                    // Progressive: the model for window k has seen windows [0, k).
                    auto model = make_autoencoder(
                        [&] {
                            std::vector<Eigen::Index> w{static_cast<Eigen::Index>(res.normalized.buses())};
                            w.insert(w.end(), cfg.settings.autoencoder_hidden.begin(), cfg.settings.autoencoder_hidden.end());
                            w.push_back(res.normalized.buses());
                            return w;
                        }(),
                        res.normalized.bus_ids, cfg.settings.autoencoder.seed);
                    std::vector<bool> fired(wins.size(), false);
                    for (std::size_t i = 0; i < wins.size(); ++i) {
                        if (i == 0) {
                            DetectionVerdict v;
                            v.degenerate = true;
                            r.verdicts.push_back(v);
                            continue;
                        }
                        ad::TrainConfig tc = cfg.settings.autoencoder;
                        tc.seed = hash_counter(tc.seed, 0x77, i);
                        train_autoencoder(model, res.normalized.angles.topRows(wins[i].first_sample), tc);
                        auto v = autoencoder_window_detector(model, wins[i], cfg.settings.kmeans_threshold,
                                                             hash_counter(cfg.seed, 0x64, i));
                        v.window = static_cast<Eigen::Index>(i);
                        fired[i] = v.fired;
                        r.verdicts.push_back(std::move(v));
                    }
                    r.predicted = cfg.evaluation_unit == "window" ? fired : per_sample(fired, width, total);
                    r.threshold = cfg.settings.kmeans_threshold;
                } else if (name == "gat") {
                    if (!models.gat) throw ValidationError("no trained GAT model");
                    r.threshold_degenerate = models.gat->threshold_degenerate;
                    score_based(r, gat_score(*models.gat, res.normalized), res, width);
                } else if (name == "gdn") {
                    if (!models.gdn) throw ValidationError("no trained GDN model");
                    r.threshold_degenerate = models.gdn->threshold_degenerate;
                    score_based(r, gdn_score(*models.gdn, res.normalized), res, width);
                }
                r.metrics = point_metrics(r.predicted, res.truth);
            } catch (const std::exception& e) {
                r.error = e.what();
                r.predicted.assign(res.truth.size(), false);
                r.metrics = point_metrics(r.predicted, res.truth);
            }
            res.detectors.push_back(std::move(r));
        }
    });
    return res;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

json metrics_json(const ScenarioResult& res) {
    json dets = json::object();
    for (const auto& d : res.detectors) {
        const auto& m = d.metrics;
        json j = {{"precision", m.precision},
                  {"recall", m.recall},
                  {"f1", m.f1},
                  {"tp", m.counts.tp},
                  {"fp", m.counts.fp},
                  {"fn", m.counts.fn},
                  {"tn", m.counts.tn},
                  {"precision_degenerate", m.precision_degenerate},
                  {"recall_degenerate", m.recall_degenerate},
                  {"false_positive_rate", m.false_positive_rate},
                  {"fired_units", std::count(d.predicted.begin(), d.predicted.end(), true)},
                  {"threshold", d.threshold},
                  {"threshold_degenerate", d.threshold_degenerate}};
        if (d.localization)
            j["localization"] = {{"k", d.localization->k},
                                 {"hit_at_k", d.localization->hit_at_k},
                                 {"mean_rank", d.localization->mean_rank},
                                 {"top", std::vector<int>(d.ranking->ranked.begin(),
                                                          d.ranking->ranked.begin() +
                                                              std::min<std::ptrdiff_t>(5, static_cast<std::ptrdiff_t>(d.ranking->ranked.size())))}};
        if (!d.error.empty()) j["error"] = d.error;
        dets[d.detector] = j;
    }
    return {{"scenario", res.config.id},
            {"attack_kind", res.config.attack ? to_string(res.config.attack->kind) : "none"},
            {"placement", res.config.placement},
            {"magnitude", res.config.magnitude},
            {"targets", res.config.attack ? json(res.config.attack->targets) : json::array()},
            {"evaluation_unit", res.config.evaluation_unit},
            {"units", res.truth.size()},
            {"positive_units", std::count(res.truth.begin(), res.truth.end(), true)},
            {"seed", res.config.seed},
            {"detectors", dets}};
}

void write_scenario_outputs(const ScenarioResult& res, const fs::path& dir) {
    staged("report", [&] {
        fs::create_directories(dir);
        {
            std::ofstream out(dir / "config.json");
            if (!out) throw IoError("cannot write " + (dir / "config.json").string());
            out << to_json(res.config).dump(2) << '\n';
        }
        write_trace(res.true_trace, dir / "true_trace.csv");
        write_trace(res.measured, dir / "measured_trace.csv");
        write_trace(res.normalized, dir / "normalized_trace.csv");
        {
            std::ofstream out(dir / "labels.csv");
            out << "unit,attacked\n";
            for (std::size_t i = 0; i < res.truth.size(); ++i) out << i << ',' << int(res.truth[i]) << '\n';
        }
        for (const auto& d : res.detectors) {
            std::ofstream out(dir / ("predicted_" + d.detector + ".csv"));
            out << "unit,fired,attacked\n";
            for (std::size_t i = 0; i < d.predicted.size(); ++i)
                out << i << ',' << int(d.predicted[i]) << ',' << int(res.truth[i]) << '\n';
            if (d.scores) write_scores_csv(dir / ("scores_" + d.detector + ".csv"), *d.scores);
            if (!d.verdicts.empty()) {
                json v = json::array();
                for (const auto& x : d.verdicts)
                    v.push_back({{"window", x.window}, {"fired", x.fired}, {"flagged", x.flagged},
                                 {"silhouette", x.silhouette}, {"minority_size", x.minority_size},
                                 {"tie", x.tie}, {"degenerate", x.degenerate}});
                std::ofstream vo(dir / ("verdicts_" + d.detector + ".json"));
                vo << v.dump(1) << '\n';
            }
            if (d.ranking) {
                std::ofstream lo(dir / ("ranking_" + d.detector + ".csv"));
                lo << "rank,bus,mean_score\n";
                for (std::size_t i = 0; i < d.ranking->ranked.size(); ++i)
                    lo << i + 1 << ',' << d.ranking->ranked[i] << ',' << fmt(d.ranking->mean[i]) << '\n';
            }
        }
        std::ofstream out(dir / "metrics.json");
        out << metrics_json(res).dump(2) << '\n';
    });
}

SuiteResult run_suite(const SuiteConfig& suite, TrainedModels& models, int workers) {
    if (suite.cells.empty()) throw StageError("config", "no scenarios");
    SuiteResult out;
    out.cells.resize(suite.cells.size());
    std::vector<std::string> errors(suite.cells.size());
    std::vector<char> ok(suite.cells.size(), 0);
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard lock(mu);
                if (next >= suite.cells.size()) return;
                i = next++;
            }
            try {
                out.cells[i] = run_scenario(suite.cells[i], models);
                ok[i] = 1;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(suite.cells.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<ScenarioResult> done;
    for (std::size_t i = 0; i < suite.cells.size(); ++i) {
        if (ok[i]) done.push_back(std::move(out.cells[i]));
        else out.failures.push_back(suite.cells[i].id + ": " + errors[i]);
    }
    out.cells = std::move(done);
    if (suite.holdout) {
        try {
            out.holdout = run_scenario(*suite.holdout, models);
        } catch (const std::exception& e) {
            out.failures.push_back(suite.holdout->id + ": " + e.what());
        }
    }
    return out;
}

}  // namespace fdia
