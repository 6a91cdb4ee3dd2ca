#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include <marketron/calibrate.hpp>
#include <marketron/instanton.hpp>
#include <marketron/params.hpp>
#include <marketron/market_data.hpp>
#include <marketron/simulate.hpp>

namespace marketron::cli {

using nlohmann::json;

struct PotentialBlock {
    PotentialVariant variant = PotentialVariant::Exact;
    bool variant_set = false;
    double x_min = -8.0;
    double x_max = 8.0;
    std::size_t n_grid = 401;
    std::vector<double> times = {0.1, 1.0};
    ThetaStarMode mode = ThetaStarMode::Theta0;
    double y0 = 0.0;
    double y_min = -2.0;
    double y_max = 3.0;
    std::size_t n_grid_y = 101;
};

struct SimBlock {
    SimConfig sim;
    bool x0_set = false;
    std::size_t export_paths = 100;
};

struct InstantonBlock {
    double dt = 1e-2;
    double t_max = 1e5;
    std::optional<double> sigma;
};

struct DataBlock {
    std::string path;
    Frequency frequency = Frequency::Daily;
    double s_ref = kDefaultSRef;
    std::string start = "2000-01";
};

struct ReportBlock {
    std::size_t max_lag = 24;
    std::size_t rv_window = 12;
    std::size_t rolling_window = 36;
    std::size_t rolling_ahead = 3;
    std::size_t sim_paths = 1000;
    std::size_t hist_bins = 40;
};

struct RunConfig {
    std::string preset = "table1";
    std::uint64_t seed = 0;
    Preset model;
    PotentialBlock potential;
    SimBlock sim;
    FilterConfig filter;
    CalibConfig calib;
    InstantonBlock instanton;
    DataBlock data;
    ReportBlock report;
    unsigned workers = 1;
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& block) {
    if (!j.is_object()) throw Error("config", "'" + block + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw Error("config", "unknown key '" + block + "." + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& block) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error("config", "bad value for '" + block + "." + key + "'");
    }
}

} // namespace detail

inline void apply_model(const json& j, ModelParams& m) {
    detail::reject_unknown(j, {"sigma", "sigma_y", "sigma_z", "eta", "k", "mu", "g", "theta_hat", "y_bar", "c",
                               "epsilon", "v"}, "model");
    const std::string b = "model";
    detail::read(j, "sigma", m.sigma, b);
    detail::read(j, "sigma_y", m.sigma_y, b);
    detail::read(j, "sigma_z", m.sigma_z, b);
    detail::read(j, "eta", m.eta, b);
    detail::read(j, "k", m.k, b);
    detail::read(j, "mu", m.mu, b);
    detail::read(j, "g", m.g, b);
    detail::read(j, "theta_hat", m.theta_hat, b);
    detail::read(j, "y_bar", m.y_bar, b);
    detail::read(j, "c", m.c, b);
    detail::read(j, "epsilon", m.epsilon, b);
    detail::read(j, "v", m.v, b);
}

inline void apply_signal(const json& j, SignalParams& s) {
    detail::reject_unknown(j, {"b1", "b2", "k1x", "k2x", "k3x", "k1y", "k2y", "k3y"}, "signal");
    const std::string b = "signal";
    detail::read(j, "b1", s.b1, b);
    detail::read(j, "b2", s.b2, b);
    detail::read(j, "k1x", s.k1x, b);
    detail::read(j, "k2x", s.k2x, b);
    detail::read(j, "k3x", s.k3x, b);
    detail::read(j, "k1y", s.k1y, b);
    detail::read(j, "k2y", s.k2y, b);
    detail::read(j, "k3y", s.k3y, b);
}

inline RunConfig resolve(const json& doc, const std::optional<std::string>& preset_flag,
                         const std::optional<std::uint64_t>& seed_flag) {
    detail::reject_unknown(doc, {"preset", "seed", "workers", "model", "signal", "potential", "sim", "filter", "calib",
                                 "instanton", "data", "report"}, "config");
    RunConfig rc;
    detail::read(doc, "preset", rc.preset, "config");
    if (preset_flag) rc.preset = *preset_flag;
    detail::read(doc, "seed", rc.seed, "config");
    if (seed_flag) rc.seed = *seed_flag;
    detail::read(doc, "workers", rc.workers, "config");
    rc.model = presets::by_name(rc.preset);
    if (doc.contains("model")) apply_model(doc["model"], rc.model.model);
    if (doc.contains("signal")) apply_signal(doc["signal"], rc.model.signal);

    if (doc.contains("potential")) {
        const auto& j = doc["potential"];
        const std::string b = "potential";
        detail::reject_unknown(j, {"variant", "x_min", "x_max", "n_grid", "times", "mode", "y0", "y_min", "y_max",
                                   "n_grid_y"}, b);
        if (j.contains("variant")) {
            std::string v;
            detail::read(j, "variant", v, b);
            rc.potential.variant = parse_variant(v);
            rc.potential.variant_set = true;
        }
        detail::read(j, "x_min", rc.potential.x_min, b);
        detail::read(j, "x_max", rc.potential.x_max, b);
        detail::read(j, "n_grid", rc.potential.n_grid, b);
        detail::read(j, "times", rc.potential.times, b);
        if (j.contains("mode")) rc.potential.mode = parse_mode(j["mode"].get<std::string>());
        detail::read(j, "y0", rc.potential.y0, b);
        detail::read(j, "y_min", rc.potential.y_min, b);
        detail::read(j, "y_max", rc.potential.y_max, b);
        detail::read(j, "n_grid_y", rc.potential.n_grid_y, b);
    }
    if (rc.potential.variant_set) rc.model.variant = rc.potential.variant;
    rc.potential.variant = rc.model.variant;

    auto& sim = rc.sim.sim;
    sim.horizon = 24.8;
    sim.n_paths = 10000;
    if (doc.contains("sim")) {
        const auto& j = doc["sim"];
        const std::string b = "sim";
        detail::reject_unknown(j, {"dt", "horizon", "n_paths", "x0", "y0", "theta0", "default_barrier", "export_paths"}, b);
        detail::read(j, "dt", sim.dt, b);
        detail::read(j, "horizon", sim.horizon, b);
        if (j.contains("n_paths")) {
            const auto& v = j["n_paths"];
            if (!v.is_number_integer() || v.get<long long>() < 0) throw Error("config", "sim.n_paths must be a non-negative integer");
            sim.n_paths = v.get<std::size_t>();
        }
        if (j.contains("x0")) {
            detail::read(j, "x0", sim.x0, b);
            rc.sim.x0_set = true;
        }
        detail::read(j, "y0", sim.y0, b);
        detail::read(j, "theta0", sim.theta0, b);
        detail::read(j, "default_barrier", sim.default_barrier, b);
        detail::read(j, "export_paths", rc.sim.export_paths, b);
    }
    sim.seed = rc.seed;
    sim.variant = rc.model.variant;
    sim.workers = rc.workers;

    auto& f = rc.filter;
    if (doc.contains("filter")) {
        const auto& j = doc["filter"];
        const std::string b = "filter";
        detail::reject_unknown(j, {"n_particles", "meas_variance", "dt", "resample_threshold", "y0", "theta0"}, b);
        detail::read(j, "n_particles", f.n_particles, b);
        detail::read(j, "meas_variance", f.meas_variance, b);
        detail::read(j, "dt", f.dt, b);
        detail::read(j, "resample_threshold", f.resample_threshold, b);
        detail::read(j, "y0", f.y0, b);
        detail::read(j, "theta0", f.theta0, b);
    }
    f.seed = rc.seed;
    f.variant = rc.model.variant;
    f.workers = rc.workers;

    auto& c = rc.calib;
    if (doc.contains("calib")) {
        const auto& j = doc["calib"];
        const std::string b = "calib";
        detail::reject_unknown(j, {"horizons", "mode", "shape_requirement", "shape_times", "shape_y0", "ce_iters",
                                   "de_iters", "ce_population", "de_population", "penalty_weight", "free", "bounds"}, b);
        detail::read(j, "horizons", c.horizons, b);
        if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
        if (j.contains("shape_requirement")) {
            const auto s = j["shape_requirement"].get<std::string>();
            if (s == "strict") c.shape_requirement = ShapeRequirement::Strict;
            else if (s == "relaxed") c.shape_requirement = ShapeRequirement::Relaxed;
            else throw Error("config", "calib.shape_requirement must be 'strict' or 'relaxed'");
        }
        detail::read(j, "shape_times", c.shape_times, b);
        detail::read(j, "shape_y0", c.shape_y0, b);
        detail::read(j, "ce_iters", c.ce_iters, b);
        detail::read(j, "de_iters", c.de_iters, b);
        detail::read(j, "ce_population", c.ce_population, b);
        detail::read(j, "de_population", c.de_population, b);
        detail::read(j, "penalty_weight", c.penalty_weight, b);
        detail::read(j, "free", c.free, b);
        if (j.contains("bounds")) {
            const auto& bj = j["bounds"];
            std::set<std::string> names(kFreeNames.begin(), kFreeNames.end());
            detail::reject_unknown(bj, names, "calib.bounds");
            for (std::size_t i = 0; i < kNumFree; ++i) {
                const std::string n(kFreeNames[i]);
                if (!bj.contains(n)) continue;
                const auto& v = bj[n];
                if (!v.is_array() || v.size() != 2) throw Error("config", "calib.bounds." + n + " must be [lo, hi]");
                c.bounds[i] = {v[0].get<double>(), v[1].get<double>()};
            }
        }
    }
    c.seed = rc.seed;
    c.filter = rc.filter;
    c.workers = rc.workers;

    if (doc.contains("instanton")) {
        const auto& j = doc["instanton"];
        const std::string b = "instanton";
        detail::reject_unknown(j, {"dt", "t_max", "sigma"}, b);
        detail::read(j, "dt", rc.instanton.dt, b);
        detail::read(j, "t_max", rc.instanton.t_max, b);
        if (j.contains("sigma")) rc.instanton.sigma = j["sigma"].get<double>();
    }
    if (doc.contains("data")) {
        const auto& j = doc["data"];
        const std::string b = "data";
        detail::reject_unknown(j, {"path", "frequency", "s_ref", "start"}, b);
        detail::read(j, "path", rc.data.path, b);
        if (j.contains("frequency")) rc.data.frequency = parse_frequency(j["frequency"].get<std::string>());
        detail::read(j, "s_ref", rc.data.s_ref, b);
        detail::read(j, "start", rc.data.start, b);
    }
    if (doc.contains("report")) {
        const auto& j = doc["report"];
        const std::string b = "report";
        detail::reject_unknown(j, {"max_lag", "rv_window", "rolling_window", "rolling_ahead", "sim_paths",
                                   "hist_bins"}, b);
        detail::read(j, "max_lag", rc.report.max_lag, b);
        detail::read(j, "rv_window", rc.report.rv_window, b);
        detail::read(j, "rolling_window", rc.report.rolling_window, b);
        detail::read(j, "rolling_ahead", rc.report.rolling_ahead, b);
        detail::read(j, "sim_paths", rc.report.sim_paths, b);
        detail::read(j, "hist_bins", rc.report.hist_bins, b);
    }
    rc.model.model.validate();
    return rc;
}

inline json model_json(const Preset& p) {
    const auto& m = p.model;
    const auto& s = p.signal;
    return {{"preset", p.name},
            {"variant", std::string(to_string(p.variant))},
            {"model", {{"sigma", m.sigma}, {"sigma_y", m.sigma_y}, {"sigma_z", m.sigma_z}, {"eta", m.eta},
                       {"k", m.k}, {"mu", m.mu}, {"g", m.g}, {"theta_hat", m.theta_hat}, {"y_bar", m.y_bar},
                       {"c", m.c}, {"epsilon", m.epsilon}, {"v", m.v}}},
            {"signal", {{"b1", s.b1}, {"b2", s.b2}, {"k1x", s.k1x}, {"k2x", s.k2x}, {"k3x", s.k3x},
                        {"k1y", s.k1y}, {"k2y", s.k2y}, {"k3y", s.k3y}}}};
}

inline json to_json(const RunConfig& rc) {
    json bounds = json::object();
    for (std::size_t i = 0; i < kNumFree; ++i)
        bounds[std::string(kFreeNames[i])] = {rc.calib.bounds[i].first, rc.calib.bounds[i].second};
    const auto& s = rc.sim.sim;
    const auto& f = rc.filter;
    const auto& c = rc.calib;
    return {
        {"preset", rc.preset},
        {"seed", rc.seed},
        {"workers", rc.workers},
        {"model", model_json(rc.model)["model"]},
        {"signal", model_json(rc.model)["signal"]},
        {"potential", {{"variant", std::string(to_string(rc.potential.variant))}, {"x_min", rc.potential.x_min},
                       {"x_max", rc.potential.x_max}, {"n_grid", rc.potential.n_grid}, {"times", rc.potential.times},
                       {"mode", std::string(to_string(rc.potential.mode))}, {"y0", rc.potential.y0},
                       {"y_min", rc.potential.y_min}, {"y_max", rc.potential.y_max},
                       {"n_grid_y", rc.potential.n_grid_y}}},
        {"sim", {{"dt", s.dt}, {"horizon", s.horizon}, {"n_paths", s.n_paths},
                 {"x0", rc.sim.x0_set ? json(s.x0) : json(nullptr)}, {"y0", s.y0}, {"theta0", s.theta0},
                 {"default_barrier", s.default_barrier}, {"export_paths", rc.sim.export_paths}}},
        {"filter", {{"n_particles", f.n_particles}, {"meas_variance", f.meas_variance}, {"dt", f.dt},
                    {"resample_threshold", f.resample_threshold}, {"y0", f.y0}, {"theta0", f.theta0}}},
        {"calib", {{"horizons", c.horizons}, {"mode", std::string(to_string(c.mode))},
                   {"shape_requirement", c.shape_requirement == ShapeRequirement::Strict ? "strict" : "relaxed"},
                   {"shape_times", c.shape_times}, {"shape_y0", c.shape_y0}, {"ce_iters", c.ce_iters},
                   {"de_iters", c.de_iters}, {"ce_population", c.ce_population}, {"de_population", c.de_population},
                   {"penalty_weight", c.penalty_weight}, {"free", c.free}, {"bounds", bounds}}},
        {"instanton", {{"dt", rc.instanton.dt}, {"t_max", rc.instanton.t_max},
                       {"sigma", rc.instanton.sigma ? json(*rc.instanton.sigma) : json(nullptr)}}},
        {"data", {{"path", rc.data.path},
                  {"frequency", rc.data.frequency == Frequency::Daily ? "daily" : "monthly"},
                  {"s_ref", rc.data.s_ref}, {"start", rc.data.start}}},
        {"report", {{"max_lag", rc.report.max_lag}, {"rv_window", rc.report.rv_window},
                    {"rolling_window", rc.report.rolling_window}, {"rolling_ahead", rc.report.rolling_ahead},
                    {"sim_paths", rc.report.sim_paths},
                    {"hist_bins", rc.report.hist_bins}}},
    };
}

} // namespace marketron::cli
