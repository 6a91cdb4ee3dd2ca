#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "model_core.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace marketron {

enum class RecordGrid { Monthly, Full };

struct SimConfig {
    double dt = 1.0 / 252.0;
    double horizon = 1.0;
    std::size_t n_paths = 1;
    std::uint64_t seed = 0;
    double x0 = 0.0;
    double y0 = 0.0;
    double theta0 = 0.0;
    double default_barrier = -10.0;
    PotentialVariant variant = PotentialVariant::Exact;
    RecordGrid record = RecordGrid::Monthly;
    unsigned workers = 1;

    std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

    void validate() const {
        require(std::isfinite(dt) && dt > 0, "config", "sim.dt must be > 0");
        require(std::isfinite(horizon) && horizon >= dt, "config", "sim.horizon must be >= dt");
        require(n_paths >= 1, "config", "sim.n_paths must be >= 1");
        require(std::isfinite(x0) && std::isfinite(y0) && std::isfinite(theta0), "config",
                "initial state must be finite");
        require(std::isfinite(default_barrier) && default_barrier < x0, "config",
                "default barrier must lie below x0");
    }
};

struct PathRecord {
    std::vector<double> times;
    std::vector<double> x_series;
    std::vector<double> y_series;
    std::vector<double> theta_series;
    bool defaulted = false;
    std::optional<double> default_time;
};

struct PathEnsemble {
    SimConfig config;
    ModelParams params;
    SignalParams signal;
    std::vector<PathRecord> paths;
};

struct StepResult {
    State state;
    bool escaped = false;
};

// One Euler-Maruyama step with caller-supplied standard normals (w_x, w_y, w_theta).
inline StepResult step_euler(const State& s, double dt, const ModelParams& p, const SignalParams& sig,
                             const std::array<double, 3>& w,
                             PotentialVariant variant = PotentialVariant::Exact) {
    const auto d = drift3d(s, p, sig, variant);
    const double sq = std::sqrt(dt);
    StepResult r;
    r.state.x = s.x + d[0] * dt + p.sigma * sq * w[0];
    r.state.y = s.y + d[1] * dt + p.sigma_y * sq * w[1];
    r.state.theta = s.theta + d[2] * dt + p.sigma_z * sq * w[2];
    r.state.t = s.t + dt;
    r.escaped = !(std::isfinite(r.state.x) && std::isfinite(r.state.y) && std::isfinite(r.state.theta));
    return r;
}

// Grid indices nearest to each 1/12-year boundary.
inline std::vector<std::size_t> monthly_indices(double horizon, double dt) {
    require(horizon >= 1.0 / 12.0 - 1e-12, "config", "horizon shorter than one month");
    require(dt <= 1.0 / 12.0 + 1e-12, "config", "dt must be <= 1/12 for monthly sampling");
    const auto n_steps = static_cast<std::size_t>(std::llround(horizon / dt));
    const auto months = static_cast<std::size_t>(std::floor(horizon * 12.0 + 1e-9));
    std::vector<std::size_t> idx(months + 1);
    for (std::size_t m = 0; m <= months; ++m) {
        const auto i = static_cast<std::size_t>(std::llround((m / 12.0) / dt));
        idx[m] = std::min(i, n_steps);
    }
    return idx;
}

inline PathRecord simulate_path(const SimConfig& cfg, const ModelParams& p, const SignalParams& sig,
                                std::size_t path_index, const State& start) {
    const std::size_t n_steps = cfg.n_steps();
    std::vector<std::size_t> keep;
    if (cfg.record == RecordGrid::Monthly) keep = monthly_indices(cfg.horizon, cfg.dt);

    PathRecord rec;
    const std::size_t n_rec = cfg.record == RecordGrid::Full ? n_steps + 1 : keep.size();
    rec.times.reserve(n_rec);
    rec.x_series.reserve(n_rec);
    rec.y_series.reserve(n_rec);
    rec.theta_series.reserve(n_rec);

    std::size_t next_keep = 0;
    auto record = [&](std::size_t i, const State& s) {
        if (cfg.record == RecordGrid::Full) {
            rec.times.push_back(start.t + i * cfg.dt);
        } else {
            while (next_keep < keep.size() && keep[next_keep] == i) {
                rec.times.push_back(start.t + next_keep / 12.0);
                rec.x_series.push_back(s.x);
                rec.y_series.push_back(s.y);
                rec.theta_series.push_back(s.theta);
                ++next_keep;
            }
            return;
        }
        rec.x_series.push_back(s.x);
        rec.y_series.push_back(s.y);
        rec.theta_series.push_back(s.theta);
    };

    Stream rng = make_stream(cfg.seed, {tag::path, path_index});
    State s = start;
    record(0, s);
    for (std::size_t i = 1; i <= n_steps; ++i) {
        if (!rec.defaulted) {
            const std::array<double, 3> w = {rng.normal(), rng.normal(), rng.normal()};
            const StepResult r = step_euler(s, cfg.dt, p, sig, w, cfg.variant);
            if (r.escaped || r.state.x <= cfg.default_barrier) {
                rec.defaulted = true;
                rec.default_time = start.t + i * cfg.dt;
                s.x = cfg.default_barrier;
                s.t = r.state.t;
            } else {
                s = r.state;
            }
        } else {
            s.t += cfg.dt;
        }
        record(i, s);
    }
    return rec;
}

inline PathEnsemble simulate_paths(const SimConfig& cfg, const ModelParams& p, const SignalParams& sig) {
    cfg.validate();
    PathEnsemble ens{cfg, p, sig, {}};
    ens.paths.resize(cfg.n_paths);
    const State start{cfg.x0, cfg.y0, cfg.theta0, 0.0};
    parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
        ens.paths[i] = simulate_path(cfg, p, sig, i, start);
    });
    return ens;
}

// Monthly log-prices of one path; identity for monthly-recorded paths.
inline std::vector<double> aggregate_monthly(const PathRecord& path, const SimConfig& cfg) {
    if (cfg.record == RecordGrid::Monthly) {
        require(cfg.horizon >= 1.0 / 12.0 - 1e-12, "config", "horizon shorter than one month");
        return path.x_series;
    }
    const auto idx = monthly_indices(cfg.horizon, cfg.dt);
    std::vector<double> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(path.x_series.at(i));
    return out;
}

struct DefaultIntensity {
    double fraction = 0.0;
    double lambda = 0.0;
    double bps = 0.0;
    bool infinite = false;
    std::size_t n_defaulted = 0;
};

// Solves fraction = 1 - exp(-lambda T).
inline DefaultIntensity default_intensity(std::size_t n_defaulted, std::size_t n_paths, double horizon) {
    require(horizon > 0, "domain", "default_intensity: horizon must be > 0");
    require(n_paths > 0, "domain", "default_intensity: empty ensemble");
    DefaultIntensity d;
    d.n_defaulted = n_defaulted;
    d.fraction = static_cast<double>(n_defaulted) / static_cast<double>(n_paths);
    if (n_defaulted == n_paths) {
        d.infinite = true;
        d.lambda = std::numeric_limits<double>::infinity();
    } else {
        d.lambda = -std::log1p(-d.fraction) / horizon;
    }
    d.bps = d.lambda * 1e4;
    return d;
}

inline DefaultIntensity default_intensity(const PathEnsemble& ens) {
    std::size_t n = 0;
    for (const auto& p : ens.paths) n += p.defaulted ? 1 : 0;
    return default_intensity(n, ens.paths.size(), ens.config.horizon);
}

} // namespace marketron
