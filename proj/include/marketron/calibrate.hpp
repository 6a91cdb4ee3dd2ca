#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dlimit.hpp"
#include "filter.hpp"
#include "market_data.hpp"
#include "optimize.hpp"
#include "stats.hpp"

namespace marketron {

inline constexpr double kSentinelLoss = 1e6;

struct CalibConfig {
    std::vector<double> horizons = {2, 5, 10, 15, 20, 24};
    std::array<std::pair<double, double>, kNumFree> bounds = default_bounds();
    ThetaStarMode mode = ThetaStarMode::Theta0;
    ShapeRequirement shape_requirement = ShapeRequirement::Relaxed;
    std::vector<double> shape_times = {0.1, 1.0};
    double shape_y0 = 0.0;
    std::size_t ce_iters = 500;
    std::size_t de_iters = 200;
    std::size_t ce_population = 100;
    std::size_t de_population = 0;
    double penalty_weight = 1e3;
    std::uint64_t seed = 0;
    FilterConfig filter;
    // Names of the parameters searched; the rest stay at the base model. Empty means all.
    std::vector<std::string> free;
    unsigned workers = 1;

    void validate(std::size_t n_returns) const {
        require(!horizons.empty(), "config", "calib.horizons must not be empty");
        for (std::size_t i = 0; i < horizons.size(); ++i) {
            require(horizons[i] > 0, "config", "calib.horizons must be positive");
            if (i > 0) require(horizons[i] > horizons[i - 1], "config", "calib.horizons must be ascending");
        }
        const double longest = static_cast<double>(n_returns) / 12.0;
        require(horizons.back() <= longest + 1e-9, "config",
                "calib.horizons exceed the data length (" + std::to_string(longest) + " years)");
        for (const auto& [lo, hi] : bounds) require(lo <= hi, "config", "calib.bounds must be ordered");
        require(penalty_weight >= 0, "config", "calib.penalty_weight must be >= 0");
        for (double t : shape_times) require(t > 0, "config", "calib.shape_times must be positive");
    }
};

inline std::size_t horizon_months(double h) { return static_cast<std::size_t>(std::llround(h * 12.0)); }

struct HorizonMoments {
    double horizon = 0.0;
    Moments model;
    Moments market;
};

struct ObjectiveValue {
    double loss = kSentinelLoss;
    double moment_loss = 0.0;
    double violation = 0.0;
    double martingale = 0.0;
    bool failed = false;
    std::string failure;
    std::vector<HorizonMoments> table;
    std::vector<ShapeReport> shape;
};

// Market moments per horizon, computed once per calibration.
inline std::vector<Moments> market_moments(const MarketData& data, const std::vector<double>& horizons) {
    std::vector<Moments> out;
    for (double h : horizons) {
        const std::size_t n = horizon_months(h);
        require(n <= data.monthly_log_returns.size(), "domain", "market_moments: horizon exceeds data");
        out.push_back(moments(data.monthly_log_returns.data(), n));
    }
    return out;
}

inline double shape_violation(const ModelParams& p, const SignalParams& s, const CalibConfig& cfg,
                              std::vector<ShapeReport>* reports = nullptr) {
    double v = 0.0;
    for (double t : cfg.shape_times) {
        const auto r = shape_constraint(t, p, s, cfg.mode, cfg.shape_y0, cfg.shape_requirement, cfg.filter.theta0);
        v += r.violation;
        if (reports) reports->push_back(r);
    }
    return v;
}

// Moment mismatch over all horizons plus quadratic penalties; finite for every input.
inline ObjectiveValue objective(const ModelParams& p, const SignalParams& s, const MarketData& data,
                                const CalibConfig& cfg, const std::vector<Moments>& market) {
    ObjectiveValue out;
    try {
        p.validate();
        out.violation = shape_violation(p, s, cfg, &out.shape);
        const auto run = run_filter(data.monthly_log_prices, p, s, cfg.filter);
        out.martingale = run.martingale_mean;
        const auto r = diff(run.predicted_x);
        for (std::size_t k = 0; k < cfg.horizons.size(); ++k) {
            const std::size_t n = horizon_months(cfg.horizons[k]);
            const Moments mm = moments(r.data(), n);
            const Moments& mk = market[k];
            out.moment_loss += (mm.mean - mk.mean) * (mm.mean - mk.mean) + (mm.vol - mk.vol) * (mm.vol - mk.vol)
                             + (mm.skew - mk.skew) * (mm.skew - mk.skew) + (mm.kurt - mk.kurt) * (mm.kurt - mk.kurt);
            out.table.push_back({cfg.horizons[k], mm, mk});
        }
        out.loss = out.moment_loss + cfg.penalty_weight * (out.violation + out.martingale * out.martingale);
        if (!std::isfinite(out.loss)) {
            out.failed = true;
            out.failure = "non-finite loss";
            out.loss = kSentinelLoss;
        }
    } catch (const Error& e) {
        out.failed = true;
        out.failure = e.code() + ": " + e.what();
        out.loss = kSentinelLoss;
    }
    return out;
}

struct FreeMap {
    std::vector<std::size_t> index;  // positions in FreeVector
    Bounds bounds;
};

inline FreeMap make_free_map(const CalibConfig& cfg) {
    FreeMap fm;
    for (std::size_t i = 0; i < kNumFree; ++i) {
        bool on = cfg.free.empty();
        for (const auto& n : cfg.free) on = on || n == kFreeNames[i];
        if (on) {
            fm.index.push_back(i);
            fm.bounds.push_back(cfg.bounds[i]);
        }
    }
    for (const auto& n : cfg.free) {
        bool known = false;
        for (auto k : kFreeNames) known = known || n == k;
        require(known, "config", "calib.free: unknown parameter '" + n + "'");
    }
    require(!fm.index.empty(), "config", "calib.free selects no parameters");
    return fm;
}

struct StageSummary {
    std::string name;
    double loss = 0.0;
    bool feasible = false;
    std::size_t evaluations = 0;
    std::vector<IterationRecord> history;
};

struct CalibratedModel {
    ModelParams params;
    SignalParams signal;
    double objective_value = 0.0;
    bool feasible = false;
    ObjectiveValue detail;
    std::vector<ShapeReport> constraint_report;
    std::vector<StageSummary> stages;
    double de_improvement = 0.0;
};

inline CalibratedModel calibrate(const MarketData& data, const Preset& base, const CalibConfig& cfg) {
    cfg.validate(data.monthly_log_returns.size());
    const auto market = market_moments(data, cfg.horizons);
    const FreeMap fm = make_free_map(cfg);
    const FreeVector base_vec = pack(base.model, base.signal);
    CalibConfig run_cfg = cfg;
    run_cfg.filter.variant = base.variant;

    auto expand = [&](const Point& x, ModelParams& p, SignalParams& s) {
        FreeVector v = base_vec;
        for (std::size_t j = 0; j < fm.index.size(); ++j) v[fm.index[j]] = x[j];
        p = base.model;
        s = base.signal;
        unpack(v, p, s);
    };
    const ObjectiveFn f = [&](const Point& x) {
        ModelParams p;
        SignalParams s;
        expand(x, p, s);
        const auto o = objective(p, s, data, run_cfg, market);
        return Evaluation{o.loss, o.failed ? 1.0 : o.violation};
    };

    Point start(fm.index.size());
    for (std::size_t j = 0; j < fm.index.size(); ++j)
        start[j] = std::clamp(base_vec[fm.index[j]], fm.bounds[j].first, fm.bounds[j].second);

    CEConfig ce;
    ce.iterations = cfg.ce_iters;
    ce.population = cfg.ce_population;
    ce.seed = cfg.seed;
    ce.workers = cfg.workers;
    const auto ce_res = cross_entropy_optimize(f, fm.bounds, ce, start);

    DEConfig de;
    de.generations = cfg.de_iters;
    de.population = cfg.de_population;
    de.seed = cfg.seed;
    de.workers = cfg.workers;
    const auto de_res = differential_evolution_optimize(f, fm.bounds, de, ce_res.best);

    CalibratedModel out;
    out.stages.push_back({"cross_entropy", ce_res.best_eval.loss, ce_res.feasible, ce_res.evaluations, ce_res.history});
    out.stages.push_back({"differential_evolution", de_res.best_eval.loss, de_res.feasible, de_res.evaluations,
                          de_res.history});
    expand(de_res.best, out.params, out.signal);
    out.detail = objective(out.params, out.signal, data, run_cfg, market);
    out.objective_value = out.detail.loss;
    out.constraint_report = out.detail.shape;
    out.feasible = de_res.feasible && !out.detail.failed;
    out.de_improvement = ce_res.best_eval.loss > 0
                             ? (ce_res.best_eval.loss - de_res.best_eval.loss) / ce_res.best_eval.loss
                             : 0.0;
    return out;
}

} // namespace marketron
