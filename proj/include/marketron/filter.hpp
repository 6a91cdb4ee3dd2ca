#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "model_core.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace marketron {

struct FilterConfig {
    std::size_t n_particles = 1500;
    double meas_variance = 0.05;
    double dt = 1.0 / 12.0;
    std::uint64_t seed = 0;
    double resample_threshold = 0.5;
    double y0 = 0.0;
    double theta0 = 0.0;
    PotentialVariant variant = PotentialVariant::Exact;
    unsigned workers = 1;

    void validate() const {
        require(n_particles >= 2, "config", "filter.n_particles must be >= 2");
        require(meas_variance > 0, "config", "filter.meas_variance must be > 0");
        require(dt > 0, "config", "filter.dt must be > 0");
        require(resample_threshold >= 0 && resample_threshold <= 1, "config",
                "filter.resample_threshold must lie in [0, 1]");
    }
};

struct SignalTerms {
    double f = 0.0;
    double fp = 0.0;
    double h = 0.0;
    double hp = 0.0;
};

// The filter's view of the model: signal terms, the flow potential and the composite-noise prefactors.
struct MarketronFilterModel {
    ModelParams p;
    SignalParams s;
    PotentialVariant variant = PotentialVariant::Exact;

    struct Frame {
        double a1 = 0.0;
        double a2 = 0.0;
    };

    Frame frame(double t) const { return {s.a1(t), s.a2(t)}; }

    SignalTerms signal(const Frame& fr, double theta) const {
        const double s1 = logistic(s.b1 * theta);
        const double s2 = logistic(s.b2 * theta);
        return {fr.a1 * s1, fr.a1 * s.b1 * s1 * (1 - s1), fr.a2 * s2, fr.a2 * s.b2 * s2 * (1 - s2)};
    }

    double vm(double x) const { return morse_potential(x, p, variant); }
    double vm_grad(double x) const { return morse_grad(x, p, variant); }
    double f_scale() const { return s.k1x * s.b1; }
    double h_scale() const { return s.k1y * s.b2; }
};

// Linear-Gaussian stand-in: identity signals and V_M(x) = x.
struct LinearSurrogateModel {
    ModelParams p;

    struct Frame {};

    Frame frame(double) const { return {}; }
    SignalTerms signal(const Frame&, double theta) const { return {theta, 1.0, theta, 1.0}; }
    double vm(double x) const { return x; }
    double vm_grad(double) const { return 1.0; }
    double f_scale() const { return 1.0; }
    double h_scale() const { return 1.0; }
};

struct ParticleCloud {
    std::vector<double> y;
    std::vector<double> theta;
    std::vector<double> weights;
    double t = 0.0;

    std::size_t size() const { return y.size(); }
};

inline ParticleCloud initial_cloud(std::size_t n, double y0, double theta0, double t0 = 0.0) {
    return {std::vector<double>(n, y0), std::vector<double>(n, theta0), std::vector<double>(n, 1.0 / n), t0};
}

struct Prediction {
    std::vector<double> x_pred;
    std::vector<double> w_y;
    std::vector<double> w_theta;
    std::size_t redraws = 0;
};

struct StepNoise {
    double w_theta = 0.0;
    double w_y = 0.0;
};

struct ParticleStep {
    double y = 0.0;
    double theta = 0.0;
    double x_pred = 0.0;
};

// Taylor/Seidel predictor for one particle given its noise draws.
template <class Model>
ParticleStep propagate_particle(const Model& m, const typename Model::Frame& fr, double y, double theta,
                                double x_prev, double vm, double vm_grad, double dt, const StepNoise& w) {
    const auto& p = m.p;
    const double sq = std::sqrt(dt);
    const double d_theta = p.k * (p.theta_hat - theta) * dt + p.sigma_z * sq * w.w_theta;
    const SignalTerms st = m.signal(fr, theta);
    const double y_drift = p.v * (st.h + st.hp * d_theta) + p.mu * (p.y_bar - y) - p.c * vm;
    const double y_new = y + y_drift * dt + p.sigma_y * sq * w.w_y;
    const double x_drift = p.v * (st.f + st.fp * d_theta) + p.eta - p.c * y_new * vm_grad;
    return {y_new, theta + d_theta, x_prev + x_drift * dt};
}

template <class Model>
Prediction predict_particles(ParticleCloud& cloud, double x_obs_prev, double dt, const Model& m,
                             std::uint64_t seed, std::uint64_t step, unsigned workers = 1) {
    const std::size_t n = cloud.size();
    Prediction out;
    out.x_pred.resize(n);
    out.w_y.resize(n);
    out.w_theta.resize(n);
    const auto fr = m.frame(cloud.t);
    const double vm = m.vm(x_obs_prev);
    const double vmg = m.vm_grad(x_obs_prev);
    std::vector<unsigned char> redrawn(n, 0);
    parallel_for(n, workers, [&](std::size_t i) {
        Stream rng = make_stream(seed, {tag::particle, step, i});
        StepNoise w{rng.normal(), rng.normal()};
        ParticleStep s = propagate_particle(m, fr, cloud.y[i], cloud.theta[i], x_obs_prev, vm, vmg, dt, w);
        if (!(std::isfinite(s.y) && std::isfinite(s.theta) && std::isfinite(s.x_pred))) {
            // Re-draw from the stationary prior and predict again with the same noise.
            Stream prior = make_stream(seed, {tag::prior, step, i});
            const auto& p = m.p;
            const double sd_theta = p.k > 0 ? p.sigma_z / std::sqrt(2 * p.k) : 0.0;
            const double sd_y = p.mu > 0 ? p.sigma_y / std::sqrt(2 * p.mu) : 0.0;
            const double th = p.theta_hat + sd_theta * prior.normal();
            const double yy = p.y_bar + sd_y * prior.normal();
            s = propagate_particle(m, fr, yy, th, x_obs_prev, vm, vmg, dt, w);
            if (!(std::isfinite(s.y) && std::isfinite(s.theta) && std::isfinite(s.x_pred))) s = {yy, th, x_obs_prev};
            redrawn[i] = 1;
        }
        cloud.y[i] = s.y;
        cloud.theta[i] = s.theta;
        out.x_pred[i] = s.x_pred;
        out.w_y[i] = w.w_y;
        out.w_theta[i] = w.w_theta;
    });
    for (auto r : redrawn) out.redraws += r;
    cloud.t += dt;
    return out;
}

inline double normal_log_density(double r, double variance) {
    return -0.5 * std::log(2 * std::numbers::pi * variance) - 0.5 * r * r / variance;
}

// Returns true when every likelihood underflowed and weights were reset.
inline bool weight_update(ParticleCloud& cloud, const std::vector<double>& x_pred, double x_obs,
                          double meas_variance) {
    const std::size_t n = cloud.size();
    std::vector<double> logw(n);
    double best = -std::numeric_limits<double>::infinity();
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double ll = normal_log_density(x_obs - x_pred[i], meas_variance);
        const double lw = cloud.weights[i] > 0 ? std::log(cloud.weights[i]) + ll
                                               : -std::numeric_limits<double>::infinity();
        logw[i] = std::isfinite(ll) ? lw : -std::numeric_limits<double>::infinity();
        best = std::max(best, logw[i]);
        if (std::isfinite(ll)) best_ll = std::max(best_ll, ll);
    }
    if (!std::isfinite(best) || std::exp(best_ll) == 0.0) {
        std::fill(cloud.weights.begin(), cloud.weights.end(), 1.0 / n);
        return true;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cloud.weights[i] = std::exp(logw[i] - best);
        total += cloud.weights[i];
    }
    for (auto& w : cloud.weights) w /= total;
    return false;
}

inline double effective_sample_size(const std::vector<double>& w) {
    double s = 0.0;
    for (double x : w) s += x * x;
    return s > 0 ? 1.0 / s : 0.0;
}

// Systematic resampling indices for one uniform u in (0, 1).
inline std::vector<std::size_t> systematic_indices(const std::vector<double>& w, double u) {
    const std::size_t n = w.size();
    std::vector<std::size_t> idx(n);
    double cum = w[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = (static_cast<double>(i) + u) / static_cast<double>(n);
        while (pos > cum && j + 1 < n) cum += w[++j];
        idx[i] = j;
    }
    return idx;
}

// Resamples when ESS < threshold * n; returns whether it did.
inline bool resample(ParticleCloud& cloud, double threshold, Stream& rng) {
    const std::size_t n = cloud.size();
    if (effective_sample_size(cloud.weights) >= threshold * static_cast<double>(n)) return false;
    const auto idx = systematic_indices(cloud.weights, rng.uniform());
    std::vector<double> y(n), th(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = cloud.y[idx[i]];
        th[i] = cloud.theta[idx[i]];
    }
    cloud.y = std::move(y);
    cloud.theta = std::move(th);
    std::fill(cloud.weights.begin(), cloud.weights.end(), 1.0 / n);
    return true;
}

struct FilterOutput {
    std::vector<double> times;
    std::vector<double> x_obs;
    std::vector<double> predicted_x;
    std::vector<double> y_hat;
    std::vector<double> theta_hat;
    std::vector<double> ess_series;
    std::vector<double> martingale_series;
    double martingale_mean = 0.0;
    double martingale_se = 0.0;
    std::size_t degenerate_steps = 0;
    std::size_t redraws = 0;
    std::size_t resample_count = 0;
};

namespace detail {

template <class Model>
double composite_residual(const Model& m, double x_obs, double x_pred, double vm_grad, double dt, double w_y,
                          double w_theta, const SignalTerms& st) {
    const auto& p = m.p;
    const double w_x = p.sigma > 0 ? (x_obs - x_pred) / (p.sigma * std::sqrt(dt)) : 0.0;
    return p.sigma * w_x - p.c * vm_grad * dt * p.sigma_y * w_y
         + dt * p.sigma_z * w_theta * (m.f_scale() * st.fp - p.c * vm_grad * m.h_scale() * st.hp);
}

} // namespace detail

template <class Model>
FilterOutput run_filter(const std::vector<double>& obs, const Model& m, const FilterConfig& cfg) {
    cfg.validate();
    require(obs.size() >= 2, "domain", "run_filter: need at least 2 observations");
    const std::size_t n_obs = obs.size();
    const std::size_t n = cfg.n_particles;
    FilterOutput out;
    out.times.resize(n_obs);
    out.x_obs = obs;
    out.predicted_x.resize(n_obs);
    out.y_hat.resize(n_obs);
    out.theta_hat.resize(n_obs);
    out.ess_series.resize(n_obs);
    out.martingale_series.resize(n_obs - 1);

    ParticleCloud cloud = initial_cloud(n, cfg.y0, cfg.theta0);
    out.times[0] = 0.0;
    out.predicted_x[0] = obs[0];
    out.y_hat[0] = cfg.y0;
    out.theta_hat[0] = cfg.theta0;
    out.ess_series[0] = static_cast<double>(n);

    std::vector<double> theta_prev(n);
    for (std::size_t step = 1; step < n_obs; ++step) {
        const auto fr = m.frame(cloud.t);
        theta_prev = cloud.theta;
        const std::vector<double> prior_w = cloud.weights;
        Prediction pred = predict_particles(cloud, obs[step - 1], cfg.dt, m, cfg.seed, step, cfg.workers);
        out.redraws += pred.redraws;

        double xp = 0.0;
        for (std::size_t i = 0; i < n; ++i) xp += prior_w[i] * pred.x_pred[i];
        out.predicted_x[step] = xp;
        out.times[step] = cloud.t;

        if (weight_update(cloud, pred.x_pred, obs[step], cfg.meas_variance)) ++out.degenerate_steps;

        const double vmg = m.vm_grad(obs[step - 1]);
        double yh = 0.0, th = 0.0, mart = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = cloud.weights[i];
            yh += w * cloud.y[i];
            th += w * cloud.theta[i];
            const SignalTerms st = m.signal(fr, theta_prev[i]);
            mart += w * detail::composite_residual(m, obs[step], pred.x_pred[i], vmg, cfg.dt, pred.w_y[i],
                                                   pred.w_theta[i], st);
        }
        out.y_hat[step] = yh;
        out.theta_hat[step] = th;
        out.martingale_series[step - 1] = mart;
        out.ess_series[step] = effective_sample_size(cloud.weights);

        Stream rs = make_stream(cfg.seed, {tag::resample, step});
        if (resample(cloud, cfg.resample_threshold, rs)) ++out.resample_count;
    }

    const double k = static_cast<double>(out.martingale_series.size());
    double mean = 0.0;
    for (double v : out.martingale_series) mean += v;
    mean /= k;
    double var = 0.0;
    for (double v : out.martingale_series) var += (v - mean) * (v - mean);
    out.martingale_mean = mean;
    out.martingale_se = k > 1 ? std::sqrt(var / (k - 1) / k) : 0.0;

    if (2 * out.degenerate_steps > n_obs - 1) {
        throw Error("filter_degenerate", "run_filter: " + std::to_string(out.degenerate_steps) + " of "
                                             + std::to_string(n_obs - 1) + " steps had all-zero likelihoods");
    }
    return out;
}

inline FilterOutput run_filter(const std::vector<double>& obs, const ModelParams& p, const SignalParams& s,
                               const FilterConfig& cfg) {
    return run_filter(obs, MarketronFilterModel{p, s, cfg.variant}, cfg);
}

// Particle-and-time mean of the composite x-noise; recorded during the filter pass.
inline double martingale_residual(const FilterOutput& run) { return run.martingale_mean; }

} // namespace marketron
