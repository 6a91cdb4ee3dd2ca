#include <cmath>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <marketron/filter.hpp>
#include <marketron/simulate.hpp>

#include "oracles.hpp"

using namespace marketron;

namespace {

FilterConfig linear_config(std::size_t n, std::uint64_t seed) {
    FilterConfig cfg;
    cfg.n_particles = n;
    cfg.meas_variance = 0.005;
    cfg.seed = seed;
    return cfg;
}

struct LinearRun {
    oracle::LinearTruth truth;
    oracle::KalmanOutput kf;
    FilterOutput pf;
};

LinearRun linear_run(std::size_t n_particles, std::uint64_t seed, std::size_t n_obs = 120) {
    const auto p = oracle::linear_surrogate_params();
    const auto cfg = linear_config(n_particles, seed);
    LinearRun r;
    r.truth = oracle::simulate_linear(p, cfg.dt, cfg.meas_variance, n_obs, 0.0, 0.0, 0.0, 1000 + seed);
    r.kf = oracle::kalman_linear(p, cfg.dt, cfg.meas_variance, r.truth.x, 0.0, 0.0);
    r.pf = run_filter(r.truth.x, LinearSurrogateModel{p}, cfg);
    return r;
}

// Deterministic 3D drift integrated with fine RK4, sampled every `every` fine steps.
std::vector<double> deterministic_x(const ModelParams& p, const SignalParams& sig, PotentialVariant var,
                                    double horizon, double dt_obs, double x0, double y0, double theta0) {
    const int sub = 100;
    const double h = dt_obs / sub;
    const std::size_t n_obs = static_cast<std::size_t>(std::llround(horizon / dt_obs)) + 1;
    State s{x0, y0, theta0, 0.0};
    auto f = [&](const State& q) { return drift3d(q, p, sig, var); };
    std::vector<double> out = {x0};
    for (std::size_t i = 1; i < n_obs; ++i) {
        for (int j = 0; j < sub; ++j) {
            auto add = [](const State& a, const std::array<double, 3>& d, double w) {
                return State{a.x + w * d[0], a.y + w * d[1], a.theta + w * d[2], a.t + w};
            };
            const auto k1 = f(s);
            const auto k2 = f(add(s, k1, 0.5 * h));
            const auto k3 = f(add(s, k2, 0.5 * h));
            const auto k4 = f(add(s, k3, h));
            for (int c = 0; c < 3; ++c) {
                const double d = h / 6 * (k1[c] + 2 * k2[c] + 2 * k3[c] + k4[c]);
                if (c == 0) s.x += d;
                else if (c == 1) s.y += d;
                else s.theta += d;
            }
            s.t += h;
        }
        out.push_back(s.x);
    }
    return out;
}

} // namespace

TEST(Predictor, HandExpandedSeidelStep) {
    const auto pr = presets::table1();
    const MarketronFilterModel m{pr.model, pr.signal, pr.variant};
    const double t = 0.75, dt = 1.0 / 12, y = 0.3, theta = 1.2, x_prev = 0.4;
    const StepNoise w{0.7, -1.1};
    const auto& p = pr.model;
    const auto& s = pr.signal;

    const double d_theta = p.k * (p.theta_hat - theta) * dt + p.sigma_z * std::sqrt(dt) * w.w_theta;
    const double s1 = 1 / (1 + std::exp(-s.b1 * theta)), s2 = 1 / (1 + std::exp(-s.b2 * theta));
    const double a1 = s.k1x * std::cos(s.k2x + s.k3x * t), a2 = s.k1y * std::sin(s.k2y + s.k3y * t);
    const double f = a1 * s1, fp = a1 * s.b1 * s1 * (1 - s1);
    const double h = a2 * s2, hp = a2 * s.b2 * s2 * (1 - s2);
    const double vm = morse_potential(x_prev, p, pr.variant), vmg = morse_grad(x_prev, p, pr.variant);
    const double y_new = y + (p.v * (h + hp * d_theta) + p.mu * (p.y_bar - y) - p.c * vm) * dt
                       + p.sigma_y * std::sqrt(dt) * w.w_y;
    const double x_pred = x_prev + (p.v * (f + fp * d_theta) + p.eta - p.c * y_new * vmg) * dt;

    const auto got = propagate_particle(m, m.frame(t), y, theta, x_prev, vm, vmg, dt, w);
    EXPECT_NEAR(got.theta, theta + d_theta, 1e-14);
    EXPECT_NEAR(got.y, y_new, 1e-13);
    EXPECT_NEAR(got.x_pred, x_pred, 1e-13);
}

TEST(Predictor, ZeroHiddenNoiseIsDriftStep) {
    auto pr = presets::table4();
    pr.model.sigma_y = pr.model.sigma_z = 0.0;
    const MarketronFilterModel m{pr.model, pr.signal, pr.variant};
    auto cloud = initial_cloud(8, 0.2, 0.5, 0.0);
    const auto pred = predict_particles(cloud, 0.1, 1.0 / 12, m, 7, 1);
    const auto one = propagate_particle(m, m.frame(0.0), 0.2, 0.5, 0.1, m.vm(0.1), m.vm_grad(0.1), 1.0 / 12,
                                        StepNoise{0.0, 0.0});
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        EXPECT_DOUBLE_EQ(cloud.y[i], one.y);
        EXPECT_DOUBLE_EQ(cloud.theta[i], one.theta);
        EXPECT_DOUBLE_EQ(pred.x_pred[i], one.x_pred);
    }
    EXPECT_DOUBLE_EQ(cloud.t, 1.0 / 12);
}

TEST(Predictor, LinearStepMatchesKalmanPrediction) {
    const auto p = oracle::linear_surrogate_params();
    const double dt = 1.0 / 12, x_prev = 0.3;
    const std::size_t n = 200000;
    // Prior cloud: independent normals around (0.1, 0.4).
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    ParticleCloud cloud = initial_cloud(n, 0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        cloud.y[i] = 0.1 + 0.3 * n01(rng);
        cloud.theta[i] = 0.4 + 0.5 * n01(rng);
    }
    predict_particles(cloud, x_prev, dt, LinearSurrogateModel{p}, 3, 1);

    const double a00 = 1 - p.mu * dt, a01 = p.v * dt * (1 - p.k * dt), a11 = 1 - p.k * dt;
    const double b0 = p.v * p.k * p.theta_hat * dt * dt + p.mu * p.y_bar * dt - p.c * x_prev * dt;
    const double b1 = p.k * p.theta_hat * dt;
    const double my = a00 * 0.1 + a01 * 0.4 + b0, mt = a11 * 0.4 + b1;
    const double sq = std::sqrt(dt);
    const double g00 = p.sigma_y * sq, g01 = p.v * dt * p.sigma_z * sq, g11 = p.sigma_z * sq;
    const double vyy = a00 * a00 * 0.09 + a01 * a01 * 0.25 + g00 * g00 + g01 * g01;
    const double vtt = a11 * a11 * 0.25 + g11 * g11;
    const double vyt = a01 * a11 * 0.25 + g01 * g11;

    double sy = 0, st = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sy += cloud.y[i];
        st += cloud.theta[i];
    }
    sy /= n;
    st /= n;
    double cyy = 0, ctt = 0, cyt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cyy += (cloud.y[i] - sy) * (cloud.y[i] - sy);
        ctt += (cloud.theta[i] - st) * (cloud.theta[i] - st);
        cyt += (cloud.y[i] - sy) * (cloud.theta[i] - st);
    }
    cyy /= n - 1;
    ctt /= n - 1;
    cyt /= n - 1;
    EXPECT_NEAR(sy, my, 4 * std::sqrt(vyy / n));
    EXPECT_NEAR(st, mt, 4 * std::sqrt(vtt / n));
    // Sample variances have relative SE sqrt(2/n).
    EXPECT_NEAR(cyy / vyy, 1.0, 4 * std::sqrt(2.0 / n));
    EXPECT_NEAR(ctt / vtt, 1.0, 4 * std::sqrt(2.0 / n));
    EXPECT_NEAR(cyt, vyt, 4 * std::sqrt(vyy * vtt / n));
}

TEST(Weights, ConstantLikelihoodLeavesWeights) {
    auto cloud = initial_cloud(4, 0, 0);
    cloud.weights = {0.1, 0.2, 0.3, 0.4};
    EXPECT_FALSE(weight_update(cloud, {1.0, 1.0, 1.0, 1.0}, 1.3, 0.05));
    EXPECT_NEAR(cloud.weights[0], 0.1, 1e-15);
    EXPECT_NEAR(cloud.weights[3], 0.4, 1e-15);
}

TEST(Weights, SymmetricPredictionsGetEqualWeight) {
    auto cloud = initial_cloud(2, 0, 0);
    weight_update(cloud, {0.7, 1.3}, 1.0, 0.05);
    EXPECT_DOUBLE_EQ(cloud.weights[0], cloud.weights[1]);
}

TEST(Weights, MatchNormalDensity) {
    const double var = 0.05;
    boost::math::normal_distribution<double> nd(0.0, std::sqrt(var));
    for (double r : {-0.9, -0.2, 0.0, 0.05, 0.6}) EXPECT_NEAR(std::exp(normal_log_density(r, var)), boost::math::pdf(nd, r), 1e-14);

    auto cloud = initial_cloud(3, 0, 0);
    cloud.weights = {0.5, 0.3, 0.2};
    const std::vector<double> pred = {0.1, 0.4, -0.3};
    const double obs = 0.2;
    weight_update(cloud, pred, obs, var);
    double total = 0;
    std::vector<double> expect(3);
    const std::vector<double> prior = {0.5, 0.3, 0.2};
    for (int i = 0; i < 3; ++i) total += expect[i] = prior[i] * boost::math::pdf(nd, obs - pred[i]);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(cloud.weights[i], expect[i] / total, 1e-14);
}

TEST(Weights, AllZeroLikelihoodResets) {
    auto cloud = initial_cloud(3, 0, 0);
    cloud.weights = {0.9, 0.05, 0.05};
    EXPECT_TRUE(weight_update(cloud, {1e3, 2e3, 3e3}, 0.0, 0.05));
    for (double w : cloud.weights) EXPECT_DOUBLE_EQ(w, 1.0 / 3);
}

TEST(Resample, UniformWeightsSkip) {
    auto cloud = initial_cloud(10, 0, 0);
    for (std::size_t i = 0; i < 10; ++i) cloud.y[i] = static_cast<double>(i);
    Stream rng(1);
    EXPECT_FALSE(resample(cloud, 0.5, rng));
    EXPECT_EQ(cloud.y[9], 9.0);
}

TEST(Resample, SingleHeavyParticleIsCopied) {
    auto cloud = initial_cloud(10, 0, 0);
    for (std::size_t i = 0; i < 10; ++i) cloud.y[i] = static_cast<double>(i);
    std::fill(cloud.weights.begin(), cloud.weights.end(), 0.0);
    cloud.weights[6] = 1.0;
    Stream rng(1);
    EXPECT_TRUE(resample(cloud, 0.5, rng));
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(cloud.y[i], 6.0);
        EXPECT_DOUBLE_EQ(cloud.weights[i], 0.1);
    }
}

TEST(Resample, OffspringCountsAreUnbiased) {
    const std::size_t n = 12;
    std::mt19937_64 g(9);
    std::vector<double> w(n);
    double total = 0;
    for (auto& x : w) total += x = std::exponential_distribution<double>(1.0)(g);
    for (auto& x : w) x /= total;
    const int trials = 10000;
    std::vector<double> sum(n, 0.0), sum2(n, 0.0);
    Stream rng(derive_key(4, {tag::resample}));
    for (int t = 0; t < trials; ++t) {
        std::vector<double> count(n, 0.0);
        for (auto j : systematic_indices(w, rng.uniform())) count[j] += 1;
        for (std::size_t i = 0; i < n; ++i) {
            sum[i] += count[i];
            sum2[i] += count[i] * count[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double mean = sum[i] / trials;
        const double var = sum2[i] / trials - mean * mean;
        const double se = std::sqrt(std::max(var, 0.0) / trials);
        EXPECT_NEAR(mean, n * w[i], 3 * se + 1e-9) << i;
    }
}

TEST(Filter, OutputShapesAndNormalization) {
    const auto r = linear_run(300, 1, 40);
    EXPECT_EQ(r.pf.predicted_x.size(), 40u);
    EXPECT_EQ(r.pf.y_hat.size(), 40u);
    EXPECT_EQ(r.pf.theta_hat.size(), 40u);
    EXPECT_EQ(r.pf.ess_series.size(), 40u);
    for (double e : r.pf.ess_series) {
        EXPECT_GE(e, 1.0 - 1e-9);
        EXPECT_LE(e, 300.0 + 1e-9);
    }
}

TEST(Filter, Deterministic) {
    const auto p = oracle::linear_surrogate_params();
    const auto truth = oracle::simulate_linear(p, 1.0 / 12, 0.005, 60, 0, 0, 0, 3);
    auto cfg = linear_config(500, 42);
    const auto a = run_filter(truth.x, LinearSurrogateModel{p}, cfg);
    const auto b = run_filter(truth.x, LinearSurrogateModel{p}, cfg);
    cfg.workers = 3;
    const auto c = run_filter(truth.x, LinearSurrogateModel{p}, cfg);
    EXPECT_EQ(a.theta_hat, b.theta_hat);
    EXPECT_EQ(a.predicted_x, b.predicted_x);
    EXPECT_EQ(a.theta_hat, c.theta_hat);
    EXPECT_EQ(a.y_hat, c.y_hat);
    EXPECT_EQ(a.martingale_mean, c.martingale_mean);
}

TEST(Filter, LinearSurrogateMatchesKalman) {
    double pf_err = 0, kf_err = 0, gap = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = linear_run(1500, seed);
        pf_err += oracle::rmse(r.pf.theta_hat, r.truth.theta) + oracle::rmse(r.pf.y_hat, r.truth.y);
        kf_err += oracle::rmse(r.kf.theta, r.truth.theta) + oracle::rmse(r.kf.y, r.truth.y);
        gap += oracle::rmse(r.pf.theta_hat, r.kf.theta) + oracle::rmse(r.pf.y_hat, r.kf.y);
    }
    EXPECT_LE(pf_err, 1.10 * kf_err);
    RecordProperty("pf_to_kalman_gap", std::to_string(gap / kf_err));
}

TEST(Filter, MoreParticlesApproachKalman) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {150u, 1500u, 15000u}) {
        double gap = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto r = linear_run(n, seed);
            gap += oracle::rmse(r.pf.theta_hat, r.kf.theta) + oracle::rmse(r.pf.y_hat, r.kf.y);
        }
        EXPECT_LT(gap, prev) << n;
        prev = gap;
    }
}

TEST(Filter, ZeroNoiseDataIsTrackedToFirstOrder) {
    auto pr = presets::table4();
    pr.model.sigma = pr.model.sigma_y = pr.model.sigma_z = 0.0;
    double err[2];
    for (int k = 0; k < 2; ++k) {
        const double dt = k == 0 ? 1.0 / 12 : 1.0 / 24;
        const auto x = deterministic_x(pr.model, pr.signal, pr.variant, 3.0, dt, 0.0, 0.0, 0.0);
        FilterConfig cfg;
        cfg.n_particles = 4;
        cfg.dt = dt;
        const auto out = run_filter(x, pr.model, pr.signal, cfg);
        err[k] = 0;
        for (std::size_t i = 0; i < x.size(); ++i) err[k] = std::max(err[k], std::abs(out.predicted_x[i] - x[i]));
    }
    EXPECT_LT(err[0], 1.0 / 12);
    EXPECT_GT(err[0] / err[1], 1.8);
}

// Table-1 paths collapse within a few years, so each path is filtered only up to its default.
TEST(Filter, RecoversSignalOnSyntheticTableOneData) {
    const auto pr = presets::table1();
    SimConfig sc;
    sc.horizon = 10.0;
    sc.n_paths = 40;
    sc.seed = 8;
    sc.x0 = 3.0;
    const auto ens = simulate_paths(sc, pr.model, pr.signal);
    const double prior_sd = pr.model.sigma_z / std::sqrt(2 * pr.model.k);
    int used = 0;
    double total = 0;
    for (const auto& path : ens.paths) {
        std::size_t n = path.x_series.size();
        if (path.defaulted) n = static_cast<std::size_t>(std::floor(*path.default_time * 12));
        if (n < 18) continue;
        const std::vector<double> x(path.x_series.begin(), path.x_series.begin() + n);
        const std::vector<double> th(path.theta_series.begin(), path.theta_series.begin() + n);
        FilterConfig cfg;
        cfg.seed = 3;
        const auto out = run_filter(x, pr.model, pr.signal, cfg);
        total += oracle::rmse(out.theta_hat, th);
        ++used;
    }
    ASSERT_GE(used, 20);
    EXPECT_LT(total / used, prior_sd);
}

TEST(Martingale, ZeroVolatilityIsExactlyZero) {
    auto pr = presets::table4();
    pr.model.sigma = pr.model.sigma_y = pr.model.sigma_z = 0.0;
    const auto x = deterministic_x(pr.model, pr.signal, pr.variant, 2.0, 1.0 / 12, 0.0, 0.0, 0.0);
    FilterConfig cfg;
    cfg.n_particles = 50;
    const auto out = run_filter(x, pr.model, pr.signal, cfg);
    EXPECT_EQ(martingale_residual(out), 0.0);
}

TEST(Martingale, DetectsDriftMisspecification) {
    const auto pr = presets::table4();
    SimConfig sc;
    sc.horizon = 25.0;
    sc.seed = 21;
    sc.x0 = 1.0;
    const auto path = simulate_paths(sc, pr.model, pr.signal).paths[0];
    ASSERT_FALSE(path.defaulted);
    FilterConfig cfg;
    cfg.seed = 2;
    const auto ok = run_filter(path.x_series, pr.model, pr.signal, cfg);
    EXPECT_LT(std::abs(ok.martingale_mean), 3 * ok.martingale_se)
        << ok.martingale_mean << " +- " << ok.martingale_se;
    auto biased = pr.model;
    biased.eta += 2.0;
    const auto bad = run_filter(path.x_series, biased, pr.signal, cfg);
    EXPECT_GT(std::abs(bad.martingale_mean), 3 * bad.martingale_se)
        << bad.martingale_mean << " +- " << bad.martingale_se;
}

TEST(Filter, RejectsBadConfig) {
    FilterConfig cfg;
    cfg.n_particles = 1;
    EXPECT_THROW(run_filter({0.0, 0.1}, ModelParams{}, SignalParams{}, cfg), Error);
    cfg = FilterConfig{};
    EXPECT_THROW(run_filter({0.0}, ModelParams{}, SignalParams{}, cfg), Error);
}
