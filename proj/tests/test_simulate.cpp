#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include <marketron/dlimit.hpp>
#include <marketron/simulate.hpp>

using namespace marketron;

namespace {

struct MeanVar {
    double mean = 0.0;
    double var = 0.0;
};

MeanVar mean_var(const std::vector<double>& v) {
    MeanVar m;
    for (double a : v) m.mean += a;
    m.mean /= static_cast<double>(v.size());
    for (double a : v) m.var += (a - m.mean) * (a - m.mean);
    m.var /= static_cast<double>(v.size() - 1);
    return m;
}

} // namespace

TEST(StepEuler, ZeroNoiseAtRestIsStationary) {
    ModelParams p;
    p.mu = 0.5;
    p.y_bar = 0.3;
    p.k = 2.0;
    p.theta_hat = 1.0;
    const State s{0.4, 0.3, 1.0, 0.0};
    const auto r = step_euler(s, 0.01, p, SignalParams{}, {0.7, -1.2, 0.4});
    EXPECT_EQ(r.state.x, s.x);
    EXPECT_EQ(r.state.y, s.y);
    EXPECT_EQ(r.state.theta, s.theta);
    EXPECT_DOUBLE_EQ(r.state.t, 0.01);
    EXPECT_FALSE(r.escaped);
}

TEST(StepEuler, OneStepHandExpansion) {
    const auto pr = presets::table1();
    const auto& p = pr.model;
    const auto& s = pr.signal;
    const double dt = 1.0 / 252.0, sq = std::sqrt(dt);
    const State st{0.0, p.y_bar, p.theta_hat, 0.0};
    const auto r = step_euler(st, dt, p, s, {1.0, 1.0, 1.0});

    const double a1 = s.k1x * std::cos(s.k2x), a2 = s.k1y * std::sin(s.k2y);
    const double f = a1 / (1 + std::exp(-s.b1 * p.theta_hat));
    const double h = a2 / (1 + std::exp(-s.b2 * p.theta_hat));
    const double vm_grad0 = -(1 - p.g / (1 + p.epsilon * p.g));
    const double x1 = (p.v * f + p.eta - p.c * p.y_bar * vm_grad0) * dt + p.sigma * sq;
    const double y1 = p.y_bar + (p.v * h + 0.0 - p.c * 0.0) * dt + p.sigma_y * sq;
    const double th1 = p.theta_hat + 0.0 + p.sigma_z * sq;
    EXPECT_NEAR(r.state.x, x1, 1e-14);
    EXPECT_NEAR(r.state.y, y1, 1e-14);
    EXPECT_NEAR(r.state.theta, th1, 1e-14);
}

TEST(StepEuler, FlagsNonFiniteAsEscape) {
    ModelParams p = presets::table1().model;
    const auto r = step_euler({0.0, 0.0, 0.0, 0.0}, 0.01, p, SignalParams{}, {NAN, 0.0, 0.0});
    EXPECT_TRUE(r.escaped);
}

TEST(Simulate, OuMeanAndVarianceMatchClosedForm) {
    ModelParams p;
    p.k = 1.3;
    p.theta_hat = 0.8;
    p.sigma_z = 0.6;
    SimConfig cfg;
    cfg.dt = 1.0 / 252.0;
    cfg.horizon = 2.0;
    cfg.n_paths = 10000;
    cfg.seed = 42;
    cfg.theta0 = -0.5;
    cfg.workers = 4;
    const auto ens = simulate_paths(cfg, p, SignalParams{});
    std::vector<double> th;
    for (const auto& path : ens.paths) th.push_back(path.theta_series.back());
    const auto mv = mean_var(th);
    const double T = cfg.horizon;
    const double mean = p.theta_hat + (cfg.theta0 - p.theta_hat) * std::exp(-p.k * T);
    const double var = p.sigma_z * p.sigma_z / (2 * p.k) * (1 - std::exp(-2 * p.k * T));
    const double n = static_cast<double>(th.size());
    EXPECT_LT(std::abs(mv.mean - mean), 3 * std::sqrt(var / n) + 2 * cfg.dt);
    EXPECT_LT(std::abs(mv.var - var), 3 * var * std::sqrt(2.0 / (n - 1)) + 2 * cfg.dt * var);

    // Noise-free theta converges to the OU mean with O(dt) error.
    p.sigma_z = 0.0;
    cfg.n_paths = 1;
    const auto det = simulate_paths(cfg, p, SignalParams{});
    EXPECT_NEAR(det.paths[0].theta_series.back(), mean, 2 * cfg.dt * std::abs(cfg.theta0 - p.theta_hat));
}

TEST(Simulate, FixedPointTrajectoryIsConstant) {
    const auto pr = presets::fig4();
    auto p = pr.model;
    p.sigma = p.sigma_y = p.sigma_z = 0.0;
    const auto ex = find_extrema(p, pr.variant, -8, 8);
    ASSERT_FALSE(ex.empty());
    const double x = ex.back().x;
    SimConfig cfg;
    cfg.horizon = 3.0;
    cfg.x0 = x;
    cfg.y0 = p.y_bar - p.c / p.mu * morse_potential(x, p, pr.variant);
    cfg.theta0 = p.theta_hat;
    cfg.variant = pr.variant;
    const auto ens = simulate_paths(cfg, p, pr.signal);
    for (std::size_t i = 0; i < ens.paths[0].x_series.size(); ++i) {
        EXPECT_NEAR(ens.paths[0].x_series[i], cfg.x0, 1e-12);
        EXPECT_NEAR(ens.paths[0].y_series[i], cfg.y0, 1e-12);
    }
}

TEST(Simulate, DeterministicAcrossRunsWorkersAndOrder) {
    const auto pr = presets::table1();
    SimConfig cfg;
    cfg.horizon = 1.0;
    cfg.n_paths = 64;
    cfg.seed = 9;
    cfg.workers = 1;
    const auto a = simulate_paths(cfg, pr.model, pr.signal);
    cfg.workers = 5;
    const auto b = simulate_paths(cfg, pr.model, pr.signal);
    cfg.n_paths = 200;
    const auto c = simulate_paths(cfg, pr.model, pr.signal);
    for (std::size_t i = 0; i < a.paths.size(); ++i) {
        EXPECT_EQ(a.paths[i].x_series, b.paths[i].x_series);
        EXPECT_EQ(a.paths[i].y_series, b.paths[i].y_series);
        EXPECT_EQ(a.paths[i].theta_series, c.paths[i].theta_series);
        EXPECT_EQ(a.paths[i].x_series, c.paths[i].x_series);
    }
    cfg.seed = 10;
    const auto d = simulate_paths(cfg, pr.model, pr.signal);
    EXPECT_NE(a.paths[0].x_series, d.paths[0].x_series);
}

TEST(Simulate, DefaultedPathsFreezeAtBarrier) {
    const auto pr = presets::table1();
    SimConfig cfg;
    cfg.horizon = 5.0;
    cfg.n_paths = 50;
    cfg.seed = 1;
    const auto ens = simulate_paths(cfg, pr.model, pr.signal);
    std::size_t seen = 0;
    for (const auto& path : ens.paths) {
        ASSERT_EQ(path.times.size(), path.x_series.size());
        ASSERT_EQ(path.times.size(), path.y_series.size());
        ASSERT_EQ(path.times.size(), path.theta_series.size());
        if (!path.defaulted) continue;
        ++seen;
        ASSERT_TRUE(path.default_time.has_value());
        for (std::size_t i = 0; i < path.times.size(); ++i) {
            if (path.times[i] >= *path.default_time) {
                EXPECT_EQ(path.x_series[i], cfg.default_barrier);
            } else {
                EXPECT_GT(path.x_series[i], cfg.default_barrier);
            }
        }
    }
    EXPECT_GT(seen, 0u);
}

TEST(Simulate, ValidationErrors) {
    SimConfig cfg;
    cfg.n_paths = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.n_paths = 1;
    cfg.dt = 0.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.dt = 0.1;
    cfg.horizon = 0.05;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.horizon = 1.0;
    cfg.default_barrier = 0.5;
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(AggregateMonthly, GridArithmetic) {
    EXPECT_EQ(monthly_indices(1.0, 1.0 / 252.0).size(), 13u);
    EXPECT_EQ(monthly_indices(24.8, 1.0 / 252.0).size(), 298u);
    const auto id = monthly_indices(2.0, 1.0 / 12.0);
    for (std::size_t i = 0; i < id.size(); ++i) EXPECT_EQ(id[i], i);
    EXPECT_THROW(monthly_indices(0.05, 1.0 / 252.0), Error);
}

TEST(AggregateMonthly, LinearPathSampledExactly) {
    ModelParams p;
    p.eta = 1.0;
    SimConfig cfg;
    cfg.dt = 1.0 / 252.0;
    cfg.horizon = 2.0;
    cfg.record = RecordGrid::Full;
    const auto path = simulate_path(cfg, p, SignalParams{}, 0, {0.0, 0.0, 0.0, 0.0});
    const auto m = aggregate_monthly(path, cfg);
    ASSERT_EQ(m.size(), 25u);
    for (std::size_t k = 0; k < m.size(); ++k) EXPECT_NEAR(m[k], k / 12.0, 1e-12);

    cfg.dt = 1.0 / 12.0;
    const auto monthly = simulate_path(cfg, p, SignalParams{}, 0, {0.0, 0.0, 0.0, 0.0});
    EXPECT_EQ(aggregate_monthly(monthly, cfg), monthly.x_series);

    cfg.record = RecordGrid::Monthly;
    cfg.dt = 1.0 / 252.0;
    const auto rec = simulate_path(cfg, p, SignalParams{}, 0, {0.0, 0.0, 0.0, 0.0});
    ASSERT_EQ(rec.x_series.size(), m.size());
    for (std::size_t k = 0; k < m.size(); ++k) EXPECT_EQ(rec.x_series[k], m[k]);
}

TEST(DefaultIntensity, ClosedForm) {
    EXPECT_EQ(default_intensity(0, 100, 5.0).lambda, 0.0);
    const auto d = default_intensity(450, 10000, 24.8);
    EXPECT_NEAR(d.lambda, -std::log(1 - 0.045) / 24.8, 1e-15);
    EXPECT_NEAR(d.bps, 18.57, 0.01);
    const double frac = 1 - std::exp(-1.0);
    EXPECT_NEAR(-std::log1p(-frac) / 1.0, 1.0, 1e-15);
    const auto all = default_intensity(7, 7, 1.0);
    EXPECT_TRUE(all.infinite);
    EXPECT_THROW(default_intensity(0, 0, 1.0), Error);
}

namespace {

struct BiasCheck {
    double coarse = 0.0;
    double fine = 0.0;
    double se = 0.0;
};

// Coupled coarse/fine Euler paths share Brownian increments, so the mean difference is the discretization bias.
BiasCheck halving_bias(double T, double dt) {
    const auto pr = presets::table1();
    const auto& p = pr.model;
    const std::size_t n = 10000;
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));
    const double x0 = std::log(1394.46 / 1000.0);
    std::vector<double> coarse(n), fine(n);
    parallel_for(n, 4, [&](std::size_t i) {
        Stream rng = make_stream(77, {tag::path, i});
        State c{x0, 0, 0, 0}, f{x0, 0, 0, 0};
        bool c_dead = false, f_dead = false;
        for (std::size_t k = 0; k < steps; ++k) {
            std::array<double, 3> w1{}, w2{}, wc{};
            for (int j = 0; j < 3; ++j) {
                w1[j] = rng.normal();
                w2[j] = rng.normal();
                wc[j] = (w1[j] + w2[j]) / std::sqrt(2.0);
            }
            if (!c_dead) {
                c = step_euler(c, dt, p, pr.signal, wc).state;
                c_dead = !(c.x > -10);
            }
            if (!f_dead) {
                f = step_euler(f, dt / 2, p, pr.signal, w1).state;
                if (f.x > -10) f = step_euler(f, dt / 2, p, pr.signal, w2).state;
                f_dead = !(f.x > -10);
            }
        }
        coarse[i] = c_dead ? -10.0 : c.x;
        fine[i] = f_dead ? -10.0 : f.x;
    });
    const auto mc = mean_var(coarse), mf = mean_var(fine);
    return {mc.mean, mf.mean, std::sqrt(mc.var / static_cast<double>(n))};
}

} // namespace

// At dt = 1/252 the bias stays below the MC error before the Table-1 collapse (t < ~0.7y) and after it;
// inside the collapse window a finer step is needed.
TEST(Simulate, HalvingDtBiasBelowMonteCarloErrorBeforeCollapse) {
    for (double T : {0.25, 0.5, 2.0}) {
        const auto b = halving_bias(T, 1.0 / 252.0);
        EXPECT_LT(std::abs(b.coarse - b.fine), b.se) << "T=" << T << " coarse " << b.coarse << " fine " << b.fine;
    }
}

TEST(Simulate, HalvingDtBiasBelowMonteCarloErrorThroughCollapseAtFineStep) {
    const auto b = halving_bias(1.0, 1.0 / 1008.0);
    EXPECT_LT(std::abs(b.coarse - b.fine), b.se) << "coarse " << b.coarse << " fine " << b.fine;
}
