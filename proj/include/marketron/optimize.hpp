#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <boost/random/sobol.hpp>

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace marketron {

using Point = std::vector<double>;
using Bounds = std::vector<std::pair<double, double>>;

struct Evaluation {
    double loss = std::numeric_limits<double>::infinity();
    double violation = 0.0;

    bool feasible() const { return violation <= 0.0; }
};

using ObjectiveFn = std::function<Evaluation(const Point&)>;

struct IterationRecord {
    std::size_t iteration = 0;
    double best_loss = 0.0;
    double iteration_best = 0.0;
    double spread = 0.0;
};

struct OptimizeResult {
    Point best;
    Evaluation best_eval;
    bool feasible = false;
    std::size_t evaluations = 0;
    std::vector<IterationRecord> history;
};

namespace detail {

inline void check_bounds(const Bounds& b) {
    require(!b.empty(), "config", "optimizer: empty bounds");
    for (const auto& [lo, hi] : b)
        require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, "config", "optimizer: bounds must be finite and ordered");
}

// Tracks the best feasible point, or the best penalized point while nothing is feasible.
struct Incumbent {
    OptimizeResult* r;

    void offer(const Point& x, const Evaluation& e) {
        ++r->evaluations;
        const bool better = (e.feasible() && !r->feasible) ||
                            (e.feasible() == r->feasible && e.loss < r->best_eval.loss);
        if (r->best.empty() || better) {
            r->best = x;
            r->best_eval = e;
            r->feasible = e.feasible();
        }
    }
};

inline std::vector<Evaluation> evaluate_all(const ObjectiveFn& f, const std::vector<Point>& xs, unsigned workers) {
    std::vector<Evaluation> out(xs.size());
    parallel_for(xs.size(), workers, [&](std::size_t i) { out[i] = f(xs[i]); });
    return out;
}

// Penalized comparison: feasible beats infeasible, then lower loss.
inline bool ranks_before(const Evaluation& a, const Evaluation& b) {
    if (a.feasible() != b.feasible()) return a.feasible();
    return a.loss < b.loss;
}

} // namespace detail

struct CEConfig {
    std::size_t iterations = 500;
    std::size_t population = 100;
    double elite_fraction = 0.1;
    double smoothing = 0.7;
    double std_tol = 1e-10;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

// Cross-entropy search with a truncated Gaussian proposal.
inline OptimizeResult cross_entropy_optimize(const ObjectiveFn& f, const Bounds& bounds, const CEConfig& cfg,
                                             const Point& init = {}) {
    detail::check_bounds(bounds);
    require(cfg.population >= 2, "config", "ce: population must be >= 2");
    const std::size_t d = bounds.size();
    const auto n_elite = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.elite_fraction * static_cast<double>(cfg.population))));
    Point mean(d), sd(d);
    for (std::size_t j = 0; j < d; ++j) {
        const auto [lo, hi] = bounds[j];
        mean[j] = init.empty() ? 0.5 * (lo + hi) : std::clamp(init[j], lo, hi);
        sd[j] = 0.5 * (hi - lo);
    }
    OptimizeResult res;
    detail::Incumbent inc{&res};
    if (!init.empty()) inc.offer(mean, f(mean));

    Stream rng = make_stream(cfg.seed, {tag::optimizer, 1});
    std::vector<Point> pop(cfg.population, Point(d));
    std::vector<std::size_t> order(cfg.population);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        for (auto& x : pop) {
            for (std::size_t j = 0; j < d; ++j) {
                const auto [lo, hi] = bounds[j];
                double v = mean[j];
                if (sd[j] > 0) {
                    int tries = 0;
                    do {
                        v = mean[j] + sd[j] * rng.normal();
                    } while ((v < lo || v > hi) && ++tries < 100);
                    if (v < lo || v > hi) v = lo + (hi - lo) * rng.uniform();
                }
                x[j] = v;
            }
        }
        const auto evals = detail::evaluate_all(f, pop, cfg.workers);
        for (std::size_t i = 0; i < pop.size(); ++i) inc.offer(pop[i], evals[i]);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return detail::ranks_before(evals[a], evals[b]); });

        double spread = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0.0;
            for (std::size_t e = 0; e < n_elite; ++e) m += pop[order[e]][j];
            m /= static_cast<double>(n_elite);
            double v = 0.0;
            for (std::size_t e = 0; e < n_elite; ++e) v += (pop[order[e]][j] - m) * (pop[order[e]][j] - m);
            const double s = std::sqrt(v / static_cast<double>(n_elite));
            mean[j] = cfg.smoothing * m + (1 - cfg.smoothing) * mean[j];
            sd[j] = cfg.smoothing * s + (1 - cfg.smoothing) * sd[j];
            const double width = bounds[j].second - bounds[j].first;
            if (width > 0) spread = std::max(spread, sd[j] / width);
        }
        res.history.push_back({it, res.best_eval.loss, evals[order[0]].loss, spread});
        if (spread < cfg.std_tol) break;
    }
    return res;
}

struct DEConfig {
    std::size_t generations = 200;
    std::size_t population = 0;  // 0: 15 * dim capped at 64
    double f_lo = 0.5;
    double f_hi = 1.0;
    double cr = 0.7;
    double tol = 0.0;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

inline std::vector<Point> sobol_points(const Bounds& bounds, std::size_t n) {
    const std::size_t d = bounds.size();
    boost::random::sobol gen(d);
    gen.discard(d);  // skip the origin
    std::vector<Point> pts(n, Point(d));
    const double range = static_cast<double>(gen.max() - gen.min()) + 1.0;
    for (auto& p : pts) {
        for (std::size_t j = 0; j < d; ++j) {
            const double u = static_cast<double>(gen() - gen.min()) / range;
            p[j] = bounds[j].first + u * (bounds[j].second - bounds[j].first);
        }
    }
    return pts;
}

// Differential evolution, best/2/exp, Sobol start with `init` injected as member 0.
inline OptimizeResult differential_evolution_optimize(const ObjectiveFn& f, const Bounds& bounds, const DEConfig& cfg,
                                                      const Point& init = {}) {
    detail::check_bounds(bounds);
    const std::size_t d = bounds.size();
    const std::size_t np = cfg.population ? cfg.population : std::min<std::size_t>(15 * d, 64);
    require(np >= 5, "config", "de: population must be >= 5 for best/2");
    std::vector<Point> pop = sobol_points(bounds, np);
    if (!init.empty()) {
        require(init.size() == d, "config", "de: init dimension mismatch");
        for (std::size_t j = 0; j < d; ++j)
            require(init[j] >= bounds[j].first && init[j] <= bounds[j].second, "config", "de: init outside bounds");
        pop[0] = init;
    }
    OptimizeResult res;
    detail::Incumbent inc{&res};
    auto fit = detail::evaluate_all(f, pop, cfg.workers);
    for (std::size_t i = 0; i < np; ++i) inc.offer(pop[i], fit[i]);

    Stream rng = make_stream(cfg.seed, {tag::optimizer, 2});
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)) % n; };
    std::vector<Point> trials(np, Point(d));
    for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
        const double F = cfg.f_lo + (cfg.f_hi - cfg.f_lo) * rng.uniform();
        std::size_t best = 0;
        for (std::size_t i = 1; i < np; ++i)
            if (detail::ranks_before(fit[i], fit[best])) best = i;
        for (std::size_t i = 0; i < np; ++i) {
            std::size_t r[4];
            for (int k = 0; k < 4; ++k) {
                std::size_t c;
                do {
                    c = pick(np);
                } while (c == i || std::find(r, r + k, c) != r + k);
                r[k] = c;
            }
            Point& t = trials[i];
            t = pop[i];
            std::size_t j = pick(d);
            std::size_t len = 0;
            do {
                const double v = pop[best][j] + F * (pop[r[0]][j] - pop[r[1]][j] + pop[r[2]][j] - pop[r[3]][j]);
                const auto [lo, hi] = bounds[j];
                t[j] = (v < lo || v > hi) ? lo + (hi - lo) * rng.uniform() : v;
                j = (j + 1) % d;
                ++len;
            } while (len < d && rng.uniform() < cfg.cr);
        }
        const auto tf = detail::evaluate_all(f, trials, cfg.workers);
        double iter_best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < np; ++i) {
            inc.offer(trials[i], tf[i]);
            iter_best = std::min(iter_best, tf[i].loss);
            if (!detail::ranks_before(fit[i], tf[i])) {
                pop[i] = trials[i];
                fit[i] = tf[i];
            }
        }
        double mean = 0.0, var = 0.0;
        for (const auto& e : fit) mean += e.loss;
        mean /= static_cast<double>(np);
        for (const auto& e : fit) var += (e.loss - mean) * (e.loss - mean);
        const double spread = std::sqrt(var / static_cast<double>(np));
        res.history.push_back({gen, res.best_eval.loss, iter_best, spread});
        if (cfg.tol > 0 && std::isfinite(mean) && spread <= cfg.tol * std::abs(mean)) break;
    }
    return res;
}

} // namespace marketron
