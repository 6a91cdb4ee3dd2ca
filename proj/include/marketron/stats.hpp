#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "error.hpp"
#include "simulate.hpp"

namespace marketron {

struct SampleMoments {
    double mean = 0.0;
    double sd = 0.0;
    double skew = 0.0;
    double kurt = 0.0;
    bool degenerate = false;
    std::size_t n = 0;
};

// Sample sd uses n - 1; skew and excess kurtosis use central moments.
inline SampleMoments sample_moments(const double* x, std::size_t n) {
    SampleMoments m;
    m.n = n;
    if (n == 0) {
        m.degenerate = true;
        return m;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    m.mean = s / static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - m.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    const double nn = static_cast<double>(n);
    m.sd = n > 1 ? std::sqrt(m2 / (nn - 1)) : 0.0;
    m2 /= nn;
    m3 /= nn;
    m4 /= nn;
    if (m2 == 0.0 || m2 <= 1e-24 * m.mean * m.mean) {
        m.degenerate = true;
        m.sd = 0.0;
        return m;
    }
    m.skew = m3 / std::pow(m2, 1.5);
    m.kurt = m4 / (m2 * m2) - 3.0;
    return m;
}

inline SampleMoments sample_moments(const std::vector<double>& x) { return sample_moments(x.data(), x.size()); }

struct Moments {
    double mean = 0.0;
    double vol = 0.0;
    double skew = 0.0;
    double kurt = 0.0;
    bool degenerate = false;
};

// Annualized: mean * 12, sd * sqrt(12), skew / sqrt(12), excess kurtosis / 12.
inline Moments moments(const double* r, std::size_t n) {
    require(n >= 12, "domain", "moments: need at least 12 monthly returns");
    const auto s = sample_moments(r, n);
    const double sq12 = std::sqrt(12.0);
    return {s.mean * 12.0, s.sd * sq12, s.skew / sq12, s.kurt / 12.0, s.degenerate};
}

inline Moments moments(const std::vector<double>& r) { return moments(r.data(), r.size()); }

inline std::vector<double> diff(const std::vector<double>& x) {
    std::vector<double> d;
    if (x.size() < 2) return d;
    d.reserve(x.size() - 1);
    for (std::size_t i = 1; i < x.size(); ++i) d.push_back(x[i] - x[i - 1]);
    return d;
}

// Biased sample autocorrelation for lags 0..max_lag.
inline std::vector<double> acf(const std::vector<double>& x, std::size_t max_lag) {
    require(x.size() > max_lag + 1, "domain", "acf: series shorter than max_lag + 2");
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double denom = 0.0;
    for (double v : x) denom += (v - mean) * (v - mean);
    require(denom > 0, "acf_undefined", "acf: constant series");
    std::vector<double> out(max_lag + 1);
    out[0] = 1.0;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t + k < x.size(); ++t) s += (x[t] - mean) * (x[t + k] - mean);
        out[k] = s / denom;
    }
    return out;
}

struct HurstResult {
    double h = std::numeric_limits<double>::quiet_NaN();
    double r_squared = 0.0;
    double raw_slope = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> windows;
    std::vector<double> log_rs;
    bool reliable = false;
};

// Anis-Lloyd expected R/S of white noise for window n.
inline double expected_rs(std::size_t n) {
    const double nn = static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 1; i < n; ++i) sum += std::sqrt((nn - i) / static_cast<double>(i));
    const double front = n <= 340 ? std::exp(std::lgamma((nn - 1) / 2) - std::lgamma(nn / 2)) / std::sqrt(std::numbers::pi)
                                  : 1.0 / std::sqrt(nn * std::numbers::pi / 2);
    return front * sum;
}

inline double rescaled_range(const double* x, std::size_t n) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<double>(n);
    double cum = 0.0, lo = 0.0, hi = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - mean;
        cum += d;
        lo = std::min(lo, cum);
        hi = std::max(hi, cum);
        ss += d * d;
    }
    const double s = std::sqrt(ss / static_cast<double>(n));
    return s > 0 ? (hi - lo) / s : std::numeric_limits<double>::quiet_NaN();
}

// R/S over dyadic windows 16..n/4, corrected by the white-noise expectation.
inline HurstResult hurst_rs(const std::vector<double>& x) {
    HurstResult r;
    if (x.size() < 64) return r;
    std::vector<double> lx, ly;
    for (std::size_t w = 16; w <= x.size() / 4; w *= 2) {
        const std::size_t blocks = x.size() / w;
        double acc = 0.0;
        std::size_t used = 0;
        for (std::size_t b = 0; b < blocks; ++b) {
            const double v = rescaled_range(x.data() + b * w, w);
            if (std::isfinite(v)) {
                acc += v;
                ++used;
            }
        }
        if (used == 0) continue;
        const double rs = acc / static_cast<double>(used);
        r.windows.push_back(w);
        r.log_rs.push_back(std::log(rs));
        lx.push_back(std::log(static_cast<double>(w)));
        ly.push_back(std::log(rs) - std::log(expected_rs(w)));
    }
    if (lx.size() < 2) return r;
    const double k = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / k;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / k;
    const double mraw = std::accumulate(r.log_rs.begin(), r.log_rs.end(), 0.0) / k;
    double sxx = 0.0, sxy = 0.0, syy = 0.0, sxr = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
        sxr += (lx[i] - mx) * (r.log_rs[i] - mraw);
    }
    const double slope = sxy / sxx;
    r.h = 0.5 + slope;
    r.raw_slope = sxr / sxx;
    r.r_squared = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
    r.reliable = true;
    return r;
}

// Rolling sd of returns over `window` returns, annualized by sqrt(periods_per_year).
inline std::vector<double> realized_vol(const std::vector<double>& log_prices, std::size_t window,
                                        double periods_per_year) {
    require(window >= 2, "domain", "realized_vol: window must be >= 2");
    const auto r = diff(log_prices);
    require(window <= r.size(), "domain", "realized_vol: window longer than the return series");
    std::vector<double> out;
    out.reserve(r.size() - window + 1);
    const double scale = std::sqrt(periods_per_year);
    for (std::size_t i = 0; i + window <= r.size(); ++i) {
        const auto m = sample_moments(r.data() + i, window);
        out.push_back(m.sd * scale);
    }
    return out;
}

struct QQPoint {
    double theoretical = 0.0;
    double sample = 0.0;
};

inline std::vector<QQPoint> qq_normal(const std::vector<double>& x) {
    require(x.size() >= 20, "domain", "qq_normal: need at least 20 points");
    const auto m = sample_moments(x);
    require(m.sd > 0, "domain", "qq_normal: constant series");
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - m.mean) / m.sd;
    std::sort(z.begin(), z.end());
    const boost::math::normal_distribution<double> nd;
    std::vector<QQPoint> out(z.size());
    const double n = static_cast<double>(z.size());
    for (std::size_t k = 0; k < z.size(); ++k)
        out[k] = {boost::math::quantile(nd, (static_cast<double>(k) + 0.5) / n), z[k]};
    return out;
}

struct TermPoint {
    double t = 0.0;
    std::size_t survivors = 0;
    SampleMoments x;
    SampleMoments y;
    bool gap = false;
};

// Cross-sectional moments per monthly record; defaulted paths drop out from their default time.
inline std::vector<TermPoint> term_structure(const PathEnsemble& ens, std::size_t min_survivors = 100) {
    require(ens.paths.size() >= 1000, "domain", "term_structure: need at least 1000 paths");
    std::vector<std::size_t> idx;
    if (ens.config.record == RecordGrid::Monthly) {
        idx.resize(ens.paths.front().times.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
    } else {
        idx = monthly_indices(ens.config.horizon, ens.config.dt);
    }
    std::vector<TermPoint> out;
    std::vector<double> xs, ys;
    for (std::size_t j : idx) {
        TermPoint tp;
        tp.t = ens.paths.front().times.at(j);
        xs.clear();
        ys.clear();
        for (const auto& p : ens.paths) {
            if (p.defaulted && *p.default_time <= tp.t + 1e-12) continue;
            xs.push_back(p.x_series[j]);
            ys.push_back(p.y_series[j]);
        }
        tp.survivors = xs.size();
        tp.x = sample_moments(xs);
        tp.y = sample_moments(ys);
        tp.gap = tp.survivors < min_survivors || tp.x.degenerate || tp.y.degenerate;
        out.push_back(tp);
    }
    return out;
}

struct RollingResult {
    std::size_t start_index = 0;
    bool truncated = false;
    std::vector<std::size_t> index;
    std::vector<Moments> market;
    std::vector<Moments> model;
};

// runner(i, history) returns history plus `ahead` model log-prices.
using ModelRunner = std::function<std::vector<double>(std::size_t, const std::vector<double>&)>;

inline RollingResult rolling_predictive(const std::vector<double>& market, const ModelRunner& runner,
                                        std::size_t window = 36, std::size_t ahead = 3) {
    require(window >= 2, "domain", "rolling_predictive: window must be >= 2");
    RollingResult out;
    out.start_index = window - 1;
    if (market.size() < window + ahead) {
        out.truncated = true;
        return out;
    }
    for (std::size_t i = window - 1; i + ahead < market.size(); ++i) {
        const std::vector<double> hist(market.begin() + static_cast<std::ptrdiff_t>(i + 1 - window),
                                       market.begin() + static_cast<std::ptrdiff_t>(i + 1));
        const std::vector<double> mk(market.begin() + static_cast<std::ptrdiff_t>(i + 1 - window),
                                     market.begin() + static_cast<std::ptrdiff_t>(i + 1 + ahead));
        const auto md = runner(i, hist);
        require(md.size() == mk.size(), "domain", "rolling_predictive: runner returned the wrong length");
        out.index.push_back(i + ahead);
        out.market.push_back(moments(diff(mk)));
        out.model.push_back(moments(diff(md)));
    }
    return out;
}

struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& x, std::size_t bins) {
    require(bins >= 1 && !x.empty(), "domain", "histogram: need data and >= 1 bin");
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
    h.counts.assign(bins, 0);
    for (double v : x) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
        h.counts[std::min(b, bins - 1)]++;
    }
    return h;
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size() && a.size() >= 2, "domain", "correlation: length mismatch");
    const auto ma = sample_moments(a), mb = sample_moments(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma.mean) * (b[i] - mb.mean);
    const double denom = (static_cast<double>(a.size()) - 1) * ma.sd * mb.sd;
    return denom > 0 ? s / denom : 0.0;
}

} // namespace marketron
