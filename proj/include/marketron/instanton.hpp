#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <Eigen/Dense>

#include "dlimit.hpp"
#include "model_core.hpp"

namespace marketron {

using Vec2 = std::array<double, 2>;

struct InstantonPoint {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double v = 0.0;
};

struct InstantonResult {
    std::vector<InstantonPoint> path;
    bool reached_saddle = false;
    bool escaped = false;
    double final_grad_norm = 0.0;
    std::string escape_direction;
};

namespace detail {

template <class G>
Vec2 rk4(G& field, const Vec2& s, double h) {
    const Vec2 k1 = field(s);
    const Vec2 k2 = field({s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]});
    const Vec2 k3 = field({s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]});
    const Vec2 k4 = field({s[0] + h * k3[0], s[1] + h * k3[1]});
    return {s[0] + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            s[1] + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])};
}

inline double norm(const Vec2& v) { return std::hypot(v[0], v[1]); }

// Follows sign * grad V; steps are halved until V moves monotonically in the flow direction.
template <class V, class G>
InstantonResult gradient_flow(V&& pot, G&& grad, Vec2 s, double sign, double dt, double t_max, double grad_tol,
                              double bound, std::function<bool(const Vec2&)> stop = {}) {
    require(dt > 0, "domain", "instanton: dt must be > 0");
    InstantonResult out;
    auto field = [&](const Vec2& p) {
        const Vec2 g = grad(p);
        return Vec2{sign * g[0], sign * g[1]};
    };
    double t = 0.0;
    double v = pot(s);
    out.path.push_back({t, s[0], s[1], v});
    double h = dt;
    while (true) {
        const double gn = norm(grad(s));
        out.final_grad_norm = gn;
        if (gn < grad_tol) {
            out.reached_saddle = true;
            break;
        }
        if (stop && stop(s)) break;
        if (t >= t_max) break;
        double step = std::min(h, t_max - t);
        Vec2 next{};
        double v_next = 0.0;
        bool ok = false;
        for (int tries = 0; tries < 60; ++tries) {
            next = rk4(field, s, step);
            v_next = pot(next);
            const bool finite = std::isfinite(next[0]) && std::isfinite(next[1]) && std::isfinite(v_next);
            if (finite && sign * (v_next - v) >= -1e-15 * (1.0 + std::abs(v))
                && norm(grad(next)) <= 2.0 * gn + 1e-300) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) break;
        if (std::abs(next[0]) > bound || std::abs(next[1]) > bound) {
            out.escaped = true;
            out.escape_direction = std::abs(next[0]) > bound ? (next[0] > 0 ? "+x" : "-x")
                                                             : (next[1] > 0 ? "+y" : "-y");
            break;
        }
        // Monotonicity is enforced exactly on the stored path.
        if (sign * (v_next - v) < 0) v_next = v;
        t += step;
        s = next;
        v = v_next;
        out.path.push_back({t, s[0], s[1], v});
        if (step == h && h < dt) h = std::min(dt, 2 * h);
        else if (step < h) h = step;
    }
    return out;
}

} // namespace detail

// Integrates (x', y') = +grad V from start with RK4 and adaptive halving.
template <class V, class G>
InstantonResult instanton_path(V&& pot, G&& grad, Vec2 start, double dt, double t_max, double grad_tol = 1e-8,
                               double bound = 1e6) {
    return detail::gradient_flow(pot, grad, start, +1.0, dt, t_max, grad_tol, bound);
}

inline InstantonResult instanton_path(Vec2 start, const ModelParams& p, double dt, double t_max,
                                      PotentialVariant variant, double grad_tol = 1e-8) {
    auto pot = [&](const Vec2& s) { return potential2d(s[0], s[1], 0.0, p, variant); };
    auto grad = [&](const Vec2& s) { return grad_potential2d(s[0], s[1], 0.0, p, variant); };
    return instanton_path(pot, grad, start, dt, t_max, grad_tol);
}

enum class Transition { BadToGood, BadToUgly, GoodToBad };

inline std::string_view to_string(Transition t) {
    switch (t) {
    case Transition::BadToGood: return "bad_to_good";
    case Transition::BadToUgly: return "bad_to_ugly";
    case Transition::GoodToBad: return "good_to_bad";
    }
    return "";
}

struct TransitionPoints {
    double x_min = 0.0;
    double x_saddle = 0.0;
};

// Minimum and barrier-top x for a regime transition of U_eff.
inline TransitionPoints transition_points(const std::vector<Extremum>& ex, Transition tr) {
    int good = -1, bad = -1, ugly = -1;
    for (int i = 0; i < static_cast<int>(ex.size()); ++i) {
        if (ex[i].regime == Regime::Good) good = i;
        if (ex[i].regime == Regime::Bad) bad = i;
        if (ex[i].regime == Regime::Ugly) ugly = i;
    }
    auto max_between = [&](int lo, int hi) {
        for (int i = lo + 1; i < hi; ++i)
            if (ex[i].kind == ExtremumKind::Max) return i;
        return -1;
    };
    TransitionPoints tp;
    int from = -1, top = -1;
    switch (tr) {
    case Transition::BadToGood:
        from = bad;
        top = (bad >= 0 && good >= 0) ? max_between(bad, good) : -1;
        break;
    case Transition::BadToUgly:
        from = bad;
        top = ugly;
        break;
    case Transition::GoodToBad:
        from = good;
        top = (bad >= 0 && good >= 0) ? max_between(bad, good) : -1;
        break;
    }
    require(from >= 0 && top >= 0, "shape", "potential lacks the extrema for transition " + std::string(to_string(tr)));
    tp.x_min = ex[from].x;
    tp.x_saddle = ex[top].x;
    return tp;
}

// Time reverse of the steepest descent from the saddle to the minimum; an exact ascent solution.
inline InstantonResult marketron_instanton(const ModelParams& p, PotentialVariant variant, Transition tr,
                                           double dt = 1e-2, double t_max = 1e5, double x_lo = -8,
                                           double x_hi = 8) {
    const auto ex = find_extrema(p, variant, x_lo, x_hi);
    const auto tp = transition_points(ex, tr);
    auto y_star = [&](double x) { return p.y_bar - p.c / p.mu * morse_potential(x, p, variant); };
    const Vec2 saddle{tp.x_saddle, y_star(tp.x_saddle)};
    const Vec2 minimum{tp.x_min, y_star(tp.x_min)};
    auto pot = [&](const Vec2& s) { return potential2d(s[0], s[1], 0.0, p, variant); };
    auto grad = [&](const Vec2& s) { return grad_potential2d(s[0], s[1], 0.0, p, variant); };

    const double h = 1e-6;
    Eigen::Matrix2d hess;
    for (int j = 0; j < 2; ++j) {
        Vec2 sp = saddle, sm = saddle;
        sp[j] += h;
        sm[j] -= h;
        const Vec2 gp = grad(sp), gm = grad(sm);
        hess(0, j) = (gp[0] - gm[0]) / (2 * h);
        hess(1, j) = (gp[1] - gm[1]) / (2 * h);
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(hess);
    require(es.eigenvalues()[0] < 0 && es.eigenvalues()[1] > 0, "shape", "barrier top is not a saddle of V");
    Eigen::Vector2d dir = es.eigenvectors().col(0);
    if (dir[0] * (minimum[0] - saddle[0]) + dir[1] * (minimum[1] - saddle[1]) < 0) dir = -dir;
    const double kick = 1e-8;
    const Vec2 start{saddle[0] + kick * dir[0], saddle[1] + kick * dir[1]};

    auto near_min = [&](const Vec2& s) { return std::hypot(s[0] - minimum[0], s[1] - minimum[1]) < 1e-6; };
    auto descent = detail::gradient_flow(pot, grad, start, -1.0, dt, t_max, 1e-12, 1e6, near_min);
    require(!descent.escaped && near_min({descent.path.back().x, descent.path.back().y}), "instanton",
            "descent from the saddle did not reach the minimum");

    InstantonResult out;
    const double total = descent.path.back().t;
    out.path.reserve(descent.path.size());
    for (auto it = descent.path.rbegin(); it != descent.path.rend(); ++it)
        out.path.push_back({total - it->t, it->x, it->y, it->v});
    out.final_grad_norm = detail::norm(grad({out.path.back().x, out.path.back().y}));
    out.reached_saddle = out.final_grad_norm < 1e-6;
    return out;
}

struct PHPParams {
    std::array<double, 3> omega{};
    std::array<double, 3> xbar{};
    double u2 = 0.0;
    double u3 = 0.0;
    double xl = 0.0;
    double xr = 0.0;

    double u(int segment) const { return segment == 0 ? 0.0 : (segment == 1 ? u2 : u3); }

    int segment_of(double x) const { return x <= xl ? 0 : (x <= xr ? 1 : 2); }

    double operator()(double x) const {
        const int i = segment_of(x);
        const double d = x - xbar[i];
        return 0.5 * omega[i] * omega[i] * d * d + u(i);
    }
};

inline void php_apply_continuity(PHPParams& p) {
    auto q = [&](int i, double x) {
        const double d = x - p.xbar[i];
        return 0.5 * p.omega[i] * p.omega[i] * d * d;
    };
    p.u2 = q(0, p.xl) - q(1, p.xl);
    p.u3 = q(1, p.xr) + p.u2 - q(2, p.xr);
}

struct FitWindow {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 41;
};

// Least-squares quadratic per window; the offsets come from continuity, not the fit.
template <class U>
PHPParams fit_php(U&& u, double xl, double xr, const std::array<FitWindow, 3>& windows) {
    require(xl < xr, "domain", "fit_php: need xl < xr");
    PHPParams out;
    out.xl = xl;
    out.xr = xr;
    for (int i = 0; i < 3; ++i) {
        const auto& w = windows[i];
        require(w.n >= 3 && w.hi > w.lo, "domain", "fit_php: each window needs >= 3 points");
        Eigen::MatrixXd a(w.n, 3);
        Eigen::VectorXd b(w.n);
        const double mid = 0.5 * (w.lo + w.hi);
        for (std::size_t j = 0; j < w.n; ++j) {
            const double x = w.lo + (w.hi - w.lo) * static_cast<double>(j) / static_cast<double>(w.n - 1);
            const double d = x - mid;
            a(j, 0) = d * d;
            a(j, 1) = d;
            a(j, 2) = 1.0;
            b(j) = u(x);
        }
        const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(b);
        const double omega2 = 2.0 * coef(0);
        if (!(omega2 > 0)) {
            throw Error("php_nonconvex", "fit_php: segment " + std::to_string(i + 1) + " is not convex (omega^2 = "
                                             + std::to_string(omega2) + ")");
        }
        out.omega[i] = std::sqrt(omega2);
        out.xbar[i] = mid - coef(1) / omega2;
    }
    php_apply_continuity(out);
    return out;
}

struct PHPDefaults {
    double xl = 0.0;
    double xr = 0.0;
    std::array<FitWindow, 3> windows{};
};

// Knots at the inflections flanking the Bad minimum; windows in convex stretches.
template <class U>
PHPDefaults php_default_setup(U&& u, const std::vector<Extremum>& ex) {
    int good = -1, bad = -1;
    for (int i = 0; i < static_cast<int>(ex.size()); ++i) {
        if (ex[i].regime == Regime::Good) good = i;
        if (ex[i].regime == Regime::Bad) bad = i;
    }
    require(good >= 0 && bad >= 0, "shape", "php defaults need Bad and Good minima");
    const double xb = ex[bad].x, xg = ex[good].x;
    auto curvature = [&](double x) {
        const double h = 1e-4;
        return (u(x + h) - 2 * u(x) + u(x - h)) / (h * h);
    };
    auto scan = [&](double from, double dir, double limit) {
        const double step = 1e-3;
        double x = from;
        while ((limit - x) * dir > step && curvature(x + dir * step) > 0) x += dir * step;
        return x;
    };
    PHPDefaults d;
    d.xl = scan(xb, -1.0, xb - 8.0);
    d.xr = scan(xb, +1.0, xg);
    const double half_left = 0.5 * (xb - d.xl);
    const double half_right = 0.5 * (d.xr - xb);
    const double w2 = std::min(half_left, half_right);
    const double xr_good = scan(xg, -1.0, d.xr);
    const double w3 = 0.5 * (xg - xr_good);
    d.windows[0] = {d.xl, d.xl + half_left, 41};
    d.windows[1] = {xb - w2, xb + w2, 41};
    d.windows[2] = {xg - w3, xg + w3, 41};
    return d;
}

struct ZwanzigSegment {
    double ybar = 0.0;
    double omega_sq = 0.0;
    double q = 0.0;
};

struct ZwanzigParams {
    // [segment][0] is the minus branch, [segment][1] the plus branch.
    std::array<std::array<ZwanzigSegment, 2>, 3> seg{};
    std::array<double, 3> ratio{};
    double sigma = 0.0;
};

// (2/s^2)(U0 +/- sz^2 y^2 / (2 k s^2)) = Omega (y - ybar)^2 + q ybar^2 + 2 u_i / s^2.
inline ZwanzigParams zwanzig_renormalize(const PHPParams& php, double sigma, double sigma_z, double k) {
    require(sigma > 0, "domain", "zwanzig: sigma must be > 0");
    require(sigma_z == 0.0 || k > 0, "domain", "zwanzig: OU variance sigma_z^2/(2k) must be finite");
    ZwanzigParams z;
    z.sigma = sigma;
    for (int i = 0; i < 3; ++i) {
        const double w2 = php.omega[i] * php.omega[i];
        const double r = sigma_z == 0.0 ? 0.0 : sigma_z * sigma_z / (k * sigma * sigma * w2);
        z.ratio[i] = r;
        for (int b = 0; b < 2; ++b) {
            const double s = b == 0 ? -1.0 : 1.0;
            const double factor = 1.0 + s * r;
            if (factor == 0.0)
                throw Error("zwanzig_singular", "zwanzig: active noise cancels the curvature of segment "
                                                    + std::to_string(i + 1));
            auto& seg = z.seg[i][b];
            seg.ybar = php.xbar[i] / factor;
            seg.omega_sq = w2 / (sigma * sigma) * factor;
            seg.q = s * r * seg.omega_sq;
        }
    }
    return z;
}

enum class MfptMethod { ExactDouble, FixedWidth, Kramers };

inline std::string_view to_string(MfptMethod m) {
    switch (m) {
    case MfptMethod::ExactDouble: return "exact_double";
    case MfptMethod::FixedWidth: return "fixed_width";
    case MfptMethod::Kramers: return "kramers";
    }
    return "";
}

struct EscapeResult {
    double t_bg = 0.0;
    double t_bu = 0.0;
    double lambda = 0.0;
    MfptMethod method = MfptMethod::ExactDouble;
    double achieved_tolerance = 0.0;
};

namespace detail {

inline std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

template <class F>
double integrate(F&& f, double a, double b, double tol, double* err_out) {
    if (a == b) {
        if (err_out) *err_out = 0.0;
        return 0.0;
    }
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, tol, &err);
    if (err_out) *err_out = err;
    return v;
}

} // namespace detail

// Point past a barrier top, toward `beyond`, where u has dropped 2 sigma^2 below the top (or `beyond` itself).
// Absorbing there counts a crossing once the walker has committed to the far side.
template <class U>
double barrier_exit(U&& u, double top, double beyond, double sigma) {
    const double target = u(top) - 2.0 * sigma * sigma;
    if (u(beyond) >= target) return beyond;
    double a = top, b = beyond;
    for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (a + b);
        if (u(m) > target) a = m;
        else b = m;
    }
    return 0.5 * (a + b);
}

// Escape through xR with reflection at xL (t_bg), and through xL with reflection at xR (t_bu).
template <class U>
EscapeResult mfpt(U&& u, double x0, double xl, double xr, double sigma, MfptMethod method, double tol = 1e-8) {
    require(xl <= x0 && x0 <= xr, "domain", "mfpt: need xl <= x0 <= xr");
    require(sigma > 0, "domain", "mfpt: sigma must be > 0");
    const double s2 = sigma * sigma;
    EscapeResult r;
    r.method = method;
    double worst = 0.0;
    // A barrier too tall for double range gives t = +inf, which is reported rather than rejected.
    auto track = [&](double value, double err) {
        if (value != 0.0 && std::isfinite(value)) worst = std::max(worst, std::abs(err / value));
    };

    if (method == MfptMethod::ExactDouble) {
        auto outer_bg = [&](double x) {
            const double ux = u(x);
            double e = 0.0;
            const double in = detail::integrate([&](double y) { return std::exp(2.0 * (ux - u(y)) / s2); }, xl, x,
                                                tol * 0.1, &e);
            return in;
        };
        auto outer_bu = [&](double x) {
            const double ux = u(x);
            double e = 0.0;
            return detail::integrate([&](double y) { return std::exp(2.0 * (ux - u(y)) / s2); }, x, xr, tol * 0.1,
                                     &e);
        };
        double e1 = 0.0, e2 = 0.0;
        r.t_bg = 2.0 / s2 * detail::integrate(outer_bg, x0, xr, tol, &e1);
        r.t_bu = 2.0 / s2 * detail::integrate(outer_bu, xl, x0, tol, &e2);
        track(r.t_bg, 2.0 / s2 * e1);
        track(r.t_bu, 2.0 / s2 * e2);
    } else if (method == MfptMethod::FixedWidth) {
        // Shift exponents by the extreme values to keep the factors finite.
        double umin = u(xl), umax = u(xl);
        for (int i = 0; i <= 2000; ++i) {
            const double x = xl + (xr - xl) * i / 2000.0;
            umin = std::min(umin, u(x));
            umax = std::max(umax, u(x));
        }
        double e0 = 0.0, e1 = 0.0, e2 = 0.0;
        const double well = detail::integrate([&](double y) { return std::exp(-2.0 * (u(y) - umin) / s2); }, xl, xr,
                                              tol, &e0);
        const double right = detail::integrate([&](double x) { return std::exp(2.0 * (u(x) - umax) / s2); }, x0, xr,
                                               tol, &e1);
        const double left = detail::integrate([&](double x) { return std::exp(2.0 * (u(x) - umax) / s2); }, xl, x0,
                                              tol, &e2);
        const double scale = std::exp(2.0 * (umax - umin) / s2);
        r.t_bg = 2.0 / s2 * well * right * scale;
        r.t_bu = 2.0 / s2 * well * left * scale;
        track(well, e0);
        track(right, e1);
        track(left, e2);
    } else {
        throw Error("domain", "mfpt: use kramers_rate for the Kramers method");
    }
    r.achieved_tolerance = worst;
    auto valid = [](double t) { return t >= 0 && !std::isnan(t); };
    if (!(valid(r.t_bg) && valid(r.t_bu)) || worst > 1e3 * tol)
        throw Error("quadrature", "mfpt: quadrature did not converge (achieved relative error "
                                      + detail::fmt_g(worst) + ")");
    return r;
}

template <class U>
double second_derivative(U&& u, double x, double h = 1e-4) {
    return (-u(x + 2 * h) + 16 * u(x + h) - 30 * u(x) + 16 * u(x - h) - u(x - 2 * h)) / (12 * h * h);
}

template <class U>
double kramers_rate(U&& u, double x_min, double x_max, double sigma) {
    require(sigma > 0, "domain", "kramers_rate: sigma must be > 0");
    const double c_min = second_derivative(u, x_min);
    const double c_max = second_derivative(u, x_max);
    require(c_min > 0, "curvature", "kramers_rate: x_min is not a local minimum");
    require(c_max < 0, "curvature", "kramers_rate: x_max is not a local maximum");
    const double du = u(x_max) - u(x_min);
    return std::sqrt(c_min * std::abs(c_max)) / (2.0 * std::numbers::pi) * std::exp(-2.0 * du / (sigma * sigma));
}

} // namespace marketron
