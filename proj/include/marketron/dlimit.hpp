#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "model_core.hpp"

namespace marketron {

struct FlowAuxiliaries {
    double i_t = 0.0;
    double j_t = 0.0;
    double theta_star = 0.0;
};

// Deterministic y(t) = I(t) - J(t)(e^{-x} - g e^{-2x}/2), signal frozen at theta*.
inline FlowAuxiliaries flow_aux(double t, const ModelParams& p, const SignalParams& sig, ThetaStarMode mode,
                                double y0, double theta0 = 0.0) {
    require(p.mu >= 0, "domain", "flow_aux: mu must be >= 0");
    FlowAuxiliaries a;
    a.theta_star = mode == ThetaStarMode::Theta0 ? theta0 : p.theta_hat;
    const double h = signal_eval(a.theta_star, t, sig).h;
    if (p.mu < 1e-12) {
        a.i_t = y0 + p.v * h * t;
        a.j_t = p.c * t;
        return a;
    }
    const double decay = std::exp(-p.mu * t);
    const double grow = -std::expm1(-p.mu * t);
    a.i_t = (p.y_bar + p.v * h / p.mu) * grow + y0 * decay;
    a.j_t = p.c * grow / p.mu;
    return a;
}

inline double dlimit_y(double x, double t, const ModelParams& p, const SignalParams& sig, ThetaStarMode mode,
                       double y0, double theta0 = 0.0) {
    const auto a = flow_aux(t, p, sig, mode, y0, theta0);
    const double e = std::exp(-x);
    return a.i_t - a.j_t * (e - 0.5 * p.g * e * e);
}

inline double eff_potential_1d(double x, const ModelParams& p, PotentialVariant variant) {
    require(p.mu > 0, "domain", "eff_potential_1d: mu must be > 0");
    const double vm = morse_potential(x, p, variant);
    return -p.eta * x + p.c * p.y_bar * vm - 0.5 * p.c * p.c / p.mu * vm * vm;
}

inline double eff_potential_1d_grad(double x, const ModelParams& p, PotentialVariant variant) {
    require(p.mu > 0, "domain", "eff_potential_1d: mu must be > 0");
    const double vm = morse_potential(x, p, variant);
    const double dvm = morse_grad(x, p, variant);
    return -p.eta + p.c * p.y_bar * dvm - p.c * p.c / p.mu * vm * dvm;
}

// A z^4 + B z^3 + C z^2 + D z + E, the x-drift written in z = e^{-x}.
struct QuarticCoeffs {
    double a = 0.0;
    double b = 0.0;
    double c4 = 0.0;
    double d = 0.0;
    double e = 0.0;
    double t = 0.0;
    ThetaStarMode theta_star_mode = ThetaStarMode::Theta0;

    std::array<double, 5> as_array() const { return {a, b, c4, d, e}; }

    double scale() const {
        return std::max({std::abs(a), std::abs(b), std::abs(c4), std::abs(d), std::abs(e)});
    }

    double operator()(double z) const { return (((a * z + b) * z + c4) * z + d) * z + e; }
};

inline QuarticCoeffs quartic_from(double a, double b, double c, double d, double e) {
    QuarticCoeffs q;
    q.a = a; q.b = b; q.c4 = c; q.d = d; q.e = e;
    return q;
}

inline QuarticCoeffs quartic_coeffs(double t, const ModelParams& p, const SignalParams& sig, ThetaStarMode mode,
                                    double y0, double theta0 = 0.0) {
    const auto aux = flow_aux(t, p, sig, mode, y0, theta0);
    const double eta_bar = p.eta + p.v * signal_eval(aux.theta_star, t, sig).f;
    QuarticCoeffs q;
    q.a = -0.5 * p.g * p.g * p.c * aux.j_t;
    q.b = 1.5 * p.g * p.c * aux.j_t;
    q.c4 = -p.c * (p.g * aux.i_t + aux.j_t);
    q.d = p.c * aux.i_t;
    q.e = eta_bar;
    q.t = t;
    q.theta_star_mode = mode;
    return q;
}

struct QuarticInvariants {
    double delta = 0.0;
    double p = 0.0;
    double dd = 0.0;
    double delta0 = 0.0;
};

inline bool leading_is_zero(const QuarticCoeffs& q) {
    return std::abs(q.a) <= 1e-14 * std::max(1.0, q.scale());
}

inline QuarticInvariants quartic_invariants(const QuarticCoeffs& q) {
    require(!leading_is_zero(q), "degenerate", "quartic_invariants: leading coefficient is zero");
    const double a = q.a, b = q.b, c = q.c4, d = q.d, e = q.e;
    QuarticInvariants inv;
    inv.delta = 256 * a * a * a * e * e * e - 192 * a * a * b * d * e * e - 128 * a * a * c * c * e * e
              + 144 * a * a * c * d * d * e - 27 * a * a * d * d * d * d + 144 * a * b * b * c * e * e
              - 6 * a * b * b * d * d * e - 80 * a * b * c * c * d * e + 18 * a * b * c * d * d * d
              + 16 * a * c * c * c * c * e - 4 * a * c * c * c * d * d - 27 * b * b * b * b * e * e
              + 18 * b * b * b * c * d * e - 4 * b * b * b * d * d * d - 4 * b * b * c * c * c * e
              + b * b * c * c * d * d;
    inv.p = 8 * a * c - 3 * b * b;
    inv.dd = 64 * a * a * a * e - 16 * a * a * c * c + 16 * a * b * b * c - 16 * a * a * b * d - 3 * b * b * b * b;
    inv.delta0 = c * c - 3 * b * d + 12 * a * e;
    return inv;
}

enum class ShapeCategory { FourDistinct, DoublePlusTwo, TwoRealTwoComplex, NoRealAdmissible, Degenerate };

inline std::string_view to_string(ShapeCategory c) {
    switch (c) {
    case ShapeCategory::FourDistinct: return "FourDistinct";
    case ShapeCategory::DoublePlusTwo: return "DoublePlusTwo";
    case ShapeCategory::TwoRealTwoComplex: return "TwoRealTwoComplex";
    case ShapeCategory::NoRealAdmissible: return "NoRealAdmissible";
    case ShapeCategory::Degenerate: return "Degenerate";
    }
    return "Degenerate";
}

struct ShapeClass {
    int n_real_roots = 0;
    int n_admissible = 0;
    ShapeCategory category = ShapeCategory::Degenerate;
    std::vector<double> real_roots;
    QuarticInvariants invariants;
};

namespace detail {

struct RootPair {
    double re;
    double im;
};

// Companion-matrix eigenvalues of c[0] z^n + ... + c[n], c[0] != 0.
inline std::vector<RootPair> poly_roots(const std::vector<double>& c) {
    const int n = static_cast<int>(c.size()) - 1;
    std::vector<RootPair> out;
    if (n < 1) return out;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) m(0, j) = -c[j + 1] / c[0];
    for (int i = 1; i < n; ++i) m(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    for (int i = 0; i < n; ++i) out.push_back({es.eigenvalues()[i].real(), es.eigenvalues()[i].imag()});
    std::sort(out.begin(), out.end(), [](const RootPair& l, const RootPair& r) {
        return std::abs(l.im) < std::abs(r.im);
    });
    return out;
}

inline std::vector<double> take_real(const std::vector<RootPair>& roots, int n_real) {
    std::vector<double> r;
    for (int i = 0; i < n_real && i < static_cast<int>(roots.size()); ++i) r.push_back(roots[i].re);
    std::sort(r.begin(), r.end());
    return r;
}

inline int count_positive(const std::vector<double>& r) {
    return static_cast<int>(std::count_if(r.begin(), r.end(), [](double z) { return z > 0; }));
}

} // namespace detail

inline double delta_tolerance(const QuarticCoeffs& q) {
    const double s = std::max(1.0, q.scale());
    return 1e-10 * std::pow(s, 6);
}

inline ShapeClass classify_roots(const QuarticCoeffs& q) {
    ShapeClass sc;
    if (leading_is_zero(q)) {
        // Reduced polynomial: drop vanishing leading terms.
        std::vector<double> c = {q.b, q.c4, q.d, q.e};
        const double tol = 1e-14 * std::max(1.0, q.scale());
        while (!c.empty() && std::abs(c.front()) <= tol) c.erase(c.begin());
        sc.category = ShapeCategory::Degenerate;
        if (c.size() >= 2) {
            const auto roots = detail::poly_roots(c);
            for (const auto& r : roots) {
                if (std::abs(r.im) <= 1e-9 * (1.0 + std::abs(r.re))) sc.real_roots.push_back(r.re);
            }
            std::sort(sc.real_roots.begin(), sc.real_roots.end());
        }
        sc.n_real_roots = static_cast<int>(sc.real_roots.size());
        sc.n_admissible = detail::count_positive(sc.real_roots);
        return sc;
    }

    sc.invariants = quartic_invariants(q);
    const auto& inv = sc.invariants;
    const auto roots = detail::poly_roots({q.a, q.b, q.c4, q.d, q.e});
    const double tol = delta_tolerance(q);
    if (std::abs(inv.delta) <= tol) {
        if (inv.p < 0 && inv.dd < 0 && inv.delta0 != 0) {
            sc.category = ShapeCategory::DoublePlusTwo;
            auto r = detail::take_real(roots, 4);
            // Merge the closest pair into the double root.
            std::size_t best = 0;
            for (std::size_t i = 1; i + 1 < r.size(); ++i)
                if (r[i + 1] - r[i] < r[best + 1] - r[best]) best = i;
            r[best] = 0.5 * (r[best] + r[best + 1]);
            r.erase(r.begin() + static_cast<std::ptrdiff_t>(best) + 1);
            sc.real_roots = r;
        } else {
            sc.category = ShapeCategory::Degenerate;
            for (const auto& r : roots)
                if (std::abs(r.im) <= 1e-6 * (1.0 + std::abs(r.re))) sc.real_roots.push_back(r.re);
            std::sort(sc.real_roots.begin(), sc.real_roots.end());
        }
    } else if (inv.delta > 0) {
        if (inv.p < 0 && inv.dd < 0) {
            sc.category = ShapeCategory::FourDistinct;
            sc.real_roots = detail::take_real(roots, 4);
        } else {
            sc.category = ShapeCategory::NoRealAdmissible;
        }
    } else {
        sc.category = ShapeCategory::TwoRealTwoComplex;
        sc.real_roots = detail::take_real(roots, 2);
    }
    sc.n_real_roots = static_cast<int>(sc.real_roots.size());
    sc.n_admissible = detail::count_positive(sc.real_roots);
    return sc;
}

enum class ShapeRequirement { Strict, Relaxed };

struct ShapeReport {
    double t = 0.0;
    ThetaStarMode mode = ThetaStarMode::Theta0;
    QuarticCoeffs coeffs;
    ShapeClass shape;
    FlowAuxiliaries aux;
    double eta_bar = 0.0;
    // Sign conventions: a constraint holds when its margin is < 0 (delta: > 0).
    double margin_p = 0.0;
    double margin_delta = 0.0;
    double margin_dd = 0.0;
    // Reduced forms as printed in the original derivation; diagnostic only.
    double reduced_first = 0.0;
    double reduced_third = 0.0;
    bool four_real = false;
    bool relaxed_two_root = false;
    bool relaxed_three_root = false;
    bool feasible = false;
    double violation = 0.0;
    double advisory_ratio = 0.0;
};

inline ShapeReport shape_constraint(double t, const ModelParams& p, const SignalParams& sig, ThetaStarMode mode,
                                    double y0, ShapeRequirement req = ShapeRequirement::Relaxed,
                                    double theta0 = 0.0) {
    ShapeReport r;
    r.t = t;
    r.mode = mode;
    r.aux = flow_aux(t, p, sig, mode, y0, theta0);
    r.coeffs = quartic_coeffs(t, p, sig, mode, y0, theta0);
    r.eta_bar = r.coeffs.e;
    r.shape = classify_roots(r.coeffs);
    const double I = r.aux.i_t, J = r.aux.j_t, g = p.g, c = p.c;
    r.reduced_first = J * (g * I - J);
    r.reduced_third = 8 * c * J * (g * I + J) + c * c * std::pow(g * I + 2 * J, 3) - 8 * g * g * r.eta_bar * J;

    const double s = std::max(1.0, r.coeffs.scale());
    if (!leading_is_zero(r.coeffs)) {
        const auto& inv = r.shape.invariants;
        r.margin_p = inv.p / (s * s);
        r.margin_delta = inv.delta / std::pow(s, 6);
        r.margin_dd = inv.dd / std::pow(s, 4);
    } else {
        // g -> 0: the drift is quadratic in z; only its discriminant matters.
        const double disc = r.coeffs.d * r.coeffs.d - 4 * r.coeffs.c4 * r.coeffs.e;
        r.margin_p = -J * J;
        r.margin_delta = disc / (s * s);
        r.margin_dd = -1.0;
    }
    const auto cat = r.shape.category;
    r.four_real = cat == ShapeCategory::FourDistinct;
    r.relaxed_two_root = cat == ShapeCategory::TwoRealTwoComplex;
    r.relaxed_three_root = cat == ShapeCategory::DoublePlusTwo;
    if (req == ShapeRequirement::Strict) {
        r.feasible = r.four_real;
    } else {
        r.feasible = r.four_real || r.relaxed_two_root || r.relaxed_three_root
                  || (cat == ShapeCategory::Degenerate && r.shape.n_real_roots > 0);
    }

    auto pos = [](double m) { return m > 0 ? m : 0.0; };
    const double strict_violation = pos(r.margin_p) * pos(r.margin_p) + pos(-r.margin_delta) * pos(-r.margin_delta)
                                  + pos(r.margin_dd) * pos(r.margin_dd);
    if (r.feasible) {
        r.violation = 0.0;
    } else if (req == ShapeRequirement::Strict) {
        r.violation = std::max(strict_violation, 1e-12);
    } else {
        // Cheapest way out of the no-real-root region: push delta through zero, or fix P and D.
        const double via_delta = r.margin_delta * r.margin_delta;
        r.violation = std::max(std::min(via_delta, strict_violation), 1e-12);
    }

    const double growth = p.mu > 0 ? std::sqrt(std::expm1(2 * p.mu * t) / (2 * p.mu)) : std::sqrt(t);
    const double noise_scale = p.sigma_y * growth;
    r.advisory_ratio = noise_scale > 0 ? y0 / noise_scale : std::numeric_limits<double>::infinity();
    return r;
}

enum class ExtremumKind { Min, Max };
enum class Regime { None, Good, Bad, Ugly };

inline std::string_view to_string(ExtremumKind k) { return k == ExtremumKind::Min ? "min" : "max"; }

inline std::string_view to_string(Regime r) {
    switch (r) {
    case Regime::Good: return "good";
    case Regime::Bad: return "bad";
    case Regime::Ugly: return "ugly";
    case Regime::None: return "";
    }
    return "";
}

struct Extremum {
    double x = 0.0;
    ExtremumKind kind = ExtremumKind::Min;
    Regime regime = Regime::None;
};

// Roots of du on [lo, hi] via dense sign scan and bisection, typed by the second difference of u.
template <class U, class DU>
    requires std::invocable<U&, double> && std::invocable<DU&, double>
std::vector<Extremum> find_extrema(U&& u, DU&& du, double lo, double hi, std::size_t n_scan = 4000) {
    require(lo < hi, "domain", "find_extrema: empty range");
    std::vector<Extremum> out;
    const double step = (hi - lo) / static_cast<double>(n_scan);
    double x_prev = lo;
    double d_prev = du(lo);
    for (std::size_t i = 1; i <= n_scan; ++i) {
        const double x = lo + step * static_cast<double>(i);
        const double d = du(x);
        bool bracket = (d_prev < 0 && d > 0) || (d_prev > 0 && d < 0);
        if (bracket) {
            double a = x_prev, b = x, fa = d_prev;
            for (int it = 0; it < 200 && b - a > 1e-14 * (1.0 + std::abs(a)); ++it) {
                const double m = 0.5 * (a + b);
                const double fm = du(m);
                if ((fm < 0) == (fa < 0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            const double root = 0.5 * (a + b);
            const double h = 1e-4;
            const double second = u(root + h) - 2 * u(root) + u(root - h);
            ExtremumKind kind;
            if (second > 0) kind = ExtremumKind::Min;
            else if (second < 0) kind = ExtremumKind::Max;
            else kind = d_prev < 0 ? ExtremumKind::Min : ExtremumKind::Max;
            out.push_back({root, kind, Regime::None});
        }
        x_prev = x;
        d_prev = d;
    }

    // Good = rightmost min, Bad = next min to its left, Ugly = max left of Bad.
    int good = -1, bad = -1;
    for (int i = static_cast<int>(out.size()) - 1; i >= 0; --i) {
        if (out[i].kind != ExtremumKind::Min) continue;
        if (good < 0) good = i;
        else if (bad < 0) bad = i;
    }
    if (good >= 0) out[good].regime = Regime::Good;
    if (bad >= 0) {
        out[bad].regime = Regime::Bad;
        for (int i = bad - 1; i >= 0; --i) {
            if (out[i].kind == ExtremumKind::Max) {
                out[i].regime = Regime::Ugly;
                break;
            }
        }
    }
    return out;
}

inline std::vector<Extremum> find_extrema(const ModelParams& p, PotentialVariant variant, double lo = -8.0,
                                          double hi = 8.0) {
    return find_extrema([&](double x) { return eff_potential_1d(x, p, variant); },
                        [&](double x) { return eff_potential_1d_grad(x, p, variant); }, lo, hi);
}

} // namespace marketron
