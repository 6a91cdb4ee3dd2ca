#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "error.hpp"
#include "params.hpp"

namespace marketron {

// Below this x, e^{-x} is close to overflow; potentials saturate there.
inline constexpr double kSaturationX = -700.0;

struct State {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    double t = 0.0;
};

struct PotentialValue {
    double value = 0.0;
    bool saturated = false;
};

// V_M(x) = -int_0^x e^{-k} (1 - g / (e^k + eps g)) dk in closed form.
inline PotentialValue morse_exact_checked(double x, double g, double epsilon) {
    require(std::isfinite(x), "domain", "morse_exact: non-finite x");
    require(g >= 0, "domain", "morse_exact: g must be >= 0");
    require(epsilon > 0 && epsilon <= 1, "domain", "morse_exact: epsilon must lie in (0, 1]");
    PotentialValue out;
    if (x < kSaturationX) {
        out.saturated = true;
        x = kSaturationX;
    }
    const double em1 = std::expm1(-x);
    const double kappa = g * epsilon;
    double log_term = em1;
    if (kappa > 0.0) {
        // log1p(k e^{-x}) - log1p(k) = log1p(k (e^{-x} - 1) / (1 + k))
        log_term = std::log1p(kappa * em1 / (1.0 + kappa)) / kappa;
    }
    out.value = ((epsilon - 1.0) * em1 + log_term) / epsilon;
    return out;
}

inline double morse_exact(double x, double g, double epsilon) {
    return morse_exact_checked(x, g, epsilon).value;
}

inline double morse_exact_limit(double g, double epsilon) {
    const double kappa = g * epsilon;
    if (kappa == 0.0) return 0.0;
    return ((1.0 - epsilon) - std::log1p(kappa) / kappa) / epsilon;
}

inline double morse_approx(double x, double g, bool with_constants) {
    require(std::isfinite(x), "domain", "morse_approx: non-finite x");
    x = std::max(x, kSaturationX / 2);
    const double e = std::exp(-x);
    const double core = e - 0.5 * g * e * e;
    return with_constants ? core + 0.5 * g - 1.0 : core;
}

inline double morse_potential(double x, double g, double epsilon, PotentialVariant variant) {
    switch (variant) {
    case PotentialVariant::Exact: return morse_exact(x, g, epsilon);
    case PotentialVariant::InvertedMorse: return morse_approx(x, g, true);
    case PotentialVariant::InvertedMorseNoConst: return morse_approx(x, g, false);
    }
    return 0.0;
}

inline double morse_potential(double x, const ModelParams& p, PotentialVariant variant) {
    return morse_potential(x, p.g, p.epsilon, variant);
}

inline double morse_grad(double x, double g, double epsilon, PotentialVariant variant) {
    require(std::isfinite(x), "domain", "morse_grad: non-finite x");
    if (variant == PotentialVariant::Exact) {
        x = std::max(x, kSaturationX);
        return -std::exp(-x) * (1.0 - g / (std::exp(x) + epsilon * g));
    }
    x = std::max(x, kSaturationX / 2);
    const double e = std::exp(-x);
    return -e + g * e * e;
}

inline double morse_grad(double x, const ModelParams& p, PotentialVariant variant) {
    return morse_grad(x, p.g, p.epsilon, variant);
}

// Money flow per unit S_ref; vanishes at e^x = g (1 - eps).
inline double policy_flow(double x, double t, const ModelParams& p) {
    return p.flow_scale(t) * (1.0 - p.g / (std::exp(x) + p.epsilon * p.g));
}

inline double impact(double u, double s, double y) {
    require(s >= 0, "domain", "impact: negative price");
    if (s == 0.0) return 0.0;
    return y * u / s;
}

struct SignalValue {
    double f = 0.0;
    double h = 0.0;
};

inline double logistic(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline SignalValue signal_eval(double theta, double t, const SignalParams& s) {
    return {s.a1(t) * logistic(s.b1 * theta), s.a2(t) * logistic(s.b2 * theta)};
}

// Analytic theta-derivatives: a(t) b s (1 - s).
inline SignalValue signal_derivative(double theta, double t, const SignalParams& s) {
    const double s1 = logistic(s.b1 * theta);
    const double s2 = logistic(s.b2 * theta);
    return {s.a1(t) * s.b1 * s1 * (1.0 - s1), s.a2(t) * s.b2 * s2 * (1.0 - s2)};
}

inline double potential2d(double x, double y, double t, const ModelParams& p, PotentialVariant variant) {
    const double vm = morse_potential(x, p, variant);
    const double dy = y - p.y_bar;
    return -p.eta * x + p.flow_scale(t) * y * vm + 0.5 * p.mu * dy * dy;
}

inline std::array<double, 2> grad_potential2d(double x, double y, double t, const ModelParams& p,
                                              PotentialVariant variant) {
    const double c = p.flow_scale(t);
    return {-p.eta + c * y * morse_grad(x, p, variant),
            c * morse_potential(x, p, variant) + p.mu * (y - p.y_bar)};
}

inline std::array<double, 3> drift3d(const State& s, const ModelParams& p, const SignalParams& sig,
                                     PotentialVariant variant = PotentialVariant::Exact) {
    const SignalValue fh = signal_eval(s.theta, s.t, sig);
    const double c = p.flow_scale(s.t);
    return {p.v * fh.f + p.eta - c * s.y * morse_grad(s.x, p, variant),
            p.v * fh.h + p.mu * (p.y_bar - s.y) - c * morse_potential(s.x, p, variant),
            p.k * (p.theta_hat - s.theta)};
}

} // namespace marketron
