#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "error.hpp"

namespace marketron {

enum class PotentialVariant { Exact, InvertedMorse, InvertedMorseNoConst };

inline std::string_view to_string(PotentialVariant v) {
    switch (v) {
    case PotentialVariant::Exact: return "exact";
    case PotentialVariant::InvertedMorse: return "inverted_morse";
    case PotentialVariant::InvertedMorseNoConst: return "inverted_morse_noconst";
    }
    return "exact";
}

inline PotentialVariant parse_variant(std::string_view s) {
    if (s == "exact") return PotentialVariant::Exact;
    if (s == "inverted_morse") return PotentialVariant::InvertedMorse;
    if (s == "inverted_morse_noconst") return PotentialVariant::InvertedMorseNoConst;
    throw Error("config", "unknown potential variant '" + std::string(s) + "'");
}

// Rates are per year, x = log(S / S_ref).
struct ModelParams {
    double sigma = 0.0;
    double sigma_y = 0.0;
    double sigma_z = 0.0;
    double eta = 0.0;
    double k = 0.0;
    double mu = 1.0;
    double g = 0.0;
    double theta_hat = 0.0;
    double y_bar = 0.0;
    double c = 0.0;
    double epsilon = 0.02;
    double v = 1.0;

    // Time-varying flow scale hook; the model keeps c constant.
    double flow_scale(double /*t*/) const { return c; }

    void validate() const {
        const double all[] = {sigma, sigma_y, sigma_z, eta, k, mu, g, theta_hat, y_bar, c, epsilon, v};
        for (double a : all) require(std::isfinite(a), "params", "model parameters must be finite");
        require(sigma >= 0 && sigma_y >= 0 && sigma_z >= 0, "params", "volatilities must be >= 0");
        require(g >= 0 && g <= 1, "params", "g must lie in [0, 1]");
        require(epsilon > 0 && epsilon <= 1, "params", "epsilon must lie in (0, 1]");
        require(mu > 0, "params", "mu must be > 0");
        require(c >= 0, "params", "c must be >= 0");
        require(k >= 0, "params", "k must be >= 0");
    }
};

struct SignalParams {
    double b1 = 0.0;
    double b2 = 0.0;
    double k1x = 0.0;
    double k2x = 0.0;
    double k3x = 0.0;
    double k1y = 0.0;
    double k2y = 0.0;
    double k3y = 0.0;

    double a1(double t) const { return k1x * std::cos(k2x + k3x * t); }
    double a2(double t) const { return k1y * std::sin(k2y + k3y * t); }
};

enum class ThetaStarMode { Theta0, ThetaHat };

inline std::string_view to_string(ThetaStarMode m) {
    return m == ThetaStarMode::Theta0 ? "theta0" : "theta_hat";
}

inline ThetaStarMode parse_mode(std::string_view s) {
    if (s == "theta0") return ThetaStarMode::Theta0;
    if (s == "theta_hat") return ThetaStarMode::ThetaHat;
    throw Error("config", "unknown theta* mode '" + std::string(s) + "'");
}

struct Preset {
    std::string name;
    ModelParams model;
    SignalParams signal;
    PotentialVariant variant = PotentialVariant::Exact;
};

// Calibration vector layout: the 18 free parameters in a fixed order.
inline constexpr std::size_t kNumFree = 18;

inline constexpr std::array<std::string_view, kNumFree> kFreeNames = {
    "sigma", "sigma_y", "sigma_z", "eta", "k", "mu", "g", "theta_hat", "y_bar", "c",
    "b1", "b2", "k1x", "k2x", "k3x", "k1y", "k2y", "k3y"};

using FreeVector = std::array<double, kNumFree>;

inline FreeVector pack(const ModelParams& m, const SignalParams& s) {
    return {m.sigma, m.sigma_y, m.sigma_z, m.eta, m.k, m.mu, m.g, m.theta_hat, m.y_bar, m.c,
            s.b1, s.b2, s.k1x, s.k2x, s.k3x, s.k1y, s.k2y, s.k3y};
}

inline void unpack(const FreeVector& p, ModelParams& m, SignalParams& s) {
    m.sigma = p[0]; m.sigma_y = p[1]; m.sigma_z = p[2]; m.eta = p[3]; m.k = p[4];
    m.mu = p[5]; m.g = p[6]; m.theta_hat = p[7]; m.y_bar = p[8]; m.c = p[9];
    s.b1 = p[10]; s.b2 = p[11]; s.k1x = p[12]; s.k2x = p[13]; s.k3x = p[14];
    s.k1y = p[15]; s.k2y = p[16]; s.k3y = p[17];
}

// Box bounds of the calibration search; eta spans [-sigma_max^2/2, 1 - sigma_min^2/2].
inline std::array<std::pair<double, double>, kNumFree> default_bounds() {
    return {{{0, 3}, {0, 3}, {0, 3}, {-4.5, 1}, {0, 5}, {0, 3}, {0, 1}, {0, 10}, {0, 1}, {0, 5},
             {-10, 10}, {-10, 10}, {-5, 5}, {0, 5}, {-5, 5}, {-5, 5}, {0, 5}, {-5, 5}}};
}

namespace presets {

// S&P500 calibration, constraints frozen at theta0.
inline Preset table1() {
    Preset p;
    p.name = "table1";
    p.model = {.sigma = 0.7912, .sigma_y = 0.38, .sigma_z = 0.8334, .eta = -1.5685, .k = 1.2869,
               .mu = 1.6671, .g = 0.6831, .theta_hat = 6.7865, .y_bar = 0.4731, .c = 3.9305,
               .epsilon = 0.02, .v = 1.0};
    p.signal = {.b1 = 1.6819, .b2 = -1.2102, .k1x = -3.2002, .k2x = 2.7417, .k3x = -1.8832,
                .k1y = -0.7855, .k2y = 3.8901, .k3y = 1.5588};
    p.variant = PotentialVariant::Exact;
    return p;
}

// S&P500 calibration, constraints frozen at theta_hat.
inline Preset table4() {
    Preset p;
    p.name = "table4";
    p.model = {.sigma = 0.7743, .sigma_y = 0.8508, .sigma_z = 0.9524, .eta = 0.0058, .k = 1.7684,
               .mu = 1.4008, .g = 0.3927, .theta_hat = 4.1076, .y_bar = 0.7823, .c = 3.9358,
               .epsilon = 0.02, .v = 1.0};
    p.signal = {.b1 = 1.7983, .b2 = 2.4441, .k1x = 2.0011, .k2x = 1.4876, .k3x = -3.5391,
                .k1y = 3.5431, .k2y = 1.2359, .k3y = 0.1162};
    p.variant = PotentialVariant::Exact;
    return p;
}

// Landscape presets: no signal, small noise, constant-free inverted Morse.
inline Preset landscape(std::string name, double g) {
    Preset p;
    p.name = std::move(name);
    p.model = {.sigma = 0.1, .sigma_y = 0.05, .sigma_z = 0.0, .eta = -0.01, .k = 1.0,
               .mu = 0.1, .g = g, .theta_hat = 0.0, .y_bar = 1.0, .c = 0.13,
               .epsilon = 0.02, .v = 1.0};
    p.variant = PotentialVariant::InvertedMorseNoConst;
    return p;
}

inline Preset fig2() { return landscape("fig2", 0.3); }
inline Preset fig3() { return landscape("fig3", 0.25); }
inline Preset fig4() { return landscape("fig4", 0.25); }

inline Preset by_name(std::string_view name) {
    if (name == "table1") return table1();
    if (name == "table4") return table4();
    if (name == "fig2") return fig2();
    if (name == "fig3") return fig3();
    if (name == "fig4") return fig4();
    throw Error("config", "unknown preset '" + std::string(name) + "'");
}

} // namespace presets

} // namespace marketron
