#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <marketron/calibrate.hpp>
#include <marketron/dlimit.hpp>
#include <marketron/filter.hpp>
#include <marketron/instanton.hpp>
#include <marketron/market_data.hpp>
#include <marketron/simulate.hpp>
#include <marketron/stats.hpp>

#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace marketron;
using cli::RunConfig;

namespace {

struct Context {
    std::string command;
    RunConfig rc;
    json config_echo;
    fs::path out;
    std::vector<std::string> artifacts;
};

json nan_safe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_json(Context& ctx, const std::string& name, json body) {
    body["config"] = ctx.config_echo;
    std::ofstream f(ctx.out / name);
    require(static_cast<bool>(f), "io", "cannot write " + (ctx.out / name).string());
    f << body.dump(2) << "\n";
    ctx.artifacts.push_back(name);
}

// CSV with a leading comment line that carries the resolved config.
class CsvWriter {
public:
    CsvWriter(Context& ctx, const std::string& name, const std::string& header) : f_(ctx.out / name) {
        require(static_cast<bool>(f_), "io", "cannot write " + (ctx.out / name).string());
        f_ << "# " << ctx.config_echo.dump() << "\n" << header << "\n";
        f_ << std::setprecision(12);
        ctx.artifacts.push_back(name);
    }

    template <class... T>
    void row(const T&... v) {
        bool first = true;
        ((f_ << (first ? "" : ",") << v, first = false), ...);
        f_ << "\n";
    }

private:
    std::ofstream f_;
};

MarketData load_data(const RunConfig& rc) {
    require(!rc.data.path.empty(), "config", "data.path is required for this command (use --data)");
    auto m = ingest_file(rc.data.path, rc.data.frequency, rc.data.s_ref);
    if (!rc.data.start.empty()) m = slice_from(m, rc.data.start);
    return m;
}

json moments_json(const Moments& m) {
    return {{"mean", nan_safe(m.mean)}, {"vol", nan_safe(m.vol)}, {"skew", nan_safe(m.skew)},
            {"kurt", nan_safe(m.kurt)}, {"degenerate", m.degenerate}};
}

json shape_json(const ShapeReport& r) {
    const auto& q = r.coeffs;
    const auto& inv = r.shape.invariants;
    return {{"t", r.t},
            {"theta_star_mode", std::string(to_string(r.mode))},
            {"coefficients", {q.a, q.b, q.c4, q.d, q.e}},
            {"eta_bar", r.eta_bar},
            {"I", r.aux.i_t},
            {"J", r.aux.j_t},
            {"theta_star", r.aux.theta_star},
            {"invariants", {{"delta", inv.delta}, {"P", inv.p}, {"D", inv.dd}, {"delta0", inv.delta0}}},
            {"category", std::string(to_string(r.shape.category))},
            {"n_real_roots", r.shape.n_real_roots},
            {"n_admissible", r.shape.n_admissible},
            {"real_roots", r.shape.real_roots},
            {"margins", {{"P", r.margin_p}, {"delta", r.margin_delta}, {"D", r.margin_dd}}},
            {"reduced_diagnostics", {{"first", r.reduced_first}, {"third", r.reduced_third}}},
            {"four_real", r.four_real},
            {"relaxed_two_root", r.relaxed_two_root},
            {"relaxed_three_root", r.relaxed_three_root},
            {"feasible", r.feasible},
            {"violation", r.violation},
            {"advisory_ratio", nan_safe(r.advisory_ratio)}};
}

json extrema_json(const std::vector<Extremum>& ex, const ModelParams& p, PotentialVariant v) {
    json out = json::array();
    for (const auto& e : ex)
        out.push_back({{"x", e.x}, {"kind", std::string(to_string(e.kind))},
                       {"regime", std::string(to_string(e.regime))}, {"u_eff", eff_potential_1d(e.x, p, v)}});
    return out;
}

// ---- ingest ----

void cmd_ingest(Context& ctx) {
    const auto m = load_data(ctx.rc);
    CsvWriter csv(ctx, "monthly.csv", "date,close,log_price,log_return");
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i == 0) csv.row(m.dates[i], m.closes[i], m.monthly_log_prices[i], "");
        else csv.row(m.dates[i], m.closes[i], m.monthly_log_prices[i], m.monthly_log_returns[i - 1]);
    }
    write_json(ctx, "ingest.json",
               {{"n_months", m.size()},
                {"n_returns", m.monthly_log_returns.size()},
                {"first", m.dates.empty() ? "" : m.dates.front()},
                {"last", m.dates.empty() ? "" : m.dates.back()},
                {"years", static_cast<double>(m.monthly_log_returns.size()) / 12.0},
                {"s_ref", m.s_ref},
                {"moments_all", m.monthly_log_returns.size() >= 12 ? moments_json(moments(m.monthly_log_returns))
                                                                  : json(nullptr)}});
}

// ---- potential ----

void cmd_potential(Context& ctx) {
    const auto& rc = ctx.rc;
    const auto& pb = rc.potential;
    const auto& p = rc.model.model;
    const auto v = rc.model.variant;
    require(pb.n_grid >= 2 && pb.x_max > pb.x_min, "config", "potential grid is empty");
    require(pb.n_grid_y >= 2 && pb.y_max > pb.y_min, "config", "potential y grid is empty");

    CsvWriter csv(ctx, "potential.csv", "x,v_m,u_eff,y_star");
    for (std::size_t i = 0; i < pb.n_grid; ++i) {
        const double x = pb.x_min + (pb.x_max - pb.x_min) * static_cast<double>(i) / static_cast<double>(pb.n_grid - 1);
        const double vm = morse_potential(x, p, v);
        csv.row(x, vm, eff_potential_1d(x, p, v), p.y_bar - p.c / p.mu * vm);
    }
    CsvWriter surf(ctx, "potential2d.csv", "x,y,v");
    for (std::size_t i = 0; i < pb.n_grid; ++i) {
        const double x = pb.x_min + (pb.x_max - pb.x_min) * static_cast<double>(i) / static_cast<double>(pb.n_grid - 1);
        for (std::size_t j = 0; j < pb.n_grid_y; ++j) {
            const double y = pb.y_min + (pb.y_max - pb.y_min) * static_cast<double>(j) / static_cast<double>(pb.n_grid_y - 1);
            surf.row(x, y, potential2d(x, y, 0.0, p, v));
        }
    }

    const auto ex = find_extrema(p, v, pb.x_min, pb.x_max);
    json shapes = json::array();
    for (double t : pb.times) {
        try {
            shapes.push_back(shape_json(shape_constraint(t, p, rc.model.signal, pb.mode, pb.y0)));
        } catch (const Error& e) {
            shapes.push_back({{"t", t}, {"error", {{"code", e.code()}, {"message", e.what()}}}});
        }
    }
    CsvWriter qcsv(ctx, "quartic.csv", "t,z,x,p_z");
    for (double t : pb.times) {
        const auto q = quartic_coeffs(t, p, rc.model.signal, pb.mode, pb.y0);
        for (std::size_t i = 0; i < pb.n_grid; ++i) {
            const double x = pb.x_min + (pb.x_max - pb.x_min) * static_cast<double>(i) / static_cast<double>(pb.n_grid - 1);
            const double z = std::exp(-x);
            qcsv.row(t, z, x, q(z));
        }
    }
    write_json(ctx, "shape.json",
               {{"variant", std::string(to_string(v))},
                {"n_extrema", ex.size()},
                {"extrema", extrema_json(ex, p, v)},
                {"shape_constraints", shapes}});
}

// ---- simulate ----

void cmd_simulate(Context& ctx) {
    auto cfg = ctx.rc.sim.sim;
    cfg.record = RecordGrid::Monthly;
    cfg.validate();
    const auto& p = ctx.rc.model.model;
    const auto& s = ctx.rc.model.signal;
    const auto ens = simulate_paths(cfg, p, s);
    const auto di = default_intensity(ens);

    CsvWriter csv(ctx, "paths.csv", "path,t,x,y,theta,defaulted");
    const std::size_t n_export = std::min(ctx.rc.sim.export_paths, ens.paths.size());
    for (std::size_t k = 0; k < n_export; ++k) {
        const auto& path = ens.paths[k];
        for (std::size_t i = 0; i < path.times.size(); ++i) {
            const bool d = path.defaulted && *path.default_time <= path.times[i] + 1e-12;
            csv.row(k, path.times[i], path.x_series[i], path.y_series[i], path.theta_series[i], d ? 1 : 0);
        }
    }

    json term = nullptr;
    if (ens.paths.size() >= 1000) {
        const auto ts = term_structure(ens);
        CsvWriter tcsv(ctx, "term_structure.csv",
                       "t,survivors,x_mean,x_sd,x_skew,x_kurt,y_mean,y_sd,y_skew,y_kurt,gap");
        std::size_t gaps = 0;
        for (const auto& tp : ts) {
            gaps += tp.gap ? 1 : 0;
            tcsv.row(tp.t, tp.survivors, tp.x.mean, tp.x.sd, tp.x.skew, tp.x.kurt, tp.y.mean, tp.y.sd, tp.y.skew,
                     tp.y.kurt, tp.gap ? 1 : 0);
        }
        term = {{"points", ts.size()}, {"gaps", gaps}};
    }

    // Time-series moments of surviving paths, averaged across paths.
    const auto months = monthly_indices(cfg.horizon, cfg.dt).size() - 1;
    json horizons = json::array();
    for (double h : ctx.rc.calib.horizons) {
        const std::size_t n = horizon_months(h);
        if (n > months || n < 12) continue;
        double acc[4] = {0, 0, 0, 0};
        std::size_t used = 0;
        for (const auto& path : ens.paths) {
            if (path.defaulted) continue;
            const auto r = diff(path.x_series);
            const auto m = moments(r.data(), n);
            if (m.degenerate) continue;
            acc[0] += m.mean;
            acc[1] += m.vol;
            acc[2] += m.skew;
            acc[3] += m.kurt;
            ++used;
        }
        if (used == 0) {
            horizons.push_back({{"horizon", h}, {"paths", 0}});
            continue;
        }
        const double u = static_cast<double>(used);
        horizons.push_back({{"horizon", h}, {"paths", used}, {"mean", acc[0] / u}, {"vol", acc[1] / u},
                            {"skew", acc[2] / u}, {"kurt", acc[3] / u}});
    }

    write_json(ctx, "simulate.json",
               {{"n_paths", ens.paths.size()},
                {"n_defaulted", di.n_defaulted},
                {"default_fraction", di.fraction},
                {"default_intensity", di.infinite ? json(nullptr) : json(di.lambda)},
                {"default_intensity_bps", di.infinite ? json(nullptr) : json(di.bps)},
                {"intensity_infinite", di.infinite},
                {"exported_paths", n_export},
                {"term_structure", term},
                {"path_moments", horizons}});
}

// ---- filter ----

void cmd_filter(Context& ctx) {
    const auto data = load_data(ctx.rc);
    const auto out = run_filter(data.monthly_log_prices, ctx.rc.model.model, ctx.rc.model.signal, ctx.rc.filter);
    CsvWriter csv(ctx, "filter.csv", "t,date,x_obs,x_pred,y_hat,theta_hat,ess,martingale");
    for (std::size_t i = 0; i < out.times.size(); ++i)
        csv.row(out.times[i], data.dates[i], out.x_obs[i], out.predicted_x[i], out.y_hat[i], out.theta_hat[i],
                out.ess_series[i], i < out.martingale_series.size() ? out.martingale_series[i] : 0.0);
    const auto pred_r = diff(out.predicted_x);
    write_json(ctx, "filter.json",
               {{"n_obs", out.times.size()},
                {"martingale_mean", out.martingale_mean},
                {"martingale_se", out.martingale_se},
                {"degenerate_steps", out.degenerate_steps},
                {"redraws", out.redraws},
                {"resample_count", out.resample_count},
                {"predicted_moments", pred_r.size() >= 12 ? moments_json(moments(pred_r)) : json(nullptr)},
                {"market_moments", data.monthly_log_returns.size() >= 12 ? moments_json(moments(data.monthly_log_returns))
                                                                         : json(nullptr)}});
}

// ---- instanton ----

void cmd_instanton(Context& ctx) {
    const auto& rc = ctx.rc;
    const auto& p = rc.model.model;
    const auto v = rc.model.variant;
    const auto ex = find_extrema(p, v, rc.potential.x_min, rc.potential.x_max);
    const double sigma = rc.instanton.sigma.value_or(p.sigma);

    json paths = json::object();
    for (auto tr : {Transition::BadToGood, Transition::BadToUgly, Transition::GoodToBad}) {
        const std::string name(to_string(tr));
        try {
            const auto res = marketron_instanton(p, v, tr, rc.instanton.dt, rc.instanton.t_max, rc.potential.x_min,
                                                 rc.potential.x_max);
            CsvWriter csv(ctx, "instanton_" + name + ".csv", "t,x,y,v");
            for (const auto& pt : res.path) csv.row(pt.t, pt.x, pt.y, pt.v);
            paths[name] = {{"points", res.path.size()}, {"reached_saddle", res.reached_saddle},
                           {"final_grad_norm", res.final_grad_norm},
                           {"duration", res.path.empty() ? 0.0 : res.path.back().t},
                           {"action", 2.0 * (res.path.back().v - res.path.front().v)}};
        } catch (const Error& e) {
            paths[name] = {{"error", {{"code", e.code()}, {"message", e.what()}}}};
        }
    }

    json escape = nullptr;
    try {
        auto u = [&](double x) { return eff_potential_1d(x, p, v); };
        int good = -1, bad = -1, ugly = -1;
        for (int i = 0; i < static_cast<int>(ex.size()); ++i) {
            if (ex[i].regime == Regime::Good) good = i;
            if (ex[i].regime == Regime::Bad) bad = i;
            if (ex[i].regime == Regime::Ugly) ugly = i;
        }
        require(good >= 0 && bad >= 0, "shape", "escape analysis needs Bad and Good minima");
        const double xb = ex[bad].x, xg = ex[good].x;
        double top_right = xb;
        for (int i = bad + 1; i < good; ++i)
            if (ex[i].kind == ExtremumKind::Max) top_right = ex[i].x;
        const double xr = barrier_exit(u, top_right, xg, sigma);
        const double xl = ugly >= 0 ? barrier_exit(u, ex[ugly].x, rc.potential.x_min, sigma) : ex.front().x - 1.0;
        const auto exact = mfpt(u, xb, xl, xr, sigma, MfptMethod::ExactDouble);
        const auto fixed = mfpt(u, xb, xl, xr, sigma, MfptMethod::FixedWidth);
        const double k_bg = kramers_rate(u, xb, top_right, sigma);

        const auto setup = php_default_setup(u, ex);
        const auto php = fit_php(u, setup.xl, setup.xr, setup.windows);
        const auto php_t = mfpt(php, xb, xl, xr, sigma, MfptMethod::FixedWidth);
        json zw = nullptr;
        try {
            const auto z = zwanzig_renormalize(php, sigma, p.sigma_z, p.k);
            zw = json::array();
            for (int i = 0; i < 3; ++i)
                zw.push_back({{"ratio", z.ratio[i]},
                              {"minus", {{"ybar", z.seg[i][0].ybar}, {"omega_sq", z.seg[i][0].omega_sq},
                                         {"q", z.seg[i][0].q}}},
                              {"plus", {{"ybar", z.seg[i][1].ybar}, {"omega_sq", z.seg[i][1].omega_sq},
                                        {"q", z.seg[i][1].q}}}});
        } catch (const Error& e) {
            zw = {{"error", {{"code", e.code()}, {"message", e.what()}}}};
        }
        auto rates = [](const EscapeResult& r) {
            return json{{"t_bg", r.t_bg}, {"t_bu", r.t_bu}, {"lambda", 1.0 / r.t_bg + 1.0 / r.t_bu},
                        {"method", std::string(to_string(r.method))}, {"achieved_tolerance", r.achieved_tolerance}};
        };
        escape = {{"sigma", sigma},
                  {"x_bad", xb},
                  {"x_good", xg},
                  {"x_left", xl},
                  {"x_right", xr},
                  {"exact", rates(exact)},
                  {"fixed_width", rates(fixed)},
                  {"kramers_bg", k_bg},
                  {"php", {{"xl", php.xl}, {"xr", php.xr}, {"omega", php.omega}, {"xbar", php.xbar},
                           {"u2", php.u2}, {"u3", php.u3}, {"escape", rates(php_t)}}},
                  {"zwanzig", zw}};
    } catch (const Error& e) {
        escape = {{"error", {{"code", e.code()}, {"message", e.what()}}}};
    }
    write_json(ctx, "instanton.json", {{"variant", std::string(to_string(v))}, {"extrema", extrema_json(ex, p, v)},
                                       {"paths", paths}, {"escape", escape}});
}

// ---- calibrate ----

void cmd_calibrate(Context& ctx) {
    const auto data = load_data(ctx.rc);
    auto cfg = ctx.rc.calib;
    const double longest = static_cast<double>(data.monthly_log_returns.size()) / 12.0;
    std::vector<double> kept, dropped;
    for (double h : cfg.horizons) (h <= longest + 1e-9 ? kept : dropped).push_back(h);
    require(!kept.empty(), "config", "no calibration horizon fits in the data (" + std::to_string(longest) + " years)");
    if (!dropped.empty())
        std::cerr << "warning: dropped " << dropped.size() << " horizon(s) longer than the data\n";
    cfg.horizons = kept;

    const auto res = calibrate(data, ctx.rc.model, cfg);
    Preset fitted = ctx.rc.model;
    fitted.model = res.params;
    fitted.signal = res.signal;

    CsvWriter csv(ctx, "moment_table.csv",
                  "horizon,model_mean,model_vol,model_skew,model_kurt,market_mean,market_vol,market_skew,market_kurt");
    json table = json::array();
    for (const auto& row : res.detail.table) {
        csv.row(row.horizon, row.model.mean, row.model.vol, row.model.skew, row.model.kurt, row.market.mean,
                row.market.vol, row.market.skew, row.market.kurt);
        table.push_back({{"horizon", row.horizon}, {"model", moments_json(row.model)},
                         {"market", moments_json(row.market)}});
    }
    json stages = json::array();
    for (const auto& st : res.stages) {
        json hist = json::array();
        for (const auto& h : st.history)
            hist.push_back({{"iteration", h.iteration}, {"best_loss", h.best_loss},
                            {"iteration_best", h.iteration_best}, {"spread", h.spread}});
        stages.push_back({{"name", st.name}, {"loss", st.loss}, {"feasible", st.feasible},
                          {"evaluations", st.evaluations}, {"history", hist}});
    }
    json shapes = json::array();
    for (const auto& r : res.constraint_report) shapes.push_back(shape_json(r));
    auto mj = cli::model_json(fitted);
    write_json(ctx, "calibrated_model.json",
               {{"model", mj["model"]},
                {"signal", mj["signal"]},
                {"variant", mj["variant"]},
                {"objective", res.objective_value},
                {"moment_loss", res.detail.moment_loss},
                {"violation", res.detail.violation},
                {"martingale", res.detail.martingale},
                {"feasible", res.feasible},
                {"failure", res.detail.failed ? json(res.detail.failure) : json(nullptr)},
                {"de_improvement", res.de_improvement},
                {"horizons_used", kept},
                {"horizons_dropped", dropped},
                {"moment_table", table},
                {"constraint_report", shapes},
                {"stages", stages}});
}

// ---- report ----

void cmd_report(Context& ctx) {
    const auto& rc = ctx.rc;
    const auto data = load_data(rc);
    const auto& p = rc.model.model;
    const auto& s = rc.model.signal;
    const auto& mk = data.monthly_log_prices;
    require(mk.size() >= 24, "domain", "report needs at least 24 months of data");
    const auto mr = diff(mk);

    // One model path over the same span, started at the first observation.
    SimConfig sc = rc.sim.sim;
    sc.record = RecordGrid::Monthly;
    sc.horizon = static_cast<double>(mk.size() - 1) / 12.0;
    sc.x0 = mk.front();
    sc.default_barrier = std::min(sc.default_barrier, sc.x0 - 1.0);
    sc.n_paths = std::max<std::size_t>(rc.report.sim_paths, 1);
    sc.validate();
    const auto ens = simulate_paths(sc, p, s);
    std::size_t rep = 0;
    while (rep + 1 < ens.paths.size() && ens.paths[rep].defaulted) ++rep;
    const auto& model_x = ens.paths[rep].x_series;
    const auto model_r = diff(model_x);

    const auto acf_m = acf(mr, rc.report.max_lag);
    std::vector<double> abs_r(mr.size());
    for (std::size_t i = 0; i < mr.size(); ++i) abs_r[i] = std::abs(mr[i]);
    const auto acf_abs = acf(abs_r, rc.report.max_lag);
    const auto acf_model = acf(model_r, rc.report.max_lag);
    {
        CsvWriter csv(ctx, "acf.csv", "lag,market,market_abs,model");
        for (std::size_t k = 0; k < acf_m.size(); ++k) csv.row(k, acf_m[k], acf_abs[k], acf_model[k]);
    }
    {
        CsvWriter csv(ctx, "qq.csv", "series,theoretical,sample");
        for (const auto& q : qq_normal(mr)) csv.row("market", q.theoretical, q.sample);
        for (const auto& q : qq_normal(model_r)) csv.row("model", q.theoretical, q.sample);
    }
    {
        const auto rv_m = realized_vol(mk, rc.report.rv_window, 12.0);
        const auto rv_model = realized_vol(model_x, rc.report.rv_window, 12.0);
        CsvWriter csv(ctx, "rv.csv", "index,date,market,model");
        for (std::size_t i = 0; i < rv_m.size(); ++i)
            csv.row(i + rc.report.rv_window, data.dates[i + rc.report.rv_window], rv_m[i], rv_model[i]);
    }
    {
        const auto h_m = histogram(mr, rc.report.hist_bins);
        CsvWriter csv(ctx, "histogram.csv", "lo,hi,market_count");
        for (std::size_t i = 0; i < h_m.counts.size(); ++i) csv.row(h_m.edges[i], h_m.edges[i + 1], h_m.counts[i]);
    }
    json term = nullptr;
    if (ens.paths.size() >= 1000) {
        const auto ts = term_structure(ens);
        CsvWriter csv(ctx, "term_structure.csv", "t,survivors,x_mean,x_sd,x_skew,x_kurt,y_mean,y_sd,gap");
        std::size_t gaps = 0;
        for (const auto& tp : ts) {
            gaps += tp.gap ? 1 : 0;
            csv.row(tp.t, tp.survivors, tp.x.mean, tp.x.sd, tp.x.skew, tp.x.kurt, tp.y.mean, tp.y.sd, tp.gap ? 1 : 0);
        }
        term = {{"points", ts.size()}, {"gaps", gaps}};
    }

    // Rolling one-window predictive check: filter the history, then run the model ahead from the filtered state.
    FilterConfig fc = rc.filter;
    const std::size_t ahead = rc.report.rolling_ahead;
    const ModelRunner runner = [&](std::size_t i, const std::vector<double>& hist) {
        FilterConfig local = fc;
        local.seed = derive_key(rc.seed, {tag::rolling, i});
        local.workers = 1;
        const auto fo = run_filter(hist, p, s, local);
        SimConfig step = rc.sim.sim;
        step.record = RecordGrid::Monthly;
        step.horizon = static_cast<double>(ahead) / 12.0;
        step.seed = derive_key(rc.seed, {tag::rolling, i, 1});
        step.x0 = hist.back();
        step.default_barrier = std::min(step.default_barrier, step.x0 - 1.0);
        const State start{hist.back(), fo.y_hat.back(), fo.theta_hat.back(), 0.0};
        const auto path = simulate_path(step, p, s, 0, start);
        std::vector<double> out = hist;
        for (std::size_t k = 1; k <= ahead; ++k) out.push_back(path.x_series.at(k));
        return out;
    };
    const auto roll = rolling_predictive(mk, runner, rc.report.rolling_window, ahead);
    {
        CsvWriter csv(ctx, "rolling.csv",
                      "index,date,market_mean,market_vol,market_skew,market_kurt,model_mean,model_vol,model_skew,model_kurt");
        for (std::size_t k = 0; k < roll.index.size(); ++k) {
            const auto& a = roll.market[k];
            const auto& b = roll.model[k];
            csv.row(roll.index[k], data.dates[roll.index[k]], a.mean, a.vol, a.skew, a.kurt, b.mean, b.vol, b.skew,
                    b.kurt);
        }
    }
    std::vector<double> rm_vol, rmod_vol;
    for (std::size_t k = 0; k < roll.index.size(); ++k) {
        rm_vol.push_back(roll.market[k].vol);
        rmod_vol.push_back(roll.model[k].vol);
    }

    const auto hm = hurst_rs(mr);
    const auto hmod = hurst_rs(model_r);
    const auto di = default_intensity(ens);
    write_json(ctx, "report.json",
               {{"n_months", mk.size()},
                {"market_moments", moments_json(moments(mr))},
                {"model_moments", model_r.size() >= 12 ? moments_json(moments(model_r)) : json(nullptr)},
                {"hurst", {{"market", nan_safe(hm.h)}, {"market_reliable", hm.reliable},
                           {"model", nan_safe(hmod.h)}, {"model_reliable", hmod.reliable}}},
                {"default_fraction", di.fraction},
                {"term_structure", term},
                {"rolling", {{"windows", roll.index.size()}, {"truncated", roll.truncated},
                             {"vol_correlation", rm_vol.size() >= 3 ? nan_safe(correlation(rm_vol, rmod_vol))
                                                                    : json(nullptr)}}}});
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"marketron: market dynamics with regime switching and default"};
    app.fallthrough();
    app.require_subcommand(1);
    std::string config_path, out_dir = "run", data_path, model_path;
    std::optional<std::string> preset;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--preset", preset, "parameter preset: table1, table4, fig2, fig3, fig4");
    app.add_option("--data", data_path, "price CSV (date,close); overrides data.path");
    app.add_option("--model", model_path, "calibrated_model.json whose parameters replace the preset's");

    const std::vector<std::pair<std::string, void (*)(Context&)>> commands = {
        {"ingest", cmd_ingest},       {"potential", cmd_potential}, {"simulate", cmd_simulate},
        {"filter", cmd_filter},       {"instanton", cmd_instanton}, {"calibrate", cmd_calibrate},
        {"report", cmd_report}};
    const std::vector<std::string> help = {
        "convert a price CSV to month-end log prices", "potential landscape, extrema and shape constraints",
        "Monte Carlo paths and default intensity", "particle filter over the data",
        "instanton paths and escape times", "calibrate to multi-horizon moments",
        "diagnostics against the data"};
    for (std::size_t i = 0; i < commands.size(); ++i) app.add_subcommand(commands[i].first, help[i]);

    CLI11_PARSE(app, argc, argv);

    Context ctx;
    for (const auto& [name, fn] : commands)
        if (app.got_subcommand(name)) ctx.command = name;
    ctx.out = out_dir;

    auto fail = [&](const std::string& code, const std::string& message) {
        json err = {{"ok", false}, {"command", ctx.command}, {"code", code}, {"message", message}};
        std::cerr << "error [" << code << "]: " << message << "\n";
        std::error_code ec;
        fs::create_directories(ctx.out, ec);
        if (!ec) {
            std::ofstream f(ctx.out / "error.json");
            f << err.dump(2) << "\n";
        }
        return code == "config" ? 2 : 1;
    };

    try {
        json doc = json::object();
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            try {
                doc = json::parse(f);
            } catch (const json::exception& e) {
                throw Error("config", std::string("cannot parse config: ") + e.what());
            }
        }
        if (!data_path.empty()) doc["data"]["path"] = data_path;
        if (!model_path.empty()) {
            std::ifstream f(model_path);
            require(static_cast<bool>(f), "io", "cannot open " + model_path);
            json fitted;
            try {
                fitted = json::parse(f);
            } catch (const json::exception& e) {
                throw Error("config", std::string("cannot parse model file: ") + e.what());
            }
            require(fitted.contains("model") && fitted.contains("signal"), "config",
                    "model file needs 'model' and 'signal' blocks");
            for (const char* key : {"model", "signal"})
                for (auto it = fitted[key].begin(); it != fitted[key].end(); ++it) doc[key][it.key()] = it.value();
            if (fitted.contains("variant") && !doc.contains("potential"))
                doc["potential"]["variant"] = fitted["variant"];
        }
        ctx.rc = cli::resolve(doc, preset, seed);
        ctx.config_echo = cli::to_json(ctx.rc);
        fs::create_directories(ctx.out);
        for (const auto& [name, fn] : commands)
            if (name == ctx.command) fn(ctx);
        json status = {{"ok", true}, {"command", ctx.command}, {"seed", ctx.rc.seed}, {"artifacts", ctx.artifacts},
                       {"config", ctx.config_echo}};
        std::ofstream f(ctx.out / "status.json");
        f << status.dump(2) << "\n";
        return 0;
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
}
