#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "valtrack/analysis.hpp"
#include "valtrack/config.hpp"
#include "valtrack/experiments.hpp"
#include "valtrack/metrics.hpp"
#include "valtrack/output.hpp"
#include "valtrack/svg.hpp"

namespace fs = std::filesystem;
using namespace valtrack;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string preset;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<double> lambda, mu, mo, rand;
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config_path, "config file (key = value lines)");
    sub->add_option("--set", c.sets, "override a config key, e.g. --set market.eta=0.1")->allow_extra_args(false);
    sub->add_option("--preset", c.preset, "desk or full");
    sub->add_option("--out", c.out_dir, "output directory (default $VALTRACK_OUT_DIR or ./out)");
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--workers", c.workers, "worker threads");
    sub->add_option("--lambda", c.lambda, "price-impact exponent");
    sub->add_option("--mu", c.mu, "momentum smoothing");
    sub->add_option("--mo", c.mo, "initial Mo wealth fraction");
    sub->add_option("--rand", c.rand, "initial Rand wealth fraction");
}

// Defaults that differ by subcommand, applied before the file and flags.
ExperimentConfig base_for(const std::string& cmd)
{
    ExperimentConfig cfg;
    if (cmd == "sweep") {
        cfg.population.refined_rand = true;
        cfg.population.initial_momentum = 0.0;
        cfg.predicate.rule = RelativeDrop{0.30};
    } else if (cmd == "multival") {
        cfg.population.valuation = GammaValuation{};
        cfg.population.n_vals = 10;
        cfg.population.refined_rand = true;
        cfg.population.initial_momentum = 0.0;
        cfg.population.val_fraction = 0.5;
        cfg.population.mo_fraction = 0.3;
        cfg.population.rand_fraction = 0.2;
        cfg.market.horizon = 1000;
        cfg.predicate.rule = RelativeDrop{0.30};
    } else if (cmd == "grid") {
        cfg.predicate.rule = DropBelow{0.01};
    }
    return cfg;
}

ExperimentConfig resolve(const std::string& cmd, const Common& c)
{
    std::vector<Setting> settings;
    if (!c.config_path.empty())
        settings = parse_settings(read_text_file(c.config_path), c.config_path);
    if (!c.preset.empty()) {
        ExperimentConfig tmp;
        apply_preset(tmp, c.preset);
        settings.push_back({"run.resolution", std::to_string(tmp.resolution), "--preset"});
        settings.push_back({"run.replicates", std::to_string(tmp.replicates), "--preset"});
    }
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set " + s + ": expected key=value");
        settings.push_back({config_detail::trim(s.substr(0, eq)), config_detail::trim(s.substr(eq + 1)), "--set"});
    }
    auto flag = [&](const char* key, const char* name, const auto& v) {
        if (v)
            settings.push_back({key, config_detail::fmt(static_cast<double>(*v)), name});
    };
    flag("market.lambda", "--lambda", c.lambda);
    flag("market.mu", "--mu", c.mu);
    flag("population.mo", "--mo", c.mo);
    flag("population.rand", "--rand", c.rand);
    if (c.seed)
        settings.push_back({"run.seed", std::to_string(*c.seed), "--seed"});
    if (c.workers)
        settings.push_back({"run.workers", std::to_string(*c.workers), "--workers"});

    // The per-command base may set val explicitly; keep it consistent with
    // any Mo/Rand override.
    ExperimentConfig base = base_for(cmd);
    bool val_given = false, mix_given = false;
    for (const auto& s : settings) {
        val_given |= s.key == "population.val";
        mix_given |= s.key == "population.mo" || s.key == "population.rand";
    }
    if (!val_given && !mix_given)
        settings.push_back({"population.val", config_detail::fmt(base.population.val_fraction), "default"});
    return resolve_config(settings, base);
}

fs::path out_dir(const Common& c)
{
    if (!c.out_dir.empty())
        return c.out_dir;
    if (const char* env = std::getenv("VALTRACK_OUT_DIR"); env && *env)
        return env;
    return "out";
}

int cmd_run(const Common& c)
{
    const auto cfg = resolve("run", c);
    const auto& pop = cfg.population;
    const RunResult r = run_mix(cfg, pop.val_fraction, pop.mo_fraction, pop.rand_fraction, cfg.seed);
    const fs::path dir = out_dir(c);
    nlohmann::json extra = {{"crashed", r.crashed()}, {"boomed", r.boomed()}, {"floored", r.floored}};
    extra["crash_step"] = r.crash_step ? nlohmann::json(*r.crash_step) : nlohmann::json(nullptr);
    extra["boom_step"] = r.boom_step ? nlohmann::json(*r.boom_step) : nlohmann::json(nullptr);
    output::write_with_sidecar(dir / "series.csv", output::series_csv(r), cfg, "run", extra);
    output::write_with_sidecar(dir / "series.svg", svg::render_series_svg(r, reference_valuation(pop.valuation)), cfg,
                               "run", extra);
    std::printf("final price %.6g, min price %.6g\n", r.prices.back(),
                *std::min_element(r.prices.begin(), r.prices.end()));
    if (r.crash_step)
        std::printf("crash at step %zu\n", *r.crash_step);
    else
        std::printf("no crash within %d steps\n", cfg.market.horizon);
    if (r.boom_step)
        std::printf("boom at step %zu\n", *r.boom_step);
    std::printf("wrote %s\n", (dir / "series.csv").string().c_str());
    return 0;
}

int cmd_sweep(const Common& c)
{
    const auto cfg = resolve("sweep", c);
    const TernaryGrid g = ternary_sweep(cfg, cfg.resolution, cfg.replicates);
    const fs::path dir = out_dir(c);
    output::write_with_sidecar(dir / "ternary.csv", output::ternary_csv(g), cfg, "sweep");
    output::write_with_sidecar(dir / "ternary_crash.svg", svg::render_ternary_svg(g, svg::TernaryMetric::CrashFreq),
                               cfg, "sweep");
    output::write_with_sidecar(dir / "ternary_drop.svg", svg::render_ternary_svg(g, svg::TernaryMetric::MeanDrop),
                               cfg, "sweep");
    std::printf("%zu points x %d replicates, wrote %s\n", g.points.size(), g.replicates,
                (dir / "ternary.csv").string().c_str());
    return 0;
}

int cmd_grid(const Common& c, double k_lo, double k_hi, int cells, const std::string& settlement)
{
    const auto cfg = resolve("grid", c);
    std::vector<Settlement> which;
    if (settlement == "both")
        which = {Settlement::UpdatedPrice, Settlement::CurrentPrice};
    else if (settlement == "updated")
        which = {Settlement::UpdatedPrice};
    else if (settlement == "current")
        which = {Settlement::CurrentPrice};
    else
        throw ConfigError("--settlement must be updated, current or both");
    const auto g = commitment_grid(cfg, {k_lo, k_hi}, {k_lo, k_hi}, cells, which);
    const fs::path dir = out_dir(c);
    output::write_with_sidecar(dir / "grid.csv", output::grid_csv(g), cfg, "grid",
                               {{"k_lo", k_lo}, {"k_hi", k_hi}, {"cells", cells}, {"settlement", settlement}});
    int above = 0;
    for (const auto& cell : g.cells)
        above += cell.theta_sim > cell.theta_analytic + 0.01;
    std::printf("%zu cells, %d with simulated threshold above analytic + 0.01, wrote %s\n", g.cells.size(), above,
                (dir / "grid.csv").string().c_str());
    return 0;
}

int cmd_impact(const Common& c)
{
    const auto cfg = resolve("impact", c);
    const auto rep = impact_comparison(cfg);
    nlohmann::json j = {{"ratio_power", rep.ratio_power.theta},
                        {"power_law_zeta_1", rep.power_law_1.theta},
                        {"power_law_zeta_0.8", rep.power_law_08.theta}};
    const fs::path dir = out_dir(c);
    output::write_with_sidecar(dir / "impact.json", j.dump(2) + "\n", cfg, "impact");
    std::printf("ratio-power        %.4f\npower-law zeta=1   %.4f\npower-law zeta=0.8 %.4f\n", rep.ratio_power.theta,
                rep.power_law_1.theta, rep.power_law_08.theta);
    return 0;
}

int cmd_multival(const Common& c)
{
    const auto cfg = resolve("multival", c);
    const auto r = multival_run(cfg, cfg.population.n_vals, cfg.market.horizon);
    const fs::path dir = out_dir(c);
    nlohmann::json extra = {{"valuations", r.valuations},
                            {"max_tau", r.max_tau},
                            {"val_wealth_var_start", r.val_wealth_var_start},
                            {"val_wealth_var_end", r.val_wealth_var_end},
                            {"crashed", r.run.crashed()}};
    output::write_with_sidecar(dir / "multival_series.csv", output::series_csv(r.run), cfg, "multival", extra);
    if (!r.histogram.centers.empty())
        output::write_with_sidecar(dir / "multival_histogram.csv", output::histogram_csv(r.histogram), cfg, "multival",
                                   extra);
    output::write_with_sidecar(dir / "multival_series.svg", svg::render_series_svg(r.run, 1.0), cfg, "multival", extra);
    std::printf("%zu Vals, crashed: %s, max tau %.4f Blacks, Val wealth variance %.4g -> %.4g\n", r.valuations.size(),
                r.run.crashed() ? "yes" : "no", r.max_tau, r.val_wealth_var_start, r.val_wealth_var_end);
    return 0;
}

int cmd_estimate(const Common& c, int n, int reps, double p, double shape, double rate)
{
    const auto cfg = resolve("estimate", c);
    const auto rep = estimator_mc(GammaDist{shape, rate}, p, n, reps, cfg.seed);
    const auto j = output::estimator_json(rep);
    output::write_with_sidecar(out_dir(c) / "estimator.json", j.dump(2) + "\n", cfg, "estimate",
                               {{"n", n}, {"reps", reps}, {"p", p}, {"shape", shape}, {"rate", rate}});
    std::printf("tau %.6f, mean tau_hat %.6f, bias %.3g\n", rep.tau_true, rep.tau_hat_mean, rep.bias);
    std::printf("predicted std %.5f, empirical std %.5f, skewness %.4f\n", rep.predicted_std, rep.empirical_std,
                rep.skewness);
    return 0;
}

int cmd_analyze(const Common& c, int surface)
{
    const auto cfg = resolve("analyze", c);
    const auto k = analysis::AnalysisConstants::unit(cfg.market, cfg.commitments);
    const auto a = analysis::alpha_fixed_points(k);
    const auto b = analysis::beta_fixed_points(k);
    const double theta = analysis::mo_crash_threshold_analytic(k, cfg.market.rho);
    nlohmann::json j = {{"A", k.A}, {"B", k.B}, {"alpha", output::fixed_point_json(a)},
                        {"beta", output::fixed_point_json(b)}, {"theta", theta}};
    std::printf("%s\n", j.dump(2).c_str());
    std::printf("theta = %.5f\n", theta);

    std::vector<output::FixedPointRow> rows;
    if (surface > 0) {
        for (double kv : linspace(0.02, 0.30, surface))
            for (double km : linspace(0.02, 0.30, surface)) {
                auto kk = cfg.commitments;
                kk.kV_buy = kv;
                kk.kM_sell = km;
                const auto cc = analysis::AnalysisConstants::unit(cfg.market, kk);
                const auto fp = analysis::alpha_fixed_points(cc);
                rows.push_back({kv, km, fp.extremal, fp.exists, analysis::mo_crash_threshold_analytic(cc, cfg.market.rho)});
            }
    } else {
        rows.push_back({k.kV_buy, k.kM_sell, a.extremal, a.exists, theta});
    }
    output::write_with_sidecar(out_dir(c) / "fixed_points.csv", output::fixed_points_csv(rows), cfg, "analyze",
                               {{"surface", surface}});
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"valtrack: Val/Mo/Rand value-tracking market simulator"};
    app.require_subcommand(1);

    Common common;
    auto* run = app.add_subcommand("run", "simulate one market and write its series");
    auto* sweep = app.add_subcommand("sweep", "ternary sweep over Val/Mo/Rand mixes");
    auto* grid = app.add_subcommand("grid", "commitment grid: analytic vs simulated Mo threshold");
    auto* impact = app.add_subcommand("impact", "Mo threshold under each price-impact function");
    auto* multival = app.add_subcommand("multival", "run with many Gamma-valued Vals");
    auto* estimate = app.add_subcommand("estimate", "Monte-Carlo check of the tau estimator");
    auto* analyze = app.add_subcommand("analyze", "fixed points and analytic Mo threshold");
    for (auto* s : {run, sweep, grid, impact, multival, estimate, analyze})
        add_common(s, common);

    double k_lo = 0.02, k_hi = 0.30;
    int cells = 10;
    std::string settlement = "both";
    grid->add_option("--k-lo", k_lo, "lowest commitment");
    grid->add_option("--k-hi", k_hi, "highest commitment");
    grid->add_option("--cells", cells, "cells per axis");
    grid->add_option("--settlement", settlement, "updated, current or both");

    int n = 100, reps = 10000;
    double p = 1.3, shape = 8.0, rate = 8.0;
    estimate->add_option("--n", n, "valuations per sample");
    estimate->add_option("--reps", reps, "Monte-Carlo replicates (>= 1000)");
    estimate->add_option("--p", p, "price");
    estimate->add_option("--shape", shape, "Gamma shape");
    estimate->add_option("--rate", rate, "Gamma rate");

    int surface = 0;
    analyze->add_option("--surface", surface, "also tabulate alpha_minus and theta on an N x N (kV+, kM-) grid");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run)
            return cmd_run(common);
        if (*sweep)
            return cmd_sweep(common);
        if (*grid)
            return cmd_grid(common, k_lo, k_hi, cells, settlement);
        if (*impact)
            return cmd_impact(common);
        if (*multival)
            return cmd_multival(common);
        if (*estimate)
            return cmd_estimate(common, n, reps, p, shape, rate);
        if (*analyze)
            return cmd_analyze(common, surface);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
    return 0;
}
