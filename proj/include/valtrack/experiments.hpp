#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "valtrack/analysis.hpp"
#include "valtrack/engine.hpp"
#include "valtrack/error.hpp"
#include "valtrack/market.hpp"
#include "valtrack/metrics.hpp"
#include "valtrack/pool.hpp"
#include "valtrack/rng.hpp"
#include "valtrack/traders.hpp"

namespace valtrack {

struct ExperimentConfig {
    MarketParams market;
    CommitmentParams commitments;
    PopulationSpec population = default_population();
    CrashPredicate predicate;
    std::uint64_t seed = 20170101;
    int replicates = 20;
    int resolution = 20;
    int workers = 1;

    // Val + Mo at p0 = u = 1 with m0 = -0.001: the single-threshold setting.
    static PopulationSpec default_population()
    {
        PopulationSpec p;
        p.initial_momentum = -0.001;
        return p;
    }

    void validate() const
    {
        market.validate();
        commitments.validate();
        population.validate();
        predicate.validate();
        if (replicates < 1)
            throw ConfigError("replicates must be >= 1");
        if (resolution < 1)
            throw ConfigError("resolution must be >= 1");
        if (workers < 1)
            throw ConfigError("workers must be >= 1");
    }
};

// Builds the population for the given class mix. Gamma valuations and the run
// use independent streams derived from `task_seed`.
inline MarketState make_initial_state(const ExperimentConfig& cfg, double val, double mo, double rand,
                                      std::uint64_t task_seed)
{
    PopulationSpec spec = cfg.population;
    spec.val_fraction = val;
    spec.mo_fraction = mo;
    spec.rand_fraction = rand;
    spec.rho = cfg.market.rho;
    Rng init_rng(mix_seed(task_seed, 0));
    return init_population(spec, init_rng);
}

inline RunResult run_mix(const ExperimentConfig& cfg, double val, double mo, double rand, std::uint64_t task_seed)
{
    const MarketState initial = make_initial_state(cfg, val, mo, rand, task_seed);
    CrashPredicate pred = cfg.predicate;
    pred.horizon = cfg.market.horizon;
    return run(initial, cfg.market, cfg.commitments, mix_seed(task_seed, 1), pred);
}

// ---------------------------------------------------------------------------
// Threshold search

struct ThresholdResult {
    double theta = 1.0;     // smallest crashing Mo fraction found (upper end of the final bracket)
    bool bracketed = false; // false: the predicate did not change sign over [lo, hi]
    int probes = 0;
};

// Crash outcome at Mo fraction `theta`; the Rand share stays fixed and Val
// takes the rest. With Rand present the outcome is the majority over
// cfg.replicates seeded runs.
inline bool crashes_at(const ExperimentConfig& cfg, double theta, int workers = 1)
{
    const double rand = cfg.population.rand_fraction;
    const double val = std::max(0.0, 1.0 - rand - theta);
    if (rand == 0.0)
        return run_mix(cfg, val, theta, 0.0, mix_seed(cfg.seed, 0)).crashed();
    const auto hits = parallel_map<int>(static_cast<std::size_t>(cfg.replicates), workers, [&](std::size_t r) {
        return run_mix(cfg, val, theta, rand, mix_seed(cfg.seed, r)).crashed() ? 1 : 0;
    });
    int total = 0;
    for (int h : hits)
        total += h;
    return 2 * total > cfg.replicates;
}

// Bisection on the initial Mo wealth fraction.
inline ThresholdResult threshold_search(const ExperimentConfig& cfg, double lo = 0.0, double hi = 1.0,
                                        double tol = 5e-4)
{
    cfg.validate();
    hi = std::min(hi, 1.0 - cfg.population.rand_fraction);
    if (!(lo >= 0.0 && lo < hi))
        throw InvalidInput("threshold_search needs 0 <= lo < hi");
    if (!(tol > 0.0))
        throw InvalidInput("tol must be > 0");

    ThresholdResult res;
    res.probes = 2;
    if (crashes_at(cfg, lo, cfg.workers)) {
        res.theta = lo;
        return res;
    }
    if (!crashes_at(cfg, hi, cfg.workers)) {
        res.theta = hi;
        return res;
    }
    res.bracketed = true;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        ++res.probes;
        if (crashes_at(cfg, mid, cfg.workers))
            hi = mid;
        else
            lo = mid;
    }
    res.theta = hi;
    return res;
}

// ---------------------------------------------------------------------------
// Ternary sweep

struct TernaryPoint {
    double val_frac = 0.0;
    double mo_frac = 0.0;
    double rand_frac = 0.0;
    double mean_drop = 0.0;
    double crash_freq = 0.0;
    double boom_freq = 0.0;
};

struct TernaryGrid {
    int resolution = 0;
    int replicates = 0;
    std::vector<TernaryPoint> points;
};

// Simplex points in a fixed order: val index outer, mo index inner.
inline std::vector<TernaryPoint> simplex_points(int resolution)
{
    if (resolution < 1)
        throw InvalidInput("resolution must be >= 1");
    std::vector<TernaryPoint> pts;
    pts.reserve(static_cast<std::size_t>((resolution + 1) * (resolution + 2) / 2));
    const double r = resolution;
    for (int a = 0; a <= resolution; ++a)
        for (int b = 0; a + b <= resolution; ++b) {
            TernaryPoint p;
            p.val_frac = a / r;
            p.mo_frac = b / r;
            p.rand_frac = (resolution - a - b) / r;
            pts.push_back(p);
        }
    return pts;
}

// Runs cfg.replicates simulations at every simplex point and records the mean
// largest relative drop and the crash and boom frequencies under cfg.predicate.
// The seed of (point i, replicate r) is mix(mix(seed, i), r).
inline TernaryGrid ternary_sweep(const ExperimentConfig& cfg, int resolution, int replicates)
{
    cfg.validate();
    if (replicates < 1)
        throw InvalidInput("replicates must be >= 1");
    TernaryGrid grid;
    grid.resolution = resolution;
    grid.replicates = replicates;
    grid.points = simplex_points(resolution);

    struct Outcome {
        double drop = 0.0;
        bool crash = false;
        bool boom = false;
    };
    const std::size_t reps = static_cast<std::size_t>(replicates);
    const auto outcomes = parallel_map<Outcome>(grid.points.size() * reps, cfg.workers, [&](std::size_t task) {
        const std::size_t i = task / reps, r = task % reps;
        const auto& pt = grid.points[i];
        const auto res = run_mix(cfg, pt.val_frac, pt.mo_frac, pt.rand_frac, mix_seed(mix_seed(cfg.seed, i), r));
        const std::size_t last = std::min(res.prices.size(), static_cast<std::size_t>(cfg.market.horizon) + 1);
        const std::span<const double> window(res.prices.data(), last);
        return Outcome{max_relative_drop(window), res.crashed(), res.boomed()};
    });

    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        auto& pt = grid.points[i];
        for (std::size_t r = 0; r < reps; ++r) {
            const auto& o = outcomes[i * reps + r];
            pt.mean_drop += o.drop;
            pt.crash_freq += o.crash ? 1.0 : 0.0;
            pt.boom_freq += o.boom ? 1.0 : 0.0;
        }
        pt.mean_drop /= replicates;
        pt.crash_freq /= replicates;
        pt.boom_freq /= replicates;
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Commitment grid

struct GridCell {
    double k_buy = 0.0;
    double k_sell = 0.0;
    Settlement settlement = Settlement::UpdatedPrice;
    double theta_analytic = 1.0;
    double theta_sim = 1.0;
};

struct CommitmentGrid {
    std::vector<double> k_plus;
    std::vector<double> k_minus;
    std::vector<GridCell> cells; // settlement outer, k_plus, then k_minus
};

inline std::vector<double> linspace(double lo, double hi, int n)
{
    if (n < 1)
        throw InvalidInput("linspace needs n >= 1");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return v;
}

inline const char* settlement_name(Settlement s)
{
    return s == Settlement::UpdatedPrice ? "updated" : "current";
}

// Val and Mo share k+ (buy) and k- (sell). Each cell gets the analytic Mo
// threshold and the bisected one, with no Rand and a fall below 0.01 as the
// crash predicate.
inline CommitmentGrid commitment_grid(const ExperimentConfig& cfg, std::pair<double, double> k_plus_range,
                                      std::pair<double, double> k_minus_range, int cells,
                                      const std::vector<Settlement>& settlements = {Settlement::UpdatedPrice})
{
    for (double k : {k_plus_range.first, k_plus_range.second, k_minus_range.first, k_minus_range.second})
        if (!(k > 0.0 && k <= 1.0))
            throw InvalidInput("commitment ranges must lie in (0, 1]");
    CommitmentGrid grid;
    grid.k_plus = linspace(k_plus_range.first, k_plus_range.second, cells);
    grid.k_minus = linspace(k_minus_range.first, k_minus_range.second, cells);
    for (Settlement s : settlements)
        for (double kp : grid.k_plus)
            for (double km : grid.k_minus)
                grid.cells.push_back({kp, km, s, 1.0, 1.0});

    ExperimentConfig base = cfg;
    base.population.rand_fraction = 0.0;
    base.predicate.rule = DropBelow{0.01};
    base.workers = 1;

    const auto results = parallel_map<GridCell>(grid.cells.size(), cfg.workers, [&](std::size_t i) {
        GridCell cell = grid.cells[i];
        ExperimentConfig c = base;
        c.market.settlement = cell.settlement;
        c.commitments.kV_buy = c.commitments.kM_buy = cell.k_buy;
        c.commitments.kV_sell = c.commitments.kM_sell = cell.k_sell;
        const auto consts = analysis::AnalysisConstants::unit(c.market, c.commitments);
        cell.theta_analytic = analysis::mo_crash_threshold_analytic(consts, c.market.rho);
        cell.theta_sim = threshold_search(c).theta;
        return cell;
    });
    grid.cells = results;
    return grid;
}

// ---------------------------------------------------------------------------
// Impact-function comparison

struct ImpactReport {
    ThresholdResult ratio_power;
    ThresholdResult power_law_1;
    ThresholdResult power_law_08;
};

inline ImpactReport impact_comparison(const ExperimentConfig& cfg)
{
    auto with = [&](ImpactModel m) {
        ExperimentConfig c = cfg;
        c.market.impact = m;
        return threshold_search(c);
    };
    ImpactReport rep;
    rep.ratio_power = with(RatioPower{});
    rep.power_law_1 = with(PowerLaw{1.0, 1.0});
    rep.power_law_08 = with(PowerLaw{0.8, 1.0});
    return rep;
}

// ---------------------------------------------------------------------------
// Multiple valuations

struct MultivalResult {
    RunResult run;
    std::vector<double> valuations; // one per Val, in trader order
    std::vector<std::size_t> val_index; // trader index of each Val
    Histogram histogram;
    double max_tau = 0.0;             // max over t of tau(p_t, mean valuation)
    double val_wealth_var_start = 0.0; // sample variance of Val wealths at t = 0
    double val_wealth_var_end = 0.0;   // and at the last recorded step
};

// One run with n_vals Gamma-valued Vals sharing cfg.population.val_fraction.
inline MultivalResult multival_run(const ExperimentConfig& cfg, int n_vals = 10, int horizon = 1000,
                                   std::uint64_t seed = 0)
{
    if (n_vals < 1)
        throw InvalidInput("n_vals must be >= 1");
    ExperimentConfig c = cfg;
    c.market.horizon = horizon;
    c.population.n_vals = n_vals;
    if (!std::holds_alternative<GammaValuation>(c.population.valuation))
        c.population.valuation = GammaValuation{};
    c.validate();

    MultivalResult out;
    const auto& pop = c.population;
    out.run = run_mix(c, pop.val_fraction, pop.mo_fraction, pop.rand_fraction, seed == 0 ? c.seed : seed);

    const MarketState& fin = out.run.final_state;
    for (std::size_t i = 0; i < fin.traders.size(); ++i)
        if (const auto* v = std::get_if<ValTrader>(&fin.traders[i].kind)) {
            out.valuations.push_back(v->valuation);
            out.val_index.push_back(i);
        }

    if (out.valuations.size() >= 2) {
        out.histogram = price_level_histogram(out.run.prices, out.valuations);
        std::vector<double> w0, w1;
        for (std::size_t i : out.val_index) {
            w0.push_back(out.run.wealth[i].front());
            w1.push_back(out.run.wealth[i].back());
        }
        out.val_wealth_var_start = detail::moments(w0).variance;
        out.val_wealth_var_end = detail::moments(w1).variance;
    }
    if (!out.valuations.empty()) {
        double mean = 0.0;
        for (double v : out.valuations)
            mean += v;
        mean /= static_cast<double>(out.valuations.size());
        for (double p : out.run.prices)
            out.max_tau = std::max(out.max_tau, tau(p, mean));
    }
    return out;
}

} // namespace valtrack
