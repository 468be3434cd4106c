#include <cmath>
#include <stdexcept>

#include "catch_amalgamated.hpp"

#include "valtrack/experiments.hpp"
#include "valtrack/output.hpp"

using namespace valtrack;
using Catch::Approx;

namespace {

// Ternary settings: refined Rand, zero initial momentum, 30% drop.
ExperimentConfig sweep_config()
{
    ExperimentConfig c;
    c.population.refined_rand = true;
    c.population.initial_momentum = 0.0;
    c.predicate.rule = RelativeDrop{0.30};
    return c;
}

} // namespace

TEST_CASE("simplex points", "[experiments]")
{
    for (int r : {1, 5, 20}) {
        const auto pts = simplex_points(r);
        CHECK(pts.size() == static_cast<std::size_t>((r + 1) * (r + 2) / 2));
        for (const auto& p : pts) {
            CHECK(std::abs(p.val_frac + p.mo_frac + p.rand_frac - 1.0) <= 1e-12);
            CHECK(p.rand_frac >= 0.0);
        }
    }
    CHECK(simplex_points(99).size() == 5050);
    CHECK_THROWS_AS(simplex_points(0), InvalidInput);
}

TEST_CASE("parallel map keeps index order", "[experiments]")
{
    const auto v = parallel_map<int>(50, 4, [](std::size_t i) { return static_cast<int>(i * i); });
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(v[i] == static_cast<int>(i * i));
    CHECK_THROWS_AS(parallel_map<int>(10, 3,
                                      [](std::size_t i) -> int {
                                          if (i >= 4)
                                              throw std::runtime_error("task " + std::to_string(i));
                                          return 0;
                                      }),
                    std::runtime_error);
}

TEST_CASE("ternary sweep", "[experiments]")
{
    auto cfg = sweep_config();
    const auto g = ternary_sweep(cfg, 5, 4);
    REQUIRE(g.points.size() == 21);

    SECTION("all-Val corner never moves")
    {
        const auto& corner = g.points.back();
        REQUIRE(corner.val_frac == 1.0);
        CHECK(corner.mean_drop == 0.0);
        CHECK(corner.crash_freq == 0.0);
    }
    SECTION("output does not depend on the number of workers")
    {
        cfg.workers = 3;
        const auto g3 = ternary_sweep(cfg, 5, 4);
        CHECK(output::ternary_csv(g3) == output::ternary_csv(g));
    }
}

TEST_CASE("crash frequency rises along rays of Mo share", "[experiments][statistical]")
{
    const auto cfg = sweep_config();
    const int reps = 30;
    for (double ratio : {0.25, 0.5, 0.75}) {
        double prev = 0.0;
        for (int i = 0; i <= 9; ++i) {
            const double mo = 0.1 * i;
            const double val = (1.0 - mo) * ratio, rand = 1.0 - mo - val;
            int hits = 0;
            for (int r = 0; r < reps; ++r)
                hits += run_mix(cfg, val, mo, rand, mix_seed(mix_seed(cfg.seed, i), r)).crashed();
            const double f = static_cast<double>(hits) / reps;
            const double se = std::sqrt((prev * (1 - prev) + f * (1 - f)) / reps);
            CHECK(f >= prev - 3.0 * std::max(se, 1.0 / reps));
            prev = f;
        }
    }
}

TEST_CASE("Mo threshold", "[experiments]")
{
    ExperimentConfig cfg;
    const auto res = threshold_search(cfg);
    CHECK(res.bracketed);
    CHECK(res.theta > 0.20);
    CHECK(res.theta < 0.23);
    CHECK(res.theta <= 0.2164806890524701 + 0.005);

    SECTION("absolute crash level gives nearly the same threshold")
    {
        cfg.predicate.rule = DropBelow{0.01};
        CHECK(std::abs(threshold_search(cfg).theta - res.theta) <= 0.005);
    }
    SECTION("deterministic without Rand")
    {
        CHECK(threshold_search(cfg).theta == res.theta);
    }
    SECTION("no bracket reports the boundary")
    {
        const auto none = threshold_search(cfg, 0.0, 0.1);
        CHECK_FALSE(none.bracketed);
        CHECK(none.theta == 0.1);
    }
    SECTION("bad bounds")
    {
        CHECK_THROWS_AS(threshold_search(cfg, 0.5, 0.4), InvalidInput);
    }
}

TEST_CASE("low asset-cash ratio booms instead of crashing", "[experiments][exploratory]")
{
    // Mirror image of the crash setting: rising initial momentum, rho < 1.
    for (double theta : {0.3, 0.5}) {
        ExperimentConfig crash_cfg;
        const auto down = run_mix(crash_cfg, 1.0 - theta, theta, 0.0, mix_seed(crash_cfg.seed, 0));
        CHECK(down.crashed());

        ExperimentConfig boom_cfg;
        boom_cfg.market.rho = 0.25;
        boom_cfg.population.initial_momentum = 0.001;
        const auto up = run_mix(boom_cfg, 1.0 - theta, theta, 0.0, mix_seed(boom_cfg.seed, 0));
        CHECK(up.boomed());
        CHECK_FALSE(up.crashed());
    }
}

TEST_CASE("commitment grid", "[experiments]")
{
    ExperimentConfig cfg;
    const auto g = commitment_grid(cfg, {0.1, 0.1}, {0.1, 0.1}, 1,
                                   {Settlement::UpdatedPrice, Settlement::CurrentPrice});
    REQUIRE(g.cells.size() == 2);
    for (const auto& c : g.cells) {
        CHECK(c.theta_analytic == Approx(0.2164806890524701).epsilon(1e-10));
        CHECK(c.theta_sim > 0.20);
        CHECK(c.theta_sim < 0.22);
    }
    CHECK(linspace(0.0, 1.0, 5)[2] == 0.5);
    CHECK_THROWS_AS(commitment_grid(cfg, {0.0, 0.1}, {0.1, 0.1}, 2), InvalidInput);
}

TEST_CASE("impact comparison", "[experiments]")
{
    const auto rep = impact_comparison(ExperimentConfig{});
    for (const auto& t : {rep.ratio_power, rep.power_law_1, rep.power_law_08}) {
        CHECK(t.theta >= 0.20);
        CHECK(t.theta <= 0.23);
    }
}

TEST_CASE("multiple valuations", "[experiments]")
{
    ExperimentConfig cfg = sweep_config();
    cfg.population.val_fraction = 0.5;
    cfg.population.mo_fraction = 0.0;
    cfg.population.rand_fraction = 0.5;
    const auto r = multival_run(cfg, 10, 300);
    CHECK(r.valuations.size() == 10);
    CHECK(r.val_index.size() == 10);
    CHECK(r.run.prices.size() == 301);
    double total = 0.0;
    for (double f : r.histogram.frequency)
        total += f;
    CHECK(total == Approx(1.0));
    CHECK(r.max_tau >= 0.0);
    CHECK(r.val_wealth_var_start == Approx(0.0).margin(1e-24));
    CHECK(r.val_wealth_var_end > r.val_wealth_var_start);

    const auto again = multival_run(cfg, 10, 300);
    CHECK(again.run.prices == r.run.prices);
    CHECK_THROWS_AS(multival_run(cfg, 0), InvalidInput);
}
