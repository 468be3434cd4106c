#include <cmath>
#include <limits>

#include "catch_amalgamated.hpp"

#include "valtrack/analysis.hpp"
#include "valtrack/engine.hpp"

using namespace valtrack;
using namespace valtrack::analysis;
using Catch::Approx;

namespace {

AnalysisConstants defaults() { return AnalysisConstants::unit(MarketParams{}, CommitmentParams{}); }

AnalysisConstants with_k(double kVb, double kVs, double kMb, double kMs, double lambda = 0.04, double eta = 0.1)
{
    MarketParams mp;
    mp.lambda = lambda;
    mp.eta = eta;
    CommitmentParams k{kVb, kVs, kMb, kMs, 0.1, 0.1};
    return AnalysisConstants::unit(mp, k);
}

// Val/Mo market with Mo holding `theta` of both cash and asset, as engine state.
MarketState val_mo(double theta, double price = 1.0, double m = -0.001)
{
    auto spec = PopulationSpec::mix(1.0 - theta, theta, 0.0);
    spec.initial_price = price;
    spec.initial_momentum = m;
    Rng rng(1);
    return init_population(spec, rng);
}

} // namespace

TEST_CASE("reduce", "[analysis]")
{
    const auto c = defaults();
    CHECK(c.A == Approx(4.0));
    CHECK(c.B == Approx(4.0));
    const auto s = reduce(val_mo(0.216, 1.0, 0.0), c);
    CHECK(s.pi == 0.0);
    CHECK(s.m == 0.0);
    CHECK(s.alpha == Approx(-0.09716374845364761).epsilon(1e-12));

    Holdings g{0.5, 0.5, 0.5, 0.5, 0, 0};
    CHECK(reduce(1.0, 1.0, -0.001, g, c).alpha == Approx(0.0).margin(1e-15));

    Holdings empty{0.0, 1.0, 1.0, 1.0, 0, 0};
    CHECK_THROWS_AS(reduce(1.0, 1.0, 0.0, empty, c), DomainError);

    MarketState with_rand = val_mo(0.2);
    with_rand.traders.push_back(TraderState{0.1, 0.1, RandTrader{}});
    CHECK_THROWS_AS(reduce(with_rand, c), ContractError);
}

TEST_CASE("reconstruct inverts reduce", "[analysis][property]")
{
    Rng rng(21);
    const double C = 1.0, Q = 4.0;
    const auto c = defaults();
    int checked = 0;
    while (checked < 100) {
        const double cv = rng.uniform(0.01, 0.99), qv = rng.uniform(0.01, 0.99);
        if (std::abs(cv + qv - 1.0) < 0.05)
            continue; // back-diagonal
        const double p = std::exp(rng.uniform(-0.5, 0.5));
        Holdings h{cv * C, qv * Q, (1 - cv) * C, (1 - qv) * Q, 0, 0};
        const auto s = reduce(p, 1.0, 0.001, h, c);
        CHECK(feasibility(s, c) <= 1e-12);
        const auto back = reconstruct(s, c, C, Q);
        CHECK(back.cV == Approx(h.cV).margin(1e-12));
        CHECK(back.qV == Approx(h.qV).margin(1e-12));
        CHECK(back.cM == Approx(h.cM).margin(1e-12));
        CHECK(back.qM == Approx(h.qM).margin(1e-12));
        ++checked;
    }

    SECTION("infeasible coordinates give shares outside [0, 1]")
    {
        int n = 0;
        while (n < 100) {
            ReducedState s{rng.uniform(-0.5, 0.5), 0.0, rng.uniform(-3, 3), rng.uniform(-3, 3)};
            if (feasibility(s, c) <= 1e-6)
                continue;
            const auto h = reconstruct(s, c, C, Q);
            CHECK_FALSE(h.feasible(1e-12));
            ++n;
        }
    }

    SECTION("back-diagonal is degenerate")
    {
        ReducedState s{0.0, 0.0, 0.3, 0.3};
        CHECK_THROWS_AS(reconstruct(s, c, C, Q), DegenerateError);
    }
}

TEST_CASE("region classification", "[analysis]")
{
    CHECK(classify_region(1e-3, -1e-3) == Region::Case1);
    CHECK(classify_region(-1e-3, -1e-3) == Region::Case2);
    CHECK(classify_region(-1e-3, 1e-3) == Region::Case3);
    CHECK(classify_region(1e-3, 1e-3) == Region::Case4);
    CHECK(classify_region(0.0, 0.1) == Region::Boundary);
    CHECK(classify_region(0.1, 0.0) == Region::Boundary);
    CHECK_THROWS_AS(reduced_step(ReducedState{0.0, 0.1, 0, 0}, defaults()), BoundaryError);
}

TEST_CASE("reduced step", "[analysis]")
{
    const auto c = defaults();
    SECTION("over-priced with falling momentum")
    {
        const ReducedState s{0.05, -0.001, 0.3, -0.2};
        const auto n = reduced_step(s, c);
        CHECK(n.pi == Approx(0.05 - 0.1));
        CHECK(n.m == Approx(0.998 * -0.001 - 0.002 * 0.1));
        CHECK(n.alpha == Approx(0.4));
        CHECK(n.beta == Approx(-0.1));
    }
    SECTION("under-priced with rising momentum")
    {
        const ReducedState s{-0.05, 0.001, 0.3, -0.2};
        const auto n = reduced_step(s, c);
        CHECK(n.pi == Approx(0.05));
        CHECK(n.m == Approx(0.998 * 0.001 + 0.002 * 0.1));
        CHECK(n.alpha == Approx(0.2));
        CHECK(n.beta == Approx(-0.3));
    }
    SECTION("inner increment")
    {
        const ReducedState s{-0.01, -0.001, -0.05, 0.0};
        CHECK(price_increment(s, c) == Approx(-0.002));
        CHECK(reduced_step(s, c).pi == Approx(-0.012));
    }
}

TEST_CASE("alpha map", "[analysis]")
{
    SECTION("equal commitments fix 0")
    {
        CHECK(alpha_map(0.0, defaults()) == Approx(0.0).margin(1e-15));
        CHECK(beta_map(0.0, defaults()) == Approx(0.0).margin(1e-15));
    }
    SECTION("continuity at the junctions")
    {
        Rng rng(3);
        for (int i = 0; i < 50; ++i) {
            const auto c = with_k(rng.uniform(0.02, 0.4), rng.uniform(0.02, 0.4), rng.uniform(0.02, 0.4),
                                  rng.uniform(0.02, 0.4));
            const double e = c.eta / c.lambda;
            for (double x : {0.0, e, -e}) {
                CHECK(alpha_map(x + 1e-13, c) == Approx(alpha_map(x - 1e-13, c)).margin(1e-12));
                CHECK(beta_map(x + 1e-13, c) == Approx(beta_map(x - 1e-13, c)).margin(1e-12));
            }
        }
    }
    SECTION("slope at least 1 - lambda")
    {
        Rng rng(4);
        for (int i = 0; i < 2000; ++i) {
            const auto c = with_k(rng.uniform(0.02, 0.4), rng.uniform(0.02, 0.4), rng.uniform(0.02, 0.4),
                                  rng.uniform(0.02, 0.4));
            const double a1 = rng.uniform(-6, 4), a2 = rng.uniform(-6, 4);
            if (a1 == a2)
                continue;
            const double ka = (alpha_map(a2, c) - alpha_map(a1, c)) / (a2 - a1);
            CHECK(ka >= 1.0 - c.lambda - 1e-9);
            const double b1 = -a1, b2 = -a2;
            const double kb = (beta_map(b2, c) - beta_map(b1, c)) / (b2 - b1);
            CHECK(kb >= 1.0 - c.lambda - 1e-9);
        }
    }
    SECTION("iteration is monotone")
    {
        Rng rng(5);
        for (int i = 0; i < 200; ++i) {
            const auto c = with_k(rng.uniform(0.02, 0.4), 0.1, 0.1, rng.uniform(0.02, 0.4));
            double a = rng.uniform(-3, 3);
            const double first = alpha_map(a, c) - a;
            for (int t = 0; t < 100; ++t) {
                double n;
                try {
                    n = alpha_map(a, c);
                } catch (const DomainError&) {
                    break;
                }
                if (first > 0)
                    CHECK(n - a >= 0.0);
                else if (first < 0)
                    CHECK(n - a <= 0.0);
                a = n;
            }
        }
    }
    SECTION("divergent argument")
    {
        const auto c = with_k(0.1, 0.1, 0.1, 1.0);
        CHECK_THROWS_AS(alpha_map(1.0, c), DomainError);
    }
}

TEST_CASE("alpha fixed points", "[analysis]")
{
    SECTION("equal commitments: alpha_minus is 0")
    {
        const auto rep = alpha_fixed_points(defaults());
        CHECK(rep.trivial);
        CHECK(rep.exists);
        CHECK(rep.extremal == 0.0);
        CHECK(rep.x_min == Approx(-0.9555114450274365).epsilon(1e-12));
        CHECK(rep.window_lo == Approx(0.09516258196404048).epsilon(1e-12));
        CHECK(rep.window_hi == Approx(0.10258993978547387).epsilon(1e-12));
        CHECK(rep.outer_window);
        for (const auto& r : rep.roots)
            CHECK(r.residual <= 1e-10);
    }
    SECTION("outside the window there is no outer root")
    {
        CHECK(alpha_fixed_points(with_k(0.10, 0.1, 0.1, 0.1)).outer_window);
        const auto rep = alpha_fixed_points(with_k(0.11, 0.1, 0.1, 0.1));
        CHECK_FALSE(rep.outer_window);
        for (const auto& r : rep.roots)
            CHECK(r.range != RootRange::Outer);
    }
    SECTION("nontrivial roots have tiny residuals and agree with Newton")
    {
        Rng rng(8);
        int with_outer = 0, with_inner = 0, none = 0;
        for (int i = 0; i < 2000; ++i) {
            const double ks = rng.uniform(0.05, 0.5);
            const double kb = rng.uniform(0.01, ks);
            const auto c = with_k(kb, 0.1, 0.1, ks, rng.uniform(0.01, 0.1), rng.uniform(0.05, 0.2));
            const auto rep = alpha_fixed_points(c);
            for (const auto& r : rep.roots) {
                CHECK(r.residual <= 1e-10);
                CHECK(r.value < 0.0);
                if (r.range == RootRange::Outer) {
                    ++with_outer;
                    const auto nr = analysis::detail::outer_root_newton(kb, ks, c.lambda, c.eta);
                    REQUIRE(nr.has_value());
                    CHECK(*nr == Approx(r.value).margin(1e-10));
                } else {
                    ++with_inner;
                    CHECK(r.value >= -c.eta / c.lambda);
                }
            }
            if (!rep.exists) {
                ++none;
                CHECK(rep.extremal == -std::numeric_limits<double>::infinity());
                CHECK(mo_crash_threshold_analytic(c, 4.0) == 1.0);
            } else {
                CHECK(rep.extremal == rep.roots.back().value);
            }
        }
        CHECK(with_outer > 0);
        CHECK(with_inner > 0);
        CHECK(none > 0);
    }
}

TEST_CASE("beta fixed points", "[analysis]")
{
    const auto eq = beta_fixed_points(defaults());
    CHECK(eq.trivial);
    CHECK(eq.extremal == 0.0);

    SECTION("residuals")
    {
        Rng rng(9);
        for (int i = 0; i < 500; ++i) {
            const auto c = with_k(0.1, rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5), 0.1);
            for (const auto& r : beta_fixed_points(c).roots)
                CHECK(r.residual <= 1e-10);
        }
    }

    // The beta map with (kV-, kM+) = (a, b) is the alpha map with
    // (kV+, kM-) = (a, b) reflected through the origin.
    SECTION("beta roots mirror alpha roots under buy/sell exchange")
    {
        Rng rng(10);
        for (int i = 0; i < 20; ++i) {
            const double a = rng.uniform(0.02, 0.4), b = rng.uniform(0.02, 0.4);
            const double lambda = rng.uniform(0.01, 0.1), eta = rng.uniform(0.05, 0.2);
            const auto ca = with_k(a, 0.1, 0.1, b, lambda, eta);
            const auto cb = with_k(0.1, a, b, 0.1, lambda, eta);
            const auto ra = alpha_fixed_points(ca);
            const auto rb = beta_fixed_points(cb);
            REQUIRE(ra.roots.size() == rb.roots.size());
            for (std::size_t j = 0; j < ra.roots.size(); ++j)
                CHECK(rb.roots[rb.roots.size() - 1 - j].value == Approx(-ra.roots[j].value).margin(1e-12));
            CHECK(rb.extremal == -ra.extremal);
            for (double x = -5.0; x <= 5.0; x += 0.37)
                CHECK(beta_map(-x, cb) == Approx(-alpha_map(x, ca)).margin(1e-12));
        }
    }
}

TEST_CASE("sufficient conditions", "[analysis]")
{
    const auto c = defaults();
    const auto s25 = reduce(val_mo(0.25, 1.0, -1e-4), c);
    CHECK(s25.alpha == Approx(std::log(3.0) - std::log(4.0)));
    CHECK(crash_sufficient(s25, c));
    const auto s10 = reduce(val_mo(0.10, 1.0, -1e-4), c);
    CHECK(s10.alpha == Approx(std::log(9.0) - std::log(4.0)));
    CHECK_FALSE(crash_sufficient(s10, c));

    CHECK_THROWS_AS(crash_sufficient(ReducedState{0.5, 0.0, -1, 0}, c), ContractError);
    CHECK_THROWS_AS(boom_sufficient(ReducedState{0.0, 0.01, 0, 1}, c), ContractError);
    CHECK(boom_sufficient(ReducedState{0.0, 0.0, 0.0, 0.2}, c));
    CHECK_FALSE(boom_sufficient(ReducedState{0.0, 0.0, 0.0, 0.05}, c));
}

// Over commitments above lambda / (1 + lambda) the condition predicts a crash
// of the full engine (trades at the current price).
TEST_CASE("crash-sufficient states crash in the engine", "[analysis][property]")
{
    Rng rng(13);
    MarketParams mp;
    mp.settlement = Settlement::CurrentPrice;
    mp.horizon = 3000;
    CrashPredicate drop;
    drop.rule = DropBelow{0.01};
    drop.horizon = mp.horizon;
    int tested = 0;
    for (int i = 0; i < 400 && tested < 60; ++i) {
        const double kp = rng.uniform(0.05, 0.4), km = rng.uniform(0.05, 0.4);
        CommitmentParams k{kp, km, kp, km, 0.1, 0.1};
        const auto c = AnalysisConstants::unit(mp, k);
        const auto state = val_mo(rng.uniform(0.15, 0.6), 1.0, -1e-4);
        if (!crash_sufficient(reduce(state, c), c))
            continue;
        ++tested;
        const auto r = run(state, mp, k, 1, drop);
        CHECK(r.crashed());
    }
    CHECK(tested >= 30);
}

TEST_CASE("increment accumulation", "[analysis]")
{
    const auto c = with_k(0.08, 0.1, 0.1, 0.12);
    ReducedState s = reduce(val_mo(0.3, std::exp(-0.01), -0.0005), c);
    const ReducedState s0 = s;
    std::vector<double> phis;
    for (int n = 0; n < 60 && classify_region(s.pi, s.m) == Region::Case2; ++n) {
        phis.push_back(price_increment(s, c));
        s = reduced_step(s, c);
    }
    REQUIRE(phis.size() > 10);
    const auto [pi, m] = accumulate_increments(s0.pi, s0.m, phis, c.mu);
    CHECK(pi == Approx(s.pi).margin(1e-12));
    CHECK(m == Approx(s.m).margin(1e-12));
}

TEST_CASE("analytic Mo threshold", "[analysis]")
{
    CHECK(mo_crash_threshold_analytic(defaults(), 4.0) == Approx(0.2164806890524701).epsilon(1e-12));
    CHECK(mo_crash_threshold_analytic(defaults(), 1e-12) == Approx(1.0).margin(1e-9));
    CHECK(mo_crash_threshold_analytic(defaults(), 1e12) < 1e-10);
    CHECK_THROWS_AS(mo_crash_threshold_analytic(defaults(), 0.0), InvalidInput);
}

TEST_CASE("engine and reduced map agree", "[analysis][property]")
{
    Rng rng(17);
    double worst = 0.0;
    int full = 0;
    for (int d = 0; d < 100; ++d) {
        MarketParams mp;
        mp.settlement = Settlement::CurrentPrice;
        mp.price_floor = 1e-300;
        mp.lambda = rng.uniform(0.01, 0.1);
        mp.eta = rng.uniform(0.05, 0.2);
        mp.mu = rng.uniform(0.001, 0.05);
        mp.rho = rng.uniform(0.5, 6.0);
        CommitmentParams k{rng.uniform(0.02, 0.4), rng.uniform(0.02, 0.4), rng.uniform(0.02, 0.4),
                           rng.uniform(0.02, 0.4), 0.1, 0.1};
        auto spec = PopulationSpec::mix(0.0, 0.0, 0.0);
        const double theta = rng.uniform(0.05, 0.6);
        spec.val_fraction = 1.0 - theta;
        spec.mo_fraction = theta;
        spec.rho = mp.rho;
        spec.initial_price = std::exp(rng.uniform(-0.05, 0.05));
        spec.initial_momentum = rng.uniform(-0.002, 0.002);
        Rng init(1);
        auto st = init_population(spec, init);
        const auto c = AnalysisConstants::from(mp, k, 1.0, st.total_cash, st.total_asset);
        auto red = reduce(st, c);
        Rng steps(2);
        int t = 0;
        for (; t < 200; ++t) {
            if (classify_region(red.pi, red.m) == Region::Boundary)
                break;
            red = reduced_step(red, c);
            step_in_place(st, mp, k, steps);
            const auto e = reduce(st, c);
            worst = std::max({worst, std::abs(e.pi - red.pi), std::abs(e.m - red.m), std::abs(e.alpha - red.alpha),
                              std::abs(e.beta - red.beta)});
        }
        full += t == 200;
    }
    CHECK(worst <= 1e-9);
    CHECK(full == 100);
}
