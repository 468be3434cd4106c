#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "valtrack/error.hpp"
#include "valtrack/market.hpp"
#include "valtrack/metrics.hpp"
#include "valtrack/rng.hpp"
#include "valtrack/traders.hpp"

namespace valtrack {

struct PriceUpdate {
    double price = 0.0;
    double log_change = 0.0;
    bool cap_hit = false;
};

// Ratio-power impact, capped at +-eta in log price. One-sided flow moves the
// price by the full cap; no flow leaves it unchanged.
inline PriceUpdate ratio_impact(double p, double q_p, double q_s, double lambda, double eta)
{
    for (double x : {p, q_p, q_s, lambda, eta})
        detail::require_finite(x, "price update input");
    if (!(p > 0.0))
        throw InvalidInput("price must be > 0");
    if (q_p < 0.0 || q_s < 0.0)
        throw InvalidInput("order volumes must be >= 0");

    double d = 0.0;
    bool cap = false;
    if (q_p > 0.0 && q_s > 0.0) {
        const double raw = lambda * std::log(q_p / q_s);
        d = std::clamp(raw, -eta, eta);
        cap = std::abs(raw) > eta;
    } else if (q_p > 0.0) {
        d = eta;
        cap = true;
    } else if (q_s > 0.0) {
        d = -eta;
        cap = true;
    }
    return {p * std::exp(d), d, cap};
}

// Power-law impact on the order difference: log p moves by
// sign(q_p - q_s) * min(|(q_p - q_s) / liquidity|^zeta, eta).
inline PriceUpdate powerlaw_impact(double p, double q_p, double q_s, double liquidity, double zeta,
                                   double eta)
{
    for (double x : {p, q_p, q_s, liquidity, zeta, eta})
        detail::require_finite(x, "price update input");
    if (!(p > 0.0))
        throw InvalidInput("price must be > 0");
    if (!(liquidity > 0.0) || !(zeta > 0.0))
        throw InvalidInput("liquidity and zeta must be > 0");

    const double diff = q_p - q_s;
    if (diff == 0.0)
        return {p, 0.0, false};
    const double raw = std::pow(std::abs(diff / liquidity), zeta);
    const double d = std::copysign(std::min(raw, eta), diff);
    return {p * std::exp(d), d, raw > eta};
}

inline double update_price_ratio(double p, double q_p, double q_s, double lambda, double eta)
{
    return ratio_impact(p, q_p, q_s, lambda, eta).price;
}

inline double update_price_powerlaw(double p, double q_p, double q_s, double liquidity, double zeta,
                                    double eta)
{
    return powerlaw_impact(p, q_p, q_s, liquidity, zeta, eta).price;
}

inline PriceUpdate apply_impact(const MarketParams& params, double p, double q_p, double q_s)
{
    if (const auto* pl = std::get_if<PowerLaw>(&params.impact))
        return powerlaw_impact(p, q_p, q_s, pl->liquidity, pl->zeta, params.eta);
    return ratio_impact(p, q_p, q_s, params.lambda, params.eta);
}

// m' = mu log(p_new / p) + (1 - mu) m
inline double update_momentum(double m, double p, double p_new, double mu)
{
    for (double x : {m, p, p_new, mu})
        detail::require_finite(x, "momentum update input");
    if (!(p > 0.0) || !(p_new > 0.0))
        throw InvalidInput("prices must be > 0");
    return mu * std::log(p_new / p) + (1.0 - mu) * m;
}

// Executes `orders` at `p_settle` in place and returns the asset volume that
// changed hands. Bids stay fixed in cash and become demand bid / p_settle;
// offers stay fixed in asset. The larger side is scaled down pro rata to the
// smaller one.
inline double settle_in_place(MarketState& state, const StepOrders& orders, double p_settle)
{
    if (!(p_settle > 0.0) || !std::isfinite(p_settle))
        throw InvalidInput("settlement price must be > 0");
    const std::size_t n = state.traders.size();
    if (orders.bids.size() != n || orders.offers.size() != n)
        throw InvalidInput("orders do not match the trader count");

    double demand = 0.0;
    double supply = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        demand += orders.bids[i] / p_settle;
        supply += orders.offers[i];
    }
    if (!(demand > 0.0) || !(supply > 0.0))
        return 0.0;

    const double executed = std::min(demand, supply);
    const double buy_fill = executed / demand;
    const double sell_fill = executed / supply;
    for (std::size_t i = 0; i < n; ++i) {
        auto& t = state.traders[i];
        if (orders.bids[i] > 0.0) {
            const double spent = orders.bids[i] * buy_fill;
            t.cash = std::max(0.0, t.cash - spent);
            t.asset += spent / p_settle;
        }
        if (orders.offers[i] > 0.0) {
            const double sold = orders.offers[i] * sell_fill;
            t.asset = std::max(0.0, t.asset - sold);
            t.cash += sold * p_settle;
        }
    }
    return executed;
}

inline MarketState settle(MarketState state, const StepOrders& orders, double p_settle)
{
    settle_in_place(state, orders, p_settle);
    return state;
}

// Audit record of one step; its fields are the per-step CSV columns.
struct StepRecord {
    int time = 0; // index after the step
    double old_price = 0.0;
    double new_price = 0.0;
    double q_p = 0.0;
    double q_s = 0.0;
    double executed = 0.0;
    double momentum_before = 0.0;
    double momentum_after = 0.0;
    bool cap_hit = false;
    bool floored = false; // price fell under MarketParams::price_floor
};

struct StepOutcome {
    MarketState state;
    StepRecord record;
};

// Collect orders at the prevailing price, move the price, settle at the new
// or the old price, update momentum.
inline StepRecord step_in_place(MarketState& state, const MarketParams& params,
                                const CommitmentParams& k, Rng& rng)
{
    const StepOrders orders = collect_orders(state, k, rng);
    const double p = state.price;
    const PriceUpdate upd = apply_impact(params, p, orders.q_p, orders.q_s);
    const double p_settle = params.settlement == Settlement::UpdatedPrice ? upd.price : p;

    StepRecord rec;
    rec.old_price = p;
    rec.new_price = upd.price;
    rec.q_p = orders.q_p;
    rec.q_s = orders.q_s;
    rec.cap_hit = upd.cap_hit;
    rec.momentum_before = state.momentum;

    if (upd.price < params.price_floor) {
        rec.floored = true;
        rec.momentum_after = params.mu * upd.log_change + (1.0 - params.mu) * state.momentum;
        state.price = upd.price;
        state.momentum = rec.momentum_after;
        rec.time = ++state.time;
        return rec;
    }

    rec.executed = settle_in_place(state, orders, p_settle);
    state.momentum = update_momentum(state.momentum, p, upd.price, params.mu);
    state.price = upd.price;
    rec.momentum_after = state.momentum;
    rec.time = ++state.time;
    return rec;
}

inline StepOutcome step(MarketState state, const MarketParams& params, const CommitmentParams& k, Rng& rng)
{
    StepRecord rec = step_in_place(state, params, k, rng);
    return {std::move(state), rec};
}

struct RunResult {
    std::vector<double> prices;   // initial price plus one entry per step
    std::vector<double> momenta;  // same length as prices
    std::vector<std::vector<double>> wealth; // [trader][t], marked to market
    std::vector<StepRecord> records;
    MarketState final_state;
    std::optional<std::size_t> crash_step;
    std::optional<std::size_t> boom_step;
    bool floored = false; // aborted under the price floor; counts as a crash

    bool crashed() const { return floored || crash_step.has_value(); }
    bool boomed() const { return boom_step.has_value(); }
};

// Runs params.horizon steps from `initial`. The Rand stream is Rng(seed), so
// identical inputs give bit-identical results.
inline RunResult run(const MarketState& initial, const MarketParams& params, const CommitmentParams& k,
                     std::uint64_t seed, const CrashPredicate& predicate)
{
    params.validate();
    k.validate();
    Rng rng(seed);
    MarketState state = initial;

    RunResult out;
    const std::size_t n = state.traders.size();
    out.prices.reserve(static_cast<std::size_t>(params.horizon) + 1);
    out.momenta.reserve(out.prices.capacity());
    out.records.reserve(static_cast<std::size_t>(params.horizon));
    out.wealth.assign(n, {});
    auto record_point = [&] {
        out.prices.push_back(state.price);
        out.momenta.push_back(state.momentum);
        for (std::size_t i = 0; i < n; ++i)
            out.wealth[i].push_back(state.traders[i].wealth(state.price));
    };

    record_point();
    for (int t = 0; t < params.horizon; ++t) {
        const StepRecord rec = step_in_place(state, params, k, rng);
        out.records.push_back(rec);
        record_point();
        if (rec.floored) {
            out.floored = true;
            break;
        }
    }
    out.crash_step = detect_crash(out.prices, predicate);
    out.boom_step = detect_boom(out.prices, predicate);
    out.final_state = std::move(state);
    return out;
}

inline RunResult run(const MarketState& initial, const MarketParams& params, const CommitmentParams& k,
                     std::uint64_t seed)
{
    CrashPredicate pred;
    pred.horizon = params.horizon;
    return run(initial, params, k, seed, pred);
}

} // namespace valtrack
