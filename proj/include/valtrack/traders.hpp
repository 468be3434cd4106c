#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "valtrack/error.hpp"
#include "valtrack/market.hpp"
#include "valtrack/rng.hpp"

namespace valtrack {

// One trader's intent for a step: cash bid and asset offered.
struct Order {
    double bid = 0.0;
    double offer = 0.0;
};

// Valuation trader: sells k- of its asset above u, bids k+ of its cash below
// u, and stays out at p == u.
inline Order val_orders(double price, double valuation, double cash, double asset,
                        double k_buy, double k_sell)
{
    if (price > valuation)
        return {0.0, k_sell * asset};
    if (price < valuation)
        return {k_buy * cash, 0.0};
    return {};
}

// Momentum trader: bids on positive momentum, offers on negative, idle at 0.
inline Order mo_orders(double momentum, double cash, double asset, double k_buy, double k_sell)
{
    if (momentum > 0.0)
        return {k_buy * cash, 0.0};
    if (momentum < 0.0)
        return {0.0, k_sell * asset};
    return {};
}

// Independent uniform fractions of cash and asset; the bid is drawn first.
inline Order rand_orders_basic(double cash, double asset, double k_buy, double k_sell, Rng& rng)
{
    const double bid = rng.uniform(0.0, k_buy) * cash;
    const double offer = rng.uniform(0.0, k_sell) * asset;
    return {bid, offer};
}

// Wealth-referenced Rand. Orders are sized against marked-to-market wealth,
// or against min(cash, asset value) once either holding drops under its
// floor. Draw order matches rand_orders_basic.
inline Order rand_orders_refined(double cash, double asset, double price, double critical_cash,
                                 double critical_asset, double k_buy, double k_sell, Rng& rng)
{
    const double asset_value = asset * price;
    double reference = cash + asset_value;
    if (cash < critical_cash || asset_value < critical_asset)
        reference = std::min(cash, asset_value);
    const double bid = std::min(rng.uniform(0.0, k_buy) * reference, cash);
    const double offer = std::min(rng.uniform(0.0, k_sell) * reference / price, asset);
    return {bid, offer};
}

inline double sample_gamma(double shape, double rate, Rng& rng)
{
    if (!(shape > 0.0) || !(rate > 0.0))
        throw InvalidInput("gamma shape and rate must be > 0");
    return rng.gamma(shape, rate);
}

// Orders of every trader for one step, plus the two aggregates the price
// update consumes. Both aggregates are in asset units: bids are converted at
// the price prevailing when the orders were collected.
struct StepOrders {
    std::vector<double> bids;
    std::vector<double> offers;
    double q_p = 0.0;
    double q_s = 0.0;

    double total_bid() const
    {
        double s = 0.0;
        for (double b : bids)
            s += b;
        return s;
    }
};

inline Order trader_orders(const TraderState& t, double price, double momentum,
                           const CommitmentParams& k, Rng& rng)
{
    return std::visit(
        [&](const auto& kind) -> Order {
            using T = std::decay_t<decltype(kind)>;
            if constexpr (std::is_same_v<T, ValTrader>) {
                return val_orders(price, kind.valuation, t.cash, t.asset, k.kV_buy, k.kV_sell);
            } else if constexpr (std::is_same_v<T, MoTrader>) {
                return mo_orders(momentum, t.cash, t.asset, k.kM_buy, k.kM_sell);
            } else {
                if (const auto* refined = std::get_if<RefinedRand>(&kind.mode))
                    return rand_orders_refined(t.cash, t.asset, price, refined->critical_cash,
                                               refined->critical_asset, k.kR_buy, k.kR_sell, rng);
                return rand_orders_basic(t.cash, t.asset, k.kR_buy, k.kR_sell, rng);
            }
        },
        t.kind);
}

inline StepOrders collect_orders(const MarketState& state, const CommitmentParams& k, Rng& rng)
{
    StepOrders orders;
    orders.bids.reserve(state.traders.size());
    orders.offers.reserve(state.traders.size());
    double bid_cash = 0.0;
    for (const auto& t : state.traders) {
        const Order o = trader_orders(t, state.price, state.momentum, k, rng);
        orders.bids.push_back(o.bid);
        orders.offers.push_back(o.offer);
        bid_cash += o.bid;
        orders.q_s += o.offer;
    }
    orders.q_p = bid_cash / state.price;
    return orders;
}

// ---------------------------------------------------------------------------
// Population construction

struct FixedValuation {
    double u = 1.0;
};

struct GammaValuation {
    double shape = 8.0;
    double rate = 8.0;
};

using ValuationSource = std::variant<FixedValuation, GammaValuation>;

inline double reference_valuation(const ValuationSource& src)
{
    if (const auto* g = std::get_if<GammaValuation>(&src))
        return g->shape / g->rate;
    return std::get<FixedValuation>(src).u;
}

// Initial composition of the market. The Val share is split evenly between
// n_vals traders; a class with a zero share is left out altogether.
struct PopulationSpec {
    double val_fraction = 1.0;
    double mo_fraction = 0.0;
    double rand_fraction = 0.0;
    int n_vals = 1;
    ValuationSource valuation = FixedValuation{};
    bool refined_rand = false;
    double critical_fraction = 0.2; // Rand floors as a share of initial holdings
    double total_cash = 1.0;
    double initial_price = 1.0;
    double initial_momentum = 0.0;
    double rho = 4.0;

    static PopulationSpec mix(double val, double mo, double rand)
    {
        PopulationSpec s;
        s.val_fraction = val;
        s.mo_fraction = mo;
        s.rand_fraction = rand;
        return s;
    }

    void validate() const
    {
        for (double f : {val_fraction, mo_fraction, rand_fraction})
            if (!(f >= 0.0 && f <= 1.0))
                throw ConfigError("population fractions must lie in [0, 1]");
        if (std::abs(val_fraction + mo_fraction + rand_fraction - 1.0) > 1e-9)
            throw ConfigError("population fractions must sum to 1");
        if (n_vals < 0 || (val_fraction > 0.0 && n_vals < 1))
            throw ConfigError("n_vals must be >= 1 when the Val share is positive");
        if (const auto* g = std::get_if<GammaValuation>(&valuation)) {
            if (!(g->shape > 0.0) || !(g->rate > 0.0))
                throw ConfigError("gamma valuation parameters must be > 0");
        } else if (!(std::get<FixedValuation>(valuation).u > 0.0)) {
            throw ConfigError("valuation must be > 0");
        }
        if (!(critical_fraction >= 0.0 && critical_fraction <= 1.0))
            throw ConfigError("critical_fraction must lie in [0, 1]");
        if (!(total_cash > 0.0) || !(initial_price > 0.0) || !(rho > 0.0))
            throw ConfigError("total cash, initial price and rho must be > 0");
    }
};

// Builds the initial market. Every trader gets the same share of C and of
// Q = rho * C / u_ref. Gamma valuations are drawn from `rng`, one per Val, in
// trader order.
inline MarketState init_population(const PopulationSpec& spec, Rng& rng)
{
    spec.validate();
    const double C = spec.total_cash;
    const double u_ref = reference_valuation(spec.valuation);
    const double Q = spec.rho * C / u_ref;

    std::vector<std::pair<double, TraderKind>> slots;
    if (spec.val_fraction > 0.0) {
        const double share = spec.val_fraction / spec.n_vals;
        for (int i = 0; i < spec.n_vals; ++i) {
            double u = u_ref;
            if (const auto* g = std::get_if<GammaValuation>(&spec.valuation))
                u = sample_gamma(g->shape, g->rate, rng);
            slots.emplace_back(share, ValTrader{u});
        }
    }
    if (spec.mo_fraction > 0.0)
        slots.emplace_back(spec.mo_fraction, MoTrader{});
    if (spec.rand_fraction > 0.0) {
        RandTrader r;
        if (spec.refined_rand) {
            const double f = spec.rand_fraction;
            r.mode = RefinedRand{spec.critical_fraction * f * C,
                                 spec.critical_fraction * f * Q * spec.initial_price};
        }
        slots.emplace_back(spec.rand_fraction, r);
    }

    MarketState state;
    state.price = spec.initial_price;
    state.momentum = spec.initial_momentum;
    state.u_ref = u_ref;
    double cash_left = C;
    double asset_left = Q;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        TraderState t;
        t.kind = slots[i].second;
        if (i + 1 == slots.size()) {
            t.cash = cash_left;
            t.asset = asset_left;
        } else {
            t.cash = slots[i].first * C;
            t.asset = slots[i].first * Q;
            cash_left -= t.cash;
            asset_left -= t.asset;
        }
        state.traders.push_back(t);
    }
    state.total_cash = state.cash_sum();
    state.total_asset = state.asset_sum();
    return state;
}

} // namespace valtrack
