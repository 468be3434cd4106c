#pragma once

#include <numeric>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "valtrack/error.hpp"

namespace valtrack {

// Price impact: p' = p * (q_p / q_s)^lambda.
struct RatioPower {};

// Price impact: log p moves by sign(q_p - q_s) * |(q_p - q_s) / liquidity|^zeta.
struct PowerLaw {
    double zeta = 1.0;
    double liquidity = 1.0;
};

using ImpactModel = std::variant<RatioPower, PowerLaw>;

enum class Settlement {
    UpdatedPrice, // trades execute at the post-update price
    CurrentPrice, // trades execute at the price orders were collected at
};

struct MarketParams {
    double lambda = 0.04; // impact exponent
    double eta = 0.1;     // cap on |delta log p| per step
    double mu = 0.002;    // momentum smoothing
    double rho = 4.0;     // asset-cash ratio, Q = rho * C / u
    ImpactModel impact = RatioPower{};
    Settlement settlement = Settlement::UpdatedPrice;
    int horizon = 250;
    double price_floor = 1e-12; // runs abort below this price

    void validate() const
    {
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw InvalidInput("lambda must be > 0");
        if (!(eta > 0.0) || !std::isfinite(eta))
            throw InvalidInput("eta must be > 0");
        if (!(mu > 0.0 && mu < 1.0))
            throw InvalidInput("mu must lie in (0, 1)");
        if (!(rho > 0.0) || !std::isfinite(rho))
            throw InvalidInput("rho must be > 0");
        if (const auto* pl = std::get_if<PowerLaw>(&impact)) {
            if (!(pl->zeta > 0.0))
                throw InvalidInput("power-law zeta must be > 0");
            if (!(pl->liquidity > 0.0))
                throw InvalidInput("power-law liquidity must be > 0");
        }
        if (horizon < 1)
            throw InvalidInput("horizon must be >= 1");
    }
};

// Fractions of holdings committed per step: buy -> fraction of cash bid,
// sell -> fraction of asset offered.
struct CommitmentParams {
    double kV_buy = 0.1;
    double kV_sell = 0.1;
    double kM_buy = 0.1;
    double kM_sell = 0.1;
    double kR_buy = 0.1;
    double kR_sell = 0.1;

    // All six commitments set to one value.
    static constexpr CommitmentParams uniform(double k) { return {k, k, k, k, k, k}; }

    void validate() const
    {
        for (double k : {kV_buy, kV_sell, kM_buy, kM_sell, kR_buy, kR_sell})
            if (!(k >= 0.0 && k <= 1.0))
                throw InvalidInput("commitment parameters must lie in [0, 1]");
    }
};

struct ValTrader {
    double valuation = 1.0;
};

struct MoTrader {};

// Rand orders are scaled by the marked-to-market wealth, or by the smaller of
// the cash and asset values once either falls under its critical floor.
struct RefinedRand {
    double critical_cash = 0.0;
    double critical_asset = 0.0; // currency value of the asset holding
};

struct BasicRand {};

using RandMode = std::variant<BasicRand, RefinedRand>;

struct RandTrader {
    RandMode mode = BasicRand{};
};

using TraderKind = std::variant<ValTrader, MoTrader, RandTrader>;

struct TraderState {
    double cash = 0.0;
    double asset = 0.0;
    TraderKind kind = MoTrader{};

    double wealth(double price) const { return cash + asset * price; }

    bool is_val() const { return std::holds_alternative<ValTrader>(kind); }
    bool is_mo() const { return std::holds_alternative<MoTrader>(kind); }
    bool is_rand() const { return std::holds_alternative<RandTrader>(kind); }
};

inline std::string kind_name(const TraderKind& kind)
{
    return std::visit(
        [](const auto& k) -> std::string {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, ValTrader>)
                return "val";
            else if constexpr (std::is_same_v<T, MoTrader>)
                return "mo";
            else
                return std::holds_alternative<RefinedRand>(k.mode) ? "rand_refined" : "rand";
        },
        kind);
}

struct MarketState {
    double price = 1.0;
    double momentum = 0.0;
    int time = 0;
    std::vector<TraderState> traders;
    double total_cash = 0.0;  // C
    double total_asset = 0.0; // Q
    double u_ref = 1.0;       // reference valuation used to size Q

    double cash_sum() const
    {
        return std::accumulate(traders.begin(), traders.end(), 0.0,
                               [](double s, const TraderState& t) { return s + t.cash; });
    }

    double asset_sum() const
    {
        return std::accumulate(traders.begin(), traders.end(), 0.0,
                               [](double s, const TraderState& t) { return s + t.asset; });
    }
};

} // namespace valtrack
