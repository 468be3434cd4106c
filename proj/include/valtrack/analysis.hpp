#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "valtrack/error.hpp"
#include "valtrack/market.hpp"

// Reduced-coordinate dynamics of the Val/Mo market (no Rand, trades settled at
// the current price).
//
// With a single Val (valuation u) and a single Mo, conservation of cash C and
// asset Q leaves four free coordinates:
//
//   pi    = log(p / u)
//   m     = momentum
//   alpha = log(kV+ cV / (kM- qM p))   Val buying power over Mo selling power
//   beta  = log(kM+ cM / (kV- qV p))   Mo buying power over Val selling power
//
// The map is piecewise in the signs of pi and m; alpha drives the dynamics
// while the market is under-priced with falling momentum, beta while it is
// over-priced with rising momentum.

namespace valtrack::analysis {

struct AnalysisConstants {
    double A = 1.0; // kM- u Q / (kV+ C)
    double B = 1.0; // kV- u Q / (kM+ C)
    double lambda = 0.04;
    double eta = 0.1;
    double mu = 0.002;
    double kV_buy = 0.1;
    double kV_sell = 0.1;
    double kM_buy = 0.1;
    double kM_sell = 0.1;

    static AnalysisConstants from(const MarketParams& params, const CommitmentParams& k, double u,
                                  double C, double Q)
    {
        if (!(u > 0.0) || !(C > 0.0) || !(Q > 0.0))
            throw InvalidInput("u, C and Q must be > 0");
        if (!(k.kV_buy > 0.0) || !(k.kV_sell > 0.0) || !(k.kM_buy > 0.0) || !(k.kM_sell > 0.0))
            throw InvalidInput("Val and Mo commitments must be > 0");
        AnalysisConstants c;
        c.A = k.kM_sell * u * Q / (k.kV_buy * C);
        c.B = k.kV_sell * u * Q / (k.kM_buy * C);
        c.lambda = params.lambda;
        c.eta = params.eta;
        c.mu = params.mu;
        c.kV_buy = k.kV_buy;
        c.kV_sell = k.kV_sell;
        c.kM_buy = k.kM_buy;
        c.kM_sell = k.kM_sell;
        return c;
    }

    // Constants for the u = p0 = 1 market with Q = rho C.
    static AnalysisConstants unit(const MarketParams& params, const CommitmentParams& k)
    {
        return from(params, k, 1.0, 1.0, params.rho);
    }
};

struct ReducedState {
    double pi = 0.0;
    double m = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

// Cash and asset of Val and Mo, plus Val's shares of C and Q.
struct Holdings {
    double cV = 0.0, qV = 0.0, cM = 0.0, qM = 0.0;
    double cV_share = 0.0, qV_share = 0.0;

    bool feasible(double tol = 0.0) const
    {
        return cV_share >= -tol && cV_share <= 1.0 + tol && qV_share >= -tol && qV_share <= 1.0 + tol;
    }
};

inline ReducedState reduce(double price, double u, double momentum, const Holdings& h,
                           const AnalysisConstants& c)
{
    if (!(price > 0.0) || !(u > 0.0))
        throw DomainError("price and valuation must be > 0");
    if (!(h.cV > 0.0) || !(h.qV > 0.0) || !(h.cM > 0.0) || !(h.qM > 0.0))
        throw DomainError("reduced coordinates need strictly positive holdings");
    ReducedState s;
    s.pi = std::log(price / u);
    s.m = momentum;
    s.alpha = std::log(c.kV_buy * h.cV / (c.kM_sell * h.qM * price));
    s.beta = std::log(c.kM_buy * h.cM / (c.kV_sell * h.qV * price));
    return s;
}

// Reduced coordinates of an engine state holding exactly one Val and one Mo.
inline ReducedState reduce(const MarketState& state, const AnalysisConstants& c)
{
    const TraderState* val = nullptr;
    const TraderState* mo = nullptr;
    for (const auto& t : state.traders) {
        if (t.is_val()) {
            if (val)
                throw ContractError("reduce expects a single Val");
            val = &t;
        } else if (t.is_mo()) {
            if (mo)
                throw ContractError("reduce expects a single Mo");
            mo = &t;
        } else {
            throw ContractError("reduce expects no Rand trader");
        }
    }
    if (!val || !mo)
        throw ContractError("reduce expects one Val and one Mo");
    Holdings h{val->cash, val->asset, mo->cash, mo->asset, 0.0, 0.0};
    return reduce(state.price, std::get<ValTrader>(val->kind).valuation, state.momentum, h, c);
}

// Inverse of reduce given the totals. Off the back-diagonal cV/C + qV/Q = 1
// the shares are
//   qV/Q = (e^-pi - A e^alpha) / (B e^beta - A e^alpha)
//   cV/C = A e^alpha (B e^(beta+pi) - 1) / (B e^beta - A e^alpha)
// and both lie in [0, 1] iff (beta + pi + log B)(alpha + pi + log A) <= 0.
inline Holdings reconstruct(const ReducedState& s, const AnalysisConstants& c, double C, double Q)
{
    const double ae = c.A * std::exp(s.alpha);
    const double be = c.B * std::exp(s.beta);
    const double den = be - ae;
    if (std::abs(den) <= 1e-14 * std::max(std::abs(ae), std::abs(be)))
        throw DegenerateError("holdings are not recoverable on the back-diagonal (B e^beta == A e^alpha)");
    Holdings h;
    h.qV_share = (std::exp(-s.pi) - ae) / den;
    h.cV_share = ae * (be * std::exp(s.pi) - 1.0) / den;
    h.cV = h.cV_share * C;
    h.qV = h.qV_share * Q;
    h.cM = C - h.cV;
    h.qM = Q - h.qV;
    return h;
}

// Left-hand side of the feasibility condition; holdings are feasible iff <= 0.
inline double feasibility(const ReducedState& s, const AnalysisConstants& c)
{
    return (s.beta + s.pi + std::log(c.B)) * (s.alpha + s.pi + std::log(c.A));
}

enum class Region { Case1, Case2, Case3, Case4, Boundary };

inline const char* region_name(Region r)
{
    switch (r) {
    case Region::Case1: return "case1";
    case Region::Case2: return "case2";
    case Region::Case3: return "case3";
    case Region::Case4: return "case4";
    default: return "boundary";
    }
}

// Case1: over-priced, falling. Case2: under-priced, falling. Case3:
// under-priced, rising. Case4: over-priced, rising.
inline Region classify_region(double pi, double m)
{
    valtrack::detail::require_finite(pi, "pi");
    valtrack::detail::require_finite(m, "m");
    if (pi == 0.0 || m == 0.0)
        return Region::Boundary;
    if (pi > 0.0)
        return m < 0.0 ? Region::Case1 : Region::Case4;
    return m < 0.0 ? Region::Case2 : Region::Case3;
}

// Capped log price move for a log order ratio x: lambda x, saturating at
// +-eta once |x| >= eta / lambda.
inline double capped_increment(double x, double lambda, double eta)
{
    if (std::abs(x) <= eta / lambda)
        return lambda * x;
    return std::copysign(eta, x);
}

namespace detail {

inline double checked_log(double num, double den, const char* where)
{
    const double r = num / den;
    if (!(r > 0.0) || !std::isfinite(r))
        throw DomainError(std::string(where) + ": log argument is not positive (divergent map)");
    return std::log(r);
}

// Negative-branch map shared by alpha and (mirrored) beta:
//   x' = x - phi(x) + log((1 - kb) / (1 - ks e^x))          for x < 0
//   x' = x - phi(x) + log((1 - kb e^-x) / (1 - ks))         for x >= 0
// alpha uses (kb, ks) = (kV+, kM-); beta(b) = -map(-b) with (kV-, kM+).
inline double commitment_map(double x, double kb, double ks, double lambda, double eta)
{
    const double phi = capped_increment(x, lambda, eta);
    if (x < 0.0)
        return x - phi + checked_log(1.0 - kb, 1.0 - ks * std::exp(x), "alpha map");
    return x - phi + checked_log(1.0 - kb * std::exp(-x), 1.0 - ks, "alpha map");
}

} // namespace detail

inline double alpha_map(double alpha, const AnalysisConstants& c)
{
    valtrack::detail::require_finite(alpha, "alpha");
    return detail::commitment_map(alpha, c.kV_buy, c.kM_sell, c.lambda, c.eta);
}

inline double beta_map(double beta, const AnalysisConstants& c)
{
    valtrack::detail::require_finite(beta, "beta");
    return -detail::commitment_map(-beta, c.kV_sell, c.kM_buy, c.lambda, c.eta);
}

// Log price increment of one reduced step (phi in Case 2, psi in Case 4).
inline double price_increment(const ReducedState& s, const AnalysisConstants& c)
{
    switch (classify_region(s.pi, s.m)) {
    case Region::Case1: return -c.eta;
    case Region::Case3: return c.eta;
    case Region::Case2: return capped_increment(s.alpha, c.lambda, c.eta);
    case Region::Case4: return capped_increment(s.beta, c.lambda, c.eta);
    default: throw BoundaryError("reduced map is undefined at pi = 0 or m = 0");
    }
}

inline ReducedState reduced_step(const ReducedState& s, const AnalysisConstants& c)
{
    const double A = c.A, B = c.B;
    const double e_pi = std::exp(s.pi);
    ReducedState n;
    switch (classify_region(s.pi, s.m)) {
    case Region::Case1:
        // Both sell, nothing trades; price falls at the cap.
        n.pi = s.pi - c.eta;
        n.m = (1.0 - c.mu) * s.m - c.mu * c.eta;
        n.alpha = s.alpha + c.eta;
        n.beta = s.beta + c.eta;
        return n;
    case Region::Case3:
        n.pi = s.pi + c.eta;
        n.m = (1.0 - c.mu) * s.m + c.mu * c.eta;
        n.alpha = s.alpha - c.eta;
        n.beta = s.beta - c.eta;
        return n;
    case Region::Case2: {
        const double phi = capped_increment(s.alpha, c.lambda, c.eta);
        n.pi = s.pi + phi;
        n.m = (1.0 - c.mu) * s.m + c.mu * phi;
        n.alpha = alpha_map(s.alpha, c);
        const double lead = s.alpha < 0.0 ? std::exp(-s.alpha) - A * e_pi : 1.0 - A * std::exp(s.alpha + s.pi);
        const double num = lead + c.kV_buy * A * (e_pi - std::exp(-s.beta) / B);
        const double den = lead + c.kM_sell * (B * std::exp(s.beta + s.pi) - 1.0);
        n.beta = s.beta - phi + detail::checked_log(num, den, "beta update");
        return n;
    }
    case Region::Case4: {
        const double psi = capped_increment(s.beta, c.lambda, c.eta);
        n.pi = s.pi + psi;
        n.m = (1.0 - c.mu) * s.m + c.mu * psi;
        n.beta = beta_map(s.beta, c);
        const double lead = s.beta > 0.0 ? 1.0 - B * std::exp(s.beta + s.pi) : std::exp(-s.beta) - B * e_pi;
        const double num = lead + c.kM_buy * B * (e_pi - std::exp(-s.alpha) / A);
        const double den = lead + c.kV_sell * (A * std::exp(s.alpha + s.pi) - 1.0);
        n.alpha = s.alpha - psi + detail::checked_log(num, den, "alpha update");
        return n;
    }
    default:
        throw BoundaryError("reduced map is undefined at pi = 0 or m = 0");
    }
}

// pi_n and m_n from pi_0, m_0 and the logged increments phi_0 .. phi_{n-1}:
//   pi_n = pi_0 + sum phi_k
//   m_n  = (1 - mu)^n m_0 + mu sum (1 - mu)^(n-k-1) phi_k
inline std::pair<double, double> accumulate_increments(double pi0, double m0,
                                                       const std::vector<double>& phis, double mu)
{
    const std::size_t n = phis.size();
    double pi = pi0;
    double m = std::pow(1.0 - mu, static_cast<double>(n)) * m0;
    for (std::size_t k = 0; k < n; ++k) {
        pi += phis[k];
        m += mu * std::pow(1.0 - mu, static_cast<double>(n - k - 1)) * phis[k];
    }
    return {pi, m};
}

// ---------------------------------------------------------------------------
// Fixed points

enum class RootRange { Outer, Inner, Trivial };

inline const char* range_name(RootRange r)
{
    switch (r) {
    case RootRange::Outer: return "outer";
    case RootRange::Inner: return "inner";
    default: return "trivial";
    }
}

struct FixedPoint {
    double value = 0.0;
    RootRange range = RootRange::Inner;
    double residual = 0.0; // |map(value) - value|
};

struct FixedPointReport {
    std::vector<FixedPoint> roots; // ascending
    bool trivial = false;          // kb >= ks: extremal is taken as 0
    bool outer_window = false;     // closed-form outer root admitted
    double window_lo = 0.0;        // admission window for the outer root, in kb
    double window_hi = 0.0;
    double x_min = 0.0;            // minimiser of the inner-range residual function
    bool exists = false;
    // alpha_minus (largest negative root) or beta_plus (smallest positive
    // root); -inf / +inf when no such root exists.
    double extremal = 0.0;
    int newton_iterations = 0;
};

namespace detail {

struct NewtonResult {
    double root = 0.0;
    int iterations = 0;
};

// Newton-Raphson safeguarded by a sign bracket [lo, hi]; steps that leave the
// bracket are replaced by bisection. Stops when |dx| <= 1e-12.
template <class F, class DF>
NewtonResult bracketed_newton(F f, DF df, double lo, double hi, double x0, int max_iter = 200)
{
    const double f_lo = f(lo);
    const bool rising = f_lo < 0.0;
    double x = std::clamp(x0, lo, hi);
    if (x <= lo || x >= hi)
        x = 0.5 * (lo + hi);
    for (int it = 1; it <= max_iter; ++it) {
        const double fx = f(x);
        if (fx == 0.0)
            return {x, it};
        if ((fx < 0.0) == rising)
            lo = x;
        else
            hi = x;
        const double d = df(x);
        double next = x - fx / d;
        if (!(d != 0.0) || !(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-12)
            return {next, it};
        x = next;
    }
    throw NumericError("Newton-Raphson did not converge in " + std::to_string(max_iter) +
                       " iterations (bracket [" + std::to_string(lo) + ", " + std::to_string(hi) + "])");
}

// Negative fixed points of commitment_map with commitments (kb, ks).
inline FixedPointReport negative_fixed_points(double kb, double ks, double lambda, double eta)
{
    FixedPointReport rep;
    auto residual = [&](double x) { return commitment_map(x, kb, ks, lambda, eta) - x; };
    const double edge = -eta / lambda;

    rep.window_lo = 1.0 - std::exp(-eta);
    rep.window_hi = rep.window_lo + ks * std::exp(-eta * (1.0 + 1.0 / lambda));
    rep.x_min = std::log(lambda / (ks * (1.0 + lambda)));
    rep.trivial = kb >= ks;

    // Below -eta/lambda the increment saturates at -eta and the fixed point
    // has a closed form.
    if (kb > rep.window_lo && kb < rep.window_hi) {
        rep.outer_window = true;
        const double x = std::log((1.0 - std::exp(eta) * (1.0 - kb)) / ks);
        rep.roots.push_back({x, RootRange::Outer, std::abs(residual(x))});
    }

    // On [-eta/lambda, 0] the residual is convex with its minimum at x_min,
    // so each side of the minimum holds at most one root.
    auto f = [&](double x) { return -lambda * x + std::log((1.0 - kb) / (1.0 - ks * std::exp(x))); };
    auto df = [&](double x) {
        const double e = ks * std::exp(x);
        return -lambda + e / (1.0 - e);
    };
    const double lowest = std::clamp(rep.x_min, edge, 0.0);
    const double f_low = f(lowest);
    if (f(0.0) == 0.0) {
        rep.roots.push_back({0.0, RootRange::Inner, 0.0});
    } else if (f_low < 0.0 && f(0.0) > 0.0) {
        const auto upper = bracketed_newton(f, df, lowest, 0.0, -0.01);
        rep.newton_iterations = upper.iterations;
        rep.roots.push_back({upper.root, RootRange::Inner, std::abs(residual(upper.root))});
    }
    if (lowest > edge && f_low < 0.0 && f(edge) > 0.0) {
        const auto lower = bracketed_newton(f, df, edge, lowest, 0.5 * (edge + lowest));
        rep.roots.push_back({lower.root, RootRange::Inner, std::abs(residual(lower.root))});
    }

    std::sort(rep.roots.begin(), rep.roots.end(),
              [](const FixedPoint& a, const FixedPoint& b) { return a.value < b.value; });
    if (rep.trivial) {
        rep.exists = true;
        rep.extremal = 0.0;
    } else {
        rep.exists = !rep.roots.empty();
        rep.extremal = rep.exists ? rep.roots.back().value : -std::numeric_limits<double>::infinity();
    }
    return rep;
}

// Outer-range root found by Newton-Raphson instead of the closed form, for
// cross-checking it. Empty outside the admission window.
inline std::optional<double> outer_root_newton(double kb, double ks, double lambda, double eta)
{
    const double edge = -eta / lambda;
    auto g = [&](double x) { return eta + std::log((1.0 - kb) / (1.0 - ks * std::exp(x))); };
    auto dg = [&](double x) {
        const double e = ks * std::exp(x);
        return e / (1.0 - e);
    };
    double lo = edge - 1.0;
    while (g(lo) >= 0.0 && lo > -745.0)
        lo -= 1.0;
    if (!(g(lo) < 0.0 && g(edge) > 0.0))
        return std::nullopt;
    return bracketed_newton(g, dg, lo, edge, 0.5 * (lo + edge)).root;
}

} // namespace detail

// Largest negative fixed point alpha_minus of the alpha map. When kV+ >= kM-
// it is taken as 0 (`trivial`); `roots` still lists every fixed point found.
inline FixedPointReport alpha_fixed_points(const AnalysisConstants& c)
{
    return detail::negative_fixed_points(c.kV_buy, c.kM_sell, c.lambda, c.eta);
}

// Smallest positive fixed point beta_plus of the beta map. The beta map is the
// alpha map reflected through the origin with (kV+, kM-) -> (kV-, kM+).
inline FixedPointReport beta_fixed_points(const AnalysisConstants& c)
{
    FixedPointReport rep = detail::negative_fixed_points(c.kV_sell, c.kM_buy, c.lambda, c.eta);
    for (auto& r : rep.roots) {
        r.value = -r.value;
        r.residual = std::abs(beta_map(r.value, c) - r.value);
    }
    rep.extremal = -rep.extremal;
    std::reverse(rep.roots.begin(), rep.roots.end());
    rep.x_min = -rep.x_min;
    return rep;
}

namespace detail {

inline void require_near_equilibrium(const ReducedState& s, const AnalysisConstants& c)
{
    if (!(std::abs(s.pi) <= c.eta) || !(std::abs(s.m) <= c.mu * c.eta))
        throw ContractError("sufficient conditions apply only within eta, mu*eta of equilibrium");
}

} // namespace detail

inline bool crash_sufficient(const ReducedState& s, const AnalysisConstants& c)
{
    detail::require_near_equilibrium(s, c);
    if (c.kV_buy >= c.kM_sell)
        return s.alpha < -c.eta;
    const auto rep = alpha_fixed_points(c);
    return rep.exists && s.alpha < rep.extremal - c.eta;
}

inline bool boom_sufficient(const ReducedState& s, const AnalysisConstants& c)
{
    detail::require_near_equilibrium(s, c);
    if (c.kM_buy <= c.kV_sell)
        return s.beta > c.eta;
    const auto rep = beta_fixed_points(c);
    return rep.exists && s.beta > rep.extremal + c.eta;
}

// Mo share of initial wealth above which a crash is guaranteed from
// p0 = u = 1: kV+ / (kM- rho e^(alpha_minus - eta) + kV+), or 1 when the
// alpha map has no negative fixed point.
inline double mo_crash_threshold_analytic(const AnalysisConstants& c, double rho)
{
    if (!(rho > 0.0))
        throw InvalidInput("rho must be > 0");
    const auto rep = alpha_fixed_points(c);
    if (!rep.exists)
        return 1.0;
    return c.kV_buy / (c.kM_sell * rho * std::exp(rep.extremal - c.eta) + c.kV_buy);
}

} // namespace valtrack::analysis
