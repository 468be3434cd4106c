#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "valtrack/error.hpp"
#include "valtrack/rng.hpp"

namespace valtrack {

// Tracking error |log2 p - log2 u|, in Blacks.
inline double tau(double price, double value)
{
    if (!(price > 0.0) || !(value > 0.0))
        throw DomainError("tau requires positive price and value");
    return std::abs(std::log2(price) - std::log2(value));
}

inline double deciblacks(double price, double value) { return 10.0 * tau(price, value); }

// True when every price in the series tracks `value` within `tol` Blacks.
inline bool is_tracking(std::span<const double> series, double value, double tol)
{
    if (series.empty())
        throw DomainError("is_tracking requires a nonempty series");
    return std::all_of(series.begin(), series.end(),
                       [&](double p) { return tau(p, value) <= tol; });
}

// Largest fall below the starting price, as a fraction of it.
inline double max_relative_drop(std::span<const double> series)
{
    if (series.empty())
        return 0.0;
    const double lowest = *std::min_element(series.begin(), series.end());
    return std::max(0.0, 1.0 - lowest / series.front());
}

// ---------------------------------------------------------------------------
// Crash / boom predicates

struct DropBelow {
    double level = 0.01; // absolute price level
};

struct RelativeDrop {
    double fraction = 0.30; // fall of this fraction of the starting price
};

struct DeciblackDrop {
    double n = 5.0; // fall of n deciblacks below the starting price
};

struct CrashPredicate {
    std::variant<DropBelow, RelativeDrop, DeciblackDrop> rule = DeciblackDrop{};
    int horizon = 250;

    void validate() const
    {
        if (const auto* d = std::get_if<DropBelow>(&rule); d && !(d->level > 0.0))
            throw InvalidInput("DropBelow level must be > 0");
        if (const auto* r = std::get_if<RelativeDrop>(&rule);
            r && !(r->fraction > 0.0 && r->fraction < 1.0))
            throw InvalidInput("RelativeDrop fraction must lie in (0, 1)");
        if (const auto* b = std::get_if<DeciblackDrop>(&rule); b && !(b->n > 0.0))
            throw InvalidInput("DeciblackDrop n must be > 0");
    }

    // Price ratio p_t / p_0 at or below which a crash is declared. DropBelow
    // is an absolute level and is handled separately.
    double crash_ratio() const
    {
        if (const auto* r = std::get_if<RelativeDrop>(&rule))
            return 1.0 - r->fraction;
        if (const auto* b = std::get_if<DeciblackDrop>(&rule))
            return std::exp2(-b->n / 10.0);
        return 0.0;
    }
};

namespace detail {

template <class Fires>
std::optional<std::size_t> first_firing(std::span<const double> series, int horizon, Fires fires)
{
    const std::size_t last = std::min<std::size_t>(series.size(), static_cast<std::size_t>(horizon) + 1);
    for (std::size_t t = 0; t < last; ++t)
        if (fires(series[t]))
            return t;
    return std::nullopt;
}

} // namespace detail

// First step index (0 = initial price) at which the crash predicate fires
// within its horizon.
inline std::optional<std::size_t> detect_crash(std::span<const double> series, const CrashPredicate& pred)
{
    if (series.empty())
        return std::nullopt;
    const double p0 = series.front();
    if (const auto* d = std::get_if<DropBelow>(&pred.rule))
        return detail::first_firing(series, pred.horizon, [&](double p) { return p < d->level; });
    const double ratio = pred.crash_ratio();
    return detail::first_firing(series, pred.horizon, [&](double p) { return p / p0 <= ratio; });
}

// Mirror image of detect_crash: a rise by the reciprocal factor.
inline std::optional<std::size_t> detect_boom(std::span<const double> series, const CrashPredicate& pred)
{
    if (series.empty())
        return std::nullopt;
    const double p0 = series.front();
    if (const auto* d = std::get_if<DropBelow>(&pred.rule))
        return detail::first_firing(series, pred.horizon, [&](double p) { return p > 1.0 / d->level; });
    const double ratio = 1.0 / pred.crash_ratio();
    return detail::first_firing(series, pred.horizon, [&](double p) { return p / p0 >= ratio; });
}

// ---------------------------------------------------------------------------
// Estimating tau from a set of valuations

inline double tau_hat(std::span<const double> valuations, double price)
{
    if (valuations.empty())
        throw DomainError("tau_hat requires at least one valuation");
    double sum = 0.0;
    for (double v : valuations) {
        if (!(v > 0.0))
            throw DomainError("valuations must be positive");
        sum += v;
    }
    return tau(price, sum / static_cast<double>(valuations.size()));
}

// Inverse-variance weighted variant; `variances` holds each valuation's
// stated uncertainty.
inline double tau_hat_weighted(std::span<const double> valuations, std::span<const double> variances,
                               double price)
{
    if (valuations.empty() || valuations.size() != variances.size())
        throw DomainError("tau_hat_weighted needs one variance per valuation");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < valuations.size(); ++i) {
        if (!(variances[i] > 0.0))
            throw DomainError("variances must be positive");
        num += valuations[i] / variances[i];
        den += 1.0 / variances[i];
    }
    return tau(price, num / den);
}

// Median variant, robust to a few biased valuations.
inline double tau_hat_median(std::span<const double> valuations, double price)
{
    if (valuations.empty())
        throw DomainError("tau_hat_median requires at least one valuation");
    std::vector<double> v(valuations.begin(), valuations.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    return tau(price, med);
}

// Leading-order standard deviation of tau_hat: sigma / (u sqrt(n) ln 2).
inline double tau_hat_predicted_std(double sigma, double u, double price, double n)
{
    if (!(n >= 1.0))
        throw DomainError("n must be >= 1");
    if (!(u > 0.0) || !(price > 0.0))
        throw DomainError("u and price must be positive");
    if (price == u)
        throw DomainError("delta-method std is undefined at p == u");
    return sigma / (u * std::sqrt(n) * std::numbers::ln2);
}

struct GammaDist {
    double shape = 8.0;
    double rate = 8.0;

    double mean() const { return shape / rate; }
    double variance() const { return shape / (rate * rate); }
};

struct EstimatorReport {
    int n = 0;
    int reps = 0;
    double tau_true = 0.0;
    double tau_hat_mean = 0.0;
    double bias = 0.0;
    double bias_se = 0.0; // Monte-Carlo standard error of `bias`
    double empirical_std = 0.0;
    double predicted_std = 0.0;
    double skewness = 0.0;
    double u_hat_mean = 0.0;
    double u_hat_mean_se = 0.0; // expected standard error, sqrt(var / (n reps))
    double u_hat_variance = 0.0;
    double u_hat_variance_expected = 0.0; // shape / (n rate^2)
    bool mean_moment_ok = false;          // u_hat_mean within 3 SE of shape/rate
    bool variance_moment_ok = false;      // u_hat_variance within 3 SE of expectation
};

namespace detail {

// Central moments of a sample, summed in index order.
struct Moments {
    double mean = 0.0;
    double variance = 0.0; // unbiased
    double skewness = 0.0; // g1
    double m4 = 0.0;
};

inline Moments moments(std::span<const double> x)
{
    Moments out;
    const double n = static_cast<double>(x.size());
    for (double v : x)
        out.mean += v;
    out.mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - out.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    out.variance = m2 * n / (n - 1.0);
    out.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    out.m4 = m4;
    return out;
}

} // namespace detail

// Monte-Carlo study of tau_hat for valuations drawn from `dist`. Replicate r
// draws from Rng(mix_seed(seed, r)), so the report does not depend on how
// replicates are scheduled.
inline EstimatorReport estimator_mc(const GammaDist& dist, double price, int n, int reps,
                                    std::uint64_t seed)
{
    if (n < 1)
        throw InvalidInput("n must be >= 1");
    if (reps < 1000)
        throw InvalidInput("reps must be >= 1000");
    const double u = dist.mean();
    std::vector<double> taus(static_cast<std::size_t>(reps));
    std::vector<double> means(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
            sum += rng.gamma(dist.shape, dist.rate);
        const double u_hat = sum / n;
        means[static_cast<std::size_t>(r)] = u_hat;
        taus[static_cast<std::size_t>(r)] = tau(price, u_hat);
    }

    const auto mt = detail::moments(taus);
    const auto mu = detail::moments(means);

    EstimatorReport rep;
    rep.n = n;
    rep.reps = reps;
    rep.tau_true = tau(price, u);
    rep.tau_hat_mean = mt.mean;
    rep.bias = mt.mean - rep.tau_true;
    rep.bias_se = std::sqrt(mt.variance / reps);
    rep.empirical_std = std::sqrt(mt.variance);
    rep.predicted_std = tau_hat_predicted_std(std::sqrt(dist.variance()), u, price, n);
    rep.skewness = mt.skewness;
    rep.u_hat_mean = mu.mean;
    rep.u_hat_variance = mu.variance;
    // The mean of n Gamma(a, b) draws is Gamma(n a, n b).
    rep.u_hat_variance_expected = dist.variance() / n;
    rep.u_hat_mean_se = std::sqrt(rep.u_hat_variance_expected / reps);
    rep.mean_moment_ok = std::abs(rep.u_hat_mean - u) <= 3.0 * rep.u_hat_mean_se;
    // Var of the sample variance: (m4 - s^4 (reps-3)/(reps-1)) / reps, with the
    // Gamma(n a, n b) fourth central moment 3 a n (a n + 2) / (n b)^4.
    const double an = dist.shape * n, bn = dist.rate * n;
    const double m4 = 3.0 * an * (an + 2.0) / std::pow(bn, 4);
    const double s2 = rep.u_hat_variance_expected;
    const double var_se = std::sqrt((m4 - s2 * s2 * (reps - 3.0) / (reps - 1.0)) / reps);
    rep.variance_moment_ok = std::abs(rep.u_hat_variance - s2) <= 3.0 * var_se;
    return rep;
}

// ---------------------------------------------------------------------------
// Time spent at each price level, in units of the valuation spread

struct Histogram {
    double bin_width = 0.25; // sd units
    std::vector<double> centers;
    std::vector<double> frequency; // sums to 1
};

// Bins (p_t - mean) / sd with width 0.25 sd over [-6, 6] sd, bins centred on
// multiples of the width; values outside fall into the end bins.
inline Histogram price_level_histogram(std::span<const double> series, std::span<const double> valuations)
{
    if (valuations.size() < 2)
        throw DomainError("histogram needs at least two valuations");
    if (series.empty())
        throw DomainError("histogram needs a nonempty series");
    const auto m = detail::moments(valuations);
    const double sd = std::sqrt(m.variance);
    if (!(sd > 0.0))
        throw DomainError("valuations have zero spread");

    Histogram h;
    constexpr int half = 24; // 6 sd / 0.25
    for (int k = -half; k <= half; ++k) {
        h.centers.push_back(k * h.bin_width);
        h.frequency.push_back(0.0);
    }
    for (double p : series) {
        const double z = (p - m.mean) / sd;
        int k = static_cast<int>(std::lround(z / h.bin_width));
        k = std::clamp(k, -half, half);
        h.frequency[static_cast<std::size_t>(k + half)] += 1.0;
    }
    for (double& f : h.frequency)
        f /= static_cast<double>(series.size());
    return h;
}

} // namespace valtrack
