#pragma once

#include <cstdint>

#include "valtrack/experiments.hpp"
#include "valtrack/rng.hpp"
#include "valtrack/traders.hpp"

namespace vt_test {

// Random market with every class present in random proportions, at a random
// price and momentum.
inline valtrack::MarketState random_market(valtrack::Rng& rng, bool refined)
{
    using namespace valtrack;
    double w[3] = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    const double s = w[0] + w[1] + w[2];
    PopulationSpec spec;
    spec.val_fraction = w[0] / s;
    spec.mo_fraction = w[1] / s;
    spec.rand_fraction = 1.0 - spec.val_fraction - spec.mo_fraction;
    spec.n_vals = 1 + static_cast<int>(rng.uniform(0.0, 4.0));
    spec.valuation = GammaValuation{};
    spec.refined_rand = refined;
    spec.total_cash = rng.uniform(0.5, 5.0);
    spec.rho = rng.uniform(0.25, 6.0);
    spec.initial_price = std::exp(rng.uniform(-0.5, 0.5));
    spec.initial_momentum = rng.uniform(-0.01, 0.01);
    return init_population(spec, rng);
}

inline valtrack::CommitmentParams random_commitments(valtrack::Rng& rng)
{
    return {rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5),
            rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)};
}

} // namespace vt_test
