#pragma once

#include <limits>
#include <vector>

#include "sensel/configuration.hpp"
#include "sensel/cost.hpp"
#include "sensel/errors.hpp"

namespace sensel {

struct GreedyResult {
    Configuration config;
    double value = 0.0;       // cost (greedy) or estimation error (newgreedy)
    std::vector<int> order;   // sensors in the order they were added
    bool filled_with_nonimproving = false;
};

/// Single serial pass over sensors 0..N-1: sensor k joins S iff that strictly lowers h.
template <ErrorModel M>
GreedyResult greedy_unconstrained(const M& model, double lambda)
{
    const int n = model.dimension();
    GreedyResult r;
    r.config = Configuration::empty(n);
    r.value = cost(model, lambda, r.config);
    for (int k = 0; k < n; ++k) {
        const Configuration candidate = r.config.with(k, true);
        const double h = cost(model, lambda, candidate);
        if (h < r.value) {
            r.config = candidate;
            r.value = h;
            r.order.push_back(k);
        }
    }
    return r;
}

/// Best-first addition until |S| = nbar, each round adding the sensor with the
/// lowest resulting error (ties to the lowest index). If the best candidate does
/// not lower the error beyond rounding noise it is still added and the result is flagged.
template <ErrorModel M>
GreedyResult newgreedy_cardinality(const M& model, int nbar)
{
    const int n = model.dimension();
    if (nbar < 0 || nbar > n) throw SpecError("nbar out of range [0, N]");
    GreedyResult r;
    r.config = Configuration::empty(n);
    r.value = model.error(r.config);
    const double noise = 1e-12 * model.error_upper_bound();
    while (r.config.count() < nbar) {
        int best = -1;
        double best_err = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (r.config.test(j)) continue;
            const double e = model.error(r.config.with(j, true));
            if (e < best_err) {
                best_err = e;
                best = j;
            }
        }
        if (!(best_err < r.value - noise)) r.filled_with_nonimproving = true;
        r.config.set(best, true);
        r.value = best_err;
        r.order.push_back(best);
    }
    return r;
}

} // namespace sensel
