#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sensel/configuration.hpp"
#include "sensel/cost.hpp"
#include "sensel/errors.hpp"
#include "sensel/exact_oracle.hpp"

namespace sensel {

using Rng = std::mt19937_64;

/// State of one chain {B(t)}.
struct ChainState {
    Configuration config;
    std::uint64_t t = 0;
    Rng rng;
    double cost = 0.0;          // h(config) under the price in force at the last step
    Configuration best_config;  // running minimum of visited costs
    double best_cost = std::numeric_limits<double>::infinity();

    void observe(double h)
    {
        cost = h;
        if (h < best_cost) {
            best_cost = h;
            best_config = config;
        }
    }
};

/// Inverse temperature: fixed, or β(t) = β(0) log(1 + t) with β(0) N Δ̂ < 1.
class BetaSchedule {
public:
    enum class Kind { fixed, logarithmic };

    static BetaSchedule fixed(double beta)
    {
        if (!(beta > 0.0) || !std::isfinite(beta)) throw SpecError("beta must be finite and positive");
        return BetaSchedule(Kind::fixed, beta);
    }

    static BetaSchedule logarithmic(double beta0, int n, double delta_hat)
    {
        if (!(beta0 > 0.0) || !std::isfinite(beta0)) throw SpecError("beta0 must be finite and positive");
        if (!(beta0 * n * delta_hat < 1.0)) {
            throw SpecError("annealing schedule requires beta0*N*Delta < 1; got beta0 = " +
                            std::to_string(beta0) + ", N = " + std::to_string(n) +
                            ", Delta = " + std::to_string(delta_hat));
        }
        return BetaSchedule(Kind::logarithmic, beta0);
    }

    Kind kind() const { return kind_; }
    double beta0() const { return beta0_; }

    double at(std::uint64_t t) const
    {
        return kind_ == Kind::fixed ? beta0_ : beta0_ * std::log1p(static_cast<double>(t));
    }

private:
    BetaSchedule(Kind k, double b) : kind_(k), beta0_(b) {}
    Kind kind_;
    double beta0_;
};

struct RunOptions {
    std::uint64_t steps = 1000;
    std::uint64_t seed = 0;
    std::uint64_t stride = 1;  // record every stride-th step
    // Stop after this many steps without improving best_seen (0 = never). Heuristic;
    // the algorithms themselves have no stopping rule.
    std::uint64_t patience = 0;

    void validate() const
    {
        if (steps < 1) throw SpecError("steps must be at least 1");
        if (stride < 1) throw SpecError("stride must be at least 1");
    }
};

struct TraceRow {
    std::uint64_t t = 0;
    double beta = 0.0;
    double lambda = 0.0;
    Configuration config;
    double cost = 0.0;
};

struct ChainRun {
    std::vector<TraceRow> trace;
    ChainState state;
    bool stopped_early = false;
};

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n)
{
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Chain with a uniformly random initial configuration.
template <ErrorModel M>
ChainState init_chain(const M& model, double lambda, std::uint64_t seed, CostCache& cache)
{
    const int n = model.dimension();
    ChainState s;
    s.rng.seed(seed);
    s.config = Configuration(n, s.rng() & full_mask(n));
    s.best_config = s.config;
    s.observe(cache.cost(model, lambda, s.config));
    return s;
}

/// Chain started uniformly on the slice of configurations with `nbar` active sensors.
template <ErrorModel M>
ChainState init_chain_cardinality(const M& model, int nbar, std::uint64_t seed, CostCache& cache)
{
    const int n = model.dimension();
    if (nbar < 0 || nbar > n) throw SpecError("nbar out of range [0, N]");
    ChainState s;
    s.rng.seed(seed);
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) idx[static_cast<std::size_t>(j)] = j;
    // partial Fisher-Yates: the first nbar entries are a uniform nbar-subset
    for (int i = 0; i < nbar; ++i) {
        const auto k = i + static_cast<int>(uniform_index(s.rng, static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(k)]);
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < nbar; ++i) bits |= std::uint64_t{1} << idx[static_cast<std::size_t>(i)];
    s.config = Configuration(n, bits);
    s.best_config = s.config;
    s.observe(cache.error(model, s.config));
    return s;
}

/// One random-scan heat-bath update: a uniformly chosen site is resampled from its
/// conditional given the others.
template <ErrorModel M>
void gibbs_step(ChainState& s, const M& model, double lambda, double beta, CostCache& cache)
{
    const int n = model.dimension();
    const int j = static_cast<int>(uniform_index(s.rng, static_cast<std::uint64_t>(n)));
    const Configuration on = s.config.with(j, true);
    const Configuration off = s.config.with(j, false);
    const double h_on = cache.cost(model, lambda, on);
    const double h_off = cache.cost(model, lambda, off);
    double p = heat_bath_probability(h_on, h_off, beta);
    if (p < 1e-300) p = 0.0;
    const bool set = uniform01(s.rng) < p;
    s.config = set ? on : off;
    ++s.t;
    s.observe(set ? h_on : h_off);
}

/// Swap move on the cardinality slice: one active and one inactive sensor are picked
/// uniformly and the pair's assignment is resampled from its two-point conditional.
template <ErrorModel M>
void swap_step(ChainState& s, const M& model, double beta, CostCache& cache)
{
    const int n = model.dimension();
    const int k = s.config.count();
    ++s.t;
    if (k == 0 || k == n) {
        s.observe(s.cost);
        return;
    }
    const auto act = s.config.active();
    const auto ina = s.config.inactive();
    const int i = act[uniform_index(s.rng, act.size())];
    const int o = ina[uniform_index(s.rng, ina.size())];
    const Configuration swapped = s.config.with(i, false).with(o, true);
    const double h_stay = cache.error(model, s.config);
    const double h_swap = cache.error(model, swapped);
    double p = heat_bath_probability(h_swap, h_stay, beta);
    if (p < 1e-300) p = 0.0;
    if (uniform01(s.rng) < p) {
        s.config = swapped;
        s.observe(h_swap);
    } else {
        s.observe(h_stay);
    }
    assert(s.config.count() == k);
}

namespace detail {

template <class Step>
ChainRun drive_chain(ChainState state, const RunOptions& opts, double lambda, Step&& step)
{
    ChainRun run;
    run.trace.reserve(static_cast<std::size_t>(opts.steps / opts.stride));
    std::uint64_t last_improvement = 0;
    double best = state.best_cost;
    for (std::uint64_t k = 1; k <= opts.steps; ++k) {
        const double beta = step(state);
        if (state.best_cost < best) {
            best = state.best_cost;
            last_improvement = k;
        }
        if (k % opts.stride == 0) {
            run.trace.push_back({state.t, beta, lambda, state.config, state.cost});
        }
        if (opts.patience > 0 && k - last_improvement >= opts.patience) {
            run.stopped_early = true;
            break;
        }
    }
    run.state = std::move(state);
    return run;
}

} // namespace detail

/// Fixed-β random-scan Gibbs sampler targeting π_β ∝ exp(-β h).
template <ErrorModel M>
ChainRun run_basic_gibbs(const M& model, double lambda, double beta, const RunOptions& opts,
                         CostCache* cache = nullptr)
{
    CostParams{lambda, beta}.validate();
    opts.validate();
    CostCache local;
    CostCache& c = cache ? *cache : local;
    return detail::drive_chain(init_chain(model, lambda, opts.seed, c), opts, lambda, [&](ChainState& s) {
        gibbs_step(s, model, lambda, beta, c);
        return beta;
    });
}

/// Annealed sampler: identical to run_basic_gibbs but each update at time t uses
/// β(t) from the schedule (β(0) log 1 = 0 at the first update).
template <ErrorModel M>
ChainRun run_modified_gibbs(const M& model, double lambda, const BetaSchedule& schedule,
                            const RunOptions& opts, CostCache* cache = nullptr)
{
    CostParams{lambda, 1.0}.validate();
    opts.validate();
    if (schedule.kind() != BetaSchedule::Kind::logarithmic) {
        throw SpecError("run_modified_gibbs requires a logarithmic schedule");
    }
    CostCache local;
    CostCache& c = cache ? *cache : local;
    return detail::drive_chain(init_chain(model, lambda, opts.seed, c), opts, lambda, [&](ChainState& s) {
        const double beta = schedule.at(s.t);
        gibbs_step(s, model, lambda, beta, c);
        return beta;
    });
}

/// Gibbs sampler on {B : ‖B‖₁ = nbar} with h = error; the stationary law is π_β
/// restricted to that slice.
template <ErrorModel M>
ChainRun run_fixed_cardinality_gibbs(const M& model, int nbar, double beta, const RunOptions& opts,
                                     CostCache* cache = nullptr)
{
    CostParams{0.0, beta}.validate();
    opts.validate();
    CostCache local;
    CostCache& c = cache ? *cache : local;
    return detail::drive_chain(init_chain_cardinality(model, nbar, opts.seed, c), opts, 0.0,
                               [&](ChainState& s) {
                                   swap_step(s, model, beta, c);
                                   return beta;
                               });
}

/// Visit frequencies of a trace, indexed by bitmask (N <= 22).
inline std::vector<double> visit_histogram(int n, const std::vector<TraceRow>& trace)
{
    require_capacity(n, kMaxExactGibbs, "visit_histogram");
    std::vector<double> h(std::size_t{1} << n, 0.0);
    for (const auto& row : trace) h[row.config.bits()] += 1.0;
    if (!trace.empty()) {
        for (double& v : h) v /= static_cast<double>(trace.size());
    }
    return h;
}

} // namespace sensel
