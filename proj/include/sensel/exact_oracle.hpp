#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sensel/configuration.hpp"
#include "sensel/cost.hpp"
#include "sensel/errors.hpp"

namespace sensel {

struct Optimum {
    Configuration config;
    double value = 0.0;
};

/// argmin of h over all 2^N configurations; ties go to the smallest bitmask.
template <ErrorModel M>
Optimum exhaustive_optimum(const M& model, double lambda)
{
    const int n = model.dimension();
    require_capacity(n, kMaxExhaustive, "exhaustive_optimum");
    Optimum best{Configuration::empty(n), std::numeric_limits<double>::infinity()};
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t b = 0; b < total; ++b) {
        const Configuration c(n, b);
        const double h = cost(model, lambda, c);
        if (h < best.value) best = {c, h};
    }
    return best;
}

template <ErrorModel M>
Optimum exhaustive_optimum(const M& model, const CostParams& params)
{
    return exhaustive_optimum(model, params.lambda);
}

namespace detail {

// Calls f(mask) for every N-bit mask with exactly k bits set, in increasing order.
template <class F>
void for_each_combination(int n, int k, F&& f)
{
    if (k == 0) {
        f(std::uint64_t{0});
        return;
    }
    const std::uint64_t limit = std::uint64_t{1} << n;
    std::uint64_t v = (std::uint64_t{1} << k) - 1;
    while (v < limit) {
        f(v);
        const std::uint64_t t = v | (v - 1);
        v = (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(v) + 1));
    }
}

} // namespace detail

/// Minimum error over configurations with exactly `nbar` active sensors.
template <ErrorModel M>
Optimum exhaustive_cardinality_optimum(const M& model, int nbar)
{
    const int n = model.dimension();
    require_capacity(n, kMaxExhaustive, "exhaustive_cardinality_optimum");
    if (nbar < 0 || nbar > n) throw SpecError("nbar out of range [0, N]");
    Optimum best{Configuration::empty(n), std::numeric_limits<double>::infinity()};
    detail::for_each_combination(n, nbar, [&](std::uint64_t b) {
        const Configuration c(n, b);
        const double e = model.error(c);
        if (e < best.value) best = {c, e};
    });
    return best;
}

/// Minimum error over configurations with at most `max_active` active sensors.
template <ErrorModel M>
Optimum exhaustive_budget_optimum(const M& model, int max_active)
{
    const int n = model.dimension();
    require_capacity(n, kMaxExhaustive, "exhaustive_budget_optimum");
    if (max_active < 0) throw SpecError("budget must be nonnegative");
    Optimum best{Configuration::empty(n), std::numeric_limits<double>::infinity()};
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t b = 0; b < total; ++b) {
        if (std::popcount(b) > max_active) continue;
        const Configuration c(n, b);
        const double e = model.error(c);
        if (e < best.value) best = {c, e};
    }
    return best;
}

/// π_β over all bitmasks, probs[b] = exp(-β h(b)) / Z_β.
struct GibbsDistribution {
    int n = 0;
    std::vector<double> probs;
    double log_partition = 0.0;

    double prob(const Configuration& c) const { return probs[c.bits()]; }

    /// Σ_b probs[b] · f(b), with f taking the bitmask.
    template <class F>
    double expectation(F&& f) const
    {
        double acc = 0.0;
        for (std::size_t b = 0; b < probs.size(); ++b) {
            if (probs[b] > 0.0) acc += probs[b] * f(static_cast<std::uint64_t>(b));
        }
        return acc;
    }

    double mean_active() const
    {
        return expectation([](std::uint64_t b) { return static_cast<double>(std::popcount(b)); });
    }
};

/// Normalizes exp(-β h) in the log domain. Entries with h = +inf get probability 0;
/// β = 0 is accepted and gives the uniform law over the finite entries.
inline GibbsDistribution gibbs_distribution(int n, std::span<const double> costs, double beta)
{
    if (costs.size() != (std::size_t{1} << n)) throw SpecError("cost vector must hold 2^N entries");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw SpecError("beta must be finite and nonnegative");
    GibbsDistribution d;
    d.n = n;
    d.probs.assign(costs.size(), 0.0);
    double max_log = -std::numeric_limits<double>::infinity();
    for (double h : costs) {
        if (std::isfinite(h)) max_log = std::max(max_log, -beta * h);
    }
    if (!std::isfinite(max_log)) throw SpecError("no configuration has finite cost");
    double sum = 0.0;
    for (std::size_t b = 0; b < costs.size(); ++b) {
        if (!std::isfinite(costs[b])) continue;
        d.probs[b] = std::exp(-beta * costs[b] - max_log);
        sum += d.probs[b];
    }
    for (double& p : d.probs) p /= sum;
    d.log_partition = max_log + std::log(sum);
    return d;
}

template <ErrorModel M>
GibbsDistribution exact_gibbs(const M& model, double lambda, double beta)
{
    const int n = model.dimension();
    require_capacity(n, kMaxExactGibbs, "exact_gibbs");
    const auto h = tabulate(model).costs(lambda);
    return gibbs_distribution(n, h, beta);
}

template <ErrorModel M>
GibbsDistribution exact_gibbs(const M& model, const CostParams& params)
{
    return exact_gibbs(model, params.lambda, params.beta);
}

/// π_β with h = error on the cardinality-nbar slice and h = +inf elsewhere.
template <ErrorModel M>
GibbsDistribution exact_gibbs_cardinality(const M& model, int nbar, double beta)
{
    const int n = model.dimension();
    require_capacity(n, kMaxExactGibbs, "exact_gibbs_cardinality");
    if (nbar < 0 || nbar > n) throw SpecError("nbar out of range [0, N]");
    std::vector<double> h(std::size_t{1} << n, std::numeric_limits<double>::infinity());
    detail::for_each_combination(n, nbar, [&](std::uint64_t b) { h[b] = model.error(Configuration(n, b)); });
    return gibbs_distribution(n, h, beta);
}

/// P(site update sets the bit) = exp(-β h_on) / (exp(-β h_on) + exp(-β h_off)),
/// evaluated as a logistic function of β (h_on - h_off).
inline double heat_bath_probability(double h_on, double h_off, double beta)
{
    const double x = -beta * (h_on - h_off);
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// One-step transition matrix of the random-scan single-site Gibbs chain.
struct ChainMatrix {
    int n = 0;
    Eigen::MatrixXd p;

    /// Row vector times P.
    std::vector<double> step(std::span<const double> dist) const
    {
        Eigen::Map<const Eigen::RowVectorXd> mu(dist.data(), static_cast<Eigen::Index>(dist.size()));
        Eigen::RowVectorXd next = mu * p;
        return {next.data(), next.data() + next.size()};
    }
};

inline ChainMatrix chain_matrix(int n, std::span<const double> costs, double beta)
{
    require_capacity(n, kMaxExactTpm, "exact_tpm");
    const std::size_t states = std::size_t{1} << n;
    if (costs.size() != states) throw SpecError("cost vector must hold 2^N entries");
    ChainMatrix cm;
    cm.n = n;
    cm.p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(states));
    const double w = 1.0 / n;
    for (std::size_t b = 0; b < states; ++b) {
        for (int j = 0; j < n; ++j) {
            const std::size_t on = b | (std::size_t{1} << j);
            const std::size_t off = b & ~(std::size_t{1} << j);
            const double p_on = heat_bath_probability(costs[on], costs[off], beta);
            cm.p(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(on)) += w * p_on;
            cm.p(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(off)) += w * (1.0 - p_on);
        }
    }
    return cm;
}

template <ErrorModel M>
ChainMatrix exact_tpm(const M& model, double lambda, double beta)
{
    const int n = model.dimension();
    require_capacity(n, kMaxExactTpm, "exact_tpm");
    const auto h = tabulate(model).costs(lambda);
    return chain_matrix(n, h, beta);
}

/// Solves π P = π with Σπ = 1 by a dense LU solve (one balance equation replaced
/// by the normalization).
inline std::vector<double> stationary_distribution(const ChainMatrix& cm)
{
    const Eigen::Index s = cm.p.rows();
    Eigen::MatrixXd a = cm.p.transpose() - Eigen::MatrixXd::Identity(s, s);
    a.row(s - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s);
    rhs(s - 1) = 1.0;
    Eigen::VectorXd pi = a.partialPivLu().solve(rhs);
    return {pi.data(), pi.data() + pi.size()};
}

inline double tv_distance(std::span<const double> p, std::span<const double> q)
{
    if (p.size() != q.size()) throw SpecError("tv_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

/// (1 - exp(-β N Δ) / N^N)^l: the contraction of d_V(μ, π_β) after l sweeps of N steps.
inline double dobrushin_bound(double beta, int n, double delta, int sweeps)
{
    if (n < 1) throw SpecError("dobrushin_bound: N must be positive");
    if (!(delta >= 0.0) || sweeps < 0) throw SpecError("dobrushin_bound: delta and l must be nonnegative");
    const double floor = std::exp(-beta * n * delta - n * std::log(static_cast<double>(n)));
    return std::pow(1.0 - floor, sweeps);
}

inline double dobrushin_bound(const CostParams& params, int n, double delta, int sweeps)
{
    return dobrushin_bound(params.beta, n, delta, sweeps);
}

/// δ(P) = 1 - min_{i,j} Σ_k min(P_ik, P_jk).
inline double dobrushin_coefficient(const Eigen::MatrixXd& p)
{
    double overlap = 1.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < p.rows(); ++j) {
            overlap = std::min(overlap, p.row(i).cwiseMin(p.row(j)).sum());
        }
    }
    return 1.0 - overlap;
}

/// Upper bound on Δ = max |h(B) - h(A)|: exact by enumeration up to 22 sensors,
/// otherwise error_upper_bound + λN (h lies in [0, that]).
template <ErrorModel M>
double delta_upper_bound(const M& model, double lambda)
{
    const int n = model.dimension();
    if (n <= kMaxExactGibbs) {
        const auto h = tabulate(model).costs(lambda);
        const auto [lo, hi] = std::minmax_element(h.begin(), h.end());
        return *hi - *lo;
    }
    return model.error_upper_bound() + lambda * n;
}

} // namespace sensel
