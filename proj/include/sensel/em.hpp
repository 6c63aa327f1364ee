#pragma once

// Sequential sensor sampling with EM-refined parameter estimates.
//
// These procedures are heuristics: EM returns a local maximizer of the observed
// likelihood and the sensor picks are greedy, so there is no optimality guarantee.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sensel/configuration.hpp"
#include "sensel/errors.hpp"
#include "sensel/exact_oracle.hpp"
#include "sensel/gaussian_model.hpp"
#include "sensel/gibbs.hpp"

namespace sensel {

/// Values observed on a subset of coordinates, in increasing coordinate order.
struct PartialObservation {
    Configuration observed;
    std::vector<double> values;

    void validate() const
    {
        if (static_cast<int>(values.size()) != observed.count()) {
            throw SpecError("observation has " + std::to_string(values.size()) + " values for " +
                            std::to_string(observed.count()) + " observed coordinates");
        }
    }
};

/// Sufficient statistics of partial snapshots, grouped by observed set.
class ObservationPool {
public:
    struct Group {
        Configuration observed;
        std::uint64_t count = 0;
        Eigen::VectorXd sum;       // Σ x_S
        Eigen::MatrixXd sum_outer; // Σ x_S x_Sᵀ
    };

    void add(const PartialObservation& obs)
    {
        obs.validate();
        if (obs.observed.count() == 0) throw SpecError("observation is empty");
        const auto k = static_cast<Eigen::Index>(obs.values.size());
        Eigen::Map<const Eigen::VectorXd> x(obs.values.data(), k);
        auto [it, inserted] = groups_.try_emplace(obs.observed.bits());
        Group& g = it->second;
        if (inserted) {
            g.observed = obs.observed;
            g.sum = Eigen::VectorXd::Zero(k);
            g.sum_outer = Eigen::MatrixXd::Zero(k, k);
        }
        ++g.count;
        g.sum += x;
        g.sum_outer += x * x.transpose();
        ++snapshots_;
    }

    std::uint64_t snapshots() const { return snapshots_; }
    bool empty() const { return snapshots_ == 0; }
    const std::map<std::uint64_t, Group>& groups() const { return groups_; }

private:
    std::map<std::uint64_t, Group> groups_;
    std::uint64_t snapshots_ = 0;
};

struct EmOptions {
    int max_iters = 500;
    double tol = 1e-8;
};

template <class Family>
struct EmFit {
    Family family;
    int iterations = 0;
    bool converged = false;
    std::vector<double> log_likelihood;  // before the first iteration, then after each
    int monotonicity_violations = 0;     // drops below -1e-9
};

/// X ~ Normal(θ·1, M) with M known and scalar θ unknown.
class CommonMeanGaussian {
public:
    CommonMeanGaussian(GaussianModel model, double theta) : model_(std::move(model)), theta_(theta)
    {
        if (!std::isfinite(theta)) throw SpecError("theta must be finite");
    }

    int dimension() const { return model_.dimension(); }
    const GaussianModel& model() const { return model_; }
    double theta() const { return theta_; }

    CommonMeanGaussian with_theta(double theta) const { return CommonMeanGaussian(model_, theta); }

    /// Expected MMSE of reconstructing X from the coordinates in `candidate`. For a
    /// known covariance this does not depend on θ or on the values already observed.
    double selection_error(const Configuration& candidate, const PartialObservation& /*observed*/) const
    {
        return mmse(model_, candidate);
    }

    /// E[X | X_S = x_S; θ]; observed coordinates are returned unchanged.
    Eigen::VectorXd conditional_mean(const PartialObservation& obs) const
    {
        obs.validate();
        const Blocks blk = blocks(obs.observed);
        Eigen::Map<const Eigen::VectorXd> x(obs.values.data(), static_cast<Eigen::Index>(obs.values.size()));
        return complete(blk, x, theta_);
    }

    double log_likelihood(const ObservationPool& pool, double theta) const
    {
        double ll = 0.0;
        for (const auto& [bits, g] : pool.groups()) ll += group_log_likelihood(blocks(g.observed), g, theta);
        return ll;
    }

    double log_likelihood(const PartialObservation& obs, double theta) const
    {
        ObservationPool pool;
        pool.add(obs);
        return log_likelihood(pool, theta);
    }

    /// EM from the current θ. E-step: complete each group's mean snapshot by its
    /// conditional mean; M-step: GLS mean of the completed vectors under M.
    EmFit<CommonMeanGaussian> fit(const ObservationPool& pool, const EmOptions& opts = {}) const
    {
        if (pool.empty()) throw SpecError("EM needs at least one observed coordinate");
        const Eigen::VectorXd w = gls_weights();
        std::vector<std::pair<Blocks, const ObservationPool::Group*>> groups;
        for (const auto& [bits, g] : pool.groups()) groups.emplace_back(blocks(g.observed), &g);

        auto loglik = [&](double th) {
            double ll = 0.0;
            for (const auto& [blk, g] : groups) ll += group_log_likelihood(blk, *g, th);
            return ll;
        };

        EmFit<CommonMeanGaussian> out{*this, 0, false, {}, 0};
        double theta = theta_;
        double ll = loglik(theta);
        out.log_likelihood.push_back(ll);
        const double total = static_cast<double>(pool.snapshots());
        for (int it = 1; it <= opts.max_iters; ++it) {
            double next = 0.0;
            for (const auto& [blk, g] : groups) {
                const Eigen::VectorXd mean_obs = g->sum / static_cast<double>(g->count);
                next += static_cast<double>(g->count) * w.dot(complete(blk, mean_obs, theta));
            }
            next /= total;
            const double ll_next = loglik(next);
            if (ll_next < ll - 1e-9) ++out.monotonicity_violations;
            out.log_likelihood.push_back(ll_next);
            out.iterations = it;
            const double change = std::abs(next - theta);
            theta = next;
            ll = ll_next;
            if (change <= opts.tol) {
                out.converged = true;
                break;
            }
        }
        out.family = with_theta(theta);
        return out;
    }

    /// Closed-form maximizer of the observed likelihood (reference value for EM).
    double observed_mle(const ObservationPool& pool) const
    {
        double num = 0.0;
        double den = 0.0;
        for (const auto& [bits, g] : pool.groups()) {
            const Blocks blk = blocks(g.observed);
            const Eigen::VectorXd ones = Eigen::VectorXd::Ones(blk.s.size());
            const Eigen::VectorXd p1 = blk.llt.solve(ones);
            num += p1.dot(g.sum);
            den += static_cast<double>(g.count) * p1.dot(ones);
        }
        return num / den;
    }

    /// Fisher information 1ᵀ M_SS⁻¹ 1 summed over snapshots; the MLE variance is its inverse.
    double observed_information(const ObservationPool& pool) const
    {
        double info = 0.0;
        for (const auto& [bits, g] : pool.groups()) {
            const Blocks blk = blocks(g.observed);
            const Eigen::VectorXd ones = Eigen::VectorXd::Ones(blk.s.size());
            info += static_cast<double>(g.count) * ones.dot(blk.llt.solve(ones));
        }
        return info;
    }

private:
    struct Blocks {
        std::vector<int> s;
        std::vector<int> c;
        Eigen::LLT<Eigen::MatrixXd> llt;  // of M_SS
        Eigen::MatrixXd regress;          // M_CS M_SS⁻¹
        double log_det = 0.0;
    };

    Blocks blocks(const Configuration& observed) const
    {
        Blocks b;
        b.s = observed.active();
        b.c = observed.inactive();
        const Eigen::MatrixXd& m = model_.covariance();
        auto llt = detail::robust_llt(detail::submatrix(m, b.s, b.s), model_.jitter());
        if (!llt) {
            throw NumericalDegeneracyError("covariance block for observed set 0x" + observed.to_hex() +
                                           " is singular beyond jitter rescue");
        }
        b.llt = std::move(*llt);
        if (!b.c.empty()) {
            b.regress = b.llt.solve(detail::submatrix(m, b.s, b.c)).transpose();
        }
        b.log_det = 2.0 * b.llt.matrixLLT().diagonal().array().log().sum();
        return b;
    }

    Eigen::VectorXd complete(const Blocks& blk, const Eigen::VectorXd& x_s, double theta) const
    {
        Eigen::VectorXd full(dimension());
        for (std::size_t i = 0; i < blk.s.size(); ++i) full(blk.s[i]) = x_s(static_cast<Eigen::Index>(i));
        if (!blk.c.empty()) {
            const Eigen::VectorXd imputed =
                Eigen::VectorXd::Constant(static_cast<Eigen::Index>(blk.c.size()), theta) +
                blk.regress * (x_s.array() - theta).matrix();
            for (std::size_t i = 0; i < blk.c.size(); ++i) full(blk.c[i]) = imputed(static_cast<Eigen::Index>(i));
        }
        return full;
    }

    double group_log_likelihood(const Blocks& blk, const ObservationPool::Group& g, double theta) const
    {
        const auto k = static_cast<Eigen::Index>(blk.s.size());
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
        const Eigen::VectorXd p1 = blk.llt.solve(ones);
        const Eigen::MatrixXd p_outer = blk.llt.solve(g.sum_outer);
        const double cnt = static_cast<double>(g.count);
        const double quad = p_outer.trace() - 2.0 * theta * p1.dot(g.sum) + cnt * theta * theta * p1.dot(ones);
        return -0.5 * quad - 0.5 * cnt * (blk.log_det + static_cast<double>(k) * std::log(2.0 * std::numbers::pi));
    }

    Eigen::VectorXd gls_weights() const
    {
        auto llt = detail::robust_llt(model_.covariance(), model_.jitter());
        if (!llt) throw NumericalDegeneracyError("covariance is singular beyond jitter rescue");
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(dimension());
        const Eigen::VectorXd p1 = llt->solve(ones);
        return p1 / ones.dot(p1);
    }

    GaussianModel model_;
    double theta_;
};

/// Richer families plug into the selection loops through this interface.
template <class F>
concept ParametricFamily = requires(const F& f, const Configuration& c, const PartialObservation& o,
                                    const ObservationPool& pool, const EmOptions& opts) {
    { f.dimension() } -> std::convertible_to<int>;
    { f.selection_error(c, o) } -> std::convertible_to<double>;
    { f.conditional_mean(o) } -> std::convertible_to<Eigen::VectorXd>;
    { f.fit(pool, opts) } -> std::same_as<EmFit<F>>;
};

template <ParametricFamily F>
EmFit<F> em_fit(const F& family, const PartialObservation& obs, const EmOptions& opts = {})
{
    ObservationPool pool;
    pool.add(obs);
    return family.fit(pool, opts);
}

template <ParametricFamily F>
EmFit<F> em_fit(const F& family, const PartialObservation& obs, int max_iters, double tol)
{
    return em_fit(family, obs, EmOptions{max_iters, tol});
}

template <class F>
struct StaticSelection {
    std::vector<int> order;
    F family;
    std::vector<double> theta_trace;  // θ_1, θ_2, ..., θ_{N̄+1}
    Eigen::VectorXd reconstruction;
    PartialObservation observation;
    int em_monotonicity_violations = 0;
};

/// Greedy sequential sampling of one static snapshot: each round picks the unsampled
/// sensor minimizing the expected error given the sensors sampled so far, queries its
/// value, and reruns EM from the previous estimate.
template <ParametricFamily F>
StaticSelection<F> em_static_select(const F& family0, const std::function<double(int)>& read_sensor, int nbar,
                                    const EmOptions& opts = {})
{
    const int n = family0.dimension();
    if (nbar < 1 || nbar > n) throw SpecError("nbar out of range [1, N]");
    StaticSelection<F> out{{}, family0, {family0.theta()}, {}, {Configuration::empty(n), {}}, 0};
    for (int k = 0; k < nbar; ++k) {
        int best = -1;
        double best_err = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (out.observation.observed.test(j)) continue;
            const double e = out.family.selection_error(out.observation.observed.with(j, true), out.observation);
            if (e < best_err) {
                best_err = e;
                best = j;
            }
        }
        out.order.push_back(best);
        // keep values aligned with increasing coordinate order
        const double value = read_sensor(best);
        const auto before = out.observation.observed.active();
        std::size_t pos = 0;
        while (pos < before.size() && before[pos] < best) ++pos;
        out.observation.values.insert(out.observation.values.begin() + static_cast<std::ptrdiff_t>(pos), value);
        out.observation.observed.set(best, true);

        auto fit = em_fit(out.family, out.observation, opts);
        out.em_monotonicity_violations += fit.monotonicity_violations;
        out.family = fit.family;
        out.theta_trace.push_back(out.family.theta());
    }
    out.reconstruction = out.family.conditional_mean(out.observation);
    return out;
}

struct SequentialOptions {
    EmOptions em;
    std::uint64_t enumeration_limit = 1'000'000;  // largest C(N, N̄) searched exhaustively
    double gibbs_beta = 10.0;                      // fallback sampler for larger slices
    std::uint64_t gibbs_steps = 20'000;
    std::uint64_t seed = 0;
};

struct SlotRecord {
    std::uint64_t slot = 0;
    Configuration selection;
    double theta = 0.0;  // estimate after this slot's EM update
    double selection_error = 0.0;
};

template <class F>
struct SequentialRun {
    std::vector<SlotRecord> slots;
    F family;
    int em_monotonicity_violations = 0;
};

inline double binomial(int n, int k)
{
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

namespace detail {

template <class F>
struct SelectionCriterion {
    const F* family;
    PartialObservation none;
    int dimension() const { return family->dimension(); }
    double error(const Configuration& c) const { return family->selection_error(c, none); }
    double error_upper_bound() const { return error(Configuration::empty(dimension())); }
};

} // namespace detail

/// Per slot: choose the cardinality-N̄ configuration minimizing the expected error
/// under θ_t, observe those coordinates of the slot's snapshot, and rerun EM from θ_t
/// on every observation gathered so far.
template <ParametricFamily F>
SequentialRun<F> em_sequential_select(const F& family0, const std::function<Eigen::VectorXd(std::uint64_t)>& snapshot,
                                      int nbar, std::uint64_t slots, const SequentialOptions& opts = {})
{
    const int n = family0.dimension();
    if (nbar < 1 || nbar > n) throw SpecError("nbar out of range [1, N]");
    if (slots < 1) throw SpecError("slots must be at least 1");
    const bool exhaustive = binomial(n, nbar) <= static_cast<double>(opts.enumeration_limit);

    SequentialRun<F> run{{}, family0, 0};
    ObservationPool pool;
    for (std::uint64_t t = 1; t <= slots; ++t) {
        detail::SelectionCriterion<F> crit{&run.family, {Configuration::empty(n), {}}};
        Optimum pick;
        if (exhaustive) {
            pick = exhaustive_cardinality_optimum(crit, nbar);
        } else {
            RunOptions ro;
            ro.steps = opts.gibbs_steps;
            ro.seed = opts.seed + t;
            ro.stride = opts.gibbs_steps;
            auto chain = run_fixed_cardinality_gibbs(crit, nbar, opts.gibbs_beta, ro);
            pick = {chain.state.best_config, chain.state.best_cost};
        }
        const Eigen::VectorXd x = snapshot(t);
        if (x.size() != n) throw SpecError("snapshot has wrong dimension");
        PartialObservation obs{pick.config, {}};
        for (int j : pick.config.active()) obs.values.push_back(x(j));
        pool.add(obs);

        auto fit = run.family.fit(pool, opts.em);
        run.em_monotonicity_violations += fit.monotonicity_violations;
        run.family = fit.family;
        run.slots.push_back({t, pick.config, run.family.theta(), pick.value});
    }
    return run;
}

/// Draws X ~ Normal(mean·1, M) using a Cholesky factor of M.
class GaussianSampler {
public:
    GaussianSampler(const GaussianModel& model, double mean, std::uint64_t seed) : mean_(mean), rng_(seed)
    {
        auto llt = detail::robust_llt(model.covariance(), std::max(model.jitter(), 0.0));
        if (!llt) throw NumericalDegeneracyError("covariance is singular beyond jitter rescue");
        factor_ = llt->matrixL();
    }

    Eigen::VectorXd operator()()
    {
        Eigen::VectorXd z(factor_.rows());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal_(rng_);
        return (factor_ * z).array() + mean_;
    }

private:
    double mean_;
    Rng rng_;
    std::normal_distribution<double> normal_;
    Eigen::MatrixXd factor_;
};

} // namespace sensel
