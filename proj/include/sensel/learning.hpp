#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sensel/cost.hpp"
#include "sensel/errors.hpp"
#include "sensel/exact_oracle.hpp"
#include "sensel/gibbs.hpp"

namespace sensel {

/// Parameters of the coupled Gibbs / stochastic-approximation scheme.
/// The price is projected onto [b, c] after every update; a(t) = step0 / t.
struct LearningParams {
    double nbar_target = 0.0;
    double beta = 5.0;
    double step0 = 1.0;
    double b = 0.0;
    double c = 1.0;
    double lambda0 = 0.0;

    void validate(int n) const
    {
        if (!(nbar_target >= 0.0 && nbar_target <= n)) throw SpecError("nbar must lie in [0, N]");
        if (!(beta > 0.0) || !std::isfinite(beta)) throw SpecError("beta must be finite and positive");
        if (!(step0 > 0.0) || !std::isfinite(step0)) throw SpecError("step0 must be finite and positive");
        if (!(b >= 0.0)) throw SpecError("projection bound b must be nonnegative");
        if (!(c > b) || !std::isfinite(c)) throw SpecError("projection bound c must exceed b");
        if (!(lambda0 >= b && lambda0 <= c)) throw SpecError("lambda0 must lie in [b, c]");
    }

    /// Box [0, tr(M)] with λ(0) at its midpoint.
    template <ErrorModel M>
    static LearningParams defaults_for(const M& model, double nbar)
    {
        LearningParams p;
        p.nbar_target = nbar;
        p.b = 0.0;
        p.c = model.error_upper_bound();
        p.lambda0 = 0.5 * (p.b + p.c);
        return p;
    }
};

struct LearningRecord {
    std::uint64_t t = 0;
    double lambda = 0.0;  // λ(t+1), after this slot's update
    int popcount = 0;     // ‖B(t)‖₁
    double cost = 0.0;    // h_{λ(t)}(B(t))
};

struct LearningState {
    ChainState chain;
    double lambda = 0.0;
    std::uint64_t t = 0;
    std::vector<LearningRecord> lambda_trace;
};

template <ErrorModel M>
LearningState init_learning(const M& model, const LearningParams& params, std::uint64_t seed, CostCache& cache)
{
    LearningState s;
    s.chain = init_chain(model, params.lambda0, seed, cache);
    s.lambda = params.lambda0;
    return s;
}

/// Slot t (counted from 1): one Gibbs update under λ(t), then
/// λ(t+1) = clamp(λ(t) + a(t) (‖B(t-1)‖₁ - N̄), b, c) where B(t-1) is the
/// configuration before this slot's update.
template <ErrorModel M>
void learning_step(LearningState& s, const M& model, const LearningParams& params, CostCache& cache,
                   bool record = true)
{
    const int previous = s.chain.config.count();
    gibbs_step(s.chain, model, s.lambda, params.beta, cache);
    ++s.t;
    const double a = params.step0 / static_cast<double>(s.t);
    s.lambda = std::clamp(s.lambda + a * (previous - params.nbar_target), params.b, params.c);
    if (record) s.lambda_trace.push_back({s.t, s.lambda, s.chain.config.count(), s.chain.cost});
}

struct LearningRun {
    LearningState state;
    double lambda_hat = 0.0;          // mean of λ over the tail window
    double tail_mean_popcount = 0.0;  // mean of ‖B‖₁ over the tail window
    std::uint64_t tail_window = 0;
};

/// Default tail window: last 5% of the run, at least 100 slots, at most the run.
inline std::uint64_t default_tail_window(std::uint64_t steps)
{
    return std::min(steps, std::max<std::uint64_t>(100, steps / 20));
}

template <ErrorModel M>
LearningRun run_gibbs_learning(const M& model, const LearningParams& params, std::uint64_t steps,
                               std::uint64_t seed, std::uint64_t tail_window = 0, CostCache* cache = nullptr)
{
    params.validate(model.dimension());
    if (steps < 1) throw SpecError("steps must be at least 1");
    if (tail_window == 0) tail_window = default_tail_window(steps);
    tail_window = std::min(tail_window, steps);

    CostCache local;
    CostCache& c = cache ? *cache : local;
    LearningRun run;
    run.state = init_learning(model, params, seed, c);
    run.state.lambda_trace.reserve(static_cast<std::size_t>(steps));
    for (std::uint64_t k = 0; k < steps; ++k) learning_step(run.state, model, params, c);

    const auto& tr = run.state.lambda_trace;
    double lam = 0.0;
    double pop = 0.0;
    for (std::size_t i = tr.size() - tail_window; i < tr.size(); ++i) {
        lam += tr[i].lambda;
        pop += tr[i].popcount;
    }
    run.tail_window = tail_window;
    run.lambda_hat = lam / static_cast<double>(tail_window);
    run.tail_mean_popcount = pop / static_cast<double>(tail_window);
    return run;
}

/// f(λ) = E_{π_β|λ} ‖B‖₁ from a tabulated error function, evaluated in the log domain.
class ActiveCountResponse {
public:
    ActiveCountResponse(const ErrorTable& table, double beta) : table_(table), beta_(beta) {}

    double operator()(double lambda) const
    {
        const auto h = table_.costs(lambda);
        return gibbs_distribution(table_.dimension(), h, beta_).mean_active();
    }

private:
    ErrorTable table_;
    double beta_;
};

template <ErrorModel M>
double mean_active_count(const M& model, double lambda, double beta)
{
    return exact_gibbs(model, lambda, beta).mean_active();
}

struct Feasibility {
    bool feasible = false;
    std::optional<double> lambda_star;
};

/// Checks f(c) <= N̄ <= f(b) and bisects f(λ) = N̄ to within 1e-6 (f is continuous and
/// decreasing in λ at fixed β).
template <ErrorModel M>
Feasibility check_feasibility(const M& model, double beta, double nbar, double b, double c)
{
    require_capacity(model.dimension(), kMaxExactGibbs, "check_feasibility");
    if (!(c > b) || !(b >= 0.0)) throw SpecError("need 0 <= b < c");
    const ActiveCountResponse f(tabulate(model), beta);
    const double fb = f(b);
    const double fc = f(c);
    if (nbar == fb) return {true, b};
    if (nbar == fc) return {true, c};
    if (!(fc <= nbar && nbar <= fb)) return {false, std::nullopt};
    double lo = b;
    double hi = c;
    while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) > nbar) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return {true, 0.5 * (lo + hi)};
}

} // namespace sensel
