#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <limits>
#include <thread>
#include <unordered_map>
#include <vector>

#include "sensel/configuration.hpp"
#include "sensel/errors.hpp"

namespace sensel {

/// Pluggable estimation-error hook d_B. GaussianModel (MMSE) is the standard
/// implementation; ErrorTable holds an arbitrary tabulated metric.
template <class M>
concept ErrorModel = requires(const M& m, const Configuration& c) {
    { m.dimension() } -> std::convertible_to<int>;
    { m.error(c) } -> std::convertible_to<double>;
    { m.error_upper_bound() } -> std::convertible_to<double>;
};

struct CostParams {
    double lambda = 0.0;
    double beta = 1.0;

    void validate() const
    {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
            throw SpecError("lambda must be a finite nonnegative number");
        }
        if (!(beta > 0.0) || !std::isfinite(beta)) {
            throw SpecError("beta must be a finite positive number");
        }
    }
};

template <ErrorModel M>
double cost(const M& model, double lambda, const Configuration& config)
{
    return model.error(config) + lambda * static_cast<double>(config.count());
}

template <ErrorModel M>
double cost(const M& model, const CostParams& params, const Configuration& config)
{
    return cost(model, params.lambda, config);
}

/// Error values for every bitmask of an N-sensor model, indexed by bitmask.
class ErrorTable {
public:
    ErrorTable(int n, std::vector<double> errors) : n_(n), errors_(std::move(errors))
    {
        if (n < 1 || n > kMaxExactGibbs) {
            throw CapacityError("error table supports 1 <= N <= " + std::to_string(kMaxExactGibbs));
        }
        if (errors_.size() != (std::size_t{1} << n)) {
            throw SpecError("error table must hold 2^N entries");
        }
        upper_ = *std::max_element(errors_.begin(), errors_.end());
    }

    int dimension() const { return n_; }
    double error(const Configuration& c) const
    {
        if (c.size() != n_) throw SpecError("configuration size does not match error table");
        return errors_[c.bits()];
    }
    double error_upper_bound() const { return upper_; }
    const std::vector<double>& values() const { return errors_; }

    /// h(B) for every bitmask under the given activation price.
    std::vector<double> costs(double lambda) const
    {
        std::vector<double> h(errors_.size());
        for (std::size_t b = 0; b < h.size(); ++b) {
            h[b] = errors_[b] + lambda * static_cast<double>(std::popcount(b));
        }
        return h;
    }

private:
    int n_;
    std::vector<double> errors_;
    double upper_ = 0.0;
};

/// Evaluates the error of all 2^N configurations. Bitmask ranges are split across
/// `threads` workers; the model must be safe for concurrent const access.
template <ErrorModel M>
ErrorTable tabulate(const M& model, int threads = 1)
{
    const int n = model.dimension();
    require_capacity(n, kMaxExactGibbs, "tabulate");
    const std::uint64_t total = std::uint64_t{1} << n;
    std::vector<double> errors(total);
    auto fill = [&](std::uint64_t lo, std::uint64_t hi) {
        for (std::uint64_t b = lo; b < hi; ++b) errors[b] = model.error(Configuration(n, b));
    };
    threads = std::max(1, std::min<int>(threads, static_cast<int>(std::min<std::uint64_t>(total, 64))));
    if (threads == 1) {
        fill(0, total);
    } else {
        std::vector<std::exception_ptr> failures(static_cast<std::size_t>(threads));
        std::vector<std::jthread> pool;
        const std::uint64_t chunk = (total + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
            const std::uint64_t lo = chunk * w;
            const std::uint64_t hi = std::min(total, lo + chunk);
            pool.emplace_back([&, lo, hi, w] {
                try {
                    fill(lo, hi);
                } catch (...) {
                    failures[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        pool.clear();
        for (auto& f : failures) {
            if (f) std::rethrow_exception(f);
        }
    }
    return ErrorTable(n, std::move(errors));
}

/// Memoizes the error term by bitmask. The λ‖B‖₁ term is recomputed on every call,
/// so one cache serves a run in which λ changes. Not thread-safe: confine to one chain.
class CostCache {
public:
    CostCache() = default;

    template <ErrorModel M>
    double error(const M& model, const Configuration& config)
    {
        bind(model);
        if (dense_) {
            double& slot = table_[config.bits()];
            if (std::isnan(slot)) {
                ++misses_;
                slot = model.error(config);
            } else {
                ++hits_;
            }
            return slot;
        }
        auto [it, inserted] = map_.try_emplace(config.bits(), 0.0);
        if (inserted) {
            ++misses_;
            try {
                it->second = model.error(config);
            } catch (...) {
                map_.erase(it);
                throw;
            }
        } else {
            ++hits_;
        }
        return it->second;
    }

    template <ErrorModel M>
    double cost(const M& model, double lambda, const Configuration& config)
    {
        return error(model, config) + lambda * static_cast<double>(config.count());
    }

    std::uint64_t hits() const { return hits_; }
    std::uint64_t misses() const { return misses_; }
    std::size_t size() const
    {
        if (!dense_) return map_.size();
        return static_cast<std::size_t>(
            std::count_if(table_.begin(), table_.end(), [](double v) { return !std::isnan(v); }));
    }

private:
    static constexpr int kDenseLimit = 20;

    template <class M>
    void bind(const M& model)
    {
        const void* key = static_cast<const void*>(&model);
        if (owner_ == key) return;
        if (owner_ != nullptr) {
            throw std::logic_error("CostCache reused with a different model");
        }
        owner_ = key;
        const int n = model.dimension();
        dense_ = n <= kDenseLimit;
        if (dense_) table_.assign(std::size_t{1} << n, std::numeric_limits<double>::quiet_NaN());
    }

    const void* owner_ = nullptr;
    bool dense_ = false;
    std::vector<double> table_;
    std::unordered_map<std::uint64_t, double> map_;
    std::uint64_t hits_ = 0;
    std::uint64_t misses_ = 0;
};

template <ErrorModel M>
double cost_cached(CostCache& cache, const M& model, const CostParams& params, const Configuration& config)
{
    return cache.cost(model, params.lambda, config);
}

} // namespace sensel
