#pragma once

// Reference computations used by the tests. Each one takes a different numerical
// route from the library code it checks.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sensel/sensel.hpp"

namespace testing_support {

using sensel::Configuration;

/// MMSE through the precision matrix: the conditional covariance of the unobserved
/// block is the inverse of the corresponding block of M^-1.
inline double precision_route_mmse(const Eigen::MatrixXd& m, const Configuration& c)
{
    const auto hidden = c.inactive();
    if (hidden.empty()) return 0.0;
    const Eigen::MatrixXd p = m.fullPivLu().inverse();
    Eigen::MatrixXd p_cc(hidden.size(), hidden.size());
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        for (std::size_t j = 0; j < hidden.size(); ++j) p_cc(i, j) = p(hidden[i], hidden[j]);
    }
    return p_cc.fullPivLu().inverse().trace();
}

/// Schur complement with an explicit LU inverse of the observed block.
inline double naive_mmse(const Eigen::MatrixXd& m, const Configuration& c)
{
    const auto s = c.active();
    const auto h = c.inactive();
    if (h.empty()) return 0.0;
    double tr = 0.0;
    for (int j : h) tr += m(j, j);
    if (s.empty()) return tr;
    const Eigen::MatrixXd m_ss = sensel::detail::submatrix(m, s, s);
    const Eigen::MatrixXd m_sc = sensel::detail::submatrix(m, s, h);
    const Eigen::MatrixXd inv = m_ss.fullPivLu().inverse();
    return tr - (m_sc.transpose() * inv * m_sc).trace();
}

/// h(b) for every bitmask, evaluated independently of ErrorTable and CostCache.
inline std::vector<double> brute_costs(const Eigen::MatrixXd& m, double lambda)
{
    const int n = static_cast<int>(m.rows());
    std::vector<double> h(std::size_t{1} << n);
    for (std::uint64_t b = 0; b < h.size(); ++b) {
        const Configuration c(n, b);
        h[b] = naive_mmse(m, c) + lambda * c.count();
    }
    return h;
}

/// Unnormalized Boltzmann weights divided by their direct sum (no log-sum-exp).
inline std::vector<double> direct_boltzmann(const std::vector<double>& h, double beta)
{
    std::vector<double> w(h.size());
    double z = 0.0;
    for (std::size_t b = 0; b < h.size(); ++b) {
        w[b] = std::isfinite(h[b]) ? std::exp(-beta * h[b]) : 0.0;
        z += w[b];
    }
    for (double& v : w) v /= z;
    return w;
}

/// Error model defined by a callback; counts every evaluation.
template <class F>
class CountingModel {
public:
    CountingModel(int n, F f, double upper) : n_(n), f_(std::move(f)), upper_(upper) {}

    int dimension() const { return n_; }
    double error(const Configuration& c) const
    {
        ++calls_;
        return f_(c);
    }
    double error_upper_bound() const { return upper_; }
    std::uint64_t calls() const { return calls_; }

private:
    int n_;
    F f_;
    double upper_;
    mutable std::atomic<std::uint64_t> calls_{0};
};

/// Sites decouple: each active sensor removes its own unit of error.
inline auto independent_sites(int n)
{
    auto f = [n](const Configuration& c) { return static_cast<double>(n - c.count()); };
    return CountingModel<decltype(f)>(n, f, static_cast<double>(n));
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Golden-section search for the maximizer of a unimodal function on [lo, hi].
template <class F>
double golden_max(F&& f, double lo, double hi, double tol = 1e-12)
{
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double x1 = b - g * (b - a);
    double x2 = a + g * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

/// log N(x; mean·1, cov) by an eigendecomposition of cov.
inline double gaussian_log_density(const Eigen::VectorXd& x, double mean, const Eigen::MatrixXd& cov)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd r = eig.eigenvectors().transpose() * (x.array() - mean).matrix();
    double quad = 0.0;
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        quad += r(i) * r(i) / eig.eigenvalues()(i);
        log_det += std::log(eig.eigenvalues()(i));
    }
    return -0.5 * (quad + log_det + static_cast<double>(x.size()) * std::log(2.0 * M_PI));
}

// Sample X ~ N(0, M) via an eigendecomposition and average the squared residual of
// the exact regression of the hidden block on the observed block.
struct MonteCarloEstimate {
    double mean;
    double standard_error;
};

inline MonteCarloEstimate monte_carlo_mmse(const Eigen::MatrixXd& m, const Configuration& c, int samples,
                                           std::uint64_t seed)
{
    const int n = static_cast<int>(m.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const Eigen::MatrixXd root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const auto s = c.active();
    const auto h = c.inactive();
    const Eigen::MatrixXd p = m.inverse();
    const Eigen::MatrixXd p_hh = sensel::detail::submatrix(p, h, h);
    const Eigen::MatrixXd p_hs = sensel::detail::submatrix(p, h, s);
    const Eigen::MatrixXd coef = -p_hh.inverse() * p_hs;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    double sum = 0.0;
    double sum_sq = 0.0;
    Eigen::VectorXd e(n);
    Eigen::VectorXd xs(s.size());
    Eigen::VectorXd xh(h.size());
    for (int i = 0; i < samples; ++i) {
        for (int k = 0; k < n; ++k) e(k) = z(rng);
        const Eigen::VectorXd x = root * e;
        for (std::size_t k = 0; k < s.size(); ++k) xs(static_cast<Eigen::Index>(k)) = x(s[k]);
        for (std::size_t k = 0; k < h.size(); ++k) xh(static_cast<Eigen::Index>(k)) = x(h[k]);
        const double r = (xh - coef * xs).squaredNorm();
        sum += r;
        sum_sq += r * r;
    }
    const double mean = sum / samples;
    const double var = sum_sq / samples - mean * mean;
    return {mean, std::sqrt(var / samples)};
}

} // namespace testing_support
