#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sensel/configuration.hpp"
#include "sensel/errors.hpp"

namespace sensel {

namespace detail {

inline Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                                 const std::vector<int>& cols)
{
    Eigen::MatrixXd out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
        }
    }
    return out;
}

// Pivots below this fraction of the largest diagonal entry count as a failed factorization.
inline constexpr double kPivotFloor = 1e-12;

inline bool factor_ok(const Eigen::LLT<Eigen::MatrixXd>& llt, double scale)
{
    if (llt.info() != Eigen::Success) return false;
    const Eigen::MatrixXd& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        const double d = l(i, i);
        if (!std::isfinite(d) || d <= 0.0 || d * d < kPivotFloor * scale) return false;
    }
    return true;
}

/// Cholesky of a symmetric PSD block. Tries the base jitter first, then escalates
/// 1e-10, 1e-9, ... up to 1e-6 added to the diagonal. Returns nullopt if all fail.
inline std::optional<Eigen::LLT<Eigen::MatrixXd>> robust_llt(const Eigen::MatrixXd& a,
                                                             double base_jitter)
{
    const double scale = std::max(1e-300, a.diagonal().cwiseAbs().maxCoeff());
    std::vector<double> ladder{base_jitter};
    for (double j = 1e-10; j <= 1e-6 * (1 + 1e-9); j *= 10) {
        if (j > base_jitter) ladder.push_back(j);
    }
    for (double jitter : ladder) {
        Eigen::MatrixXd shifted = a;
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (factor_ok(llt, scale)) return llt;
    }
    return std::nullopt;
}

} // namespace detail

/// Covariance of jointly Gaussian, zero-mean sensor data.
///
/// Immutable after construction: the matrix is checked for symmetry (1e-9,
/// relative to its largest entry), symmetrized, and checked to be positive
/// semidefinite up to -1e-9.
class GaussianModel {
public:
    explicit GaussianModel(Eigen::MatrixXd covariance, double jitter = 0.0)
        : cov_(std::move(covariance)), jitter_(jitter)
    {
        const auto n = cov_.rows();
        if (n < 1 || n != cov_.cols()) {
            throw SpecError("covariance must be a non-empty square matrix");
        }
        if (n > kMaxSensors) {
            throw SpecError("at most 64 sensors are supported");
        }
        if (!cov_.allFinite()) {
            throw SpecError("covariance contains non-finite entries");
        }
        if (!(jitter >= 0.0)) {
            throw SpecError("jitter must be nonnegative");
        }
        const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
        const double asym = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-9 * scale) {
            throw SpecError("covariance is not symmetric (max asymmetry " + std::to_string(asym) + ")");
        }
        cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_, Eigen::EigenvaluesOnly);
        const double min_eig = eig.eigenvalues().minCoeff();
        if (min_eig < -1e-9 * scale) {
            throw SpecError("covariance is not positive semidefinite (min eigenvalue " +
                            std::to_string(min_eig) + ")");
        }
        trace_ = cov_.trace();
    }

    int dimension() const { return static_cast<int>(cov_.rows()); }
    const Eigen::MatrixXd& covariance() const { return cov_; }
    double jitter() const { return jitter_; }
    double trace() const { return trace_; }

    double error(const Configuration& config) const;

    /// MMSE is largest with no observations.
    double error_upper_bound() const { return trace_; }

private:
    Eigen::MatrixXd cov_;
    double jitter_ = 0.0;
    double trace_ = 0.0;
};

/// MMSE of reconstructing the inactive coordinates from the active ones: the trace of
/// M(Sc,Sc) - M(Sc,S) M(S,S)^-1 M(S,Sc). Equals tr(M) for the empty set and 0 for the full set.
inline double mmse(const GaussianModel& model, const Configuration& config)
{
    const int n = model.dimension();
    if (config.size() != n) {
        throw SpecError("configuration size " + std::to_string(config.size()) +
                        " does not match model dimension " + std::to_string(n));
    }
    const int k = config.count();
    if (k == 0) return model.trace();
    if (k == n) return 0.0;

    const auto s = config.active();
    const auto c = config.inactive();
    const Eigen::MatrixXd& m = model.covariance();
    const Eigen::MatrixXd m_ss = detail::submatrix(m, s, s);
    const Eigen::MatrixXd m_sc = detail::submatrix(m, s, c);

    auto llt = detail::robust_llt(m_ss, model.jitter());
    if (!llt) {
        throw NumericalDegeneracyError("covariance block for active set 0x" + config.to_hex() +
                                       " is singular beyond jitter rescue");
    }
    // tr(M_cs M_ss^-1 M_sc) = ||L^-1 M_sc||_F^2
    const Eigen::MatrixXd w = llt->matrixL().solve(m_sc);
    double residual = 0.0;
    for (int j : c) residual += m(j, j);
    residual -= w.squaredNorm();
    return std::max(0.0, residual);
}

inline double GaussianModel::error(const Configuration& config) const { return mmse(*this, config); }

} // namespace sensel
