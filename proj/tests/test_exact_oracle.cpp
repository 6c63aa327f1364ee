#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"

using namespace sensel;
namespace ts = testing_support;

namespace {

GaussianModel identity(int n) { return GaussianModel(Eigen::MatrixXd::Identity(n, n)); }

double linf(const std::vector<double>& a, const std::vector<double>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(ExhaustiveOptimum, IdentityExamples)
{
    const auto cheap = exhaustive_optimum(identity(4), 0.5);
    EXPECT_EQ(cheap.config, Configuration::full(4));
    EXPECT_DOUBLE_EQ(cheap.value, 2.0);

    const auto dear = exhaustive_optimum(identity(4), CostParams{1.5, 1.0});
    EXPECT_EQ(dear.config, Configuration::empty(4));
    EXPECT_DOUBLE_EQ(dear.value, 4.0);

    const auto tie = exhaustive_optimum(identity(4), 1.0);
    EXPECT_EQ(tie.config.bits(), 0u);
    EXPECT_DOUBLE_EQ(tie.value, 4.0);
}

TEST(ExhaustiveOptimum, MatchesIndependentBruteForce)
{
    const GaussianModel g = gen_covariance(12, 7);
    const auto h = ts::brute_costs(g.covariance(), 2.3);
    const auto it = std::min_element(h.begin(), h.end());
    const auto opt = exhaustive_optimum(g, 2.3);
    EXPECT_EQ(opt.config.bits(), static_cast<std::uint64_t>(it - h.begin()));
    EXPECT_NEAR(opt.value, *it, 1e-9);
}

TEST(ExhaustiveOptimum, CapacityLimit)
{
    auto big = ts::independent_sites(31);
    EXPECT_THROW(exhaustive_optimum(big, 1.0), CapacityError);
    EXPECT_THROW(exhaustive_cardinality_optimum(big, 3), CapacityError);
    EXPECT_EQ(big.calls(), 0u);
}

TEST(ExhaustiveOptimum, CardinalityAndBudgetMatchBruteForce)
{
    const GaussianModel g = gen_covariance(9, 13);
    const auto t = tabulate(g);
    for (int k = 0; k <= 9; ++k) {
        double best_exact = INFINITY;
        double best_budget = INFINITY;
        for (std::uint64_t b = 0; b < 512; ++b) {
            const double e = ts::naive_mmse(g.covariance(), Configuration(9, b));
            if (std::popcount(b) == k) best_exact = std::min(best_exact, e);
            if (std::popcount(b) <= k) best_budget = std::min(best_budget, e);
        }
        const auto card = exhaustive_cardinality_optimum(t, k);
        EXPECT_EQ(card.config.count(), k);
        EXPECT_NEAR(card.value, best_exact, 1e-9);
        EXPECT_NEAR(exhaustive_budget_optimum(t, k).value, best_budget, 1e-9);
    }
    EXPECT_THROW(exhaustive_cardinality_optimum(t, 10), SpecError);
    EXPECT_THROW(exhaustive_budget_optimum(t, -1), SpecError);
}

TEST(Combinations, VisitsEverySubsetOnceInOrder)
{
    for (int n = 1; n <= 10; ++n) {
        for (int k = 0; k <= n; ++k) {
            std::vector<std::uint64_t> seen;
            detail::for_each_combination(n, k, [&](std::uint64_t b) { seen.push_back(b); });
            EXPECT_EQ(static_cast<double>(seen.size()), binomial(n, k));
            EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end()));
            for (auto b : seen) EXPECT_EQ(std::popcount(b), k);
        }
    }
}

TEST(GibbsDistribution, SymmetricSingleSite)
{
    const std::vector<double> h{0.7, 0.7};
    for (double beta : {0.1, 1.0, 100.0}) {
        const auto d = gibbs_distribution(1, h, beta);
        EXPECT_DOUBLE_EQ(d.probs[0], 0.5);
        EXPECT_DOUBLE_EQ(d.probs[1], 0.5);
    }
}

TEST(GibbsDistribution, ZeroBetaIsUniform)
{
    const auto d = exact_gibbs(gen_covariance(5, 1), 1.0, 0.0);
    for (double p : d.probs) EXPECT_NEAR(p, 1.0 / 32, 1e-15);
}

TEST(GibbsDistribution, DirectEvaluation)
{
    const std::vector<double> h{0.0, 1.0, 2.0, 3.0};
    const auto d = gibbs_distribution(2, h, std::numbers::ln2);
    const double expected[] = {8.0 / 15, 4.0 / 15, 2.0 / 15, 1.0 / 15};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(d.probs[i], expected[i], 1e-15);
    EXPECT_NEAR(d.log_partition, std::log(15.0 / 8.0), 1e-15);
}

TEST(GibbsDistribution, NormalizedAndProportional)
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const GaussianModel g = gen_covariance(8, seed);
        const auto h = ts::brute_costs(g.covariance(), 1.1);
        for (double beta : {0.3, 2.0, 7.0}) {
            const auto d = exact_gibbs(g, CostParams{1.1, beta});
            const auto ref = ts::direct_boltzmann(h, beta);
            double sum = 0.0;
            for (std::size_t b = 0; b < ref.size(); ++b) {
                sum += d.probs[b];
                EXPECT_NEAR(d.probs[b], ref[b], 1e-10 * ref[b] + 1e-300);
            }
            EXPECT_NEAR(sum, 1.0, 1e-10);
            double z = 0.0;
            for (double v : h) z += std::exp(-beta * v);
            EXPECT_NEAR(d.log_partition, std::log(z), 1e-9);
        }
    }
}

TEST(GibbsDistribution, LargeBetaStaysFinite)
{
    const GaussianModel g = gen_covariance(6, 3);
    const auto d = exact_gibbs(g, 1.0, 1e6);
    const auto opt = exhaustive_optimum(g, 1.0);
    EXPECT_TRUE(std::isfinite(d.log_partition));
    EXPECT_NEAR(d.prob(opt.config), 1.0, 1e-12);
}

TEST(GibbsDistribution, ConcentratesOnOptimum)
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const GaussianModel g = gen_covariance(8, seed);
        const auto t = tabulate(g);
        auto h = t.costs(1.0);
        const auto opt = exhaustive_optimum(t, 1.0);
        std::sort(h.begin(), h.end());
        // every rival is at least the runner-up gap above the optimum, so this beta
        // leaves the 255 rivals with at most 1% of the mass between them
        const double beta = std::log(100.0 * 255) / (h[1] - h[0]);
        EXPECT_GE(exact_gibbs(t, 1.0, beta).prob(opt.config), 0.99) << "seed " << seed;
    }
}

TEST(GibbsDistribution, InfiniteCostsExcluded)
{
    const std::vector<double> h{INFINITY, 1.0, 1.0, INFINITY};
    const auto d = gibbs_distribution(2, h, 3.0);
    EXPECT_EQ(d.probs[0], 0.0);
    EXPECT_EQ(d.probs[3], 0.0);
    EXPECT_DOUBLE_EQ(d.probs[1], 0.5);
    const std::vector<double> none{INFINITY, INFINITY};
    EXPECT_THROW(gibbs_distribution(1, none, 1.0), SpecError);
    EXPECT_THROW(gibbs_distribution(2, none, 1.0), SpecError);
    EXPECT_THROW(gibbs_distribution(1, std::vector<double>{0, 1}, -1.0), SpecError);
}

TEST(GibbsDistribution, CardinalitySliceIsRestriction)
{
    const GaussianModel g = gen_covariance(7, 21);
    const auto t = tabulate(g);
    const auto d = exact_gibbs_cardinality(t, 3, 2.0);
    const auto full = gibbs_distribution(7, t.costs(0.0), 2.0);
    double slice_mass = 0.0;
    for (std::uint64_t b = 0; b < 128; ++b) {
        if (std::popcount(b) == 3) slice_mass += full.probs[b];
    }
    for (std::uint64_t b = 0; b < 128; ++b) {
        if (std::popcount(b) == 3) {
            EXPECT_NEAR(d.probs[b], full.probs[b] / slice_mass, 1e-12);
        } else {
            EXPECT_EQ(d.probs[b], 0.0);
        }
    }
}

TEST(ChainMatrix, SingleSiteSamplesConditional)
{
    const std::vector<double> h{0.2, 1.0};
    const double beta = 1.7;
    const auto cm = chain_matrix(1, h, beta);
    const double p = std::exp(-beta * h[1]) / (std::exp(-beta * h[0]) + std::exp(-beta * h[1]));
    for (int r = 0; r < 2; ++r) {
        EXPECT_NEAR(cm.p(r, 0), 1.0 - p, 1e-15);
        EXPECT_NEAR(cm.p(r, 1), p, 1e-15);
    }
}

TEST(ChainMatrix, ZeroBetaMovesToEachNeighbour)
{
    const int n = 4;
    const auto cm = exact_tpm(gen_covariance(n, 8), 0.5, 0.0);
    for (int a = 0; a < 16; ++a) {
        for (int b = 0; b < 16; ++b) {
            const int d = std::popcount(static_cast<unsigned>(a ^ b));
            const double expected = d == 0 ? 0.5 : (d == 1 ? 1.0 / (2 * n) : 0.0);
            EXPECT_NEAR(cm.p(a, b), expected, 1e-15);
        }
    }
}

TEST(ChainMatrix, StochasticReversibleStationary)
{
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const int n = 3 + static_cast<int>(seed);
        const GaussianModel g = gen_covariance(n, seed);
        const double beta = 0.5 * static_cast<double>(seed);
        const auto cm = exact_tpm(g, 0.8, beta);
        const auto pi = exact_gibbs(g, 0.8, beta);
        for (Eigen::Index r = 0; r < cm.p.rows(); ++r) EXPECT_NEAR(cm.p.row(r).sum(), 1.0, 1e-10);
        for (Eigen::Index a = 0; a < cm.p.rows(); ++a) {
            for (Eigen::Index b = 0; b < cm.p.cols(); ++b) {
                EXPECT_NEAR(pi.probs[a] * cm.p(a, b), pi.probs[b] * cm.p(b, a), 1e-9);
            }
        }
        EXPECT_LE(linf(stationary_distribution(cm), pi.probs), 1e-9);
        EXPECT_LE(linf(cm.step(pi.probs), pi.probs), 1e-12);
    }
}

TEST(ChainMatrix, StationaryByPowerIteration)
{
    const GaussianModel g = gen_covariance(3, 17);
    const auto cm = exact_tpm(g, 1.0, 1.5);
    std::vector<double> mu(8, 0.0);
    mu[0] = 1.0;
    for (int i = 0; i < 5000; ++i) mu = cm.step(mu);
    EXPECT_LE(linf(mu, exact_gibbs(g, 1.0, 1.5).probs), 1e-9);
}

TEST(ChainMatrix, CapacityLimit)
{
    auto big = ts::independent_sites(13);
    EXPECT_THROW(exact_tpm(big, 1.0, 1.0), CapacityError);
    EXPECT_THROW(chain_matrix(13, std::vector<double>(8192), 1.0), CapacityError);
}

TEST(Dobrushin, Examples)
{
    EXPECT_DOUBLE_EQ(dobrushin_bound(3.0, 1, 0.0, 1), 0.0);
    EXPECT_DOUBLE_EQ(dobrushin_bound(3.0, 5, 2.0, 0), 1.0);
    EXPECT_NEAR(dobrushin_bound(CostParams{0.0, 1.0}, 2, 1.0, 1), 1.0 - std::exp(-2.0) / 4.0, 1e-15);
    EXPECT_NEAR(dobrushin_bound(1.0, 2, 1.0, 1), 0.96617, 1e-5);
    EXPECT_THROW(dobrushin_bound(1.0, 0, 1.0, 1), SpecError);
    EXPECT_THROW(dobrushin_bound(1.0, 2, -1.0, 1), SpecError);
}

TEST(Dobrushin, SweepCoefficientWithinBound)
{
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const int n = 2 + static_cast<int>(seed % 3);
        const GaussianModel g = gen_covariance(n, seed);
        const double beta = 0.25 * static_cast<double>(seed);
        const double lambda = 0.6;
        const auto cm = exact_tpm(g, lambda, beta);
        Eigen::MatrixXd sweep = Eigen::MatrixXd::Identity(cm.p.rows(), cm.p.cols());
        for (int i = 0; i < n; ++i) sweep = sweep * cm.p;
        EXPECT_LE(dobrushin_coefficient(sweep), dobrushin_bound(beta, n, delta_upper_bound(g, lambda), 1) + 1e-12);
    }
}

TEST(Dobrushin, PropagationNeverExceedsBound)
{
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const int n = 2 + static_cast<int>(seed);
        const GaussianModel g = gen_covariance(n, seed + 100);
        const double lambda = 0.5 + 0.25 * static_cast<double>(seed);
        for (double beta : {0.5, 1.0, 2.0}) {
            const auto t = tabulate(g);
            const auto h = t.costs(lambda);
            const auto cm = chain_matrix(n, h, beta);
            const auto pi = gibbs_distribution(n, h, beta);
            const double delta = delta_upper_bound(t, lambda);
            std::vector<double> mu(h.size(), 0.0);
            mu[(seed * 7) % h.size()] = 1.0;
            const double tv0 = tv_distance(mu, pi.probs);
            for (int l = 1; l <= 50; ++l) {
                for (int k = 0; k < n; ++k) mu = cm.step(mu);
                ASSERT_LE(tv_distance(mu, pi.probs), dobrushin_bound(beta, n, delta, l) * tv0 + 1e-12);
            }
        }
    }
}

TEST(Dobrushin, CoefficientOfKnownMatrices)
{
    EXPECT_DOUBLE_EQ(dobrushin_coefficient(Eigen::MatrixXd::Identity(3, 3)), 1.0);
    EXPECT_DOUBLE_EQ(dobrushin_coefficient(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3)), 0.0);
}

TEST(TvDistance, Examples)
{
    const std::vector<double> p{0.5, 0.5};
    EXPECT_EQ(tv_distance(p, p), 0.0);
    EXPECT_EQ(tv_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0);
    EXPECT_DOUBLE_EQ(tv_distance(p, std::vector<double>{0.75, 0.25}), 0.25);
    EXPECT_THROW(tv_distance(p, std::vector<double>{1.0}), SpecError);
}

TEST(DeltaUpperBound, Examples)
{
    EXPECT_NEAR(delta_upper_bound(identity(2), 1.0), 0.0, 1e-15);
    EXPECT_NEAR(delta_upper_bound(identity(2), 0.25), 1.5, 1e-15);
}

TEST(DeltaUpperBound, FallbackDominatesSampledSpread)
{
    const GaussianModel g = gen_covariance(25, 3);
    const double lambda = 1.2;
    const double delta = delta_upper_bound(g, lambda);
    EXPECT_DOUBLE_EQ(delta, g.trace() + lambda * 25);
    std::mt19937_64 rng(5);
    double lo = INFINITY;
    double hi = -INFINITY;
    for (int i = 0; i < 200; ++i) {
        const double h = cost(g, lambda, Configuration(25, rng() & full_mask(25)));
        lo = std::min(lo, h);
        hi = std::max(hi, h);
    }
    EXPECT_GE(delta, hi - lo);
}
