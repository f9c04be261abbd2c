#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "pathquant/brownian.hpp"
#include "support.hpp"

using namespace pathquant;

TEST(KL, Eigenvalues) {
    EXPECT_NEAR(kl_eigenvalue(1, 1.0), 4.0 / (std::numbers::pi * std::numbers::pi), 1e-15);
    EXPECT_NEAR(kl_eigenvalue(1, 1.0), 0.4052847346, 1e-10);
    EXPECT_NEAR(kl_eigenvalue(1, 4.0), 16.0 * 4.0 / (std::numbers::pi * std::numbers::pi), 1e-13);
    EXPECT_NEAR(kl_eigenvalue(2, 1.0), 0.0450316, 1e-7);
    for (int l = 1; l < 50; ++l) { EXPECT_GT(kl_eigenvalue(l, 1.0), kl_eigenvalue(l + 1, 1.0)); }
    EXPECT_THROW(kl_eigenvalue(0, 1.0), DomainError);
}

TEST(KL, Eigenfunctions) {
    EXPECT_EQ(kl_eigenfunction(1, 1.0, 0.0), 0.0);
    EXPECT_NEAR(kl_eigenfunction(1, 1.0, 1.0), std::numbers::sqrt2, 1e-15);
    EXPECT_THROW(kl_eigenfunction(1, 1.0, 1.5), DomainError);
    EXPECT_THROW(kl_eigenfunction(1, 1.0, -0.1), DomainError);
}

TEST(KL, OrthonormalityByQuadrature) {
    for (double horizon : {1.0, 2.5}) {
        for (int l = 1; l <= 8; ++l)
            for (int m = 1; m <= 8; ++m) {
                const double ip = pqtest::simpson(
                    [&](double t) { return kl_eigenfunction(l, horizon, t) * kl_eigenfunction(m, horizon, t); }, 0.0,
                    horizon, 4000);
                EXPECT_NEAR(ip, l == m ? 1.0 : 0.0, 1e-8) << l << "," << m;
            }
    }
}

TEST(KL, CovarianceReconstruction) {
    for (int i = 1; i <= 5; ++i)
        for (int j = 1; j <= 5; ++j) {
            const double s = i / 6.0, t = j / 6.0;
            double c = 0.0;
            for (int l = 1; l <= 1000; ++l) c += kl_eigenvalue(l, 1.0) * kl_eigenfunction(l, 1.0, s) * kl_eigenfunction(l, 1.0, t);
            EXPECT_NEAR(c, std::min(s, t), 2e-3);
        }
}

TEST(KL, TailVarianceIsClosedForm) {
    KLBasis b{1.0, 4};
    double tail = 0.0;
    for (int l = 5; l <= 2000000; ++l) tail += kl_eigenvalue(l, 1.0);
    EXPECT_NEAR(b.tail_variance(4), tail, 1e-6);
    EXPECT_NEAR(b.tail_variance(0), 0.5, 1e-15);
}

namespace {

// Every nonincreasing allocation with product <= budget and d <= max_length.
void enumerate(long room, int cap, int max_length, std::vector<int>& cur, const std::function<void(const std::vector<int>&)>& visit) {
    visit(cur);
    if (static_cast<int>(cur.size()) >= max_length) return;
    for (int n = 2; n <= std::min<long>(room, cap); ++n) {
        cur.push_back(n);
        enumerate(room / n, n, max_length, cur, visit);
        cur.pop_back();
    }
}

}  // namespace

TEST(Allocation, TrivialBudgetGivesTheZeroPath) {
    const auto a = allocate_levels(1, 1.0);
    EXPECT_TRUE(a.levels.empty());
    EXPECT_EQ(a.product(), 1);
}

TEST(Allocation, ExplicitOverrideAccepted) {
    const auto a = normalize_allocation({23, 7, 3, 2, 1, 1}, 966);
    EXPECT_EQ(a.levels, (std::vector<int>{23, 7, 3, 2}));
    EXPECT_EQ(a.product(), 966);
    EXPECT_THROW(normalize_allocation({23, 7, 3, 3}, 966), DomainError);
}

TEST(Allocation, OptimalAgainstExhaustiveSearch) {
    for (long budget : {16L, 96L, 966L}) {
        const auto a = allocate_levels(budget, 1.0, 6);
        EXPECT_LE(a.product(), budget);
        for (std::size_t l = 1; l < a.levels.size(); ++l) { EXPECT_LE(a.levels[l], a.levels[l - 1]); }
        const double mine = modeled_distortion(a.levels, 1.0);
        double best = INFINITY;
        std::vector<int> cur;
        enumerate(budget, static_cast<int>(budget), 6, cur,
                  [&](const std::vector<int>& v) { best = std::min(best, modeled_distortion(v, 1.0)); });
        EXPECT_LE(mine, best + 1e-12) << budget;
    }
    const auto a = allocate_levels(966, 1.0, 6);
    EXPECT_LE(modeled_distortion(a.levels, 1.0), modeled_distortion({23, 7, 3, 2}, 1.0) + 1e-12);
}

class Allocation966Quantizer : public ::testing::Test {
protected:
    ProductQuantizer pq{1.0, normalize_allocation({23, 7, 3, 2}, 966)};
};

TEST_F(Allocation966Quantizer, SizeAndWeights) {
    EXPECT_EQ(pq.size(), 966u);
    double sum = 0.0;
    for (std::size_t i = 0; i < pq.size(); ++i) {
        const double w = pq.codeword(i).weight;
        EXPECT_GT(w, 0.0);
        sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-10);
    double first = 1.0;
    for (const auto& g : pq.grids()) first *= g.weights.front();
    EXPECT_NEAR(pq.weight({0, 0, 0, 0}), first, 1e-18);
}

TEST_F(Allocation966Quantizer, LexicographicIndexing) {
    EXPECT_EQ(pq.index_of(0), (MultiIndex{0, 0, 0, 0}));
    EXPECT_EQ(pq.index_of(1), (MultiIndex{0, 0, 0, 1}));
    EXPECT_EQ(pq.index_of(2), (MultiIndex{0, 0, 1, 0}));
    EXPECT_EQ(pq.index_of(965), (MultiIndex{22, 6, 2, 1}));
    for (std::size_t i = 0; i < pq.size(); i += 37) { EXPECT_EQ(pq.flat_of(pq.index_of(i)), i); }
    EXPECT_THROW(pq.index_of(966), IndexError);
    EXPECT_THROW(pq.codeword(MultiIndex{23, 0, 0, 0}), IndexError);
    EXPECT_THROW(pq.codeword(MultiIndex{0, 0, 0}), IndexError);
}

TEST_F(Allocation966Quantizer, CodewordsStartAtZeroAndAreCentred) {
    for (double t : {0.0, 0.2, 0.5, 1.0}) {
        double mean = 0.0;
        for (std::size_t i = 0; i < pq.size(); ++i) {
            const auto c = pq.codeword(i);
            if (t == 0.0) { EXPECT_EQ(c.value(t), 0.0); }
            mean += c.weight * c.value(t);
        }
        EXPECT_NEAR(mean, 0.0, 1e-10) << t;
    }
}

TEST_F(Allocation966Quantizer, MirrorNegatesThePath) {
    for (std::size_t i = 0; i < pq.size(); i += 11) {
        const auto idx = pq.index_of(i);
        const auto m = pq.mirror(idx);
        EXPECT_NEAR(pq.weight(m), pq.weight(idx), 1e-18);
        for (double t : {0.1, 0.6, 1.0}) { EXPECT_NEAR(pq.value(m, t), -pq.value(idx, t), 1e-14); }
    }
}

TEST_F(Allocation966Quantizer, DerivativeAgainstFiniteDifference) {
    const double h = 1e-6;
    for (std::size_t i = 0; i < pq.size(); i += 29) {
        const auto c = pq.codeword(i);
        const double t = 1.0 / 3.0;
        const double fd = (c.value(t + h) - c.value(t - h)) / (2.0 * h);
        EXPECT_NEAR(c.derivative(t), fd, 1e-6 * std::max(1.0, std::abs(fd)));
        double at0 = 0.0;
        for (double x : c.coefficients) at0 += std::sqrt(2.0) * x;
        EXPECT_NEAR(c.derivative(0.0), at0, 1e-13);
    }
}

TEST(ProductQuantizer, OddLevelsMedianIsZeroPath) {
    ProductQuantizer pq(1.0, normalize_allocation({5, 3, 3}, 45));
    const auto idx = pq.median_index();
    for (double t : {0.0, 0.3, 1.0}) {
        EXPECT_EQ(pq.value(idx, t), 0.0);
        EXPECT_EQ(pq.derivative(idx, t), 0.0);
    }
}

TEST(ProductQuantizer, SingleLevelTwo) {
    ProductQuantizer pq(2.0, normalize_allocation({2}, 2));
    const double lam = kl_eigenvalue(1, 2.0);
    const double expected = std::sqrt(lam) * std::sqrt(2.0 / 2.0) * std::sin(2.0 / std::sqrt(lam)) * 0.7978845608028654;
    EXPECT_NEAR(pq.value(MultiIndex{1}, 2.0), expected, 1e-12);
}

TEST(ProductQuantizer, TwoByTwoWeights) {
    ProductQuantizer pq(1.0, normalize_allocation({2, 2}, 4));
    for (std::size_t i = 0; i < 4; ++i) { EXPECT_NEAR(pq.codeword(i).weight, 0.25, 1e-15); }
}

TEST(QuantizationError, LevelOneIsHalfTSquared) {
    ProductQuantizer pq(1.0, allocate_levels(1, 1.0));
    const auto e = quantization_error(pq, 4000, 11);
    EXPECT_NEAR(e.value, 0.5, 3.0 * e.std_error);
}

TEST(QuantizationError, ShrinksWithBudget) {
    auto err = [](long n) {
        ProductQuantizer pq(1.0, allocate_levels(n, 1.0));
        return quantization_error(pq, 20000, 5).value;
    };
    const double e1 = err(1), e16 = err(16), e966 = err(966);
    EXPECT_LT(e966, e16);
    EXPECT_LT(e16, e1);
}

TEST(QuantizationError, MatchesModeledDistortion) {
    // With exact per-level distortions the L2 error is sum_l lambda_l D(N_l) plus the tail.
    const auto alloc = normalize_allocation({23, 7, 3, 2}, 966);
    ProductQuantizer pq(1.0, alloc);
    const auto e = quantization_error(pq, 40000, 3);
    EXPECT_NEAR(e.value, modeled_distortion(alloc.levels, 1.0), 4.0 * e.std_error);
}
