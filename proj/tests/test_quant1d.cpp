#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "pathquant/normal.hpp"
#include "pathquant/quant1d.hpp"
#include "support.hpp"

using namespace pathquant;

TEST(Normal, CdfAgainstErfcAndSymmetry) {
    for (double x = -8.0; x <= 8.0; x += 0.37) {
        EXPECT_NEAR(normal::cdf(x), pqtest::Phi(x), 1e-16 + 1e-15 * pqtest::Phi(x));
        EXPECT_NEAR(normal::cdf(x) + normal::cdf(-x), 1.0, 1e-15);
    }
}

TEST(Normal, QuantileInvertsCdf) {
    for (double p : {1e-300, 1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-12}) {
        const double x = normal::quantile(p);
        EXPECT_NEAR(normal::cdf(x), p, 1e-14 * std::max(p, 1e-3)) << p;
    }
    EXPECT_EQ(normal::quantile(0.5), 0.0);
}

TEST(Quant1D, LevelOneIsTheMean) {
    const auto q = optimize(1, 1e-10, 100);
    ASSERT_EQ(q.grid.size(), 1u);
    EXPECT_EQ(q.grid[0], 0.0);
    EXPECT_EQ(q.weights[0], 1.0);
    EXPECT_NEAR(q.distortion, 1.0, 1e-15);
}

TEST(Quant1D, LevelTwoIsHalfNormalMean) {
    const auto q = optimize(2, 1e-10, 100);
    const double m = std::sqrt(2.0 / std::numbers::pi);
    EXPECT_NEAR(q.grid[0], -m, 1e-10);
    EXPECT_NEAR(q.grid[1], m, 1e-10);
    EXPECT_NEAR(q.weights[0], 0.5, 1e-15);
    EXPECT_NEAR(q.weights[1], 0.5, 1e-15);
    EXPECT_NEAR(q.distortion, 1.0 - 2.0 / std::numbers::pi, 1e-14);
    EXPECT_LT(stationarity_residual(q), 1e-8);
}

TEST(Quant1D, LevelFourMatchesPublishedMaxQuantizer) {
    const auto q = optimize(4);
    EXPECT_NEAR(q.grid[2], 0.4528, 1e-4);
    EXPECT_NEAR(q.grid[3], 1.5104, 1e-4);
    EXPECT_NEAR(q.distortion, 0.1175, 1e-4);
}

TEST(Quant1D, MatchesLloydOracle) {
    for (int n : {3, 5, 7, 10, 23}) {
        std::vector<double> start(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) start[static_cast<std::size_t>(i)] = -2.0 + 4.0 * (i + 0.5) / n;
        const auto oracle = pqtest::lloyd_oracle(start, 200000);
        const auto q = optimize(n, 1e-10, 500);
        for (int i = 0; i < n; ++i) { EXPECT_NEAR(q.grid[static_cast<std::size_t>(i)], oracle[static_cast<std::size_t>(i)], 1e-8) << n; }
    }
}

TEST(Quant1D, RandomLloydStartsConvergeToTheSameGrid) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int n : {4, 6}) {
        const auto q = optimize(n);
        for (int rep = 0; rep < 16; ++rep) {
            std::vector<double> start(static_cast<std::size_t>(n));
            for (auto& x : start) x = u(gen);
            std::sort(start.begin(), start.end());
            const auto oracle = pqtest::lloyd_oracle(start, 100000);
            for (int i = 0; i < n; ++i) { EXPECT_NEAR(q.grid[static_cast<std::size_t>(i)], oracle[static_cast<std::size_t>(i)], 1e-7); }
        }
    }
}

TEST(Quant1D, InvariantsForLevelsUpTo64) {
    double previous = INFINITY;
    for (int n = 1; n <= 64; ++n) {
        const auto q = optimize(n);
        ASSERT_EQ(q.level, n);
        double sum = 0.0, mean = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            if (i) { EXPECT_GT(q.grid[k], q.grid[k - 1]); }
            EXPECT_NEAR(q.grid[k], -q.grid[static_cast<std::size_t>(n - 1 - i)], 1e-10);
            EXPECT_GT(q.weights[k], 0.0);
            sum += q.weights[k];
            mean += q.weights[k] * q.grid[k];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12) << n;
        EXPECT_NEAR(mean, 0.0, 1e-12) << n;
        EXPECT_LT(stationarity_residual(q), 1e-8) << n;
        EXPECT_LE(q.distortion, previous) << n;
        previous = q.distortion;
    }
}

TEST(Quant1D, ClosedFormDistortionMatchesQuadrature) {
    for (int n : {2, 7, 16}) {
        const auto q = optimize(n);
        EXPECT_NEAR(q.distortion, pqtest::distortion_by_quadrature(q.grid), 1e-10) << n;
    }
}

TEST(Quant1D, ResidualOfNonStationaryGrid) {
    Quantizer1D q{2, {-1.0, 1.0}, {0.5, 0.5}, 0.0};
    EXPECT_NEAR(stationarity_residual(q), 1.0 - std::sqrt(2.0 / std::numbers::pi), 1e-12);
    Quantizer1D zero{1, {0.0}, {1.0}, 1.0};
    EXPECT_EQ(stationarity_residual(zero), 0.0);
}

TEST(Quant1D, ConvergenceFailureCarriesResidual) {
    try {
        optimize(40, 1e-12, 0);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.last_residual(), 1e-12);
    }
    EXPECT_THROW(optimize(0), DomainError);
}

TEST(GridFile, RoundTripIsBitExact) {
    for (int n : {1, 2, 23}) {
        const auto q = optimize(n);
        const auto back = grid_from_text(grid_to_text(q));
        EXPECT_EQ(back, q);
    }
    const auto path = std::filesystem::temp_directory_path() / "pathquant_grid_roundtrip.txt";
    const auto q = optimize(2);
    save_grid(q, path.string());
    EXPECT_EQ(load_grid(path.string()), q);
    std::filesystem::remove(path);
}

namespace {

int parse_error_line(const std::string& text) {
    try {
        grid_from_text(text);
    } catch (const ParseError& e) {
        return static_cast<int>(e.line());
    }
    return -1;
}

}  // namespace

TEST(GridFile, MalformedFilesNameTheLine) {
    const std::string header = "# quantizer1d level=2 distortion=0.36\n";
    EXPECT_EQ(parse_error_line("# quantizer level=2 distortion=1\n-1 0.5\n1 0.5\n"), 1);
    EXPECT_EQ(parse_error_line(header + "1 0.5\n-1 0.5\n"), 3);
    EXPECT_EQ(parse_error_line(header + "-1 0.45\n1 0.45\n"), 3);
    EXPECT_EQ(parse_error_line(header + "-1 0.5\n"), 3);
    EXPECT_EQ(parse_error_line(header + "-1 0.5\n1 0.5\n2 0.1\n"), 4);
    EXPECT_EQ(parse_error_line(header + "-1 x\n1 0.5\n"), 2);
    EXPECT_EQ(parse_error_line(header + "-1 -0.5\n1 1.5\n"), 2);
    EXPECT_THROW(load_grid("/nonexistent/dir/grid.txt"), IoError);
}
