#include <catch2/catch_amalgamated.hpp>
#include <nonsens/common.hpp>
#include <nonsens/stats.hpp>

#include <numbers>

#include "support/oracles.hpp"

using namespace nonsens;

namespace {

Eigen::VectorXd draw(Rng& rng, int n, const char* law = "normal") {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i)
        v[i] = std::string(law) == "laplace" ? rng.laplace(1.0) : rng.normal();
    return v;
}

} // namespace

TEST_CASE("standardize matches hand arithmetic", "[stats]") {
    Eigen::VectorXd x(3);
    x << 2, 4, 6;
    const auto s = stats::standardize(x);
    REQUIRE(s.mean == Catch::Approx(4.0));
    REQUIRE(s.stdev == Catch::Approx(std::sqrt(8.0 / 3.0)));
    REQUIRE(s.values[0] == Catch::Approx(-1.224744871).margin(1e-8));
    REQUIRE(s.values[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(s.values[2] == Catch::Approx(1.224744871).margin(1e-8));
}

TEST_CASE("standardize is idempotent and rejects constants", "[stats]") {
    Rng rng(3);
    const Eigen::VectorXd x = draw(rng, 100);
    const auto once = stats::standardize(x);
    const auto twice = stats::standardize(once.values);
    REQUIRE((once.values - twice.values).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE_THROWS_AS(stats::standardize(Eigen::VectorXd::Constant(5, 3.0)), std::invalid_argument);
}

TEST_CASE("segment standardize normalizes each segment independently", "[stats]") {
    Eigen::VectorXd x(6);
    x << 1, 10, 2, 20, 3, 30;
    const std::vector<int> seg{0, 1, 0, 1, 0, 1};
    const Eigen::VectorXd out = stats::segment_standardize(x, seg, 2);
    REQUIRE(out[0] == Catch::Approx(-1.224744871).margin(1e-8));
    REQUIRE(out[2] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(out[4] == Catch::Approx(1.224744871).margin(1e-8));
    REQUIRE(out[1] == Catch::Approx(-1.224744871).margin(1e-8));
    REQUIRE(out[3] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(out[5] == Catch::Approx(1.224744871).margin(1e-8));

    SECTION("per-segment moments vanish on random data") {
        Rng rng(9);
        const int n = 300;
        Eigen::VectorXd v(n);
        std::vector<int> lab(n);
        for (int i = 0; i < n; ++i) {
            lab[static_cast<std::size_t>(i)] = i % 3;
            v[i] = rng.normal() * (1.0 + i % 3) + 5.0 * (i % 3);
        }
        const Eigen::VectorXd z = stats::segment_standardize(v, lab, 3);
        for (int e = 0; e < 3; ++e) {
            double sum = 0.0, ss = 0.0;
            int cnt = 0;
            for (int i = 0; i < n; ++i)
                if (lab[static_cast<std::size_t>(i)] == e) {
                    sum += z[i];
                    ss += z[i] * z[i];
                    ++cnt;
                }
            REQUIRE(sum / cnt == Catch::Approx(0.0).margin(1e-10));
            REQUIRE(ss / cnt == Catch::Approx(1.0).margin(1e-10));
        }
    }

    SECTION("constant segments are centred, not blown up") {
        Eigen::VectorXd c(4);
        c << 7, 7, 1, 3;
        const std::vector<int> lab{0, 0, 1, 1};
        const Eigen::VectorXd z = stats::segment_standardize(c, lab, 2);
        REQUIRE(z[0] == 0.0);
        REQUIRE(z[1] == 0.0);
        REQUIRE(z.allFinite());
    }

    SECTION("label length mismatch throws") {
        REQUIRE_THROWS_AS(stats::segment_standardize(x, std::vector<int>{0, 1}, 2),
                          std::invalid_argument);
    }
}

TEST_CASE("hsic statistic is zero for constant input", "[stats]") {
    Rng rng(1);
    const Eigen::VectorXd x = draw(rng, 32);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(32, 2.5);
    REQUIRE(stats::hsic_statistic(x, y) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("hsic statistic matches the naive double-loop oracle at bandwidth 1", "[stats]") {
    Eigen::VectorXd x(4), y(4);
    x << 0, 1, 2, 3;
    y << 0, 1, 2, 3;
    const auto m = stats::detail::hsic_moments(x, y, 1.0, 1.0);
    const double stat = m.trace / 16.0;
    REQUIRE(stat == Catch::Approx(oracle::naive_hsic(x, y, 1.0, 1.0)).margin(1e-12));
}

TEST_CASE("hsic statistic matches the naive oracle on random instances", "[stats]") {
    for (int t = 0; t < 20; ++t) {
        Rng rng(100 + static_cast<std::uint64_t>(t));
        const int n = 24 + static_cast<int>(rng.below(40));
        Eigen::VectorXd x = draw(rng, n);
        Eigen::VectorXd y = 0.5 * x + draw(rng, n, "laplace");
        const double sx = stats::median_bandwidth(x);
        const double sy = stats::median_bandwidth(y);
        const double lib = stats::hsic_statistic(x, y);
        const double ref = oracle::naive_hsic(x, y, sx, sy);
        REQUIRE(lib == Catch::Approx(ref).margin(1e-12));
    }
}

TEST_CASE("median bandwidth matches exact pairwise median", "[stats]") {
    for (int t = 0; t < 10; ++t) {
        Rng rng(40 + static_cast<std::uint64_t>(t));
        const Eigen::VectorXd x = draw(rng, 101 + static_cast<int>(rng.below(50)));
        REQUIRE(stats::median_bandwidth(x) == Catch::Approx(oracle::naive_median_distance(x)).margin(1e-12));
    }
}

TEST_CASE("hsic is symmetric in its arguments", "[stats]") {
    Rng rng(17);
    const Eigen::VectorXd x = draw(rng, 64);
    const Eigen::VectorXd y = draw(rng, 64, "laplace");
    REQUIRE(stats::hsic_statistic(x, y) == Catch::Approx(stats::hsic_statistic(y, x)).margin(1e-12));
}

TEST_CASE("hsic statistic is exactly invariant to affine maps", "[stats]") {
    Rng rng(19);
    const Eigen::VectorXd x = draw(rng, 128);
    const Eigen::VectorXd y = (x.array().cube() + draw(rng, 128).array()).matrix();
    const double base = stats::hsic_statistic(x, y);
    const Eigen::VectorXd x2 = 2.0 * x.array() + 1.0;
    REQUIRE(stats::hsic_statistic(x2, y) == Catch::Approx(base).margin(1e-10));
}

TEST_CASE("strong dependence saturates the permutation p-value", "[stats]") {
    Rng rng(23);
    const Eigen::VectorXd x = draw(rng, 256);
    const auto res = stats::hsic_test(x, x, 0.05, stats::NullMethod::PermutationNull, 500, 7);
    REQUIRE(res.pValue <= 1.0 / 501.0 + 1e-12);
    REQUIRE(res.reject);
    REQUIRE(res.reject == (res.pValue < res.alphaEffective));
}

TEST_CASE("gamma and permutation nulls agree on clear cases", "[stats]") {
    Rng rng(29);
    const Eigen::VectorXd x = draw(rng, 512);
    const Eigen::VectorXd dep = (x.array().square() + 0.3 * draw(rng, 512).array()).matrix();
    const Eigen::VectorXd ind = draw(rng, 512);
    const auto depG = stats::hsic_test(x, dep, 0.0125, stats::NullMethod::GammaApprox, 500, 1);
    const auto depP = stats::hsic_test(x, dep, 0.0125, stats::NullMethod::PermutationNull, 500, 1);
    REQUIRE(depG.reject);
    REQUIRE(depP.reject);
    const auto indG = stats::hsic_test(x, ind, 0.0125, stats::NullMethod::GammaApprox, 500, 1);
    const auto indP = stats::hsic_test(x, ind, 0.0125, stats::NullMethod::PermutationNull, 500, 1);
    REQUIRE_FALSE(indG.reject);
    REQUIRE_FALSE(indP.reject);
}

TEST_CASE("cubic dependence is detected at n=512", "[stats][slow]") {
    int rejects = 0;
    const int seeds = 40;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(500 + static_cast<std::uint64_t>(s));
        const Eigen::VectorXd x = draw(rng, 512);
        const Eigen::VectorXd y = (x.array().cube() + 0.5 * draw(rng, 512).array()).matrix();
        const auto res = stats::hsic_test(x, y, 0.05, stats::NullMethod::GammaApprox, 500, 1);
        if (res.reject) ++rejects;
    }
    REQUIRE(rejects >= static_cast<int>(0.9 * seeds));
}

TEST_CASE("type-i rate of the hsic test is near nominal", "[stats][slow]") {
    int rejectsPerm = 0, rejectsGamma = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(900 + static_cast<std::uint64_t>(s));
        const Eigen::VectorXd x = draw(rng, 256, "laplace");
        const Eigen::VectorXd y = draw(rng, 256, "laplace");
        if (stats::hsic_test(x, y, 0.05, stats::NullMethod::PermutationNull, 300, 2).reject) ++rejectsPerm;
        if (stats::hsic_test(x, y, 0.05, stats::NullMethod::GammaApprox, 300, 2).reject) ++rejectsGamma;
    }
    REQUIRE(rejectsPerm >= 1);
    REQUIRE(rejectsPerm <= 10);
    REQUIRE(rejectsGamma <= 10);
}

TEST_CASE("permutation p-values are valid under independence", "[stats][slow]") {
    const int seeds = 200;
    int below = 0;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(1500 + static_cast<std::uint64_t>(s));
        const Eigen::VectorXd x = draw(rng, 128);
        const Eigen::VectorXd y = draw(rng, 128);
        const auto res = stats::hsic_test(x, y, 0.05, stats::NullMethod::PermutationNull, 200, 3);
        if (res.pValue <= 0.05) ++below;
    }
    REQUIRE(static_cast<double>(below) / seeds <= 0.05 + 0.03);
}

TEST_CASE("rejection decision is stable under monotone rescaling", "[stats][slow]") {
    int stable = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(2100 + static_cast<std::uint64_t>(s));
        const Eigen::VectorXd x = draw(rng, 192);
        const Eigen::VectorXd y = (0.8 * x.array() + 0.8 * draw(rng, 192).array()).matrix();
        const auto a = stats::hsic_test(x, y, 0.05, stats::NullMethod::GammaApprox, 300, 4);
        const Eigen::VectorXd xr = 2.0 * x.array() + 1.0;
        const auto b = stats::hsic_test(xr, y, 0.05, stats::NullMethod::GammaApprox, 300, 4);
        REQUIRE(a.statistic == Catch::Approx(b.statistic).margin(1e-10));
        if (a.reject == b.reject) ++stable;
    }
    REQUIRE(stable >= 95);
}

TEST_CASE("large inputs are subsampled deterministically", "[stats]") {
    Rng rng(31);
    const Eigen::VectorXd x = draw(rng, 5000);
    const Eigen::VectorXd y = draw(rng, 5000);
    const auto a = stats::hsic_test(x, y, 0.05, stats::NullMethod::GammaApprox, 300, 5);
    const auto b = stats::hsic_test(x, y, 0.05, stats::NullMethod::GammaApprox, 300, 5);
    REQUIRE(a.statistic == b.statistic);
    REQUIRE(a.pValue == b.pValue);
    // the subsample depends only on n, so affine maps still cancel exactly
    const Eigen::VectorXd x2 = 3.0 * x.array() - 2.0;
    const auto c = stats::hsic_test(x2, y, 0.05, stats::NullMethod::GammaApprox, 300, 5);
    REQUIRE(c.statistic == Catch::Approx(a.statistic).margin(1e-10));
}

TEST_CASE("knn entropy matches analytic gaussian and laplace values", "[stats]") {
    Rng rng(37);
    const Eigen::VectorXd g = draw(rng, 4096);
    const double hg = stats::knn_entropy(g, 3);
    REQUIRE(hg == Catch::Approx(0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e)).margin(0.05));

    const Eigen::VectorXd l = draw(rng, 4096, "laplace");
    const double hl = stats::knn_entropy(l, 3);
    REQUIRE(hl == Catch::Approx(1.0 + std::log(2.0)).margin(0.05));
}

TEST_CASE("knn entropy obeys the scaling law", "[stats]") {
    Rng rng(41);
    const Eigen::VectorXd x = draw(rng, 4096);
    const double c = 3.7;
    const double gap = stats::knn_entropy(c * x, 3) - stats::knn_entropy(x, 3);
    REQUIRE(gap == Catch::Approx(std::log(c)).margin(0.02));
}

TEST_CASE("knn entropy survives duplicate-heavy data", "[stats]") {
    Eigen::VectorXd x(200);
    for (int i = 0; i < 200; ++i) x[i] = static_cast<double>(i % 4);
    REQUIRE(std::isfinite(stats::knn_entropy(x, 3)));
}

TEST_CASE("mutual information calibrates on gaussian cases", "[stats]") {
    Rng rng(43);
    const int n = 2048;
    const Eigen::VectorXd x = draw(rng, n);
    const Eigen::VectorXd yInd = draw(rng, n);
    REQUIRE(std::abs(stats::mutual_information(x, yInd, 3)) < 0.05);

    const double rho = 0.8;
    Eigen::VectorXd yDep(n);
    for (int i = 0; i < n; ++i) yDep[i] = rho * x[i] + std::sqrt(1 - rho * rho) * rng.normal();
    const double target = -0.5 * std::log(1 - rho * rho);
    REQUIRE(stats::mutual_information(x, yDep, 3) == Catch::Approx(target).margin(0.07));
}

TEST_CASE("self mutual information grows with sample size", "[stats]") {
    Rng rng(47);
    const Eigen::VectorXd a = draw(rng, 256);
    const Eigen::VectorXd b = draw(rng, 1024);
    REQUIRE(stats::mutual_information(b, b, 3) > stats::mutual_information(a, a, 3));
}

TEST_CASE("ks two-sample handles identical and separated samples", "[stats]") {
    Rng rng(53);
    const Eigen::VectorXd a = draw(rng, 200);
    const auto same = stats::ks_two_sample(a, a);
    REQUIRE(same.statistic == Catch::Approx(0.0).margin(1e-14));
    REQUIRE(same.pValue == Catch::Approx(1.0).margin(1e-10));

    const Eigen::VectorXd b = (draw(rng, 200).array() + 3.0).matrix();
    REQUIRE(stats::ks_two_sample(a, b).pValue < 1e-6);
}

TEST_CASE("ks test type-i rate is near nominal", "[stats][slow]") {
    int rejects = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(3000 + static_cast<std::uint64_t>(s));
        const Eigen::VectorXd a = draw(rng, 200);
        const Eigen::VectorXd b = draw(rng, 200);
        if (stats::ks_two_sample(a, b).pValue < 0.05) ++rejects;
    }
    REQUIRE(rejects >= 1);
    REQUIRE(rejects <= 10);
}
