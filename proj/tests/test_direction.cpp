#include <catch2/catch_amalgamated.hpp>
#include <nonsens/datagen.hpp>
#include <nonsens/direction.hpp>
#include <nonsens/tcl.hpp>

#include "support/oracles.hpp"

#include <cmath>
#include <limits>

using namespace nonsens;
using namespace nonsens::datagen;

namespace {

Eigen::MatrixXd standardize_cols(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double m = x.col(j).mean();
        const double sd = std::sqrt((x.col(j).array() - m).square().mean());
        out.col(j) = (x.col(j).array() - m) / sd;
    }
    return out;
}

direction::DisturbanceMap linear_map(double w00, double w01, double w10, double w11,
                                     double m0 = 0.0, double m1 = 0.0) {
    direction::DisturbanceMap g;
    g.hasTrunk = false;
    g.w.resize(2, 2);
    g.w << w00, w01, w10, w11;
    g.mean.resize(2);
    g.mean << m0, m1;
    return g;
}

double min_preact(const nn::Mlp& mlp, const Eigen::MatrixXd& x) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l + 1 < mlp.layers.size(); ++l) {
        Eigen::MatrixXd z =
            (a * mlp.layers[l].w.transpose()).rowwise() + mlp.layers[l].b.transpose();
        best = std::min(best, z.cwiseAbs().minCoeff());
        a = z.unaryExpr([&](double v) { return v > 0.0 ? v : mlp.slope * v; });
    }
    return best;
}

Eigen::MatrixXd gaussian_matrix(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    return x;
}

// True pairing of recovered columns to source columns by absolute-value
// correlation, with each column standardized within its segment first so the
// shared variance modulation cannot dominate the match.
bool correlation_identity(const Eigen::MatrixXd& rec, const Eigen::MatrixXd& s,
                          const SegmentedDataset& data) {
    auto wseg = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd out = v.cwiseAbs();
        for (int e = 0; e < data.numSegments; ++e) {
            const auto rows = data.segmentRows(e);
            double m = 0.0;
            for (auto r : rows) m += out[r];
            m /= static_cast<double>(rows.size());
            double ss = 0.0;
            for (auto r : rows) ss += (out[r] - m) * (out[r] - m);
            const double sd = std::sqrt(ss / static_cast<double>(rows.size()));
            for (auto r : rows) out[r] = (out[r] - m) / (sd > 0.0 ? sd : 1.0);
        }
        return out;
    };
    const std::array<Eigen::VectorXd, 2> a = {wseg(rec.col(0)), wseg(rec.col(1))};
    const std::array<Eigen::VectorXd, 2> b = {wseg(s.col(0)), wseg(s.col(1))};
    auto c = [&](int i, int j) {
        const auto& u = a[static_cast<std::size_t>(i)];
        const auto& v = b[static_cast<std::size_t>(j)];
        return std::abs(u.dot(v) / std::sqrt(u.squaredNorm() * v.squaredNorm()));
    };
    return c(0, 0) + c(1, 1) >= c(0, 1) + c(1, 0);
}

struct EndToEnd {
    SegmentedDataset data;
    Eigen::MatrixXd sources;
    direction::DisturbanceMap g;
    Eigen::MatrixXd recovered;
};

EndToEnd run_pipeline(int mixDepth, std::uint64_t seed, std::uint64_t trainSeed, int netDepth,
                      int widthFactor, int epochs) {
    const auto src = gen_sources(2, 10, 512, SourceFamily::LaplaceVariance,
                                 ScaleScheme::RandomScale, seed);
    const auto mixed = mix_dnn(src, mixDepth, MixingMode::Acyclic, 1.0, seed);
    EndToEnd out;
    out.data = mixed.data;
    out.data.x = standardize_cols(out.data.x);
    out.sources = src.s;
    tcl::TclConfig cfg;
    cfg.netDepth = netDepth;
    cfg.widthFactor = widthFactor;
    cfg.sgd.epochs = epochs;
    cfg.seed = trainSeed;
    const auto fx = tcl::tcl_train(out.data, cfg);
    const auto rec = tcl::recover_disturbances(fx, out.data);
    out.g = direction::make_map(fx.net.trunk, rec.model);
    out.recovered = rec.disturbances;
    return out;
}

} // namespace

TEST_CASE("jacobian expectation of elementary maps") {
    const Eigen::MatrixXd x = gaussian_matrix(50, 2, 3);

    const auto id = linear_map(1.0, 0.0, 0.0, 1.0);
    auto t = direction::jacobian_expectation(id, x, 1, 1);
    CHECK(t.value == 0.0);
    CHECK(t.flooredFraction == 0.0);
    CHECK_FALSE(t.degenerate);
    CHECK(direction::jacobian_expectation(id, x, 0, 0).value == 0.0);

    const auto doubled = linear_map(1.0, 0.0, 0.0, 2.0);
    CHECK_THAT(direction::jacobian_expectation(doubled, x, 1, 1).value,
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
    CHECK(direction::jacobian_expectation(doubled, x, 0, 0).value == 0.0);

    REQUIRE_THROWS_AS(direction::jacobian_expectation(id, x, 0, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(direction::jacobian_expectation(id, Eigen::MatrixXd(0, 2), 0, 0),
                      std::invalid_argument);
}

TEST_CASE("jacobian expectation matches a finite-difference oracle") {
    direction::DisturbanceMap g;
    g.trunk = nn::make_mlp({2, 6, 2}, 0.2, 5);
    g.hasTrunk = true;
    g.w.resize(2, 2);
    g.w << 0.9, -0.3, 0.4, 1.2;
    g.mean.resize(2);
    g.mean << 0.1, -0.2;
    const Eigen::MatrixXd x = gaussian_matrix(40, 2, 5 * 17 + 3);
    // keep every sample clear of activation kinks so central differences are valid
    REQUIRE(min_preact(g.trunk, x) > 1e-3);

    const double h = 1e-5;
    for (int out = 0; out < 2; ++out)
        for (int in = 0; in < 2; ++in) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                Eigen::MatrixXd xp = x.row(i), xm = x.row(i);
                xp(0, in) += h;
                xm(0, in) -= h;
                const double d = (g.eval(xp)(0, out) - g.eval(xm)(0, out)) / (2 * h);
                acc += std::log(std::max(std::abs(d), 1e-12));
            }
            const double fd = acc / static_cast<double>(x.rows());
            CHECK_THAT(direction::jacobian_expectation(g, x, out, in).value,
                       Catch::Matchers::WithinAbs(fd, 1e-3));
        }
}

TEST_CASE("zero cross-derivative pins the identity permutation") {
    const Eigen::MatrixXd x = gaussian_matrix(60, 2, 9);
    const auto g = linear_map(0.7, 0.0, 0.0, 1.3);
    const auto pc = direction::select_permutation(g, x);
    CHECK(pc.perm[0] == 0);
    CHECK(pc.perm[1] == 1);
    CHECK_FALSE(pc.tie);
    // off-diagonal derivatives are identically zero, so every row floors
    CHECK(pc.terms[0][1].flooredFraction == 1.0);
    CHECK(pc.terms[1][0].flooredFraction == 1.0);
    CHECK(pc.terms[0][1].degenerate);
    // the chosen diagonal terms are clean, so the score is not degenerate
    const auto s = direction::likelihood_ratio(g, x);
    CHECK_FALSE(s.degenerate);
}

TEST_CASE("swapping disturbance rows swaps the permutation") {
    const Eigen::MatrixXd x = gaussian_matrix(60, 2, 9);
    const auto anti = linear_map(0.0, 1.3, 0.7, 0.0);
    const auto pc = direction::select_permutation(anti, x);
    CHECK(pc.perm[0] == 1);
    CHECK(pc.perm[1] == 0);

    // generic full map: swapping its rows must flip whichever choice was made
    const auto g = linear_map(1.0, 0.2, -0.3, 0.9);
    const auto swapped = linear_map(-0.3, 0.9, 1.0, 0.2);
    const auto a = direction::select_permutation(g, x);
    const auto b = direction::select_permutation(swapped, x);
    CHECK(a.perm[0] == 1 - b.perm[0]);
    CHECK(a.perm[1] == 1 - b.perm[1]);
}

TEST_CASE("likelihood ratio on a linear causal pair") {
    Rng rng(41);
    const int n = 600;
    Eigen::MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) {
        const double a = rng.laplace(1.0), b = rng.laplace(0.7);
        x(i, 0) = a;
        x(i, 1) = 0.8 * a + b;
    }
    const auto g = linear_map(1.0, 0.0, -0.8, 1.0);
    const auto s = direction::likelihood_ratio(g, x, 3);

    REQUIRE(s.decision == Decision::X1Causes);
    CHECK(s.r > 0.0);
    CHECK(s.perm[0] == 0);
    CHECK_FALSE(s.tie);
    const double reassembled = -s.entropyX[0] - s.entropyN[1] + s.jacTerm[1] + s.entropyX[1] +
                               s.entropyN[0] - s.jacTerm[0];
    CHECK_THAT(s.r, Catch::Matchers::WithinAbs(reassembled, 1e-10));

    // mirrored construction (rows and columns both swap roles) negates the
    // ratio and flips the verdict
    Eigen::MatrixXd xm = x;
    xm.col(0).swap(xm.col(1));
    const auto mirrored = linear_map(g.w(1, 1), g.w(1, 0), g.w(0, 1), g.w(0, 0));
    const auto sm = direction::likelihood_ratio(mirrored, xm, 3);
    CHECK_THAT(sm.r, Catch::Matchers::WithinAbs(-s.r, 1e-12));
    CHECK(sm.decision == Decision::X2Causes);

    // composing the map with the inverse of an affine rescaling leaves the
    // standardized ratio unchanged
    const double a1 = 3.5, b1 = -1.2, a2 = 0.4, b2 = 7.0;
    Eigen::MatrixXd xa = x;
    xa.col(0) = a1 * x.col(0).array() + b1;
    xa.col(1) = a2 * x.col(1).array() + b2;
    const auto ga = linear_map(g.w(0, 0) / a1, g.w(0, 1) / a2, g.w(1, 0) / a1, g.w(1, 1) / a2,
                               b1, b2);
    const auto sa = direction::likelihood_ratio(ga, xa, 3);
    CHECK_THAT(sa.r, Catch::Matchers::WithinAbs(s.r, 1e-10));
    CHECK(sa.decision == s.decision);

    REQUIRE_THROWS_AS(direction::likelihood_ratio(g, Eigen::MatrixXd(4, 2), 3),
                      std::invalid_argument);
}

TEST_CASE("mutual-information identity matches the Gaussian closed form") {
    const double rho = 0.8;
    const int n = 2000;
    Rng rng(31);
    Eigen::MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.normal(), eps = rng.normal();
        x(i, 0) = x1;
        x(i, 1) = rho * x1 + std::sqrt(1 - rho * rho) * eps;
    }
    const double c = std::sqrt(1 - rho * rho);
    const auto g = linear_map(1.0, 0.0, -rho / c, 1.0 / c);
    const auto mi = direction::check_mi_identity(g, x, 3);
    const double analytic = -0.5 * std::log(1 - rho * rho);
    CHECK_THAT(mi.lhs, Catch::Matchers::WithinAbs(analytic, 0.1));
    CHECK_THAT(mi.rhs, Catch::Matchers::WithinAbs(analytic, 0.1));
    CHECK(mi.lhs > 0.0);  // the correct direction wins

    // independent inputs through the identity map: both sides vanish
    const Eigen::MatrixXd z = gaussian_matrix(n, 2, 32);
    const auto mz = direction::check_mi_identity(linear_map(1.0, 0.0, 0.0, 1.0), z, 3);
    CHECK_THAT(mz.lhs, Catch::Matchers::WithinAbs(0.0, 0.05));
    CHECK_THAT(mz.rhs, Catch::Matchers::WithinAbs(0.0, 0.05));
}

TEST_CASE("mutual-information identity holds on a segment-modulated run") {
    const auto src = gen_sources(2, 8, 512, SourceFamily::LaplaceVariance,
                                 ScaleScheme::RandomScale, 33);
    const auto mixed = mix_dnn(src, 1, MixingMode::Acyclic, 1.0, 33);
    const Eigen::MatrixXd xs = standardize_cols(mixed.data.x);
    const auto model = smica::fit(xs, mixed.data.seg, mixed.data.numSegments, {});
    const auto mi = direction::check_mi_identity(direction::make_map(model), xs, 3);
    CHECK(std::abs(mi.gap) < 0.15);
}

TEST_CASE("linear causal pairs give a positive ratio across seeds", "[slow]") {
    int positive = 0;
    const int trials = 50;
    for (int s = 0; s < trials; ++s) {
        const auto run = run_pipeline(1, 300 + static_cast<std::uint64_t>(s),
                                      70 + static_cast<std::uint64_t>(s), 1, 2, 300);
        const auto score = direction::likelihood_ratio(run.g, run.data.x, 3);
        if (score.r > 0.0) ++positive;
    }
    CHECK(positive >= 45);
}

TEST_CASE("depth-3 direction beats a coin flip", "[slow]") {
    int correct = 0;
    const int trials = 100;
    for (int s = 0; s < trials; ++s) {
        const auto run = run_pipeline(3, 300 + static_cast<std::uint64_t>(s),
                                      70 + static_cast<std::uint64_t>(s), 3, 2, 300);
        const auto score = direction::likelihood_ratio(run.g, run.data.x, 3);
        if (score.r > 0.0) ++correct;
    }
    INFO("correct=" << correct);
    CHECK(oracle::binom_tail_geq(correct, trials, 0.5) < 0.01);
}

TEST_CASE("permutation choice agrees with correlation matching when recovery is crisp",
          "[slow]") {
    int agree = 0;
    const int trials = 50;
    for (int s = 0; s < trials; ++s) {
        const auto run = run_pipeline(1, 300 + static_cast<std::uint64_t>(s),
                                      70 + static_cast<std::uint64_t>(s), 1, 2, 300);
        const auto pc = direction::select_permutation(run.g, run.data.x);
        const bool oracleIdentity = correlation_identity(run.recovered, run.sources, run.data);
        if (oracleIdentity == (pc.perm[0] == 0)) ++agree;
    }
    CHECK(agree >= 45);
}

TEST_CASE("permutation choice keeps a clear majority under recovery ambiguity", "[slow]") {
    // At mixing depth 2 the recovered columns are only partially separated, so
    // the Jacobian argmax and the correlation matching disagree on a minority
    // of seeds; the pinned run gives 38 of 50 agreements.
    int agree = 0;
    const int trials = 50;
    for (int s = 0; s < trials; ++s) {
        const auto run = run_pipeline(2, 300 + static_cast<std::uint64_t>(s),
                                      70 + static_cast<std::uint64_t>(s), 2, 4, 600);
        const auto pc = direction::select_permutation(run.g, run.data.x);
        const bool oracleIdentity = correlation_identity(run.recovered, run.sources, run.data);
        if (oracleIdentity == (pc.perm[0] == 0)) ++agree;
    }
    CHECK(agree >= 35);
}
