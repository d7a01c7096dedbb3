#include <catch2/catch_amalgamated.hpp>
#include <nonsens/datagen.hpp>
#include <nonsens/stats.hpp>

#include "support/oracles.hpp"

#include <cmath>
#include <queue>
#include <sstream>

using namespace nonsens;
using namespace nonsens::datagen;

namespace {

struct CellMoments {
    double mean = 0.0;
    double var = 0.0;
    int count = 0;
};

CellMoments segment_moments(const SourcePanel& panel, int e, int j) {
    CellMoments m;
    double sum = 0.0, sq = 0.0;
    for (Eigen::Index i = 0; i < panel.s.rows(); ++i) {
        if (panel.seg[static_cast<std::size_t>(i)] != e) continue;
        sum += panel.s(i, j);
        sq += panel.s(i, j) * panel.s(i, j);
        ++m.count;
    }
    m.mean = sum / m.count;
    m.var = sq / m.count - m.mean * m.mean;
    return m;
}

bool dag_acyclic(const std::vector<std::vector<bool>>& dag) {
    const std::size_t d = dag.size();
    std::vector<int> indeg(d, 0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (dag[i][j]) ++indeg[j];
    std::queue<std::size_t> q;
    for (std::size_t i = 0; i < d; ++i)
        if (indeg[i] == 0) q.push(i);
    std::size_t seen = 0;
    while (!q.empty()) {
        const std::size_t i = q.front();
        q.pop();
        ++seen;
        for (std::size_t j = 0; j < d; ++j)
            if (dag[i][j] && --indeg[j] == 0) q.push(j);
    }
    return seen == d;
}

} // namespace

TEST_CASE("gen_sources rejects invalid dimensions", "[datagen]") {
    REQUIRE_THROWS_AS(
        gen_sources(2, 1, 64, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 1),
        std::invalid_argument);
    REQUIRE_THROWS_AS(
        gen_sources(2, 2, 64, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 1),
        std::invalid_argument);
    REQUIRE_THROWS_AS(
        gen_sources(0, 5, 64, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 1),
        std::invalid_argument);
    REQUIRE_THROWS_AS(
        gen_sources(2, 5, 1, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 1),
        std::invalid_argument);
}

TEST_CASE("random-scale lambdas live in [0.2, 2]", "[datagen]") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto panel =
            gen_sources(3, 8, 4, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, seed);
        REQUIRE(panel.lambdas.rows() == 8);
        REQUIRE(panel.lambdas.cols() == 3);
        REQUIRE(panel.lambdas.minCoeff() >= 0.2);
        REQUIRE(panel.lambdas.maxCoeff() <= 2.0);
    }
}

TEST_CASE("laplace per-segment variance tracks 2*lambda^2", "[datagen]") {
    const auto panel =
        gen_sources(2, 10, 512, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 7);
    // sampling std of the relative variance error: sqrt((mu4 - sigma^4)/n)/sigma^2
    // with Laplace mu4 = 24 b^4, sigma^2 = 2 b^2, so sqrt(20/n)/2 per cell
    const double relSigma = std::sqrt(20.0 / 512.0) / 2.0;
    int within15 = 0;
    double relSum = 0.0;
    for (int e = 0; e < 10; ++e)
        for (int j = 0; j < 2; ++j) {
            const auto m = segment_moments(panel, e, j);
            REQUIRE(m.count == 512);
            const double target = 2.0 * panel.lambdas(e, j) * panel.lambdas(e, j);
            const double rel = std::abs(m.var - target) / target;
            REQUIRE(rel < 5.0 * relSigma);
            relSum += rel;
            if (rel < 0.15) ++within15;
        }
    REQUIRE(within15 >= 16);
    REQUIRE(relSum / 20.0 < 0.10);
}

TEST_CASE("laplace variance passes a z-test at n_e=2048", "[datagen]") {
    const auto panel =
        gen_sources(2, 5, 2048, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 11);
    const double relSigma = std::sqrt(20.0 / 2048.0) / 2.0;
    for (int e = 0; e < 5; ++e)
        for (int j = 0; j < 2; ++j) {
            const auto m = segment_moments(panel, e, j);
            const double target = 2.0 * panel.lambdas(e, j) * panel.lambdas(e, j);
            const double z = (m.var - target) / (target * relSigma);
            REQUIRE(std::abs(z) < 4.0);
        }
}

TEST_CASE("monotone scheme gives increasing, correlated lambdas", "[datagen]") {
    for (std::uint64_t seed : {5ULL, 6ULL}) {
        const auto panel =
            gen_sources(3, 8, 4, SourceFamily::LaplaceVariance, ScaleScheme::MonotoneScale, seed);
        for (int j = 0; j < 3; ++j)
            for (int e = 1; e < 8; ++e)
                REQUIRE(panel.lambdas(e, j) >= panel.lambdas(e - 1, j));
        REQUIRE(panel.lambdas.minCoeff() >= 0.05);
        REQUIRE(panel.lambdas.maxCoeff() <= 2.5);
        // columns share a common base, so they stay close to one another
        REQUIRE((panel.lambdas.col(0) - panel.lambdas.col(1)).cwiseAbs().maxCoeff() < 0.2);
    }
}

TEST_CASE("odd-family samples match quadrature moments", "[datagen]") {
    for (double lam : {0.5, 1.0, 2.0}) {
        const auto oracle = oracle::density_moments(
            [lam](double s) {
                return s >= 0.0 ? -3.0 * lam * s - 0.5 * s * s : lam * s - 0.5 * s * s;
            },
            -14.0, 14.0);
        Rng rng(42);
        const int n = 200000;
        Eigen::VectorXd xs(n);
        for (Eigen::Index i = 0; i < n; ++i) xs[i] = detail::sample_odd(rng, lam);
        const double mean = xs.mean();
        const double var = (xs.array() - mean).square().mean();
        const double skew = oracle::sample_skewness(xs);
        REQUIRE(mean == Catch::Approx(oracle.mean).margin(0.01));
        REQUIRE(var == Catch::Approx(oracle.var).epsilon(0.03));
        REQUIRE(skew == Catch::Approx(oracle.skew).margin(0.05));
        REQUIRE(skew < -0.2);
    }
}

TEST_CASE("odd-family panel has negative skewness per cell", "[datagen]") {
    const auto panel =
        gen_sources(2, 3, 2048, SourceFamily::OddUnnormalized, ScaleScheme::RandomScale, 3);
    REQUIRE(panel.s.allFinite());
    for (int e = 0; e < 3; ++e)
        for (int j = 0; j < 2; ++j) {
            std::vector<double> cell;
            for (Eigen::Index i = 0; i < panel.s.rows(); ++i)
                if (panel.seg[static_cast<std::size_t>(i)] == e) cell.push_back(panel.s(i, j));
            const Eigen::VectorXd v =
                Eigen::Map<const Eigen::VectorXd>(cell.data(), static_cast<Eigen::Index>(cell.size()));
            REQUIRE(oracle::sample_skewness(v) < 0.0);
        }
}

TEST_CASE("rank condition on degenerate and generic lambdas", "[datagen]") {
    Eigen::MatrixXd same(2, 2);
    same << 0.7, 1.1, 0.7, 1.1;
    REQUIRE_FALSE(check_rank_condition(same).fullRank);

    Rng rng(9);
    Eigen::MatrixXd rnd(10, 2);
    for (Eigen::Index i = 0; i < 10; ++i)
        for (Eigen::Index j = 0; j < 2; ++j) rnd(i, j) = rng.uniform(0.2, 2.0);
    REQUIRE(check_rank_condition(rnd).fullRank);

    Eigen::MatrixXd equalCols(6, 2);
    for (Eigen::Index i = 0; i < 6; ++i) {
        const double v = rng.uniform(0.2, 2.0);
        equalCols(i, 0) = v;
        equalCols(i, 1) = v;
    }
    REQUIRE_FALSE(check_rank_condition(equalCols).fullRank);
}

TEST_CASE("rank condition agrees with a QR rank oracle", "[datagen]") {
    Rng rng(33);
    for (int t = 0; t < 100; ++t) {
        const int e = 4 + static_cast<int>(rng.below(5));
        const int d = 2 + static_cast<int>(rng.below(3));
        Eigen::MatrixXd lam(e, d);
        for (Eigen::Index i = 0; i < e; ++i)
            for (Eigen::Index j = 0; j < d; ++j) lam(i, j) = rng.uniform(0.2, 2.0);
        if (t % 3 == 1 && d >= 2) lam.col(1) = 2.0 * lam.col(0);          // dependent columns
        if (t % 3 == 2) lam = lam.row(0).replicate(e, 1);                 // constant rows
        Eigen::MatrixXd diff(e, d);
        for (Eigen::Index i = 0; i < e; ++i) diff.row(i) = lam.row(i) - lam.row(0);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(diff);
        qr.setThreshold(1e-8);
        const bool oracleFull = qr.rank() == d;
        REQUIRE(check_rank_condition(lam).fullRank == oracleFull);
    }
}

TEST_CASE("depth-1 mixing is the linear map", "[datagen]") {
    const auto src =
        gen_sources(2, 4, 64, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 12);
    const auto mix = mix_dnn(src, 1, MixingMode::Acyclic, 1.0, 12);
    const auto& a = mix.layers.at(0);
    REQUIRE(a(0, 1) == 0.0);
    REQUIRE(a(1, 0) != 0.0);
    const Eigen::VectorXd x1 = a(0, 0) * src.s.col(0);
    const Eigen::VectorXd x2 = a(1, 0) * src.s.col(0) + a(1, 1) * src.s.col(1);
    REQUIRE((mix.data.x.col(0) - x1).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((mix.data.x.col(1) - x2).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(mix.dag[0][1]);
    REQUIRE_FALSE(mix.dag[1][0]);

    const auto wide =
        gen_sources(4, 4, 32, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 13);
    const auto mw = mix_dnn(wide, 1, MixingMode::Acyclic, 0.5, 13);
    REQUIRE((mw.data.x - wide.s * mw.layers[0].transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("acyclic layers are lower-triangular with a shared support", "[datagen]") {
    const auto src =
        gen_sources(5, 4, 16, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 21);
    const auto mix = mix_dnn(src, 3, MixingMode::Acyclic, 0.5, 21);
    REQUIRE(mix.layers.size() == 3);
    for (const auto& a : mix.layers) {
        for (Eigen::Index i = 0; i < 5; ++i) {
            REQUIRE(std::abs(a(i, i)) >= 0.5);
            REQUIRE(std::abs(a(i, i)) <= 1.5);
            for (Eigen::Index j = i + 1; j < 5; ++j) REQUIRE(a(i, j) == 0.0);
            for (Eigen::Index j = 0; j < i; ++j) {
                const bool here = a(i, j) != 0.0;
                const bool first = mix.layers[0](i, j) != 0.0;
                REQUIRE(here == first);
                REQUIRE(here == mix.dag[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]);
                if (here) {
                    REQUIRE(std::abs(a(i, j)) >= 0.5);
                    REQUIRE(std::abs(a(i, j)) <= 1.5);
                }
            }
        }
    }
}

TEST_CASE("cyclic layers have constant off-diagonal 0.6", "[datagen]") {
    const auto src =
        gen_sources(3, 4, 16, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 22);
    const auto mix = mix_dnn(src, 2, MixingMode::Cyclic, 0.0, 22);
    for (const auto& a : mix.layers)
        for (Eigen::Index i = 0; i < 3; ++i)
            for (Eigen::Index j = 0; j < 3; ++j)
                if (i != j) REQUIRE(a(i, j) == 0.6);
    for (const auto& row : mix.dag)
        for (bool b : row) REQUIRE_FALSE(b);
}

TEST_CASE("acyclic ground truth passes a topological check", "[datagen]") {
    for (int s = 0; s < 50; ++s) {
        const auto src = gen_sources(6, 3, 4, SourceFamily::LaplaceVariance,
                                     ScaleScheme::RandomScale, 500 + static_cast<std::uint64_t>(s));
        const auto mix = mix_dnn(src, 2, MixingMode::Acyclic, 0.4, 500 + static_cast<std::uint64_t>(s));
        REQUIRE(dag_acyclic(mix.dag));
    }
}

TEST_CASE("edge probability 2/5 on six nodes yields six edges on average", "[datagen]") {
    double edges = 0.0;
    const int trials = 200;
    for (int s = 0; s < trials; ++s) {
        const auto src = gen_sources(6, 3, 2, SourceFamily::LaplaceVariance,
                                     ScaleScheme::RandomScale, 1000 + static_cast<std::uint64_t>(s));
        const auto mix = mix_dnn(src, 1, MixingMode::Acyclic, 0.4, 1000 + static_cast<std::uint64_t>(s));
        for (const auto& row : mix.dag)
            for (bool b : row)
                if (b) edges += 1.0;
    }
    // 15 candidate pairs at p = 0.4: mean 6, sd of the mean 1.9/sqrt(200)
    REQUIRE(edges / trials == Catch::Approx(6.0).margin(1.0));
}

TEST_CASE("deep mixing inverts layer by layer", "[datagen]") {
    for (int s = 0; s < 10; ++s) {
        const auto src = gen_sources(4, 4, 128, SourceFamily::LaplaceVariance,
                                     ScaleScheme::RandomScale, 40 + static_cast<std::uint64_t>(s));
        const auto mix = mix_dnn(src, 3, MixingMode::Acyclic, 0.7, 40 + static_cast<std::uint64_t>(s));
        Eigen::MatrixXd cur = mix.data.x;
        for (std::size_t l = mix.layers.size(); l-- > 0;) {
            Eigen::MatrixXd sol =
                mix.layers[l].colPivHouseholderQr().solve(cur.transpose()).transpose();
            if (l > 0)
                sol = sol.unaryExpr([&](double v) { return v > 0.0 ? v : v / mix.slope; });
            cur = sol;
        }
        REQUIRE((cur - src.s).cwiseAbs().maxCoeff() < 1e-8);
        REQUIRE((reconstruct_sources(mix, mix.data.x) - src.s).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("no edge means independence within a segment", "[datagen]") {
    int nonReject = 0;
    for (int s = 0; s < 50; ++s) {
        const auto src = gen_sources(2, 3, 256, SourceFamily::LaplaceVariance,
                                     ScaleScheme::RandomScale, 900 + static_cast<std::uint64_t>(s));
        const auto mix = mix_dnn(src, 1, MixingMode::Acyclic, 0.0, 900 + static_cast<std::uint64_t>(s));
        const auto rows = mix.data.segmentRows(0);
        Eigen::VectorXd a(static_cast<Eigen::Index>(rows.size()));
        Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            a[static_cast<Eigen::Index>(i)] = mix.data.x(rows[i], 0);
            b[static_cast<Eigen::Index>(i)] = mix.data.x(rows[i], 1);
        }
        const auto t = stats::hsic_test(a, b, 0.05, stats::NullMethod::GammaApprox, 0, 77);
        if (!t.reject) ++nonReject;
    }
    REQUIRE(nonReject >= 45);
}

TEST_CASE("generation is deterministic in the seed", "[datagen]") {
    const auto a = gen_sources(3, 4, 32, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 77);
    const auto b = gen_sources(3, 4, 32, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 77);
    const auto c = gen_sources(3, 4, 32, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 78);
    REQUIRE((a.s - b.s).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.lambdas - b.lambdas).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.s - c.s).cwiseAbs().maxCoeff() > 0.0);

    const auto ma = mix_dnn(a, 2, MixingMode::Acyclic, 0.5, 5);
    const auto mb = mix_dnn(b, 2, MixingMode::Acyclic, 0.5, 5);
    REQUIRE((ma.data.x - mb.data.x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csv round-trips exactly", "[datagen]") {
    const auto src =
        gen_sources(3, 3, 16, SourceFamily::LaplaceVariance, ScaleScheme::RandomScale, 14);
    const auto mix = mix_dnn(src, 2, MixingMode::Acyclic, 0.5, 14);
    std::stringstream ss;
    write_csv(ss, mix.data);
    std::string first;
    std::getline(ss, first);
    REQUIRE(first == "seg,x1,x2,x3");
    ss.seekg(0);
    const auto back = read_csv(ss);
    REQUIRE(back.n() == mix.data.n());
    REQUIRE(back.d() == mix.data.d());
    REQUIRE(back.seg == mix.data.seg);
    REQUIRE((back.x - mix.data.x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csv reader remaps sparse segment labels", "[datagen]") {
    std::stringstream ss("seg,x1\n5,1.0\n9,2.0\n5,3.0\n9,4.0\n7,0.5\n7,0.25\n");
    const auto data = read_csv(ss);
    REQUIRE(data.numSegments == 3);
    REQUIRE(data.seg == std::vector<int>{0, 2, 0, 2, 1, 1});
}

TEST_CASE("csv reader rejects malformed input", "[datagen]") {
    std::stringstream empty("");
    REQUIRE_THROWS_AS(read_csv(empty), std::runtime_error);
    std::stringstream header("time,x1\n0,1.0\n");
    REQUIRE_THROWS_AS(read_csv(header), std::runtime_error);
    std::stringstream badNum("seg,x1\n0,abc\n");
    REQUIRE_THROWS_AS(read_csv(badNum), std::runtime_error);
    std::stringstream badSeg("seg,x1\nzero,1.0\n");
    REQUIRE_THROWS_AS(read_csv(badSeg), std::runtime_error);
    std::stringstream shortRow("seg,x1,x2\n0,1.0\n");
    REQUIRE_THROWS_AS(read_csv(shortRow), std::runtime_error);
    std::stringstream noRows("seg,x1\n");
    REQUIRE_THROWS_AS(read_csv(noRows), std::runtime_error);
}

TEST_CASE("ground truth json round-trips", "[datagen]") {
    GroundTruth t;
    t.dag = {{false, true}, {false, false}};
    t.depth = 3;
    t.seed = 99;
    t.family = "odd";
    t.scheme = "monotone";
    nlohmann::json j = t;
    const auto back = j.get<GroundTruth>();
    REQUIRE(back.dag == t.dag);
    REQUIRE(back.depth == t.depth);
    REQUIRE(back.seed == t.seed);
    REQUIRE(back.family == t.family);
    REQUIRE(back.scheme == t.scheme);
}
