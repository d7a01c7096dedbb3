#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "common.hpp"
#include "direction.hpp"
#include "pipeline.hpp"
#include "smica.hpp"
#include "stats.hpp"

namespace nonsens::baselines {

struct BaselineConfig {
    stats::NullMethod hsic = stats::NullMethod::GammaApprox;
    int permutations = 500;
    std::uint64_t seed = 1;
    smica::SmicaConfig ica;  // for linear_ica_nonsens
};

enum class FitMethod { OLS, KernelRidge };

struct RegressionFit {
    FitMethod method = FitMethod::OLS;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    double bandwidth = 0.0;  // KernelRidge only
    double ridge = 0.0;      // KernelRidge only
    double mse = 0.0;
};

struct BaselineVerdict {
    Decision decision = Decision::Inconclusive;
    std::vector<stats::IndependenceTestResult> tests;
    double alpha = 0.05;
    double alphaEffective = 0.025;
};

namespace detail {

inline RegressionFit ols_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double n = static_cast<double>(x.size());
    const double mx = x.mean();
    const double my = y.mean();
    const double vx = (x.array() - mx).square().sum() / n;
    if (vx <= 1e-14) throw std::invalid_argument("ols_fit: degenerate regressor variance");
    const double cxy = ((x.array() - mx) * (y.array() - my)).sum() / n;
    const double beta = cxy / vx;
    RegressionFit f;
    f.method = FitMethod::OLS;
    f.fitted = my + beta * (x.array() - mx);
    f.residuals = y - f.fitted;
    f.mse = f.residuals.squaredNorm() / n;
    return f;
}

// evenly spaced row subsample, a function of (n, m) only
inline std::vector<Eigen::Index> strided_indices(Eigen::Index n, Eigen::Index m) {
    m = std::min(n, m);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
    for (Eigen::Index k = 0; k < m; ++k)
        idx[static_cast<std::size_t>(k)] = (k * n) / m;
    return idx;
}

inline double median_pairwise_distance(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = (x.row(i) - x.row(j)).norm();
            if (d > 0.0) dist.push_back(d);
        }
    if (dist.empty()) return 1.0;
    const std::size_t mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
    return dist[mid];
}

inline Eigen::MatrixXd gaussian_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                     double sigma) {
    const double g = 1.0 / (2.0 * sigma * sigma);
    Eigen::MatrixXd k(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
        k.col(j) = (-(a.rowwise() - b.row(j)).rowwise().squaredNorm().array() * g).exp();
    return k;
}

} // namespace detail

struct KernelRidgeConfig {
    Eigen::Index maxTrain = 1024;  // training-set cap (evenly spaced subsample)
    Eigen::Index maxCv = 512;      // rows used during cross-validation
    int cvFolds = 5;
    bool crossValidate = true;
    double bandwidthScale = 1.0;  // used when crossValidate is false
    double ridge = 1e-3;          // n-scaled inside the solve
};

// Gaussian-kernel ridge regression with a centred target. Bandwidth and ridge
// come from a 5-fold CV over a 3x3 grid around the median heuristic; the
// training rows are an evenly spaced subsample so repeated calls are
// deterministic. Fitted values and residuals cover every input row.
inline RegressionFit kernel_ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const KernelRidgeConfig& cfg = {}) {
    const Eigen::Index n = x.rows();
    if (n != y.size()) throw std::invalid_argument("kernel_ridge_fit: length mismatch");
    if (n < 5) throw std::invalid_argument("kernel_ridge_fit: need at least 5 points");

    const auto trainIdx = detail::strided_indices(n, cfg.maxTrain);
    const Eigen::Index m = static_cast<Eigen::Index>(trainIdx.size());
    Eigen::MatrixXd xt(m, x.cols());
    Eigen::VectorXd yt(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        xt.row(k) = x.row(trainIdx[static_cast<std::size_t>(k)]);
        yt[k] = y[trainIdx[static_cast<std::size_t>(k)]];
    }
    const double med = detail::median_pairwise_distance(
        xt.topRows(std::min<Eigen::Index>(m, cfg.maxCv)));

    double bestScale = cfg.bandwidthScale;
    double bestRidge = cfg.ridge;
    if (cfg.crossValidate) {
        const auto cvIdx = detail::strided_indices(m, cfg.maxCv);
        const Eigen::Index c = static_cast<Eigen::Index>(cvIdx.size());
        Eigen::MatrixXd xc(c, x.cols());
        Eigen::VectorXd yc(c);
        for (Eigen::Index k = 0; k < c; ++k) {
            xc.row(k) = xt.row(cvIdx[static_cast<std::size_t>(k)]);
            yc[k] = yt[cvIdx[static_cast<std::size_t>(k)]];
        }
        const double scales[3] = {0.5, 1.0, 2.0};
        const double ridges[3] = {1e-4, 1e-3, 1e-2};
        double bestErr = std::numeric_limits<double>::infinity();
        const int folds = std::min<int>(cfg.cvFolds, static_cast<int>(c) / 2);
        for (double sc : scales)
            for (double rd : ridges) {
                double err = 0.0;
                Eigen::Index count = 0;
                for (int f = 0; f < folds; ++f) {
                    const Eigen::Index lo = (c * f) / folds;
                    const Eigen::Index hi = (c * (f + 1)) / folds;
                    const Eigen::Index nv = hi - lo;
                    const Eigen::Index ntr = c - nv;
                    if (nv == 0 || ntr < 2) continue;
                    Eigen::MatrixXd xf(ntr, x.cols());
                    Eigen::VectorXd yf(ntr);
                    Eigen::Index w = 0;
                    for (Eigen::Index k = 0; k < c; ++k)
                        if (k < lo || k >= hi) {
                            xf.row(w) = xc.row(k);
                            yf[w] = yc[k];
                            ++w;
                        }
                    const double ym = yf.mean();
                    Eigen::MatrixXd kf = detail::gaussian_gram(xf, xf, sc * med);
                    kf.diagonal().array() += static_cast<double>(ntr) * rd;
                    const Eigen::VectorXd alphaV = kf.ldlt().solve((yf.array() - ym).matrix());
                    const Eigen::MatrixXd kv =
                        detail::gaussian_gram(xc.middleRows(lo, nv), xf, sc * med);
                    const Eigen::VectorXd pred = (kv * alphaV).array() + ym;
                    err += (pred - yc.segment(lo, nv)).squaredNorm();
                    count += nv;
                }
                if (count > 0) err /= static_cast<double>(count);
                if (count > 0 && err < bestErr) {
                    bestErr = err;
                    bestScale = sc;
                    bestRidge = rd;
                }
            }
    }

    RegressionFit f;
    f.method = FitMethod::KernelRidge;
    f.bandwidth = bestScale * med;
    f.ridge = bestRidge;
    const double ym = yt.mean();
    Eigen::MatrixXd kt = detail::gaussian_gram(xt, xt, f.bandwidth);
    kt.diagonal().array() += static_cast<double>(m) * f.ridge;
    const Eigen::VectorXd alphaV = kt.ldlt().solve((yt.array() - ym).matrix());
    const Eigen::MatrixXd ka = detail::gaussian_gram(x, xt, f.bandwidth);
    f.fitted = (ka * alphaV).array() + ym;
    f.residuals = y - f.fitted;
    f.mse = f.residuals.squaredNorm() / static_cast<double>(n);
    return f;
}

namespace detail {

// Shared two-regression counting rule: fit[i] regresses the other column on
// column i and the cause is the regressor of the single pair that fails to
// reject independence.
inline BaselineVerdict two_test_verdict(const Eigen::MatrixXd& x, const RegressionFit& fit0,
                                        const RegressionFit& fit1, double alpha,
                                        const BaselineConfig& cfg) {
    BaselineVerdict v;
    v.alpha = alpha;
    v.alphaEffective = alpha / 2.0;
    const std::uint64_t s = mix_seed(cfg.seed, 0xb57eULL);
    v.tests.push_back(stats::hsic_test(x.col(0), fit0.residuals, v.alphaEffective, cfg.hsic,
                                       cfg.permutations, s));
    v.tests.push_back(stats::hsic_test(x.col(1), fit1.residuals, v.alphaEffective, cfg.hsic,
                                       cfg.permutations, s));
    const bool r0 = v.tests[0].reject;
    const bool r1 = v.tests[1].reject;
    if (!r0 && r1)
        v.decision = Decision::X1Causes;
    else if (r0 && !r1)
        v.decision = Decision::X2Causes;
    else
        v.decision = Decision::Inconclusive;
    return v;
}

} // namespace detail

inline BaselineVerdict direct_lingam_bivariate(const SegmentedDataset& data, double alpha,
                                               const BaselineConfig& cfg = {}) {
    data.validate();
    if (data.d() != 2) throw std::invalid_argument("direct_lingam: bivariate data expected");
    const auto fit0 = detail::ols_fit(data.x.col(0), data.x.col(1));
    const auto fit1 = detail::ols_fit(data.x.col(1), data.x.col(0));
    return detail::two_test_verdict(data.x, fit0, fit1, alpha, cfg);
}

inline BaselineVerdict resit_bivariate(const SegmentedDataset& data, double alpha,
                                       const BaselineConfig& cfg = {},
                                       const KernelRidgeConfig& kr = {}) {
    data.validate();
    if (data.d() != 2) throw std::invalid_argument("resit: bivariate data expected");
    const auto fit0 = kernel_ridge_fit(data.x.col(0), data.x.col(1), kr);
    const auto fit1 = kernel_ridge_fit(data.x.col(1), data.x.col(0), kr);
    return detail::two_test_verdict(data.x, fit0, fit1, alpha, cfg);
}

// Assume-cause variants: direction with the larger independence p-value wins.
inline Decision direct_lingam_assume(const SegmentedDataset& data,
                                     const BaselineConfig& cfg = {}) {
    const auto v = direct_lingam_bivariate(data, 0.05, cfg);
    return v.tests[0].pValue > v.tests[1].pValue ? Decision::X1Causes : Decision::X2Causes;
}

inline Decision resit_assume(const SegmentedDataset& data, const BaselineConfig& cfg = {},
                             const KernelRidgeConfig& kr = {}) {
    const auto v = resit_bivariate(data, 0.05, cfg, kr);
    return v.tests[0].pValue > v.tests[1].pValue ? Decision::X1Causes : Decision::X2Causes;
}

// Invariant causal prediction, bivariate: pool the data, regress each
// variable on the other, and test per-segment residual invariance by
// leave-one-segment-out KS with a Bonferroni correction over segments.
inline BaselineVerdict icp_bivariate(const SegmentedDataset& data, double alpha,
                                     const BaselineConfig& cfg = {},
                                     const KernelRidgeConfig& kr = {}) {
    data.validate();
    if (data.d() != 2) throw std::invalid_argument("icp: bivariate data expected");
    if (data.numSegments < 2)
        throw std::invalid_argument("icp: invariance is undefined with a single segment");
    (void)cfg;

    BaselineVerdict v;
    v.alpha = alpha;
    v.alphaEffective = (alpha / 2.0) / static_cast<double>(data.numSegments);

    std::array<bool, 2> invariant{};
    std::array<double, 2> minP{1.0, 1.0};
    for (int dir = 0; dir < 2; ++dir) {
        const auto fit =
            kernel_ridge_fit(data.x.col(dir), data.x.col(1 - dir), kr);
        bool ok = true;
        for (int e = 0; e < data.numSegments; ++e) {
            std::vector<double> in, out;
            for (Eigen::Index i = 0; i < data.n(); ++i)
                (data.seg[static_cast<std::size_t>(i)] == e ? in : out)
                    .push_back(fit.residuals[i]);
            if (in.size() < 5 || out.size() < 5)
                throw std::invalid_argument("icp: segment too small for the KS test");
            const auto ks = stats::ks_two_sample(
                Eigen::Map<const Eigen::VectorXd>(in.data(),
                                                  static_cast<Eigen::Index>(in.size())),
                Eigen::Map<const Eigen::VectorXd>(out.data(),
                                                  static_cast<Eigen::Index>(out.size())));
            minP[static_cast<std::size_t>(dir)] =
                std::min(minP[static_cast<std::size_t>(dir)], ks.pValue);
            if (ks.pValue < v.alphaEffective) ok = false;
        }
        invariant[static_cast<std::size_t>(dir)] = ok;
        stats::IndependenceTestResult t;
        t.statistic = 0.0;
        t.pValue = minP[static_cast<std::size_t>(dir)];
        t.alphaEffective = v.alphaEffective;
        t.reject = !ok;
        v.tests.push_back(t);
    }
    if (invariant[0] && !invariant[1])
        v.decision = Decision::X1Causes;
    else if (!invariant[0] && invariant[1])
        v.decision = Decision::X2Causes;
    else
        v.decision = Decision::Inconclusive;
    return v;
}

struct ReciResult {
    Decision decision = Decision::X2Causes;
    double mse1 = 0.0;  // regressing x2 on x1 (the x1 -> x2 model)
    double mse2 = 0.0;
    bool tie = false;
};

// RECI always decides: standardize, regress both ways, smaller MSE wins.
inline ReciResult reci_bivariate(const SegmentedDataset& data,
                                 const KernelRidgeConfig& kr = {}) {
    data.validate();
    if (data.d() != 2) throw std::invalid_argument("reci: bivariate data expected");
    const Eigen::MatrixXd xs = stats::standardize_columns(data.x);
    ReciResult r;
    r.mse1 = kernel_ridge_fit(xs.col(0), xs.col(1), kr).mse;
    r.mse2 = kernel_ridge_fit(xs.col(1), xs.col(0), kr).mse;
    if (r.mse1 < r.mse2) {
        r.decision = Decision::X1Causes;
    } else {
        r.decision = Decision::X2Causes;
        r.tie = r.mse1 == r.mse2;
    }
    return r;
}

// Ablation: the four-test procedure on disturbances from a purely linear
// unmixing of the observations (no feature extractor).
inline pipeline::CausalVerdict linear_ica_nonsens(const SegmentedDataset& raw, double alpha,
                                                  const BaselineConfig& cfg = {}) {
    raw.validate();
    if (raw.d() != 2) throw std::invalid_argument("linear_ica_nonsens: bivariate data expected");
    if (alpha <= 0.0 || alpha >= 1.0)
        throw std::invalid_argument("linear_ica_nonsens: bad alpha");
    const Eigen::MatrixXd xs = stats::standardize_columns(raw.x);
    smica::SmicaConfig icaCfg = cfg.ica;
    icaCfg.seed = mix_seed(cfg.seed, 0x11caULL);
    const auto model = smica::fit(xs, raw.seg, raw.numSegments, icaCfg);
    const Eigen::MatrixXd dist = model.unmix(xs);

    pipeline::CausalVerdict v;
    v.alpha = alpha;
    v.alphaEffective = alpha / 4.0;
    v.icaObjective = model.finalObjective;
    // Same within-segment standardization as the full pipeline: pooled
    // variance co-modulation otherwise reads as dependence.
    std::array<Eigen::VectorXd, 2> xCol, nCol;
    for (int c = 0; c < 2; ++c) {
        xCol[static_cast<std::size_t>(c)] =
            stats::segment_standardize(xs.col(c), raw.seg, raw.numSegments);
        nCol[static_cast<std::size_t>(c)] =
            stats::segment_standardize(dist.col(c), raw.seg, raw.numSegments);
    }
    std::array<bool, 4> reject{};
    const std::uint64_t s = mix_seed(cfg.seed, 0x4e57ULL);
    for (int t = 0; t < 4; ++t) {
        v.tests[static_cast<std::size_t>(t)] =
            stats::hsic_test(xCol[static_cast<std::size_t>(t / 2)],
                             nCol[static_cast<std::size_t>(t % 2)], v.alphaEffective, cfg.hsic,
                             cfg.permutations, s);
        reject[static_cast<std::size_t>(t)] = v.tests[static_cast<std::size_t>(t)].reject;
    }
    v.decision = pipeline::verdict_from_tests(reject);
    return v;
}

inline void to_json(nlohmann::json& j, const BaselineVerdict& v) {
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& t : v.tests)
        tests.push_back(
            {{"statistic", t.statistic}, {"p_value", t.pValue}, {"reject", t.reject}});
    j = nlohmann::json{{"decision", decision_name(v.decision)},
                       {"alpha", v.alpha},
                       {"alpha_effective", v.alphaEffective},
                       {"tests", tests}};
}

inline void to_json(nlohmann::json& j, const ReciResult& r) {
    j = nlohmann::json{{"decision", decision_name(r.decision)},
                       {"mse1", r.mse1},
                       {"mse2", r.mse2},
                       {"tie", r.tie}};
}

// Assume-cause variant of the ablation: likelihood ratio on the linear
// disturbance map.
inline direction::DirectionScore linear_ica_assume(const SegmentedDataset& raw,
                                                   const BaselineConfig& cfg = {}) {
    raw.validate();
    if (raw.d() != 2) throw std::invalid_argument("linear_ica_assume: bivariate data expected");
    const Eigen::MatrixXd xs = stats::standardize_columns(raw.x);
    smica::SmicaConfig icaCfg = cfg.ica;
    icaCfg.seed = mix_seed(cfg.seed, 0x11caULL);
    const auto model = smica::fit(xs, raw.seg, raw.numSegments, icaCfg);
    const auto g = direction::make_map(model);
    return direction::likelihood_ratio(g, xs);
}

} // namespace nonsens::baselines
