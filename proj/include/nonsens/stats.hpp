#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "common.hpp"

namespace nonsens::stats {

struct Standardized {
    Eigen::VectorXd values;
    double mean = 0.0;
    double stdev = 1.0;
};

// Population-variance convention (divide by n), so e.g. (2,4,6) maps to
// (-1.2247, 0, 1.2247).
inline Standardized standardize(const Eigen::VectorXd& x) {
    if (x.size() == 0) throw std::invalid_argument("standardize: empty input");
    if (!x.allFinite()) throw std::invalid_argument("standardize: non-finite input");
    Standardized out;
    out.mean = x.mean();
    double var = (x.array() - out.mean).square().mean();
    if (var <= 0.0) throw std::invalid_argument("standardize: constant input");
    out.stdev = std::sqrt(var);
    out.values = (x.array() - out.mean) / out.stdev;
    return out;
}

inline Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        out.col(j) = standardize(x.col(j)).values;
    return out;
}

// Zero mean and unit variance within each segment (population convention, as
// above). A segment whose variance underflows is centred but not rescaled.
inline Eigen::VectorXd segment_standardize(const Eigen::VectorXd& x, const std::vector<int>& seg,
                                           int numSegments) {
    if (static_cast<std::size_t>(x.size()) != seg.size())
        throw std::invalid_argument("segment_standardize: label/length mismatch");
    if (!x.allFinite()) throw std::invalid_argument("segment_standardize: non-finite input");
    Eigen::VectorXd out = x;
    for (int e = 0; e < numSegments; ++e) {
        double sum = 0.0;
        Eigen::Index cnt = 0;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (seg[static_cast<std::size_t>(i)] == e) { sum += x[i]; ++cnt; }
        if (cnt == 0) continue;
        const double mean = sum / static_cast<double>(cnt);
        double ss = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (seg[static_cast<std::size_t>(i)] == e) ss += (x[i] - mean) * (x[i] - mean);
        const double var = ss / static_cast<double>(cnt);
        const double scale = var > 1e-24 ? std::sqrt(var) : 1.0;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (seg[static_cast<std::size_t>(i)] == e) out[i] = (x[i] - mean) / scale;
    }
    return out;
}

// Median pairwise distance. Exact for n <= 2048; beyond that a fixed-seed
// subsample of pairs keeps the cost bounded. The subsample depends only on n,
// so affine maps of the data scale the result exactly.
inline double median_bandwidth(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size();
    if (n < 2) throw std::invalid_argument("median_bandwidth: need at least 2 points");
    std::vector<double> dists;
    const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    const std::uint64_t cap = 1u << 21;
    if (total <= cap) {
        dists.reserve(total);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j)
                dists.push_back(std::abs(x[i] - x[j]));
    } else {
        Rng rng(0x9a0bd1ULL + static_cast<std::uint64_t>(n));
        dists.reserve(cap);
        for (std::uint64_t t = 0; t < cap; ++t) {
            auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - 1)));
            if (j >= i) ++j;
            dists.push_back(std::abs(x[i] - x[j]));
        }
    }
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double med = *mid;
    return med > 0.0 ? med : 1.0;
}

namespace detail {

// Accumulated moments of the doubly centered kernel matrices, computed in
// blocks so no n x n matrix is ever materialised.
struct HsicMoments {
    double trace = 0.0;     // sum_ij Kc_ij * Lc_ij
    double sqSum = 0.0;     // sum_{i != j} (Kc_ij * Lc_ij / 6)^2
    double sumK = 0.0;      // sum_ij K_ij
    double sumL = 0.0;
    Eigen::Index n = 0;
};

inline HsicMoments hsic_moments(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                double sx, double sy) {
    const Eigen::Index n = x.size();
    const double gx = 1.0 / (2.0 * sx * sx);
    const double gy = 1.0 / (2.0 * sy * sy);
    Eigen::VectorXd rowK = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd rowL = Eigen::VectorXd::Zero(n);
    Eigen::ArrayXd buf(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        buf = (-(x.array() - x[i]).square() * gx).exp();
        rowK[i] = buf.sum();
        buf = (-(y.array() - y[i]).square() * gy).exp();
        rowL[i] = buf.sum();
    }
    HsicMoments m;
    m.n = n;
    m.sumK = rowK.sum();
    m.sumL = rowL.sum();
    const double mk = m.sumK / (static_cast<double>(n) * n);
    const double ml = m.sumL / (static_cast<double>(n) * n);
    Eigen::ArrayXd kc(n), lc(n);
    const double inv = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        kc = (-(x.array() - x[i]).square() * gx).exp() - rowK[i] * inv - rowK.array() * inv + mk;
        lc = (-(y.array() - y[i]).square() * gy).exp() - rowL[i] * inv - rowL.array() * inv + ml;
        Eigen::ArrayXd prod = kc * lc;
        m.trace += prod.sum();
        Eigen::ArrayXd sq = (prod / 6.0).square();
        m.sqSum += sq.sum() - sq[i];
    }
    return m;
}

} // namespace detail

// Biased V-statistic HSIC = (1/n^2) trace(K H L H) with Gaussian kernels and
// median-heuristic bandwidths chosen per variable.
inline double hsic_statistic(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw std::invalid_argument("hsic: length mismatch");
    if (x.size() < 4) throw std::invalid_argument("hsic: need at least 4 points");
    if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("hsic: non-finite input");
    const double sx = median_bandwidth(x);
    const double sy = median_bandwidth(y);
    auto m = detail::hsic_moments(x, y, sx, sy);
    return m.trace / (static_cast<double>(m.n) * static_cast<double>(m.n));
}

enum class NullMethod { PermutationNull, GammaApprox };

struct IndependenceTestResult {
    double statistic = 0.0;
    double pValue = 1.0;
    double alphaEffective = 0.05;  // post-Bonferroni level supplied by the caller
    bool reject = false;
    NullMethod method = NullMethod::PermutationNull;
    int permutations = 0;
};

namespace detail {

inline double gamma_tail(double shape, double scale, double x) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(shape, x / scale);
}

} // namespace detail

// Independence test. Bonferroni corrections are applied by the caller: pass
// the effective level in `alphaEffective`. Permutation null shuffles y with
// counter-based seeding; the gamma approximation moment-matches n*HSIC and is
// the fast path at benchmark sample sizes.
inline constexpr Eigen::Index kHsicTestCap = 4096;

inline IndependenceTestResult hsic_test(const Eigen::VectorXd& xIn, const Eigen::VectorXd& yIn,
                                        double alphaEffective,
                                        NullMethod method = NullMethod::PermutationNull,
                                        int permutations = 500, std::uint64_t seed = 0) {
    if (xIn.size() != yIn.size()) throw std::invalid_argument("hsic_test: length mismatch");
    if (xIn.size() < 6) throw std::invalid_argument("hsic_test: need at least 6 points");
    if (alphaEffective <= 0.0 || alphaEffective >= 1.0)
        throw std::invalid_argument("hsic_test: alpha out of range");

    // Above the cap, test a row subsample chosen from n alone, so paired
    // calls on the same dataset see the same rows and affine maps of the
    // inputs cannot change which rows are used.
    Eigen::VectorXd x = xIn, y = yIn;
    if (xIn.size() > kHsicTestCap) {
        const std::size_t total = static_cast<std::size_t>(xIn.size());
        std::vector<std::size_t> idx(total);
        for (std::size_t i = 0; i < total; ++i) idx[i] = i;
        Rng rng(0x715cu + static_cast<std::uint64_t>(total));
        for (std::size_t i = 0; i < static_cast<std::size_t>(kHsicTestCap); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
            std::swap(idx[i], idx[j]);
        }
        x.resize(kHsicTestCap);
        y.resize(kHsicTestCap);
        for (Eigen::Index i = 0; i < kHsicTestCap; ++i) {
            x[i] = xIn[static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)])];
            y[i] = yIn[static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)])];
        }
    }
    const Eigen::Index n = x.size();

    IndependenceTestResult res;
    res.alphaEffective = alphaEffective;
    res.method = method;

    const bool constX = (x.maxCoeff() - x.minCoeff()) <= 0.0;
    const bool constY = (y.maxCoeff() - y.minCoeff()) <= 0.0;
    if (constX || constY) {
        res.statistic = 0.0;
        res.pValue = 1.0;
        res.reject = false;
        return res;
    }

    const double sx = median_bandwidth(x);
    const double sy = median_bandwidth(y);

    if (method == NullMethod::GammaApprox) {
        auto m = detail::hsic_moments(x, y, sx, sy);
        const double nn = static_cast<double>(n);
        res.statistic = m.trace / (nn * nn);
        const double mux = (m.sumK - nn) / (nn * (nn - 1.0));
        const double muy = (m.sumL - nn) / (nn * (nn - 1.0));
        const double mHsic = (1.0 + mux * muy - mux - muy) / nn;
        double varHsic = m.sqSum / (nn * (nn - 1.0));
        varHsic *= 72.0 * (nn - 4.0) * (nn - 5.0) / (nn * (nn - 1.0) * (nn - 2.0) * (nn - 3.0));
        if (mHsic <= 0.0 || varHsic <= 0.0) {
            res.pValue = 1.0;
        } else {
            const double shape = mHsic * mHsic / varHsic;
            const double scale = varHsic * nn / mHsic;
            res.pValue = detail::gamma_tail(shape, scale, nn * res.statistic);
        }
        res.reject = res.pValue < alphaEffective;
        return res;
    }

    const double gx = 1.0 / (2.0 * sx * sx);
    const double gy = 1.0 / (2.0 * sy * sy);
    Eigen::MatrixXd kc(n, n), lc(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        kc.col(i) = (-(x.array() - x[i]).square() * gx).exp();
        lc.col(i) = (-(y.array() - y[i]).square() * gy).exp();
    }
    auto center = [n](Eigen::MatrixXd& mat) {
        Eigen::VectorXd rm = mat.rowwise().mean();
        double tm = rm.mean();
        mat.colwise() -= rm;
        mat.rowwise() -= rm.transpose();
        mat.array() += tm;
    };
    center(kc);
    center(lc);
    const double nn = static_cast<double>(n);
    const double obs = kc.cwiseProduct(lc).sum() / (nn * nn);
    res.statistic = obs;
    res.permutations = permutations;

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    int geq = 0;
    for (int p = 0; p < permutations; ++p) {
        Rng rng(mix_seed(seed, 0x9e35u, static_cast<std::uint64_t>(p)));
        for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
        rng.shuffle(perm);
        double t = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double* kcol = kc.col(i).data();
            const Eigen::Index pi = perm[static_cast<std::size_t>(i)];
            const double* lcol = lc.col(pi).data();
            double acc = 0.0;
            for (Eigen::Index j = 0; j < n; ++j)
                acc += kcol[j] * lcol[perm[static_cast<std::size_t>(j)]];
            t += acc;
        }
        t /= nn * nn;
        if (t >= obs) ++geq;
    }
    res.pValue = (1.0 + geq) / (1.0 + permutations);
    res.reject = res.pValue < alphaEffective;
    return res;
}

// Kozachenko-Leonenko differential entropy for scalar samples:
// H = psi(n) - psi(k) + mean_i log(2 r_ik). Duplicate samples get a tiny
// deterministic jitter (1e-10 of the scale) so the k-NN radius stays positive.
inline double knn_entropy(const Eigen::VectorXd& x, int k = 3) {
    const Eigen::Index n = x.size();
    if (k < 1) throw std::invalid_argument("knn_entropy: k must be positive");
    if (n <= k) throw std::invalid_argument("knn_entropy: need more than k samples");
    if (!x.allFinite()) throw std::invalid_argument("knn_entropy: non-finite input");

    std::vector<double> v(x.data(), x.data() + n);
    std::sort(v.begin(), v.end());
    bool dup = false;
    for (Eigen::Index i = 1; i < n; ++i)
        if (v[static_cast<std::size_t>(i)] == v[static_cast<std::size_t>(i - 1)]) { dup = true; break; }
    if (dup) {
        double scale = std::max(1e-300, std::sqrt(pop_variance(x)));
        Rng rng(0x3e217abcULL);
        for (auto& val : v) val += (rng.uniform() - 0.5) * 2e-10 * scale;
        std::sort(v.begin(), v.end());
    }

    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        // expand a window around i to find the k-th nearest neighbour
        Eigen::Index lo = i, hi = i;
        double r = 0.0;
        for (int c = 0; c < k; ++c) {
            const double dl = lo > 0 ? v[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(lo - 1)]
                                     : std::numeric_limits<double>::infinity();
            const double dr = hi + 1 < n ? v[static_cast<std::size_t>(hi + 1)] - v[static_cast<std::size_t>(i)]
                                         : std::numeric_limits<double>::infinity();
            if (dl <= dr) { r = dl; --lo; } else { r = dr; ++hi; }
        }
        acc += std::log(2.0 * std::max(r, 1e-300));
    }
    return boost::math::digamma(static_cast<double>(n)) - boost::math::digamma(static_cast<double>(k)) +
           acc / static_cast<double>(n);
}

// Kraskov-Stoegbauer-Grassberger mutual information (their first estimator)
// for scalar pairs, Chebyshev metric in the joint space.
inline double mutual_information(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int k = 3) {
    const Eigen::Index n = x.size();
    if (y.size() != n) throw std::invalid_argument("mutual_information: length mismatch");
    if (k < 1 || n <= k + 1) throw std::invalid_argument("mutual_information: bad k or too few samples");
    if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("mutual_information: non-finite input");

    Eigen::VectorXd xv = x, yv = y;
    auto hasDup = [](const Eigen::VectorXd& v) {
        std::vector<double> s(v.data(), v.data() + v.size());
        std::sort(s.begin(), s.end());
        for (std::size_t i = 1; i < s.size(); ++i)
            if (s[i] == s[i - 1]) return true;
        return false;
    };
    if (hasDup(xv) || hasDup(yv)) {
        Rng rng(0x77aa12ULL);
        double scx = std::max(1e-300, std::sqrt(pop_variance(xv)));
        double scy = std::max(1e-300, std::sqrt(pop_variance(yv)));
        for (Eigen::Index i = 0; i < n; ++i) {
            xv[i] += (rng.uniform() - 0.5) * 2e-10 * scx;
            yv[i] += (rng.uniform() - 0.5) * 2e-10 * scy;
        }
    }

    std::vector<double> xs(xv.data(), xv.data() + n), ys(yv.data(), yv.data() + n);
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());

    std::vector<double> dist(static_cast<std::size_t>(n));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            dist[static_cast<std::size_t>(j)] =
                std::max(std::abs(xv[j] - xv[i]), std::abs(yv[j] - yv[i]));
        dist[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
        std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
        const double eps = dist[static_cast<std::size_t>(k - 1)];
        // strict counts within eps on each marginal, excluding the point itself
        auto countWithin = [eps](const std::vector<double>& sorted, double c) {
            auto lo = std::lower_bound(sorted.begin(), sorted.end(), c - eps);
            auto hi = std::upper_bound(sorted.begin(), sorted.end(), c + eps);
            long cnt = hi - lo;
            // trim endpoints at exactly distance eps (strict inequality)
            auto loEq = std::lower_bound(sorted.begin(), sorted.end(), c - eps);
            auto loEqEnd = std::upper_bound(sorted.begin(), sorted.end(), c - eps);
            cnt -= loEqEnd - loEq;
            auto hiEq = std::lower_bound(sorted.begin(), sorted.end(), c + eps);
            auto hiEqEnd = std::upper_bound(sorted.begin(), sorted.end(), c + eps);
            cnt -= hiEqEnd - hiEq;
            // careful not to double-subtract when eps == 0 never happens (jitter)
            return cnt - 1;  // exclude self
        };
        const long nx = std::max(0L, countWithin(xs, xv[i]));
        const long ny = std::max(0L, countWithin(ys, yv[i]));
        acc += boost::math::digamma(static_cast<double>(nx + 1)) +
               boost::math::digamma(static_cast<double>(ny + 1));
    }
    return boost::math::digamma(static_cast<double>(k)) + boost::math::digamma(static_cast<double>(n)) -
           acc / static_cast<double>(n);
}

struct KsResult {
    double statistic = 0.0;
    double pValue = 1.0;
};

// Classic two-sample Kolmogorov-Smirnov with the asymptotic tail series.
inline KsResult ks_two_sample(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::Index na = a.size(), nb = b.size();
    if (na < 1 || nb < 1) throw std::invalid_argument("ks_two_sample: empty sample");
    std::vector<double> av(a.data(), a.data() + na), bv(b.data(), b.data() + nb);
    std::sort(av.begin(), av.end());
    std::sort(bv.begin(), bv.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < av.size() && j < bv.size()) {
        double t = std::min(av[i], bv[j]);
        while (i < av.size() && av[i] <= t) ++i;
        while (j < bv.size() && bv[j] <= t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    KsResult res;
    res.statistic = d;
    const double ne = static_cast<double>(na) * nb / (na + nb);
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double p = 0.0;
    for (int kk = 1; kk <= 100; ++kk) {
        double term = 2.0 * ((kk % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * kk * kk * lambda * lambda);
        p += term;
        if (std::abs(term) < 1e-16) break;
    }
    res.pValue = std::min(1.0, std::max(0.0, p));
    return res;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace nonsens::stats
