#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"

namespace nonsens::smica {

// Sufficient statistic q of the modulated source model
// log p_e(s) = lambda_j(e) * q_j(s) - log Z. Both families are negative and
// concave in |s| so nonnegative lambdas give integrable densities; LogCosh is
// the smooth default, SmoothAbs the |s| surrogate sqrt(s^2 + eps).
enum class QFamily { LogCosh, SmoothAbs };

constexpr double kSmoothAbsEps = 1e-4;

inline double q_val(QFamily f, double s) {
    if (f == QFamily::LogCosh) {
        const double a = std::abs(s);
        return -(a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0));  // -log cosh
    }
    return -std::sqrt(s * s + kSmoothAbsEps);
}

inline double q_d1(QFamily f, double s) {
    if (f == QFamily::LogCosh) return -std::tanh(s);
    return -s / std::sqrt(s * s + kSmoothAbsEps);
}

inline double q_d2(QFamily f, double s) {
    if (f == QFamily::LogCosh) {
        const double t = std::tanh(s);
        return t * t - 1.0;
    }
    const double r = s * s + kSmoothAbsEps;
    return -kSmoothAbsEps / (r * std::sqrt(r));
}

inline double q_d3(QFamily f, double s) {
    if (f == QFamily::LogCosh) {
        const double t = std::tanh(s);
        return 2.0 * t * (1.0 - t * t);
    }
    const double r = s * s + kSmoothAbsEps;
    return 3.0 * kSmoothAbsEps * s / (r * r * std::sqrt(r));
}

struct SmicaConfig {
    QFamily family = QFamily::LogCosh;
    int maxIter = 400;
    int restarts = 5;
    double initialStep = 1.0;
    double tol = 1e-12;
    double ridge = 1e-8;
    std::uint64_t seed = 1;
};

// Linear unmixing estimated in whitened coordinates. `w` has unit-norm rows
// (this is where the scale indeterminacy is fixed); the whitening transform is
// kept alongside so the model can be applied to raw data. effectiveW() is the
// composed map that acts on (z - mean).
struct UnmixingModel {
    Eigen::MatrixXd w;           // d x d, unit rows, whitened space
    Eigen::MatrixXd whitener;    // d x d
    Eigen::VectorXd mean;        // d
    Eigen::MatrixXd lambdas;     // E x d, nonnegative
    QFamily family = QFamily::LogCosh;
    double finalObjective = 0.0;
    std::vector<double> objectiveHistory;

    Eigen::MatrixXd effectiveW() const { return w * whitener; }

    Eigen::MatrixXd unmix(const Eigen::MatrixXd& z) const {
        return (z.rowwise() - mean.transpose()) * effectiveW().transpose();
    }
};

namespace detail {

struct SegmentIndex {
    std::vector<std::vector<Eigen::Index>> rows;  // per segment
};

inline SegmentIndex index_segments(const std::vector<int>& seg, int numSegments) {
    SegmentIndex idx;
    idx.rows.resize(static_cast<std::size_t>(numSegments));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(seg.size()); ++i) {
        int e = seg[static_cast<std::size_t>(i)];
        if (e < 0 || e >= numSegments) throw std::invalid_argument("smica: label out of range");
        idx.rows[static_cast<std::size_t>(e)].push_back(i);
    }
    for (const auto& r : idx.rows)
        if (r.size() < 2) throw std::invalid_argument("smica: segment with fewer than 2 samples");
    return idx;
}

inline Eigen::MatrixXd rows_of(const Eigen::MatrixXd& z, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), z.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = z.row(rows[i]);
    return out;
}

} // namespace detail

// Score-matching objective of the modulated model, summed over segments:
//   J = sum_e [ lambda(e)' * mean_e q''(u) + 1/2 lambda(e)' (W W' o m_e) lambda(e) ]
// with u = Z w_j and m_e(j,k) = mean_e[q'(u_j) q'(u_k)].
inline double sm_objective(const Eigen::MatrixXd& z, const std::vector<int>& seg, int numSegments,
                           const Eigen::MatrixXd& w, const Eigen::MatrixXd& lambdas, QFamily family) {
    if (z.cols() != w.cols() || w.rows() != lambdas.cols() ||
        lambdas.rows() != static_cast<Eigen::Index>(numSegments))
        throw std::invalid_argument("sm_objective: shape mismatch");
    auto idx = detail::index_segments(seg, numSegments);
    const Eigen::MatrixXd gram = w * w.transpose();
    double j = 0.0;
    for (int e = 0; e < numSegments; ++e) {
        const Eigen::MatrixXd ze = detail::rows_of(z, idx.rows[static_cast<std::size_t>(e)]);
        const Eigen::MatrixXd u = ze * w.transpose();
        const Eigen::MatrixXd p = u.unaryExpr([family](double s) { return q_d1(family, s); });
        const Eigen::MatrixXd s2 = u.unaryExpr([family](double s) { return q_d2(family, s); });
        const Eigen::VectorXd lam = lambdas.row(e).transpose();
        const double ne = static_cast<double>(ze.rows());
        const Eigen::VectorXd bvec = s2.colwise().mean().transpose();
        const Eigen::MatrixXd m = (p.transpose() * p) / ne;
        j += lam.dot(bvec) + 0.5 * lam.dot((gram.cwiseProduct(m)) * lam);
    }
    return j;
}

// Analytic gradient of sm_objective with respect to W (same layout as W).
inline Eigen::MatrixXd sm_grad_w(const Eigen::MatrixXd& z, const std::vector<int>& seg,
                                 int numSegments, const Eigen::MatrixXd& w,
                                 const Eigen::MatrixXd& lambdas, QFamily family) {
    auto idx = detail::index_segments(seg, numSegments);
    const Eigen::MatrixXd gram = w * w.transpose();
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(w.rows(), w.cols());
    for (int e = 0; e < numSegments; ++e) {
        const Eigen::MatrixXd ze = detail::rows_of(z, idx.rows[static_cast<std::size_t>(e)]);
        const Eigen::MatrixXd u = ze * w.transpose();
        const Eigen::MatrixXd p = u.unaryExpr([family](double s) { return q_d1(family, s); });
        const Eigen::MatrixXd s2 = u.unaryExpr([family](double s) { return q_d2(family, s); });
        const Eigen::MatrixXd t3 = u.unaryExpr([family](double s) { return q_d3(family, s); });
        const Eigen::VectorXd lam = lambdas.row(e).transpose();
        const double ne = static_cast<double>(ze.rows());
        const Eigen::MatrixXd m = (p.transpose() * p) / ne;
        // data-dependent parts: q''' and the cross term q''(u_r) sum_k ...
        const Eigen::MatrixXd inner = p * lam.asDiagonal() * gram;  // n x d
        const Eigen::MatrixXd c = s2.cwiseProduct(inner);
        grad += lam.asDiagonal() * ((t3 + c).transpose() * ze) / ne;
        grad += lam.asDiagonal() * m * lam.asDiagonal() * w;
    }
    return grad;
}

namespace detail {

// Nonnegative solution of min_l b'l + 1/2 l'Ml (Lawson-Hanson active set).
// The unconstrained solution is -M^{-1} b; coordinates pinned at zero satisfy
// the KKT conditions, which is what the perturbation probes in the tests see.
inline Eigen::VectorXd nnls_quadratic(const Eigen::MatrixXd& m, const Eigen::VectorXd& b) {
    const Eigen::Index d = b.size();
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(d);
    std::vector<bool> free(static_cast<std::size_t>(d), false);
    for (int guard = 0; guard < 8 * static_cast<int>(d) + 16; ++guard) {
        Eigen::VectorXd gradv = b + m * lam;
        int best = -1;
        double bestVal = -1e-12;
        for (Eigen::Index i = 0; i < d; ++i)
            if (!free[static_cast<std::size_t>(i)] && -gradv[i] > bestVal) {
                bestVal = -gradv[i];
                best = static_cast<int>(i);
            }
        if (best < 0) break;
        free[static_cast<std::size_t>(best)] = true;
        // inner loop: solve on the free set, push blocked coordinates back
        for (int inner = 0; inner < 8 * static_cast<int>(d) + 16; ++inner) {
            std::vector<Eigen::Index> f;
            for (Eigen::Index i = 0; i < d; ++i)
                if (free[static_cast<std::size_t>(i)]) f.push_back(i);
            if (f.empty()) break;
            Eigen::MatrixXd mf(f.size(), f.size());
            Eigen::VectorXd bf(f.size());
            for (std::size_t r = 0; r < f.size(); ++r) {
                bf[static_cast<Eigen::Index>(r)] = b[f[r]];
                for (std::size_t c2 = 0; c2 < f.size(); ++c2)
                    mf(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c2)) = m(f[r], f[c2]);
            }
            Eigen::VectorXd zf = mf.ldlt().solve(-bf);
            bool ok = true;
            for (Eigen::Index i = 0; i < zf.size(); ++i)
                if (zf[i] <= 0.0) { ok = false; break; }
            if (ok) {
                lam.setZero();
                for (std::size_t r = 0; r < f.size(); ++r) lam[f[r]] = zf[static_cast<Eigen::Index>(r)];
                break;
            }
            double alpha = 1.0;
            for (std::size_t r = 0; r < f.size(); ++r) {
                const double lf = lam[f[r]];
                const double zv = zf[static_cast<Eigen::Index>(r)];
                if (zv <= 0.0 && lf - zv > 0.0) alpha = std::min(alpha, lf / (lf - zv));
            }
            for (std::size_t r = 0; r < f.size(); ++r) {
                lam[f[r]] += alpha * (zf[static_cast<Eigen::Index>(r)] - lam[f[r]]);
                if (lam[f[r]] <= 1e-14) {
                    lam[f[r]] = 0.0;
                    free[static_cast<std::size_t>(f[r])] = false;
                }
            }
        }
    }
    return lam.cwiseMax(0.0);
}

} // namespace detail

// Per-segment minimiser of the objective over lambda >= 0 at fixed W. The
// stationarity system is M(e) lambda = -b(e) with M(e) = (W W' o m_e) + ridge I
// and b(e) = mean_e q''(u); negative coordinates end up clamped at zero via
// the active-set solve.
inline Eigen::MatrixXd lambda_closed_form(const Eigen::MatrixXd& z, const std::vector<int>& seg,
                                          int numSegments, const Eigen::MatrixXd& w, QFamily family,
                                          double ridge = 1e-8) {
    auto idx = detail::index_segments(seg, numSegments);
    const Eigen::MatrixXd gram = w * w.transpose();
    const Eigen::Index d = w.rows();
    Eigen::MatrixXd lambdas(numSegments, d);
    for (int e = 0; e < numSegments; ++e) {
        const Eigen::MatrixXd ze = detail::rows_of(z, idx.rows[static_cast<std::size_t>(e)]);
        const Eigen::MatrixXd u = ze * w.transpose();
        const Eigen::MatrixXd p = u.unaryExpr([family](double s) { return q_d1(family, s); });
        const Eigen::MatrixXd s2 = u.unaryExpr([family](double s) { return q_d2(family, s); });
        const double ne = static_cast<double>(ze.rows());
        const Eigen::MatrixXd m =
            gram.cwiseProduct((p.transpose() * p) / ne) + ridge * Eigen::MatrixXd::Identity(d, d);
        const Eigen::VectorXd b = s2.colwise().mean().transpose();
        lambdas.row(e) = detail::nnls_quadratic(m, b).transpose();
    }
    return lambdas;
}

namespace detail {

inline Eigen::MatrixXd random_orthogonal(Eigen::Index d, Rng& rng) {
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    return q.transpose();
}

inline void renormalize_rows(Eigen::MatrixXd& w) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const double nrm = w.row(i).norm();
        if (nrm <= 0.0) throw std::runtime_error("smica: zero row in unmixing matrix");
        w.row(i) /= nrm;
    }
}

struct Whitening {
    Eigen::MatrixXd transform;
    Eigen::VectorXd mean;
};

inline Whitening whiten(const Eigen::MatrixXd& z) {
    Whitening wh;
    wh.mean = z.colwise().mean().transpose();
    Eigen::MatrixXd centered = z.rowwise() - wh.mean.transpose();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(z.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() <= 1e-12 * std::max(1e-300, ev.maxCoeff()))
        throw std::runtime_error("smica: degenerate input (near-constant direction)");
    // canonical eigenvector signs: largest-magnitude entry positive, so the
    // whitened coordinates do not depend on solver sign choices
    Eigen::MatrixXd vec = es.eigenvectors();
    for (Eigen::Index c = 0; c < vec.cols(); ++c) {
        Eigen::Index imax = 0;
        vec.col(c).cwiseAbs().maxCoeff(&imax);
        if (vec(imax, c) < 0.0) vec.col(c) = -vec.col(c);
    }
    wh.transform = ev.cwiseSqrt().cwiseInverse().asDiagonal() * vec.transpose();
    return wh;
}

} // namespace detail

// Block descent on the score-matching objective: closed-form nonnegative
// lambda refits alternate with backtracking projected gradient steps on W
// (rows renormalised after every trial step), so the recorded objective is
// non-increasing by construction. Best of `restarts` random orthogonal
// initialisations wins by final objective.
inline UnmixingModel fit(const Eigen::MatrixXd& z, const std::vector<int>& seg, int numSegments,
                         const SmicaConfig& cfg = {}) {
    if (z.rows() < z.cols() + 1) throw std::invalid_argument("smica: too few samples");
    if (numSegments < 1) throw std::invalid_argument("smica: need at least one segment");
    detail::index_segments(seg, numSegments);

    const auto wh = detail::whiten(z);
    const Eigen::MatrixXd zw =
        (z.rowwise() - wh.mean.transpose()) * wh.transform.transpose();
    const Eigen::Index d = z.cols();

    UnmixingModel best;
    bool haveBest = false;
    for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
        Rng rng(mix_seed(cfg.seed, 0x51a3ULL, static_cast<std::uint64_t>(r)));
        Eigen::MatrixXd w = detail::random_orthogonal(d, rng);
        Eigen::MatrixXd lambdas =
            lambda_closed_form(zw, seg, numSegments, w, cfg.family, cfg.ridge);
        double obj = sm_objective(zw, seg, numSegments, w, lambdas, cfg.family);
        std::vector<double> history{obj};
        double step = cfg.initialStep;
        for (int iter = 0; iter < cfg.maxIter; ++iter) {
            Eigen::MatrixXd grad = sm_grad_w(zw, seg, numSegments, w, lambdas, cfg.family);
            // tangential component w.r.t. the unit-row constraint
            for (Eigen::Index i = 0; i < d; ++i)
                grad.row(i) -= grad.row(i).dot(w.row(i)) * w.row(i);
            const double gnorm = grad.norm();
            if (gnorm < 1e-14) break;
            double eta = step;
            bool moved = false;
            for (int bt = 0; bt < 40; ++bt) {
                Eigen::MatrixXd wTry = w - eta * grad;
                detail::renormalize_rows(wTry);
                const double objTry =
                    sm_objective(zw, seg, numSegments, wTry, lambdas, cfg.family);
                if (objTry < obj) {
                    w = std::move(wTry);
                    obj = objTry;
                    step = std::min(cfg.initialStep, eta * 2.0);
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if (!moved) break;
            lambdas = lambda_closed_form(zw, seg, numSegments, w, cfg.family, cfg.ridge);
            const double objNew = sm_objective(zw, seg, numSegments, w, lambdas, cfg.family);
            // the lambda refit minimises over a feasible set containing the
            // previous lambdas, so objNew <= obj up to solver tolerance
            history.push_back(std::min(objNew, obj));
            const double drop = obj - objNew;
            obj = std::min(objNew, obj);
            if (drop >= 0.0 && drop < cfg.tol * (1.0 + std::abs(obj))) break;
        }
        if (std::abs(w.determinant()) <= 1e-12) continue;
        if (!haveBest || obj < best.finalObjective) {
            best.w = w;
            best.whitener = wh.transform;
            best.mean = wh.mean;
            best.lambdas = lambdas;
            best.family = cfg.family;
            best.finalObjective = obj;
            best.objectiveHistory = std::move(history);
            haveBest = true;
        }
    }
    if (!haveBest) throw std::runtime_error("smica: all restarts produced singular unmixings");
    return best;
}

// ---------------------------------------------------------------------------
// Comparison estimators used by the benchmarks.

struct LinearIcaModel {
    Eigen::MatrixXd w;         // rotation in whitened space
    Eigen::MatrixXd whitener;
    Eigen::VectorXd mean;
    double objective = 0.0;

    Eigen::MatrixXd effectiveW() const { return w * whitener; }
    Eigen::MatrixXd unmix(const Eigen::MatrixXd& z) const {
        return (z.rowwise() - mean.transpose()) * effectiveW().transpose();
    }
};

// Classic fixed-point maximum-likelihood ICA (log-cosh score, symmetric
// decorrelation on whitened data). Serves as the stationary-ICA baseline.
inline LinearIcaModel ml_ica_fit(const Eigen::MatrixXd& z, int maxIter = 200,
                                 std::uint64_t seed = 1) {
    const auto wh = detail::whiten(z);
    const Eigen::MatrixXd zw = (z.rowwise() - wh.mean.transpose()) * wh.transform.transpose();
    const Eigen::Index d = z.cols();

    auto decorrelate = [](const Eigen::MatrixXd& w) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
        return Eigen::MatrixXd(es.eigenvectors() *
                               es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                               es.eigenvectors().transpose() * w);
    };

    LinearIcaModel model;
    model.whitener = wh.transform;
    model.mean = wh.mean;
    double bestObj = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 3; ++r) {
        Rng rng(mix_seed(seed, 0xfa57ULL, static_cast<std::uint64_t>(r)));
        Eigen::MatrixXd w = detail::random_orthogonal(d, rng);
        for (int iter = 0; iter < maxIter; ++iter) {
            const Eigen::MatrixXd u = zw * w.transpose();
            const Eigen::MatrixXd t = u.array().tanh();
            Eigen::MatrixXd wNew(d, d);
            for (Eigen::Index j = 0; j < d; ++j) {
                const Eigen::RowVectorXd ez =
                    (zw.array().colwise() * t.col(j).array()).matrix().colwise().mean();
                const double eg = (1.0 - t.col(j).array().square()).mean();
                wNew.row(j) = ez - eg * w.row(j);
            }
            wNew = decorrelate(wNew);
            const double delta = 1.0 - (wNew * w.transpose()).diagonal().cwiseAbs().minCoeff();
            w = wNew;
            if (delta < 1e-10) break;
        }
        const Eigen::MatrixXd u = zw * w.transpose();
        // per-sample negative log-likelihood up to constants, for picking
        // among restarts
        const double obj = u.array().abs().unaryExpr([](double a) {
            return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
        }).colwise().mean().sum();
        if (obj < bestObj) {
            bestObj = obj;
            model.w = w;
            model.objective = obj;
        }
    }
    return model;
}

// Covariance-only surrogate: orthogonal joint diagonalisation of per-segment
// covariances by Jacobi sweeps. Captures variance nonstationarity and nothing
// else, which is exactly the contrast the benchmarks draw against.
inline LinearIcaModel joint_diag_fit(const Eigen::MatrixXd& z, const std::vector<int>& seg,
                                     int numSegments) {
    auto idx = detail::index_segments(seg, numSegments);
    const auto wh = detail::whiten(z);
    const Eigen::MatrixXd zw = (z.rowwise() - wh.mean.transpose()) * wh.transform.transpose();
    const Eigen::Index d = z.cols();

    std::vector<Eigen::MatrixXd> covs;
    covs.reserve(static_cast<std::size_t>(numSegments));
    for (int e = 0; e < numSegments; ++e) {
        const Eigen::MatrixXd ze = detail::rows_of(zw, idx.rows[static_cast<std::size_t>(e)]);
        Eigen::MatrixXd centered = ze.rowwise() - ze.colwise().mean();
        covs.push_back((centered.transpose() * centered) / static_cast<double>(ze.rows()));
    }

    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d, d);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double maxRot = 0.0;
        for (Eigen::Index p = 0; p < d; ++p) {
            for (Eigen::Index r = p + 1; r < d; ++r) {
                double g11 = 0.0, g12 = 0.0, g22 = 0.0;
                for (const auto& c : covs) {
                    const double a = c(p, p) - c(r, r);
                    const double b = 2.0 * c(p, r);
                    g11 += a * a;
                    g12 += a * b;
                    g22 += b * b;
                }
                const double half = (g11 - g22) / 2.0;
                const double disc = std::sqrt(half * half + g12 * g12);
                double vx = half + disc, vy = g12;
                const double nrm = std::hypot(vx, vy);
                if (nrm < 1e-300) continue;
                vx /= nrm;
                vy /= nrm;
                if (vx < 0.0) { vx = -vx; vy = -vy; }
                const double ct = std::sqrt((1.0 + vx) / 2.0);
                const double st = vy / (2.0 * ct);
                if (std::abs(st) < 1e-10) continue;
                maxRot = std::max(maxRot, std::abs(st));
                Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(d, d);
                rot(p, p) = ct; rot(r, r) = ct;
                rot(p, r) = -st; rot(r, p) = st;
                for (auto& c : covs) c = rot.transpose() * c * rot;
                q = q * rot;
            }
        }
        if (maxRot < 1e-9) break;
    }

    LinearIcaModel model;
    model.w = q.transpose();
    model.whitener = wh.transform;
    model.mean = wh.mean;
    double off = 0.0;
    for (const auto& c : covs) off += (c - Eigen::MatrixXd(c.diagonal().asDiagonal())).squaredNorm();
    model.objective = off;
    return model;
}

inline void to_json(nlohmann::json& j, const UnmixingModel& m) {
    const Eigen::MatrixXd eff = m.effectiveW();
    std::vector<double> w(eff.size());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), eff.rows(), eff.cols()) = eff;
    std::vector<double> lam(m.lambdas.size());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        lam.data(), m.lambdas.rows(), m.lambdas.cols()) = m.lambdas;
    j = nlohmann::json{{"d", eff.rows()},
                       {"w", w},
                       {"mean", std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size())},
                       {"segments", m.lambdas.rows()},
                       {"lambdas", lam},
                       {"family", m.family == QFamily::LogCosh ? "logcosh" : "smoothabs"},
                       {"objective", m.finalObjective}};
}

} // namespace nonsens::smica
