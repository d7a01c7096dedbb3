#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"
#include "direction.hpp"
#include "smica.hpp"
#include "stats.hpp"
#include "tcl.hpp"

namespace nonsens::pipeline {

struct NonsensConfig {
    tcl::TclConfig tcl;
    smica::SmicaConfig ica;
    stats::NullMethod hsic = stats::NullMethod::GammaApprox;
    int permutations = 500;
    std::uint64_t seed = 1;
};

struct CausalVerdict {
    Decision decision = Decision::Inconclusive;
    // order: (X1,Na), (X1,Nb), (X2,Na), (X2,Nb)
    std::array<stats::IndependenceTestResult, 4> tests;
    double alpha = 0.05;
    double alphaEffective = 0.0125;
    double tclAccuracy = 0.0;
    bool weakTcl = false;
    double icaObjective = 0.0;
};

// Counting rule over the four independence tests: the causal pattern is
// exactly one failure to reject, and the observed variable in that pair is
// the cause. Anything else is Inconclusive.
inline Decision verdict_from_tests(const std::array<bool, 4>& reject) {
    int nonRejects = 0;
    int which = -1;
    for (int t = 0; t < 4; ++t)
        if (!reject[static_cast<std::size_t>(t)]) {
            ++nonRejects;
            which = t;
        }
    if (nonRejects != 1) return Decision::Inconclusive;
    return which < 2 ? Decision::X1Causes : Decision::X2Causes;
}

namespace detail {

inline SegmentedDataset standardize_dataset(const SegmentedDataset& data) {
    SegmentedDataset out = data;
    out.x = stats::standardize_columns(data.x);
    return out;
}

} // namespace detail

// Full bivariate procedure: TCL, linear unmixing of the features, then four
// HSIC tests at the Bonferroni-corrected level alpha/4.
inline CausalVerdict nonsens_bivariate(const SegmentedDataset& raw, double alpha,
                                       const NonsensConfig& cfg) {
    raw.validate();
    if (raw.d() != 2) throw std::invalid_argument("nonsens_bivariate: bivariate data expected");
    if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("nonsens_bivariate: bad alpha");

    const SegmentedDataset data = detail::standardize_dataset(raw);
    tcl::TclConfig tclCfg = cfg.tcl;
    tclCfg.seed = mix_seed(cfg.seed, 0x7c17ULL);
    const auto fx = tcl::tcl_train(data, tclCfg);
    smica::SmicaConfig icaCfg = cfg.ica;
    icaCfg.seed = mix_seed(cfg.seed, 0x1caULL);
    const auto rec = tcl::recover_disturbances(fx, data, icaCfg);

    CausalVerdict v;
    v.alpha = alpha;
    v.alphaEffective = alpha / 4.0;
    v.tclAccuracy = fx.trainAccuracy;
    v.weakTcl = fx.weakAccuracy;
    v.icaObjective = rec.model.finalObjective;

    // Pooling segments makes even truly unrelated pairs marginally dependent
    // through shared per-segment variance patterns, so each test consumes
    // within-segment standardized columns; real structural dependence survives
    // the rescaling.
    std::array<Eigen::VectorXd, 2> xCol, nCol;
    for (int c = 0; c < 2; ++c) {
        xCol[static_cast<std::size_t>(c)] =
            stats::segment_standardize(data.x.col(c), data.seg, data.numSegments);
        nCol[static_cast<std::size_t>(c)] =
            stats::segment_standardize(rec.disturbances.col(c), data.seg, data.numSegments);
    }
    std::array<bool, 4> reject{};
    for (int t = 0; t < 4; ++t) {
        const int xi = t / 2;
        const int ni = t % 2;
        v.tests[static_cast<std::size_t>(t)] = stats::hsic_test(
            xCol[static_cast<std::size_t>(xi)], nCol[static_cast<std::size_t>(ni)],
            v.alphaEffective, cfg.hsic, cfg.permutations, mix_seed(cfg.seed, 0x4e57ULL));
        reject[static_cast<std::size_t>(t)] = v.tests[static_cast<std::size_t>(t)].reject;
    }
    v.decision = verdict_from_tests(reject);
    return v;
}

// Likelihood-ratio variant: always directs (up to an exact tie).
inline direction::DirectionScore nonsens_direction(const SegmentedDataset& raw,
                                                   const NonsensConfig& cfg) {
    raw.validate();
    if (raw.d() != 2) throw std::invalid_argument("nonsens_direction: bivariate data expected");
    const SegmentedDataset data = detail::standardize_dataset(raw);
    tcl::TclConfig tclCfg = cfg.tcl;
    tclCfg.seed = mix_seed(cfg.seed, 0x7c17ULL);
    const auto fx = tcl::tcl_train(data, tclCfg);
    smica::SmicaConfig icaCfg = cfg.ica;
    icaCfg.seed = mix_seed(cfg.seed, 0x1caULL);
    const auto rec = tcl::recover_disturbances(fx, data, icaCfg);
    const auto g = direction::make_map(fx.net.trunk, rec.model);
    return direction::likelihood_ratio(g, data.x);
}

// ---------------------------------------------------------------------------
// Graphs.

enum class EdgeStatus { Absent, Directed, Undirected };

// adj(i,j) && !adj(j,i) encodes i -> j; both set encodes an undirected edge,
// so a directed 2-cycle is unrepresentable by construction.
struct Dag {
    int d = 0;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adj;

    explicit Dag(int dim = 0) : d(dim) {
        adj = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(dim, dim, false);
    }

    EdgeStatus status(int i, int j) const {
        if (adj(i, j) && adj(j, i)) return EdgeStatus::Undirected;
        if (adj(i, j)) return EdgeStatus::Directed;
        return EdgeStatus::Absent;
    }

    void setDirected(int i, int j) { adj(i, j) = true; adj(j, i) = false; }
    void setUndirected(int i, int j) { adj(i, j) = true; adj(j, i) = true; }
    void clearEdge(int i, int j) { adj(i, j) = false; adj(j, i) = false; }

    bool adjacent(int i, int j) const { return adj(i, j) || adj(j, i); }

    // cycle check over strictly directed edges
    bool directedPartAcyclic() const {
        std::vector<int> state(static_cast<std::size_t>(d), 0);
        std::vector<int> stack;
        for (int s = 0; s < d; ++s) {
            if (state[static_cast<std::size_t>(s)] != 0) continue;
            stack.push_back(s);
            std::vector<int> path;
            while (!stack.empty()) {
                int u = stack.back();
                if (state[static_cast<std::size_t>(u)] == 0) {
                    state[static_cast<std::size_t>(u)] = 1;
                    path.push_back(u);
                    for (int w = 0; w < d; ++w)
                        if (status(u, w) == EdgeStatus::Directed) {
                            if (state[static_cast<std::size_t>(w)] == 1) return false;
                            if (state[static_cast<std::size_t>(w)] == 0) stack.push_back(w);
                        }
                } else {
                    stack.pop_back();
                    if (!path.empty() && path.back() == u) {
                        state[static_cast<std::size_t>(u)] = 2;
                        path.pop_back();
                    }
                }
            }
        }
        return true;
    }
};

inline void to_json(nlohmann::json& j, const Dag& g) {
    std::vector<std::vector<bool>> adj(static_cast<std::size_t>(g.d),
                                       std::vector<bool>(static_cast<std::size_t>(g.d), false));
    std::vector<std::string> edges;
    for (int i = 0; i < g.d; ++i)
        for (int k = 0; k < g.d; ++k) {
            adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = g.adj(i, k);
            if (g.status(i, k) == EdgeStatus::Directed)
                edges.push_back("x" + std::to_string(i + 1) + " -> x" + std::to_string(k + 1));
            else if (i < k && g.status(i, k) == EdgeStatus::Undirected)
                edges.push_back("x" + std::to_string(i + 1) + " -- x" + std::to_string(k + 1));
        }
    j = nlohmann::json{{"d", g.d}, {"adjacency", adj}, {"edges", edges}};
}

inline Dag dag_from_json(const nlohmann::json& j) {
    const auto adj = j.at("adjacency").get<std::vector<std::vector<bool>>>();
    Dag g(static_cast<int>(adj.size()));
    for (int i = 0; i < g.d; ++i)
        for (int k = 0; k < g.d; ++k)
            g.adj(i, k) = adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    return g;
}

// ---------------------------------------------------------------------------
// PC skeleton + orientation (stable variant, Fisher-z CI tests, Meek R1-R3).

namespace detail {

inline double fisher_z_pvalue(const Eigen::MatrixXd& corr, Eigen::Index n, int i, int j,
                              const std::vector<int>& cond) {
    double rho;
    if (cond.empty()) {
        rho = corr(i, j);
    } else {
        const std::size_t m = cond.size() + 2;
        Eigen::MatrixXd sub(m, m);
        std::vector<int> idx{i, j};
        idx.insert(idx.end(), cond.begin(), cond.end());
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < m; ++c)
                sub(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    corr(idx[r], idx[c]);
        const Eigen::MatrixXd prec = sub.inverse();
        rho = -prec(0, 1) / std::sqrt(prec(0, 0) * prec(1, 1));
    }
    rho = std::clamp(rho, -1.0 + 1e-12, 1.0 - 1e-12);
    const double dfree = static_cast<double>(n) - static_cast<double>(cond.size()) - 3.0;
    if (dfree <= 0.0) return 1.0;
    const double z = 0.5 * std::log((1.0 + rho) / (1.0 - rho));
    const double statv = std::sqrt(dfree) * std::abs(z);
    return 2.0 * (1.0 - stats::normal_cdf(statv));
}

inline bool next_subset(std::vector<int>& pick, int setSize, int k) {
    // lexicographic k-subsets of {0..setSize-1}
    if (k == 0) return false;
    int i = k - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == setSize - k + i) --i;
    if (i < 0) return false;
    ++pick[static_cast<std::size_t>(i)];
    for (int j2 = i + 1; j2 < k; ++j2)
        pick[static_cast<std::size_t>(j2)] = pick[static_cast<std::size_t>(j2 - 1)] + 1;
    return true;
}

} // namespace detail

struct PcResult {
    Dag graph;
    // sepsets.at(i).at(j) holds the separating set that removed edge {i,j}
    std::vector<std::vector<std::vector<int>>> sepsets;
    std::vector<std::vector<bool>> separated;
};

inline PcResult pc_skeleton_orient(const Eigen::MatrixXd& x, double alpha, int maxCond = 3) {
    const int d = static_cast<int>(x.cols());
    const Eigen::Index n = x.rows();
    if (d < 2) throw std::invalid_argument("pc_skeleton_orient: need at least two variables");
    if (n < 8) throw std::invalid_argument("pc_skeleton_orient: too few samples");

    const Eigen::MatrixXd xs = stats::standardize_columns(x);
    const Eigen::MatrixXd corr = (xs.transpose() * xs) / static_cast<double>(n);

    PcResult res;
    res.graph = Dag(d);
    res.sepsets.assign(static_cast<std::size_t>(d),
                       std::vector<std::vector<int>>(static_cast<std::size_t>(d)));
    res.separated.assign(static_cast<std::size_t>(d),
                         std::vector<bool>(static_cast<std::size_t>(d), false));
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) res.graph.setUndirected(i, j);

    // skeleton (PC-stable: removals within a level use the level-start graph)
    for (int level = 0; level <= maxCond; ++level) {
        std::vector<std::pair<int, int>> toRemove;
        std::vector<std::vector<int>> neighborsSnapshot(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                if (i != j && res.graph.adjacent(i, j))
                    neighborsSnapshot[static_cast<std::size_t>(i)].push_back(j);

        for (int i = 0; i < d; ++i) {
            for (int j = i + 1; j < d; ++j) {
                if (!res.graph.adjacent(i, j)) continue;
                bool removed = false;
                for (int side = 0; side < 2 && !removed; ++side) {
                    const int a = side == 0 ? i : j;
                    const int b = side == 0 ? j : i;
                    std::vector<int> nbrs;
                    for (int v : neighborsSnapshot[static_cast<std::size_t>(a)])
                        if (v != b) nbrs.push_back(v);
                    const int m = static_cast<int>(nbrs.size());
                    if (m < level) continue;
                    std::vector<int> pick(static_cast<std::size_t>(level));
                    for (int t = 0; t < level; ++t) pick[static_cast<std::size_t>(t)] = t;
                    bool more = true;
                    while (more && !removed) {
                        std::vector<int> cond;
                        for (int t = 0; t < level; ++t)
                            cond.push_back(nbrs[static_cast<std::size_t>(pick[static_cast<std::size_t>(t)])]);
                        if (detail::fisher_z_pvalue(corr, n, i, j, cond) > alpha) {
                            toRemove.emplace_back(i, j);
                            res.sepsets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = cond;
                            res.sepsets[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = cond;
                            res.separated[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
                            res.separated[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = true;
                            removed = true;
                        }
                        if (level == 0) break;
                        more = detail::next_subset(pick, m, level);
                    }
                }
                if (level == 0 && !removed &&
                    detail::fisher_z_pvalue(corr, n, i, j, {}) > alpha) {
                    toRemove.emplace_back(i, j);
                    res.separated[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
                    res.separated[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = true;
                }
            }
        }
        for (auto [i, j] : toRemove) res.graph.clearEdge(i, j);
    }

    // v-structures: i - k - j with i,j nonadjacent and k not in sepset(i,j);
    // conflicting arrowheads cancel back to undirected
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> arrow =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(d, d, false);
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i) {
            if (i == k || !res.graph.adjacent(i, k)) continue;
            for (int j = i + 1; j < d; ++j) {
                if (j == k || !res.graph.adjacent(j, k)) continue;
                if (res.graph.adjacent(i, j)) continue;
                const auto& sep = res.sepsets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                if (std::find(sep.begin(), sep.end(), k) == sep.end()) {
                    arrow(i, k) = true;
                    arrow(j, k) = true;
                }
            }
        }
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k)
            if (arrow(i, k) && !arrow(k, i) && res.graph.status(i, k) == EdgeStatus::Undirected)
                res.graph.setDirected(i, k);

    // Meek rules R1-R3 to a fixpoint (R4 only fires with background knowledge)
    bool changed = true;
    while (changed) {
        changed = false;
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                if (res.graph.status(a, b) != EdgeStatus::Undirected) continue;
                bool direct = false;
                // R1: c -> a, a - b, c not adjacent to b
                for (int c = 0; c < d && !direct; ++c)
                    if (res.graph.status(c, a) == EdgeStatus::Directed && c != b &&
                        !res.graph.adjacent(c, b))
                        direct = true;
                // R2: a -> c -> b and a - b
                for (int c = 0; c < d && !direct; ++c)
                    if (res.graph.status(a, c) == EdgeStatus::Directed &&
                        res.graph.status(c, b) == EdgeStatus::Directed)
                        direct = true;
                // R3: a - c, a - e, c -> b, e -> b, c and e non-adjacent
                for (int c = 0; c < d && !direct; ++c) {
                    if (res.graph.status(a, c) != EdgeStatus::Undirected ||
                        res.graph.status(c, b) != EdgeStatus::Directed)
                        continue;
                    for (int e = c + 1; e < d && !direct; ++e)
                        if (res.graph.status(a, e) == EdgeStatus::Undirected &&
                            res.graph.status(e, b) == EdgeStatus::Directed &&
                            !res.graph.adjacent(c, e))
                            direct = true;
                }
                if (direct) {
                    res.graph.setDirected(a, b);
                    changed = true;
                }
            }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Hybrid multivariate procedure.

enum class BivariateEngine { FourTest, LikelihoodRatio };

struct HybridConfig {
    BivariateEngine engine = BivariateEngine::LikelihoodRatio;
    NonsensConfig nonsens;
    double pcAlpha = 0.05;
    int pcMaxCond = 3;
    // reuse one full-dimensional TCL fit for every pair instead of retraining
    // per edge; pair runs then test against the shared disturbance columns
    bool reuseTcl = false;
};

struct EdgeDecision {
    int i = 0, j = 0;
    Decision decision = Decision::Inconclusive;
    double strength = 0.0;  // |R| or the surviving test's p-value
    bool demoted = false;
    std::string error;  // nonempty when this edge's run failed
};

struct HybridResult {
    Dag graph;
    Dag pcOnly;
    std::vector<EdgeDecision> edgeRuns;
};

namespace detail {

// one directed cycle through the strictly directed part, empty if none
inline std::vector<std::pair<int, int>> find_directed_cycle(const Dag& g) {
    const int d = g.d;
    std::vector<int> state(static_cast<std::size_t>(d), 0);
    std::vector<int> parent(static_cast<std::size_t>(d), -1);
    std::vector<std::pair<int, int>> cycle;
    std::function<bool(int)> dfs = [&](int u) {
        state[static_cast<std::size_t>(u)] = 1;
        for (int w = 0; w < d; ++w) {
            if (g.status(u, w) != EdgeStatus::Directed) continue;
            if (state[static_cast<std::size_t>(w)] == 1) {
                cycle.emplace_back(u, w);
                for (int v = u; v != w; v = parent[static_cast<std::size_t>(v)])
                    cycle.emplace_back(parent[static_cast<std::size_t>(v)], v);
                return true;
            }
            if (state[static_cast<std::size_t>(w)] == 0) {
                parent[static_cast<std::size_t>(w)] = u;
                if (dfs(w)) return true;
            }
        }
        state[static_cast<std::size_t>(u)] = 2;
        return false;
    };
    for (int s = 0; s < d; ++s)
        if (state[static_cast<std::size_t>(s)] == 0 && dfs(s)) return cycle;
    return {};
}

// For a shared disturbance matrix, pick the two recovered columns aligned
// with the observed pair (i, j): strongest absolute correlation claims its
// column first, the other variable takes its best among the rest.
inline std::pair<int, int> assign_pair_columns(const Eigen::MatrixXd& x,
                                               const Eigen::MatrixXd& nHat, int i, int j) {
    const int dn = static_cast<int>(nHat.cols());
    auto absCorr = [](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
        const Eigen::VectorXd uc = u.array() - u.mean();
        const Eigen::VectorXd vc = v.array() - v.mean();
        const double den = uc.norm() * vc.norm();
        return den > 0.0 ? std::abs(uc.dot(vc)) / den : 0.0;
    };
    std::vector<double> ci(static_cast<std::size_t>(dn)), cj(static_cast<std::size_t>(dn));
    for (int k = 0; k < dn; ++k) {
        ci[static_cast<std::size_t>(k)] = absCorr(x.col(i), nHat.col(k));
        cj[static_cast<std::size_t>(k)] = absCorr(x.col(j), nHat.col(k));
    }
    auto argmaxExcluding = [dn](const std::vector<double>& c, int skip) {
        int best = -1;
        for (int k = 0; k < dn; ++k)
            if (k != skip && (best < 0 || c[static_cast<std::size_t>(k)] >
                                              c[static_cast<std::size_t>(best)]))
                best = k;
        return best;
    };
    const int ai = argmaxExcluding(ci, -1);
    const int bj = argmaxExcluding(cj, -1);
    if (ai != bj) return {ai, bj};
    if (ci[static_cast<std::size_t>(ai)] >= cj[static_cast<std::size_t>(bj)])
        return {ai, argmaxExcluding(cj, ai)};
    return {argmaxExcluding(ci, bj), bj};
}

} // namespace detail

// PC for the skeleton and compelled orientations, the bivariate engine for
// the rest. If the combined directed graph acquires a cycle, the weakest
// engine-directed edges on it are demoted back to Undirected.
inline HybridResult hybrid_multivariate(const SegmentedDataset& raw, double alpha,
                                        const HybridConfig& cfg) {
    raw.validate();
    const SegmentedDataset data = detail::standardize_dataset(raw);
    HybridResult out;
    const auto pc = pc_skeleton_orient(data.x, cfg.pcAlpha, cfg.pcMaxCond);
    out.pcOnly = pc.graph;
    out.graph = pc.graph;

    const int d = out.graph.d;

    // optional shared fit, trained at most once and only when an undirected
    // edge actually needs it
    Eigen::MatrixXd sharedN;
    std::string sharedError;
    bool sharedTried = false;
    auto ensureSharedFit = [&]() {
        if (sharedTried) return;
        sharedTried = true;
        try {
            tcl::TclConfig tclCfg = cfg.nonsens.tcl;
            tclCfg.seed = mix_seed(cfg.nonsens.seed, 0x7c17ULL);
            const auto fx = tcl::tcl_train(data, tclCfg);
            smica::SmicaConfig icaCfg = cfg.nonsens.ica;
            icaCfg.seed = mix_seed(cfg.nonsens.seed, 0x1caULL);
            sharedN = tcl::recover_disturbances(fx, data, icaCfg).disturbances;
        } catch (const std::exception& e) {
            sharedError = e.what();
        }
    };

    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            if (out.graph.status(i, j) != EdgeStatus::Undirected) continue;
            EdgeDecision ed;
            ed.i = i;
            ed.j = j;
            try {
                if (cfg.reuseTcl) {
                    ensureSharedFit();
                    if (!sharedError.empty()) throw std::runtime_error(sharedError);
                    const auto [a, b] = detail::assign_pair_columns(data.x, sharedN, i, j);
                    if (cfg.engine == BivariateEngine::FourTest) {
                        std::array<bool, 4> reject{};
                        for (int t = 0; t < 4; ++t) {
                            const int xi = t / 2 == 0 ? i : j;
                            const int ni = t % 2 == 0 ? a : b;
                            const auto r = stats::hsic_test(
                                stats::segment_standardize(data.x.col(xi), data.seg,
                                                           data.numSegments),
                                stats::segment_standardize(sharedN.col(ni), data.seg,
                                                           data.numSegments),
                                alpha / 4.0, cfg.nonsens.hsic, cfg.nonsens.permutations,
                                mix_seed(cfg.nonsens.seed, 0x4e57ULL));
                            reject[static_cast<std::size_t>(t)] = r.reject;
                            if (!r.reject) ed.strength = r.pValue;
                        }
                        ed.decision = verdict_from_tests(reject);
                    } else {
                        const double r =
                            -stats::mutual_information(data.x.col(i), sharedN.col(b)) +
                            stats::mutual_information(data.x.col(j), sharedN.col(a));
                        ed.decision = r > 0.0 ? Decision::X1Causes : Decision::X2Causes;
                        ed.strength = std::abs(r);
                    }
                } else if (cfg.engine == BivariateEngine::FourTest) {
                    const auto v = nonsens_bivariate(raw.pair(i, j), alpha, cfg.nonsens);
                    ed.decision = v.decision;
                    for (const auto& t : v.tests)
                        if (!t.reject) ed.strength = t.pValue;
                } else {
                    const auto s = nonsens_direction(raw.pair(i, j), cfg.nonsens);
                    ed.decision = s.decision;
                    ed.strength = std::abs(s.r);
                }
            } catch (const std::exception& e) {
                ed.decision = Decision::Inconclusive;
                ed.strength = 0.0;
                ed.error = e.what();
            }
            if (ed.decision == Decision::X1Causes)
                out.graph.setDirected(i, j);
            else if (ed.decision == Decision::X2Causes)
                out.graph.setDirected(j, i);
            out.edgeRuns.push_back(ed);
        }

    // acyclicity repair: demote the weakest engine-directed edge on each cycle
    while (true) {
        auto cycle = detail::find_directed_cycle(out.graph);
        if (cycle.empty()) break;
        EdgeDecision* weakest = nullptr;
        for (auto [u, w] : cycle)
            for (auto& ed : out.edgeRuns) {
                const bool matches = (ed.i == u && ed.j == w) || (ed.i == w && ed.j == u);
                if (matches && !ed.demoted &&
                    (weakest == nullptr || ed.strength < weakest->strength))
                    weakest = &ed;
            }
        if (weakest == nullptr) {
            // cycle formed purely by PC orientations; break it deterministically
            out.graph.setUndirected(cycle.front().first, cycle.front().second);
            continue;
        }
        weakest->demoted = true;
        out.graph.setUndirected(weakest->i, weakest->j);
    }
    return out;
}

inline Dag dag_from_truth(const std::vector<std::vector<bool>>& truth) {
    Dag g(static_cast<int>(truth.size()));
    for (int i = 0; i < g.d; ++i)
        for (int j = 0; j < g.d; ++j)
            if (truth[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                g.setDirected(i, j);
    return g;
}

struct DagMetrics {
    double f1 = 0.0;
    int hamming = 0;
};

// F1 over edges: an estimated edge counts once as a prediction; a directed
// edge scores 1 when the truth agrees, an undirected one scores 1 against an
// undirected truth edge and 0.5 against a directed truth edge it covers (and
// vice versa). Hamming = number of ordered pairs whose status differs, so a
// reversed edge costs 2.
inline DagMetrics dag_metrics(const Dag& est, const Dag& truth) {
    const int d = est.d;
    if (truth.d != d) throw std::invalid_argument("dag_metrics: dimension mismatch");
    DagMetrics m;
    double tp = 0.0;
    int predicted = 0;
    int actual = 0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            if (est.status(i, j) != truth.status(i, j)) ++m.hamming;
            if (i > j) continue;
            const EdgeStatus e = est.status(i, j);
            const EdgeStatus eRev = est.status(j, i);
            const EdgeStatus t = truth.status(i, j);
            const EdgeStatus tRev = truth.status(j, i);
            if (e != EdgeStatus::Absent || eRev == EdgeStatus::Directed) ++predicted;
            if (t != EdgeStatus::Absent || tRev == EdgeStatus::Directed) ++actual;
            if (e == EdgeStatus::Undirected) {
                if (t == EdgeStatus::Undirected)
                    tp += 1.0;
                else if (t == EdgeStatus::Directed || tRev == EdgeStatus::Directed)
                    tp += 0.5;
            } else if (e == EdgeStatus::Directed || eRev == EdgeStatus::Directed) {
                if (t == e && tRev == eRev)
                    tp += 1.0;
                else if (t == EdgeStatus::Undirected)
                    tp += 0.5;
            }
        }
    if (predicted == 0 || actual == 0) {
        m.f1 = 0.0;
    } else {
        const double precision = tp / predicted;
        const double recall = tp / actual;
        m.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    return m;
}

inline void to_json(nlohmann::json& j, const CausalVerdict& v) {
    nlohmann::json tests = nlohmann::json::array();
    const char* pairNames[4] = {"x1_na", "x1_nb", "x2_na", "x2_nb"};
    for (int t = 0; t < 4; ++t) {
        const auto& r = v.tests[static_cast<std::size_t>(t)];
        tests.push_back({{"pair", pairNames[t]},
                         {"statistic", r.statistic},
                         {"p_value", r.pValue},
                         {"reject", r.reject}});
    }
    j = nlohmann::json{{"decision", decision_name(v.decision)},
                       {"alpha", v.alpha},
                       {"alpha_effective", v.alphaEffective},
                       {"tcl_accuracy", v.tclAccuracy},
                       {"weak_tcl", v.weakTcl},
                       {"ica_objective", v.icaObjective},
                       {"tests", tests}};
}

} // namespace nonsens::pipeline
