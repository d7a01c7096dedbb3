#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"

namespace nonsens::datagen {

enum class SourceFamily { LaplaceVariance, OddUnnormalized };
enum class ScaleScheme { RandomScale, MonotoneScale };
enum class MixingMode { Acyclic, Cyclic };

inline std::string family_name(SourceFamily f) {
    return f == SourceFamily::LaplaceVariance ? "laplace" : "odd";
}
inline std::string scheme_name(ScaleScheme s) {
    return s == ScaleScheme::RandomScale ? "random" : "monotone";
}

struct SourcePanel {
    Eigen::MatrixXd s;        // n x d independent sources
    std::vector<int> seg;     // n labels
    int numSegments = 0;
    Eigen::MatrixXd lambdas;  // E x d modulation parameters
    SourceFamily family = SourceFamily::LaplaceVariance;
    ScaleScheme scheme = ScaleScheme::RandomScale;
};

namespace detail {

// log density (up to normalisation) -3*lam*|s| - s^2/2 for s >= 0 and
// -lam*|s| - s^2/2 for s < 0: asymmetric tails, hence skewed, with zero
// linear correlation structure. Sampled exactly by rejection from N(0,1).
inline double sample_odd(Rng& rng, double lam) {
    for (int t = 0; t < 100000; ++t) {
        const double s = rng.normal();
        const double logAccept = s >= 0.0 ? -3.0 * lam * s : lam * s;
        double u;
        do { u = rng.uniform(); } while (u <= 0.0);
        if (std::log(u) < logAccept) return s;
    }
    throw std::runtime_error("gen_sources: rejection sampler failed to accept");
}

} // namespace detail

// Piecewise-stationary independent sources. Laplace sources use lambda as the
// scale (variance 2*lambda^2); the odd family modulates tail asymmetry.
// RandomScale draws lambda_j(e) iid uniform [0.2, 2]; MonotoneScale builds a
// shared increasing profile so the modulation is strongly correlated across
// sources and increasing in the segment index.
inline SourcePanel gen_sources(int d, int numSegments, int perSegment, SourceFamily family,
                               ScaleScheme scheme, std::uint64_t seed) {
    if (numSegments < 3)
        throw std::invalid_argument(
            "gen_sources: need at least three segments (distinct conditions) for identifiability");
    if (d < 1) throw std::invalid_argument("gen_sources: d must be positive");
    if (perSegment < 2) throw std::invalid_argument("gen_sources: need at least 2 samples per segment");

    Rng rng(mix_seed(seed, 0xda7aULL));
    SourcePanel panel;
    panel.family = family;
    panel.scheme = scheme;
    panel.numSegments = numSegments;
    panel.lambdas.resize(numSegments, d);

    if (scheme == ScaleScheme::RandomScale) {
        for (int e = 0; e < numSegments; ++e)
            for (int j = 0; j < d; ++j) panel.lambdas(e, j) = rng.uniform(0.2, 2.0);
    } else {
        std::vector<double> base(static_cast<std::size_t>(numSegments));
        for (auto& v : base) v = rng.uniform(0.2, 2.0);
        std::sort(base.begin(), base.end());
        for (int j = 0; j < d; ++j) {
            std::vector<double> col(static_cast<std::size_t>(numSegments));
            for (int e = 0; e < numSegments; ++e)
                col[static_cast<std::size_t>(e)] =
                    std::clamp(base[static_cast<std::size_t>(e)] + 0.05 * rng.uniform(-1.0, 1.0),
                               0.05, 2.5);
            std::sort(col.begin(), col.end());
            for (int e = 0; e < numSegments; ++e)
                panel.lambdas(e, j) = col[static_cast<std::size_t>(e)];
        }
    }

    const Eigen::Index n = static_cast<Eigen::Index>(numSegments) * perSegment;
    panel.s.resize(n, d);
    panel.seg.resize(static_cast<std::size_t>(n));
    Eigen::Index row = 0;
    for (int e = 0; e < numSegments; ++e) {
        for (int i = 0; i < perSegment; ++i, ++row) {
            panel.seg[static_cast<std::size_t>(row)] = e;
            for (int j = 0; j < d; ++j) {
                const double lam = panel.lambdas(e, j);
                panel.s(row, j) = family == SourceFamily::LaplaceVariance
                                      ? rng.laplace(lam)
                                      : detail::sample_odd(rng, lam);
            }
        }
    }
    return panel;
}

struct RankCheck {
    bool fullRank = false;
    double conditionNumber = std::numeric_limits<double>::infinity();
};

// Identifiability requires the matrix of modulation differences
// L(e, i) = lambda_i(e) - lambda_i(1) to have full column rank.
inline RankCheck check_rank_condition(const Eigen::MatrixXd& lambdas, double tol = 1e-10) {
    if (lambdas.rows() < 2 || lambdas.cols() < 1)
        throw std::invalid_argument("check_rank_condition: need at least 2 segments");
    Eigen::MatrixXd l = lambdas.rowwise() - lambdas.row(0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(l);
    const auto& sv = svd.singularValues();
    RankCheck out;
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    out.fullRank = smax > 0.0 && smin > tol * smax;
    out.conditionNumber = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    return out;
}

struct MixResult {
    SegmentedDataset data;
    std::vector<std::vector<bool>> dag;  // dag[i][j] true when i -> j
    std::vector<Eigen::MatrixXd> layers;
    int depth = 1;
    double slope = 0.2;
    MixingMode mode = MixingMode::Acyclic;
};

// Mixing network: X = A1 * S at depth 1 (purely linear); deeper maps
// interleave leaky-ReLU (slope 0.2) between layers. Acyclic mode keeps every
// layer lower-triangular with a shared edge support, which is the ground-truth
// DAG; Cyclic mode sets all off-diagonal entries to 0.6. Layers whose
// condition number exceeds 1e6 are resampled (up to 20 attempts).
inline MixResult mix_dnn(const SourcePanel& src, int depth, MixingMode mode, double edgeProb,
                         std::uint64_t seed) {
    if (depth < 1) throw std::invalid_argument("mix_dnn: depth must be >= 1");
    if (edgeProb < 0.0 || edgeProb > 1.0) throw std::invalid_argument("mix_dnn: edgeProb in [0,1]");
    const Eigen::Index d = src.s.cols();
    Rng rng(mix_seed(seed, 0x317f9ULL));

    MixResult out;
    out.depth = depth;
    out.mode = mode;
    out.dag.assign(static_cast<std::size_t>(d), std::vector<bool>(static_cast<std::size_t>(d), false));

    std::vector<std::vector<bool>> mask(static_cast<std::size_t>(d),
                                        std::vector<bool>(static_cast<std::size_t>(d), false));
    if (mode == MixingMode::Acyclic) {
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < i; ++j)
                if (rng.uniform() < edgeProb) {
                    mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
                    out.dag[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = true;
                }
    }

    for (int l = 0; l < depth; ++l) {
        Eigen::MatrixXd a;
        bool ok = false;
        for (int attempt = 0; attempt < 20; ++attempt) {
            a = Eigen::MatrixXd::Zero(d, d);
            for (Eigen::Index i = 0; i < d; ++i) a(i, i) = rng.sign() * rng.uniform(0.5, 1.5);
            if (mode == MixingMode::Acyclic) {
                for (Eigen::Index i = 0; i < d; ++i)
                    for (Eigen::Index j = 0; j < i; ++j)
                        if (mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                            a(i, j) = rng.sign() * rng.uniform(0.5, 1.5);
            } else {
                for (Eigen::Index i = 0; i < d; ++i)
                    for (Eigen::Index j = 0; j < d; ++j)
                        if (i != j) a(i, j) = 0.6;
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
            const auto& sv = svd.singularValues();
            if (sv(sv.size() - 1) > 0.0 && sv(0) / sv(sv.size() - 1) < 1e6) {
                ok = true;
                break;
            }
        }
        if (!ok) throw std::runtime_error("mix_dnn: could not sample a well-conditioned layer");
        out.layers.push_back(std::move(a));
    }

    Eigen::MatrixXd x = src.s * out.layers[0].transpose();
    for (int l = 1; l < depth; ++l) {
        x = x.unaryExpr([s = out.slope](double v) { return v > 0.0 ? v : s * v; });
        x = x * out.layers[static_cast<std::size_t>(l)].transpose();
    }
    out.data.x = std::move(x);
    out.data.seg = src.seg;
    out.data.numSegments = src.numSegments;
    return out;
}

// Inverts the mixing map exactly (each layer is invertible, and so is the
// leaky-ReLU). Used to validate invertibility.
inline Eigen::MatrixXd reconstruct_sources(const MixResult& mix, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd cur = x;
    for (std::size_t l = mix.layers.size(); l-- > 0;) {
        cur = mix.layers[l].inverse() * cur.transpose();
        cur.transposeInPlace();
        if (l > 0)
            cur = cur.unaryExpr([s = mix.slope](double v) { return v > 0.0 ? v : v / s; });
    }
    return cur;
}

struct GroundTruth {
    std::vector<std::vector<bool>> dag;
    int depth = 1;
    std::uint64_t seed = 0;
    std::string family = "laplace";
    std::string scheme = "random";
};

inline void to_json(nlohmann::json& j, const GroundTruth& t) {
    j = nlohmann::json{{"dag", t.dag},
                       {"depth", t.depth},
                       {"seed", t.seed},
                       {"family", t.family},
                       {"scheme", t.scheme}};
}

inline void from_json(const nlohmann::json& j, GroundTruth& t) {
    j.at("dag").get_to(t.dag);
    j.at("depth").get_to(t.depth);
    j.at("seed").get_to(t.seed);
    j.at("family").get_to(t.family);
    j.at("scheme").get_to(t.scheme);
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace detail

// CSV layout: header "seg,x1,...,xd", comma separated, '.' decimal marks,
// LF line endings, UTF-8.
inline void write_csv(std::ostream& os, const SegmentedDataset& data) {
    os << "seg";
    for (Eigen::Index j = 0; j < data.d(); ++j) os << ",x" << (j + 1);
    os << "\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        os << data.seg[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < data.d(); ++j)
            os << "," << detail::format_double(data.x(i, j));
        os << "\n";
    }
}

inline void write_csv_file(const std::string& path, const SegmentedDataset& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_csv(f, data);
}

inline SegmentedDataset read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) header.push_back(tok);
    }
    if (header.size() < 2 || header[0] != "seg")
        throw std::runtime_error("csv: expected header starting with 'seg'");
    for (std::size_t j = 1; j < header.size(); ++j)
        if (header[j] != "x" + std::to_string(j))
            throw std::runtime_error("csv: expected column x" + std::to_string(j));
    const std::size_t d = header.size() - 1;

    std::vector<int> rawSeg;
    std::vector<double> vals;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::size_t col = 0;
        while (std::getline(ss, tok, ',')) {
            if (col == 0) {
                std::size_t pos = 0;
                int s = 0;
                try {
                    s = std::stoi(tok, &pos);
                } catch (const std::exception&) {
                    throw std::runtime_error("csv: bad segment label '" + tok + "'");
                }
                if (pos != tok.size()) throw std::runtime_error("csv: bad segment label '" + tok + "'");
                rawSeg.push_back(s);
            } else {
                double v = 0.0;
                auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v))
                    throw std::runtime_error("csv: bad numeric value '" + tok + "'");
                vals.push_back(v);
            }
            ++col;
        }
        if (col != d + 1) throw std::runtime_error("csv: wrong number of columns in a row");
    }
    if (rawSeg.empty()) throw std::runtime_error("csv: no data rows");

    // remap labels to a compact 0..E-1 range
    std::vector<int> distinct = rawSeg;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    SegmentedDataset data;
    data.numSegments = static_cast<int>(distinct.size());
    data.seg.resize(rawSeg.size());
    for (std::size_t i = 0; i < rawSeg.size(); ++i)
        data.seg[i] = static_cast<int>(
            std::lower_bound(distinct.begin(), distinct.end(), rawSeg[i]) - distinct.begin());
    data.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        vals.data(), static_cast<Eigen::Index>(rawSeg.size()), static_cast<Eigen::Index>(d));
    data.validate();
    return data;
}

inline SegmentedDataset read_csv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return read_csv(f);
}

} // namespace nonsens::datagen
