#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nonsens {

// SplitMix64 step; used to derive independent sub-seeds from a base seed so
// that parallel trials stay reproducible regardless of scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(base ^ splitmix64(a + 0x100 + splitmix64(b + 0x9e00)));
}

// Deterministic RNG with hand-rolled transforms. The standard distribution
// objects are implementation-defined, which would make outputs depend on the
// standard library; raw xoshiro-free mt19937_64 bits plus explicit transforms
// keep every byte reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x8f1bbcdcu)) {
        if (state_ == 0) state_ = 0x4d595df4d0f33173ULL;
    }

    std::uint64_t next_u64() {
        // xorshift64* core
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dULL;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // Lemire-style rejection to unbias
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Box-Muller, stateless across calls (no cached spare)
    double normal() {
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Laplace(0, b) via inverse CDF
    double laplace(double b) {
        double u = uniform() - 0.5;
        double s = u < 0.0 ? -1.0 : 1.0;
        return -b * s * std::log1p(-2.0 * std::abs(u));
    }

    double sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Observations grouped by experimental condition. Labels are compact
// (0..numSegments-1) and every segment must be nonempty.
struct SegmentedDataset {
    Eigen::MatrixXd x;       // n x d
    std::vector<int> seg;    // n labels in 0..numSegments-1
    int numSegments = 0;

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index d() const { return x.cols(); }

    void validate() const {
        if (x.rows() != static_cast<Eigen::Index>(seg.size()))
            throw std::invalid_argument("dataset: label count does not match row count");
        if (numSegments < 1) throw std::invalid_argument("dataset: no segments");
        std::vector<int> counts(static_cast<std::size_t>(numSegments), 0);
        for (int s : seg) {
            if (s < 0 || s >= numSegments)
                throw std::invalid_argument("dataset: segment label out of range");
            counts[static_cast<std::size_t>(s)]++;
        }
        for (int c : counts)
            if (c == 0) throw std::invalid_argument("dataset: empty segment");
        if (!x.allFinite()) throw std::invalid_argument("dataset: non-finite values");
    }

    std::vector<Eigen::Index> segmentRows(int e) const {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(seg.size()); ++i)
            if (seg[static_cast<std::size_t>(i)] == e) rows.push_back(i);
        return rows;
    }

    // dataset restricted to two columns, labels shared
    SegmentedDataset pair(Eigen::Index a, Eigen::Index b) const {
        SegmentedDataset out;
        out.x.resize(x.rows(), 2);
        out.x.col(0) = x.col(a);
        out.x.col(1) = x.col(b);
        out.seg = seg;
        out.numSegments = numSegments;
        return out;
    }
};

// Verdict of a bivariate cause-effect analysis.
enum class Decision { X1Causes, X2Causes, Inconclusive };

inline std::string decision_name(Decision d) {
    switch (d) {
        case Decision::X1Causes: return "x1->x2";
        case Decision::X2Causes: return "x2->x1";
        default: return "inconclusive";
    }
}

inline double mean_of(const Eigen::VectorXd& v) { return v.mean(); }

// population variance (divide by n)
inline double pop_variance(const Eigen::VectorXd& v) {
    double m = v.mean();
    return (v.array() - m).square().mean();
}

} // namespace nonsens
