#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "baselines.hpp"
#include "common.hpp"
#include "datagen.hpp"
#include "pipeline.hpp"
#include "smica.hpp"

namespace nonsens::bench {

enum class BenchMode {
    Bivariate4Test,
    BivariateAssumeCause,
    NoEffect,
    Multivariate,
    LinearIcaBench,
};

inline const char* mode_name(BenchMode m) {
    switch (m) {
        case BenchMode::Bivariate4Test: return "bivariate-4test";
        case BenchMode::BivariateAssumeCause: return "assume-cause";
        case BenchMode::NoEffect: return "no-effect";
        case BenchMode::Multivariate: return "multivariate";
        case BenchMode::LinearIcaBench: return "linear-ica-bench";
    }
    return "?";
}

inline BenchMode mode_from_name(const std::string& s) {
    if (s == "bivariate-4test") return BenchMode::Bivariate4Test;
    if (s == "assume-cause") return BenchMode::BivariateAssumeCause;
    if (s == "no-effect") return BenchMode::NoEffect;
    if (s == "multivariate") return BenchMode::Multivariate;
    if (s == "linear-ica-bench") return BenchMode::LinearIcaBench;
    throw std::invalid_argument("unknown bench mode: " + s);
}

struct ExperimentConfig {
    BenchMode mode = BenchMode::Bivariate4Test;
    std::vector<int> eValues{5, 10, 20};
    std::vector<int> neValues{128, 512};
    std::vector<int> depthValues{1, 2, 3};
    int seeds = 20;
    std::uint64_t baseSeed = 1;
    std::vector<std::string> methods;  // empty = mode default
    double alpha = 0.05;
    int netDepth = 0;  // 0 = match the mixing depth
    int widthFactor = 2;
    int epochs = 300;
    int icaRestarts = 5;
    int dims = 6;            // multivariate / source-recovery width
    double edgeProb = -1.0;  // < 0 = 2/(d-1)
    std::string out = "bench";

    std::vector<std::string> methodsOrDefault() const {
        if (!methods.empty()) return methods;
        switch (mode) {
            case BenchMode::Bivariate4Test:
            case BenchMode::NoEffect:
                return {"nonsens", "lingam", "resit", "icp", "linear-ica"};
            case BenchMode::BivariateAssumeCause:
                return {"nonsens-lr", "lingam", "resit", "reci", "linear-ica"};
            case BenchMode::Multivariate:
                return {"pc-hybrid"};
            case BenchMode::LinearIcaBench:
                return {"smica", "ml-ica", "joint-diag"};
        }
        return {};
    }

    void validate() const {
        if (eValues.empty() || neValues.empty() || depthValues.empty())
            throw std::invalid_argument("config: grids must be nonempty");
        if (seeds < 1) throw std::invalid_argument("config: seeds must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("config: alpha in (0,1)");
        if (dims < 2) throw std::invalid_argument("config: dims must be >= 2");
    }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"mode", mode_name(c.mode)},
                       {"E_values", c.eValues},
                       {"n_e_values", c.neValues},
                       {"depth_values", c.depthValues},
                       {"seeds", c.seeds},
                       {"base_seed", c.baseSeed},
                       {"methods", c.methods},
                       {"alpha", c.alpha},
                       {"net_depth", c.netDepth},
                       {"width_factor", c.widthFactor},
                       {"epochs", c.epochs},
                       {"ica_restarts", c.icaRestarts},
                       {"dims", c.dims},
                       {"edge_prob", c.edgeProb},
                       {"out", c.out}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    if (j.contains("mode")) c.mode = mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("E_values")) j.at("E_values").get_to(c.eValues);
    if (j.contains("n_e_values")) j.at("n_e_values").get_to(c.neValues);
    if (j.contains("depth_values")) j.at("depth_values").get_to(c.depthValues);
    if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
    if (j.contains("base_seed")) j.at("base_seed").get_to(c.baseSeed);
    if (j.contains("methods")) j.at("methods").get_to(c.methods);
    if (j.contains("alpha")) j.at("alpha").get_to(c.alpha);
    if (j.contains("net_depth")) j.at("net_depth").get_to(c.netDepth);
    if (j.contains("width_factor")) j.at("width_factor").get_to(c.widthFactor);
    if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
    if (j.contains("ica_restarts")) j.at("ica_restarts").get_to(c.icaRestarts);
    if (j.contains("dims")) j.at("dims").get_to(c.dims);
    if (j.contains("edge_prob")) j.at("edge_prob").get_to(c.edgeProb);
    if (j.contains("out")) j.at("out").get_to(c.out);
}

// one row per method x grid cell x trial; seed reproduces the dataset alone
struct TrialRow {
    std::string method;
    std::string mode;
    int numSegments = 0;
    int perSegment = 0;
    int depth = 0;
    int trial = 0;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::string decision;  // empty for non-decision modes
    int correct = -1;      // -1 = not applicable
    int inconclusive = -1;
    double f1 = std::numeric_limits<double>::quiet_NaN();
    double hamming = std::numeric_limits<double>::quiet_NaN();
    double pcF1 = std::numeric_limits<double>::quiet_NaN();
    double pcHamming = std::numeric_limits<double>::quiet_NaN();
    double score = std::numeric_limits<double>::quiet_NaN();  // recovery correlation
    std::string error;
};

struct SummaryRow {
    std::string method;
    int numSegments = 0;
    int perSegment = 0;
    int depth = 0;
    std::string metric;
    double mean = 0.0;
    double stderrOfMean = 0.0;
    long trials = 0;
};

namespace detail {

inline std::string csv_num(double v) {
    if (std::isnan(v)) return "";
    return datagen::detail::format_double(v);
}

inline std::string csv_int_or_blank(int v) { return v < 0 ? "" : std::to_string(v); }

// greedy |correlation| matching between recovered and true sources
inline double recovery_score(const Eigen::MatrixXd& recovered, const Eigen::MatrixXd& truth) {
    const Eigen::Index d = truth.cols();
    Eigen::MatrixXd corr(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const auto a = stats::standardize(recovered.col(i));
        for (Eigen::Index j = 0; j < d; ++j) {
            const auto b = stats::standardize(truth.col(j));
            corr(i, j) = std::abs(a.values.dot(b.values) / static_cast<double>(truth.rows()));
        }
    }
    std::vector<bool> usedRow(static_cast<std::size_t>(d), false);
    std::vector<bool> usedCol(static_cast<std::size_t>(d), false);
    double total = 0.0;
    for (Eigen::Index step = 0; step < d; ++step) {
        double best = -1.0;
        Eigen::Index bi = 0, bj = 0;
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                if (!usedRow[static_cast<std::size_t>(i)] &&
                    !usedCol[static_cast<std::size_t>(j)] && corr(i, j) > best) {
                    best = corr(i, j);
                    bi = i;
                    bj = j;
                }
        usedRow[static_cast<std::size_t>(bi)] = true;
        usedCol[static_cast<std::size_t>(bj)] = true;
        total += best;
    }
    return total / static_cast<double>(d);
}

inline Eigen::MatrixXd random_invertible(int d, std::uint64_t seed) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 20; ++attempt) {
        Eigen::MatrixXd a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
        if (svd.singularValues()(d - 1) > 1e-3 * svd.singularValues()(0)) return a;
    }
    throw std::runtime_error("random_invertible: persistent ill-conditioning");
}

struct CellSpec {
    int numSegments = 0;
    int perSegment = 0;
    int depth = 0;
    int index = 0;
};

} // namespace detail

inline pipeline::NonsensConfig nonsens_config_for(const ExperimentConfig& cfg, int mixDepth,
                                                  std::uint64_t seed) {
    pipeline::NonsensConfig nc;
    nc.tcl.netDepth = cfg.netDepth > 0 ? cfg.netDepth : std::max(1, mixDepth);
    nc.tcl.widthFactor = cfg.widthFactor;
    nc.tcl.sgd.epochs = cfg.epochs;
    nc.ica.restarts = cfg.icaRestarts;
    nc.hsic = stats::NullMethod::GammaApprox;
    nc.seed = seed;
    return nc;
}

// Runs one (method, cell, trial) task. Never throws: failures land in the
// error column so a sweep survives individual bad trials.
inline TrialRow run_trial(const ExperimentConfig& cfg, const std::string& method,
                          const detail::CellSpec& cell, int trial) {
    TrialRow row;
    row.method = method;
    row.mode = mode_name(cfg.mode);
    row.numSegments = cell.numSegments;
    row.perSegment = cell.perSegment;
    row.depth = cell.depth;
    row.trial = trial;
    row.alpha = cfg.alpha;
    row.seed = mix_seed(mix_seed(cfg.baseSeed, static_cast<std::uint64_t>(cell.index)),
                        0xda7aULL, static_cast<std::uint64_t>(trial));
    try {
        if (cfg.mode == BenchMode::LinearIcaBench) {
            const auto panel =
                datagen::gen_sources(cfg.dims, cell.numSegments, cell.perSegment,
                                     datagen::SourceFamily::LaplaceVariance,
                                     datagen::ScaleScheme::MonotoneScale, row.seed);
            const Eigen::MatrixXd mixA =
                detail::random_invertible(cfg.dims, mix_seed(row.seed, 0xa1caULL));
            const Eigen::MatrixXd x = panel.s * mixA.transpose();
            Eigen::MatrixXd rec;
            if (method == "smica") {
                smica::SmicaConfig ic;
                ic.restarts = cfg.icaRestarts;
                ic.seed = mix_seed(row.seed, 0x5caULL);
                rec = smica::fit(x, panel.seg, panel.numSegments, ic).unmix(x);
            } else if (method == "ml-ica") {
                rec = smica::ml_ica_fit(x, 200, mix_seed(row.seed, 0x31caULL)).unmix(x);
            } else if (method == "joint-diag") {
                rec = smica::joint_diag_fit(x, panel.seg, panel.numSegments).unmix(x);
            } else {
                throw std::invalid_argument("unknown source-recovery method: " + method);
            }
            row.score = detail::recovery_score(rec, panel.s);
            return row;
        }

        if (cfg.mode == BenchMode::Multivariate) {
            const int d = cfg.dims;
            const double edgeProb =
                cfg.edgeProb < 0.0 ? 2.0 / static_cast<double>(d - 1) : cfg.edgeProb;
            const auto panel = datagen::gen_sources(d, cell.numSegments, cell.perSegment,
                                                    datagen::SourceFamily::LaplaceVariance,
                                                    datagen::ScaleScheme::RandomScale, row.seed);
            const auto mix = datagen::mix_dnn(panel, cell.depth, datagen::MixingMode::Acyclic,
                                              edgeProb, mix_seed(row.seed, 0x31cULL));
            // random variable relabeling so column order carries no signal
            Rng rng(mix_seed(row.seed, 0x9e9eULL));
            std::vector<int> perm(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) perm[static_cast<std::size_t>(i)] = i;
            rng.shuffle(perm);
            SegmentedDataset data;
            data.x.resize(mix.data.x.rows(), d);
            for (int i = 0; i < d; ++i)
                data.x.col(perm[static_cast<std::size_t>(i)]) = mix.data.x.col(i);
            data.seg = panel.seg;
            data.numSegments = panel.numSegments;
            pipeline::Dag truth(d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    if (mix.dag[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                        truth.setDirected(perm[static_cast<std::size_t>(i)],
                                          perm[static_cast<std::size_t>(j)]);

            if (method != "pc-hybrid")
                throw std::invalid_argument("unknown multivariate method: " + method);
            pipeline::HybridConfig hc;
            hc.engine = pipeline::BivariateEngine::LikelihoodRatio;
            hc.nonsens = nonsens_config_for(cfg, cell.depth, row.seed);
            const auto hyb = pipeline::hybrid_multivariate(data, cfg.alpha, hc);
            const auto m = pipeline::dag_metrics(hyb.graph, truth);
            const auto mPc = pipeline::dag_metrics(hyb.pcOnly, truth);
            row.f1 = m.f1;
            row.hamming = m.hamming;
            row.pcF1 = mPc.f1;
            row.pcHamming = mPc.hamming;
            return row;
        }

        // bivariate decision modes
        const bool noEffect = cfg.mode == BenchMode::NoEffect;
        const auto panel = datagen::gen_sources(2, cell.numSegments, cell.perSegment,
                                                datagen::SourceFamily::LaplaceVariance,
                                                datagen::ScaleScheme::RandomScale, row.seed);
        const auto mix = datagen::mix_dnn(
            panel, cell.depth,
            noEffect ? datagen::MixingMode::Cyclic : datagen::MixingMode::Acyclic,
            1.0, mix_seed(row.seed, 0x31cULL));
        const bool swap = !noEffect && (mix_seed(row.seed, 0x55aaULL) & 1ULL) != 0ULL;
        SegmentedDataset data;
        data.x = mix.data.x;
        if (swap) data.x.col(0).swap(data.x.col(1));
        data.seg = panel.seg;
        data.numSegments = panel.numSegments;
        const Decision truth = swap ? Decision::X2Causes : Decision::X1Causes;

        Decision decided = Decision::Inconclusive;
        baselines::BaselineConfig bc;
        bc.seed = row.seed;
        bc.ica.restarts = cfg.icaRestarts;
        if (cfg.mode == BenchMode::BivariateAssumeCause) {
            if (method == "nonsens-lr")
                decided = pipeline::nonsens_direction(
                              data, nonsens_config_for(cfg, cell.depth, row.seed))
                              .decision;
            else if (method == "lingam")
                decided = baselines::direct_lingam_assume(data, bc);
            else if (method == "resit")
                decided = baselines::resit_assume(data, bc);
            else if (method == "reci")
                decided = baselines::reci_bivariate(data).decision;
            else if (method == "linear-ica")
                decided = baselines::linear_ica_assume(data, bc).decision;
            else
                throw std::invalid_argument("unknown assume-cause method: " + method);
        } else {
            if (method == "nonsens")
                decided = pipeline::nonsens_bivariate(
                              data, cfg.alpha, nonsens_config_for(cfg, cell.depth, row.seed))
                              .decision;
            else if (method == "lingam")
                decided = baselines::direct_lingam_bivariate(data, cfg.alpha, bc).decision;
            else if (method == "resit")
                decided = baselines::resit_bivariate(data, cfg.alpha, bc).decision;
            else if (method == "icp")
                decided = baselines::icp_bivariate(data, cfg.alpha, bc).decision;
            else if (method == "linear-ica")
                decided = baselines::linear_ica_nonsens(data, cfg.alpha, bc).decision;
            else
                throw std::invalid_argument("unknown bivariate method: " + method);
        }
        row.decision = decision_name(decided);
        row.inconclusive = decided == Decision::Inconclusive ? 1 : 0;
        if (!noEffect && decided != Decision::Inconclusive)
            row.correct = decided == truth ? 1 : 0;
    } catch (const std::exception& ex) {
        row.error = ex.what();
        row.decision.clear();
        row.correct = -1;
        row.inconclusive = -1;
    }
    return row;
}

inline std::vector<TrialRow> run_bench(const ExperimentConfig& cfg, int jobs = 1) {
    cfg.validate();
    const auto methods = cfg.methodsOrDefault();
    std::vector<detail::CellSpec> cells;
    int cellIndex = 0;
    for (int e : cfg.eValues)
        for (int ne : cfg.neValues)
            for (int dep : cfg.depthValues)
                cells.push_back({e, ne, dep, cellIndex++});

    const std::size_t total = methods.size() * cells.size() * static_cast<std::size_t>(cfg.seeds);
    std::vector<TrialRow> rows(total);
    auto taskOf = [&](std::size_t t) {
        const std::size_t perMethod = cells.size() * static_cast<std::size_t>(cfg.seeds);
        const std::size_t mi = t / perMethod;
        const std::size_t rem = t % perMethod;
        const std::size_t ci = rem / static_cast<std::size_t>(cfg.seeds);
        const int trial = static_cast<int>(rem % static_cast<std::size_t>(cfg.seeds));
        rows[t] = run_trial(cfg, methods[mi], cells[ci], trial);
    };

    if (jobs <= 1) {
        for (std::size_t t = 0; t < total; ++t) taskOf(t);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t t = next.fetch_add(1);
                if (t >= total) return;
                taskOf(t);
            }
        };
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return rows;
}

inline const char* kResultsHeader =
    "method,mode,E,n_e,depth,trial,seed,alpha,decision,correct,inconclusive,"
    "f1,hamming,pc_f1,pc_hamming,score,error";

inline std::string results_csv(const std::vector<TrialRow>& rows) {
    std::string out(kResultsHeader);
    out.push_back('\n');
    for (const auto& r : rows) {
        out += r.method;
        out.push_back(',');
        out += r.mode;
        out.push_back(',');
        out += std::to_string(r.numSegments);
        out.push_back(',');
        out += std::to_string(r.perSegment);
        out.push_back(',');
        out += std::to_string(r.depth);
        out.push_back(',');
        out += std::to_string(r.trial);
        out.push_back(',');
        out += std::to_string(r.seed);
        out.push_back(',');
        out += datagen::detail::format_double(r.alpha);
        out.push_back(',');
        out += r.decision;
        out.push_back(',');
        out += detail::csv_int_or_blank(r.correct);
        out.push_back(',');
        out += detail::csv_int_or_blank(r.inconclusive);
        out.push_back(',');
        out += detail::csv_num(r.f1);
        out.push_back(',');
        out += detail::csv_num(r.hamming);
        out.push_back(',');
        out += detail::csv_num(r.pcF1);
        out.push_back(',');
        out += detail::csv_num(r.pcHamming);
        out.push_back(',');
        out += detail::csv_num(r.score);
        out.push_back(',');
        std::string err = r.error;
        for (auto& ch : err)
            if (ch == ',' || ch == '\n') ch = ';';
        out += err;
        out.push_back('\n');
    }
    return out;
}

inline std::vector<TrialRow> parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader)
        throw std::invalid_argument("results csv: unexpected header");
    std::vector<TrialRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t pos = 0;
        while (true) {
            const std::size_t c = line.find(',', pos);
            if (c == std::string::npos) {
                f.push_back(line.substr(pos));
                break;
            }
            f.push_back(line.substr(pos, c - pos));
            pos = c + 1;
        }
        if (f.size() != 17) throw std::invalid_argument("results csv: bad column count");
        TrialRow r;
        r.method = f[0];
        r.mode = f[1];
        r.numSegments = std::stoi(f[2]);
        r.perSegment = std::stoi(f[3]);
        r.depth = std::stoi(f[4]);
        r.trial = std::stoi(f[5]);
        r.seed = std::stoull(f[6]);
        r.alpha = std::stod(f[7]);
        r.decision = f[8];
        r.correct = f[9].empty() ? -1 : std::stoi(f[9]);
        r.inconclusive = f[10].empty() ? -1 : std::stoi(f[10]);
        auto num = [](const std::string& s) {
            return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
        };
        r.f1 = num(f[11]);
        r.hamming = num(f[12]);
        r.pcF1 = num(f[13]);
        r.pcHamming = num(f[14]);
        r.score = num(f[15]);
        r.error = f[16];
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace detail {

struct Acc {
    double sum = 0.0, sumSq = 0.0;
    long n = 0;
    void add(double v) {
        sum += v;
        sumSq += v * v;
        ++n;
    }
    double mean() const { return n > 0 ? sum / static_cast<double>(n) : 0.0; }
    double stderrOfMean() const {
        if (n < 2) return 0.0;
        const double m = mean();
        double var = (sumSq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
        if (var < 0.0) var = 0.0;
        return std::sqrt(var / static_cast<double>(n));
    }
};

} // namespace detail

// Aggregates raw rows; everything here is recomputable from the results CSV.
inline std::vector<SummaryRow> summarize(const std::vector<TrialRow>& rows) {
    std::vector<SummaryRow> out;
    // preserve first-appearance order of (method, cell)
    std::vector<std::tuple<std::string, int, int, int>> keys;
    for (const auto& r : rows) {
        const auto key = std::make_tuple(r.method, r.numSegments, r.perSegment, r.depth);
        bool seen = false;
        for (const auto& k : keys)
            if (k == key) {
                seen = true;
                break;
            }
        if (!seen) keys.push_back(key);
    }
    for (const auto& key : keys) {
        detail::Acc correctDecided, correctAll, inconclusive, errors, f1, hamming, pcF1,
            pcHamming, score;
        std::string mode;
        double alpha = 0.05;
        for (const auto& r : rows) {
            if (std::make_tuple(r.method, r.numSegments, r.perSegment, r.depth) != key) continue;
            mode = r.mode;
            alpha = r.alpha;
            errors.add(r.error.empty() ? 0.0 : 1.0);
            if (!r.error.empty()) continue;
            if (r.inconclusive >= 0) inconclusive.add(r.inconclusive);
            if (r.correct >= 0) correctDecided.add(r.correct);
            if (r.inconclusive >= 0)
                correctAll.add(r.correct == 1 ? 1.0 : 0.0);
            if (!std::isnan(r.f1)) f1.add(r.f1);
            if (!std::isnan(r.hamming)) hamming.add(r.hamming);
            if (!std::isnan(r.pcF1)) pcF1.add(r.pcF1);
            if (!std::isnan(r.pcHamming)) pcHamming.add(r.pcHamming);
            if (!std::isnan(r.score)) score.add(r.score);
        }
        const auto& [method, e, ne, dep] = key;
        auto push = [&](const std::string& metric, const detail::Acc& a) {
            if (a.n == 0) return;
            out.push_back({method, e, ne, dep, metric, a.mean(), a.stderrOfMean(), a.n});
        };
        if (mode == "no-effect") {
            push("inconclusive_rate", inconclusive);
        } else if (mode == "multivariate") {
            push("f1", f1);
            push("hamming", hamming);
            push("pc_f1", pcF1);
            push("pc_hamming", pcHamming);
        } else if (mode == "linear-ica-bench") {
            push("recovery_corr", score);
        } else {
            push("accuracy", correctDecided);
            push("accuracy_all", correctAll);
            push("inconclusive_rate", inconclusive);
        }
        push("error_rate", errors);
        (void)alpha;
    }
    // theoretical true-negative reference for the no-effect mode
    if (!rows.empty() && rows.front().mode == "no-effect") {
        std::vector<std::tuple<int, int, int>> cells;
        for (const auto& r : rows) {
            const auto c = std::make_tuple(r.numSegments, r.perSegment, r.depth);
            bool seen = false;
            for (const auto& k : cells)
                if (k == c) {
                    seen = true;
                    break;
                }
            if (!seen) cells.push_back(c);
        }
        for (const auto& [e, ne, dep] : cells)
            out.push_back({"reference", e, ne, dep, "inconclusive_rate",
                           1.0 - rows.front().alpha, 0.0, 0});
    }
    return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "method,E,n_e,depth,metric,mean,stderr,trials\n";
    for (const auto& r : rows) {
        out += r.method;
        out.push_back(',');
        out += std::to_string(r.numSegments);
        out.push_back(',');
        out += std::to_string(r.perSegment);
        out.push_back(',');
        out += std::to_string(r.depth);
        out.push_back(',');
        out += r.metric;
        out.push_back(',');
        out += datagen::detail::format_double(r.mean);
        out.push_back(',');
        out += datagen::detail::format_double(r.stderrOfMean);
        out.push_back(',');
        out += std::to_string(r.trials);
        out.push_back('\n');
    }
    return out;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << content;
    if (!f) throw std::runtime_error("write failed: " + path);
}

} // namespace nonsens::bench
