#include <CLI11.hpp>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>

#include <nonsens/baselines.hpp>
#include <nonsens/bench.hpp>
#include <nonsens/common.hpp>
#include <nonsens/datagen.hpp>
#include <nonsens/direction.hpp>
#include <nonsens/pipeline.hpp>

namespace {

constexpr int kExitBadInput = 2;   // malformed CSV / missing file
constexpr int kExitMethodFail = 3; // method raised during discovery

struct GenArgs {
    int d = 2;
    int numSegments = 10;
    int perSegment = 512;
    int depth = 1;
    std::string mode = "acyclic";
    std::string family = "laplace";
    std::string scheme = "random";
    double edgeProb = -1.0;
    std::uint64_t seed = 1;
    std::string out = "dataset";
};

int run_gen(const GenArgs& a) {
    try {
        const auto family = a.family == "odd" ? nonsens::datagen::SourceFamily::OddUnnormalized
                                              : nonsens::datagen::SourceFamily::LaplaceVariance;
        const auto scheme = a.scheme == "monotone" ? nonsens::datagen::ScaleScheme::MonotoneScale
                                                   : nonsens::datagen::ScaleScheme::RandomScale;
        const auto mode = a.mode == "cyclic" ? nonsens::datagen::MixingMode::Cyclic
                                             : nonsens::datagen::MixingMode::Acyclic;
        const double edgeProb =
            a.edgeProb < 0.0
                ? (a.d == 2 ? 1.0 : 2.0 / static_cast<double>(a.d - 1))
                : a.edgeProb;
        const auto panel =
            nonsens::datagen::gen_sources(a.d, a.numSegments, a.perSegment, family, scheme, a.seed);
        const auto mix = nonsens::datagen::mix_dnn(panel, a.depth, mode, edgeProb,
                                                   nonsens::mix_seed(a.seed, 0x31cULL));
        nonsens::datagen::write_csv_file(a.out + ".csv", mix.data);

        nonsens::datagen::GroundTruth truth;
        truth.dag = mix.dag;
        truth.depth = a.depth;
        truth.seed = a.seed;
        truth.family = nonsens::datagen::family_name(family);
        truth.scheme = nonsens::datagen::scheme_name(scheme);
        const nlohmann::json j = truth;
        std::ofstream tf(a.out + ".truth.json", std::ios::binary);
        if (!tf) throw std::runtime_error("cannot write " + a.out + ".truth.json");
        tf << j.dump(2) << "\n";
        std::cout << a.out << ".csv\n" << a.out << ".truth.json\n";
        return 0;
    } catch (const std::exception& ex) {
        std::cerr << "gen: " << ex.what() << "\n";
        return 1;
    }
}

struct DiscoverArgs {
    std::string data;
    std::string method = "nonsens";
    double alpha = 0.05;
    std::uint64_t seed = 1;
    int netDepth = 2;
    int widthFactor = 2;
    int epochs = 300;
    int icaRestarts = 5;
    std::string hsic = "gamma";
    int permutations = 500;
    double pcAlpha = 0.05;
    int pcMaxCond = 3;
    std::string out;
};

int run_discover(const DiscoverArgs& a) {
    nonsens::SegmentedDataset data;
    try {
        data = nonsens::datagen::read_csv_file(a.data);
    } catch (const std::exception& ex) {
        std::cerr << "discover: " << ex.what() << "\n";
        return kExitBadInput;
    }
    nlohmann::json verdict;
    try {
        nonsens::pipeline::NonsensConfig nc;
        nc.tcl.netDepth = a.netDepth;
        nc.tcl.widthFactor = a.widthFactor;
        nc.tcl.sgd.epochs = a.epochs;
        nc.ica.restarts = a.icaRestarts;
        nc.hsic = a.hsic == "perm" ? nonsens::stats::NullMethod::PermutationNull
                                   : nonsens::stats::NullMethod::GammaApprox;
        nc.permutations = a.permutations;
        nc.seed = a.seed;
        nonsens::baselines::BaselineConfig bc;
        bc.hsic = nc.hsic;
        bc.permutations = a.permutations;
        bc.seed = a.seed;
        bc.ica.restarts = a.icaRestarts;

        if (a.method == "nonsens") {
            verdict = nonsens::pipeline::nonsens_bivariate(data, a.alpha, nc);
        } else if (a.method == "nonsens-lr") {
            verdict = nonsens::pipeline::nonsens_direction(data, nc);
        } else if (a.method == "lingam") {
            verdict = nonsens::baselines::direct_lingam_bivariate(data, a.alpha, bc);
        } else if (a.method == "resit") {
            verdict = nonsens::baselines::resit_bivariate(data, a.alpha, bc);
        } else if (a.method == "icp") {
            verdict = nonsens::baselines::icp_bivariate(data, a.alpha, bc);
        } else if (a.method == "reci") {
            verdict = nonsens::baselines::reci_bivariate(data);
        } else if (a.method == "linear-ica") {
            verdict = nonsens::baselines::linear_ica_nonsens(data, a.alpha, bc);
        } else if (a.method == "pc-hybrid") {
            nonsens::pipeline::HybridConfig hc;
            hc.nonsens = nc;
            hc.pcAlpha = a.pcAlpha;
            hc.pcMaxCond = a.pcMaxCond;
            const auto hyb = nonsens::pipeline::hybrid_multivariate(data, a.alpha, hc);
            nlohmann::json edges = nlohmann::json::array();
            for (const auto& e : hyb.edgeRuns)
                edges.push_back({{"i", e.i},
                                 {"j", e.j},
                                 {"decision", nonsens::decision_name(e.decision)},
                                 {"strength", e.strength},
                                 {"demoted", e.demoted}});
            verdict = nlohmann::json{{"graph", hyb.graph},
                                     {"pc_only", hyb.pcOnly},
                                     {"edge_runs", edges}};
        } else {
            throw std::invalid_argument("unknown method: " + a.method);
        }
        verdict["method"] = a.method;
    } catch (const std::exception& ex) {
        std::cerr << "discover: method " << a.method << " failed: " << ex.what() << "\n";
        return kExitMethodFail;
    }
    const std::string text = verdict.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) {
            std::cerr << "discover: cannot write " << a.out << "\n";
            return 1;
        }
        f << text;
    }
    return 0;
}

struct BenchArgs {
    std::string config;
    std::string mode;
    std::string method;
    double alpha = -1.0;
    std::uint64_t seed = 0;
    bool seedSet = false;
    int jobs = 1;
    std::string out;
};

int run_bench_cmd(const BenchArgs& a) {
    nonsens::bench::ExperimentConfig cfg;
    if (!a.config.empty()) {
        std::ifstream f(a.config);
        if (!f) {
            std::cerr << "bench: cannot open config " << a.config << "\n";
            return kExitBadInput;
        }
        try {
            nlohmann::json j;
            f >> j;
            cfg = j.get<nonsens::bench::ExperimentConfig>();
        } catch (const std::exception& ex) {
            std::cerr << "bench: bad config: " << ex.what() << "\n";
            return kExitBadInput;
        }
    }
    if (!a.mode.empty()) {
        try {
            cfg.mode = nonsens::bench::mode_from_name(a.mode);
        } catch (const std::exception& ex) {
            std::cerr << "bench: " << ex.what() << "\n";
            return kExitBadInput;
        }
    }
    if (!a.method.empty()) cfg.methods = {a.method};
    if (a.alpha > 0.0) cfg.alpha = a.alpha;
    if (a.seedSet) cfg.baseSeed = a.seed;
    if (!a.out.empty()) cfg.out = a.out;
    try {
        cfg.validate();
        const auto rows = nonsens::bench::run_bench(cfg, a.jobs);
        const auto summary = nonsens::bench::summarize(rows);
        nonsens::bench::write_file(cfg.out + ".results.csv", nonsens::bench::results_csv(rows));
        nonsens::bench::write_file(cfg.out + ".summary.csv", nonsens::bench::summary_csv(summary));
        long failed = 0;
        for (const auto& r : rows)
            if (!r.error.empty()) ++failed;
        std::cout << cfg.out << ".results.csv\n" << cfg.out << ".summary.csv\n";
        if (failed > 0) std::cerr << "bench: " << failed << " trial(s) failed, see error column\n";
        return 0;
    } catch (const std::exception& ex) {
        std::cerr << "bench: " << ex.what() << "\n";
        return kExitMethodFail;
    }
}

int run_metrics(const std::string& results, const std::string& out) {
    std::ifstream f(results, std::ios::binary);
    if (!f) {
        std::cerr << "metrics: cannot open " << results << "\n";
        return kExitBadInput;
    }
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        const auto rows = nonsens::bench::parse_results_csv(text);
        const auto summary = nonsens::bench::summarize(rows);
        const std::string csv = nonsens::bench::summary_csv(summary);
        if (out.empty()) {
            std::cout << csv;
        } else {
            nonsens::bench::write_file(out, csv);
            std::cout << out << "\n";
        }
        return 0;
    } catch (const std::exception& ex) {
        std::cerr << "metrics: " << ex.what() << "\n";
        return kExitBadInput;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal discovery from non-stationary segmented data"};
    app.require_subcommand(1);

    GenArgs g;
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset (CSV + truth JSON)");
    gen->add_option("--d", g.d, "number of observed variables");
    gen->add_option("--E", g.numSegments, "number of segments (distinct conditions)");
    gen->add_option("--n-e", g.perSegment, "samples per segment");
    gen->add_option("--depth", g.depth, "mixing network depth");
    gen->add_option("--mode", g.mode, "acyclic|cyclic")
        ->check(CLI::IsMember({"acyclic", "cyclic"}));
    gen->add_option("--family", g.family, "laplace|odd")
        ->check(CLI::IsMember({"laplace", "odd"}));
    gen->add_option("--scheme", g.scheme, "random|monotone")
        ->check(CLI::IsMember({"random", "monotone"}));
    gen->add_option("--edge-prob", g.edgeProb, "edge probability (default 1 for d=2, 2/(d-1) otherwise)");
    gen->add_option("--seed", g.seed, "random seed");
    gen->add_option("--out", g.out, "output path prefix");

    DiscoverArgs d;
    auto* disc = app.add_subcommand("discover", "run one discovery method on a CSV dataset");
    disc->add_option("data", d.data, "dataset CSV path")->required();
    disc->add_option("--method", d.method, "discovery method")
        ->check(CLI::IsMember({"nonsens", "nonsens-lr", "lingam", "resit", "icp", "reci",
                               "linear-ica", "pc-hybrid"}));
    disc->add_option("--alpha", d.alpha, "test level");
    disc->add_option("--seed", d.seed, "random seed");
    disc->add_option("--net-depth", d.netDepth, "feature extractor depth");
    disc->add_option("--width-factor", d.widthFactor, "hidden width multiplier");
    disc->add_option("--epochs", d.epochs, "training epochs");
    disc->add_option("--ica-restarts", d.icaRestarts, "unmixing restarts");
    disc->add_option("--hsic", d.hsic, "gamma|perm")->check(CLI::IsMember({"gamma", "perm"}));
    disc->add_option("--permutations", d.permutations, "permutation count");
    disc->add_option("--pc-alpha", d.pcAlpha, "PC skeleton test level");
    disc->add_option("--max-cond", d.pcMaxCond, "PC conditioning set bound");
    disc->add_option("--out", d.out, "verdict JSON path (default stdout)");

    BenchArgs b;
    auto* bench = app.add_subcommand("bench", "run a benchmark sweep");
    bench->add_option("--config", b.config, "experiment config JSON");
    bench->add_option("--mode", b.mode, "benchmark mode override");
    bench->add_option("--method", b.method, "restrict to one method");
    bench->add_option("--alpha", b.alpha, "test level override");
    auto* seedOpt = bench->add_option("--seed", b.seed, "base seed override");
    bench->add_option("--jobs", b.jobs, "worker threads");
    bench->add_option("--out", b.out, "output path prefix override");

    std::string mResults, mOut;
    auto* metrics = app.add_subcommand("metrics", "recompute a summary from a results CSV");
    metrics->add_option("--results", mResults, "results CSV path")->required();
    metrics->add_option("--out", mOut, "summary CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) return run_gen(g);
    if (disc->parsed()) return run_discover(d);
    if (bench->parsed()) {
        b.seedSet = seedOpt->count() > 0;
        return run_bench_cmd(b);
    }
    if (metrics->parsed()) return run_metrics(mResults, mOut);
    return 1;
}
