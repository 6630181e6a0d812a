// rpforest command line: fit, grid, summarize, decompose.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rpforest/rpforest.hpp"

namespace {

using namespace rpforest;

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
}

struct FitOptions {
    std::string data;
    std::string config;
    std::string test;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::optional<std::string> policy, projection, m, s, k, t, n_min, splitter, bootstrap;
};

int run_fit(const FitOptions& o) {
    bench::GridPoint g;
    std::uint64_t seed = 0;
    if (!o.config.empty()) {
        const auto cfg = bench::experiment_from_key_values(bench::load_key_values(o.config));
        g = cfg.grid.front();
        seed = cfg.seed;
    }
    if (o.policy) g.policy = *o.policy;
    if (o.projection) g.projection = *o.projection;
    if (o.m) g.m = *o.m;
    if (o.s) g.s = *o.s;
    if (o.k) g.k = *o.k;
    if (o.t) g.t = *o.t;
    if (o.n_min) g.n_min = *o.n_min;
    if (o.splitter) g.splitter = *o.splitter;
    if (o.bootstrap) g.bootstrap = *o.bootstrap;
    if (o.seed) seed = *o.seed;

    const auto t0 = std::chrono::steady_clock::now();
    const DataSet train = load_svmlight_multilabel(o.data);
    const double load_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EnsembleConfig cfg = bench::resolve(g, train.feature_count(), train.label_count());
    cfg.master_seed = seed;
    cfg.threads = o.threads;
    FitTiming timing;
    const Ensemble e = fit_timed(train, cfg, timing);
    std::cerr << "n=" << train.sample_count() << " p=" << train.feature_count() << " d=" << train.label_count()
              << " policy=" << to_string(cfg.policy) << " t=" << cfg.t << " k=" << cfg.tree.k;
    if (cfg.policy != SubspacePolicy::no_projection) {
        std::cerr << " projection=" << to_string(cfg.projection.kind) << " m=" << cfg.projection.m;
    }
    std::cerr << "\nload_seconds=" << load_seconds << " fit_seconds=" << timing.total_seconds
              << " project_seconds=" << timing.generate_project_seconds << " grow_seconds=" << timing.grow_seconds
              << '\n';
    if (!o.test.empty()) {
        const DataSet test = load_svmlight_multilabel(o.test);
        if (test.label_count() > train.label_count()) {
            throw std::runtime_error("test file has more labels than the training file");
        }
        const LrapResult r = lrap_detailed(predict(e, test), [&] {
            // align label dimension with the model
            std::vector<std::vector<SparseMatrix::Entry>> rows(test.sample_count());
            for (Index i = 0; i < test.sample_count(); ++i) {
                const SparseRow sr = test.labels(i);
                for (Index k = 0; k < sr.size(); ++k) rows[i].emplace_back(sr.indices[k], sr.values[k]);
            }
            return SparseMatrix::from_rows(train.label_count(), rows);
        }());
        std::cout << "lrap=" << r.value << " retained=" << r.retained << '\n';
    }
    if (!o.out.empty()) save_ensemble(e, o.out);
    return 0;
}

int run_grid_cmd(const std::string& config, const std::string& data, std::optional<std::uint64_t> seed,
                 std::optional<unsigned> threads, const std::string& out) {
    auto cfg = bench::experiment_from_key_values(bench::load_key_values(config));
    if (!data.empty()) cfg.data = data;
    if (seed) {
        cfg.seed = *seed;
        cfg.split.seed = *seed;
    }
    if (threads) cfg.threads = *threads;
    if (cfg.data.empty()) throw std::runtime_error("no dataset: set `data` in the config or pass --data");
    const auto t0 = std::chrono::steady_clock::now();
    const DataSet ds = load_svmlight_multilabel(cfg.data);
    const double load_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "loaded " << cfg.data << ": n=" << ds.sample_count() << " p=" << ds.feature_count()
              << " d=" << ds.label_count() << " in " << load_seconds << " s; " << cfg.grid.size()
              << " grid point(s)\n";
    write_output(out, bench::run_grid(cfg, ds, load_seconds));
    return 0;
}

int run_decompose(const std::string& config, std::optional<std::uint64_t> seed, std::optional<unsigned> threads,
                  const std::string& out) {
    bench::KeyValues kv;
    if (!config.empty()) kv = bench::load_key_values(config);
    auto get = [&](const std::string& key, const std::string& fallback) {
        const auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second.front();
    };
    auto integer = [&](const std::string& key, Index fallback) {
        const auto v = rpforest::detail::parse_number<Index>(get(key, std::to_string(fallback)));
        if (!v) throw std::invalid_argument("config key '" + key + "' expects an integer");
        return *v;
    };
    const std::string kind = get("problem", "toy");
    SyntheticProblem problem;
    if (kind == "toy") {
        const auto noise = rpforest::detail::parse_number<double>(get("noise_sd", "0.5"));
        if (!noise) throw std::invalid_argument("noise_sd expects a number");
        problem = toy_regression_problem(integer("n", 100), *noise);
    } else if (kind == "grid") {
        problem = deterministic_grid_problem(integer("grid", 4), integer("copies", 2));
    } else {
        throw std::invalid_argument("unknown problem '" + kind + "'");
    }
    bench::GridPoint g;
    g.policy = get("policy", "per_tree");
    g.projection = get("projection", "gaussian");
    g.m = get("m", "1");
    g.s = get("s", "1");
    g.k = get("k", "sqrt_p");
    g.t = get("t", "1");
    g.n_min = get("n_min", "1");
    g.splitter = get("splitter", "exhaustive");
    g.bootstrap = get("bootstrap", "true");
    EnsembleConfig cfg = bench::resolve(g, problem.p, problem.d);
    cfg.master_seed = seed.value_or(integer("seed", 0));
    cfg.threads = threads.value_or(static_cast<unsigned>(integer("threads", 1)));
    DecompositionCounts counts{integer("n_ls", 30), integer("n_phi", 20), integer("n_eps", 20)};
    const DecompositionReport rep = estimate_ensemble(problem, cfg, counts);
    write_output(out, decomposition_csv(rep));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree ensembles on randomly projected output spaces"};
    app.require_subcommand(1);

    FitOptions fit_opts;
    auto* fit = app.add_subcommand("fit", "Fit an ensemble on a dataset file");
    fit->add_option("--data", fit_opts.data, "Training data (multi-label svmlight, .gz accepted)")->required();
    fit->add_option("--config", fit_opts.config, "Config file; the first grid point is used");
    fit->add_option("--test", fit_opts.test, "Optional test file; prints LRAP");
    fit->add_option("--out", fit_opts.out, "Write the model as JSON");
    fit->add_option("--seed", fit_opts.seed, "Master seed");
    fit->add_option("--threads", fit_opts.threads, "Worker threads for tree growth");
    fit->add_option("--policy", fit_opts.policy, "shared | per_tree | none");
    fit->add_option("--projection", fit_opts.projection, "gaussian | rademacher | hadamard_subsample | ...");
    fit->add_option("--m", fit_opts.m, "Projected dimension: 1, ln_d, 2ln_d, d or an integer");
    fit->add_option("--s", fit_opts.s, "Rademacher sparsity: number or sqrt_d");
    fit->add_option("--k", fit_opts.k, "Features per split: sqrt_p, p or an integer");
    fit->add_option("--t", fit_opts.t, "Number of trees");
    fit->add_option("--n-min", fit_opts.n_min, "Minimum node size to attempt a split");
    fit->add_option("--splitter", fit_opts.splitter, "exhaustive | random_threshold");
    fit->add_option("--bootstrap", fit_opts.bootstrap, "true | false");

    std::string grid_config, grid_data, grid_out;
    std::optional<std::uint64_t> grid_seed;
    std::optional<unsigned> grid_threads;
    auto* grid = app.add_subcommand("grid", "Run an experiment grid and emit CSV");
    grid->add_option("--config", grid_config, "Experiment config")->required();
    grid->add_option("--data", grid_data, "Dataset (overrides the config)");
    grid->add_option("--seed", grid_seed, "Seed (overrides the config)");
    grid->add_option("--threads", grid_threads, "Worker threads (overrides the config)");
    grid->add_option("--out", grid_out, "Output CSV (default: stdout)");

    std::string sum_in, sum_out;
    long long baseline = -1;
    auto* summarize = app.add_subcommand("summarize", "Mean/std per grid point from a grid CSV");
    summarize->add_option("input,--data", sum_in, "Grid CSV")->required();
    summarize->add_option("--baseline", baseline, "Baseline grid id (default: first grid point without projection)");
    summarize->add_option("--out", sum_out, "Output CSV (default: stdout)");

    std::string dec_config, dec_out;
    std::optional<std::uint64_t> dec_seed;
    std::optional<unsigned> dec_threads;
    auto* decompose = app.add_subcommand("decompose", "Monte Carlo bias/variance decomposition on a synthetic problem");
    decompose->add_option("--config", dec_config, "Decomposition config");
    decompose->add_option("--seed", dec_seed, "Master seed");
    decompose->add_option("--threads", dec_threads, "Worker threads");
    decompose->add_option("--out", dec_out, "Output CSV (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit) return run_fit(fit_opts);
        if (*grid) return run_grid_cmd(grid_config, grid_data, grid_seed, grid_threads, grid_out);
        if (*summarize) {
            std::ifstream in(sum_in);
            if (!in) throw std::runtime_error("cannot open '" + sum_in + "'");
            const std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            write_output(sum_out, bench::summary_csv(bench::summarize(csv, baseline)));
            return 0;
        }
        if (*decompose) return run_decompose(dec_config, dec_seed, dec_threads, dec_out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 1;
}
