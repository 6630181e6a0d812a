#pragma once

// Tree ensembles grown on one shared output projection or on one projection per tree.

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rpforest/core.hpp"
#include "rpforest/projection.hpp"
#include "rpforest/tree.hpp"

namespace rpforest {

enum class SubspacePolicy { shared_subspace, per_tree_subspace, no_projection };

inline std::string_view to_string(SubspacePolicy p) {
    switch (p) {
        case SubspacePolicy::shared_subspace: return "shared";
        case SubspacePolicy::per_tree_subspace: return "per_tree";
        case SubspacePolicy::no_projection: return "none";
    }
    return "unknown";
}

inline SubspacePolicy policy_from_string(std::string_view s) {
    if (s == "shared" || s == "shared_subspace") return SubspacePolicy::shared_subspace;
    if (s == "per_tree" || s == "per_tree_subspace") return SubspacePolicy::per_tree_subspace;
    if (s == "none" || s == "no_projection") return SubspacePolicy::no_projection;
    throw std::invalid_argument("unknown subspace policy '" + std::string(s) + "'");
}

struct EnsembleConfig {
    Index t = 100;
    ProjectionSpec projection;
    SubspacePolicy policy = SubspacePolicy::per_tree_subspace;
    TreeConfig tree;
    std::uint64_t master_seed = 0;
    unsigned threads = 1;
};

struct Ensemble {
    std::vector<Tree> trees;
    SubspacePolicy policy = SubspacePolicy::no_projection;
    std::vector<ProjectionMatrix> projections;  // 1 (shared), t (per tree) or 0
    EnsembleConfig config;
};

struct FitTiming {
    double generate_project_seconds = 0.0;
    double grow_seconds = 0.0;
    double total_seconds = 0.0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs job(j) for j in [0, count) on up to `threads` workers.
template <typename Job>
void parallel_for(Index count, unsigned threads, Job&& job) {
    if (threads <= 1 || count <= 1) {
        for (Index j = 0; j < count; ++j) job(j);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    const unsigned n_workers = static_cast<unsigned>(std::min<Index>(threads, count));
    for (unsigned w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            for (Index j = next++; j < count; j = next++) {
                try {
                    job(j);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Fits t trees. Stream ids: projection j uses stream j, tree j's own randomness
/// (bootstrap, feature subsets, random cuts) uses stream t + j.
inline Ensemble fit_timed(const DataSet& ds, const EnsembleConfig& cfg, FitTiming& timing) {
    if (cfg.t < 1) {
        throw std::invalid_argument("fit: t must be >= 1");
    }
    if (ds.sample_count() == 0) {
        throw std::invalid_argument("fit: empty learning sample");
    }
    const auto start = detail::Clock::now();
    Ensemble e;
    e.policy = cfg.policy;
    e.config = cfg;
    e.trees.resize(cfg.t);

    std::vector<double> project_time(cfg.t, 0.0);
    std::vector<double> grow_time(cfg.t, 0.0);

    DenseMatrix shared_z;
    if (cfg.policy == SubspacePolicy::shared_subspace) {
        const auto t0 = detail::Clock::now();
        RngStream rng(cfg.master_seed, 0);
        e.projections.push_back(generate(cfg.projection, ds, rng));
        shared_z = project(e.projections.front(), ds);
        project_time[0] = detail::seconds_since(t0);
    } else if (cfg.policy == SubspacePolicy::no_projection) {
        shared_z = ds.dense_outputs();
    } else {
        e.projections.resize(cfg.t);
    }

    detail::parallel_for(cfg.t, cfg.threads, [&](Index j) {
        if (cfg.policy == SubspacePolicy::per_tree_subspace) {
            const auto t0 = detail::Clock::now();
            RngStream phi_rng(cfg.master_seed, j);
            e.projections[j] = generate(cfg.projection, ds, phi_rng);
            DenseMatrix z = project(e.projections[j], ds);
            project_time[j] += detail::seconds_since(t0);
            const auto t1 = detail::Clock::now();
            RngStream rng(cfg.master_seed, cfg.t + j);
            e.trees[j] = grow_on(ds, z, cfg.tree, rng);
            grow_time[j] = detail::seconds_since(t1);
        } else {
            const auto t1 = detail::Clock::now();
            RngStream rng(cfg.master_seed, cfg.t + j);
            e.trees[j] = grow_on(ds, shared_z, cfg.tree, rng);
            grow_time[j] = detail::seconds_since(t1);
        }
    });

    timing = {};
    for (Index j = 0; j < cfg.t; ++j) {
        timing.generate_project_seconds += project_time[j];
        timing.grow_seconds += grow_time[j];
    }
    timing.total_seconds = detail::seconds_since(start);
    return e;
}

inline Ensemble fit(const DataSet& ds, const EnsembleConfig& cfg) {
    FitTiming ignored;
    return fit_timed(ds, cfg, ignored);
}

/// Mean of the per-tree leaf vectors for every sample of X (n x d, dense).
inline DenseMatrix predict(const Ensemble& e, const DataSet& x) {
    if (e.trees.empty()) {
        throw std::invalid_argument("predict: empty ensemble");
    }
    const Index p = e.trees.front().feature_count();
    const Index d = e.trees.front().label_count();
    if (x.feature_count() != p) {
        throw std::invalid_argument("predict: expected " + std::to_string(p) + " features, got " +
                                    std::to_string(x.feature_count()));
    }
    DenseMatrix out(x.sample_count(), d);
    std::vector<double> row(p);
    const double inv_t = 1.0 / static_cast<double>(e.trees.size());
    for (Index i = 0; i < x.sample_count(); ++i) {
        x.input_row(i, row);
        auto acc = out.row(i);
        for (const Tree& tree : e.trees) {
            const auto leaf = predict_one(tree, row);
            for (Index c = 0; c < d; ++c) acc[c] += leaf[c];
        }
        for (double& v : acc) v *= inv_t;
    }
    return out;
}

inline DenseMatrix predict(const Ensemble& e, const DenseMatrix& x) {
    if (e.trees.empty()) {
        throw std::invalid_argument("predict: empty ensemble");
    }
    const Index p = e.trees.front().feature_count();
    const Index d = e.trees.front().label_count();
    if (x.cols() != p) {
        throw std::invalid_argument("predict: expected " + std::to_string(p) + " features, got " +
                                    std::to_string(x.cols()));
    }
    DenseMatrix out(x.rows(), d);
    const double inv_t = 1.0 / static_cast<double>(e.trees.size());
    for (Index i = 0; i < x.rows(); ++i) {
        auto acc = out.row(i);
        for (const Tree& tree : e.trees) {
            const auto leaf = predict_one(tree, x.row(i));
            for (Index c = 0; c < d; ++c) acc[c] += leaf[c];
        }
        for (double& v : acc) v *= inv_t;
    }
    return out;
}

// Model document: {"format":"rpforest-ensemble","version":1,"manifest":{...},
//   "projections":[{"kind","m","d","rows":[[...]]}], "trees":[<tree documents>]}

inline nlohmann::json to_json(const Ensemble& e) {
    const auto& c = e.config;
    nlohmann::json manifest = {
        {"policy", to_string(e.policy)},
        {"projection", {{"kind", to_string(c.projection.kind)}, {"m", c.projection.m},
                        {"s", c.projection.s}}},
        {"t", c.t},
        {"k", c.tree.k},
        {"n_min", c.tree.n_min},
        {"splitter", to_string(c.tree.splitter)},
        {"bootstrap", c.tree.bootstrap},
        {"master_seed", c.master_seed},
    };
    nlohmann::json projections = nlohmann::json::array();
    for (const auto& phi : e.projections) {
        const DenseMatrix dense = phi.to_dense();
        nlohmann::json rows = nlohmann::json::array();
        for (Index r = 0; r < dense.rows(); ++r) {
            const auto row = dense.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        projections.push_back({{"kind", to_string(phi.kind())},
                               {"m", phi.m()},
                               {"d", phi.d()},
                               {"sparse", phi.is_sparse()},
                               {"rows", rows}});
    }
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : e.trees) trees.push_back(to_json(tree));
    return {{"format", "rpforest-ensemble"},
            {"version", 1},
            {"manifest", manifest},
            {"projections", projections},
            {"trees", trees}};
}

inline Ensemble ensemble_from_json(const nlohmann::json& j) {
    if (j.at("format") != "rpforest-ensemble" || j.at("version") != 1) {
        throw std::runtime_error("ensemble_from_json: unsupported document");
    }
    const auto& m = j.at("manifest");
    Ensemble e;
    e.policy = policy_from_string(m.at("policy").get<std::string>());
    e.config.policy = e.policy;
    e.config.t = m.at("t").get<Index>();
    e.config.projection.kind =
        projection_kind_from_string(m.at("projection").at("kind").get<std::string>());
    e.config.projection.m = m.at("projection").at("m").get<Index>();
    e.config.projection.s = m.at("projection").at("s").get<double>();
    e.config.tree.k = m.at("k").get<Index>();
    e.config.tree.n_min = m.at("n_min").get<Index>();
    e.config.tree.splitter = splitter_from_string(m.at("splitter").get<std::string>());
    e.config.tree.bootstrap = m.at("bootstrap").get<bool>();
    e.config.master_seed = m.at("master_seed").get<std::uint64_t>();
    for (const auto& pj : j.at("projections")) {
        const Index pm = pj.at("m").get<Index>();
        const Index pd = pj.at("d").get<Index>();
        const auto kind = projection_kind_from_string(pj.at("kind").get<std::string>());
        DenseMatrix dense(pm, pd);
        for (Index r = 0; r < pm; ++r) {
            const auto row = pj.at("rows").at(r).get<std::vector<double>>();
            std::copy(row.begin(), row.end(), dense.row(r).begin());
        }
        if (pj.at("sparse").get<bool>()) {
            std::vector<std::vector<SparseMatrix::Entry>> cols(pd);
            for (Index r = 0; r < pm; ++r) {
                for (Index c = 0; c < pd; ++c) {
                    if (dense(r, c) != 0.0) cols[c].emplace_back(r, dense(r, c));
                }
            }
            e.projections.push_back(ProjectionMatrix::sparse(kind, pm, pd, cols));
        } else {
            e.projections.push_back(ProjectionMatrix::dense(kind, dense));
        }
    }
    for (const auto& tj : j.at("trees")) e.trees.push_back(tree_from_json(tj));
    if (e.trees.size() != e.config.t) {
        throw std::runtime_error("ensemble_from_json: tree count does not match manifest");
    }
    return e;
}

inline void save_ensemble(const Ensemble& e, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out << to_json(e).dump();
}

inline Ensemble load_ensemble(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    return ensemble_from_json(nlohmann::json::parse(in));
}

}  // namespace rpforest
