#pragma once

// Experiment harness: key/value config files, grid expansion over ensemble settings,
// per-split LRAP runs emitted as CSV, and summaries against a baseline grid point.
//
// Config grammar: one `key = value[, value ...]` per line, `#` starts a comment.
// List-valued keys expand into a cartesian grid.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpforest/core.hpp"
#include "rpforest/dataset_io.hpp"
#include "rpforest/ensemble.hpp"
#include "rpforest/metrics.hpp"

namespace rpforest::bench {

using KeyValues = std::map<std::string, std::vector<std::string>>;

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline KeyValues parse_key_values(std::string_view text, const std::string& source = "<config>") {
    KeyValues out;
    std::istringstream in{std::string(text)};
    std::string line;
    Index line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(source + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        std::vector<std::string> values;
        std::string_view rest = std::string_view(body).substr(eq + 1);
        for (std::size_t i = 0; i <= rest.size();) {
            std::size_t j = rest.find(',', i);
            if (j == std::string_view::npos) j = rest.size();
            const std::string v = trim(rest.substr(i, j - i));
            if (!v.empty()) values.push_back(v);
            i = j + 1;
        }
        if (key.empty() || values.empty()) {
            throw std::runtime_error(source + ":" + std::to_string(line_no) + ": empty key or value");
        }
        out[key] = std::move(values);
    }
    return out;
}

inline KeyValues load_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str(), path);
}

/// `1`, `ln_d` (nearest integer to ln d), `2ln_d`, `d`, or an explicit integer.
inline Index resolve_m(const std::string& sym, Index d) {
    const double ln_d = std::log(static_cast<double>(d));
    if (sym == "d") return d;
    if (sym == "ln_d") return std::max<Index>(1, static_cast<Index>(std::floor(0.5 + ln_d)));
    if (sym == "2ln_d") return std::max<Index>(1, static_cast<Index>(std::floor(0.5 + 2.0 * ln_d)));
    const auto v = rpforest::detail::parse_number<Index>(sym);
    if (!v || *v < 1) throw std::invalid_argument("invalid m '" + sym + "'");
    return *v;
}

/// `sqrt_p` (rounded down), `p`, or an explicit integer.
inline Index resolve_k(const std::string& sym, Index p) {
    if (sym == "p") return p;
    if (sym == "sqrt_p") return std::max<Index>(1, static_cast<Index>(std::floor(std::sqrt(static_cast<double>(p)))));
    const auto v = rpforest::detail::parse_number<Index>(sym);
    if (!v || *v < 1) throw std::invalid_argument("invalid k '" + sym + "'");
    return *v;
}

/// `sqrt_d` or a number.
inline double resolve_s(const std::string& sym, Index d) {
    if (sym == "sqrt_d") return std::sqrt(static_cast<double>(d));
    const auto v = rpforest::detail::parse_number<double>(sym);
    if (!v) throw std::invalid_argument("invalid s '" + sym + "'");
    return *v;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("invalid boolean '" + s + "'");
}

/// One symbolic grid point; symbols are resolved against the dataset at run time.
struct GridPoint {
    std::string policy = "per_tree";
    std::string projection = "gaussian";
    std::string m = "d";
    std::string s = "1";
    std::string k = "sqrt_p";
    std::string t = "100";
    std::string n_min = "1";
    std::string splitter = "exhaustive";
    std::string bootstrap = "true";

    friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

struct ExperimentConfig {
    std::string data;
    SplitPlan split;
    Index algo_repeats = 1;  // randomized fits per split
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::vector<GridPoint> grid;
};

inline const std::vector<std::string>& grid_keys() {
    static const std::vector<std::string> keys{"policy", "projection", "m", "s", "k",
                                               "t", "n_min", "splitter", "bootstrap"};
    return keys;
}

inline ExperimentConfig experiment_from_key_values(const KeyValues& kv) {
    static const std::vector<std::string> scalar_keys{"data", "split", "n_train", "n_test", "split_count",
                                                      "algo_repeats", "seed", "threads"};
    for (const auto& [key, values] : kv) {
        const bool known = std::find(scalar_keys.begin(), scalar_keys.end(), key) != scalar_keys.end() ||
                           std::find(grid_keys().begin(), grid_keys().end(), key) != grid_keys().end();
        if (!known) throw std::invalid_argument("unknown config key '" + key + "'");
    }
    auto scalar = [&](const std::string& key, const std::string& fallback) {
        const auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        if (it->second.size() != 1) throw std::invalid_argument("config key '" + key + "' takes one value");
        return it->second.front();
    };
    auto integer = [&](const std::string& key, Index fallback) {
        const std::string v = scalar(key, std::to_string(fallback));
        const auto parsed = rpforest::detail::parse_number<Index>(v);
        if (!parsed) throw std::invalid_argument("config key '" + key + "' expects an integer");
        return *parsed;
    };

    ExperimentConfig cfg;
    cfg.data = scalar("data", "");
    const std::string mode = scalar("split", "shuffled_repeats");
    if (mode == "shuffled_repeats") {
        cfg.split.mode = SplitMode::shuffled_repeats;
    } else if (mode == "fixed_holdout") {
        cfg.split.mode = SplitMode::fixed_holdout;
    } else if (mode == "kfold") {
        cfg.split.mode = SplitMode::kfold;
    } else {
        throw std::invalid_argument("unknown split mode '" + mode + "'");
    }
    cfg.split.n_train = integer("n_train", 0);
    cfg.split.n_test = integer("n_test", 0);
    cfg.split.count = integer("split_count", 10);
    cfg.algo_repeats = integer("algo_repeats", 1);
    cfg.seed = integer("seed", 0);
    cfg.split.seed = cfg.seed;
    cfg.threads = static_cast<unsigned>(integer("threads", 1));
    if (cfg.algo_repeats < 1) throw std::invalid_argument("algo_repeats must be >= 1");

    GridPoint defaults;
    std::vector<GridPoint> grid{defaults};
    for (const auto& key : grid_keys()) {
        const auto it = kv.find(key);
        if (it == kv.end()) continue;
        std::vector<GridPoint> next;
        for (const auto& base : grid) {
            for (const auto& v : it->second) {
                GridPoint g = base;
                if (key == "policy") g.policy = v;
                else if (key == "projection") g.projection = v;
                else if (key == "m") g.m = v;
                else if (key == "s") g.s = v;
                else if (key == "k") g.k = v;
                else if (key == "t") g.t = v;
                else if (key == "n_min") g.n_min = v;
                else if (key == "splitter") g.splitter = v;
                else if (key == "bootstrap") g.bootstrap = v;
                next.push_back(g);
            }
        }
        grid = std::move(next);
    }
    // Without projection the projection settings are irrelevant: collapse duplicates.
    std::vector<GridPoint> unique;
    for (GridPoint g : grid) {
        policy_from_string(g.policy);
        projection_kind_from_string(g.projection);
        splitter_from_string(g.splitter);
        parse_bool(g.bootstrap);
        if (policy_from_string(g.policy) == SubspacePolicy::no_projection) {
            g.projection = "-";
            g.m = "-";
            g.s = "-";
        }
        if (std::find(unique.begin(), unique.end(), g) == unique.end()) unique.push_back(g);
    }
    cfg.grid = std::move(unique);
    return cfg;
}

/// Concrete ensemble settings for a grid point on a dataset with p features and d labels.
inline EnsembleConfig resolve(const GridPoint& g, Index p, Index d) {
    EnsembleConfig c;
    c.policy = policy_from_string(g.policy);
    if (c.policy != SubspacePolicy::no_projection) {
        c.projection.kind = projection_kind_from_string(g.projection);
        c.projection.m = resolve_m(g.m, d);
        c.projection.s = resolve_s(g.s, d);
    }
    c.tree.k = std::min(resolve_k(g.k, p), p);
    const auto t = rpforest::detail::parse_number<Index>(g.t);
    const auto n_min = rpforest::detail::parse_number<Index>(g.n_min);
    if (!t || *t < 1) throw std::invalid_argument("invalid t '" + g.t + "'");
    if (!n_min || *n_min < 1) throw std::invalid_argument("invalid n_min '" + g.n_min + "'");
    c.t = *t;
    c.tree.n_min = *n_min;
    c.tree.splitter = splitter_from_string(g.splitter);
    c.tree.bootstrap = parse_bool(g.bootstrap);
    return c;
}

inline constexpr const char* kGridSchema = "rpforest-grid-v1";

inline const std::vector<std::string>& grid_csv_columns() {
    static const std::vector<std::string> cols{
        "schema",   "grid_id",   "policy",    "projection", "m",        "s",
        "k",        "t",         "n_min",     "splitter",   "bootstrap", "split_id",
        "repeat_id", "n_train",  "n_test",    "retained",   "lrap",     "load_seconds",
        "fit_seconds", "project_seconds", "grow_seconds"};
    return cols;
}

/// Columns whose values depend on wall-clock time.
inline bool is_timing_column(const std::string& name) { return name.ends_with("_seconds"); }

namespace detail {

inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_seconds(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace detail

/// Runs every grid point on every split; returns the CSV text (header + one row per
/// grid point x split x algorithm repeat). Failing grid points are reported on `log`
/// and skipped.
inline std::string run_grid(const ExperimentConfig& cfg, const DataSet& ds, double load_seconds,
                            std::ostream& log = std::cerr) {
    if (cfg.grid.empty()) throw std::invalid_argument("run_grid: empty grid");
    const auto splits = make_splits(ds, cfg.split);

    std::string out;
    for (Index c = 0; c < grid_csv_columns().size(); ++c) {
        if (c > 0) out += ',';
        out += grid_csv_columns()[c];
    }
    out += '\n';

    for (Index gid = 0; gid < cfg.grid.size(); ++gid) {
        const GridPoint& g = cfg.grid[gid];
        std::string rows;
        try {
            EnsembleConfig ecfg = resolve(g, ds.feature_count(), ds.label_count());
            ecfg.threads = cfg.threads;
            for (Index sid = 0; sid < splits.size(); ++sid) {
                const auto& split = splits[sid];
                const SparseMatrix y_test = split.test.sparse_outputs();
                for (Index rep = 0; rep < cfg.algo_repeats; ++rep) {
                    ecfg.master_seed = mix_seed(cfg.seed, {sid, rep});
                    FitTiming timing;
                    const Ensemble e = fit_timed(split.train, ecfg, timing);
                    const LrapResult score = lrap_detailed(predict(e, split.test), y_test);
                    const std::vector<std::string> fields{
                        kGridSchema,
                        std::to_string(gid),
                        g.policy,
                        g.projection,
                        ecfg.policy == SubspacePolicy::no_projection ? "-" : std::to_string(ecfg.projection.m),
                        ecfg.policy == SubspacePolicy::no_projection ? "-" : detail::format_real(ecfg.projection.s),
                        std::to_string(ecfg.tree.k),
                        std::to_string(ecfg.t),
                        std::to_string(ecfg.tree.n_min),
                        g.splitter,
                        ecfg.tree.bootstrap ? "true" : "false",
                        std::to_string(sid),
                        std::to_string(rep),
                        std::to_string(split.train.sample_count()),
                        std::to_string(split.test.sample_count()),
                        std::to_string(score.retained),
                        detail::format_real(score.value),
                        detail::format_seconds(load_seconds),
                        detail::format_seconds(timing.total_seconds),
                        detail::format_seconds(timing.generate_project_seconds),
                        detail::format_seconds(timing.grow_seconds)};
                    for (Index c = 0; c < fields.size(); ++c) {
                        if (c > 0) rows += ',';
                        rows += fields[c];
                    }
                    rows += '\n';
                }
            }
        } catch (const std::exception& ex) {
            log << "grid point " << gid << " skipped: " << ex.what() << '\n';
            continue;
        }
        out += rows;
    }
    return out;
}

/// Removes the timing columns from a grid CSV (for reproducibility comparisons).
inline std::string strip_timing_columns(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::string out;
    std::vector<bool> keep;
    bool header = true;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (header) {
            for (const auto& name : fields) keep.push_back(!is_timing_column(name));
            header = false;
        }
        std::string row;
        for (Index i = 0; i < fields.size(); ++i) {
            if (i < keep.size() && !keep[i]) continue;
            if (!row.empty()) row += ',';
            row += fields[i];
        }
        out += row + '\n';
    }
    return out;
}

struct SummaryRow {
    Index grid_id = 0;
    std::string label;  // the grid-defining columns joined with ';'
    Index repeats = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single repeat
    bool flagged = false;
};

/// Groups rows by grid point and flags grid points whose mean LRAP differs from the
/// baseline grid point's mean by more than one baseline standard deviation. With
/// baseline_grid < 0, the first grid point without projection is the baseline (grid 0
/// if there is none).
inline std::vector<SummaryRow> summarize(const std::string& csv, long long baseline_grid = -1) {
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> header;
    std::map<Index, std::vector<double>> scores;
    std::map<Index, std::string> labels;
    std::map<Index, std::string> policies;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (header.empty()) {
            header = fields;
            continue;
        }
        auto col = [&](const std::string& name) -> const std::string& {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw std::invalid_argument("summarize: missing column '" + name + "'");
            const auto idx = static_cast<Index>(it - header.begin());
            if (idx >= fields.size()) throw std::invalid_argument("summarize: short row");
            return fields[idx];
        };
        const auto gid = rpforest::detail::parse_number<Index>(col("grid_id"));
        const auto value = rpforest::detail::parse_number<double>(col("lrap"));
        if (!gid || !value) throw std::invalid_argument("summarize: malformed row '" + line + "'");
        scores[*gid].push_back(*value);
        std::string label;
        for (const char* name : {"policy", "projection", "m", "s", "k", "t", "n_min", "splitter", "bootstrap"}) {
            if (!label.empty()) label += ';';
            label += std::string(name) + "=" + col(name);
        }
        labels[*gid] = label;
        policies[*gid] = col("policy");
    }
    if (scores.empty()) throw std::invalid_argument("summarize: no rows");

    std::vector<SummaryRow> out;
    for (const auto& [gid, vals] : scores) {
        SummaryRow r;
        r.grid_id = gid;
        r.label = labels[gid];
        r.repeats = vals.size();
        for (double v : vals) r.mean += v / static_cast<double>(vals.size());
        if (vals.size() > 1) {
            double acc = 0.0;
            for (double v : vals) acc += (v - r.mean) * (v - r.mean);
            r.std = std::sqrt(acc / static_cast<double>(vals.size() - 1));
        }
        out.push_back(r);
    }
    const SummaryRow* base = nullptr;
    for (const auto& r : out) {
        if (baseline_grid >= 0 ? r.grid_id == static_cast<Index>(baseline_grid)
                               : policy_from_string(policies[r.grid_id]) == SubspacePolicy::no_projection) {
            base = &r;
            break;
        }
    }
    if (base == nullptr) {
        if (baseline_grid >= 0) throw std::invalid_argument("summarize: baseline grid point not found");
        base = &out.front();
    }
    const double base_mean = base->mean;
    const double base_std = base->std;
    const Index base_id = base->grid_id;
    for (auto& r : out) {
        r.flagged = r.grid_id != base_id && std::abs(r.mean - base_mean) > base_std;
    }
    return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "grid_id,label,repeats,mean_lrap,std_lrap,flagged\n";
    for (const auto& r : rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), ",%zu,%.6f,%.6f,%s\n", r.repeats, r.mean, r.std,
                      r.flagged ? "true" : "false");
        out += std::to_string(r.grid_id) + "," + r.label + buf;
    }
    return out;
}

}  // namespace rpforest::bench
