#pragma once

// Multi-output regression trees grown on (possibly projected) outputs, with leaf
// vectors computed in the original output space.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpforest/core.hpp"
#include "rpforest/projection.hpp"

namespace rpforest {

/// Sum over output dimensions of the per-dimension variance of the given rows:
/// (1/|S|) sum_i |z_i - mean|^2. Deviations are taken from the first row, so identical
/// rows give exactly zero.
inline double variance_sum(const DenseMatrix& z, std::span<const Index> rows) {
    if (rows.empty()) {
        throw std::invalid_argument("variance_sum: empty row set");
    }
    const Index m = z.cols();
    const auto origin = z.row(rows.front());
    std::vector<double> mean(m, 0.0);
    for (Index r : rows) {
        const auto zr = z.row(r);
        for (Index c = 0; c < m; ++c) mean[c] += zr[c] - origin[c];
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (double& v : mean) v *= inv;
    double total = 0.0;
    for (Index r : rows) {
        const auto zr = z.row(r);
        for (Index c = 0; c < m; ++c) {
            const double diff = (zr[c] - origin[c]) - mean[c];
            total += diff * diff;
        }
    }
    return total * inv;
}

inline double variance_sum(const DenseMatrix& z) {
    std::vector<Index> rows(z.rows());
    std::iota(rows.begin(), rows.end(), Index{0});
    return variance_sum(z, rows);
}

/// Same quantity through the pairwise form (1/(2|S|^2)) sum_i sum_j |z_i - z_j|^2.
inline double variance_sum_pairwise(const DenseMatrix& z, std::span<const Index> rows) {
    if (rows.empty()) {
        throw std::invalid_argument("variance_sum_pairwise: empty row set");
    }
    double total = 0.0;
    for (Index a : rows) {
        const auto za = z.row(a);
        for (Index b : rows) {
            const auto zb = z.row(b);
            for (Index c = 0; c < z.cols(); ++c) {
                const double diff = za[c] - zb[c];
                total += diff * diff;
            }
        }
    }
    const double n = static_cast<double>(rows.size());
    return total / (2.0 * n * n);
}

inline double variance_sum_pairwise(const DenseMatrix& z) {
    std::vector<Index> rows(z.rows());
    std::iota(rows.begin(), rows.end(), Index{0});
    return variance_sum_pairwise(z, rows);
}

/// Var(S) - |L|/|S| Var(L) - |R|/|S| Var(R) evaluated directly from the partition.
inline double impurity_reduction(const DenseMatrix& z, std::span<const Index> left,
                                 std::span<const Index> right) {
    std::vector<Index> all(left.begin(), left.end());
    all.insert(all.end(), right.begin(), right.end());
    const double n = static_cast<double>(all.size());
    return variance_sum(z, all) - static_cast<double>(left.size()) / n * variance_sum(z, left) -
           static_cast<double>(right.size()) / n * variance_sum(z, right);
}

enum class Splitter { exhaustive, random_threshold };

inline std::string_view to_string(Splitter s) {
    return s == Splitter::exhaustive ? "exhaustive" : "random_threshold";
}

inline Splitter splitter_from_string(std::string_view s) {
    if (s == "exhaustive") return Splitter::exhaustive;
    if (s == "random_threshold") return Splitter::random_threshold;
    throw std::invalid_argument("unknown splitter '" + std::string(s) + "'");
}

struct TreeConfig {
    Index k = 1;      // features tried per split
    Index n_min = 1;  // a split is attempted when the node holds at least n_min samples
    Splitter splitter = Splitter::exhaustive;
    bool bootstrap = false;
};

struct SplitRecord {
    Index feature = 0;
    double threshold = 0.0;
    double impurity_reduction = 0.0;
};

namespace detail {

inline constexpr double kPureVariance = 1e-12;
// Gains at or below this fraction of the parent variance are rounding noise.
inline constexpr double kMinRelativeGain = 1e-12;

inline double squared_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double squared_norm_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (Index c = 0; c < a.size(); ++c) {
        const double v = a[c] - b[c];
        s += v * v;
    }
    return s;
}

struct NodeStats {
    std::vector<double> sum;
    double sum_sq = 0.0;  // sum of |z_i|^2
    double variance = 0.0;
};

inline NodeStats node_stats(const DenseMatrix& z, std::span<const Index> samples) {
    NodeStats st;
    st.sum.assign(z.cols(), 0.0);
    for (Index s : samples) {
        const auto zr = z.row(s);
        for (Index c = 0; c < z.cols(); ++c) {
            st.sum[c] += zr[c];
            st.sum_sq += zr[c] * zr[c];
        }
    }
    const double n = static_cast<double>(samples.size());
    st.variance = std::max(0.0, st.sum_sq / n - squared_norm(st.sum) / (n * n));
    return st;
}

// n * Delta I expressed through child sums; the sum-of-squares terms cancel.
inline double scaled_gain(double left_sq, double right_sq, double parent_sq, double n_left,
                          double n_right, double n) {
    return left_sq / n_left + right_sq / n_right - parent_sq / n;
}

inline bool better(const std::optional<SplitRecord>& best, double gain) {
    return !best || gain > best->impurity_reduction;
}

}  // namespace detail

/// Best (feature, midpoint) over the candidate features, scanning sorted values with
/// running per-dimension sums. Returns none when no candidate cut has positive gain.
inline std::optional<SplitRecord> best_split_exhaustive(std::span<const Index> samples,
                                                        const DataSet& x, const DenseMatrix& z,
                                                        std::span<const Index> features) {
    if (samples.size() < 2 || features.empty()) {
        return std::nullopt;
    }
    const Index m = z.cols();
    const Index n = samples.size();
    const detail::NodeStats parent = detail::node_stats(z, samples);
    const double parent_sq = detail::squared_norm(parent.sum);
    const double nd = static_cast<double>(n);

    std::vector<Index> sorted_features(features.begin(), features.end());
    std::sort(sorted_features.begin(), sorted_features.end());

    std::optional<SplitRecord> best;
    std::vector<std::pair<double, Index>> column(n);
    std::vector<double> left(m);
    for (Index f : sorted_features) {
        for (Index i = 0; i < n; ++i) {
            column[i] = {x.feature(samples[i], f), samples[i]};
        }
        std::sort(column.begin(), column.end());
        if (column.front().first == column.back().first) {
            continue;
        }
        std::fill(left.begin(), left.end(), 0.0);
        for (Index i = 0; i + 1 < n; ++i) {
            const auto zr = z.row(column[i].second);
            for (Index c = 0; c < m; ++c) left[c] += zr[c];
            const double lo = column[i].first;
            const double hi = column[i + 1].first;
            if (lo == hi) {
                continue;
            }
            const double n_left = static_cast<double>(i + 1);
            const double gain =
                detail::scaled_gain(detail::squared_norm(left),
                                    detail::squared_norm_diff(parent.sum, left), parent_sq, n_left,
                                    nd - n_left, nd) /
                nd;
            if (detail::better(best, gain)) {
                double threshold = lo + (hi - lo) / 2.0;
                if (!(threshold < hi)) threshold = lo;
                best = SplitRecord{f, threshold, gain};
            }
        }
    }
    if (!best || !(best->impurity_reduction > detail::kMinRelativeGain * parent.variance)) {
        return std::nullopt;
    }
    return best;
}

/// Extra-Trees style: one uniform cut in (min, max) per candidate feature; the feature
/// whose random cut scores best wins.
inline std::optional<SplitRecord> best_split_random_threshold(std::span<const Index> samples,
                                                              const DataSet& x,
                                                              const DenseMatrix& z,
                                                              std::span<const Index> features,
                                                              RngStream& rng) {
    if (samples.size() < 2 || features.empty()) {
        return std::nullopt;
    }
    const Index m = z.cols();
    const Index n = samples.size();
    const detail::NodeStats parent = detail::node_stats(z, samples);
    const double parent_sq = detail::squared_norm(parent.sum);
    const double nd = static_cast<double>(n);

    std::vector<Index> sorted_features(features.begin(), features.end());
    std::sort(sorted_features.begin(), sorted_features.end());

    std::optional<SplitRecord> best;
    std::vector<double> values(n);
    std::vector<double> left(m);
    for (Index f : sorted_features) {
        for (Index i = 0; i < n; ++i) values[i] = x.feature(samples[i], f);
        const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
        const double lo = *mn;
        const double hi = *mx;
        if (lo == hi) {
            continue;
        }
        double threshold = lo + rng.next_uniform() * (hi - lo);
        if (!(threshold < hi)) threshold = lo;
        std::fill(left.begin(), left.end(), 0.0);
        Index n_left = 0;
        for (Index i = 0; i < n; ++i) {
            if (values[i] <= threshold) {
                const auto zr = z.row(samples[i]);
                for (Index c = 0; c < m; ++c) left[c] += zr[c];
                ++n_left;
            }
        }
        const double nl = static_cast<double>(n_left);
        const double gain = detail::scaled_gain(detail::squared_norm(left),
                                                detail::squared_norm_diff(parent.sum, left),
                                                parent_sq, nl, nd - nl, nd) /
                            nd;
        if (detail::better(best, gain)) {
            best = SplitRecord{f, threshold, gain};
        }
    }
    if (!best || !(best->impurity_reduction > detail::kMinRelativeGain * parent.variance)) {
        return std::nullopt;
    }
    return best;
}

/// Array-encoded binary tree. Internal nodes route left iff x[feature] <= threshold;
/// leaves point into a leaf_count x d matrix of original-space output means.
class Tree {
public:
    static constexpr Index kNone = std::numeric_limits<Index>::max();

    struct Node {
        Index feature = kNone;  // kNone for leaves
        double threshold = 0.0;
        double impurity_reduction = 0.0;
        Index left = kNone;
        Index right = kNone;
        Index leaf = kNone;

        bool is_leaf() const noexcept { return feature == kNone; }
        friend bool operator==(const Node&, const Node&) = default;
    };

    Tree() = default;
    Tree(Index p, Index d, std::vector<Node> nodes, DenseMatrix leaf_values,
         std::vector<Index> leaf_counts)
        : p_(p), d_(d), nodes_(std::move(nodes)), leaf_values_(std::move(leaf_values)),
          leaf_counts_(std::move(leaf_counts)) {}

    Index feature_count() const noexcept { return p_; }
    Index label_count() const noexcept { return d_; }
    Index node_count() const noexcept { return nodes_.size(); }
    Index leaf_count() const noexcept { return leaf_values_.rows(); }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const DenseMatrix& leaf_values() const noexcept { return leaf_values_; }
    const std::vector<Index>& leaf_counts() const noexcept { return leaf_counts_; }

    Index leaf_index(std::span<const double> x) const {
        if (x.size() != p_) {
            throw std::invalid_argument("predict: expected " + std::to_string(p_) +
                                        " features, got " + std::to_string(x.size()));
        }
        Index cur = 0;
        while (!nodes_[cur].is_leaf()) {
            const Node& nd = nodes_[cur];
            cur = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes_[cur].leaf;
    }

    Index depth() const {
        Index best = 0;
        std::vector<std::pair<Index, Index>> stack{{0, 0}};
        while (!stack.empty()) {
            const auto [id, dep] = stack.back();
            stack.pop_back();
            best = std::max(best, dep);
            if (!nodes_[id].is_leaf()) {
                stack.emplace_back(nodes_[id].left, dep + 1);
                stack.emplace_back(nodes_[id].right, dep + 1);
            }
        }
        return best;
    }

    friend bool operator==(const Tree&, const Tree&) = default;

private:
    Index p_ = 0;
    Index d_ = 0;
    std::vector<Node> nodes_;
    DenseMatrix leaf_values_;
    std::vector<Index> leaf_counts_;
};

/// Leaf vector reached by x.
inline std::span<const double> predict_one(const Tree& tree, std::span<const double> x) {
    return tree.leaf_values().row(tree.leaf_index(x));
}

/// Grows a tree whose structure is driven by the rows of z (one per sample of ds) and
/// whose leaves hold means of the original outputs of ds.
inline Tree grow_on(const DataSet& ds, const DenseMatrix& z, const TreeConfig& cfg,
                    RngStream& rng) {
    const Index n = ds.sample_count();
    const Index p = ds.feature_count();
    const Index d = ds.label_count();
    if (n == 0) {
        throw std::invalid_argument("grow: empty learning sample");
    }
    if (z.rows() != n) {
        throw std::invalid_argument("grow: projected outputs do not match sample count");
    }
    if (cfg.k < 1 || cfg.k > p) {
        throw std::invalid_argument("grow: k must be in [1, p]");
    }
    if (cfg.n_min < 1) {
        throw std::invalid_argument("grow: n_min must be >= 1");
    }

    std::vector<Index> samples(n);
    if (cfg.bootstrap) {
        for (Index& s : samples) s = rng.next_index(n);
    } else {
        std::iota(samples.begin(), samples.end(), Index{0});
    }

    std::vector<Tree::Node> nodes(1);
    std::vector<std::vector<double>> leaf_rows;
    std::vector<Index> leaf_counts;
    std::vector<Index> feature_pool(p);

    struct Pending {
        Index node;
        Index begin;
        Index end;
    };
    std::vector<Pending> stack{{0, 0, n}};

    auto make_leaf = [&](Index node, std::span<const Index> members) {
        std::vector<double> mean(d, 0.0);
        for (Index s : members) {
            const SparseRow sr = ds.labels(s);
            for (Index k = 0; k < sr.size(); ++k) mean[sr.indices[k]] += sr.values[k];
        }
        const double inv = 1.0 / static_cast<double>(members.size());
        for (double& v : mean) v *= inv;
        nodes[node].leaf = leaf_rows.size();
        leaf_rows.push_back(std::move(mean));
        leaf_counts.push_back(members.size());
    };

    while (!stack.empty()) {
        const Pending cur = stack.back();
        stack.pop_back();
        std::span<Index> members(samples.data() + cur.begin, cur.end - cur.begin);

        std::optional<SplitRecord> split;
        if (members.size() >= cfg.n_min && members.size() >= 2 &&
            detail::node_stats(z, members).variance > detail::kPureVariance) {
            std::iota(feature_pool.begin(), feature_pool.end(), Index{0});
            for (Index i = 0; i < cfg.k; ++i) {
                std::swap(feature_pool[i], feature_pool[i + rng.next_index(p - i)]);
            }
            std::span<const Index> candidates(feature_pool.data(), cfg.k);
            split = cfg.splitter == Splitter::exhaustive
                        ? best_split_exhaustive(members, ds, z, candidates)
                        : best_split_random_threshold(members, ds, z, candidates, rng);
        }
        if (!split) {
            make_leaf(cur.node, members);
            continue;
        }

        const auto mid = std::stable_partition(members.begin(), members.end(), [&](Index s) {
            return ds.feature(s, split->feature) <= split->threshold;
        });
        const Index split_at = cur.begin + static_cast<Index>(mid - members.begin());

        const Index left_id = nodes.size();
        const Index right_id = left_id + 1;
        nodes.resize(nodes.size() + 2);
        Tree::Node& nd = nodes[cur.node];
        nd.feature = split->feature;
        nd.threshold = split->threshold;
        nd.impurity_reduction = split->impurity_reduction;
        nd.left = left_id;
        nd.right = right_id;
        // depth-first, left subtree first
        stack.push_back({right_id, split_at, cur.end});
        stack.push_back({left_id, cur.begin, split_at});
    }

    DenseMatrix leaf_values(leaf_rows.size(), d);
    for (Index l = 0; l < leaf_rows.size(); ++l) {
        std::copy(leaf_rows[l].begin(), leaf_rows[l].end(), leaf_values.row(l).begin());
    }
    return Tree(p, d, std::move(nodes), std::move(leaf_values), std::move(leaf_counts));
}

/// Grows on the projected outputs phi * y.
inline Tree grow(const DataSet& ds, const ProjectionMatrix& phi, const TreeConfig& cfg,
                 RngStream& rng) {
    if (phi.d() != ds.label_count()) {
        throw std::invalid_argument("grow: projection input dimension " + std::to_string(phi.d()) +
                                    " does not match label count " +
                                    std::to_string(ds.label_count()));
    }
    return grow_on(ds, project(phi, ds), cfg, rng);
}

/// Grows directly on the original outputs.
inline Tree grow(const DataSet& ds, const TreeConfig& cfg, RngStream& rng) {
    return grow_on(ds, ds.dense_outputs(), cfg, rng);
}

// Serialization: {"format":"rpforest-tree","version":1,"p":..,"d":..,
//   "nodes":[[feature|-1, threshold, gain, left|-1, right|-1, leaf|-1], ...],
//   "leaf_values":[[...], ...], "leaf_counts":[...]}

inline nlohmann::json to_json(const Tree& tree) {
    auto idx = [](Index v) -> long long {
        return v == Tree::kNone ? -1 : static_cast<long long>(v);
    };
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : tree.nodes()) {
        nodes.push_back({idx(nd.feature), nd.threshold, nd.impurity_reduction, idx(nd.left),
                         idx(nd.right), idx(nd.leaf)});
    }
    nlohmann::json leaves = nlohmann::json::array();
    for (Index l = 0; l < tree.leaf_count(); ++l) {
        const auto row = tree.leaf_values().row(l);
        leaves.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return {{"format", "rpforest-tree"}, {"version", 1},        {"p", tree.feature_count()},
            {"d", tree.label_count()},   {"nodes", nodes},      {"leaf_values", leaves},
            {"leaf_counts", tree.leaf_counts()}};
}

inline Tree tree_from_json(const nlohmann::json& j) {
    if (j.at("format") != "rpforest-tree" || j.at("version") != 1) {
        throw std::runtime_error("tree_from_json: unsupported document");
    }
    auto idx = [](long long v) { return v < 0 ? Tree::kNone : static_cast<Index>(v); };
    const Index p = j.at("p").get<Index>();
    const Index d = j.at("d").get<Index>();
    std::vector<Tree::Node> nodes;
    for (const auto& e : j.at("nodes")) {
        Tree::Node nd;
        nd.feature = idx(e.at(0).get<long long>());
        nd.threshold = e.at(1).get<double>();
        nd.impurity_reduction = e.at(2).get<double>();
        nd.left = idx(e.at(3).get<long long>());
        nd.right = idx(e.at(4).get<long long>());
        nd.leaf = idx(e.at(5).get<long long>());
        nodes.push_back(nd);
    }
    const auto& leaves = j.at("leaf_values");
    DenseMatrix values(leaves.size(), d);
    for (Index l = 0; l < leaves.size(); ++l) {
        const auto row = leaves[l].get<std::vector<double>>();
        if (row.size() != d) {
            throw std::runtime_error("tree_from_json: leaf vector has wrong length");
        }
        std::copy(row.begin(), row.end(), values.row(l).begin());
    }
    return Tree(p, d, std::move(nodes), std::move(values),
                j.at("leaf_counts").get<std::vector<Index>>());
}

}  // namespace rpforest
