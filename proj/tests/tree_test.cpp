#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_support.hpp"

using namespace rpforest;

namespace {

std::vector<Index> all_rows(Index n) {
    std::vector<Index> r(n);
    std::iota(r.begin(), r.end(), Index{0});
    return r;
}

// x = [0, 1, 10, 11], y = (1,0), (1,0), (0,1), (0,1)
DataSet toy() {
    DenseMatrix x(4, 1, std::vector<double>{0, 1, 10, 11});
    return DataSet(std::move(x), SparseMatrix::from_rows(2, {{{0, 1.0}}, {{0, 1.0}}, {{1, 1.0}}, {{1, 1.0}}}));
}

ProjectionMatrix identity(Index d) {
    RngStream rng(0, 0);
    return generate(ProjectionSpec{ProjectionKind::identity, d, 1.0}, d, rng);
}

// Brute force over every feature and midpoint, scored by direct variance evaluation.
struct BruteSplit {
    Index feature = 0;
    double threshold = 0.0;
    double gain = -1.0;
};

BruteSplit brute_force_split(const DataSet& ds, const DenseMatrix& z) {
    BruteSplit best;
    const auto grid = rpf_test::to_grid(z);
    for (Index f = 0; f < ds.feature_count(); ++f) {
        std::vector<double> vals;
        for (Index i = 0; i < ds.sample_count(); ++i) vals.push_back(ds.feature(i, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const double thr = (vals[k] + vals[k + 1]) / 2.0;
            rpf_test::Grid left, right;
            for (Index i = 0; i < ds.sample_count(); ++i) {
                (ds.feature(i, f) <= thr ? left : right).push_back(grid[i]);
            }
            const double n = static_cast<double>(grid.size());
            const double gain = rpf_test::pairwise_variance(grid) -
                                static_cast<double>(left.size()) / n * rpf_test::pairwise_variance(left) -
                                static_cast<double>(right.size()) / n * rpf_test::pairwise_variance(right);
            if (gain > best.gain + 1e-12) best = {f, thr, gain};
        }
    }
    return best;
}

}  // namespace

TEST(Variance, WorkedExample) {
    const DenseMatrix z(2, 2, std::vector<double>{0, 0, 2, 2});
    EXPECT_DOUBLE_EQ(variance_sum(z), 2.0);
    EXPECT_DOUBLE_EQ(variance_sum_pairwise(z), 16.0 / (2.0 * 4.0));
}

TEST(Variance, DegenerateCases) {
    EXPECT_EQ(variance_sum(DenseMatrix(5, 3, 0.7)), 0.0);
    EXPECT_EQ(variance_sum(DenseMatrix(1, 3, 4.0)), 0.0);
    const std::vector<Index> none;
    EXPECT_THROW(variance_sum(DenseMatrix(2, 2), none), std::invalid_argument);
}

TEST(Variance, CenteredEqualsPairwise) {
    std::mt19937_64 gen(12);
    std::uniform_int_distribution<int> size(1, 30), dims(1, 20);
    std::normal_distribution<double> v(0.0, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
        DenseMatrix z(size(gen), dims(gen));
        for (double& e : z.values()) e = v(gen);
        const double oracle = rpf_test::pairwise_variance(rpf_test::to_grid(z));
        EXPECT_LE(std::abs(variance_sum(z) - oracle), 1e-10 * std::max(1.0, oracle));
        EXPECT_LE(std::abs(variance_sum_pairwise(z) - oracle), 1e-10 * std::max(1.0, oracle));
    }
}

TEST(Variance, ScalesQuadratically) {
    std::mt19937_64 gen(13);
    const DenseMatrix z = rpf_test::random_dense(25, 6, gen);
    for (double c : {0.5, 3.0, -7.0}) {
        DenseMatrix cz = z;
        for (double& e : cz.values()) e *= c;
        EXPECT_NEAR(variance_sum(cz), c * c * variance_sum(z), 1e-12 * c * c * variance_sum(z));
    }
}

TEST(ExhaustiveSplit, ToyProblem) {
    const DataSet ds = toy();
    const DenseMatrix z = ds.dense_outputs();
    const std::vector<Index> features{0};
    const auto rows = all_rows(4);
    const auto s = best_split_exhaustive(rows, ds, z, features);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->feature, 0u);
    EXPECT_DOUBLE_EQ(s->threshold, 5.5);
    EXPECT_NEAR(s->impurity_reduction, 0.5, 1e-15);
    const std::vector<Index> l{0, 1}, r{2, 3};
    EXPECT_NEAR(impurity_reduction(z, l, r), 0.5, 1e-15);
}

TEST(ExhaustiveSplit, PureNodeHasNoSplit) {
    DenseMatrix x(4, 1, std::vector<double>{0, 1, 2, 3});
    const DataSet ds(std::move(x), SparseMatrix::from_rows(1, {{{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}}));
    const std::vector<Index> features{0};
    const auto rows = all_rows(4);
    EXPECT_FALSE(best_split_exhaustive(rows, ds, ds.dense_outputs(), features));
}

TEST(ExhaustiveSplit, ConstantFeatureContributesNothing) {
    DenseMatrix x(4, 2, std::vector<double>{3, 0, 3, 1, 3, 10, 3, 11});
    const DataSet ds(std::move(x), toy().outputs());
    const auto rows = all_rows(4);
    const std::vector<Index> only_constant{0};
    EXPECT_FALSE(best_split_exhaustive(rows, ds, ds.dense_outputs(), only_constant));
    const std::vector<Index> both{0, 1};
    const auto s = best_split_exhaustive(rows, ds, ds.dense_outputs(), both);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->feature, 1u);
}

TEST(ExhaustiveSplit, TiesGoToLowestFeatureThenThreshold) {
    // features 0 and 1 are identical; the labels make thresholds 0.5 and 2.5 tie
    DenseMatrix x(4, 2, std::vector<double>{0, 0, 1, 1, 2, 2, 3, 3});
    const DataSet ds(std::move(x), SparseMatrix::from_rows(1, {{{0, 1.0}}, {}, {}, {{0, 1.0}}}));
    const auto rows = all_rows(4);
    const std::vector<Index> features{1, 0};
    const auto s = best_split_exhaustive(rows, ds, ds.dense_outputs(), features);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->feature, 0u);
    EXPECT_DOUBLE_EQ(s->threshold, 0.5);
}

TEST(ExhaustiveSplit, MatchesBruteForce) {
    std::mt19937_64 gen(14);
    std::uniform_int_distribution<int> coarse(0, 6);
    for (int trial = 0; trial < 100; ++trial) {
        DenseMatrix x(20, 3);
        for (double& v : x.values()) v = coarse(gen);  // coarse values create duplicates
        const DataSet ds(std::move(x), rpf_test::random_binary_labels(20, 5, 0.4, gen));
        const DenseMatrix z = ds.dense_outputs();
        const BruteSplit oracle = brute_force_split(ds, z);
        const auto rows = all_rows(20);
        const std::vector<Index> features{0, 1, 2};
        const auto s = best_split_exhaustive(rows, ds, z, features);
        if (oracle.gain <= 1e-12) {
            EXPECT_FALSE(s);
            continue;
        }
        ASSERT_TRUE(s);
        EXPECT_NEAR(s->impurity_reduction, oracle.gain, 1e-12);
        EXPECT_EQ(s->feature, oracle.feature);
        EXPECT_DOUBLE_EQ(s->threshold, oracle.threshold);
    }
}

TEST(RandomThresholdSplit, TwoSamplesForced) {
    DenseMatrix x(2, 1, std::vector<double>{1.0, 4.0});
    const DataSet ds(std::move(x), SparseMatrix::from_rows(1, {{{0, 1.0}}, {}}));
    const auto rows = all_rows(2);
    const std::vector<Index> features{0};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        RngStream rng(seed, 0);
        const auto s = best_split_random_threshold(rows, ds, ds.dense_outputs(), features, rng);
        ASSERT_TRUE(s);
        EXPECT_GE(s->threshold, 1.0);
        EXPECT_LT(s->threshold, 4.0);
        EXPECT_NEAR(s->impurity_reduction, 0.25, 1e-15);
    }
}

TEST(RandomThresholdSplit, DeterministicUnderSeed) {
    const DataSet ds = rpf_test::structured_dataset(40, 5, 4, 15);
    const auto rows = all_rows(40);
    const std::vector<Index> features{0, 1, 2, 3, 4};
    RngStream a(3, 1), b(3, 1);
    const auto s1 = best_split_random_threshold(rows, ds, ds.dense_outputs(), features, a);
    const auto s2 = best_split_random_threshold(rows, ds, ds.dense_outputs(), features, b);
    ASSERT_TRUE(s1 && s2);
    EXPECT_EQ(s1->feature, s2->feature);
    EXPECT_EQ(s1->threshold, s2->threshold);
    EXPECT_EQ(s1->impurity_reduction, s2->impurity_reduction);
}

TEST(RandomThresholdSplit, SeparableDataAlwaysGains) {
    const DataSet ds = toy();
    const auto rows = all_rows(4);
    const std::vector<Index> features{0};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RngStream rng(seed, 0);
        const auto s = best_split_random_threshold(rows, ds, ds.dense_outputs(), features, rng);
        ASSERT_TRUE(s);
        EXPECT_GT(s->impurity_reduction, 0.0);
    }
}

TEST(Grow, NoSplitWhenNodeTooSmall) {
    const DataSet ds = rpf_test::structured_dataset(30, 4, 5, 16);
    RngStream rng(1, 0);
    const Tree t = grow(ds, identity(5), TreeConfig{4, 31, Splitter::exhaustive, false}, rng);
    ASSERT_EQ(t.leaf_count(), 1u);
    const DenseMatrix y = ds.dense_outputs();
    for (Index c = 0; c < 5; ++c) {
        double mean = 0.0;
        for (Index i = 0; i < 30; ++i) mean += y(i, c) / 30.0;
        EXPECT_NEAR(t.leaf_values()(0, c), mean, 1e-15);
    }
    const std::vector<double> x{0.3, 0.1, 0.9, 0.5};
    EXPECT_EQ(predict_one(t, x)[0], t.leaf_values()(0, 0));
}

TEST(Grow, IdentityProjectionMatchesNoProjection) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const DataSet ds = rpf_test::structured_dataset(60, 6, 7, 100 + seed);
        for (Splitter sp : {Splitter::exhaustive, Splitter::random_threshold}) {
            const TreeConfig cfg{2, 2, sp, seed % 2 == 0};
            RngStream a(seed, 9), b(seed, 9);
            EXPECT_EQ(grow(ds, identity(7), cfg, a), grow(ds, cfg, b));
        }
    }
}

TEST(Grow, OneDimensionalGaussianRecoversToySplit) {
    const DataSet ds = toy();
    int recovered = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RngStream prng(seed, 0), trng(seed, 1);
        const ProjectionMatrix phi = generate(ProjectionSpec{ProjectionKind::gaussian, 1, 1.0}, 2, prng);
        const Tree t = grow(ds, phi, TreeConfig{1, 1, Splitter::exhaustive, false}, trng);
        const auto& root = t.nodes().front();
        if (!root.is_leaf() && root.threshold == 5.5) ++recovered;
    }
    EXPECT_GE(recovered, 95);
}

TEST(Grow, RoutingAndBoundary) {
    RngStream rng(0, 0);
    const Tree t = grow(toy(), TreeConfig{1, 1, Splitter::exhaustive, false}, rng);
    ASSERT_EQ(t.leaf_count(), 2u);
    const std::vector<double> a{0.2}, at{5.5}, b{10.5};
    EXPECT_EQ(predict_one(t, a)[0], 1.0);
    EXPECT_EQ(predict_one(t, a)[1], 0.0);
    EXPECT_EQ(predict_one(t, at)[0], 1.0);
    EXPECT_EQ(predict_one(t, b)[1], 1.0);
    const std::vector<double> wrong{0.2, 0.3};
    EXPECT_THROW(predict_one(t, wrong), std::invalid_argument);
}

TEST(Grow, RejectsBadConfig) {
    const DataSet ds = toy();
    RngStream rng(0, 0);
    EXPECT_THROW(grow(ds, TreeConfig{2, 1, Splitter::exhaustive, false}, rng), std::invalid_argument);
    EXPECT_THROW(grow(ds, TreeConfig{1, 0, Splitter::exhaustive, false}, rng), std::invalid_argument);
    EXPECT_THROW(grow(ds, identity(3), TreeConfig{}, rng), std::invalid_argument);
}

TEST(Grow, StructuralInvariants) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const DataSet ds = rpf_test::structured_dataset(80, 5, 6, 200 + seed);
        for (bool bootstrap : {false, true}) {
            RngStream prng(seed, 0), trng(seed, 1);
            const ProjectionMatrix phi = generate(ProjectionSpec{ProjectionKind::gaussian, 3, 1.0}, 6, prng);
            const Tree t = grow(ds, phi, TreeConfig{2, 3, Splitter::exhaustive, bootstrap}, trng);
            EXPECT_EQ(std::accumulate(t.leaf_counts().begin(), t.leaf_counts().end(), Index{0}), 80u);
            Index internal = 0;
            std::vector<int> parents(t.node_count(), 0);
            for (const auto& nd : t.nodes()) {
                if (nd.is_leaf()) continue;
                ++internal;
                EXPECT_GT(nd.impurity_reduction, 0.0);
                ++parents[nd.left];
                ++parents[nd.right];
            }
            EXPECT_EQ(parents[0], 0);
            for (Index k = 1; k < t.node_count(); ++k) EXPECT_EQ(parents[k], 1);
            EXPECT_EQ(t.leaf_count(), internal + 1);
            for (double v : t.leaf_values().values()) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
        }
    }
}

TEST(Grow, LeavesHoldOriginalOutputMeans) {
    const DataSet ds = rpf_test::structured_dataset(70, 4, 5, 17);
    RngStream prng(2, 0), trng(2, 1);
    const ProjectionMatrix phi = generate(ProjectionSpec{ProjectionKind::gaussian, 1, 1.0}, 5, prng);
    const Tree t = grow(ds, phi, TreeConfig{4, 5, Splitter::exhaustive, false}, trng);
    std::vector<std::vector<double>> sums(t.leaf_count(), std::vector<double>(5, 0.0));
    std::vector<Index> counts(t.leaf_count(), 0);
    const DenseMatrix y = ds.dense_outputs();
    std::vector<double> x(4);
    for (Index i = 0; i < 70; ++i) {
        ds.input_row(i, x);
        const Index leaf = t.leaf_index(x);
        ++counts[leaf];
        for (Index c = 0; c < 5; ++c) sums[leaf][c] += y(i, c);
    }
    for (Index l = 0; l < t.leaf_count(); ++l) {
        ASSERT_EQ(counts[l], t.leaf_counts()[l]);
        for (Index c = 0; c < 5; ++c) {
            EXPECT_NEAR(t.leaf_values()(l, c), sums[l][c] / static_cast<double>(counts[l]), 1e-15);
        }
    }
}

TEST(Grow, DeterministicUnderSeed) {
    const DataSet ds = rpf_test::structured_dataset(50, 5, 4, 18);
    RngStream a(7, 3), b(7, 3);
    const TreeConfig cfg{2, 1, Splitter::random_threshold, true};
    EXPECT_EQ(grow(ds, cfg, a), grow(ds, cfg, b));
}

TEST(Grow, SparseInputsMatchDenseInputs) {
    const DataSet dense = rpf_test::structured_dataset(50, 5, 4, 19);
    const DataSet sparse(SparseMatrix::from_dense(std::get<DenseMatrix>(dense.inputs())), dense.outputs());
    const TreeConfig cfg{3, 1, Splitter::exhaustive, true};
    RngStream a(1, 1), b(1, 1);
    EXPECT_EQ(grow(dense, cfg, a), grow(sparse, cfg, b));
}

TEST(TreeJson, RoundTrip) {
    const DataSet ds = rpf_test::structured_dataset(60, 5, 6, 20);
    RngStream rng(3, 3);
    const Tree t = grow(ds, TreeConfig{2, 2, Splitter::random_threshold, true}, rng);
    const Tree back = tree_from_json(nlohmann::json::parse(to_json(t).dump()));
    EXPECT_EQ(back, t);
    nlohmann::json bad = to_json(t);
    bad["version"] = 99;
    EXPECT_THROW(tree_from_json(bad), std::exception);
}

// Child variances are pairwise sums too, so with every pair preserved within eps the
// projected gain stays within eps * (Var(S) + weighted child variances) of the original.
TEST(SplitScore, ProjectedGainTracksOriginalGain) {
    std::mt19937_64 gen(21);
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const DataSet ds = rpf_test::random_dataset(16, 1, 80, 0.2, 300 + seed);
        const double eps = 0.5;
        RngStream prng(seed, 0);
        const ProjectionMatrix phi = generate(ProjectionSpec{ProjectionKind::gaussian, 60, 1.0}, 80, prng);
        if (distortion_check(phi, ds.outputs(), eps).violations != 0) continue;
        ++checked;
        const DenseMatrix y = ds.dense_outputs();
        const DenseMatrix z = project(phi, ds.outputs());
        std::vector<Index> order = all_rows(16);
        std::sort(order.begin(), order.end(), [&](Index a, Index b) { return ds.feature(a, 0) < ds.feature(b, 0); });
        const double parent = variance_sum(y);
        for (Index cut = 1; cut < 16; ++cut) {
            const std::vector<Index> l(order.begin(), order.begin() + cut), r(order.begin() + cut, order.end());
            const double children = static_cast<double>(cut) / 16.0 * variance_sum(y, l) +
                                    static_cast<double>(16 - cut) / 16.0 * variance_sum(y, r);
            const double orig = impurity_reduction(y, l, r);
            const double proj = impurity_reduction(z, l, r);
            EXPECT_LE(std::abs(proj - orig), eps * (parent + children) + 1e-12);
        }
    }
    EXPECT_GT(checked, 10);
}
