#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"

using namespace rpforest;

namespace {

EnsembleConfig base_config(SubspacePolicy policy, ProjectionKind kind, Index m, Index t) {
    EnsembleConfig c;
    c.t = t;
    c.policy = policy;
    c.projection = {kind, m, 1.0};
    c.tree = TreeConfig{1, 1, Splitter::exhaustive, true};
    c.master_seed = 2024;
    return c;
}

void expect_within(const TermEstimate& te, double target, double k, const char* what) {
    EXPECT_LE(std::abs(te.estimate - target), k * te.se + 1e-12) << what << " estimate " << te.estimate
                                                                   << " se " << te.se;
}

}  // namespace

TEST(Decomposition, NoiseFreeFullyCoveredGridHasNoError) {
    const SyntheticProblem pb = deterministic_grid_problem(4, 2);
    EnsembleConfig c = base_config(SubspacePolicy::shared_subspace, ProjectionKind::identity, 2, 1);
    c.tree = TreeConfig{2, 1, Splitter::exhaustive, false};
    const DecompositionReport r = estimate_single_tree(pb, c, DecompositionCounts{3, 2, 2});
    ASSERT_EQ(r.probes.size(), 16u);
    for (const auto& pd : r.probes) {
        for (const TermEstimate* te : {&pd.sigma2_r, &pd.bias2, &pd.v_ls, &pd.v_algo, &pd.v_proj, &pd.total_error}) {
            EXPECT_NEAR(te->estimate, 0.0, 1e-12);
            EXPECT_NEAR(te->se, 0.0, 1e-12);
        }
    }
}

TEST(Decomposition, IdentityProjectionHasNoProjectionVariance) {
    const SyntheticProblem pb = toy_regression_problem();
    EnsembleConfig c = base_config(SubspacePolicy::shared_subspace, ProjectionKind::identity, 2, 1);
    c.tree.splitter = Splitter::random_threshold;
    const DecompositionReport r = estimate_single_tree(pb, c, DecompositionCounts{20, 10, 10});
    for (const auto& pd : r.probes) expect_within(pd.v_proj, 0.0, 3.0, "V_Proj");
    expect_within(r.mean.v_proj, 0.0, 3.0, "mean V_Proj");
    EXPECT_GT(r.mean.v_algo.estimate, 0.0);
}

TEST(Decomposition, TermsAddUpToDirectTotal) {
    const SyntheticProblem pb = toy_regression_problem();
    const DecompositionReport r =
        estimate_single_tree(pb, base_config(SubspacePolicy::per_tree_subspace, ProjectionKind::gaussian, 1, 1),
                             DecompositionCounts{30, 20, 20});
    EXPECT_DOUBLE_EQ(r.mean.sigma2_r.estimate, 0.5);
    for (const auto& pd : r.probes) {
        EXPECT_LE(std::abs(pd.term_sum() - pd.total_error.estimate), 3.0 * pd.combined_se());
        EXPECT_NEAR(pd.additivity_gap.estimate, pd.term_sum() - pd.total_error.estimate, 1e-12);
        EXPECT_NEAR(pd.variance.estimate, pd.v_ls.estimate + pd.v_algo.estimate + pd.v_proj.estimate, 1e-12);
        for (const TermEstimate* te : {&pd.bias2, &pd.v_ls, &pd.v_algo, &pd.v_proj}) {
            EXPECT_GE(te->estimate, -3.0 * te->se);
        }
    }
    EXPECT_LE(std::abs(r.mean.term_sum() - r.mean.total_error.estimate), 3.0 * r.mean.combined_se());
    EXPECT_GT(r.mean.v_proj.estimate, 0.0);
}

TEST(Decomposition, SingleTreeEqualsOneTreeEnsemble) {
    const SyntheticProblem pb = toy_regression_problem(60);
    EnsembleConfig c = base_config(SubspacePolicy::per_tree_subspace, ProjectionKind::gaussian, 1, 1);
    const DecompositionCounts counts{6, 3, 3};
    const DecompositionReport a = estimate_ensemble(pb, c, counts);
    c.t = 9;
    c.policy = SubspacePolicy::shared_subspace;
    const DecompositionReport b = estimate_single_tree(pb, c, counts);
    EXPECT_EQ(decomposition_csv(a), decomposition_csv(b));
    EXPECT_EQ(b.t, 1u);
}

TEST(Decomposition, EnsembleScalingLaws) {
    const SyntheticProblem pb = toy_regression_problem();
    const DecompositionCounts counts{12, 6, 6};
    const Index t = 25;
    const DecompositionReport single =
        estimate_single_tree(pb, base_config(SubspacePolicy::per_tree_subspace, ProjectionKind::gaussian, 1, 1), counts);
    const DecompositionReport alg1 =
        estimate_ensemble(pb, base_config(SubspacePolicy::shared_subspace, ProjectionKind::gaussian, 1, t), counts);
    const DecompositionReport alg2 =
        estimate_ensemble(pb, base_config(SubspacePolicy::per_tree_subspace, ProjectionKind::gaussian, 1, t), counts);
    auto close = [](const TermEstimate& x, double target, const TermEstimate& ref, double scale) {
        return std::abs(x.estimate - target) <= 3.0 * std::hypot(x.se, ref.se * scale);
    };
    // shared subspace averages away only the tree randomness
    EXPECT_TRUE(close(alg1.mean.v_algo, single.mean.v_algo.estimate / t, single.mean.v_algo, 1.0 / t));
    EXPECT_TRUE(close(alg1.mean.v_proj, single.mean.v_proj.estimate, single.mean.v_proj, 1.0));
    // per-tree subspaces average away both
    EXPECT_TRUE(close(alg2.mean.v_proj, single.mean.v_proj.estimate / t, single.mean.v_proj, 1.0 / t));
    EXPECT_LE(alg2.mean.total_error.estimate,
              alg1.mean.total_error.estimate + 3.0 * std::hypot(alg1.mean.total_error.se, alg2.mean.total_error.se));
}

TEST(Decomposition, RejectsTooFewRepetitions) {
    const SyntheticProblem pb = toy_regression_problem();
    EXPECT_THROW(estimate_ensemble(pb, base_config(SubspacePolicy::per_tree_subspace, ProjectionKind::gaussian, 1, 1),
                                   DecompositionCounts{1, 2, 2}),
                 std::invalid_argument);
}

TEST(Decomposition, CsvLayout) {
    const SyntheticProblem pb = toy_regression_problem(40);
    const DecompositionReport r =
        estimate_single_tree(pb, base_config(SubspacePolicy::per_tree_subspace, ProjectionKind::gaussian, 1, 1),
                             DecompositionCounts{3, 2, 2});
    std::istringstream in(decomposition_csv(r));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "probe,term,estimate,se");
    Index rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 7u * 6u);
}

TEST(InverseT, RecoversExactLaw) {
    const std::vector<double> ts{1, 2, 5, 10, 25};
    std::vector<double> v;
    for (double t : ts) v.push_back(0.3 + 0.8 / t);
    const InverseTFit f = fit_inverse_t(ts, v);
    EXPECT_NEAR(f.a, 0.3, 1e-12);
    EXPECT_NEAR(f.b, 0.8, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    const std::vector<double> flat{1.0, 0.0, 1.0, 0.0, 1.0};
    EXPECT_LT(fit_inverse_t(ts, flat).r2, 0.5);
    EXPECT_THROW(fit_inverse_t(std::vector<double>{1, 2}, std::vector<double>{1, 2}), std::invalid_argument);
}
