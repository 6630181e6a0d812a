#pragma once

// Monte Carlo bias/variance decomposition of projected-output tree ensembles on
// synthetic problems with a known conditional mean.
//
// Three nested loops: learning samples (outer), projections (middle), tree
// randomization (inner). With f_lab the prediction at a probe point for learning
// sample l, projection draw a and tree draw b:
//
//   V_Algo = E_l[ E_a[ Var_b f ] ]
//   V_Proj = E_l[ Var_a E_b f ]
//   V_LS   = Var_l E_ab f
//
// each estimated with the unbiased nested random-effects estimators, and the squared
// bias corrected for the variance of the grand mean. Standard errors are delete-one
// jackknife estimates over learning samples.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpforest/core.hpp"
#include "rpforest/ensemble.hpp"
#include "rpforest/projection.hpp"
#include "rpforest/tree.hpp"

namespace rpforest {

/// A regression problem Y = f_B(x) + N(0, noise_sd^2 I_d) with known f_B.
struct SyntheticProblem {
    Index p = 2;
    Index d = 2;
    Index n = 100;
    double noise_sd = 0.0;
    std::function<DenseMatrix(Index n, RngStream& rng)> sample_inputs;
    std::function<std::vector<double>(std::span<const double> x)> bayes;
    DenseMatrix probes;  // q x p

    double residual_variance() const { return static_cast<double>(d) * noise_sd * noise_sd; }

    DataSet draw_learning_sample(RngStream& rng) const {
        DenseMatrix x = sample_inputs(n, rng);
        DenseMatrix y(n, d);
        for (Index i = 0; i < n; ++i) {
            const auto mean = bayes(x.row(i));
            for (Index c = 0; c < d; ++c) {
                y(i, c) = mean[c] + noise_sd * rng.next_gaussian();
            }
        }
        return DataSet(std::move(x), SparseMatrix::from_dense(y));
    }
};

/// Two inputs uniform on [0,1]^2, two outputs (sin 2 pi x1, cos 2 pi x2), gaussian noise.
inline SyntheticProblem toy_regression_problem(Index n = 100, double noise_sd = 0.5) {
    SyntheticProblem pb;
    pb.p = 2;
    pb.d = 2;
    pb.n = n;
    pb.noise_sd = noise_sd;
    pb.sample_inputs = [](Index rows, RngStream& rng) {
        DenseMatrix x(rows, 2);
        for (double& v : x.values()) v = rng.next_uniform();
        return x;
    };
    pb.bayes = [](std::span<const double> x) {
        return std::vector<double>{std::sin(2.0 * std::numbers::pi * x[0]),
                                   std::cos(2.0 * std::numbers::pi * x[1])};
    };
    pb.probes = DenseMatrix(5, 2, {0.1, 0.2, 0.3, 0.7, 0.5, 0.5, 0.7, 0.3, 0.9, 0.8});
    return pb;
}

/// Noise-free problem on a g x g input grid; every learning sample contains each grid
/// point `copies` times, so no learning-sample randomness remains.
inline SyntheticProblem deterministic_grid_problem(Index g = 4, Index copies = 2) {
    SyntheticProblem pb;
    pb.p = 2;
    pb.d = 2;
    pb.n = g * g * copies;
    pb.noise_sd = 0.0;
    pb.sample_inputs = [g](Index rows, RngStream&) {
        DenseMatrix x(rows, 2);
        for (Index i = 0; i < rows; ++i) {
            const Index cell = i % (g * g);
            x(i, 0) = static_cast<double>(cell / g);
            x(i, 1) = static_cast<double>(cell % g);
        }
        return x;
    };
    pb.bayes = [](std::span<const double> x) {
        return std::vector<double>{x[0] * 0.25 + (x[1] > 1.5 ? 1.0 : 0.0), x[0] * x[1] * 0.1};
    };
    pb.probes = DenseMatrix(g * g, 2);
    for (Index cell = 0; cell < g * g; ++cell) {
        pb.probes(cell, 0) = static_cast<double>(cell / g);
        pb.probes(cell, 1) = static_cast<double>(cell % g);
    }
    return pb;
}

struct DecompositionCounts {
    Index n_ls = 30;
    Index n_phi = 20;
    Index n_eps = 20;
};

struct TermEstimate {
    double estimate = 0.0;
    double se = 0.0;
};

struct ProbeDecomposition {
    TermEstimate sigma2_r;
    TermEstimate bias2;
    TermEstimate v_ls;
    TermEstimate v_algo;
    TermEstimate v_proj;
    TermEstimate total_error;  // direct estimate of E{Err}
    TermEstimate variance;     // V_LS + V_Algo + V_Proj
    TermEstimate additivity_gap;  // (sum of terms) - total_error

    double term_sum() const {
        return sigma2_r.estimate + bias2.estimate + v_ls.estimate + v_algo.estimate + v_proj.estimate;
    }
    /// Root-sum-square of the term SEs and the direct-total SE.
    double combined_se() const {
        return std::sqrt(bias2.se * bias2.se + v_ls.se * v_ls.se + v_algo.se * v_algo.se +
                         v_proj.se * v_proj.se + total_error.se * total_error.se);
    }
};

struct DecompositionReport {
    std::vector<ProbeDecomposition> probes;
    ProbeDecomposition mean;  // averaged over probe points
    DecompositionCounts counts;
    Index t = 1;
    SubspacePolicy policy = SubspacePolicy::per_tree_subspace;
};

namespace detail {

// Per learning-sample summaries at one probe point; every term is a function of these.
struct LsSummary {
    std::vector<double> g;  // mean prediction over (a, b), length d
    double within = 0.0;    // W_l: mean over a of the unbiased variance across b
    double between = 0.0;   // B_l: unbiased variance across a of cell means
    double sq_error = 0.0;  // mean over (a, b) of |f_B - f|^2
};

struct Terms {
    double bias2, v_ls, v_algo, v_proj, total, variance, gap;
};

inline Terms terms_from(const std::vector<const LsSummary*>& ls, const std::vector<double>& bayes,
                        double sigma2, const DecompositionCounts& c) {
    const double nl = static_cast<double>(ls.size());
    const Index d = bayes.size();
    std::vector<double> grand(d, 0.0);
    double mean_w = 0.0, mean_b = 0.0, mean_sq = 0.0;
    for (const auto* s : ls) {
        for (Index k = 0; k < d; ++k) grand[k] += s->g[k] / nl;
        mean_w += s->within / nl;
        mean_b += s->between / nl;
        mean_sq += s->sq_error / nl;
    }
    double s_g = 0.0;
    for (const auto* s : ls) {
        for (Index k = 0; k < d; ++k) {
            const double diff = s->g[k] - grand[k];
            s_g += diff * diff;
        }
    }
    s_g /= (nl - 1.0);
    double raw_bias = 0.0;
    for (Index k = 0; k < d; ++k) {
        const double diff = bayes[k] - grand[k];
        raw_bias += diff * diff;
    }
    Terms t{};
    t.v_algo = mean_w;
    t.v_proj = mean_b - mean_w / static_cast<double>(c.n_eps);
    t.v_ls = s_g - mean_b / static_cast<double>(c.n_phi);
    t.bias2 = raw_bias - s_g / nl;
    t.total = sigma2 + mean_sq;
    t.variance = t.v_ls + t.v_algo + t.v_proj;
    t.gap = sigma2 + t.bias2 + t.variance - t.total;
    return t;
}

inline ProbeDecomposition decompose_probe(const std::vector<LsSummary>& ls,
                                          const std::vector<double>& bayes, double sigma2,
                                          const DecompositionCounts& c) {
    std::vector<const LsSummary*> all;
    for (const auto& s : ls) all.push_back(&s);
    const Terms full = terms_from(all, bayes, sigma2, c);

    // delete-one jackknife over learning samples
    const Index n = ls.size();
    std::vector<Terms> jack;
    for (Index drop = 0; drop < n; ++drop) {
        std::vector<const LsSummary*> sub;
        for (Index l = 0; l < n; ++l) {
            if (l != drop) sub.push_back(&ls[l]);
        }
        jack.push_back(terms_from(sub, bayes, sigma2, c));
    }
    auto se = [&](double Terms::*field) {
        double mean = 0.0;
        for (const auto& j : jack) mean += j.*field / static_cast<double>(n);
        double acc = 0.0;
        for (const auto& j : jack) acc += (j.*field - mean) * (j.*field - mean);
        return std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * acc);
    };
    ProbeDecomposition out;
    out.sigma2_r = {sigma2, 0.0};
    out.bias2 = {full.bias2, se(&Terms::bias2)};
    out.v_ls = {full.v_ls, se(&Terms::v_ls)};
    out.v_algo = {full.v_algo, se(&Terms::v_algo)};
    out.v_proj = {full.v_proj, se(&Terms::v_proj)};
    out.total_error = {full.total, se(&Terms::total)};
    out.variance = {full.variance, se(&Terms::variance)};
    out.additivity_gap = {full.gap, se(&Terms::gap)};
    return out;
}

}  // namespace detail

/// Decomposes the error of a t-tree ensemble built with cfg.policy (t = 1 gives the
/// single-tree decomposition). cfg.t, cfg.projection, cfg.tree, cfg.master_seed and
/// cfg.threads are honored. The projection layer draws one matrix (shared policy), t
/// matrices (per-tree policy) or none (no projection).
inline DecompositionReport estimate_ensemble(const SyntheticProblem& problem, const EnsembleConfig& cfg,
                                             const DecompositionCounts& counts) {
    if (counts.n_ls < 2 || counts.n_phi < 2 || counts.n_eps < 2) {
        throw std::invalid_argument("decomposition: every repetition count must be >= 2");
    }
    if (cfg.t < 1) {
        throw std::invalid_argument("decomposition: t must be >= 1");
    }
    const Index q = problem.probes.rows();
    const Index d = problem.d;
    const Index t = cfg.t;
    std::vector<std::vector<double>> bayes(q);
    for (Index i = 0; i < q; ++i) bayes[i] = problem.bayes(problem.probes.row(i));

    // summaries[l][probe]
    std::vector<std::vector<detail::LsSummary>> summaries(counts.n_ls);

    detail::parallel_for(counts.n_ls, cfg.threads, [&](Index l) {
        RngStream ls_rng(mix_seed(cfg.master_seed, {0x15u, l}), 0);
        const DataSet ls = problem.draw_learning_sample(ls_rng);

        // preds[a][b] is q x d
        std::vector<std::vector<DenseMatrix>> preds(counts.n_phi,
                                                    std::vector<DenseMatrix>(counts.n_eps));
        for (Index a = 0; a < counts.n_phi; ++a) {
            const std::uint64_t phi_seed = mix_seed(cfg.master_seed, {0xf1u, l, a});
            std::vector<DenseMatrix> z;
            switch (cfg.policy) {
                case SubspacePolicy::no_projection:
                    z.push_back(ls.dense_outputs());
                    break;
                case SubspacePolicy::shared_subspace: {
                    RngStream rng(phi_seed, 0);
                    z.push_back(project(generate(cfg.projection, ls, rng), ls));
                    break;
                }
                case SubspacePolicy::per_tree_subspace:
                    for (Index j = 0; j < t; ++j) {
                        RngStream rng(phi_seed, j);
                        z.push_back(project(generate(cfg.projection, ls, rng), ls));
                    }
                    break;
            }
            for (Index b = 0; b < counts.n_eps; ++b) {
                const std::uint64_t eps_seed = mix_seed(cfg.master_seed, {0xe5u, l, a, b});
                DenseMatrix acc(q, d);
                for (Index j = 0; j < t; ++j) {
                    RngStream rng(eps_seed, j);
                    const Tree tree = grow_on(ls, z.size() == 1 ? z[0] : z[j], cfg.tree, rng);
                    for (Index i = 0; i < q; ++i) {
                        const auto leaf = predict_one(tree, problem.probes.row(i));
                        for (Index c = 0; c < d; ++c) acc(i, c) += leaf[c];
                    }
                }
                for (double& v : acc.values()) v /= static_cast<double>(t);
                preds[a][b] = std::move(acc);
            }
        }

        summaries[l].resize(q);
        const double n_phi = static_cast<double>(counts.n_phi);
        const double n_eps = static_cast<double>(counts.n_eps);
        for (Index i = 0; i < q; ++i) {
            detail::LsSummary& s = summaries[l][i];
            s.g.assign(d, 0.0);
            std::vector<std::vector<double>> cell(counts.n_phi, std::vector<double>(d, 0.0));
            for (Index a = 0; a < counts.n_phi; ++a) {
                for (Index b = 0; b < counts.n_eps; ++b) {
                    for (Index c = 0; c < d; ++c) {
                        const double v = preds[a][b](i, c);
                        cell[a][c] += v / n_eps;
                        const double err = bayes[i][c] - v;
                        s.sq_error += err * err / (n_phi * n_eps);
                    }
                }
                for (Index c = 0; c < d; ++c) s.g[c] += cell[a][c] / n_phi;
                double w = 0.0;
                for (Index b = 0; b < counts.n_eps; ++b) {
                    for (Index c = 0; c < d; ++c) {
                        const double diff = preds[a][b](i, c) - cell[a][c];
                        w += diff * diff;
                    }
                }
                s.within += w / (n_eps - 1.0) / n_phi;
            }
            for (Index a = 0; a < counts.n_phi; ++a) {
                for (Index c = 0; c < d; ++c) {
                    const double diff = cell[a][c] - s.g[c];
                    s.between += diff * diff / (n_phi - 1.0);
                }
            }
        }
    });

    DecompositionReport rep;
    rep.counts = counts;
    rep.t = t;
    rep.policy = cfg.policy;
    const double sigma2 = problem.residual_variance();
    for (Index i = 0; i < q; ++i) {
        std::vector<detail::LsSummary> per_ls;
        for (Index l = 0; l < counts.n_ls; ++l) per_ls.push_back(summaries[l][i]);
        rep.probes.push_back(detail::decompose_probe(per_ls, bayes[i], sigma2, counts));
    }

    // Probe average: stack the probes as extra output dimensions and divide by q.
    std::vector<detail::LsSummary> stacked(counts.n_ls);
    std::vector<double> stacked_bayes;
    const double inv_sqrt_q = 1.0 / std::sqrt(static_cast<double>(q));
    for (Index i = 0; i < q; ++i) {
        for (double v : bayes[i]) stacked_bayes.push_back(v * inv_sqrt_q);
    }
    for (Index l = 0; l < counts.n_ls; ++l) {
        for (Index i = 0; i < q; ++i) {
            const auto& s = summaries[l][i];
            for (double v : s.g) stacked[l].g.push_back(v * inv_sqrt_q);
            stacked[l].within += s.within / static_cast<double>(q);
            stacked[l].between += s.between / static_cast<double>(q);
            stacked[l].sq_error += s.sq_error / static_cast<double>(q);
        }
    }
    rep.mean = detail::decompose_probe(stacked, stacked_bayes, sigma2, counts);
    return rep;
}

/// Single-tree decomposition: one tree per (learning sample, projection, randomization).
inline DecompositionReport estimate_single_tree(const SyntheticProblem& problem, EnsembleConfig cfg,
                                                const DecompositionCounts& counts) {
    cfg.t = 1;
    if (cfg.policy == SubspacePolicy::shared_subspace) {
        cfg.policy = SubspacePolicy::per_tree_subspace;  // identical when t = 1
    }
    return estimate_ensemble(problem, cfg, counts);
}

/// CSV with columns probe,term,estimate,se; the probe average is labelled "mean".
inline std::string decomposition_csv(const DecompositionReport& rep) {
    std::string out = "probe,term,estimate,se\n";
    auto emit = [&](const std::string& probe, const ProbeDecomposition& pd) {
        auto row = [&](const char* term, const TermEstimate& te) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s,%s,%.10g,%.10g\n", probe.c_str(), term, te.estimate, te.se);
            out += buf;
        };
        row("sigma2_R", pd.sigma2_r);
        row("bias2", pd.bias2);
        row("V_LS", pd.v_ls);
        row("V_Algo", pd.v_algo);
        row("V_Proj", pd.v_proj);
        row("variance", pd.variance);
        row("total_error", pd.total_error);
    };
    for (Index i = 0; i < rep.probes.size(); ++i) emit(std::to_string(i), rep.probes[i]);
    emit("mean", rep.mean);
    return out;
}

struct InverseTFit {
    double a = 0.0;
    double b = 0.0;
    double r2 = 0.0;
};

/// Least-squares fit of values ~ a + b / t.
inline InverseTFit fit_inverse_t(std::span<const double> ts, std::span<const double> values) {
    if (ts.size() != values.size() || ts.size() < 3) {
        throw std::invalid_argument("fit_inverse_t: need at least three matching points");
    }
    const double n = static_cast<double>(ts.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (Index i = 0; i < ts.size(); ++i) {
        const double x = 1.0 / ts[i];
        sx += x;
        sy += values[i];
        sxx += x * x;
        sxy += x * values[i];
    }
    InverseTFit fit;
    fit.b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.a = (sy - fit.b * sx) / n;
    const double mean = sy / n;
    double ss_res = 0, ss_tot = 0;
    for (Index i = 0; i < ts.size(); ++i) {
        const double pred = fit.a + fit.b / ts[i];
        ss_res += (values[i] - pred) * (values[i] - pred);
        ss_tot += (values[i] - mean) * (values[i] - mean);
    }
    fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

}  // namespace rpforest
