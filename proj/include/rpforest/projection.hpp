#pragma once

// Output-space projection matrices: random generators, PCA, application to label
// matrices and pairwise distortion checks.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rpforest/core.hpp"

namespace rpforest {

enum class ProjectionKind { gaussian, rademacher, hadamard_subsample, identity_subsample, pca, identity };

inline std::string_view to_string(ProjectionKind k) {
    switch (k) {
        case ProjectionKind::gaussian: return "gaussian";
        case ProjectionKind::rademacher: return "rademacher";
        case ProjectionKind::hadamard_subsample: return "hadamard_subsample";
        case ProjectionKind::identity_subsample: return "identity_subsample";
        case ProjectionKind::pca: return "pca";
        case ProjectionKind::identity: return "identity";
    }
    return "unknown";
}

inline ProjectionKind projection_kind_from_string(std::string_view s) {
    for (auto k : {ProjectionKind::gaussian, ProjectionKind::rademacher,
                   ProjectionKind::hadamard_subsample, ProjectionKind::identity_subsample,
                   ProjectionKind::pca, ProjectionKind::identity}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw std::invalid_argument("unknown projection kind '" + std::string(s) + "'");
}

struct ProjectionSpec {
    ProjectionKind kind = ProjectionKind::gaussian;
    Index m = 1;
    /// Sparsity parameter of the rademacher kind; a fraction 1 - 1/s of entries is zero.
    double s = 1.0;
};

/// A realized m x d linear map. Stored transposed (d x m) so that projecting a sparse
/// output row only touches the rows of its non-zero labels.
class ProjectionMatrix {
public:
    ProjectionMatrix() = default;

    static ProjectionMatrix dense(ProjectionKind kind, const DenseMatrix& phi) {
        ProjectionMatrix out;
        out.kind_ = kind;
        out.m_ = phi.rows();
        out.d_ = phi.cols();
        out.dense_t_ = DenseMatrix(phi.cols(), phi.rows());
        for (Index r = 0; r < phi.rows(); ++r) {
            for (Index c = 0; c < phi.cols(); ++c) {
                out.dense_t_(c, r) = phi(r, c);
            }
        }
        return out;
    }

    static ProjectionMatrix sparse(ProjectionKind kind, Index m, Index d,
                                   const std::vector<std::vector<SparseMatrix::Entry>>& columns) {
        ProjectionMatrix out;
        out.kind_ = kind;
        out.m_ = m;
        out.d_ = d;
        out.is_sparse_ = true;
        out.sparse_t_ = SparseMatrix::from_rows(m, columns);
        return out;
    }

    Index m() const noexcept { return m_; }
    Index d() const noexcept { return d_; }
    ProjectionKind kind() const noexcept { return kind_; }
    bool is_sparse() const noexcept { return is_sparse_; }

    double entry(Index r, Index c) const noexcept {
        return is_sparse_ ? sparse_t_.value(c, r) : dense_t_(c, r);
    }

    DenseMatrix to_dense() const {
        DenseMatrix out(m_, d_);
        for (Index r = 0; r < m_; ++r) {
            for (Index c = 0; c < d_; ++c) {
                out(r, c) = entry(r, c);
            }
        }
        return out;
    }

    /// Accumulates weight * (column c of phi) into out (length m).
    void accumulate_column(Index c, double weight, std::span<double> out) const noexcept {
        if (is_sparse_) {
            const SparseRow col = sparse_t_.row(c);
            for (Index k = 0; k < col.size(); ++k) {
                out[col.indices[k]] += weight * col.values[k];
            }
        } else {
            const auto col = dense_t_.row(c);
            for (Index r = 0; r < m_; ++r) {
                out[r] += weight * col[r];
            }
        }
    }

    friend bool operator==(const ProjectionMatrix&, const ProjectionMatrix&) = default;

private:
    ProjectionKind kind_ = ProjectionKind::identity;
    Index m_ = 0;
    Index d_ = 0;
    bool is_sparse_ = false;
    DenseMatrix dense_t_;
    SparseMatrix sparse_t_;
};

namespace detail {

// Partial Fisher-Yates: k distinct values from [0, n), in draw order.
inline std::vector<Index> sample_without_replacement(Index n, Index k, RngStream& rng) {
    std::vector<Index> pool(n);
    std::iota(pool.begin(), pool.end(), Index{0});
    for (Index i = 0; i < k; ++i) {
        const Index j = i + rng.next_index(n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

}  // namespace detail

/// Draws a projection matrix of the given kind for a d-dimensional output space.
/// The PCA kind depends on the data; use the overload taking the label matrix.
inline ProjectionMatrix generate(const ProjectionSpec& spec, Index d, RngStream& rng) {
    const Index m = spec.m;
    if (d < 1) {
        throw std::invalid_argument("generate: output dimension must be >= 1");
    }
    if (m < 1) {
        throw std::invalid_argument("generate: target dimension must be >= 1");
    }
    switch (spec.kind) {
        case ProjectionKind::gaussian: {
            DenseMatrix phi(m, d);
            const double sd = 1.0 / std::sqrt(static_cast<double>(m));
            for (double& v : phi.values()) {
                v = sd * rng.next_gaussian();
            }
            return ProjectionMatrix::dense(spec.kind, phi);
        }
        case ProjectionKind::rademacher: {
            if (!(spec.s >= 1.0) || !std::isfinite(spec.s)) {
                throw std::invalid_argument("generate: rademacher requires 1/s in (0, 1]");
            }
            const double a = std::sqrt(spec.s / static_cast<double>(m));
            const double half = 1.0 / (2.0 * spec.s);
            auto draw = [&]() {
                const double u = rng.next_uniform();
                if (u < half) return -a;
                if (u < 2.0 * half) return a;
                return 0.0;
            };
            if (spec.s >= 3.0) {
                std::vector<std::vector<SparseMatrix::Entry>> cols(d);
                for (Index r = 0; r < m; ++r) {
                    for (Index c = 0; c < d; ++c) {
                        const double v = draw();
                        if (v != 0.0) cols[c].emplace_back(r, v);
                    }
                }
                return ProjectionMatrix::sparse(spec.kind, m, d, cols);
            }
            DenseMatrix phi(m, d);
            for (double& v : phi.values()) {
                v = draw();
            }
            return ProjectionMatrix::dense(spec.kind, phi);
        }
        case ProjectionKind::hadamard_subsample: {
            if (m > d) {
                throw std::invalid_argument("generate: hadamard_subsample requires m <= d");
            }
            const Index order = std::bit_ceil(d);
            const auto rows = detail::sample_without_replacement(order, m, rng);
            const double scale = 1.0 / std::sqrt(static_cast<double>(m));
            DenseMatrix phi(m, d);
            for (Index r = 0; r < m; ++r) {
                for (Index c = 0; c < d; ++c) {
                    // Sylvester construction: H[i][j] = (-1)^popcount(i & j)
                    phi(r, c) = (std::popcount(rows[r] & c) % 2 == 0) ? scale : -scale;
                }
            }
            return ProjectionMatrix::dense(spec.kind, phi);
        }
        case ProjectionKind::identity_subsample: {
            if (m > d) {
                throw std::invalid_argument("generate: identity_subsample requires m <= d");
            }
            const auto labels = detail::sample_without_replacement(d, m, rng);
            std::vector<std::vector<SparseMatrix::Entry>> cols(d);
            for (Index r = 0; r < m; ++r) {
                cols[labels[r]].emplace_back(r, 1.0);
            }
            return ProjectionMatrix::sparse(spec.kind, m, d, cols);
        }
        case ProjectionKind::identity: {
            if (m != d) {
                throw std::invalid_argument("generate: identity projection requires m == d (m=" +
                                            std::to_string(m) + ", d=" + std::to_string(d) + ")");
            }
            std::vector<std::vector<SparseMatrix::Entry>> cols(d);
            for (Index c = 0; c < d; ++c) {
                cols[c].emplace_back(c, 1.0);
            }
            return ProjectionMatrix::sparse(spec.kind, d, d, cols);
        }
        case ProjectionKind::pca:
            throw std::invalid_argument("generate: pca projection needs the label matrix");
    }
    throw std::invalid_argument("generate: unknown projection kind");
}

/// Z = Y * phi^T, one projected row per sample. Cost is nnz(Y) * m for dense phi.
inline DenseMatrix project(const ProjectionMatrix& phi, const SparseMatrix& y) {
    if (y.cols() != phi.d()) {
        throw std::invalid_argument("project: label dimension " + std::to_string(y.cols()) +
                                    " does not match projection input dimension " +
                                    std::to_string(phi.d()));
    }
    DenseMatrix z(y.rows(), phi.m());
    for (Index i = 0; i < y.rows(); ++i) {
        const SparseRow sr = y.row(i);
        auto out = z.row(i);
        for (Index k = 0; k < sr.size(); ++k) {
            phi.accumulate_column(sr.indices[k], sr.values[k], out);
        }
    }
    return z;
}

/// Projects the outputs of a DataSet view.
inline DenseMatrix project(const ProjectionMatrix& phi, const DataSet& ds) {
    if (ds.label_count() != phi.d()) {
        throw std::invalid_argument("project: label dimension mismatch");
    }
    DenseMatrix z(ds.sample_count(), phi.m());
    for (Index i = 0; i < ds.sample_count(); ++i) {
        const SparseRow sr = ds.labels(i);
        auto out = z.row(i);
        for (Index k = 0; k < sr.size(); ++k) {
            phi.accumulate_column(sr.indices[k], sr.values[k], out);
        }
    }
    return z;
}

/// Smallest m with m >= 8 ln(n) / epsilon^2 (at least 1).
inline Index jl_min_dimension(double epsilon, Index n) {
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("jl_min_dimension: epsilon must be > 0");
    }
    if (n < 2) {
        throw std::invalid_argument("jl_min_dimension: need n >= 2");
    }
    const double bound = 8.0 * std::log(static_cast<double>(n)) / (epsilon * epsilon);
    return std::max<Index>(1, static_cast<Index>(std::ceil(bound)));
}

/// Principal directions of the mean-centered label matrix.
struct PcaResult {
    std::vector<double> eigenvalues;  // decreasing
    DenseMatrix components;           // one unit-norm direction per row, same order
};

inline PcaResult pca_decompose(const SparseMatrix& y) {
    const Index n = y.rows();
    const Index d = y.cols();
    if (n < 1) {
        throw std::invalid_argument("pca: empty label matrix");
    }
    if (d > 5000) {
        throw std::invalid_argument("pca: label dimension above 5000 is not supported");
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                                static_cast<Eigen::Index>(d));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (Index i = 0; i < n; ++i) {
        const SparseRow sr = y.row(i);
        for (Index a = 0; a < sr.size(); ++a) {
            const auto ia = static_cast<Eigen::Index>(sr.indices[a]);
            mean(ia) += sr.values[a];
            for (Index b = 0; b < sr.size(); ++b) {
                cov(ia, static_cast<Eigen::Index>(sr.indices[b])) += sr.values[a] * sr.values[b];
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    mean *= inv_n;
    cov = cov * inv_n - mean * mean.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("pca: eigendecomposition failed");
    }
    const Eigen::VectorXd& values = solver.eigenvalues();
    const Eigen::MatrixXd& vectors = solver.eigenvectors();

    // Sign convention and tie key: the largest-magnitude coordinate (lowest index on ties).
    std::vector<Index> lead(d);
    Eigen::MatrixXd signed_vectors = vectors;
    for (Index j = 0; j < d; ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        Index best = 0;
        for (Index r = 1; r < d; ++r) {
            if (std::abs(vectors(static_cast<Eigen::Index>(r), col)) >
                std::abs(vectors(static_cast<Eigen::Index>(best), col)) + 1e-12) {
                best = r;
            }
        }
        lead[j] = best;
        if (vectors(static_cast<Eigen::Index>(best), col) < 0.0) {
            signed_vectors.col(col) *= -1.0;
        }
    }

    const double tol = 1e-12 * std::max(1.0, std::abs(values.maxCoeff()));
    std::vector<Index> order(d);
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double va = values(static_cast<Eigen::Index>(a));
        const double vb = values(static_cast<Eigen::Index>(b));
        if (std::abs(va - vb) > tol) return va > vb;
        return lead[a] < lead[b];
    });

    PcaResult out;
    out.components = DenseMatrix(d, d);
    for (Index r = 0; r < d; ++r) {
        const auto src = static_cast<Eigen::Index>(order[r]);
        out.eigenvalues.push_back(std::max(0.0, values(src)));
        for (Index c = 0; c < d; ++c) {
            out.components(r, c) = signed_vectors(static_cast<Eigen::Index>(c), src);
        }
    }
    return out;
}

/// Top-m principal directions as an m x d projection.
inline ProjectionMatrix pca_projection(const SparseMatrix& y, Index m) {
    if (m < 1 || m > std::min(y.cols(), y.rows())) {
        throw std::invalid_argument("pca_projection: m must be in [1, min(d, n)]");
    }
    const PcaResult pca = pca_decompose(y);
    DenseMatrix phi(m, y.cols());
    for (Index r = 0; r < m; ++r) {
        const auto src = pca.components.row(r);
        std::copy(src.begin(), src.end(), phi.row(r).begin());
    }
    return ProjectionMatrix::dense(ProjectionKind::pca, phi);
}

/// Generator entry point that also covers data-dependent kinds.
inline ProjectionMatrix generate(const ProjectionSpec& spec, const DataSet& ds, RngStream& rng) {
    if (spec.kind == ProjectionKind::pca) {
        return pca_projection(ds.sparse_outputs(), spec.m);
    }
    return generate(spec, ds.label_count(), rng);
}

struct DistortionReport {
    Index violations = 0;
    Index pairs = 0;  // pairs with non-zero original distance
    double max_ratio_error = 0.0;

    double violation_fraction() const noexcept {
        return pairs == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(pairs);
    }
};

/// Checks (1-eps)|yi-yj|^2 <= |phi yi - phi yj|^2 <= (1+eps)|yi-yj|^2 over all pairs.
inline DistortionReport distortion_check(const ProjectionMatrix& phi, const SparseMatrix& y,
                                         double epsilon) {
    const DenseMatrix z = project(phi, y);
    const DenseMatrix yd = y.to_dense();
    DistortionReport rep;
    for (Index i = 0; i < y.rows(); ++i) {
        for (Index j = i + 1; j < y.rows(); ++j) {
            double orig = 0.0;
            for (Index c = 0; c < yd.cols(); ++c) {
                const double diff = yd(i, c) - yd(j, c);
                orig += diff * diff;
            }
            if (orig == 0.0) {
                continue;
            }
            double proj = 0.0;
            for (Index c = 0; c < z.cols(); ++c) {
                const double diff = z(i, c) - z(j, c);
                proj += diff * diff;
            }
            ++rep.pairs;
            if (proj < (1.0 - epsilon) * orig || proj > (1.0 + epsilon) * orig) {
                ++rep.violations;
            }
            rep.max_ratio_error = std::max(rep.max_ratio_error, std::abs(proj / orig - 1.0));
        }
    }
    return rep;
}

}  // namespace rpforest
