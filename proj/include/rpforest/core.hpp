#pragma once

// Numeric containers, the multi-label DataSet view and seedable random streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace rpforest {

using Index = std::size_t;

/// Row-major dense matrix of finite doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(Index rows, Index cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {
        if (!std::isfinite(fill)) {
            throw std::invalid_argument("DenseMatrix: non-finite fill value");
        }
    }

    DenseMatrix(Index rows, Index cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (values_.size() != rows_ * cols_) {
            throw std::invalid_argument("DenseMatrix: value count does not match shape");
        }
        for (double v : values_) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("DenseMatrix: non-finite entry");
            }
        }
    }

    Index rows() const noexcept { return rows_; }
    Index cols() const noexcept { return cols_; }

    double operator()(Index r, Index c) const noexcept { return values_[r * cols_ + c]; }
    double& operator()(Index r, Index c) noexcept { return values_[r * cols_ + c]; }

    std::span<const double> row(Index r) const noexcept {
        return {values_.data() + r * cols_, cols_};
    }
    std::span<double> row(Index r) noexcept { return {values_.data() + r * cols_, cols_}; }

    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<double> values_;
};

/// One row of a SparseMatrix: parallel index/value spans, indices strictly increasing.
struct SparseRow {
    std::span<const Index> indices;
    std::span<const double> values;

    Index size() const noexcept { return indices.size(); }
};

/// Compressed sparse row matrix. Explicit zeros are never stored.
class SparseMatrix {
public:
    using Entry = std::pair<Index, double>;

    SparseMatrix() : row_ptr_(1, 0) {}

    /// Builds from per-row entry lists. Entries must be sorted by strictly increasing
    /// column; zeros are dropped.
    static SparseMatrix from_rows(Index cols, const std::vector<std::vector<Entry>>& rows) {
        SparseMatrix out;
        out.rows_ = rows.size();
        out.cols_ = cols;
        out.row_ptr_.reserve(rows.size() + 1);
        for (const auto& r : rows) {
            for (Index k = 0; k < r.size(); ++k) {
                const auto [c, v] = r[k];
                if (c >= cols) {
                    throw std::invalid_argument("SparseMatrix: column index out of range");
                }
                if (k > 0 && c <= r[k - 1].first) {
                    throw std::invalid_argument("SparseMatrix: indices not strictly increasing");
                }
                if (!std::isfinite(v)) {
                    throw std::invalid_argument("SparseMatrix: non-finite entry");
                }
                if (v != 0.0) {
                    out.indices_.push_back(c);
                    out.values_.push_back(v);
                }
            }
            out.row_ptr_.push_back(out.indices_.size());
        }
        return out;
    }

    static SparseMatrix from_dense(const DenseMatrix& m) {
        SparseMatrix out;
        out.rows_ = m.rows();
        out.cols_ = m.cols();
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) {
                if (m(r, c) != 0.0) {
                    out.indices_.push_back(c);
                    out.values_.push_back(m(r, c));
                }
            }
            out.row_ptr_.push_back(out.indices_.size());
        }
        return out;
    }

    Index rows() const noexcept { return rows_; }
    Index cols() const noexcept { return cols_; }
    Index nnz() const noexcept { return indices_.size(); }

    SparseRow row(Index r) const noexcept {
        const Index b = row_ptr_[r];
        const Index e = row_ptr_[r + 1];
        return {std::span<const Index>(indices_.data() + b, e - b),
                std::span<const double>(values_.data() + b, e - b)};
    }

    double value(Index r, Index c) const noexcept {
        const SparseRow sr = row(r);
        const auto it = std::lower_bound(sr.indices.begin(), sr.indices.end(), c);
        if (it == sr.indices.end() || *it != c) {
            return 0.0;
        }
        return sr.values[static_cast<Index>(it - sr.indices.begin())];
    }

    DenseMatrix to_dense() const {
        DenseMatrix out(rows_, cols_);
        for (Index r = 0; r < rows_; ++r) {
            const SparseRow sr = row(r);
            for (Index k = 0; k < sr.size(); ++k) {
                out(r, sr.indices[k]) = sr.values[k];
            }
        }
        return out;
    }

    friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<Index> row_ptr_;
    std::vector<Index> indices_;
    std::vector<double> values_;
};

using InputMatrix = std::variant<DenseMatrix, SparseMatrix>;

inline Index rows_of(const InputMatrix& x) {
    return std::visit([](const auto& m) { return m.rows(); }, x);
}
inline Index cols_of(const InputMatrix& x) {
    return std::visit([](const auto& m) { return m.cols(); }, x);
}

/// A learning sample: inputs X (n x p) and outputs Y (n x d, sparse).
///
/// A DataSet is a row view over immutable shared storage. Copies and row slices are
/// cheap and never touch the parent's data; duplicated row indices (bootstrap copies)
/// are allowed. Multi-label data stores binary label presence as 1s; real-valued
/// outputs are accepted for regression-style synthetic problems.
class DataSet {
public:
    DataSet() = default;

    DataSet(InputMatrix x, SparseMatrix y) {
        if (rows_of(x) != y.rows()) {
            throw std::invalid_argument("DataSet: X and Y row counts differ");
        }
        if (cols_of(x) < 1 || y.cols() < 1) {
            throw std::invalid_argument("DataSet: need at least one feature and one label");
        }
        storage_ = std::make_shared<const Storage>(Storage{std::move(x), std::move(y)});
        rows_.resize(storage_->y.rows());
        std::iota(rows_.begin(), rows_.end(), Index{0});
    }

    Index sample_count() const noexcept { return rows_.size(); }
    Index feature_count() const noexcept { return storage_ ? cols_of(storage_->x) : 0; }
    Index label_count() const noexcept { return storage_ ? storage_->y.cols() : 0; }

    /// Row index in the underlying storage of local sample i.
    Index storage_row(Index i) const noexcept { return rows_[i]; }
    const std::vector<Index>& storage_rows() const noexcept { return rows_; }

    double feature(Index i, Index f) const noexcept {
        const Index r = rows_[i];
        if (const auto* dense = std::get_if<DenseMatrix>(&storage_->x)) {
            return (*dense)(r, f);
        }
        return std::get<SparseMatrix>(storage_->x).value(r, f);
    }

    /// Copies sample i's inputs into a dense buffer of length p.
    void input_row(Index i, std::span<double> out) const {
        const Index r = rows_[i];
        if (const auto* dense = std::get_if<DenseMatrix>(&storage_->x)) {
            const auto src = dense->row(r);
            std::copy(src.begin(), src.end(), out.begin());
            return;
        }
        std::fill(out.begin(), out.end(), 0.0);
        const SparseRow sr = std::get<SparseMatrix>(storage_->x).row(r);
        for (Index k = 0; k < sr.size(); ++k) {
            out[sr.indices[k]] = sr.values[k];
        }
    }

    SparseRow labels(Index i) const noexcept { return storage_->y.row(rows_[i]); }

    const InputMatrix& inputs() const noexcept { return storage_->x; }
    const SparseMatrix& outputs() const noexcept { return storage_->y; }

    bool has_binary_labels() const {
        for (Index i = 0; i < sample_count(); ++i) {
            for (double v : labels(i).values) {
                if (v != 1.0) {
                    return false;
                }
            }
        }
        return true;
    }

    /// View of the local samples idx (in order, duplicates allowed) sharing this storage.
    DataSet row_slice(std::span<const Index> idx) const {
        DataSet out;
        out.storage_ = storage_;
        out.rows_.reserve(idx.size());
        for (Index i : idx) {
            if (i >= rows_.size()) {
                throw std::out_of_range("row_slice: index " + std::to_string(i) +
                                        " out of bounds for " + std::to_string(rows_.size()) +
                                        " samples");
            }
            out.rows_.push_back(rows_[i]);
        }
        return out;
    }

    /// Dense copy of the view's outputs (sample_count x label_count).
    DenseMatrix dense_outputs() const {
        DenseMatrix out(sample_count(), label_count());
        for (Index i = 0; i < sample_count(); ++i) {
            const SparseRow sr = labels(i);
            for (Index k = 0; k < sr.size(); ++k) {
                out(i, sr.indices[k]) = sr.values[k];
            }
        }
        return out;
    }

    /// Materialized copy of the view's outputs in sparse form.
    SparseMatrix sparse_outputs() const {
        std::vector<std::vector<SparseMatrix::Entry>> rows(sample_count());
        for (Index i = 0; i < sample_count(); ++i) {
            const SparseRow sr = labels(i);
            for (Index k = 0; k < sr.size(); ++k) {
                rows[i].emplace_back(sr.indices[k], sr.values[k]);
            }
        }
        return SparseMatrix::from_rows(label_count(), rows);
    }

private:
    struct Storage {
        InputMatrix x;
        SparseMatrix y;
    };
    std::shared_ptr<const Storage> storage_;
    std::vector<Index> rows_;
};

/// Deterministic random stream keyed by (seed, stream_id).
///
/// Parallel work never shares a stream; it derives independent streams by id.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Uniform deviate in [0, 1).
    double next_uniform() {
        double u = std::generate_canonical<double, std::numeric_limits<double>::digits>(engine_);
        // generate_canonical may round up to 1.0 on some library versions
        return u < 1.0 ? u : std::nextafter(1.0, 0.0);
    }

    double next_gaussian() { return normal_(engine_); }

    /// Uniform integer in [0, n).
    Index next_index(Index n) {
        return std::uniform_int_distribution<Index>(0, n - 1)(engine_);
    }

    std::uint64_t next_u64() { return engine_(); }

private:
    static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream_id),
                          static_cast<std::uint32_t>(stream_id >> 32), 0x9e3779b9u};
        return std::mt19937_64(seq);
    }

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Derives a 64-bit seed from a base seed and a sequence of identifiers.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    auto splitmix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    };
    std::uint64_t h = splitmix(seed);
    for (std::uint64_t id : ids) {
        h = splitmix(h ^ splitmix(id));
    }
    return h;
}

}  // namespace rpforest
