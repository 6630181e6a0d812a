#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rpforest/core.hpp"

namespace rpforest {

struct LrapResult {
    double value = 0.0;
    Index retained = 0;  // samples with at least one relevant label
};

namespace detail {

inline void check_lrap_shapes(const DenseMatrix& scores, const SparseMatrix& y) {
    if (scores.rows() != y.rows() || scores.cols() != y.cols()) {
        throw std::invalid_argument("lrap: score matrix shape does not match label matrix");
    }
}

}  // namespace detail

/// Label ranking average precision. For every relevant label j of a sample, the
/// fraction of labels scored >= score_j that are relevant; averaged over relevant
/// labels, then over samples with at least one relevant label.
// Sums run in long double so that small rational results round to the nearest double.
inline LrapResult lrap_detailed(const DenseMatrix& scores, const SparseMatrix& y) {
    detail::check_lrap_shapes(scores, y);
    const Index d = y.cols();
    std::vector<Index> order(d);
    std::vector<char> relevant(d, 0);
    long double total = 0.0L;
    Index retained = 0;
    for (Index i = 0; i < y.rows(); ++i) {
        const SparseRow sr = y.row(i);
        if (sr.size() == 0) {
            continue;
        }
        const auto s = scores.row(i);
        for (Index k : sr.indices) relevant[k] = 1;
        std::iota(order.begin(), order.end(), Index{0});
        std::sort(order.begin(), order.end(), [&](Index a, Index b) { return s[a] > s[b]; });

        // Walk tie groups from the highest score; every label of a group shares the
        // same "at or above" counts.
        long double sample_sum = 0.0L;
        Index above_all = 0;
        Index above_relevant = 0;
        for (Index g = 0; g < d;) {
            Index end = g;
            Index group_relevant = 0;
            while (end < d && s[order[end]] == s[order[g]]) {
                group_relevant += relevant[order[end]];
                ++end;
            }
            above_all += end - g;
            above_relevant += group_relevant;
            sample_sum += static_cast<long double>(group_relevant) *
                          (static_cast<long double>(above_relevant) / static_cast<long double>(above_all));
            g = end;
        }
        total += sample_sum / static_cast<long double>(sr.size());
        ++retained;
        for (Index k : sr.indices) relevant[k] = 0;
    }
    if (retained == 0) {
        throw std::invalid_argument("lrap: no sample has a relevant label");
    }
    return {static_cast<double>(total / static_cast<long double>(retained)), retained};
}

inline double lrap(const DenseMatrix& scores, const SparseMatrix& y) {
    return lrap_detailed(scores, y).value;
}

/// Literal O(n d^2) evaluation of the definition. Used to cross-check lrap().
inline double lrap_oracle(const DenseMatrix& scores, const SparseMatrix& y) {
    detail::check_lrap_shapes(scores, y);
    const DenseMatrix yd = y.to_dense();
    long double total = 0.0L;
    Index retained = 0;
    for (Index i = 0; i < yd.rows(); ++i) {
        Index n_relevant = 0;
        for (Index j = 0; j < yd.cols(); ++j) n_relevant += yd(i, j) != 0.0;
        if (n_relevant == 0) continue;
        long double acc = 0.0L;
        for (Index j = 0; j < yd.cols(); ++j) {
            if (yd(i, j) == 0.0) continue;
            Index in_y = 0;
            Index in_all = 0;
            for (Index k = 0; k < yd.cols(); ++k) {
                if (scores(i, k) >= scores(i, j)) {
                    ++in_all;
                    if (yd(i, k) != 0.0) ++in_y;
                }
            }
            acc += static_cast<long double>(in_y) / static_cast<long double>(in_all);
        }
        total += acc / static_cast<long double>(n_relevant);
        ++retained;
    }
    if (retained == 0) {
        throw std::invalid_argument("lrap: no sample has a relevant label");
    }
    return static_cast<double>(total / static_cast<long double>(retained));
}

}  // namespace rpforest
