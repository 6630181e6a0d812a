#pragma once

// Multi-label svmlight dialect reader/writer and train/test split plans.
//
// File grammar, one sample per line:
//
//   [<label>{,<label>}] {<ws> <feature>:<value>}
//
// Labels are 0-based label indices; a line that starts with whitespace has no labels.
// Features are 1-based, strictly increasing; absent features are zero. Lines starting
// with '#' are comments; a comment carrying `#d=<int>` and/or `#p=<int>` pins the label
// and feature counts, otherwise they are inferred as max index + 1. Completely empty
// lines are ignored. Paths ending in `.gz` are read through zlib.

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rpforest/core.hpp"

namespace rpforest {

namespace detail {

inline std::string read_text_file(const std::string& path) {
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (f == nullptr) {
            throw std::runtime_error("cannot open '" + path + "'");
        }
        std::string out;
        char buf[1 << 16];
        int got = 0;
        while ((got = gzread(f, buf, sizeof(buf))) > 0) {
            out.append(buf, static_cast<std::size_t>(got));
        }
        const bool failed = got < 0;
        gzclose(f);
        if (failed) {
            throw std::runtime_error("'" + path + "': corrupt gzip stream");
        }
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

inline void pinned_counts(std::string_view line, std::optional<Index>& d, std::optional<Index>& p) {
    auto grab = [&](std::string_view key, std::optional<Index>& slot) {
        const auto pos = line.find(key);
        if (pos == std::string_view::npos) return;
        auto rest = line.substr(pos + key.size());
        Index len = 0;
        while (len < rest.size() && rest[len] >= '0' && rest[len] <= '9') ++len;
        if (auto v = parse_number<Index>(rest.substr(0, len))) slot = *v;
    };
    grab("#d=", d);
    grab("#p=", p);
}

}  // namespace detail

/// Parses the multi-label svmlight dialect from text. `source` prefixes error messages.
inline DataSet parse_svmlight_multilabel(std::string_view text, const std::string& source = "<input>") {
    std::optional<Index> pinned_d;
    std::optional<Index> pinned_p;
    std::vector<std::vector<SparseMatrix::Entry>> x_rows;
    std::vector<std::vector<SparseMatrix::Entry>> y_rows;
    Index max_label = 0;
    Index max_feature = 0;
    bool any_label = false;
    bool any_feature = false;

    Index line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        auto fail = [&](const std::string& msg) {
            throw std::runtime_error(source + ":" + std::to_string(line_no) + ": " + msg);
        };
        if (line.empty()) continue;
        if (line.front() == '#') {
            detail::pinned_counts(line, pinned_d, pinned_p);
            continue;
        }

        std::vector<std::string_view> tokens;
        const bool leading_space = detail::is_space(line.front());
        for (std::size_t i = 0; i < line.size();) {
            while (i < line.size() && detail::is_space(line[i])) ++i;
            std::size_t j = i;
            while (j < line.size() && !detail::is_space(line[j])) ++j;
            if (j > i) tokens.push_back(line.substr(i, j - i));
            i = j;
        }

        std::vector<SparseMatrix::Entry> labels;
        std::size_t first_feature = 0;
        if (!leading_space && !tokens.empty() && tokens.front().find(':') == std::string_view::npos) {
            first_feature = 1;
            std::string_view lab = tokens.front();
            for (std::size_t i = 0; i <= lab.size();) {
                std::size_t j = lab.find(',', i);
                if (j == std::string_view::npos) j = lab.size();
                const auto v = detail::parse_number<Index>(lab.substr(i, j - i));
                if (!v) fail("malformed label list '" + std::string(lab) + "'");
                labels.emplace_back(*v, 1.0);
                i = j + 1;
            }
            std::sort(labels.begin(), labels.end());
            for (std::size_t k = 1; k < labels.size(); ++k) {
                if (labels[k].first == labels[k - 1].first) fail("duplicate label index");
            }
            for (const auto& [l, v] : labels) {
                if (pinned_d && l >= *pinned_d) {
                    fail("label index " + std::to_string(l) + " >= pinned d=" + std::to_string(*pinned_d));
                }
                max_label = std::max(max_label, l);
                any_label = true;
            }
        }

        std::vector<SparseMatrix::Entry> features;
        for (std::size_t t = first_feature; t < tokens.size(); ++t) {
            const auto colon = tokens[t].find(':');
            if (colon == std::string_view::npos) fail("expected <feature>:<value>, got '" + std::string(tokens[t]) + "'");
            const auto idx = detail::parse_number<Index>(tokens[t].substr(0, colon));
            const auto val = detail::parse_number<double>(tokens[t].substr(colon + 1));
            if (!idx || !val) fail("malformed feature '" + std::string(tokens[t]) + "'");
            if (*idx < 1) fail("feature indices are 1-based");
            if (!std::isfinite(*val)) fail("non-finite feature value");
            if (!features.empty() && *idx - 1 <= features.back().first) {
                fail("feature indices must be strictly increasing");
            }
            if (pinned_p && *idx > *pinned_p) {
                fail("feature index " + std::to_string(*idx) + " > pinned p=" + std::to_string(*pinned_p));
            }
            features.emplace_back(*idx - 1, *val);
            max_feature = std::max(max_feature, *idx - 1);
            any_feature = true;
        }
        std::erase_if(features, [](const auto& e) { return e.second == 0.0; });
        x_rows.push_back(std::move(features));
        y_rows.push_back(std::move(labels));
    }

    if (x_rows.empty()) {
        throw std::runtime_error(source + ": no samples");
    }
    const Index d = pinned_d.value_or(any_label ? max_label + 1 : 1);
    const Index p = pinned_p.value_or(any_feature ? max_feature + 1 : 1);
    return DataSet(SparseMatrix::from_rows(p, x_rows), SparseMatrix::from_rows(d, y_rows));
}

inline DataSet load_svmlight_multilabel(const std::string& path) {
    return parse_svmlight_multilabel(detail::read_text_file(path), path);
}

/// Serializes a DataSet (or view) in the same dialect with pinned d and p. Values are
/// written in shortest round-trip form.
inline std::string format_svmlight_multilabel(const DataSet& ds) {
    std::string out = "#d=" + std::to_string(ds.label_count()) + " #p=" + std::to_string(ds.feature_count()) + "\n";
    char buf[64];
    std::vector<double> row(ds.feature_count());
    for (Index i = 0; i < ds.sample_count(); ++i) {
        const SparseRow labels = ds.labels(i);
        if (labels.size() == 0) {
            out += ' ';
        }
        for (Index k = 0; k < labels.size(); ++k) {
            if (k > 0) out += ',';
            out += std::to_string(labels.indices[k]);
        }
        ds.input_row(i, row);
        for (Index f = 0; f < row.size(); ++f) {
            if (row[f] == 0.0) continue;
            const auto res = std::to_chars(buf, buf + sizeof(buf), row[f]);
            out += ' ';
            out += std::to_string(f + 1);
            out += ':';
            out.append(buf, res.ptr);
        }
        out += '\n';
    }
    return out;
}

inline void save_svmlight_multilabel(const DataSet& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out << format_svmlight_multilabel(ds);
}

enum class SplitMode { fixed_holdout, shuffled_repeats, kfold };

struct SplitPlan {
    SplitMode mode = SplitMode::shuffled_repeats;
    Index n_train = 0;  // fixed_holdout, shuffled_repeats
    Index n_test = 0;   // 0 means "all remaining samples"
    Index count = 10;   // repeats or folds
    std::uint64_t seed = 0;
};

struct TrainTestSplit {
    std::vector<Index> train_rows;
    std::vector<Index> test_rows;
    DataSet train;
    DataSet test;
};

/// fixed_holdout: the first n_train samples train, the next n_test test (file order).
/// shuffled_repeats: `count` fresh uniform shuffles, each cut into n_train / n_test.
/// kfold: one shuffle cut into `count` folds; each fold is the test set once.
inline std::vector<TrainTestSplit> make_splits(const DataSet& ds, const SplitPlan& plan) {
    const Index n = ds.sample_count();
    std::vector<TrainTestSplit> out;
    auto emit = [&](std::vector<Index> train, std::vector<Index> test) {
        TrainTestSplit s;
        s.train = ds.row_slice(train);
        s.test = ds.row_slice(test);
        s.train_rows = std::move(train);
        s.test_rows = std::move(test);
        out.push_back(std::move(s));
    };
    auto shuffled = [&](std::uint64_t stream) {
        std::vector<Index> perm(n);
        std::iota(perm.begin(), perm.end(), Index{0});
        RngStream rng(plan.seed, stream);
        for (Index i = n; i > 1; --i) {
            std::swap(perm[i - 1], perm[rng.next_index(i)]);
        }
        return perm;
    };

    switch (plan.mode) {
        case SplitMode::fixed_holdout:
        case SplitMode::shuffled_repeats: {
            const Index n_test = plan.n_test == 0 ? (n > plan.n_train ? n - plan.n_train : 0) : plan.n_test;
            if (plan.n_train == 0 || n_test == 0 || plan.n_train + n_test > n) {
                throw std::invalid_argument("make_splits: need 0 < n_train, 0 < n_test and n_train + n_test <= n (n=" +
                                            std::to_string(n) + ")");
            }
            const Index repeats = plan.mode == SplitMode::fixed_holdout ? 1 : plan.count;
            if (repeats < 1) {
                throw std::invalid_argument("make_splits: repeat count must be >= 1");
            }
            for (Index r = 0; r < repeats; ++r) {
                std::vector<Index> perm(n);
                if (plan.mode == SplitMode::fixed_holdout) {
                    std::iota(perm.begin(), perm.end(), Index{0});
                } else {
                    perm = shuffled(r);
                }
                emit(std::vector<Index>(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(plan.n_train)),
                     std::vector<Index>(perm.begin() + static_cast<std::ptrdiff_t>(plan.n_train),
                                        perm.begin() + static_cast<std::ptrdiff_t>(plan.n_train + n_test)));
            }
            break;
        }
        case SplitMode::kfold: {
            if (plan.count < 2 || plan.count > n) {
                throw std::invalid_argument("make_splits: fold count must be in [2, n]");
            }
            const auto perm = shuffled(0);
            for (Index f = 0; f < plan.count; ++f) {
                const Index b = f * n / plan.count;
                const Index e = (f + 1) * n / plan.count;
                std::vector<Index> test(perm.begin() + static_cast<std::ptrdiff_t>(b),
                                        perm.begin() + static_cast<std::ptrdiff_t>(e));
                std::vector<Index> train;
                train.reserve(n - test.size());
                train.insert(train.end(), perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(b));
                train.insert(train.end(), perm.begin() + static_cast<std::ptrdiff_t>(e), perm.end());
                std::sort(test.begin(), test.end());
                std::sort(train.begin(), train.end());
                emit(std::move(train), std::move(test));
            }
            break;
        }
    }
    return out;
}

}  // namespace rpforest
