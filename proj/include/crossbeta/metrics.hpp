#pragma once

// Classification metrics on positive-class scores: weighted F1 at 0.5,
// rank-based AUROC and step-integrated average precision.

#include <algorithm>
#include <array>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossbeta/error.hpp"

namespace crossbeta {

struct ClassCounts {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
};

struct MetricReport {
    double f1_weighted = 0.0;
    std::optional<double> auroc;  // absent for single-class labels
    std::optional<double> auprc;
    std::array<double, 2> f1{0.0, 0.0};  // index = class label
    std::array<ClassCounts, 2> counts{};
};

inline double f1_from_counts(const ClassCounts& c) {
    const std::size_t den = 2 * c.tp + c.fp + c.fn;
    return den == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

namespace metrics_detail {

inline void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DataError("metrics: score and label counts differ");
    if (scores.empty()) throw DataError("metrics: empty input");
    for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) throw DataError("metrics: scores must lie in [0, 1]");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("metrics: labels must be 0 or 1");
    }
}

inline std::size_t positives(std::span<const int> labels) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

}  // namespace metrics_detail

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores
/// across classes count one half.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
    metrics_detail::check_inputs(scores, labels);
    const std::size_t n = scores.size();
    const std::size_t n_pos = metrics_detail::positives(labels);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("AUROC is undefined for single-class labels");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) rank_sum += avg_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

/// Average precision: sum over distinct thresholds of recall increment times
/// precision, tied scores entering together.
inline double auprc(std::span<const double> scores, std::span<const int> labels) {
    metrics_detail::check_inputs(scores, labels);
    const std::size_t n = scores.size();
    const std::size_t n_pos = metrics_detail::positives(labels);
    if (n_pos == 0 || n_pos == n) throw DataError("AUPRC is undefined for single-class labels");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i, group_pos = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1) ++group_pos;
            ++j;
        }
        tp += group_pos;
        fp += (j - i) - group_pos;
        if (group_pos > 0)
            ap += static_cast<double>(group_pos) / static_cast<double>(n_pos) * static_cast<double>(tp) / static_cast<double>(tp + fp);
        i = j;
    }
    return ap;
}

/// Full report; positive prediction when score >= 0.5.
inline MetricReport evaluate_metrics(std::span<const double> scores, std::span<const int> labels) {
    metrics_detail::check_inputs(scores, labels);
    MetricReport r;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] >= 0.5 ? 1 : 0;
        const int y = labels[i];
        ++r.counts[static_cast<std::size_t>(y)].support;
        if (pred == y) {
            ++r.counts[static_cast<std::size_t>(y)].tp;
        } else {
            ++r.counts[static_cast<std::size_t>(pred)].fp;
            ++r.counts[static_cast<std::size_t>(y)].fn;
        }
    }
    const double n = static_cast<double>(scores.size());
    for (std::size_t c = 0; c < 2; ++c) {
        r.f1[c] = f1_from_counts(r.counts[c]);
        r.f1_weighted += static_cast<double>(r.counts[c].support) / n * r.f1[c];
    }
    const std::size_t n_pos = r.counts[1].support;
    if (n_pos > 0 && n_pos < scores.size()) {
        r.auroc = auroc(scores, labels);
        r.auprc = auprc(scores, labels);
    }
    return r;
}

}  // namespace crossbeta
