#pragma once

// Class-conditional absolute correlation and multicollinearity pruning.
//
// For each class, feature pairs whose absolute correlation exceeds tau are
// visited once, strongest first. A pair whose endpoints are both still
// retained loses the endpoint with the larger mean correlation to the other
// retained features. The loop stops early rather than drop below rho
// retained features. The classwise union of survivors feeds the classifier.

#include <algorithm>
#include <cmath>
#include <optional>
#include <iterator>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "crossbeta/error.hpp"
#include "crossbeta/matrix.hpp"
#include "crossbeta/profile.hpp"

namespace crossbeta {

struct CorrMatrix {
    Matrix values;  // d x d, symmetric, unit diagonal, entries in [0, 1]
    Tier2 class_label = Tier2::beta;
    std::size_t n = 0;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(values.rows()); }
    double operator()(std::size_t a, std::size_t b) const {
        return values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
};

/// |D^-1/2 S D^-1/2| for the sample covariance S (n-1 denominator) of the rows of X.
inline CorrMatrix abs_correlation(const RowMatrix& X, Tier2 label) {
    const auto n = X.rows();
    const auto d = X.cols();
    if (n < 3) throw DataError("correlation needs at least 3 samples, class " + std::string(to_string(label)) +
                               " has " + std::to_string(n));
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Matrix centered = X.rowwise() - mean;
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    for (Eigen::Index j = 0; j < d; ++j) {
        if (!(cov(j, j) > 0.0))
            throw DataError("feature " + std::to_string(j) + " has zero variance in class " + std::string(to_string(label)));
    }
    CorrMatrix out;
    out.class_label = label;
    out.n = static_cast<std::size_t>(n);
    out.values.resize(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
        out.values(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < d; ++b) {
            const double r = std::min(1.0, std::abs(cov(a, b)) / std::sqrt(cov(a, a) * cov(b, b)));
            out.values(a, b) = r;
            out.values(b, a) = r;
        }
    }
    return out;
}

/// Rows of one tissue class, restricted to the training split when the
/// dataset carries a split assignment.
inline RowMatrix class_rows(const Dataset& ds, Tier2 label, bool train_only = true) {
    std::vector<const Profile*> rows;
    for (const auto& p : ds.profiles()) {
        if (p.tier1 != Tier1::tissue || p.tier2 != label) continue;
        if (train_only && ds.split() && ds.split_of(p) != Split::train) continue;
        rows.push_back(&p);
    }
    return stack_rows(rows, ds.dim());
}

inline CorrMatrix class_corr(const Dataset& ds, Tier2 label) { return abs_correlation(class_rows(ds, label), label); }

struct PruneConfig {
    double tau_beta = 0.990;
    double tau_notbeta = 0.990;
    std::size_t rho_beta = 3;
    std::size_t rho_notbeta = 3;

    static PruneConfig uniform(double tau, std::size_t rho = 3) { return {tau, tau, rho, rho}; }
};

struct DiscardRecord {
    Tier2 class_label;
    std::size_t a, b;
    double corr;
    double conn_a, conn_b;
    std::size_t discarded;
};

struct ClassPruneResult {
    std::vector<std::size_t> retained;  // ascending
    std::vector<DiscardRecord> trace;
    bool guard_triggered = false;
};

struct CorrPair {
    std::size_t a, b;
    double corr;
};

/// Strictly upper-triangular pairs above tau, strongest first; equal
/// correlations keep lexicographic (a, b) order.
inline std::vector<CorrPair> pairs_above(const CorrMatrix& corr, double tau) {
    std::vector<CorrPair> pairs;
    const std::size_t d = corr.dim();
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a + 1; b < d; ++b) {
            if (corr(a, b) > tau) pairs.push_back({a, b, corr(a, b)});
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const CorrPair& x, const CorrPair& y) { return x.corr > y.corr; });
    return pairs;
}

/// Mean correlation of feature f to every other non-discarded feature.
inline double connectivity(const CorrMatrix& corr, std::size_t f, const std::vector<char>& discarded) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < corr.dim(); ++j) {
        if (j == f || discarded[j]) continue;
        sum += corr(f, j);
        ++count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

inline ClassPruneResult prune_class(const CorrMatrix& corr, double tau, std::size_t rho) {
    const std::size_t d = corr.dim();
    if (rho < 1 || rho > d)
        throw ConfigError("prune: minimum support rho=" + std::to_string(rho) + " must lie in [1, " + std::to_string(d) + "]");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("prune: tau must lie in (0, 1)");

    ClassPruneResult out;
    std::vector<char> discarded(d, 0);
    std::size_t n_discarded = 0;
    for (const auto& pair : pairs_above(corr, tau)) {
        if (discarded[pair.a] || discarded[pair.b]) continue;
        if (d - n_discarded - 1 < rho) {
            out.guard_triggered = true;
            break;
        }
        const double ca = connectivity(corr, pair.a, discarded);
        const double cb = connectivity(corr, pair.b, discarded);
        // equal connectivity drops the larger index, which is b
        const std::size_t drop = ca > cb ? pair.a : pair.b;
        discarded[drop] = 1;
        ++n_discarded;
        out.trace.push_back({corr.class_label, pair.a, pair.b, pair.corr, ca, cb, drop});
    }
    for (std::size_t j = 0; j < d; ++j) {
        if (!discarded[j]) out.retained.push_back(j);
    }
    return out;
}

struct PruneResult {
    std::vector<std::size_t> retained_beta;
    std::vector<std::size_t> retained_notbeta;
    std::vector<std::size_t> retained_union;
    std::vector<DiscardRecord> discard_trace;  // not_beta records first, then beta
    bool guard_beta = false;
    bool guard_notbeta = false;
};

inline std::vector<std::size_t> sorted_union(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    std::vector<std::size_t> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline PruneResult prune_matrices(const CorrMatrix& corr_beta, const CorrMatrix& corr_notbeta, const PruneConfig& cfg) {
    const auto nb = prune_class(corr_notbeta, cfg.tau_notbeta, cfg.rho_notbeta);
    const auto b = prune_class(corr_beta, cfg.tau_beta, cfg.rho_beta);
    PruneResult out;
    out.retained_beta = b.retained;
    out.retained_notbeta = nb.retained;
    out.retained_union = sorted_union(b.retained, nb.retained);
    out.discard_trace = nb.trace;
    out.discard_trace.insert(out.discard_trace.end(), b.trace.begin(), b.trace.end());
    out.guard_beta = b.guard_triggered;
    out.guard_notbeta = nb.guard_triggered;
    return out;
}

/// Prunes both tissue classes on the training rows of ds.
inline PruneResult prune_dataset(const Dataset& ds, const PruneConfig& cfg) {
    const auto beta_rows = class_rows(ds, Tier2::beta);
    const auto notbeta_rows = class_rows(ds, Tier2::not_beta);
    if (beta_rows.rows() == 0 || notbeta_rows.rows() == 0)
        throw DataError("prune: both beta and not_beta classes must be present in the training split");
    return prune_matrices(abs_correlation(beta_rows, Tier2::beta), abs_correlation(notbeta_rows, Tier2::not_beta), cfg);
}

/// Intensities at the given indices, in ascending index order.
inline std::vector<double> project(std::span<const double> intensities, std::span<const std::size_t> indices) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    std::sort(idx.begin(), idx.end());
    std::vector<double> out;
    out.reserve(idx.size());
    for (std::size_t k : idx) {
        if (k >= intensities.size())
            throw DataError("project: index " + std::to_string(k) + " out of range for width " + std::to_string(intensities.size()));
        out.push_back(intensities[k]);
    }
    return out;
}

inline std::vector<double> project(const Profile& p, std::span<const std::size_t> indices) {
    return project(std::span<const double>(p.intensities), indices);
}

}  // namespace crossbeta
