#pragma once

// Empirical check of the irreducibility lower bound for a differentiable
// classifier, per class y:
//
//   Z = kept features, U = pruned features
//   anchor mu(Z) = OLS fit of U on [Z 1], Sigma = residual covariance
//   L_hat = mean_i sum_c g_ic' Sigma g_ic       (g = U-gradient at the anchor)
//   LHS   = mean_i sum_c Var(f_c | Z_i)         (Monte Carlo, U ~ N(mu, Sigma))
//   B_hat = sum_c H_c^2 / (alpha+1)^2 * mean r^(2+2 alpha)
//   RHS   = (sqrt(L_hat) - sqrt(B_hat))^2, or 0 when B_hat > L_hat
//
// H_c is the 0.95 quantile of directional gradient drift along the
// anchor-to-sample segment divided by (t r)^alpha. The bound holds when
// max_y LHS >= max_y RHS.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crossbeta/error.hpp"
#include "crossbeta/matrix.hpp"
#include "crossbeta/profile.hpp"
#include "crossbeta/rng.hpp"

namespace crossbeta {

/// A classifier with logits and input gradients on raw feature rows.
template <class F>
concept DifferentiableClassifier = requires(const F& f, const RowMatrix& X, std::size_t c) {
    { f.num_logits() } -> std::convertible_to<std::size_t>;
    { f.input_dim() } -> std::convertible_to<std::size_t>;
    { f.logits(X) } -> std::convertible_to<RowMatrix>;
    { f.input_jacobian(X, c) } -> std::convertible_to<RowMatrix>;
};

struct BoundConfig {
    double tau = 0.990;
    double alpha = 0.5;
    std::size_t n_draws = 2048;
    std::vector<double> probe_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double quantile = 0.95;
    double jitter_start = 1e-12;  // relative to trace / q
    double jitter_cap = 1e-4;     // relative to trace / q
    std::uint64_t seed = 17;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("bounds: alpha must lie in (0, 1]");
        if (n_draws < 2) throw ConfigError("bounds: need at least 2 Monte Carlo draws");
        if (probe_grid.empty()) throw ConfigError("bounds: probe grid is empty");
        for (double t : probe_grid) {
            if (!(t > 0.0 && t <= 1.0)) throw ConfigError("bounds: probe grid values must lie in (0, 1]");
        }
        if (!(quantile > 0.0 && quantile <= 1.0)) throw ConfigError("bounds: quantile must lie in (0, 1]");
    }
};

struct AnchorModel {
    Matrix A;              // q x p
    Vector b;              // q
    Matrix sigma_minus;    // q x q residual covariance
    RowMatrix anchor;      // n x q fitted means
    RowMatrix residuals;   // n x q
    Matrix factor;         // lower-triangular, factor * factor' = sigma_minus + jitter I
    double jitter = 0.0;
};

/// Lower factor of S + jitter I, raising the jitter tenfold from start to
/// cap (both relative to the mean variance trace / q) until the
/// factorization succeeds. A zero matrix factors to zero without jitter.
inline Matrix jittered_cholesky(const Matrix& S, double start_rel, double cap_rel, double* used = nullptr) {
    const auto q = S.rows();
    if (used) *used = 0.0;
    if (q == 0 || (S.array() == 0.0).all()) return Matrix::Zero(q, q);
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const double scale = S.trace() / static_cast<double>(q);
    if (!(scale > 0.0)) throw NumericError("covariance factorization failed: non-positive mean variance");
    const double cap = cap_rel * scale;
    for (double jitter = start_rel * scale; jitter <= cap * (1.0 + 1e-12); jitter *= 10.0) {
        llt.compute(S + jitter * Matrix::Identity(q, q));
        if (llt.info() == Eigen::Success) {
            if (used) *used = jitter;
            return llt.matrixL();
        }
    }
    throw NumericError("covariance factorization failed with jitter up to " + std::to_string(cap_rel) + " x mean variance");
}

/// OLS of U on [Z 1] through a rank-revealing decomposition (pseudoinverse
/// semantics when Z is rank deficient).
inline AnchorModel fit_anchor(const RowMatrix& Z, const RowMatrix& U, const BoundConfig& cfg = {}) {
    const auto n = Z.rows();
    const auto p = Z.cols();
    if (U.rows() != n) throw DataError("fit_anchor: Z and U row counts differ");
    if (n <= p + 1)
        throw DataError("fit_anchor: underdetermined regression, n=" + std::to_string(n) + " rows for p=" + std::to_string(p) + " regressors");
    Matrix Z1(n, p + 1);
    Z1.leftCols(p) = Z;
    Z1.col(p).setOnes();
    const Matrix coef = Z1.completeOrthogonalDecomposition().solve(Matrix(U));
    AnchorModel m;
    m.A = coef.topRows(p).transpose();
    m.b = coef.row(p).transpose();
    m.anchor = Z1 * coef;
    m.residuals = U - m.anchor;
    m.sigma_minus = (m.residuals.transpose() * m.residuals) / static_cast<double>(n - 1);
    m.sigma_minus = 0.5 * (m.sigma_minus + m.sigma_minus.transpose()).eval();
    m.factor = jittered_cholesky(m.sigma_minus, cfg.jitter_start, cfg.jitter_cap, &m.jitter);
    return m;
}

/// Rows of X with the pruned columns replaced by values (n x q).
inline RowMatrix with_columns(const RowMatrix& X, std::span<const std::size_t> cols, const RowMatrix& values) {
    RowMatrix out = X;
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(cols[j])) = values.col(static_cast<Eigen::Index>(j));
    return out;
}

/// Per-logit input gradients at the rows of X, restricted to cols (n x q each).
template <DifferentiableClassifier F>
std::vector<RowMatrix> input_gradients(const F& f, const RowMatrix& X, std::span<const std::size_t> cols) {
    if (static_cast<std::size_t>(X.cols()) != f.input_dim()) throw DataError("input_gradients: input width does not match the classifier");
    for (std::size_t c : cols) {
        if (c >= f.input_dim()) throw DataError("input_gradients: index " + std::to_string(c) + " out of range");
    }
    std::vector<RowMatrix> out;
    for (std::size_t c = 0; c < f.num_logits(); ++c) out.push_back(gather_columns(f.input_jacobian(X, c), cols));
    return out;
}

/// Per-sample sum_c g_ic' Sigma g_ic.
inline Vector signal_terms(std::span<const RowMatrix> grads, const Matrix& sigma) {
    if (grads.empty()) return {};
    Vector ell = Vector::Zero(grads.front().rows());
    for (const auto& G : grads) {
        if (G.cols() != sigma.rows()) throw DataError("signal_term: gradient width does not match the covariance");
        const RowMatrix GS = G * sigma;
        ell += GS.cwiseProduct(G).rowwise().sum();
    }
    return ell;
}

inline double signal_term(std::span<const RowMatrix> grads, const Matrix& sigma) {
    const Vector ell = signal_terms(grads, sigma);
    return ell.size() == 0 ? 0.0 : ell.mean();
}

struct LhsEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo conditional variance of the logits given Z, averaged over rows.
/// X_anchor holds each row with its pruned block at the anchor.
template <DifferentiableClassifier F>
LhsEstimate mc_lhs(const F& f, const RowMatrix& X_anchor, std::span<const std::size_t> pruned, const Matrix& factor,
                   std::size_t n_draws, std::uint64_t seed) {
    if (n_draws < 2) throw ConfigError("mc_lhs: need at least 2 draws");
    const auto n = X_anchor.rows();
    const auto q = static_cast<Eigen::Index>(pruned.size());
    LhsEstimate est;
    if (n == 0 || (factor.array() == 0.0).all()) return est;
    const auto nd = static_cast<Eigen::Index>(n_draws);
    const double unbias = static_cast<double>(n_draws) / static_cast<double>(n_draws - 1);
    const Matrix factor_t = factor.transpose();
    Matrix xi(nd, q);
    double total = 0.0, var_total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        for (Eigen::Index k = 0; k < xi.size(); ++k) xi.data()[k] = rng.normal();
        const Matrix E = xi * factor_t;
        RowMatrix Xb = X_anchor.row(i).replicate(nd, 1);
        for (Eigen::Index j = 0; j < q; ++j) Xb.col(static_cast<Eigen::Index>(pruned[static_cast<std::size_t>(j)])) += E.col(j);
        const RowMatrix F_ = f.logits(Xb);
        Vector w = Vector::Zero(nd);
        for (Eigen::Index c = 0; c < F_.cols(); ++c) {
            const double mean = F_.col(c).mean();
            w += (F_.col(c).array() - mean).square().matrix() * unbias;
        }
        const double ell = w.mean();
        const double var_w = (w.array() - ell).square().sum() / static_cast<double>(n_draws - 1);
        total += ell;
        var_total += var_w / static_cast<double>(n_draws);
    }
    est.value = total / static_cast<double>(n);
    est.std_error = std::sqrt(var_total) / static_cast<double>(n);
    return est;
}

/// Linear-interpolated sample quantile (the common "type 7" definition).
inline double quantile(std::vector<double> v, double prob) {
    if (v.empty()) throw DataError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Directional gradient drift along each anchor-to-sample segment; shared by
/// every Hoelder exponent.
struct DriftTable {
    std::vector<double> t;                   // probe values, one per entry
    std::vector<double> r;                   // residual norm, one per entry
    std::vector<std::vector<double>> drift;  // per logit, one per entry
    std::vector<double> r_positive;          // residual norms r_i > 0, one per sample
    bool all_below_one = true;
};

template <DifferentiableClassifier F>
DriftTable drift_table(const F& f, const RowMatrix& X_anchor, std::span<const std::size_t> pruned, const RowMatrix& residuals,
                       std::span<const double> probe_grid) {
    DriftTable tab;
    const auto n = X_anchor.rows();
    const std::size_t C = f.num_logits();
    tab.drift.resize(C);
    const Vector r = residuals.rowwise().norm();
    std::vector<Eigen::Index> live;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (r(i) > 0.0) {
            live.push_back(i);
            tab.r_positive.push_back(r(i));
            if (!(r(i) < 1.0)) tab.all_below_one = false;
        }
    }
    if (live.empty()) return tab;
    RowMatrix X0(static_cast<Eigen::Index>(live.size()), X_anchor.cols());
    RowMatrix D(static_cast<Eigen::Index>(live.size()), residuals.cols());
    for (std::size_t k = 0; k < live.size(); ++k) {
        X0.row(static_cast<Eigen::Index>(k)) = X_anchor.row(live[k]);
        D.row(static_cast<Eigen::Index>(k)) = residuals.row(live[k]);
    }
    const auto g0 = input_gradients(f, X0, pruned);
    for (double t : probe_grid) {
        RowMatrix Xt = X0;
        for (std::size_t j = 0; j < pruned.size(); ++j)
            Xt.col(static_cast<Eigen::Index>(pruned[j])) += t * D.col(static_cast<Eigen::Index>(j));
        const auto gt = input_gradients(f, Xt, pruned);
        for (std::size_t k = 0; k < live.size(); ++k) {
            const auto row = static_cast<Eigen::Index>(k);
            const double rk = tab.r_positive[k];
            tab.t.push_back(t);
            tab.r.push_back(rk);
            for (std::size_t c = 0; c < C; ++c) {
                const double along = (gt[c].row(row) - g0[c].row(row)).dot(D.row(row)) / rk;
                tab.drift[c].push_back(std::abs(along));
            }
        }
    }
    return tab;
}

struct Penalty {
    double B_hat = 0.0;
    std::vector<double> holder;  // per logit
    bool degenerate = false;     // no sample with r > 0
};

inline Penalty holder_penalty(const DriftTable& tab, double alpha, double q) {
    Penalty out;
    out.holder.assign(tab.drift.size(), 0.0);
    if (tab.r_positive.empty()) {
        out.degenerate = true;
        return out;
    }
    double sum_h2 = 0.0;
    for (std::size_t c = 0; c < tab.drift.size(); ++c) {
        std::vector<double> ratio(tab.drift[c].size());
        for (std::size_t e = 0; e < ratio.size(); ++e) ratio[e] = tab.drift[c][e] / std::pow(tab.t[e] * tab.r[e], alpha);
        out.holder[c] = quantile(std::move(ratio), q);
        sum_h2 += out.holder[c] * out.holder[c];
    }
    double moment = 0.0;
    for (double r : tab.r_positive) moment += std::pow(r, 2.0 + 2.0 * alpha);
    moment /= static_cast<double>(tab.r_positive.size());
    out.B_hat = sum_h2 / ((alpha + 1.0) * (alpha + 1.0)) * moment;
    return out;
}

/// Curvature penalty for one exponent.
template <DifferentiableClassifier F>
Penalty curvature_penalty(const F& f, const RowMatrix& X_anchor, std::span<const std::size_t> pruned, const AnchorModel& anchor,
                          const BoundConfig& cfg) {
    return holder_penalty(drift_table(f, X_anchor, pruned, anchor.residuals, cfg.probe_grid), cfg.alpha, cfg.quantile);
}

inline double bound_rhs(double L_hat, double B_hat) {
    if (B_hat > L_hat) return 0.0;
    const double d = std::sqrt(L_hat) - std::sqrt(B_hat);
    return d * d;
}

struct ClassBound {
    Tier2 label = Tier2::beta;
    std::size_t n = 0, p = 0, q = 0;
    double L_hat = 0.0;
    double B_hat = 0.0;
    double lhs = 0.0;
    double lhs_se = 0.0;
    double rhs = 0.0;
    std::vector<double> holder;
    double jitter = 0.0;
    bool all_r_below_one = true;
    bool degenerate = false;
};

struct BoundReport {
    double tau = 0.0;
    double alpha = 0.0;
    std::vector<ClassBound> classes;
    double lhs_sup = 0.0;
    double rhs_sup = 0.0;
    double margin = 0.0;

    bool holds(double tol = 1e-12) const { return margin >= -tol; }
};

/// Class-conditional design for one class: its rows, the kept/pruned split
/// and the fitted anchor.
struct ClassDesign {
    Tier2 label;
    RowMatrix X;          // n x d raw rows
    RowMatrix X_anchor;   // X with the pruned block at the anchor
    AnchorModel anchor;
};

inline std::vector<std::size_t> complement(std::span<const std::size_t> kept, std::size_t d) {
    std::vector<char> in(d, 0);
    for (std::size_t k : kept) {
        if (k >= d) throw DataError("kept index " + std::to_string(k) + " out of range");
        in[k] = 1;
    }
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < d; ++j) {
        if (!in[j]) out.push_back(j);
    }
    return out;
}

inline ClassDesign class_design(Tier2 label, RowMatrix X, std::span<const std::size_t> kept, std::span<const std::size_t> pruned,
                                const BoundConfig& cfg) {
    ClassDesign d{label, std::move(X), {}, {}};
    if (static_cast<std::size_t>(d.X.rows()) < kept.size() + 2)
        throw DataError("bounds: class " + std::string(to_string(label)) + " has " + std::to_string(d.X.rows()) +
                        " samples, need at least p+2 = " + std::to_string(kept.size() + 2));
    d.anchor = fit_anchor(gather_columns(d.X, kept), gather_columns(d.X, pruned), cfg);
    d.X_anchor = with_columns(d.X, pruned, d.anchor.anchor);
    return d;
}

/// Bound reports for one kept set over several exponents. The signal term,
/// Monte Carlo LHS and drift table do not depend on alpha and are computed
/// once per class.
template <DifferentiableClassifier F>
std::vector<BoundReport> evaluate_bound_grid(const F& f, std::span<const std::pair<Tier2, RowMatrix>> class_rows,
                                             std::span<const std::size_t> kept_in, std::span<const double> alphas,
                                             const BoundConfig& cfg) {
    cfg.validate();
    if (alphas.empty()) throw ConfigError("bounds: no alpha values");
    for (double a : alphas) {
        if (!(a > 0.0 && a <= 1.0)) throw ConfigError("bounds: alpha must lie in (0, 1]");
    }
    const std::size_t d = f.input_dim();
    std::vector<std::size_t> kept(kept_in.begin(), kept_in.end());
    std::sort(kept.begin(), kept.end());
    const auto pruned = complement(kept, d);

    struct Shared {
        ClassBound base;
        DriftTable drift;
    };
    std::vector<Shared> shared;
    std::uint64_t tau_bits = 0;
    static_assert(sizeof(tau_bits) == sizeof(cfg.tau));
    std::memcpy(&tau_bits, &cfg.tau, sizeof(tau_bits));
    for (const auto& [label, X] : class_rows) {
        if (static_cast<std::size_t>(X.cols()) != d) throw DataError("bounds: class rows do not match the classifier width");
        const auto design = class_design(label, X, kept, pruned, cfg);
        ClassBound cb;
        cb.label = label;
        cb.n = static_cast<std::size_t>(X.rows());
        cb.p = kept.size();
        cb.q = pruned.size();
        cb.jitter = design.anchor.jitter;
        const auto grads = input_gradients(f, design.X_anchor, pruned);
        cb.L_hat = signal_term(grads, design.anchor.sigma_minus);
        const auto lhs = mc_lhs(f, design.X_anchor, pruned, design.anchor.factor, cfg.n_draws,
                                derive_seed(derive_seed(cfg.seed, tau_bits), std::string("mc/") + std::string(to_string(label))));
        cb.lhs = lhs.value;
        cb.lhs_se = lhs.std_error;
        auto tab = drift_table(f, design.X_anchor, pruned, design.anchor.residuals, cfg.probe_grid);
        cb.all_r_below_one = tab.all_below_one;
        shared.push_back({std::move(cb), std::move(tab)});
    }

    std::vector<BoundReport> out;
    for (double alpha : alphas) {
        BoundReport rep;
        rep.tau = cfg.tau;
        rep.alpha = alpha;
        rep.lhs_sup = -std::numeric_limits<double>::infinity();
        rep.rhs_sup = -std::numeric_limits<double>::infinity();
        for (const auto& s : shared) {
            ClassBound cb = s.base;
            const auto pen = holder_penalty(s.drift, alpha, cfg.quantile);
            cb.B_hat = pen.B_hat;
            cb.holder = pen.holder;
            cb.degenerate = pen.degenerate;
            cb.rhs = bound_rhs(cb.L_hat, cb.B_hat);
            rep.lhs_sup = std::max(rep.lhs_sup, cb.lhs);
            rep.rhs_sup = std::max(rep.rhs_sup, cb.rhs);
            rep.classes.push_back(std::move(cb));
        }
        rep.margin = rep.lhs_sup - rep.rhs_sup;
        if (!std::isfinite(rep.margin)) throw NumericError("bounds: non-finite margin");
        out.push_back(std::move(rep));
    }
    return out;
}

/// Labeled tissue rows per class, beta first.
inline std::vector<std::pair<Tier2, RowMatrix>> tissue_class_rows(const Dataset& ds) {
    std::vector<std::pair<Tier2, RowMatrix>> out;
    for (Tier2 label : {Tier2::beta, Tier2::not_beta}) {
        std::vector<const Profile*> rows;
        for (const auto& p : ds.profiles()) {
            if (p.tier1 == Tier1::tissue && p.tier2 == label) rows.push_back(&p);
        }
        out.emplace_back(label, stack_rows(rows, ds.dim()));
    }
    return out;
}

/// Single-exponent report on the labeled tissue profiles of ds.
template <DifferentiableClassifier F>
BoundReport evaluate_bound(const F& f, const Dataset& ds, std::span<const std::size_t> kept, const BoundConfig& cfg) {
    const auto rows = tissue_class_rows(ds);
    const double alpha[] = {cfg.alpha};
    return evaluate_bound_grid(f, rows, kept, alpha, cfg).front();
}

/// Throws when the report shows LHS_sup < RHS_sup.
inline void require_bound(const BoundReport& r, double tol = 1e-12) {
    if (!r.holds(tol))
        throw BoundViolation("bound violated at tau=" + std::to_string(r.tau) + ", alpha=" + std::to_string(r.alpha) +
                             ": margin " + std::to_string(r.margin));
}

}  // namespace crossbeta
