#pragma once

// One-dimensional Gaussian mixtures: EM fitting with restarts and BIC order
// selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crossbeta/error.hpp"
#include "crossbeta/rng.hpp"

namespace crossbeta {

struct GmmConfig {
    double em_tol = 1e-8;          // relative log-likelihood improvement
    int em_max_iter = 500;
    int n_init = 10;
    double scale_floor = 0.0;      // 0 selects 1e-6 * data range
    int k_max = 10;
    std::uint64_t seed = 7;
};

struct GmmModel {
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> scales;
    double loglik = 0.0;
    std::size_t n = 0;
    double scale_floor = 0.0;
    int iterations = 0;
    std::vector<double> loglik_trace;  // log-likelihood before each M-step of the winning run

    std::size_t components() const noexcept { return means.size(); }

    double log_pdf(double x) const {
        double best = -std::numeric_limits<double>::infinity();
        thread_local std::vector<double> terms;
        terms.resize(means.size());
        for (std::size_t k = 0; k < means.size(); ++k) {
            const double z = (x - means[k]) / scales[k];
            terms[k] = std::log(weights[k]) - 0.5 * z * z - std::log(scales[k]) - 0.5 * std::log(2.0 * std::numbers::pi);
            best = std::max(best, terms[k]);
        }
        if (!std::isfinite(best)) return best;
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - best);
        return best + std::log(acc);
    }

    double pdf(double x) const { return std::exp(log_pdf(x)); }

    /// Free parameters of a 1D K-component mixture: K means, K scales, K-1 weights.
    std::size_t free_parameters() const noexcept { return 3 * components() - 1; }
};

inline double bic(double loglik, std::size_t k, std::size_t n) {
    return -2.0 * loglik + static_cast<double>(3 * k - 1) * std::log(static_cast<double>(n));
}

namespace gmm_detail {

inline double auto_scale_floor(std::span<const double> x) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double range = *hi - *lo;
    if (range > 0.0) return 1e-6 * range;
    return 1e-6 * std::max(std::abs(*lo), 1.0);
}

struct Params {
    std::vector<double> w, mu, sigma;
};

// E-step fused with the log-likelihood; fills responsibilities n x K,
// one column per component.
inline double e_step(const Eigen::ArrayXd& x, const Params& p, Eigen::ArrayXXd& resp) {
    const Eigen::Index K = static_cast<Eigen::Index>(p.mu.size());
    resp.resize(x.size(), K);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const double log_norm = std::log(p.w[ku]) - std::log(p.sigma[ku]) - half_log_2pi;
        resp.col(k) = log_norm - 0.5 * ((x - p.mu[ku]) * (1.0 / p.sigma[ku])).square();
    }
    const Eigen::ArrayXd best = resp.rowwise().maxCoeff();
    for (Eigen::Index k = 0; k < K; ++k) resp.col(k) = (resp.col(k) - best).exp();
    const Eigen::ArrayXd acc = resp.rowwise().sum();
    const Eigen::ArrayXd inv = acc.inverse();
    resp.colwise() *= inv;
    return (best + acc.log()).sum();
}

inline void m_step(const Eigen::ArrayXd& x, const Eigen::ArrayXXd& resp, double floor, Params& p) {
    const std::size_t K = p.mu.size();
    const double n = static_cast<double>(x.size());
    const Eigen::VectorXd nk = resp.colwise().sum().transpose();
    const Eigen::VectorXd sx = resp.matrix().transpose() * x.matrix();
    for (std::size_t k = 0; k < K; ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        if (nk(c) <= 0.0) {
            p.w[k] = 0.0;
            continue;
        }
        const double mu = sx(c) / nk(c);
        const double ss = (resp.col(c) * (x - mu).square()).sum();
        p.w[k] = nk(c) / n;
        p.mu[k] = mu;
        p.sigma[k] = std::max(std::sqrt(ss / nk(c)), floor);
    }
}

// k-means++ style seeding of the means; equal weights, pooled scale.
inline Params seed_kmeanspp(std::span<const double> x, std::size_t K, double pooled_sd, double floor, Rng& rng) {
    Params p;
    p.mu.push_back(x[rng.below(x.size())]);
    std::vector<double> d2(x.size());
    while (p.mu.size() < K) {
        double total = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (double m : p.mu) best = std::min(best, (x[i] - m) * (x[i] - m));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            p.mu.push_back(x[rng.below(x.size())]);
            continue;
        }
        double u = rng.uniform() * total;
        std::size_t pick = x.size() - 1;
        for (std::size_t i = 0; i < x.size(); ++i) {
            u -= d2[i];
            if (u < 0.0) {
                pick = i;
                break;
            }
        }
        p.mu.push_back(x[pick]);
    }
    p.w.assign(K, 1.0 / static_cast<double>(K));
    p.sigma.assign(K, std::max(pooled_sd, floor));
    return p;
}

// Components stacked on the single-Gaussian fit with a tiny spread, so EM
// starts next to the K=1 optimum and can only improve on it.
inline Params seed_nested(double mean, double sd, std::size_t K, double floor) {
    Params p;
    for (std::size_t k = 0; k < K; ++k)
        p.mu.push_back(mean + 1e-2 * sd * (static_cast<double>(k) - 0.5 * static_cast<double>(K - 1)));
    p.w.assign(K, 1.0 / static_cast<double>(K));
    p.sigma.assign(K, std::max(sd, floor));
    return p;
}

struct RunResult {
    Params params;
    double loglik;
    int iterations;
    std::vector<double> trace;
};

inline RunResult run_em(const Eigen::ArrayXd& x, Params p, double floor, const GmmConfig& cfg) {
    Eigen::ArrayXXd resp;
    std::vector<double> trace;
    double prev = -std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < cfg.em_max_iter; ++it) {
        const double ll = e_step(x, p, resp);
        trace.push_back(ll);
        if (std::isfinite(prev) && ll - prev < cfg.em_tol * std::abs(prev)) break;
        prev = ll;
        m_step(x, resp, floor, p);
    }
    const double final_ll = e_step(x, p, resp);
    if (it == cfg.em_max_iter) trace.push_back(final_ll);
    return {std::move(p), final_ll, it, std::move(trace)};
}

}  // namespace gmm_detail

/// Maximum-likelihood K-component mixture: best of n_init k-means++ restarts
/// plus one start seeded at the single-Gaussian fit.
inline GmmModel fit_gmm(std::span<const double> samples, std::size_t K, const GmmConfig& cfg = {}) {
    if (K < 1) throw ConfigError("fit_gmm: K must be at least 1");
    const std::size_t need = std::max<std::size_t>(2 * K, 4);
    if (samples.size() < need)
        throw DataError("fit_gmm: " + std::to_string(samples.size()) + " samples, need at least " + std::to_string(need));
    for (double v : samples) {
        if (!std::isfinite(v)) throw DataError("fit_gmm: non-finite sample");
    }
    std::vector<double> distinct(samples.begin(), samples.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (K >= 2 && distinct.size() < K)
        throw NumericError("fit_gmm: degenerate data, " + std::to_string(distinct.size()) +
                           " distinct values for K=" + std::to_string(K));

    const double floor = cfg.scale_floor > 0.0 ? cfg.scale_floor : gmm_detail::auto_scale_floor(samples);
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);

    std::vector<gmm_detail::Params> starts;
    starts.push_back(gmm_detail::seed_nested(mean, sd, K, floor));
    if (K > 1) {
        for (int r = 0; r < cfg.n_init; ++r) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(K) * 1000 + static_cast<std::uint64_t>(r)));
            starts.push_back(gmm_detail::seed_kmeanspp(samples, K, sd, floor, rng));
        }
    }

    const Eigen::ArrayXd x = Eigen::Map<const Eigen::ArrayXd>(samples.data(), static_cast<Eigen::Index>(samples.size()));
    gmm_detail::RunResult best{{}, -std::numeric_limits<double>::infinity(), 0, {}};
    for (auto& start : starts) {
        auto run = gmm_detail::run_em(x, std::move(start), floor, cfg);
        if (run.loglik > best.loglik) best = std::move(run);
    }
    if (!std::isfinite(best.loglik)) throw NumericError("fit_gmm: EM produced a non-finite log-likelihood");

    GmmModel m;
    m.weights = std::move(best.params.w);
    m.means = std::move(best.params.mu);
    m.scales = std::move(best.params.sigma);
    m.loglik = best.loglik;
    m.n = samples.size();
    m.scale_floor = floor;
    m.iterations = best.iterations;
    m.loglik_trace = std::move(best.trace);
    return m;
}

struct BicRecord {
    std::size_t k;
    double loglik;
    double bic;
};

struct BicTrace {
    std::vector<BicRecord> records;
    std::size_t k_star = 1;
};

struct OrderSelection {
    GmmModel model;
    BicTrace trace;
};

/// Fits K = 1..k_max and keeps the BIC minimiser (ties go to the smaller K).
inline OrderSelection select_order(std::span<const double> samples, const GmmConfig& cfg = {}) {
    if (cfg.k_max < 1) throw ConfigError("select_order: k_max must be at least 1");
    OrderSelection out;
    double best_bic = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= cfg.k_max; ++k) {
        GmmModel m = fit_gmm(samples, static_cast<std::size_t>(k), cfg);
        const double b = bic(m.loglik, m.components(), m.n);
        out.trace.records.push_back({m.components(), m.loglik, b});
        if (b < best_bic) {
            best_bic = b;
            out.trace.k_star = static_cast<std::size_t>(k);
            out.model = std::move(m);
        }
    }
    return out;
}

}  // namespace crossbeta
