#pragma once

// Prior-adjusted likelihood-ratio threshold between the mica and tissue
// summary densities, and the accuracy sweep over candidate priors.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "crossbeta/error.hpp"
#include "crossbeta/gmm.hpp"
#include "crossbeta/profile.hpp"

namespace crossbeta {

struct ThresholdSearchConfig {
    std::vector<double> prior_grid{0.10, 0.25, 0.50, 0.75, 0.90};
    double bracket_pad = 0.0;       // 0 selects 1% of the summary range
    double root_tolerance = 1e-12;  // bisection bracket width
    std::size_t grid_points = 4096;
    GmmConfig gmm;
};

struct LabeledSummary {
    double value;
    Tier1 label;
};

struct ThresholdResult {
    double pi_tissue = 0.5;
    double xi = 0.0;
    double accuracy = 0.0;
    double fpr = 0.0;   // P(predict tissue | mica)
    double fnr = 0.0;   // P(predict mica | tissue)
    std::size_t roots_found = 0;
};

/// No sign change of the adjusted ratio inside the search bracket.
struct NoRootError : NumericError {
    NoRootError(double lo, double hi, double r_min, double r_max, double pi)
        : NumericError(describe(lo, hi, r_min, r_max, pi)), bracket_lo(lo), bracket_hi(hi), ratio_min(r_min),
          ratio_max(r_max) {}

    double bracket_lo, bracket_hi, ratio_min, ratio_max;

private:
    static std::string describe(double lo, double hi, double r_min, double r_max, double pi) {
        std::ostringstream os;
        os << "no threshold root at pi_tissue=" << pi << " in [" << lo << ", " << hi << "]; adjusted ratio spans ["
           << r_min << ", " << r_max << "]";
        return os.str();
    }
};

/// Decision rule: mica strictly below the threshold, tissue at or above it.
inline Tier1 classify(double summary, double xi) { return summary < xi ? Tier1::mica : Tier1::tissue; }

struct Confusion {
    double accuracy, fpr, fnr;
};

inline Confusion evaluate_threshold(std::span<const LabeledSummary> labeled, double xi) {
    std::size_t correct = 0, n_mica = 0, n_tissue = 0, false_pos = 0, false_neg = 0;
    for (const auto& s : labeled) {
        const Tier1 pred = classify(s.value, xi);
        if (pred == s.label) ++correct;
        if (s.label == Tier1::mica) {
            ++n_mica;
            if (pred == Tier1::tissue) ++false_pos;
        } else {
            ++n_tissue;
            if (pred == Tier1::mica) ++false_neg;
        }
    }
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    return {ratio(correct, labeled.size()), ratio(false_pos, n_mica), ratio(false_neg, n_tissue)};
}

/// log p_tissue - log p_mica - log(pi_mica / pi_tissue); shares its zeros and
/// sign with the adjusted ratio but stays finite deep in the tails.
inline double log_adjusted_ratio(const GmmModel& p_mica, const GmmModel& p_tissue, double pi_tissue, double x) {
    return p_tissue.log_pdf(x) - p_mica.log_pdf(x) - std::log((1.0 - pi_tissue) / pi_tissue);
}

/// p_tissue / p_mica - pi_mica / pi_tissue.
inline double adjusted_ratio(const GmmModel& p_mica, const GmmModel& p_tissue, double pi_tissue, double x) {
    return std::exp(p_tissue.log_pdf(x) - p_mica.log_pdf(x)) - (1.0 - pi_tissue) / pi_tissue;
}

struct Bracket {
    double lo, hi;
};

inline Bracket search_bracket(std::span<const LabeledSummary> labeled, double pad) {
    if (labeled.empty()) throw DataError("threshold search needs labeled summaries");
    double lo = labeled.front().value, hi = lo;
    for (const auto& s : labeled) {
        lo = std::min(lo, s.value);
        hi = std::max(hi, s.value);
    }
    if (pad <= 0.0) pad = hi > lo ? 0.01 * (hi - lo) : 0.01 * std::max(std::abs(lo), 1.0);
    return {lo - pad, hi + pad};
}

/// All sign changes of the adjusted ratio on a dense grid, refined by bisection.
inline std::vector<double> threshold_roots(const GmmModel& p_mica, const GmmModel& p_tissue, double pi_tissue,
                                           Bracket br, const ThresholdSearchConfig& cfg) {
    const std::size_t n = std::max<std::size_t>(cfg.grid_points, 2);
    auto h = [&](double x) { return log_adjusted_ratio(p_mica, p_tissue, pi_tissue, x); };
    std::vector<double> xs(n), hs(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = br.lo + (br.hi - br.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        hs[i] = h(xs[i]);
    }
    std::vector<double> roots;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (hs[i] == 0.0) {
            roots.push_back(xs[i]);
            continue;
        }
        if ((hs[i] < 0.0) == (hs[i + 1] < 0.0) || hs[i + 1] == 0.0) continue;
        double a = xs[i], b = xs[i + 1];
        double ha = hs[i];
        while (b - a > cfg.root_tolerance) {
            const double mid = 0.5 * (a + b);
            if (mid <= a || mid >= b) break;
            const double hm = h(mid);
            if (hm == 0.0) {
                a = b = mid;
                break;
            }
            if ((hm < 0.0) == (ha < 0.0)) {
                a = mid;
                ha = hm;
            } else {
                b = mid;
            }
        }
        roots.push_back(0.5 * (a + b));
    }
    if (hs[n - 1] == 0.0) roots.push_back(xs[n - 1]);
    return roots;
}

/// Threshold for one prior. Among several roots the most accurate one on the
/// labeled summaries wins, ties going to the smaller threshold.
inline ThresholdResult find_threshold(const GmmModel& p_mica, const GmmModel& p_tissue, double pi_tissue,
                                      std::span<const LabeledSummary> labeled, const ThresholdSearchConfig& cfg = {}) {
    if (!(pi_tissue > 0.0 && pi_tissue < 1.0)) throw ConfigError("find_threshold: pi_tissue must lie in (0, 1)");
    const Bracket br = search_bracket(labeled, cfg.bracket_pad);
    const auto roots = threshold_roots(p_mica, p_tissue, pi_tissue, br, cfg);
    if (roots.empty()) {
        double r_min = std::numeric_limits<double>::infinity(), r_max = -r_min;
        const std::size_t n = std::max<std::size_t>(cfg.grid_points, 2);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = br.lo + (br.hi - br.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
            const double r = adjusted_ratio(p_mica, p_tissue, pi_tissue, x);
            r_min = std::min(r_min, r);
            r_max = std::max(r_max, r);
        }
        throw NoRootError(br.lo, br.hi, r_min, r_max, pi_tissue);
    }
    ThresholdResult best;
    best.accuracy = -1.0;
    for (double xi : roots) {
        const auto c = evaluate_threshold(labeled, xi);
        if (c.accuracy > best.accuracy) {
            best.xi = xi;
            best.accuracy = c.accuracy;
            best.fpr = c.fpr;
            best.fnr = c.fnr;
        }
    }
    best.pi_tissue = pi_tissue;
    best.roots_found = roots.size();
    return best;
}

struct PriorSweep {
    ThresholdResult best;
    std::vector<ThresholdResult> rows;
    std::vector<double> failed_priors;
};

/// Threshold per candidate prior and the accuracy maximiser; ties go to the
/// larger tissue prior (fewer missed tissue profiles).
inline PriorSweep sweep_priors(const GmmModel& p_mica, const GmmModel& p_tissue, std::span<const LabeledSummary> labeled,
                               const ThresholdSearchConfig& cfg = {}) {
    if (cfg.prior_grid.empty()) throw ConfigError("sweep_priors: prior grid is empty");
    PriorSweep out;
    std::string reasons;
    for (double pi : cfg.prior_grid) {
        try {
            out.rows.push_back(find_threshold(p_mica, p_tissue, pi, labeled, cfg));
        } catch (const NoRootError& e) {
            out.failed_priors.push_back(pi);
            reasons += std::string("\n  ") + e.what();
        }
    }
    if (out.rows.empty()) throw NumericError("sweep_priors: no prior produced a threshold root:" + reasons);
    out.best = out.rows.front();
    for (const auto& r : out.rows) {
        if (r.accuracy > out.best.accuracy || (r.accuracy == out.best.accuracy && r.pi_tissue > out.best.pi_tissue))
            out.best = r;
    }
    return out;
}

}  // namespace crossbeta
