#pragma once

// Synthetic labeled WAXS-like profiles.
//
// Every profile is substrate + (tissue background) + (cross-beta peaks) +
// noise, with the substrate and background scaled by one random amplitude
// factor per profile. That shared factor is what makes neighbouring (and
// distant) bins strongly collinear; its spread is tied to the noise level so
// that two bins of typical tissue intensity correlate at about
// correlation_strength.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <numeric>
#include <string>
#include <vector>

#include "crossbeta/error.hpp"
#include "crossbeta/profile.hpp"
#include "crossbeta/rng.hpp"

namespace crossbeta {

struct SynthConfig {
    QGrid grid = QGrid::waxs_default();
    std::size_t n_mica = 92;
    std::size_t n_beta = 903;
    std::size_t n_notbeta = 356;
    double noise_sd = 1e-4;
    double mica_level = 0.008;
    double tissue_level = 0.016;
    std::array<double, 2> peak_centers{0.60, 1.34};  // inter-sheet, inter-strand
    std::array<double, 2> peak_widths{0.05, 0.015};  // Gaussian sd, same order as centers
    std::array<double, 2> peak_amp_range{1e-4, 2e-3};
    double correlation_strength = 0.995;
    std::uint64_t seed = 20240601;
};

namespace synth_detail {

inline double substrate_shape_raw(double q) {
    return std::exp(-(q - 0.4) / 0.8) + 0.15 * std::exp(-(q - 1.0) * (q - 1.0) / (2.0 * 0.15 * 0.15));
}

inline double background_shape_raw(double q, double q0, double q1) { return 0.5 + (q - q0) / (q1 - q0); }

inline std::vector<double> unit_mean(std::vector<double> v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (auto& x : v) x /= m;
    return v;
}

}  // namespace synth_detail

inline void validate(const SynthConfig& cfg) {
    if (cfg.n_mica + cfg.n_beta + cfg.n_notbeta == 0) throw ConfigError("synth: all class counts are zero");
    if (!(cfg.noise_sd >= 0.0)) throw ConfigError("synth: noise_sd must be non-negative");
    if (!(cfg.correlation_strength >= 0.0 && cfg.correlation_strength < 1.0))
        throw ConfigError("synth: correlation_strength must lie in [0, 1)");
    for (int k = 0; k < 2; ++k) {
        if (cfg.peak_centers[k] < cfg.grid.front() || cfg.peak_centers[k] > cfg.grid.back())
            throw ConfigError("synth: peak center " + std::to_string(cfg.peak_centers[k]) + " lies outside the q-grid");
        if (!(cfg.peak_widths[k] > 0.0)) throw ConfigError("synth: peak widths must be positive");
    }
    if (!(cfg.peak_amp_range[0] >= 0.0 && cfg.peak_amp_range[1] >= cfg.peak_amp_range[0]))
        throw ConfigError("synth: peak_amp_range must be a non-negative interval");
    if (!(cfg.mica_level >= 0.0 && cfg.tissue_level >= 0.0)) throw ConfigError("synth: levels must be non-negative");
}

/// Substrate curve scaled to mica_level mean intensity.
inline std::vector<double> substrate_curve(const SynthConfig& cfg) {
    std::vector<double> v(cfg.grid.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = synth_detail::substrate_shape_raw(cfg.grid[k]);
    v = synth_detail::unit_mean(std::move(v));
    for (auto& x : v) x *= cfg.mica_level;
    return v;
}

/// Tissue background ramp scaled to tissue_level mean intensity.
inline std::vector<double> background_curve(const SynthConfig& cfg) {
    std::vector<double> v(cfg.grid.size());
    for (std::size_t k = 0; k < v.size(); ++k)
        v[k] = synth_detail::background_shape_raw(cfg.grid[k], cfg.grid.front(), cfg.grid.back());
    v = synth_detail::unit_mean(std::move(v));
    for (auto& x : v) x *= cfg.tissue_level;
    return v;
}

/// Unit-amplitude Gaussian peak k evaluated on the grid.
inline std::vector<double> peak_shape(const SynthConfig& cfg, int k) {
    std::vector<double> v(cfg.grid.size());
    const double c = cfg.peak_centers[k];
    const double w = cfg.peak_widths[k];
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double z = (cfg.grid[j] - c) / w;
        v[j] = std::exp(-0.5 * z * z);
    }
    return v;
}

/// Standard deviation of the per-profile amplitude factor.
inline double amplitude_factor_sd(const SynthConfig& cfg) {
    const double ref = cfg.mica_level + cfg.tissue_level;
    if (ref <= 0.0 || cfg.noise_sd == 0.0) return 0.0;
    const double rho = cfg.correlation_strength;
    return cfg.noise_sd / ref * std::sqrt(rho / (1.0 - rho));
}

/// Bins where either unit peak reaches rel_cutoff; outside them the class
/// signal is below rel_cutoff times the peak amplitude.
inline std::vector<std::size_t> informative_bins(const SynthConfig& cfg, double rel_cutoff = 1e-4) {
    const auto p0 = peak_shape(cfg, 0);
    const auto p1 = peak_shape(cfg, 1);
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < p0.size(); ++j) {
        if (p0[j] >= rel_cutoff || p1[j] >= rel_cutoff) out.push_back(j);
    }
    return out;
}

inline std::vector<std::size_t> non_informative_bins(const SynthConfig& cfg, double rel_cutoff = 1e-4) {
    const auto inf = informative_bins(cfg, rel_cutoff);
    std::vector<std::size_t> out;
    std::size_t i = 0;
    for (std::size_t j = 0; j < cfg.grid.size(); ++j) {
        if (i < inf.size() && inf[i] == j) {
            ++i;
            continue;
        }
        out.push_back(j);
    }
    return out;
}

inline Dataset generate(const SynthConfig& cfg) {
    validate(cfg);
    const std::size_t d = cfg.grid.size();
    const auto substrate = substrate_curve(cfg);
    const auto background = background_curve(cfg);
    const std::array<std::vector<double>, 2> peaks{peak_shape(cfg, 0), peak_shape(cfg, 1)};
    const double factor_sd = amplitude_factor_sd(cfg);

    std::vector<Profile> profiles;
    profiles.reserve(cfg.n_mica + cfg.n_beta + cfg.n_notbeta);

    auto make_class = [&](std::string_view prefix, std::size_t count, Tier1 t1, std::optional<Tier2> t2) {
        Rng rng(derive_seed(cfg.seed, prefix));
        for (std::size_t i = 0; i < count; ++i) {
            Profile p;
            char id[48];
            std::snprintf(id, sizeof id, "%.*s_%05zu", static_cast<int>(prefix.size()), prefix.data(), i);
            p.id = id;
            p.tier1 = t1;
            p.tier2 = t2;
            p.intensities.resize(d);
            const double factor = 1.0 + factor_sd * rng.normal();
            std::array<double, 2> amp{0.0, 0.0};
            if (t2 == Tier2::beta) {
                for (auto& a : amp) a = rng.uniform(cfg.peak_amp_range[0], cfg.peak_amp_range[1]);
            }
            for (std::size_t k = 0; k < d; ++k) {
                double base = substrate[k];
                if (t1 == Tier1::tissue) base += background[k];
                double v = factor * base + amp[0] * peaks[0][k] + amp[1] * peaks[1][k];
                if (cfg.noise_sd > 0.0) v += cfg.noise_sd * rng.normal();
                p.intensities[k] = v < 0.0 ? 0.0 : v;
            }
            profiles.push_back(std::move(p));
        }
    };

    make_class("mica", cfg.n_mica, Tier1::mica, std::nullopt);
    make_class("beta", cfg.n_beta, Tier1::tissue, Tier2::beta);
    make_class("notbeta", cfg.n_notbeta, Tier1::tissue, Tier2::not_beta);
    return Dataset(cfg.grid, std::move(profiles));
}

/// i.i.d. draws from a 1D Gaussian mixture.
inline std::vector<double> generate_bimodal_summaries(std::size_t n, const std::vector<double>& modes,
                                                      const std::vector<double>& weights,
                                                      const std::vector<double>& sds, std::uint64_t seed) {
    if (modes.empty() || modes.size() != weights.size() || modes.size() != sds.size())
        throw ConfigError("mixture: modes, weights and sds must be non-empty and equally long");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ConfigError("mixture: weights must be non-negative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture: weights must sum to 1");
    for (double s : sds) {
        if (!(s > 0.0)) throw ConfigError("mixture: standard deviations must be positive");
    }

    Rng rng(seed);
    std::vector<double> out(n);
    for (auto& x : out) {
        const double u = rng.uniform();
        std::size_t k = 0;
        double acc = weights[0];
        while (u >= acc && k + 1 < weights.size()) acc += weights[++k];
        x = rng.normal(modes[k], sds[k]);
    }
    return out;
}

}  // namespace crossbeta
