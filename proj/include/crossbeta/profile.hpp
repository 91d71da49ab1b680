#pragma once

// Labeled scattering profiles on a fixed momentum-transfer grid, dataset
// assembly and deterministic train/val/test splitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crossbeta/error.hpp"
#include "crossbeta/rng.hpp"

namespace crossbeta {

/// Momentum-transfer magnitudes (inverse angstrom), strictly increasing and positive.
class QGrid {
public:
    QGrid() = default;

    explicit QGrid(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw DataError("q-grid must contain at least one value");
        for (std::size_t k = 0; k < values_.size(); ++k) {
            if (!(values_[k] > 0.0) || !std::isfinite(values_[k]))
                throw DataError("q-grid value " + std::to_string(k) + " is not positive");
            if (k > 0 && !(values_[k] > values_[k - 1]))
                throw DataError("q-grid is not strictly increasing at index " + std::to_string(k));
        }
    }

    /// d equally spaced points on [lo, hi], each rounded to 6 decimals so the
    /// grid survives a trip through the CSV header unchanged.
    static QGrid linspace(double lo, double hi, std::size_t d) {
        if (d < 1) throw ConfigError("q-grid needs at least one point");
        std::vector<double> v(d);
        for (std::size_t k = 0; k < d; ++k) {
            const double x = d == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(d - 1);
            v[k] = std::round(x * 1e6) / 1e6;
        }
        return QGrid(std::move(v));
    }

    /// WAXS window used throughout: [0.4, 1.45] with 211 bins.
    static QGrid waxs_default() { return linspace(0.4, 1.45, 211); }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t k) const { return values_[k]; }
    const std::vector<double>& values() const noexcept { return values_; }
    double front() const { return values_.front(); }
    double back() const { return values_.back(); }

    /// Index of the grid point closest to q.
    std::size_t nearest(double q) const {
        auto it = std::lower_bound(values_.begin(), values_.end(), q);
        if (it == values_.end()) return values_.size() - 1;
        auto k = static_cast<std::size_t>(it - values_.begin());
        if (k > 0 && q - values_[k - 1] < values_[k] - q) --k;
        return k;
    }

    bool operator==(const QGrid&) const = default;

private:
    std::vector<double> values_;
};

enum class Tier1 { mica, tissue };
enum class Tier2 { beta, not_beta };
enum class Split { train, val, test };

inline std::string_view to_string(Tier1 t) { return t == Tier1::mica ? "mica" : "tissue"; }
inline std::string_view to_string(Tier2 t) { return t == Tier2::beta ? "beta" : "not_beta"; }
inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

struct Profile {
    std::string id;
    std::vector<double> intensities;
    Tier1 tier1 = Tier1::tissue;
    std::optional<Tier2> tier2;

    bool operator==(const Profile&) const = default;
};

using SplitAssignment = std::map<std::string, Split>;

/// Immutable collection of profiles sharing one grid.
class Dataset {
public:
    Dataset() = default;

    Dataset(QGrid grid, std::vector<Profile> profiles, std::optional<SplitAssignment> split = std::nullopt)
        : grid_(std::move(grid)), profiles_(std::move(profiles)), split_(std::move(split)) {
        validate();
    }

    const QGrid& grid() const noexcept { return grid_; }
    const std::vector<Profile>& profiles() const noexcept { return profiles_; }
    const std::optional<SplitAssignment>& split() const noexcept { return split_; }
    std::size_t size() const noexcept { return profiles_.size(); }
    std::size_t dim() const noexcept { return grid_.size(); }

    std::optional<Split> split_of(const Profile& p) const {
        if (!split_) return std::nullopt;
        auto it = split_->find(p.id);
        if (it == split_->end()) return std::nullopt;
        return it->second;
    }

    Dataset with_split(SplitAssignment split) const { return Dataset(grid_, profiles_, std::move(split)); }

    /// Profiles accepted by pred, keeping the split map restricted to them.
    template <class Pred>
    Dataset filter(Pred pred) const {
        std::vector<Profile> kept;
        std::optional<SplitAssignment> split;
        if (split_) split.emplace();
        for (const auto& p : profiles_) {
            if (!pred(p)) continue;
            kept.push_back(p);
            if (split_) {
                if (auto it = split_->find(p.id); it != split_->end()) split->emplace(it->first, it->second);
            }
        }
        return Dataset(grid_, std::move(kept), std::move(split));
    }

    /// The labeled tissue subset (tier2 present).
    Dataset tissue() const {
        return filter([](const Profile& p) { return p.tier1 == Tier1::tissue && p.tier2.has_value(); });
    }

    bool operator==(const Dataset&) const = default;

private:
    void validate() const {
        std::map<std::string_view, int> seen;
        for (std::size_t i = 0; i < profiles_.size(); ++i) {
            const auto& p = profiles_[i];
            const std::string where = "profile '" + p.id + "'";
            if (p.intensities.size() != grid_.size())
                throw DataError(where + " has " + std::to_string(p.intensities.size()) +
                                " intensities, grid has " + std::to_string(grid_.size()));
            for (std::size_t k = 0; k < p.intensities.size(); ++k) {
                const double v = p.intensities[k];
                if (!std::isfinite(v) || v < 0.0)
                    throw DataError(where + " has a negative or non-finite intensity at bin " + std::to_string(k));
            }
            if (p.tier2 && p.tier1 != Tier1::tissue)
                throw DataError(where + " carries a beta label but is not tissue");
            if (!seen.emplace(p.id, 0).second) throw DataError("duplicate profile id '" + p.id + "'");
        }
        if (split_) {
            for (const auto& [id, s] : *split_) {
                if (!seen.contains(id)) throw DataError("split assignment names unknown id '" + id + "'");
            }
        }
    }

    QGrid grid_;
    std::vector<Profile> profiles_;
    std::optional<SplitAssignment> split_;
};

/// Mean intensity over the grid.
inline double summarize(std::span<const double> intensities) {
    if (intensities.empty()) throw DataError("cannot summarize an empty profile");
    return std::accumulate(intensities.begin(), intensities.end(), 0.0) / static_cast<double>(intensities.size());
}

inline double summarize(const Profile& p) { return summarize(p.intensities); }

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

/// Split sizes for a pool of n: val and test rounded, train takes the rest.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& r) {
    const auto n_val = static_cast<std::size_t>(std::llround(r.val * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::llround(r.test * static_cast<double>(n)));
    const std::size_t n_held = std::min(n, n_val + n_test);
    return {n - n_held, std::min(n_val, n_held), n_held - std::min(n_val, n_held)};
}

/// Assigns every profile to train/val/test.
///
/// Profiles are pooled by tier1 (and additionally by tier2 when stratify is
/// set); each pool is sorted by id and shuffled with a seed derived from the
/// pool name, so the result depends only on (seed, ids, labels).
inline Dataset split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed, bool stratify = false) {
    for (double r : {ratios.train, ratios.val, ratios.test}) {
        if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    }
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");

    const auto n_tissue = std::count_if(ds.profiles().begin(), ds.profiles().end(),
                                        [](const Profile& p) { return p.tier1 == Tier1::tissue; });
    if (n_tissue < 5)
        throw DataError("insufficient data: " + std::to_string(n_tissue) + " tissue profiles, need at least 5");

    std::map<std::string, std::vector<std::string>> pools;
    for (const auto& p : ds.profiles()) {
        std::string key(to_string(p.tier1));
        if (stratify && p.tier2) key += "/" + std::string(to_string(*p.tier2));
        pools[key].push_back(p.id);
    }

    SplitAssignment assignment;
    for (auto& [key, ids] : pools) {
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, key));
        shuffle(ids.begin(), ids.end(), rng);
        const auto sizes = split_sizes(ids.size(), ratios);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const Split s = i < sizes[0] ? Split::train : (i < sizes[0] + sizes[1] ? Split::val : Split::test);
            assignment.emplace(ids[i], s);
        }
    }
    return ds.with_split(std::move(assignment));
}

struct SplitBalanceRow {
    std::string label;
    std::array<std::size_t, 3> counts{};    // train, val, test
    std::array<double, 3> expected{};
    bool within_one = true;
};

/// Per-class split counts against the target ratios (reported, not enforced).
inline std::vector<SplitBalanceRow> split_balance(const Dataset& ds, const SplitRatios& ratios) {
    std::map<std::string, SplitBalanceRow> rows;
    for (const auto& p : ds.profiles()) {
        auto s = ds.split_of(p);
        if (!s) continue;
        std::string label = p.tier2 ? std::string(to_string(*p.tier2)) : std::string(to_string(p.tier1));
        auto& row = rows[label];
        row.label = label;
        ++row.counts[static_cast<int>(*s)];
    }
    std::vector<SplitBalanceRow> out;
    for (auto& [label, row] : rows) {
        const double n = static_cast<double>(row.counts[0] + row.counts[1] + row.counts[2]);
        row.expected = {ratios.train * n, ratios.val * n, ratios.test * n};
        for (int k = 0; k < 3; ++k) {
            if (std::abs(static_cast<double>(row.counts[k]) - row.expected[k]) > 1.0 + 1e-9) row.within_one = false;
        }
        out.push_back(row);
    }
    return out;
}

}  // namespace crossbeta
