#pragma once

// Flat sectioned key-value configuration:
//
//   # comment
//   run.seed = 20240601
//   stage2.tau_list = 0.990, 0.992, 0.994
//
// Keys are checked against the known set so a typo fails loudly.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <utility>
#include <vector>

#include "crossbeta/bayes_threshold.hpp"
#include "crossbeta/bounds.hpp"
#include "crossbeta/error.hpp"
#include "crossbeta/loss.hpp"
#include "crossbeta/profile.hpp"
#include "crossbeta/prune.hpp"
#include "crossbeta/rng.hpp"
#include "crossbeta/synth.hpp"
#include "crossbeta/train.hpp"

namespace crossbeta {

struct KeyValue {
    std::string value;
    std::size_t line = 0;
};

using KeyValueMap = std::map<std::string, KeyValue>;

namespace config_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

}  // namespace config_detail

inline KeyValueMap parse_key_values(std::istream& in, const std::string& origin) {
    KeyValueMap out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const auto t = config_detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
        auto key = config_detail::trim(t.substr(0, eq));
        auto value = config_detail::trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(n) + ": empty key");
        if (out.contains(key)) throw ConfigError(origin + ":" + std::to_string(n) + ": duplicate key '" + key + "'");
        out[key] = {value, n};
    }
    return out;
}

struct RunConfig {
    std::uint64_t seed = 20240601;
    std::string data_source = "synth";  // "synth" or a CSV path
    SynthConfig synth;
    bool synth_seed_explicit = false;
    SplitRatios split;
    bool stratify = false;
    ThresholdSearchConfig stage1;
    bool add_empirical_prior = true;
    std::vector<double> tau_list{0.990, 0.992, 0.994};
    std::size_t rho_beta = 3;
    std::size_t rho_notbeta = 3;
    std::vector<LossKind> losses{LossKind::wce, LossKind::focal, LossKind::combo};
    LossConfig loss;
    TrainConfig train;
    std::vector<double> bound_taus{0.990, 0.992, 0.994};
    std::vector<double> alphas{0.25, 0.5, 0.75, 1.0};
    BoundConfig bounds;
    std::string bound_model;  // empty = <out>/model_full.txt
    LossKind collapse_loss = LossKind::wce;
    bool collapse_balance = false;
    double informative_cutoff = 1e-4;
    std::string config_origin = "<defaults>";

    /// Seed of one sub-stage, derived from the run seed.
    std::uint64_t stage_seed(std::string_view stage) const { return derive_seed(seed, stage); }

    SynthConfig effective_synth() const {
        SynthConfig s = synth;
        if (!synth_seed_explicit) s.seed = stage_seed("synth");
        return s;
    }

    void validate() const {
        validate_synth();
        if (tau_list.empty()) throw ConfigError("stage2.tau_list is empty");
        for (double t : tau_list) {
            if (!(t > 0.0 && t < 1.0)) throw ConfigError("stage2.tau_list values must lie in (0, 1)");
        }
        for (double t : bound_taus) {
            if (!(t > 0.0 && t < 1.0)) throw ConfigError("bounds.tau_list values must lie in (0, 1)");
        }
        for (double a : alphas) {
            if (!(a > 0.0 && a <= 1.0)) throw ConfigError("bounds.alphas values must lie in (0, 1]");
        }
        if (stage1.prior_grid.empty()) throw ConfigError("stage1.prior_grid is empty");
        for (double p : stage1.prior_grid) {
            if (!(p > 0.0 && p < 1.0)) throw ConfigError("stage1.prior_grid values must lie in (0, 1)");
        }
        if (losses.empty()) throw ConfigError("stage3.losses is empty");
        loss.validate();
        train.validate();
        bounds.validate();
        if (data_source != "synth") {
            std::ifstream probe(data_source);
            if (!probe) throw ConfigError("data.source '" + data_source + "' does not exist");
        }
    }

private:
    void validate_synth() const {
        if (data_source == "synth") crossbeta::validate(effective_synth());
    }
};

namespace config_detail {

class Reader {
public:
    Reader(const KeyValueMap& kv, std::string origin) : kv_(kv), origin_(std::move(origin)) {}

    template <class T>
    void get(const std::string& key, T& target) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return;
        used_.push_back(key);
        target = parse<T>(key, it->second);
    }

    bool has(const std::string& key) const { return kv_.contains(key); }

    void check_unknown() const {
        for (const auto& [key, kv] : kv_) {
            if (std::find(used_.begin(), used_.end(), key) == used_.end())
                throw ConfigError(origin_ + ":" + std::to_string(kv.line) + ": unknown key '" + key + "'");
        }
    }

private:
    [[noreturn]] void fail(const std::string& key, const KeyValue& kv, const std::string& what) const {
        throw ConfigError(origin_ + ":" + std::to_string(kv.line) + ": " + key + ": " + what + " (got '" + kv.value + "')");
    }

    double number(const std::string& key, const KeyValue& kv, const std::string& text) const {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size()) fail(key, kv, "expected a number");
        return v;
    }

    template <class T>
    T parse(const std::string& key, const KeyValue& kv) const {
        const std::string& s = kv.value;
        if constexpr (std::is_same_v<T, std::string>) {
            return s;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (s == "true" || s == "1" || s == "yes") return true;
            if (s == "false" || s == "0" || s == "no") return false;
            fail(key, kv, "expected true or false");
        } else if constexpr (std::is_same_v<T, double>) {
            return number(key, kv, s);
        } else if constexpr (std::is_integral_v<T>) {
            T v{};
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size()) fail(key, kv, "expected a non-negative integer");
            return v;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            std::vector<double> out;
            for (const auto& item : split_list(s)) out.push_back(number(key, kv, item));
            return out;
        } else if constexpr (std::is_same_v<T, std::array<double, 2>>) {
            const auto items = split_list(s);
            if (items.size() != 2) fail(key, kv, "expected two comma-separated numbers");
            return {number(key, kv, items[0]), number(key, kv, items[1])};
        } else if constexpr (std::is_same_v<T, std::vector<LossKind>>) {
            std::vector<LossKind> out;
            try {
                for (const auto& item : split_list(s)) out.push_back(parse_loss_kind(item));
            } catch (const ConfigError& e) {
                fail(key, kv, e.what());
            }
            return out;
        } else if constexpr (std::is_same_v<T, LossKind>) {
            try {
                return parse_loss_kind(s);
            } catch (const ConfigError& e) {
                fail(key, kv, e.what());
            }
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

    const KeyValueMap& kv_;
    std::string origin_;
    std::vector<std::string> used_;
};

}  // namespace config_detail

/// Applies a parsed key-value map on top of the defaults.
inline RunConfig run_config_from(const KeyValueMap& kv, const std::string& origin) {
    RunConfig c;
    c.config_origin = origin;
    config_detail::Reader r(kv, origin);
    r.get("run.seed", c.seed);
    r.get("data.source", c.data_source);

    double grid_lo = 0.4, grid_hi = 1.45;
    std::size_t grid_points = 211;
    r.get("synth.grid_lo", grid_lo);
    r.get("synth.grid_hi", grid_hi);
    r.get("synth.grid_points", grid_points);
    c.synth.grid = QGrid::linspace(grid_lo, grid_hi, grid_points);
    r.get("synth.n_mica", c.synth.n_mica);
    r.get("synth.n_beta", c.synth.n_beta);
    r.get("synth.n_notbeta", c.synth.n_notbeta);
    r.get("synth.noise_sd", c.synth.noise_sd);
    r.get("synth.mica_level", c.synth.mica_level);
    r.get("synth.tissue_level", c.synth.tissue_level);
    r.get("synth.peak_centers", c.synth.peak_centers);
    r.get("synth.peak_widths", c.synth.peak_widths);
    r.get("synth.peak_amp_range", c.synth.peak_amp_range);
    r.get("synth.correlation_strength", c.synth.correlation_strength);
    if (r.has("synth.seed")) {
        r.get("synth.seed", c.synth.seed);
        c.synth_seed_explicit = true;
    }

    r.get("split.train", c.split.train);
    r.get("split.val", c.split.val);
    r.get("split.test", c.split.test);
    r.get("split.stratify", c.stratify);

    r.get("stage1.prior_grid", c.stage1.prior_grid);
    r.get("stage1.add_empirical_prior", c.add_empirical_prior);
    r.get("stage1.bracket_pad", c.stage1.bracket_pad);
    r.get("stage1.root_tolerance", c.stage1.root_tolerance);
    r.get("stage1.grid_points", c.stage1.grid_points);
    r.get("stage1.em_tol", c.stage1.gmm.em_tol);
    r.get("stage1.em_max_iter", c.stage1.gmm.em_max_iter);
    r.get("stage1.n_init", c.stage1.gmm.n_init);
    r.get("stage1.scale_floor", c.stage1.gmm.scale_floor);
    r.get("stage1.k_max", c.stage1.gmm.k_max);

    r.get("stage2.tau_list", c.tau_list);
    r.get("stage2.rho_beta", c.rho_beta);
    r.get("stage2.rho_notbeta", c.rho_notbeta);

    r.get("stage3.losses", c.losses);
    r.get("stage3.gamma", c.loss.gamma);
    r.get("stage3.dice_eps", c.loss.dice_eps);
    r.get("stage3.combo_weights", c.loss.combo_weights);
    r.get("stage3.lr", c.train.lr);
    r.get("stage3.lr_min", c.train.lr_min);
    r.get("stage3.weight_decay", c.train.weight_decay);
    r.get("stage3.beta1", c.train.beta1);
    r.get("stage3.beta2", c.train.beta2);
    r.get("stage3.adam_eps", c.train.adam_eps);
    r.get("stage3.max_epochs", c.train.max_epochs);
    r.get("stage3.patience", c.train.patience);
    r.get("stage3.improve_tol", c.train.improve_tol);
    r.get("stage3.folds", c.train.folds);
    r.get("stage3.batch_size", c.train.batch_size);
    r.get("stage3.dropout_p", c.train.dropout_p);
    r.get("stage3.leaky_slope", c.train.leaky_slope);

    r.get("bounds.tau_list", c.bound_taus);
    r.get("bounds.alphas", c.alphas);
    r.get("bounds.n_draws", c.bounds.n_draws);
    r.get("bounds.probe_grid", c.bounds.probe_grid);
    r.get("bounds.quantile", c.bounds.quantile);
    r.get("bounds.jitter_start", c.bounds.jitter_start);
    r.get("bounds.jitter_cap", c.bounds.jitter_cap);
    r.get("bounds.model", c.bound_model);

    r.get("collapse.loss", c.collapse_loss);
    r.get("collapse.balance_classes", c.collapse_balance);
    r.get("collapse.informative_cutoff", c.informative_cutoff);
    r.check_unknown();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return run_config_from(parse_key_values(in, path), path);
}

namespace config_detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s;
}

}  // namespace config_detail

/// Every effective setting as key-value pairs, in the file syntax. Parsing the
/// result back yields the same configuration.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& c) {
    using config_detail::fmt;
    using config_detail::join;
    const auto& g = c.synth.grid;
    std::vector<std::pair<std::string, std::string>> e{
        {"run.seed", std::to_string(c.seed)},
        {"data.source", c.data_source},
        {"synth.grid_lo", fmt(g.front())},
        {"synth.grid_hi", fmt(g.back())},
        {"synth.grid_points", std::to_string(g.size())},
        {"synth.n_mica", std::to_string(c.synth.n_mica)},
        {"synth.n_beta", std::to_string(c.synth.n_beta)},
        {"synth.n_notbeta", std::to_string(c.synth.n_notbeta)},
        {"synth.noise_sd", fmt(c.synth.noise_sd)},
        {"synth.mica_level", fmt(c.synth.mica_level)},
        {"synth.tissue_level", fmt(c.synth.tissue_level)},
        {"synth.peak_centers", join({c.synth.peak_centers[0], c.synth.peak_centers[1]})},
        {"synth.peak_widths", join({c.synth.peak_widths[0], c.synth.peak_widths[1]})},
        {"synth.peak_amp_range", join({c.synth.peak_amp_range[0], c.synth.peak_amp_range[1]})},
        {"synth.correlation_strength", fmt(c.synth.correlation_strength)},
    };
    if (c.synth_seed_explicit) e.emplace_back("synth.seed", std::to_string(c.synth.seed));
    std::string losses;
    for (std::size_t i = 0; i < c.losses.size(); ++i) losses += (i ? ", " : "") + std::string(to_string(c.losses[i]));
    const std::vector<std::pair<std::string, std::string>> rest{
        {"split.train", fmt(c.split.train)},
        {"split.val", fmt(c.split.val)},
        {"split.test", fmt(c.split.test)},
        {"split.stratify", c.stratify ? "true" : "false"},
        {"stage1.prior_grid", join(c.stage1.prior_grid)},
        {"stage1.add_empirical_prior", c.add_empirical_prior ? "true" : "false"},
        {"stage1.bracket_pad", fmt(c.stage1.bracket_pad)},
        {"stage1.root_tolerance", fmt(c.stage1.root_tolerance)},
        {"stage1.grid_points", std::to_string(c.stage1.grid_points)},
        {"stage1.em_tol", fmt(c.stage1.gmm.em_tol)},
        {"stage1.em_max_iter", std::to_string(c.stage1.gmm.em_max_iter)},
        {"stage1.n_init", std::to_string(c.stage1.gmm.n_init)},
        {"stage1.scale_floor", fmt(c.stage1.gmm.scale_floor)},
        {"stage1.k_max", std::to_string(c.stage1.gmm.k_max)},
        {"stage2.tau_list", join(c.tau_list)},
        {"stage2.rho_beta", std::to_string(c.rho_beta)},
        {"stage2.rho_notbeta", std::to_string(c.rho_notbeta)},
        {"stage3.losses", losses},
        {"stage3.gamma", fmt(c.loss.gamma)},
        {"stage3.dice_eps", fmt(c.loss.dice_eps)},
        {"stage3.combo_weights", join({c.loss.combo_weights[0], c.loss.combo_weights[1]})},
        {"stage3.lr", fmt(c.train.lr)},
        {"stage3.lr_min", fmt(c.train.lr_min)},
        {"stage3.weight_decay", fmt(c.train.weight_decay)},
        {"stage3.beta1", fmt(c.train.beta1)},
        {"stage3.beta2", fmt(c.train.beta2)},
        {"stage3.adam_eps", fmt(c.train.adam_eps)},
        {"stage3.max_epochs", std::to_string(c.train.max_epochs)},
        {"stage3.patience", std::to_string(c.train.patience)},
        {"stage3.improve_tol", fmt(c.train.improve_tol)},
        {"stage3.folds", std::to_string(c.train.folds)},
        {"stage3.batch_size", std::to_string(c.train.batch_size)},
        {"stage3.dropout_p", fmt(c.train.dropout_p)},
        {"stage3.leaky_slope", fmt(c.train.leaky_slope)},
        {"bounds.tau_list", join(c.bound_taus)},
        {"bounds.alphas", join(c.alphas)},
        {"bounds.n_draws", std::to_string(c.bounds.n_draws)},
        {"bounds.probe_grid", join(c.bounds.probe_grid)},
        {"bounds.quantile", fmt(c.bounds.quantile)},
        {"bounds.jitter_start", fmt(c.bounds.jitter_start)},
        {"bounds.jitter_cap", fmt(c.bounds.jitter_cap)},
        {"bounds.model", c.bound_model},
        {"collapse.loss", std::string(to_string(c.collapse_loss))},
        {"collapse.balance_classes", c.collapse_balance ? "true" : "false"},
        {"collapse.informative_cutoff", fmt(c.informative_cutoff)},
    };
    e.insert(e.end(), rest.begin(), rest.end());
    return e;
}

}  // namespace crossbeta
