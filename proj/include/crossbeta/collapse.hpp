#pragma once

// Training on features that carry no class signal: the classifier can do no
// better than predicting the majority class, so its test error should sit at
// 1 - max class prior. Training on the informative features is the control.

#include <algorithm>
#include <span>
#include <vector>

#include "crossbeta/bounds.hpp"
#include "crossbeta/train.hpp"

namespace crossbeta {

inline double bayes_floor(std::span<const double> priors) {
    if (priors.empty()) throw DataError("bayes_floor: no class priors");
    return 1.0 - *std::max_element(priors.begin(), priors.end());
}

struct CollapseArm {
    std::vector<std::size_t> features;
    double test_error = 0.0;
    int best_epoch = -1;
};

struct CollapseReport {
    CollapseArm uninformative;
    CollapseArm informative;
    double prior_beta = 0.0;
    double prior_notbeta = 0.0;
    double bayes_floor = 0.0;
    std::size_t n_test = 0;
};

namespace collapse_detail {

inline CollapseArm run_arm(const Dataset& ds, std::vector<std::size_t> features, const LossConfig& loss, const TrainConfig& cfg,
                           std::uint64_t seed) {
    if (features.size() < conv_kernel) throw DataError("collapse: an arm needs at least 3 features");
    const auto tr = labeled_rows(split_profiles(ds, Split::train), features);
    const auto va = labeled_rows(split_profiles(ds, Split::val), features);
    const auto te = labeled_rows(split_profiles(ds, Split::test), features);
    if (te.size() == 0) throw DataError("collapse: empty test split");
    auto result = fit_network(tr, va, features, loss, cfg, seed);
    const auto rep = evaluate_model(result.model, te);
    const std::size_t correct = rep.counts[0].tp + rep.counts[1].tp;
    CollapseArm arm;
    arm.features = std::move(features);
    arm.test_error = 1.0 - static_cast<double>(correct) / static_cast<double>(te.size());
    arm.best_epoch = result.best_epoch;
    return arm;
}

}  // namespace collapse_detail

/// Trains once on the complement of informative_idx and once on
/// informative_idx, reporting test error against the majority-class floor.
/// Class priors are taken over all labeled tissue profiles.
inline CollapseReport collapse_experiment(const Dataset& ds, std::span<const std::size_t> informative_idx, const LossConfig& loss,
                                          const TrainConfig& cfg) {
    if (!ds.split()) throw DataError("collapse: dataset needs a split assignment");
    std::vector<std::size_t> informative(informative_idx.begin(), informative_idx.end());
    std::sort(informative.begin(), informative.end());
    informative.erase(std::unique(informative.begin(), informative.end()), informative.end());
    CollapseReport out;
    std::size_t n_beta = 0, n_notbeta = 0;
    for (const auto& p : ds.profiles()) {
        if (p.tier1 != Tier1::tissue || !p.tier2) continue;
        (*p.tier2 == Tier2::beta ? n_beta : n_notbeta) += 1;
    }
    const double n = static_cast<double>(n_beta + n_notbeta);
    if (n_beta == 0 || n_notbeta == 0) throw DataError("collapse: both classes are required");
    out.prior_beta = static_cast<double>(n_beta) / n;
    out.prior_notbeta = static_cast<double>(n_notbeta) / n;
    const double priors[] = {out.prior_beta, out.prior_notbeta};
    out.bayes_floor = bayes_floor(priors);
    out.n_test = split_profiles(ds, Split::test).size();
    out.uninformative = collapse_detail::run_arm(ds, complement(informative, ds.dim()), loss, cfg, derive_seed(cfg.seed, "collapse/uninformative"));
    out.informative = collapse_detail::run_arm(ds, informative, loss, cfg, derive_seed(cfg.seed, "collapse/informative"));
    return out;
}

}  // namespace crossbeta
