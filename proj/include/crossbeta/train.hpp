#pragma once

// Training protocol for the compact classifier: Adam with decoupled weight
// decay, cosine-annealed learning rate, early stopping on validation weighted
// F1 with best-weight restore, and k-fold cross-validation with per-fold
// feature pruning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "crossbeta/error.hpp"
#include "crossbeta/loss.hpp"
#include "crossbeta/matrix.hpp"
#include "crossbeta/metrics.hpp"
#include "crossbeta/model.hpp"
#include "crossbeta/net.hpp"
#include "crossbeta/profile.hpp"
#include "crossbeta/prune.hpp"
#include "crossbeta/rng.hpp"

namespace crossbeta {

struct TrainConfig {
    double lr = 0.005;
    double lr_min = 0.0;
    double weight_decay = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int max_epochs = 10000;
    int patience = 500;
    double improve_tol = 1e-4;
    int folds = 5;
    std::size_t batch_size = 0;  // 0 = full batch
    double dropout_p = 0.3;
    double leaky_slope = 0.01;
    std::uint64_t seed = 11;

    void validate() const {
        if (!(lr > 0.0) || lr_min < 0.0 || lr_min > lr) throw ConfigError("train: need 0 <= lr_min <= lr and lr > 0");
        if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
        if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("train: Adam betas must lie in (0, 1)");
        if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
        if (max_epochs < 1) throw ConfigError("train: max_epochs must be at least 1");
        if (patience < 0) throw ConfigError("train: patience must be non-negative");
        if (improve_tol < 0.0) throw ConfigError("train: improve_tol must be non-negative");
        if (folds < 2) throw ConfigError("train: folds must be at least 2");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("train: dropout_p must lie in [0, 1)");
    }
};

/// Cosine annealing from lr to lr_min over max_epochs, no restarts.
inline double cosine_lr(const TrainConfig& cfg, int epoch) {
    const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs);
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

/// Adam with weight decay applied directly to the parameters.
class AdamW {
public:
    AdamW(std::size_t n, const TrainConfig& cfg) : m_(n, 0.0), v_(n, 0.0), cfg_(cfg) {}

    void step(std::span<double> params, std::span<const double> grad, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            const double mhat = m_[i] / c1;
            const double vhat = v_[i] / c2;
            params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.adam_eps) + cfg_.weight_decay * params[i]);
        }
    }

    long steps() const noexcept { return t_; }

private:
    std::vector<double> m_, v_;
    TrainConfig cfg_;
    long t_ = 0;
};

/// Stops once `patience` consecutive epochs (at least one) fail to beat the
/// best value by more than tol.
class EarlyStopping {
public:
    EarlyStopping(int patience, double tol) : patience_(patience), tol_(tol) {}

    /// Records the epoch's metric; returns true when training should stop.
    bool update(int epoch, double metric) {
        if (metric > best_ + tol_ || best_epoch_ < 0) {
            best_ = metric;
            best_epoch_ = epoch;
            counter_ = 0;
            improved_ = true;
            return false;
        }
        improved_ = false;
        ++counter_;
        return counter_ >= std::max(patience_, 1);
    }

    bool improved() const noexcept { return improved_; }
    double best() const noexcept { return best_; }
    int best_epoch() const noexcept { return best_epoch_; }

private:
    int patience_;
    double tol_;
    double best_ = -std::numeric_limits<double>::infinity();
    int best_epoch_ = -1;
    int counter_ = 0;
    bool improved_ = false;
};

/// Raw (unstandardized) feature rows with 0/1 labels, 1 = beta.
struct LabeledMatrix {
    RowMatrix X;
    std::vector<int> y;

    std::size_t size() const noexcept { return y.size(); }
};

inline int label_of(const Profile& p) {
    if (!p.tier2) throw DataError("profile '" + p.id + "' has no beta label");
    return *p.tier2 == Tier2::beta ? 1 : 0;
}

inline LabeledMatrix labeled_rows(std::span<const Profile* const> profiles, std::span<const std::size_t> features) {
    LabeledMatrix out;
    out.X.resize(static_cast<Eigen::Index>(profiles.size()), static_cast<Eigen::Index>(features.size()));
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto row = project(*profiles[i], features);
        for (std::size_t j = 0; j < row.size(); ++j) out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
        out.y.push_back(label_of(*profiles[i]));
    }
    return out;
}

/// Labeled tissue profiles of one split.
inline std::vector<const Profile*> split_profiles(const Dataset& ds, Split s) {
    std::vector<const Profile*> out;
    for (const auto& p : ds.profiles()) {
        if (p.tier1 == Tier1::tissue && p.tier2 && ds.split_of(p) == s) out.push_back(&p);
    }
    return out;
}

inline Vector scores(const Model& model, const RowMatrix& X) { return positive_probability(model.logits(X)); }

inline MetricReport evaluate_model(const Model& model, const LabeledMatrix& data) {
    const Vector s = scores(model, data.X);
    return evaluate_metrics(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), data.y);
}

struct HistoryRow {
    int epoch;
    double lr;
    double train_loss;
    double val_f1;
};

struct TrainResult {
    Model model;  // best-validation weights
    std::vector<HistoryRow> history;
    int best_epoch = -1;
    double best_val_f1 = 0.0;
    int epochs_run = 0;
};

/// Trains one network on train, selecting weights by validation weighted F1.
/// Class weights come from the training labels unless balancing is off.
inline TrainResult fit_network(const LabeledMatrix& train, const LabeledMatrix& val, std::vector<std::size_t> features,
                               LossConfig loss_cfg, const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (train.size() < 2 || val.size() < 1) throw DataError("training needs at least 2 training and 1 validation rows");
    const std::size_t m = static_cast<std::size_t>(train.X.cols());
    if (features.size() != m) throw DataError("feature index list does not match the training width");
    if (loss_cfg.balance_classes) loss_cfg = with_class_weights(loss_cfg, train.y);
    loss_cfg.validate();

    TrainResult out;
    out.model.features = std::move(features);
    out.model.standardizer = Standardizer::fit(train.X);
    out.model.net = CompactNet::initialized(m, derive_seed(seed, "init"), cfg.dropout_p, cfg.leaky_slope);
    const RowMatrix Xtr = out.model.standardizer.apply(train.X);
    const RowMatrix Xval = out.model.standardizer.apply(val.X);

    CompactNet& net = out.model.net;
    CompactNet best_net = net;
    AdamW opt(net.size(), cfg);
    EarlyStopping stopper(cfg.patience, cfg.improve_tol);
    Rng rng(derive_seed(seed, "dropout"));

    const std::size_t n = train.size();
    const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = cosine_lr(cfg, epoch);
        if (batch < n) shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            RowMatrix Xb;
            std::vector<int> yb;
            if (len == n) {
                Xb = Xtr;
                yb = train.y;
            } else {
                Xb.resize(static_cast<Eigen::Index>(len), Xtr.cols());
                for (std::size_t i = 0; i < len; ++i) {
                    Xb.row(static_cast<Eigen::Index>(i)) = Xtr.row(static_cast<Eigen::Index>(order[start + i]));
                    yb.push_back(train.y[order[start + i]]);
                }
            }
            const auto cache = forward(net, Xb, Mode::training, &rng);
            const auto lv = loss_and_grad(loss_cfg, cache.logits, yb);
            if (!std::isfinite(lv.value)) throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            const auto g = backward(net, cache, lv.grad);
            opt.step(net.params(), g.params, lr);
            epoch_loss += lv.value * static_cast<double>(len) / static_cast<double>(n);
        }
        const Vector s = positive_probability(logits(net, Xval));
        const auto report = evaluate_metrics(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), val.y);
        out.history.push_back({epoch, lr, epoch_loss, report.f1_weighted});
        out.epochs_run = epoch + 1;
        const bool stop = stopper.update(epoch, report.f1_weighted);
        if (stopper.improved()) best_net = net;
        if (stop) break;
    }
    net = best_net;
    out.best_epoch = stopper.best_epoch();
    out.best_val_f1 = stopper.best();
    return out;
}

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation; 0 for a single value
    std::size_t n = 0;
};

inline MeanSd mean_sd(std::span<const double> v) {
    MeanSd out;
    std::vector<double> finite;
    for (double x : v) {
        if (std::isfinite(x)) finite.push_back(x);
    }
    out.n = finite.size();
    if (finite.empty()) {
        out.mean = out.sd = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
    if (finite.size() > 1) {
        double ss = 0.0;
        for (double x : finite) ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(finite.size() - 1));
    }
    return out;
}

struct FoldRecord {
    int fold = 0;
    std::vector<std::size_t> retained;
    std::size_t m = 0;
    int best_epoch = -1;
    int epochs_run = 0;
    double val_f1 = 0.0;  // best-epoch validation weighted F1
    MetricReport test;
};

struct CvResult {
    std::vector<FoldRecord> folds;
    MeanSd val_f1, test_f1, auroc, auprc, m;
    std::vector<std::vector<HistoryRow>> histories;
};

/// Fold membership over the pooled train+val profiles: sorted by id,
/// shuffled with the fold seed, cut into `folds` contiguous chunks.
inline std::vector<std::vector<const Profile*>> make_folds(const Dataset& ds, int folds, std::uint64_t seed) {
    std::vector<const Profile*> pool = split_profiles(ds, Split::train);
    const auto val = split_profiles(ds, Split::val);
    pool.insert(pool.end(), val.begin(), val.end());
    if (pool.size() < static_cast<std::size_t>(folds))
        throw DataError("cross-validation: " + std::to_string(pool.size()) + " pooled profiles for " + std::to_string(folds) + " folds");
    std::sort(pool.begin(), pool.end(), [](const Profile* a, const Profile* b) { return a->id < b->id; });
    Rng rng(derive_seed(seed, "folds"));
    shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::vector<const Profile*>> out(static_cast<std::size_t>(folds));
    const std::size_t k = out.size();
    const std::size_t base = pool.size() / k, extra = pool.size() % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        out[f].assign(pool.begin() + static_cast<std::ptrdiff_t>(pos), pool.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    return out;
}

/// Prunes on the rows of one fold's training partition.
inline PruneResult prune_rows(std::span<const Profile* const> rows, std::size_t d, const PruneConfig& cfg) {
    std::vector<const Profile*> beta, notbeta;
    for (const Profile* p : rows) {
        if (!p->tier2) continue;
        (*p->tier2 == Tier2::beta ? beta : notbeta).push_back(p);
    }
    if (beta.empty() || notbeta.empty()) throw DataError("prune: both classes must be present in the training partition");
    return prune_matrices(abs_correlation(stack_rows(beta, d), Tier2::beta), abs_correlation(stack_rows(notbeta, d), Tier2::not_beta), cfg);
}

/// k-fold cross-validation over train+val with the test split held out.
/// Each fold prunes on its own training partition, so its width may differ.
inline CvResult cross_validate(const Dataset& ds, const PruneConfig& prune_cfg, const LossConfig& loss_cfg, const TrainConfig& cfg) {
    cfg.validate();
    if (!ds.split()) throw DataError("cross-validation needs a split assignment");
    const auto folds = make_folds(ds, cfg.folds, cfg.seed);
    const auto test_rows = split_profiles(ds, Split::test);
    if (test_rows.empty()) throw DataError("cross-validation needs a non-empty test split");

    CvResult out;
    std::vector<double> val_f1, test_f1, auroc_v, auprc_v, widths;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<const Profile*> train;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
        }
        const auto pruned = prune_rows(train, ds.dim(), prune_cfg);
        const auto& features = pruned.retained_union;
        if (features.size() < conv_kernel)
            throw DataError("fold " + std::to_string(f) + " retains " + std::to_string(features.size()) + " features, the network needs at least 3");

        const auto tr = labeled_rows(train, features);
        const auto va = labeled_rows(folds[f], features);
        const auto te = labeled_rows(test_rows, features);
        auto result = fit_network(tr, va, features, loss_cfg, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(f + 1)));

        FoldRecord rec;
        rec.fold = static_cast<int>(f);
        rec.retained = features;
        rec.m = features.size();
        rec.best_epoch = result.best_epoch;
        rec.epochs_run = result.epochs_run;
        rec.val_f1 = result.best_val_f1;
        rec.test = evaluate_model(result.model, te);
        val_f1.push_back(rec.val_f1);
        test_f1.push_back(rec.test.f1_weighted);
        auroc_v.push_back(rec.test.auroc.value_or(std::numeric_limits<double>::quiet_NaN()));
        auprc_v.push_back(rec.test.auprc.value_or(std::numeric_limits<double>::quiet_NaN()));
        widths.push_back(static_cast<double>(rec.m));
        out.folds.push_back(std::move(rec));
        out.histories.push_back(std::move(result.history));
    }
    out.val_f1 = mean_sd(val_f1);
    out.test_f1 = mean_sd(test_f1);
    out.auroc = mean_sd(auroc_v);
    out.auprc = mean_sd(auprc_v);
    out.m = mean_sd(widths);
    return out;
}

}  // namespace crossbeta
