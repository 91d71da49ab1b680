#pragma once

// Imbalance-aware losses on the two-logit output. The positive class (label 1)
// is beta; its probability is the softmax share of logit 1, i.e.
// sigmoid(z1 - z0). Gradients are returned with respect to both logits.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crossbeta/error.hpp"
#include "crossbeta/matrix.hpp"

namespace crossbeta {

enum class LossKind { wce, focal, dice, combo };

inline std::string_view to_string(LossKind k) {
    switch (k) {
        case LossKind::wce: return "wce";
        case LossKind::focal: return "focal";
        case LossKind::dice: return "dice";
        case LossKind::combo: return "combo";
    }
    return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
    if (s == "wce") return LossKind::wce;
    if (s == "focal") return LossKind::focal;
    if (s == "dice") return LossKind::dice;
    if (s == "combo") return LossKind::combo;
    throw ConfigError("unknown loss '" + std::string(s) + "' (expected wce, focal, dice or combo)");
}

struct LossConfig {
    LossKind kind = LossKind::combo;
    double gamma = 2.0;
    double dice_eps = 1e-4;
    std::array<double, 2> combo_weights{0.6, 0.4};  // focal, dice
    double alpha_beta = 1.0;
    double alpha_notbeta = 1.0;
    bool balance_classes = true;  // derive the alphas from training label counts

    void validate() const {
        if (std::abs(combo_weights[0] + combo_weights[1] - 1.0) > 1e-12) throw ConfigError("combo weights must sum to 1");
        if (gamma < 0.0) throw ConfigError("focal gamma must be non-negative");
        if (!(dice_eps > 0.0)) throw ConfigError("dice epsilon must be positive");
        if (!(alpha_beta > 0.0 && alpha_notbeta > 0.0)) throw ConfigError("class weights must be positive");
    }
};

struct ClassWeights {
    double beta, notbeta;
};

/// Inverse-frequency weights n / (2 n_class).
inline ClassWeights class_weights(std::size_t n_beta, std::size_t n_notbeta) {
    if (n_beta == 0 || n_notbeta == 0) throw DataError("class weights need both classes in the training split");
    const double n = static_cast<double>(n_beta + n_notbeta);
    return {n / (2.0 * static_cast<double>(n_beta)), n / (2.0 * static_cast<double>(n_notbeta))};
}

inline LossConfig with_class_weights(LossConfig cfg, std::span<const int> labels) {
    std::size_t pos = 0;
    for (int y : labels) pos += y == 1;
    const auto w = class_weights(pos, labels.size() - pos);
    cfg.alpha_beta = w.beta;
    cfg.alpha_notbeta = w.notbeta;
    return cfg;
}

namespace loss_detail {

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace loss_detail

/// Positive-class probability from a (B x 2) logit matrix.
inline Vector positive_probability(const RowMatrix& logits) {
    Vector p(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) p(i) = loss_detail::sigmoid(logits(i, 1) - logits(i, 0));
    return p;
}

/// Row-wise two-way softmax.
inline RowMatrix softmax(const RowMatrix& logits) {
    RowMatrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        double s = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) s += out(i, c) = std::exp(logits(i, c) - mx);
        out.row(i) /= s;
    }
    return out;
}

struct LossValue {
    double value = 0.0;
    RowMatrix grad;  // dL/dlogits, B x 2
};

namespace loss_detail {

// Each term returns the loss and fills dL/du where u = z1 - z0.

inline double wce(const LossConfig& cfg, std::span<const double> u, std::span<const int> y, std::span<double> du) {
    const double n = static_cast<double>(u.size());
    double total = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double p = sigmoid(u[i]);
        if (y[i] == 1) {
            total += cfg.alpha_beta * softplus(-u[i]);
            du[i] = -cfg.alpha_beta * (1.0 - p) / n;
        } else {
            total += cfg.alpha_notbeta * softplus(u[i]);
            du[i] = cfg.alpha_notbeta * p / n;
        }
    }
    return total / n;
}

inline double focal(const LossConfig& cfg, std::span<const double> u, std::span<const int> y, std::span<double> du) {
    const double n = static_cast<double>(u.size());
    const double g = cfg.gamma;
    double total = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double p = sigmoid(u[i]);
        const double q = 1.0 - p;
        if (y[i] == 1) {
            const double log_p = -softplus(-u[i]);
            total += -cfg.alpha_beta * std::pow(q, g) * log_p;
            // d/du [-(1-p)^g log p] = -(1-p)^(g+1) + g p (1-p)^g log p
            du[i] = cfg.alpha_beta * (-std::pow(q, g + 1.0) + g * p * std::pow(q, g) * log_p) / n;
        } else {
            const double log_q = -softplus(u[i]);
            total += -cfg.alpha_notbeta * std::pow(p, g) * log_q;
            // d/du [-p^g log(1-p)] = p^(g+1) - g p^g (1-p) log(1-p)
            du[i] = cfg.alpha_notbeta * (std::pow(p, g + 1.0) - g * std::pow(p, g) * q * log_q) / n;
        }
    }
    return total / n;
}

inline double dice(const LossConfig& cfg, std::span<const double> u, std::span<const int> y, std::span<double> du) {
    double inter = 0.0, sum_p = 0.0, sum_y = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double p = sigmoid(u[i]);
        inter += p * y[i];
        sum_p += p;
        sum_y += y[i];
    }
    const double num = 2.0 * inter + cfg.dice_eps;
    const double den = sum_p + sum_y + cfg.dice_eps;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double p = sigmoid(u[i]);
        const double dp = -(2.0 * y[i] * den - num) / (den * den);
        du[i] = dp * p * (1.0 - p);
    }
    return 1.0 - num / den;
}

}  // namespace loss_detail

/// Loss value and its gradient with respect to the logits.
inline LossValue loss_and_grad(const LossConfig& cfg, const RowMatrix& logits, std::span<const int> labels) {
    const auto B = static_cast<std::size_t>(logits.rows());
    if (B == 0) throw DataError("loss of an empty batch");
    if (labels.size() != B) throw DataError("loss: label count does not match batch size");
    if (logits.cols() != 2) throw DataError("loss expects two logits per sample");
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("loss labels must be 0 or 1");
    }
    std::vector<double> u(B), du(B, 0.0), tmp(B);
    for (std::size_t i = 0; i < B; ++i) u[i] = logits(static_cast<Eigen::Index>(i), 1) - logits(static_cast<Eigen::Index>(i), 0);

    double value = 0.0;
    switch (cfg.kind) {
        case LossKind::wce: value = loss_detail::wce(cfg, u, labels, du); break;
        case LossKind::focal: value = loss_detail::focal(cfg, u, labels, du); break;
        case LossKind::dice: value = loss_detail::dice(cfg, u, labels, du); break;
        case LossKind::combo: {
            const double f = loss_detail::focal(cfg, u, labels, du);
            for (auto& v : du) v *= cfg.combo_weights[0];
            const double d = loss_detail::dice(cfg, u, labels, tmp);
            for (std::size_t i = 0; i < B; ++i) du[i] += cfg.combo_weights[1] * tmp[i];
            value = cfg.combo_weights[0] * f + cfg.combo_weights[1] * d;
            break;
        }
    }
    LossValue out;
    out.value = value;
    out.grad.resize(static_cast<Eigen::Index>(B), 2);
    for (std::size_t i = 0; i < B; ++i) {
        out.grad(static_cast<Eigen::Index>(i), 0) = -du[i];
        out.grad(static_cast<Eigen::Index>(i), 1) = du[i];
    }
    return out;
}

inline double loss(const LossConfig& cfg, const RowMatrix& logits, std::span<const int> labels) {
    return loss_and_grad(cfg, logits, labels).value;
}

}  // namespace crossbeta
