#pragma once

// Compact 1D convolutional classifier:
//
//   input (B, m) -> conv k=3, 1->4 channels, no padding -> LeakyReLU
//   -> flatten 4(m-2) -> linear 4 -> LeakyReLU -> dropout -> linear 2
//
// Parameters live in one flat vector in the order conv_w, conv_b, fc1_w,
// fc1_b, fc2_w, fc2_b, which is also the order of gradients and of the model
// file. Gradients are derived by hand in backward().

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crossbeta/error.hpp"
#include "crossbeta/matrix.hpp"
#include "crossbeta/rng.hpp"

namespace crossbeta {

inline constexpr std::size_t conv_channels = 4;
inline constexpr std::size_t conv_kernel = 3;
inline constexpr std::size_t hidden_width = 4;
inline constexpr std::size_t num_logits = 2;

/// Trainable parameter count for input width m: 16 m - 2.
inline std::size_t parameter_count(std::size_t m) {
    if (m < conv_kernel) throw ConfigError("network input width must be at least 3, got " + std::to_string(m));
    return 16 * m - 2;
}

struct ParamLayout {
    std::size_t conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b, total;

    explicit ParamLayout(std::size_t m) {
        const std::size_t flat = conv_channels * (m - 2);
        conv_w = 0;
        conv_b = conv_w + conv_channels * conv_kernel;
        fc1_w = conv_b + conv_channels;
        fc1_b = fc1_w + hidden_width * flat;
        fc2_w = fc1_b + hidden_width;
        fc2_b = fc2_w + num_logits * hidden_width;
        total = fc2_b + num_logits;
    }
};

class CompactNet {
public:
    CompactNet() = default;

    explicit CompactNet(std::size_t m, double dropout_p = 0.3, double leaky_slope = 0.01)
        : m_(m), dropout_p_(dropout_p), leaky_slope_(leaky_slope) {
        if (m < conv_kernel) throw ConfigError("network input width must be at least 3, got " + std::to_string(m));
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
        params_.assign(ParamLayout(m).total, 0.0);
    }

    /// Fan-in uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
    static CompactNet initialized(std::size_t m, std::uint64_t seed, double dropout_p = 0.3, double leaky_slope = 0.01) {
        CompactNet net(m, dropout_p, leaky_slope);
        Rng rng(seed);
        auto fill = [&](std::span<double> w, double fan_in) {
            const double bound = 1.0 / std::sqrt(fan_in);
            for (auto& x : w) x = rng.uniform(-bound, bound);
        };
        fill(net.conv_w(), static_cast<double>(conv_kernel));
        fill(net.fc1_w(), static_cast<double>(net.flat_width()));
        fill(net.fc2_w(), static_cast<double>(hidden_width));
        return net;
    }

    std::size_t width() const noexcept { return m_; }
    std::size_t conv_out() const noexcept { return m_ - 2; }
    std::size_t flat_width() const noexcept { return conv_channels * (m_ - 2); }
    double dropout_p() const noexcept { return dropout_p_; }
    double leaky_slope() const noexcept { return leaky_slope_; }
    std::size_t size() const noexcept { return params_.size(); }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    std::span<double> conv_w() { return slice(layout().conv_w, conv_channels * conv_kernel); }
    std::span<double> conv_b() { return slice(layout().conv_b, conv_channels); }
    std::span<double> fc1_w() { return slice(layout().fc1_w, hidden_width * flat_width()); }
    std::span<double> fc1_b() { return slice(layout().fc1_b, hidden_width); }
    std::span<double> fc2_w() { return slice(layout().fc2_w, num_logits * hidden_width); }
    std::span<double> fc2_b() { return slice(layout().fc2_b, num_logits); }
    std::span<const double> conv_w() const { return cslice(layout().conv_w, conv_channels * conv_kernel); }
    std::span<const double> conv_b() const { return cslice(layout().conv_b, conv_channels); }
    std::span<const double> fc1_w() const { return cslice(layout().fc1_w, hidden_width * flat_width()); }
    std::span<const double> fc1_b() const { return cslice(layout().fc1_b, hidden_width); }
    std::span<const double> fc2_w() const { return cslice(layout().fc2_w, num_logits * hidden_width); }
    std::span<const double> fc2_b() const { return cslice(layout().fc2_b, num_logits); }

    /// Sum of the declared tensor sizes.
    std::size_t enumerated_size() const {
        return conv_w().size() + conv_b().size() + fc1_w().size() + fc1_b().size() + fc2_w().size() + fc2_b().size();
    }

    ParamLayout layout() const { return ParamLayout(m_); }

    bool operator==(const CompactNet&) const = default;

private:
    std::span<double> slice(std::size_t off, std::size_t n) { return {params_.data() + off, n}; }
    std::span<const double> cslice(std::size_t off, std::size_t n) const { return {params_.data() + off, n}; }

    std::size_t m_ = 3;
    double dropout_p_ = 0.3;
    double leaky_slope_ = 0.01;
    std::vector<double> params_;
};

/// Intermediates of one forward pass, kept for backward().
struct ForwardCache {
    RowMatrix input;      // B x m
    RowMatrix conv_pre;   // B x 4(m-2), channel-major flatten
    RowMatrix conv_act;   // B x 4(m-2)
    RowMatrix hidden_pre; // B x 4
    RowMatrix mask;       // B x 4, dropout multipliers (all ones at inference)
    RowMatrix hidden_out; // B x 4, after activation and dropout
    RowMatrix logits;     // B x 2
};

enum class Mode { inference, training };

namespace net_detail {

inline double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double leaky_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

inline RowMatrix weight_matrix(std::span<const double> w, std::size_t rows, std::size_t cols) {
    return Eigen::Map<const RowMatrix>(w.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace net_detail

/// Dropout multipliers for a batch: 0 with probability p, else 1/(1-p).
inline RowMatrix sample_dropout_mask(std::size_t batch, double p, Rng& rng) {
    RowMatrix mask(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(hidden_width));
    const double keep_scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep_scale;
    return mask;
}

/// Forward pass with an explicit dropout mask (ones for inference).
inline ForwardCache forward_with_mask(const CompactNet& net, const RowMatrix& X, const RowMatrix& mask) {
    const std::size_t m = net.width();
    if (static_cast<std::size_t>(X.cols()) != m)
        throw DataError("network expects input width " + std::to_string(m) + ", got " + std::to_string(X.cols()));
    const Eigen::Index B = X.rows();
    const std::size_t w = net.conv_out();
    const double slope = net.leaky_slope();
    const auto cw = net.conv_w();
    const auto cb = net.conv_b();

    ForwardCache c;
    c.input = X;
    c.conv_pre.resize(B, static_cast<Eigen::Index>(net.flat_width()));
    for (Eigen::Index b = 0; b < B; ++b) {
        const double* x = X.data() + b * X.cols();
        double* out = c.conv_pre.data() + b * c.conv_pre.cols();
        for (std::size_t ch = 0; ch < conv_channels; ++ch) {
            const double w0 = cw[ch * 3], w1 = cw[ch * 3 + 1], w2 = cw[ch * 3 + 2], bias = cb[ch];
            double* o = out + ch * w;
            for (std::size_t t = 0; t < w; ++t) o[t] = w0 * x[t] + w1 * x[t + 1] + w2 * x[t + 2] + bias;
        }
    }
    c.conv_act = c.conv_pre.unaryExpr([slope](double v) { return net_detail::leaky(v, slope); });

    const RowMatrix W1 = net_detail::weight_matrix(net.fc1_w(), hidden_width, net.flat_width());
    const Eigen::Map<const Eigen::RowVectorXd> b1(net.fc1_b().data(), static_cast<Eigen::Index>(hidden_width));
    c.hidden_pre = (c.conv_act * W1.transpose()).rowwise() + b1;
    c.mask = mask;
    c.hidden_out = c.hidden_pre.unaryExpr([slope](double v) { return net_detail::leaky(v, slope); }).cwiseProduct(mask);

    const RowMatrix W2 = net_detail::weight_matrix(net.fc2_w(), num_logits, hidden_width);
    const Eigen::Map<const Eigen::RowVectorXd> b2(net.fc2_b().data(), static_cast<Eigen::Index>(num_logits));
    c.logits = (c.hidden_out * W2.transpose()).rowwise() + b2;
    return c;
}

/// Forward pass; dropout is drawn from rng only in training mode.
inline ForwardCache forward(const CompactNet& net, const RowMatrix& X, Mode mode, Rng* rng = nullptr) {
    RowMatrix mask;
    if (mode == Mode::training && net.dropout_p() > 0.0) {
        if (!rng) throw ConfigError("training-mode forward needs a random generator for dropout");
        mask = sample_dropout_mask(static_cast<std::size_t>(X.rows()), net.dropout_p(), *rng);
    } else {
        mask = RowMatrix::Ones(X.rows(), static_cast<Eigen::Index>(hidden_width));
    }
    return forward_with_mask(net, X, mask);
}

/// Inference logits (B x 2).
inline RowMatrix logits(const CompactNet& net, const RowMatrix& X) { return forward(net, X, Mode::inference).logits; }

struct Gradients {
    std::vector<double> params;  // same layout as CompactNet::params()
    RowMatrix input;             // B x m, filled when requested
};

/// Back-propagates dL/dlogits (B x 2) through the cached pass.
inline Gradients backward(const CompactNet& net, const ForwardCache& c, const RowMatrix& dlogits, bool want_input = false) {
    const std::size_t m = net.width();
    const std::size_t w = net.conv_out();
    const std::size_t flat = net.flat_width();
    const double slope = net.leaky_slope();
    const Eigen::Index B = c.input.rows();
    const ParamLayout L = net.layout();

    Gradients g;
    g.params.assign(L.total, 0.0);
    auto view = [&](std::size_t off, std::size_t rows, std::size_t cols) {
        return Eigen::Map<RowMatrix>(g.params.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    };

    // fc2
    view(L.fc2_w, num_logits, hidden_width) = dlogits.transpose() * c.hidden_out;
    view(L.fc2_b, 1, num_logits) = dlogits.colwise().sum();
    const RowMatrix W2 = net_detail::weight_matrix(net.fc2_w(), num_logits, hidden_width);
    RowMatrix d_hidden = (dlogits * W2).cwiseProduct(c.mask);
    for (Eigen::Index i = 0; i < d_hidden.size(); ++i) d_hidden.data()[i] *= net_detail::leaky_grad(c.hidden_pre.data()[i], slope);

    // fc1
    view(L.fc1_w, hidden_width, flat) = d_hidden.transpose() * c.conv_act;
    view(L.fc1_b, 1, hidden_width) = d_hidden.colwise().sum();
    const RowMatrix W1 = net_detail::weight_matrix(net.fc1_w(), hidden_width, flat);
    RowMatrix d_conv = d_hidden * W1;
    for (Eigen::Index i = 0; i < d_conv.size(); ++i) d_conv.data()[i] *= net_detail::leaky_grad(c.conv_pre.data()[i], slope);

    // conv
    const auto cw = net.conv_w();
    double* gw = g.params.data() + L.conv_w;
    double* gb = g.params.data() + L.conv_b;
    if (want_input) g.input = RowMatrix::Zero(B, static_cast<Eigen::Index>(m));
    for (Eigen::Index b = 0; b < B; ++b) {
        const double* x = c.input.data() + b * c.input.cols();
        const double* dp = d_conv.data() + b * d_conv.cols();
        double* dx = want_input ? g.input.data() + b * g.input.cols() : nullptr;
        for (std::size_t ch = 0; ch < conv_channels; ++ch) {
            const double* d = dp + ch * w;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, sb = 0.0;
            for (std::size_t t = 0; t < w; ++t) {
                s0 += d[t] * x[t];
                s1 += d[t] * x[t + 1];
                s2 += d[t] * x[t + 2];
                sb += d[t];
            }
            gw[ch * 3] += s0;
            gw[ch * 3 + 1] += s1;
            gw[ch * 3 + 2] += s2;
            gb[ch] += sb;
            if (dx) {
                const double w0 = cw[ch * 3], w1 = cw[ch * 3 + 1], w2 = cw[ch * 3 + 2];
                for (std::size_t t = 0; t < w; ++t) {
                    dx[t] += d[t] * w0;
                    dx[t + 1] += d[t] * w1;
                    dx[t + 2] += d[t] * w2;
                }
            }
        }
    }
    return g;
}

/// Rows of d logit_c / d input at each row of X (inference mode).
inline RowMatrix input_jacobian(const CompactNet& net, const RowMatrix& X, std::size_t logit) {
    if (logit >= num_logits) throw DataError("logit index out of range");
    const auto cache = forward(net, X, Mode::inference);
    RowMatrix seed = RowMatrix::Zero(X.rows(), static_cast<Eigen::Index>(num_logits));
    seed.col(static_cast<Eigen::Index>(logit)).setOnes();
    return backward(net, cache, seed, true).input;
}

}  // namespace crossbeta
