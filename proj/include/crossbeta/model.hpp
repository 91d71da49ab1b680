#pragma once

// A trained classifier: the feature indices it reads, the per-feature
// standardization fit on its training rows, and the network. Logits and input
// gradients are expressed in raw intensity coordinates.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "crossbeta/error.hpp"
#include "crossbeta/matrix.hpp"
#include "crossbeta/net.hpp"

namespace crossbeta {

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    /// Column means and standard deviations (n-1); constant columns get scale 1.
    static Standardizer fit(const RowMatrix& X) {
        if (X.rows() < 2) throw DataError("standardizer needs at least 2 rows");
        Standardizer s;
        const auto n = static_cast<double>(X.rows());
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double m = X.col(j).mean();
            const double var = (X.col(j).array() - m).square().sum() / (n - 1.0);
            s.mean.push_back(m);
            s.scale.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
        }
        return s;
    }

    static Standardizer identity(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

    std::size_t dim() const noexcept { return mean.size(); }

    RowMatrix apply(const RowMatrix& X) const {
        if (static_cast<std::size_t>(X.cols()) != dim()) throw DataError("standardizer width mismatch");
        RowMatrix out(X.rows(), X.cols());
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            out.col(j) = (X.col(j).array() - mean[static_cast<std::size_t>(j)]) / scale[static_cast<std::size_t>(j)];
        return out;
    }

    bool operator==(const Standardizer&) const = default;
};

struct Model {
    std::vector<std::size_t> features;  // grid indices read by the network, ascending
    Standardizer standardizer;
    CompactNet net;
    std::string manifest;  // JSON text describing how the model was trained

    std::size_t input_dim() const noexcept { return net.width(); }
    std::size_t num_logits() const noexcept { return crossbeta::num_logits; }

    RowMatrix logits(const RowMatrix& X) const { return crossbeta::logits(net, standardizer.apply(X)); }

    /// d logit / d raw input for every row of X.
    RowMatrix input_jacobian(const RowMatrix& X, std::size_t logit) const {
        RowMatrix J = crossbeta::input_jacobian(net, standardizer.apply(X), logit);
        for (Eigen::Index j = 0; j < J.cols(); ++j) J.col(j) /= standardizer.scale[static_cast<std::size_t>(j)];
        return J;
    }

    bool operator==(const Model&) const = default;
};

inline constexpr int model_format_version = 1;

inline void write_model(std::ostream& os, const Model& m) {
    os << "crossbeta-model " << model_format_version << '\n';
    os << std::setprecision(17);
    os << "m " << m.net.width() << '\n';
    os << "dropout_p " << m.net.dropout_p() << '\n';
    os << "leaky_slope " << m.net.leaky_slope() << '\n';
    auto write_list = [&](const char* key, const auto& v) {
        os << key << ' ' << v.size();
        for (const auto& x : v) os << ' ' << x;
        os << '\n';
    };
    write_list("features", m.features);
    write_list("mean", m.standardizer.mean);
    write_list("scale", m.standardizer.scale);
    const std::pair<const char*, std::span<const double>> tensors[] = {
        {"conv_w", m.net.conv_w()}, {"conv_b", m.net.conv_b()}, {"fc1_w", m.net.fc1_w()},
        {"fc1_b", m.net.fc1_b()},   {"fc2_w", m.net.fc2_w()},   {"fc2_b", m.net.fc2_b()},
    };
    for (const auto& [name, t] : tensors) write_list(name, t);
    std::string manifest = m.manifest;
    for (auto& ch : manifest) {
        if (ch == '\n') ch = ' ';
    }
    os << "manifest " << manifest << '\n';
}

namespace model_detail {

inline std::istringstream expect_line(std::istream& is, const std::string& key) {
    std::string line;
    if (!std::getline(is, line)) throw DataError("model file truncated before '" + key + "'");
    std::istringstream ls(line);
    std::string got;
    ls >> got;
    if (got != key) throw DataError("model file: expected '" + key + "', found '" + got + "'");
    return ls;
}

template <class T>
std::vector<T> read_list(std::istream& is, const std::string& key) {
    auto ls = expect_line(is, key);
    std::size_t n = 0;
    if (!(ls >> n)) throw DataError("model file: bad count for '" + key + "'");
    std::vector<T> out(n);
    for (auto& x : out) {
        std::string tok;
        if (!(ls >> tok)) throw DataError("model file: short list for '" + key + "'");
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
        if (ec != std::errc{} || ptr != tok.data() + tok.size()) throw DataError("model file: bad value in '" + key + "'");
    }
    return out;
}

inline double read_scalar(std::istream& is, const std::string& key) {
    auto ls = expect_line(is, key);
    double v = 0.0;
    if (!(ls >> v)) throw DataError("model file: bad value for '" + key + "'");
    return v;
}

}  // namespace model_detail

inline Model read_model(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "crossbeta-model") throw DataError("not a model file");
    if (version != model_format_version) throw DataError("unsupported model format version " + std::to_string(version));
    is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');

    const auto m = static_cast<std::size_t>(model_detail::read_scalar(is, "m"));
    const double p = model_detail::read_scalar(is, "dropout_p");
    const double slope = model_detail::read_scalar(is, "leaky_slope");
    Model model;
    model.net = CompactNet(m, p, slope);
    model.features = model_detail::read_list<std::size_t>(is, "features");
    model.standardizer.mean = model_detail::read_list<double>(is, "mean");
    model.standardizer.scale = model_detail::read_list<double>(is, "scale");
    if (model.features.size() != m || model.standardizer.dim() != m || model.standardizer.scale.size() != m)
        throw DataError("model file: feature list width does not match m");
    const std::pair<const char*, std::span<double>> tensors[] = {
        {"conv_w", model.net.conv_w()}, {"conv_b", model.net.conv_b()}, {"fc1_w", model.net.fc1_w()},
        {"fc1_b", model.net.fc1_b()},   {"fc2_w", model.net.fc2_w()},   {"fc2_b", model.net.fc2_b()},
    };
    for (const auto& [name, t] : tensors) {
        const auto v = model_detail::read_list<double>(is, name);
        if (v.size() != t.size()) throw DataError(std::string("model file: tensor '") + name + "' has the wrong size");
        std::copy(v.begin(), v.end(), t.begin());
    }
    std::string line;
    if (std::getline(is, line) && line.rfind("manifest ", 0) == 0) model.manifest = line.substr(9);
    return model;
}

inline void save_model(const Model& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write model file " + path);
    write_model(os, m);
}

inline Model load_model(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open model file " + path);
    return read_model(is);
}

}  // namespace crossbeta
