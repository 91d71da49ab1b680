#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "crossbeta/profile.hpp"

namespace crossbeta {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Stacks the intensities of the given profiles as rows.
inline RowMatrix stack_rows(std::span<const Profile* const> profiles, std::size_t d) {
    RowMatrix X(static_cast<Eigen::Index>(profiles.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = profiles[i]->intensities[k];
    }
    return X;
}

/// Columns of X at the given indices, in the given order.
inline RowMatrix gather_columns(const RowMatrix& X, std::span<const std::size_t> cols) {
    RowMatrix out(X.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(cols[j]));
    return out;
}

}  // namespace crossbeta
