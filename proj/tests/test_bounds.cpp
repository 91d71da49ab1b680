#include <gtest/gtest.h>

#include "crossbeta/bounds.hpp"

using namespace crossbeta;

namespace {

// f_c(x) = w_c . x + c
struct Affine {
    RowMatrix W;  // C x d

    std::size_t num_logits() const { return static_cast<std::size_t>(W.rows()); }
    std::size_t input_dim() const { return static_cast<std::size_t>(W.cols()); }
    RowMatrix logits(const RowMatrix& X) const {
        RowMatrix out = X * W.transpose();
        for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c).array() += static_cast<double>(c);
        return out;
    }
    RowMatrix input_jacobian(const RowMatrix& X, std::size_t c) const {
        return W.row(static_cast<Eigen::Index>(c)).replicate(X.rows(), 1);
    }
};

// Single logit f(x) = x_k^2.
struct Square {
    std::size_t d, k;

    std::size_t num_logits() const { return 1; }
    std::size_t input_dim() const { return d; }
    RowMatrix logits(const RowMatrix& X) const { return X.col(static_cast<Eigen::Index>(k)).array().square().matrix(); }
    RowMatrix input_jacobian(const RowMatrix& X, std::size_t) const {
        RowMatrix J = RowMatrix::Zero(X.rows(), X.cols());
        J.col(static_cast<Eigen::Index>(k)) = 2.0 * X.col(static_cast<Eigen::Index>(k));
        return J;
    }
};

static_assert(DifferentiableClassifier<Affine>);
static_assert(DifferentiableClassifier<Square>);

RowMatrix gaussian(Rng& rng, Eigen::Index n, Eigen::Index d) {
    RowMatrix X(n, d);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    return X;
}

// Column 1 depends linearly on column 0 plus N(0, sd^2) noise.
RowMatrix linked_pair(Rng& rng, Eigen::Index n, double sd) {
    RowMatrix X(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = 0.5 * X(i, 0) + 1.0 + sd * rng.normal();
    }
    return X;
}

}  // namespace

TEST(JitteredCholesky, CasesAndFailure) {
    Matrix S(2, 2);
    S << 4, 2, 2, 3;
    double used = -1.0;
    const Matrix L = jittered_cholesky(S, 1e-12, 1e-4, &used);
    EXPECT_EQ(used, 0.0);
    EXPECT_LT((L * L.transpose() - S).norm(), 1e-14);

    Vector v(3);
    v << 1, 2, 3;
    const Matrix R = v * v.transpose();
    const Matrix Lr = jittered_cholesky(R, 1e-12, 1e-4, &used);
    EXPECT_GT(used, 0.0);
    EXPECT_LT((Lr * Lr.transpose() - R - used * Matrix::Identity(3, 3)).norm(), 1e-9);

    EXPECT_TRUE(jittered_cholesky(Matrix::Zero(3, 3), 1e-12, 1e-4, &used).isZero(0.0));
    EXPECT_EQ(used, 0.0);
    EXPECT_THROW(jittered_cholesky(-Matrix::Identity(2, 2), 1e-12, 1e-4), NumericError);
}

TEST(FitAnchor, RecoversExactLinearMap) {
    Rng rng(1);
    const auto Z = gaussian(rng, 50, 3);
    Matrix A(2, 3);
    A << 1, -2, 0.5, 0, 3, 1;
    Vector b(2);
    b << 0.25, -1;
    const RowMatrix U = (Z * A.transpose()).rowwise() + b.transpose();
    const auto m = fit_anchor(Z, U);
    EXPECT_LT((m.A - A).norm(), 1e-10);
    EXPECT_LT((m.b - b).norm(), 1e-10);
    EXPECT_LT(m.residuals.norm(), 1e-10);
}

TEST(FitAnchor, RankDeficientDesignStillFits) {
    Rng rng(2);
    RowMatrix Z = gaussian(rng, 40, 3);
    Z.col(2) = Z.col(0);
    RowMatrix U(40, 1);
    U.col(0) = 2.0 * Z.col(0) - Z.col(1) + Vector::Constant(40, 0.5);
    const auto m = fit_anchor(Z, U);
    EXPECT_LT((m.anchor - U).norm(), 1e-10);
    EXPECT_LT(std::abs(m.A(0, 0) - m.A(0, 2)), 1e-10);  // minimum-norm split of the duplicated column
}

TEST(FitAnchor, ResidualsOrthogonalToDesign) {
    Rng rng(3);
    const auto Z = gaussian(rng, 80, 4);
    const auto U = gaussian(rng, 80, 3);
    const auto m = fit_anchor(Z, U);
    EXPECT_LT((Z.transpose() * m.residuals).norm(), 1e-10);
    EXPECT_LT(m.residuals.colwise().sum().norm(), 1e-10);
    EXPECT_LT((m.sigma_minus - m.residuals.transpose() * m.residuals / 79.0).norm(), 1e-14);
    EXPECT_THROW(fit_anchor(Z.topRows(5), U.topRows(5)), DataError);
    EXPECT_THROW(fit_anchor(Z, U.topRows(10)), DataError);
}

TEST(SignalTerm, DoubleSumAndSpecialCases) {
    Rng rng(4);
    const Matrix B = gaussian(rng, 3, 3);
    const Matrix S = B * B.transpose();
    std::vector<RowMatrix> grads{gaussian(rng, 5, 3), gaussian(rng, 5, 3)};
    double expect = 0.0;
    for (const auto& G : grads)
        for (Eigen::Index i = 0; i < 5; ++i)
            for (Eigen::Index a = 0; a < 3; ++a)
                for (Eigen::Index b = 0; b < 3; ++b) expect += G(i, a) * S(a, b) * G(i, b) / 5.0;
    EXPECT_NEAR(signal_term(grads, S), expect, 1e-12);

    Matrix D = Matrix::Zero(2, 2);
    D(0, 0) = 1.0;
    D(1, 1) = 2.0;
    RowMatrix e1(1, 2);
    e1 << 1, 0;
    const std::vector<RowMatrix> one{e1};
    EXPECT_DOUBLE_EQ(signal_term(one, D), 1.0);
    EXPECT_EQ(signal_term(grads, Matrix::Zero(3, 3)), 0.0);
    EXPECT_EQ(signal_term(std::vector<RowMatrix>{}, S), 0.0);
}

TEST(McLhs, AffineMatchesSignalTerm) {
    Rng rng(5);
    const Eigen::Index n = 60;
    RowMatrix X(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal();
        X(i, 2) = X(i, 0) + 0.3 * rng.normal();
        X(i, 3) = X(i, 1) - X(i, 0) + 0.2 * rng.normal();
    }
    Affine f{gaussian(rng, 2, 4)};
    const std::vector<std::size_t> kept{0, 1}, pruned{2, 3};
    BoundConfig cfg;
    const auto design = class_design(Tier2::beta, X, kept, pruned, cfg);
    const auto grads = input_gradients(f, design.X_anchor, pruned);
    const double L = signal_term(grads, design.anchor.sigma_minus);
    const auto est = mc_lhs(f, design.X_anchor, pruned, design.anchor.factor, 4096, 9);
    EXPECT_NEAR(est.value, L, 3.0 * est.std_error);
    EXPECT_GT(est.std_error, 0.0);

    const auto pen = curvature_penalty(f, design.X_anchor, pruned, design.anchor, cfg);
    EXPECT_EQ(pen.B_hat, 0.0);
    EXPECT_DOUBLE_EQ(bound_rhs(L, pen.B_hat), L);

    // zero covariance: nothing to vary
    const auto zero = mc_lhs(f, design.X_anchor, pruned, Matrix::Zero(2, 2), 16, 1);
    EXPECT_EQ(zero.value, 0.0);
    EXPECT_EQ(zero.std_error, 0.0);
}

TEST(CurvaturePenalty, SquareHasClosedFormAtAlphaOne) {
    Rng rng(6);
    const auto X = linked_pair(rng, 300, 0.1);
    const Square f{2, 1};
    const std::vector<std::size_t> kept{0}, pruned{1};
    BoundConfig cfg;
    cfg.alpha = 1.0;
    const auto design = class_design(Tier2::not_beta, X, kept, pruned, cfg);
    // drift of 2u along the segment is 2 t r, so every ratio is 2
    const auto pen = curvature_penalty(f, design.X_anchor, pruned, design.anchor, cfg);
    ASSERT_EQ(pen.holder.size(), 1u);
    EXPECT_NEAR(pen.holder[0], 2.0, 1e-9);
    double m4 = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) m4 += std::pow(std::abs(design.anchor.residuals(i, 0)), 4) / 300.0;
    EXPECT_NEAR(pen.B_hat, m4, 1e-9 * m4);

    // Var(u^2) = 4 mu^2 s^2 + 2 s^4 for u ~ N(mu, s^2); the signal term is the first part.
    const double s2 = design.anchor.sigma_minus(0, 0);
    double lin = 0.0, exact = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double mu = design.X_anchor(i, 1);
        lin += 4.0 * mu * mu * s2 / 300.0;
        exact += (4.0 * mu * mu * s2 + 2.0 * s2 * s2) / 300.0;
    }
    const auto grads = input_gradients(f, design.X_anchor, pruned);
    EXPECT_NEAR(signal_term(grads, design.anchor.sigma_minus), lin, 1e-12 * lin);
    const auto est = mc_lhs(f, design.X_anchor, pruned, design.anchor.factor, 4096, 3);
    EXPECT_NEAR(est.value, exact, 4.0 * est.std_error);
}

TEST(CurvaturePenalty, DegenerateWhenNoResidual) {
    DriftTable empty;
    empty.drift.resize(2);
    const auto pen = holder_penalty(empty, 0.5, 0.95);
    EXPECT_TRUE(pen.degenerate);
    EXPECT_EQ(pen.B_hat, 0.0);
}

TEST(Quantile, TypeSeven) {
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
    EXPECT_NEAR(quantile({1, 2, 3, 4}, 0.95), 3.85, 1e-15);
    EXPECT_DOUBLE_EQ(quantile({7}, 0.95), 7.0);
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3}, 1.0), 3.0);
    EXPECT_THROW(quantile({}, 0.5), DataError);
}

TEST(BoundRhs, ClampsAtZero) {
    EXPECT_DOUBLE_EQ(bound_rhs(4.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(bound_rhs(4.0, 0.0), 4.0);
    EXPECT_EQ(bound_rhs(1.0, 4.0), 0.0);
    EXPECT_EQ(bound_rhs(2.0, 2.0), 0.0);
}

TEST(BoundGrid, AlphaInvariantTermsAndStructure) {
    Rng rng(7);
    const Square f{2, 1};
    std::vector<std::pair<Tier2, RowMatrix>> rows{{Tier2::beta, linked_pair(rng, 80, 0.2)}, {Tier2::not_beta, linked_pair(rng, 70, 0.05)}};
    BoundConfig cfg;
    cfg.n_draws = 256;
    const std::vector<double> alphas{0.25, 0.5, 0.75, 1.0};
    const std::vector<std::size_t> kept{0};
    const auto reps = evaluate_bound_grid(f, rows, kept, alphas, cfg);
    ASSERT_EQ(reps.size(), 4u);
    for (const auto& r : reps) {
        ASSERT_EQ(r.classes.size(), 2u);
        EXPECT_EQ(r.classes[0].label, Tier2::beta);
        EXPECT_EQ(r.classes[0].n, 80u);
        EXPECT_EQ(r.classes[0].p, 1u);
        EXPECT_EQ(r.classes[0].q, 1u);
        for (std::size_t y = 0; y < 2; ++y) {
            EXPECT_EQ(r.classes[y].L_hat, reps[0].classes[y].L_hat);
            EXPECT_EQ(r.classes[y].lhs, reps[0].classes[y].lhs);
            EXPECT_DOUBLE_EQ(r.classes[y].rhs, bound_rhs(r.classes[y].L_hat, r.classes[y].B_hat));
        }
        EXPECT_DOUBLE_EQ(r.lhs_sup, std::max(r.classes[0].lhs, r.classes[1].lhs));
        EXPECT_DOUBLE_EQ(r.rhs_sup, std::max(r.classes[0].rhs, r.classes[1].rhs));
        EXPECT_DOUBLE_EQ(r.margin, r.lhs_sup - r.rhs_sup);
    }
    // same seed, same answer
    const auto again = evaluate_bound_grid(f, rows, kept, alphas, cfg);
    EXPECT_EQ(again[2].margin, reps[2].margin);

    const std::vector<double> bad{0.0};
    EXPECT_THROW(evaluate_bound_grid(f, rows, kept, bad, cfg), ConfigError);
    std::vector<std::pair<Tier2, RowMatrix>> tiny{{Tier2::beta, linked_pair(rng, 2, 0.1)}};
    EXPECT_THROW(evaluate_bound_grid(f, tiny, kept, alphas, cfg), DataError);
}

TEST(BoundGrid, NoPrunedFeaturesIsTrivial) {
    Rng rng(8);
    const Square f{2, 1};
    std::vector<std::pair<Tier2, RowMatrix>> rows{{Tier2::beta, linked_pair(rng, 40, 0.2)}};
    const std::vector<double> alphas{0.5};
    const std::vector<std::size_t> kept{0, 1};
    const auto r = evaluate_bound_grid(f, rows, kept, alphas, BoundConfig{}).front();
    EXPECT_EQ(r.classes[0].q, 0u);
    EXPECT_EQ(r.classes[0].L_hat, 0.0);
    EXPECT_EQ(r.classes[0].lhs, 0.0);
    EXPECT_EQ(r.margin, 0.0);
    EXPECT_TRUE(r.holds());
}

TEST(RequireBound, ThrowsOnViolation) {
    BoundReport r;
    r.margin = -0.5;
    EXPECT_FALSE(r.holds());
    EXPECT_THROW(require_bound(r), BoundViolation);
    r.margin = 0.0;
    EXPECT_NO_THROW(require_bound(r));
}

TEST(InputGradients, PermutationAndConstancy) {
    Rng rng(9);
    Affine f{gaussian(rng, 2, 5)};
    const auto X = gaussian(rng, 6, 5);
    const std::vector<std::size_t> cols{3, 0, 4};
    const auto g = input_gradients(f, X, cols);
    ASSERT_EQ(g.size(), 2u);
    for (std::size_t c = 0; c < 2; ++c)
        for (Eigen::Index i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < cols.size(); ++j)
                EXPECT_EQ(g[c](i, static_cast<Eigen::Index>(j)), f.W(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(cols[j])));
    const std::vector<std::size_t> out_of_range{5};
    EXPECT_THROW(input_gradients(f, X, out_of_range), DataError);
    EXPECT_EQ(complement(std::vector<std::size_t>{1, 3}, 5), (std::vector<std::size_t>{0, 2, 4}));
}
