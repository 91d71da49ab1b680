#include <gtest/gtest.h>

#include "crossbeta/gmm.hpp"
#include "crossbeta/synth.hpp"

using namespace crossbeta;

TEST(Bic, FormulaSubstitution) {
    EXPECT_DOUBLE_EQ(bic(-123.5, 2, 100), 247.0 + 5.0 * std::log(100.0));
    const auto x = generate_bimodal_summaries(100, {0.0, 3.0}, {0.5, 0.5}, {1.0, 1.0}, 5);
    const auto m = fit_gmm(x, 2);
    EXPECT_DOUBLE_EQ(bic(m.loglik, m.components(), m.n), -2.0 * m.loglik + 5.0 * std::log(100.0));
}

TEST(FitGmm, PointMass) {
    const std::vector<double> x(10, 5.0);
    const auto m = fit_gmm(x, 1);
    ASSERT_EQ(m.components(), 1u);
    EXPECT_DOUBLE_EQ(m.means[0], 5.0);
    EXPECT_DOUBLE_EQ(m.scales[0], m.scale_floor);
    EXPECT_THROW(fit_gmm(x, 2), NumericError);
}

TEST(FitGmm, RecoversTwoClusters) {
    const auto x = generate_bimodal_summaries(2000, {0.0, 6.0}, {0.5, 0.5}, {1.0, 1.0}, 21);
    const auto m = fit_gmm(x, 2);
    const std::size_t lo = m.means[0] < m.means[1] ? 0 : 1, hi = 1 - lo;
    EXPECT_NEAR(m.means[lo], 0.0, 0.15);
    EXPECT_NEAR(m.means[hi], 6.0, 0.15);
    EXPECT_NEAR(m.weights[lo], 0.5, 0.05);
    EXPECT_NEAR(m.weights[hi], 0.5, 0.05);
}

TEST(FitGmm, InputChecks) {
    EXPECT_THROW(fit_gmm(std::vector<double>{1, 2, 3}, 1), DataError);
    EXPECT_THROW(fit_gmm(std::vector<double>{1, 2, 3, 4, 5}, 3), DataError);
    EXPECT_THROW(fit_gmm(std::vector<double>{1, 2, 3, 4}, 0), ConfigError);
}

TEST(FitGmm, NestedLikelihoodAndInvariants) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto x = generate_bimodal_summaries(300, {0.0, 1.0 + static_cast<double>(seed)}, {0.3, 0.7}, {1.0, 0.5}, seed);
        const auto m1 = fit_gmm(x, 1);
        const auto m2 = fit_gmm(x, 2);
        EXPECT_GE(m2.loglik, m1.loglik - 1e-6) << seed;
        for (const auto* m : {&m1, &m2}) {
            double wsum = 0.0;
            for (double w : m->weights) wsum += w;
            EXPECT_NEAR(wsum, 1.0, 1e-9);
            for (double s : m->scales) EXPECT_GE(s, m->scale_floor);
            for (std::size_t i = 1; i < m->loglik_trace.size(); ++i)
                EXPECT_GE(m->loglik_trace[i], m->loglik_trace[i - 1] - 1e-10 * std::max(1.0, std::abs(m->loglik_trace[i - 1])));
        }
    }
}

TEST(FitGmm, DensityIntegratesToOne) {
    const auto x = generate_bimodal_summaries(500, {-1.0, 2.0, 5.0}, {0.2, 0.5, 0.3}, {0.3, 1.0, 0.6}, 3);
    const auto m = fit_gmm(x, 3);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < m.components(); ++k) {
        lo = std::min(lo, m.means[k] - 10.0 * m.scales[k]);
        hi = std::max(hi, m.means[k] + 10.0 * m.scales[k]);
    }
    const int n = 200000;  // composite Simpson, n even
    const double h = (hi - lo) / n;
    double s = m.pdf(lo) + m.pdf(hi);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * m.pdf(lo + i * h);
    EXPECT_NEAR(s * h / 3.0, 1.0, 1e-6);
}

TEST(SelectOrder, UnimodalAndBimodal) {
    int uni = 0, bi = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        if (select_order(generate_bimodal_summaries(1000, {0.0}, {1.0}, {1.0}, 100 + seed)).trace.k_star == 1) ++uni;
        if (select_order(generate_bimodal_summaries(1000, {0.0, 6.0}, {0.5, 0.5}, {1.0, 1.0}, 200 + seed)).trace.k_star == 2) ++bi;
    }
    EXPECT_GE(uni, 18);
    EXPECT_GE(bi, 18);
}

TEST(SelectOrder, TraceIsComplete) {
    GmmConfig cfg;
    cfg.k_max = 4;
    const auto x = generate_bimodal_summaries(400, {0.0, 6.0}, {0.5, 0.5}, {1.0, 1.0}, 2);
    const auto sel = select_order(x, cfg);
    ASSERT_EQ(sel.trace.records.size(), 4u);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : sel.trace.records) {
        EXPECT_DOUBLE_EQ(r.bic, -2.0 * r.loglik + static_cast<double>(3 * r.k - 1) * std::log(400.0));
        best = std::min(best, r.bic);
    }
    EXPECT_DOUBLE_EQ(sel.trace.records[sel.trace.k_star - 1].bic, best);
    EXPECT_EQ(sel.model.components(), sel.trace.k_star);
    cfg.k_max = 0;
    EXPECT_THROW(select_order(x, cfg), ConfigError);
}
