#include <gtest/gtest.h>

#include "crossbeta/metrics.hpp"
#include "crossbeta/rng.hpp"

using namespace crossbeta;

namespace {

struct Case {
    std::vector<double> scores;
    std::vector<int> labels;
};

// Every (positive, negative) pair: win 1, tie 1/2.
double pairwise_auroc(const Case& c) {
    double wins = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < c.scores.size(); ++i)
        for (std::size_t j = 0; j < c.scores.size(); ++j) {
            if (c.labels[i] != 1 || c.labels[j] != 0) continue;
            ++pairs;
            wins += c.scores[i] > c.scores[j] ? 1.0 : c.scores[i] == c.scores[j] ? 0.5 : 0.0;
        }
    return wins / pairs;
}

// For each positive, precision at its own score level (ties included).
double exhaustive_ap(const Case& c) {
    double ap = 0.0;
    int n_pos = 0;
    for (int y : c.labels) n_pos += y;
    for (std::size_t i = 0; i < c.scores.size(); ++i) {
        if (c.labels[i] != 1) continue;
        int above = 0, pos_above = 0;
        for (std::size_t j = 0; j < c.scores.size(); ++j)
            if (c.scores[j] >= c.scores[i]) {
                ++above;
                pos_above += c.labels[j];
            }
        ap += static_cast<double>(pos_above) / above / n_pos;
    }
    return ap;
}

std::vector<Case> fixture() {
    std::vector<Case> cases{
        {{0.9, 0.8, 0.7, 0.2}, {1, 1, 0, 0}},
        {{0.9, 0.8, 0.7, 0.2}, {1, 0, 1, 0}},
        {{0.2, 0.7, 0.8, 0.9}, {1, 1, 0, 0}},
        {{0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}},
        {{0.6, 0.6, 0.3, 0.3, 0.9}, {1, 0, 1, 0, 0}},
        {{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}},
        {{0.0, 1.0}, {0, 1}},
        {{0.3, 0.3, 0.3, 0.7, 0.7, 0.1}, {1, 1, 0, 0, 1, 0}},
    };
    Rng rng(9);
    for (int k = 0; k < 2; ++k) {
        Case c;
        for (int i = 0; i < 40; ++i) {
            c.scores.push_back(std::round(rng.uniform() * 10.0) / 10.0);
            c.labels.push_back(i % 3 == 0 ? 1 : static_cast<int>(rng.below(2)));
        }
        cases.push_back(c);
    }
    return cases;
}

}  // namespace

TEST(Metrics, FixtureMatchesPairwiseOracles) {
    const auto cases = fixture();
    ASSERT_EQ(cases.size(), 10u);
    for (std::size_t k = 0; k < cases.size(); ++k) {
        EXPECT_NEAR(auroc(cases[k].scores, cases[k].labels), pairwise_auroc(cases[k]), 1e-12) << k;
        EXPECT_NEAR(auprc(cases[k].scores, cases[k].labels), exhaustive_ap(cases[k]), 1e-12) << k;
    }
}

TEST(Metrics, PerfectAndTiedScores) {
    const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
    const std::vector<int> y{1, 1, 0, 0};
    EXPECT_DOUBLE_EQ(auroc(s, y), 1.0);
    EXPECT_DOUBLE_EQ(auprc(s, y), 1.0);
    const std::vector<double> flat(4, 0.4);
    EXPECT_DOUBLE_EQ(auroc(flat, y), 0.5);
}

TEST(Metrics, SingleClassKeepsF1) {
    const std::vector<double> s{0.9, 0.2, 0.7};
    const std::vector<int> y{1, 1, 1};
    EXPECT_THROW(auroc(s, y), DataError);
    const auto r = evaluate_metrics(s, y);
    EXPECT_FALSE(r.auroc);
    EXPECT_FALSE(r.auprc);
    EXPECT_DOUBLE_EQ(r.f1[1], 2.0 * 2 / (2.0 * 2 + 0 + 1));
}

TEST(Metrics, WeightedF1FromCounts) {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < 30; ++i) {
            s.push_back(rng.uniform());
            y.push_back(static_cast<int>(rng.below(2)));
        }
        const auto r = evaluate_metrics(s, y);
        std::size_t tp[2]{}, fp[2]{}, fn[2]{}, n[2]{};
        for (std::size_t i = 0; i < s.size(); ++i) {
            const int p = s[i] >= 0.5;
            ++n[y[i]];
            if (p == y[i]) ++tp[p];
            else {
                ++fp[p];
                ++fn[y[i]];
            }
        }
        double expect = 0.0;
        for (int c = 0; c < 2; ++c) {
            EXPECT_EQ(r.counts[c].tp, tp[c]);
            EXPECT_EQ(r.counts[c].fp, fp[c]);
            EXPECT_EQ(r.counts[c].fn, fn[c]);
            const double f = 2.0 * tp[c] + fp[c] + fn[c] == 0 ? 0.0 : 2.0 * tp[c] / (2.0 * tp[c] + fp[c] + fn[c]);
            EXPECT_DOUBLE_EQ(r.f1[c], f);
            expect += static_cast<double>(n[c]) / 30.0 * f;
        }
        EXPECT_DOUBLE_EQ(r.f1_weighted, expect);
    }
}

TEST(Metrics, ThresholdAndInputChecks) {
    const std::vector<double> s{0.5, 0.49999};
    const std::vector<int> y{1, 0};
    const auto r = evaluate_metrics(s, y);
    EXPECT_DOUBLE_EQ(r.f1_weighted, 1.0);
    EXPECT_THROW(evaluate_metrics(std::vector<double>{1.5}, std::vector<int>{1}), DataError);
    EXPECT_THROW(evaluate_metrics(std::vector<double>{}, std::vector<int>{}), DataError);
    EXPECT_THROW(evaluate_metrics(std::vector<double>{0.1, 0.2}, std::vector<int>{1}), DataError);
}
