#include <gtest/gtest.h>

#include "crossbeta/collapse.hpp"
#include "crossbeta/synth.hpp"

using namespace crossbeta;

TEST(BayesFloor, MajorityClassError) {
    EXPECT_NEAR(bayes_floor(std::vector<double>{0.73, 0.27}), 0.27, 1e-15);
    EXPECT_DOUBLE_EQ(bayes_floor(std::vector<double>{0.5, 0.5}), 0.5);
    EXPECT_THROW(bayes_floor(std::vector<double>{}), DataError);
}

TEST(Collapse, ReportStructure) {
    SynthConfig sc;
    sc.n_mica = 10;
    sc.n_beta = 60;
    sc.n_notbeta = 30;
    const auto ds = split_dataset(generate(sc), {}, 4);
    const auto informative = informative_bins(sc);
    TrainConfig cfg;
    cfg.max_epochs = 40;
    LossConfig loss;
    loss.kind = LossKind::wce;
    const auto rep = collapse_experiment(ds, informative, loss, cfg);
    EXPECT_DOUBLE_EQ(rep.prior_beta, 60.0 / 90.0);
    EXPECT_DOUBLE_EQ(rep.prior_beta + rep.prior_notbeta, 1.0);
    EXPECT_DOUBLE_EQ(rep.bayes_floor, 30.0 / 90.0);
    EXPECT_EQ(rep.n_test, split_profiles(ds, Split::test).size());
    EXPECT_EQ(rep.informative.features, informative);
    EXPECT_EQ(rep.uninformative.features, complement(informative, ds.dim()));
    for (const auto* arm : {&rep.informative, &rep.uninformative}) {
        EXPECT_GE(arm->test_error, 0.0);
        EXPECT_LE(arm->test_error, 1.0);
        EXPECT_GE(arm->best_epoch, 0);
    }
    EXPECT_THROW(collapse_experiment(generate(sc), informative, loss, cfg), DataError);
}
