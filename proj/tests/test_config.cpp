#include <gtest/gtest.h>

#include <sstream>

#include "crossbeta/config.hpp"

using namespace crossbeta;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream is(text);
    return run_config_from(parse_key_values(is, "test.conf"), "test.conf");
}

std::string message_of(const std::string& text) {
    try {
        parse(text).validate();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string render(const RunConfig& c) {
    std::string out;
    for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
    return out;
}

}  // namespace

TEST(KeyValues, CommentsBlankLinesAndWhitespace) {
    std::istringstream is("# header\n\n  run.seed = 42   # trailing\nstage2.tau_list = 0.99, 0.995\n");
    const auto kv = parse_key_values(is, "x.conf");
    ASSERT_EQ(kv.size(), 2u);
    EXPECT_EQ(kv.at("run.seed").value, "42");
    EXPECT_EQ(kv.at("run.seed").line, 3u);
    EXPECT_EQ(kv.at("stage2.tau_list").value, "0.99, 0.995");
}

TEST(KeyValues, ErrorsNameFileAndLine) {
    EXPECT_NE(message_of("run.seed = 1\nno equals here\n").find("test.conf:2"), std::string::npos);
    EXPECT_NE(message_of("run.seed = 1\nrun.seed = 2\n").find("test.conf:2"), std::string::npos);
    EXPECT_NE(message_of("\n\nstage9.bogus = 1\n").find("test.conf:3: unknown key"), std::string::npos);
    EXPECT_NE(message_of(" = 3\n").find("test.conf:1"), std::string::npos);
}

TEST(RunConfig, ParsesTypedValues) {
    const auto c = parse(
        "run.seed = 99\n"
        "synth.n_beta = 10\n"
        "synth.peak_centers = 0.7, 1.3\n"
        "split.stratify = true\n"
        "stage1.prior_grid = 0.2, 0.8\n"
        "stage1.k_max = 4\n"
        "stage2.tau_list = 0.98\n"
        "stage3.losses = focal, dice\n"
        "stage3.max_epochs = 12\n"
        "bounds.alphas = 0.5\n"
        "collapse.loss = combo\n");
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.synth.n_beta, 10u);
    EXPECT_EQ(c.synth.peak_centers, (std::array<double, 2>{0.7, 1.3}));
    EXPECT_TRUE(c.stratify);
    EXPECT_EQ(c.stage1.prior_grid, (std::vector<double>{0.2, 0.8}));
    EXPECT_EQ(c.stage1.gmm.k_max, 4);
    EXPECT_EQ(c.tau_list, (std::vector<double>{0.98}));
    EXPECT_EQ(c.losses, (std::vector<LossKind>{LossKind::focal, LossKind::dice}));
    EXPECT_EQ(c.train.max_epochs, 12);
    EXPECT_EQ(c.alphas, (std::vector<double>{0.5}));
    EXPECT_EQ(c.collapse_loss, LossKind::combo);
}

TEST(RunConfig, RejectsBadValues) {
    EXPECT_NE(message_of("run.seed = abc\n"), "");
    EXPECT_NE(message_of("split.stratify = maybe\n"), "");
    EXPECT_NE(message_of("stage3.losses = hinge\n"), "");
    EXPECT_NE(message_of("stage2.tau_list = 1.5\n"), "");
    EXPECT_NE(message_of("synth.n_mica = 0\nsynth.n_beta = 0\nsynth.n_notbeta = 0\n"), "");
    EXPECT_NE(message_of("stage3.folds = 1\n"), "");
    EXPECT_NE(message_of("data.source = /nonexistent/data.csv\n"), "");
    EXPECT_EQ(message_of("# defaults only\n"), "");
}

TEST(RunConfig, EntriesRoundTrip) {
    auto c = parse(
        "run.seed = 7\n"
        "synth.noise_sd = 0.00012345678901234\n"
        "stage2.tau_list = 0.991, 0.9935\n"
        "stage3.losses = combo\n"
        "stage3.lr = 0.0031\n"
        "bounds.probe_grid = 0.25, 0.5, 1\n"
        "bounds.model = /tmp/m.txt\n");
    const auto text = render(c);
    const auto back = parse(text);
    EXPECT_EQ(render(back), text);
    EXPECT_EQ(back.synth.noise_sd, c.synth.noise_sd);
    EXPECT_EQ(back.bound_model, "/tmp/m.txt");
    EXPECT_EQ(render(parse(render(RunConfig{}))), render(RunConfig{}));
}

TEST(RunConfig, StageSeedsDeriveFromRunSeed) {
    RunConfig a, b;
    b.seed = a.seed + 1;
    EXPECT_EQ(a.stage_seed("split"), RunConfig{}.stage_seed("split"));
    EXPECT_NE(a.stage_seed("split"), a.stage_seed("stage3"));
    EXPECT_NE(a.stage_seed("split"), b.stage_seed("split"));
    EXPECT_NE(a.effective_synth().seed, b.effective_synth().seed);
    const auto pinned = parse("synth.seed = 5\n");
    EXPECT_EQ(pinned.effective_synth().seed, 5u);
}
