// crossbeta: WAXS profile triage pipeline.
//
//   crossbeta all --config run.conf --out results --jobs 2
//   crossbeta bounds --config results/manifest.json --out results

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crossbeta/pipeline.hpp"

namespace {

struct Options {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    int jobs = 1;
};

void add_common(CLI::App* sub, Options& opt) {
    sub->add_option("--config", opt.config, "key = value config file, or a run manifest.json to replay");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "override run.seed");
    sub->add_option("--jobs", opt.jobs, "concurrent grid cells")->check(CLI::PositiveNumber)->capture_default_str();
}

int run(const std::string& command, const Options& opt) {
    crossbeta::RunConfig cfg = opt.config.empty() ? crossbeta::RunConfig{} : crossbeta::load_config_or_manifest(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    crossbeta::RunContext ctx(std::move(cfg), opt.out, opt.jobs);
    crossbeta::run_command(ctx, command);
    std::cout << command << ": reports written to " << ctx.out().string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-beta WAXS triage: tissue screening, feature pruning, compact classifier and bounds"};
    app.require_subcommand(1);
    Options opt;
    const std::pair<const char*, const char*> commands[] = {
        {"synth", "generate the synthetic corpus and write dataset.csv"},
        {"stage1", "mixture-model tissue/mica threshold sweep"},
        {"stage2", "correlation pruning over the tau list"},
        {"stage3", "cross-validated loss x tau grid and final models"},
        {"bounds", "irreducibility bound over tau x alpha on model_full.txt"},
        {"collapse", "majority-class collapse on uninformative features"},
        {"all", "every stage in order"},
    };
    for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(crossbeta::ErrorKind::config);
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, opt);
    } catch (const crossbeta::Error& e) {
        std::cerr << "crossbeta " << command << ": " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "crossbeta " << command << ": " << e.what() << '\n';
        return static_cast<int>(crossbeta::ErrorKind::data);
    }
}
