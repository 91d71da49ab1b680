#pragma once

// End-to-end stages over one run configuration. Every stage writes CSV
// reports plus a short text summary into the output directory; the manifest
// records the effective configuration, seeds, timings and report digests.

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "crossbeta/bayes_threshold.hpp"
#include "crossbeta/bounds.hpp"
#include "crossbeta/collapse.hpp"
#include "crossbeta/config.hpp"
#include "crossbeta/csv_io.hpp"
#include "crossbeta/gmm.hpp"
#include "crossbeta/model.hpp"
#include "crossbeta/prune.hpp"
#include "crossbeta/synth.hpp"
#include "crossbeta/train.hpp"

namespace crossbeta {

inline constexpr const char* tool_version = "1.0.0";
inline constexpr const char* prng_name = "xoshiro256** seeded through splitmix64";

/// Runs fn(0..n-1) on up to `jobs` threads and returns the results in index
/// order. The first failure by index is rethrown after all workers finish.
template <class Fn>
auto parallel_map(std::size_t n, int jobs, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw NumericError("sha256 digest failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Output directory plus the bookkeeping the manifest needs.
class RunContext {
public:
    RunContext(RunConfig cfg, std::filesystem::path out, int jobs = 1) : cfg_(std::move(cfg)), out_(std::move(out)), jobs_(jobs) {
        std::error_code ec;
        std::filesystem::create_directories(out_, ec);
        if (ec) throw DataError("cannot create output directory '" + out_.string() + "': " + ec.message());
    }

    const RunConfig& config() const noexcept { return cfg_; }
    const std::filesystem::path& out() const noexcept { return out_; }
    int jobs() const noexcept { return jobs_; }

    /// Writes one report file and records its digest.
    void emit(const std::string& name, const std::string& content) {
        const auto path = out_ / name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw DataError("cannot write '" + path.string() + "'");
        os << content;
        if (!os) throw DataError("write to '" + path.string() + "' failed");
        std::lock_guard lock(mu_);
        reports_.erase(std::remove_if(reports_.begin(), reports_.end(), [&](const auto& r) { return r.first == name; }), reports_.end());
        reports_.emplace_back(name, sha256_hex(content));
    }

    /// Records a file written by other means (models, datasets).
    void record_file(const std::string& name) {
        const auto digest = sha256_hex(read_file(out_ / name));
        std::lock_guard lock(mu_);
        reports_.emplace_back(name, digest);
    }

    void record_timing(const std::string& stage, double seconds) {
        std::lock_guard lock(mu_);
        timing_.emplace_back(stage, seconds);
    }

    const std::vector<std::pair<std::string, std::string>>& reports() const noexcept { return reports_; }
    const std::vector<std::pair<std::string, double>>& timing() const noexcept { return timing_; }

private:
    RunConfig cfg_;
    std::filesystem::path out_;
    int jobs_ = 1;
    std::mutex mu_;
    std::vector<std::pair<std::string, std::string>> reports_;
    std::vector<std::pair<std::string, double>> timing_;
};

namespace pipeline_detail {

inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    return csv_detail::format_double(v, 10);
}

inline std::string tau_tag(double tau) { return csv_detail::format_double(tau, 6); }

inline PruneConfig prune_config(const RunConfig& cfg, double tau) { return {tau, tau, cfg.rho_beta, cfg.rho_notbeta}; }

inline TrainConfig train_config(const RunConfig& cfg, std::uint64_t seed) {
    TrainConfig t = cfg.train;
    t.seed = seed;
    return t;
}

inline LossConfig loss_config(const RunConfig& cfg, LossKind kind) {
    LossConfig l = cfg.loss;
    l.kind = kind;
    return l;
}

template <class Fn>
auto timed(RunContext& ctx, const std::string& stage, Fn fn) {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = fn();
    ctx.record_timing(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return result;
}

}  // namespace pipeline_detail

/// Decision log: the settings a reader needs to know were in effect.
inline std::vector<std::string> decision_log(const RunConfig& c) {
    using pipeline_detail::num;
    std::vector<std::string> d;
    d.push_back("data source: " + c.data_source + "; profiles are taken as already calibrated, no normalization before summarizing");
    d.push_back("random streams: " + std::string(prng_name) + ", sub-stage seeds derived from run.seed by tag");
    d.push_back("split: pooled by tier1" + std::string(c.stratify ? " and tier2" : "") + ", ratios " + num(c.split.train) + "/" +
                num(c.split.val) + "/" + num(c.split.test));
    d.push_back("mixture order selection: K = 1.." + std::to_string(c.stage1.gmm.k_max) + ", " + std::to_string(c.stage1.gmm.n_init) +
                " restarts, scale floor " + (c.stage1.gmm.scale_floor > 0.0 ? num(c.stage1.gmm.scale_floor) : "1e-6 x data range"));
    d.push_back("threshold search: bisection to " + num(c.stage1.root_tolerance) + ", bracket pad " +
                (c.stage1.bracket_pad > 0.0 ? num(c.stage1.bracket_pad) : "1% of summary range") +
                (c.add_empirical_prior ? ", empirical tissue prior added to the grid" : ""));
    d.push_back("pruning minimum support: beta " + std::to_string(c.rho_beta) + ", not_beta " + std::to_string(c.rho_notbeta));
    d.push_back("pruning statistics from training rows only (per fold during cross-validation)");
    d.push_back("cross-validation: " + std::to_string(c.train.folds) + " folds over train+val, test split held out");
    d.push_back("optimizer: Adam with decoupled weight decay " + num(c.train.weight_decay) + " on all parameters, cosine schedule " +
                num(c.train.lr) + " -> " + num(c.train.lr_min) + ", " +
                (c.train.batch_size == 0 ? std::string("full batch") : "batch " + std::to_string(c.train.batch_size)));
    d.push_back("network: LeakyReLU slope " + num(c.train.leaky_slope) + ", inverted dropout " + num(c.train.dropout_p) +
                ", fan-in uniform weights, zero biases, inputs standardized with training-row mean and sd");
    d.push_back("early stopping on validation weighted F1: patience " + std::to_string(c.train.patience) + ", min improvement " +
                num(c.train.improve_tol) + ", best weights restored");
    d.push_back("bounds: full-input classifier in raw intensity coordinates, " + std::to_string(c.bounds.n_draws) + " draws, quantile " +
                num(c.bounds.quantile) + ", evaluated on all labeled tissue rows");
    d.push_back(std::string("collapse: loss ") + std::string(to_string(c.collapse_loss)) + ", class balancing " +
                (c.collapse_balance ? "on" : "off") + ", informative cutoff " + num(c.informative_cutoff));
    return d;
}

inline std::vector<std::pair<std::string, std::uint64_t>> stage_seeds(const RunConfig& c) {
    std::vector<std::pair<std::string, std::uint64_t>> s{{"run", c.seed}};
    for (const char* stage : {"split", "stage1", "stage3", "bounds", "collapse"}) s.emplace_back(stage, c.stage_seed(stage));
    s.emplace_back("synth", c.effective_synth().seed);
    return s;
}

inline nlohmann::ordered_json manifest_json(const RunContext& ctx, const std::string& command) {
    nlohmann::ordered_json j;
    j["tool"] = "crossbeta";
    j["version"] = tool_version;
    j["command"] = command;
    j["prng"] = prng_name;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config_entries(ctx.config())) cfg[k] = v;
    j["config"] = cfg;
    nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
    for (const auto& [k, v] : stage_seeds(ctx.config())) seeds[k] = v;
    j["seeds"] = seeds;
    j["decisions"] = decision_log(ctx.config());
    nlohmann::ordered_json timing = nlohmann::ordered_json::object();
    for (const auto& [k, v] : ctx.timing()) timing[k] = v;
    j["timing_seconds"] = timing;
    auto reports = ctx.reports();
    std::sort(reports.begin(), reports.end());
    nlohmann::ordered_json digests = nlohmann::ordered_json::object();
    for (const auto& [k, v] : reports) digests[k] = v;
    j["report_sha256"] = digests;
    return j;
}

inline void write_manifest(const RunContext& ctx, const std::string& command) {
    const auto path = ctx.out() / "manifest.json";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path.string() + "'");
    os << manifest_json(ctx, command).dump(2) << '\n';
}

/// Reads a configuration file; a leading '{' marks a run manifest, whose
/// config block is replayed.
inline RunConfig load_config_or_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text[first] != '{') {
        std::istringstream is(text);
        return run_config_from(parse_key_values(is, path), path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid manifest JSON: " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object()) throw ConfigError(path + ": manifest has no config object");
    KeyValueMap kv;
    std::size_t line = 0;
    for (const auto& [k, v] : j["config"].items()) {
        if (!v.is_string()) throw ConfigError(path + ": manifest config value for '" + k + "' is not a string");
        kv[k] = {v.get<std::string>(), ++line};
    }
    return run_config_from(kv, path);
}

/// Validation with the config origin prepended to any message.
inline void validate_run_config(const RunConfig& cfg) {
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(cfg.config_origin + ": " + e.what());
    }
}

/// Raw dataset (generated or loaded), before the split is assigned.
inline Dataset source_dataset(const RunConfig& cfg) {
    if (cfg.data_source == "synth") return generate(cfg.effective_synth());
    return load_csv(cfg.data_source);
}

inline Dataset prepared_dataset(const RunConfig& cfg) {
    return split_dataset(source_dataset(cfg), cfg.split, cfg.stage_seed("split"), cfg.stratify);
}

// ---------------------------------------------------------------- synth

inline void run_synth(RunContext& ctx) {
    const auto ds = pipeline_detail::timed(ctx, "synth", [&] { return source_dataset(ctx.config()); });
    std::ostringstream csv;
    write_csv(csv, ds);
    ctx.emit("dataset.csv", csv.str());
    std::size_t mica = 0, beta = 0, notbeta = 0;
    for (const auto& p : ds.profiles()) {
        if (p.tier1 == Tier1::mica) ++mica;
        else if (p.tier2 == Tier2::beta) ++beta;
        else if (p.tier2 == Tier2::not_beta) ++notbeta;
    }
    std::ostringstream s;
    s << "profiles: " << ds.size() << " (mica " << mica << ", beta " << beta << ", not_beta " << notbeta << ")\n";
    s << "grid: " << ds.dim() << " bins over [" << pipeline_detail::num(ds.grid().front()) << ", "
      << pipeline_detail::num(ds.grid().back()) << "]\n";
    ctx.emit("synth_summary.txt", s.str());
}

// ---------------------------------------------------------------- stage 1

struct Stage1Result {
    OrderSelection mica;
    OrderSelection tissue;
    PriorSweep sweep;
    double empirical_prior = 0.0;
};

inline Stage1Result run_stage1(RunContext& ctx, const Dataset& ds) {
    using pipeline_detail::num;
    const auto& cfg = ctx.config();
    auto result = pipeline_detail::timed(ctx, "stage1", [&] {
        std::vector<double> mica, tissue;
        std::vector<LabeledSummary> labeled;
        for (const auto& p : ds.profiles()) {
            const double s = summarize(p);
            (p.tier1 == Tier1::mica ? mica : tissue).push_back(s);
            labeled.push_back({s, p.tier1});
        }
        if (mica.empty() || tissue.empty())
            throw DataError("stage1: labeled mica and tissue profiles are both required (mica " + std::to_string(mica.size()) +
                            ", tissue " + std::to_string(tissue.size()) + ")");
        Stage1Result r;
        GmmConfig g = cfg.stage1.gmm;
        g.seed = derive_seed(cfg.stage_seed("stage1"), "mica");
        r.mica = select_order(mica, g);
        g.seed = derive_seed(cfg.stage_seed("stage1"), "tissue");
        r.tissue = select_order(tissue, g);
        r.empirical_prior = static_cast<double>(tissue.size()) / static_cast<double>(labeled.size());
        ThresholdSearchConfig t = cfg.stage1;
        if (cfg.add_empirical_prior &&
            std::none_of(t.prior_grid.begin(), t.prior_grid.end(), [&](double p) { return std::abs(p - r.empirical_prior) < 1e-12; }))
            t.prior_grid.push_back(r.empirical_prior);
        std::sort(t.prior_grid.begin(), t.prior_grid.end());
        r.sweep = sweep_priors(r.mica.model, r.tissue.model, labeled, t);
        return r;
    });

    std::ostringstream csv;
    csv << "pi_tissue,pi_mica,xi,accuracy,fpr,fnr,roots,empirical,best\n";
    for (const auto& row : result.sweep.rows) {
        csv << num(row.pi_tissue) << ',' << num(1.0 - row.pi_tissue) << ',' << num(row.xi) << ',' << num(row.accuracy) << ','
            << num(row.fpr) << ',' << num(row.fnr) << ',' << row.roots_found << ','
            << (std::abs(row.pi_tissue - result.empirical_prior) < 1e-12 ? 1 : 0) << ','
            << (row.pi_tissue == result.sweep.best.pi_tissue ? 1 : 0) << '\n';
    }
    ctx.emit("stage1_thresholds.csv", csv.str());
    for (const auto& [name, sel] : {std::pair{"mica", &result.mica}, std::pair{"tissue", &result.tissue}}) {
        std::ostringstream b;
        b << "k,loglik,bic,selected\n";
        for (const auto& rec : sel->trace.records)
            b << rec.k << ',' << num(rec.loglik) << ',' << num(rec.bic) << ',' << (rec.k == sel->trace.k_star ? 1 : 0) << '\n';
        ctx.emit(std::string("stage1_bic_") + name + ".csv", b.str());
    }
    std::ostringstream s;
    s << "mixture order: mica K*=" << result.mica.trace.k_star << ", tissue K*=" << result.tissue.trace.k_star << '\n';
    s << "empirical tissue prior: " << num(result.empirical_prior) << '\n';
    const auto& b = result.sweep.best;
    s << "best prior " << num(b.pi_tissue) << ": threshold " << num(b.xi) << ", accuracy " << num(b.accuracy) << ", FPR " << num(b.fpr)
      << ", FNR " << num(b.fnr) << '\n';
    for (double p : result.sweep.failed_priors) s << "prior " << num(p) << ": no threshold root in the search bracket\n";
    ctx.emit("stage1_summary.txt", s.str());
    return result;
}

// ---------------------------------------------------------------- stage 2

struct Stage2Row {
    double tau = 0.0;
    PruneResult prune;
    bool monotone = true;  // |retained| >= that of the next smaller tau
    bool nested = true;    // retained set contains that of the next smaller tau
};

inline std::vector<Stage2Row> run_stage2(RunContext& ctx, const Dataset& ds) {
    using pipeline_detail::num;
    const auto& cfg = ctx.config();
    auto taus = cfg.tau_list;
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
    auto rows = pipeline_detail::timed(ctx, "stage2", [&] {
        auto out = parallel_map(taus.size(), ctx.jobs(), [&](std::size_t i) {
            Stage2Row r;
            r.tau = taus[i];
            r.prune = prune_dataset(ds, pipeline_detail::prune_config(cfg, taus[i]));
            return r;
        });
        for (std::size_t i = 1; i < out.size(); ++i) {
            const auto& prev = out[i - 1].prune.retained_union;
            const auto& cur = out[i].prune.retained_union;
            out[i].monotone = cur.size() >= prev.size();
            out[i].nested = std::includes(cur.begin(), cur.end(), prev.begin(), prev.end());
        }
        return out;
    });

    const double d = static_cast<double>(ds.dim());
    std::ostringstream csv;
    csv << "tau,n_notbeta,n_beta,n_union,reduction,guard_notbeta,guard_beta,monotone,nested\n";
    for (const auto& r : rows) {
        csv << num(r.tau) << ',' << r.prune.retained_notbeta.size() << ',' << r.prune.retained_beta.size() << ','
            << r.prune.retained_union.size() << ',' << num(1.0 - static_cast<double>(r.prune.retained_union.size()) / d) << ','
            << r.prune.guard_notbeta << ',' << r.prune.guard_beta << ',' << r.monotone << ',' << r.nested << '\n';

        std::ostringstream trace;
        trace << "step,class,a,b,corr,conn_a,conn_b,discarded\n";
        std::size_t step = 0;
        for (const auto& t : r.prune.discard_trace)
            trace << step++ << ',' << to_string(t.class_label) << ',' << t.a << ',' << t.b << ',' << num(t.corr) << ',' << num(t.conn_a)
                  << ',' << num(t.conn_b) << ',' << t.discarded << '\n';
        ctx.emit("stage2_trace_tau" + pipeline_detail::tau_tag(r.tau) + ".csv", trace.str());

        std::ostringstream kept;
        for (const auto& [name, idx] : {std::pair{"not_beta", &r.prune.retained_notbeta}, std::pair{"beta", &r.prune.retained_beta},
                                        std::pair{"union", &r.prune.retained_union}}) {
            kept << "# " << name << " (" << idx->size() << ")\n";
            for (std::size_t k : *idx) kept << k << '\n';
        }
        ctx.emit("stage2_retained_tau" + pipeline_detail::tau_tag(r.tau) + ".txt", kept.str());
    }
    ctx.emit("stage2_pruning.csv", csv.str());

    std::ostringstream s;
    for (const auto& r : rows) {
        s << "tau " << num(r.tau) << ": retained " << r.prune.retained_union.size() << " of " << ds.dim() << " (reduction "
          << num(100.0 * (1.0 - static_cast<double>(r.prune.retained_union.size()) / d)) << "%)";
        if (r.prune.guard_beta || r.prune.guard_notbeta) s << ", minimum-support floor reached";
        if (!r.monotone) s << ", smaller than at the previous tau";
        else if (!r.nested) s << ", not a superset of the previous tau";
        s << '\n';
    }
    ctx.emit("stage2_summary.txt", s.str());
    return rows;
}

// ---------------------------------------------------------------- stage 3

struct Stage3Cell {
    LossKind loss = LossKind::combo;
    double tau = 0.0;
    CvResult cv;
    bool best = false;
};

struct Stage3Result {
    std::vector<Stage3Cell> cells;
    std::size_t best = 0;
    Model best_model;
    MetricReport best_model_test;
    Model full_model;
    MetricReport full_model_test;
};

inline std::string model_manifest(const RunConfig& cfg, const std::string& role, LossKind loss, std::optional<double> tau,
                                  std::uint64_t seed, int best_epoch) {
    nlohmann::ordered_json j;
    j["role"] = role;
    j["loss"] = std::string(to_string(loss));
    j["tau"] = tau ? nlohmann::ordered_json(*tau) : nlohmann::ordered_json(nullptr);
    j["seed"] = seed;
    j["best_epoch"] = best_epoch;
    j["run_seed"] = cfg.seed;
    j["version"] = tool_version;
    return j.dump();
}

inline Stage3Result run_stage3(RunContext& ctx, const Dataset& ds) {
    using pipeline_detail::num;
    const auto& cfg = ctx.config();
    const std::uint64_t seed = cfg.stage_seed("stage3");
    Stage3Result result = pipeline_detail::timed(ctx, "stage3", [&] {
        Stage3Result r;
        std::vector<std::pair<LossKind, double>> grid;
        for (LossKind l : cfg.losses) {
            for (double t : cfg.tau_list) grid.emplace_back(l, t);
        }
        r.cells = parallel_map(grid.size(), ctx.jobs(), [&](std::size_t i) {
            Stage3Cell c;
            c.loss = grid[i].first;
            c.tau = grid[i].second;
            c.cv = cross_validate(ds, pipeline_detail::prune_config(cfg, c.tau), pipeline_detail::loss_config(cfg, c.loss),
                                  pipeline_detail::train_config(cfg, seed));
            return c;
        });
        for (std::size_t i = 1; i < r.cells.size(); ++i) {
            if (r.cells[i].cv.val_f1.mean > r.cells[r.best].cv.val_f1.mean) r.best = i;
        }
        r.cells[r.best].best = true;

        const auto& best = r.cells[r.best];
        const auto loss = pipeline_detail::loss_config(cfg, best.loss);
        const auto train_rows = split_profiles(ds, Split::train);
        const auto val_rows = split_profiles(ds, Split::val);
        const auto test_rows = split_profiles(ds, Split::test);

        const auto kept = prune_dataset(ds, pipeline_detail::prune_config(cfg, best.tau)).retained_union;
        const std::uint64_t best_seed = derive_seed(seed, "final");
        auto fit = fit_network(labeled_rows(train_rows, kept), labeled_rows(val_rows, kept), kept, loss,
                               pipeline_detail::train_config(cfg, best_seed), best_seed);
        r.best_model = std::move(fit.model);
        r.best_model.manifest = model_manifest(cfg, "best", best.loss, best.tau, best_seed, fit.best_epoch);
        r.best_model_test = evaluate_model(r.best_model, labeled_rows(test_rows, kept));

        std::vector<std::size_t> all(ds.dim());
        std::iota(all.begin(), all.end(), std::size_t{0});
        const std::uint64_t full_seed = derive_seed(seed, "full");
        auto full = fit_network(labeled_rows(train_rows, all), labeled_rows(val_rows, all), all, loss,
                                pipeline_detail::train_config(cfg, full_seed), full_seed);
        r.full_model = std::move(full.model);
        r.full_model.manifest = model_manifest(cfg, "full", best.loss, std::nullopt, full_seed, full.best_epoch);
        r.full_model_test = evaluate_model(r.full_model, labeled_rows(test_rows, all));
        return r;
    });

    std::ostringstream table, folds, history;
    table << "loss,tau,m_mean,m_sd,val_f1_mean,val_f1_sd,test_f1_mean,test_f1_sd,auroc_mean,auroc_sd,auprc_mean,auprc_sd,params,best\n";
    folds << "loss,tau,fold,m,params,best_epoch,epochs_run,val_f1,test_f1,test_auroc,test_auprc\n";
    history << "loss,tau,fold,epoch,lr,train_loss,val_f1\n";
    for (const auto& c : result.cells) {
        const auto& cv = c.cv;
        const std::string key = std::string(to_string(c.loss)) + ',' + num(c.tau);
        table << key << ',' << num(cv.m.mean) << ',' << num(cv.m.sd) << ',' << num(cv.val_f1.mean) << ',' << num(cv.val_f1.sd) << ','
              << num(cv.test_f1.mean) << ',' << num(cv.test_f1.sd) << ',' << num(cv.auroc.mean) << ',' << num(cv.auroc.sd) << ','
              << num(cv.auprc.mean) << ',' << num(cv.auprc.sd) << ',' << num(16.0 * cv.m.mean - 2.0) << ',' << c.best << '\n';
        for (std::size_t f = 0; f < cv.folds.size(); ++f) {
            const auto& rec = cv.folds[f];
            folds << key << ',' << rec.fold << ',' << rec.m << ',' << parameter_count(rec.m) << ',' << rec.best_epoch << ','
                  << rec.epochs_run << ',' << num(rec.val_f1) << ',' << num(rec.test.f1_weighted) << ','
                  << num(rec.test.auroc.value_or(std::nan(""))) << ',' << num(rec.test.auprc.value_or(std::nan(""))) << '\n';
            for (const auto& h : cv.histories[f])
                history << key << ',' << rec.fold << ',' << h.epoch << ',' << num(h.lr) << ',' << num(h.train_loss) << ',' << num(h.val_f1)
                        << '\n';
        }
    }
    ctx.emit("stage3_results.csv", table.str());
    ctx.emit("stage3_folds.csv", folds.str());
    ctx.emit("stage3_history.csv", history.str());

    for (const auto& [name, model] : {std::pair{"model_best.txt", &result.best_model}, std::pair{"model_full.txt", &result.full_model}}) {
        std::ostringstream os;
        write_model(os, *model);
        ctx.emit(name, os.str());
    }

    const auto& b = result.cells[result.best];
    std::ostringstream s;
    s << "grid: " << result.cells.size() << " cells, " << cfg.train.folds << " folds each\n";
    s << "best: loss " << to_string(b.loss) << ", tau " << num(b.tau) << ", mean width " << num(b.cv.m.mean) << ", val F1 "
      << num(b.cv.val_f1.mean) << " +- " << num(b.cv.val_f1.sd) << ", test F1 " << num(b.cv.test_f1.mean) << " +- "
      << num(b.cv.test_f1.sd) << '\n';
    s << "model_best.txt: width " << result.best_model.input_dim() << ", test F1 " << num(result.best_model_test.f1_weighted) << '\n';
    s << "model_full.txt: width " << result.full_model.input_dim() << ", test F1 " << num(result.full_model_test.f1_weighted) << '\n';
    ctx.emit("stage3_summary.txt", s.str());
    return result;
}

// ---------------------------------------------------------------- bounds

struct BoundsResult {
    std::vector<BoundReport> reports;  // tau-major, alpha-minor
    bool all_hold = true;
    bool l_hat_invariant = true;
    bool b_hat_monotone = true;  // over (tau, class) pairs with every ratio below one
};

/// Loads the bound classifier; a missing file is a dependency failure.
inline Model bound_model(const RunContext& ctx) {
    const auto& cfg = ctx.config();
    const std::filesystem::path path = cfg.bound_model.empty() ? ctx.out() / "model_full.txt" : std::filesystem::path(cfg.bound_model);
    if (!std::filesystem::exists(path))
        throw DataError("bounds: trained network '" + path.string() + "' not found; run stage3 first or set bounds.model");
    return load_model(path.string());
}

inline BoundsResult run_bounds(RunContext& ctx, const Dataset& ds, const Model& model) {
    using pipeline_detail::num;
    const auto& cfg = ctx.config();
    if (model.input_dim() != ds.dim())
        throw DataError("bounds: the classifier reads " + std::to_string(model.input_dim()) + " features, a full-input network over " +
                        std::to_string(ds.dim()) + " is required");
    for (std::size_t j = 0; j < model.features.size(); ++j) {
        if (model.features[j] != j) throw DataError("bounds: the classifier's feature list is not the full grid");
    }
    auto result = pipeline_detail::timed(ctx, "bounds", [&] {
        const auto rows = tissue_class_rows(ds);
        auto per_tau = parallel_map(cfg.bound_taus.size(), ctx.jobs(), [&](std::size_t i) {
            BoundConfig bc = cfg.bounds;
            bc.tau = cfg.bound_taus[i];
            bc.seed = cfg.stage_seed("bounds");
            const auto kept = prune_dataset(ds, pipeline_detail::prune_config(cfg, bc.tau)).retained_union;
            return evaluate_bound_grid(model, rows, kept, cfg.alphas, bc);
        });
        BoundsResult r;
        for (auto& grid : per_tau) {
            for (std::size_t c = 0; c < grid.front().classes.size(); ++c) {
                for (std::size_t a = 1; a < grid.size(); ++a) {
                    const auto& prev = grid[a - 1].classes[c];
                    const auto& cur = grid[a].classes[c];
                    if (std::memcmp(&prev.L_hat, &cur.L_hat, sizeof(double)) != 0) r.l_hat_invariant = false;
                    if (cur.all_r_below_one && grid[a].alpha > grid[a - 1].alpha && cur.B_hat < prev.B_hat) r.b_hat_monotone = false;
                }
            }
            for (auto& rep : grid) {
                if (!rep.holds()) r.all_hold = false;
                r.reports.push_back(std::move(rep));
            }
        }
        return r;
    });

    std::ostringstream csv;
    csv << "# classifier: full-input network over all " << ds.dim() << " bins, raw intensity coordinates\n";
    csv << "tau,alpha,y,n,p,q,LHS_y,LHS_se,L_hat,B_hat,RHS_y,all_r_below_one,degenerate,jitter,LHS_sup,RHS_sup,margin\n";
    for (const auto& rep : result.reports) {
        for (const auto& c : rep.classes)
            csv << num(rep.tau) << ',' << num(rep.alpha) << ',' << to_string(c.label) << ',' << c.n << ',' << c.p << ',' << c.q << ','
                << num(c.lhs) << ',' << num(c.lhs_se) << ',' << num(c.L_hat) << ',' << num(c.B_hat) << ',' << num(c.rhs) << ','
                << c.all_r_below_one << ',' << c.degenerate << ',' << num(c.jitter) << ",,,\n";
        csv << num(rep.tau) << ',' << num(rep.alpha) << ",sup,,,,,,,,,,,," << num(rep.lhs_sup) << ',' << num(rep.rhs_sup) << ','
            << num(rep.margin) << '\n';
    }
    ctx.emit("bounds.csv", csv.str());

    std::ostringstream s;
    s << "cells: " << result.reports.size() << ", bound holds in all: " << (result.all_hold ? "yes" : "no") << '\n';
    s << "signal term identical across alpha: " << (result.l_hat_invariant ? "yes" : "no") << '\n';
    s << "penalty non-decreasing in alpha where all ratios < 1: " << (result.b_hat_monotone ? "yes" : "no") << '\n';
    double min_margin = std::numeric_limits<double>::infinity();
    for (const auto& rep : result.reports) min_margin = std::min(min_margin, rep.margin);
    s << "smallest margin: " << num(min_margin) << '\n';
    ctx.emit("bounds_summary.txt", s.str());
    return result;
}

// ---------------------------------------------------------------- collapse

inline CollapseReport run_collapse(RunContext& ctx, const Dataset& ds) {
    using pipeline_detail::num;
    const auto& cfg = ctx.config();
    auto result = pipeline_detail::timed(ctx, "collapse", [&] {
        SynthConfig sc = cfg.effective_synth();
        sc.grid = ds.grid();
        LossConfig loss = pipeline_detail::loss_config(cfg, cfg.collapse_loss);
        loss.balance_classes = cfg.collapse_balance;
        return collapse_experiment(ds, informative_bins(sc, cfg.informative_cutoff), loss,
                                   pipeline_detail::train_config(cfg, cfg.stage_seed("collapse")));
    });
    std::ostringstream csv;
    csv << "arm,m,test_error,bayes_floor,gap,best_epoch,prior_beta,prior_notbeta,n_test\n";
    for (const auto& [name, arm] : {std::pair{"uninformative", &result.uninformative}, std::pair{"informative", &result.informative}}) {
        csv << name << ',' << arm->features.size() << ',' << num(arm->test_error) << ',' << num(result.bayes_floor) << ','
            << num(arm->test_error - result.bayes_floor) << ',' << arm->best_epoch << ',' << num(result.prior_beta) << ','
            << num(result.prior_notbeta) << ',' << result.n_test << '\n';
    }
    ctx.emit("collapse.csv", csv.str());
    std::ostringstream s;
    s << "majority-class floor: " << num(result.bayes_floor) << '\n';
    s << "uninformative features (" << result.uninformative.features.size() << "): test error " << num(result.uninformative.test_error)
      << '\n';
    s << "informative features (" << result.informative.features.size() << "): test error " << num(result.informative.test_error)
      << '\n';
    ctx.emit("collapse_summary.txt", s.str());
    return result;
}

// ---------------------------------------------------------------- commands

/// Runs one subcommand and writes the manifest, also when the bound check
/// fails after its reports are out.
inline void run_command(RunContext& ctx, const std::string& command) {
    validate_run_config(ctx.config());
    auto finish_bounds = [&](const BoundsResult& r) {
        if (!r.all_hold) {
            write_manifest(ctx, command);
            throw BoundViolation("bound violated in at least one (tau, alpha) cell; see bounds.csv");
        }
    };
    if (command == "synth") {
        run_synth(ctx);
    } else if (command == "all") {
        run_synth(ctx);
        const auto ds = prepared_dataset(ctx.config());
        run_stage1(ctx, ds);
        run_stage2(ctx, ds);
        const auto s3 = run_stage3(ctx, ds);
        const auto b = run_bounds(ctx, ds, ctx.config().bound_model.empty() ? s3.full_model : bound_model(ctx));
        run_collapse(ctx, ds);
        finish_bounds(b);
    } else {
        const auto ds = prepared_dataset(ctx.config());
        if (command == "stage1") {
            run_stage1(ctx, ds);
        } else if (command == "stage2") {
            run_stage2(ctx, ds);
        } else if (command == "stage3") {
            run_stage3(ctx, ds);
        } else if (command == "bounds") {
            finish_bounds(run_bounds(ctx, ds, bound_model(ctx)));
        } else if (command == "collapse") {
            run_collapse(ctx, ds);
        } else {
            throw ConfigError("unknown command '" + command + "'");
        }
    }
    write_manifest(ctx, command);
}

}  // namespace crossbeta
