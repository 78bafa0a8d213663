#include "ebmut/ebmut.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumeric = 2;

struct Failure {
    int code;
    std::string message;
};

void check(ebm_status s) {
    if (s == EBM_OK) return;
    throw Failure{s == EBM_ERR_NUMERIC ? kExitNumeric : kExitInvalid, ebm_last_error()};
}

template <class T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
    T** out() { return &p; }
    T* get() const { return p; }
};

using Pileup = Handle<ebm_pileup, ebm_pileup_free>;
using Regions = Handle<ebm_regions, ebm_regions_free>;
using Config = Handle<ebm_config, ebm_config_free>;
using Model = Handle<ebm_model, ebm_model_free>;
using Result = Handle<ebm_result, ebm_result_free>;
using Scenario = Handle<ebm_scenario, ebm_scenario_free>;
using Sim = Handle<ebm_sim, ebm_sim_free>;

std::string take_string(char* s) {
    std::string out(s);
    ebm_string_free(s);
    return out;
}

std::string digest_file(const std::string& path) {
    char buf[17];
    check(ebm_digest_file(path.c_str(), buf));
    return buf;
}

std::string digest_text(const std::string& text) {
    char buf[17];
    ebm_digest_bytes(text.data(), text.size(), buf);
    return buf;
}

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("EBMUT_SEED");
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    const unsigned long long s = std::strtoull(v, &end, 10);
    if (*end != '\0') throw Failure{kExitInvalid, std::string("EBMUT_SEED is not an integer: '") + v + "'"};
    return s;
}

// Inputs, config snapshot and seed identify a run; outputs and timings are
// appended after the fact and stay out of the digest.
class Run {
public:
    explicit Run(std::string command) : command_(std::move(command)) {}

    void input(const std::string& role, const std::string& path) {
        inputs_.push_back({{"role", role}, {"path", path}, {"digest", digest_file(path)}});
    }
    void settings(ordered_json config, std::uint64_t seed) {
        config_ = std::move(config);
        seed_ = seed;
    }
    const std::string& digest() {
        if (digest_.empty()) digest_ = digest_text(identity().dump());
        return digest_;
    }
    void output(const std::string& path) { outputs_.push_back(path); }

    template <class F>
    auto timed(const std::string& stage, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            record(stage, t0);
        } else {
            auto v = f();
            record(stage, t0);
            return v;
        }
    }

    void write_manifest(const std::string& path) {
        ordered_json m = identity();
        m["digest"] = digest();
        ordered_json outs = ordered_json::array();
        for (const auto& p : outputs_) outs.push_back({{"path", p}, {"digest", digest_file(p)}});
        m["outputs"] = outs;
        m["timing_ms"] = timing_;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Failure{kExitInvalid, "cannot write '" + path + "'"};
        out << m.dump(2) << '\n';
    }

private:
    ordered_json identity() const {
        return {{"tool", "ebmut"}, {"version", ebm_version()}, {"command", command_},
                {"config", config_},  {"seed", seed_},           {"inputs", inputs_}};
    }
    void record(const std::string& stage, std::chrono::steady_clock::time_point t0) {
        timing_[stage] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }

    std::string command_;
    ordered_json inputs_ = ordered_json::array();
    ordered_json config_ = ordered_json::object();
    std::uint64_t seed_ = 0;
    std::vector<std::string> outputs_;
    ordered_json timing_ = ordered_json::object();
    std::string digest_;
};

// Options shared by fit and call, stored as text and forwarded to the config
// only when given on the command line.
struct ModelFlags {
    std::string method;
    std::string quantile;
    std::string pseudocount;
};

struct CallFlags {
    std::string fdr;
    std::string delta;
    std::string mode;
    std::string empirical_null;
    std::string df;
    bool literal_delta = false;
};

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string out_dir = ".";
    std::string prefix;
    std::string manifest;
};

void set_if(ebm_config* c, const char* key, const std::string& value) {
    if (!value.empty()) check(ebm_config_set(c, key, value.c_str()));
}

// defaults < EBMUT_SEED < --config < flags
void build_config(Config& cfg, const Common& common, const ModelFlags& mf, const CallFlags* cf) {
    check(ebm_config_new(cfg.out()));
    if (const auto s = env_seed()) check(ebm_config_set(cfg.get(), "seed", std::to_string(*s).c_str()));
    if (!common.config_path.empty()) check(ebm_config_load_json(cfg.get(), common.config_path.c_str()));
    if (common.seed) check(ebm_config_set(cfg.get(), "seed", std::to_string(*common.seed).c_str()));
    set_if(cfg.get(), "method", mf.method);
    set_if(cfg.get(), "region_quantile", mf.quantile);
    set_if(cfg.get(), "pseudocount", mf.pseudocount);
    if (cf) {
        set_if(cfg.get(), "fdr_threshold", cf->fdr);
        set_if(cfg.get(), "delta_threshold", cf->delta);
        set_if(cfg.get(), "mode", cf->mode);
        set_if(cfg.get(), "empirical_null", cf->empirical_null);
        set_if(cfg.get(), "df", cf->df);
        if (cf->literal_delta) check(ebm_config_set(cfg.get(), "literal_delta", "true"));
    }
    check(ebm_config_validate(cfg.get()));
}

ordered_json config_snapshot(const Config& cfg) {
    char* text = nullptr;
    check(ebm_config_to_json(cfg.get(), &text));
    return ordered_json::parse(take_string(text));
}

std::string out_path(const Common& c, const std::string& suffix) {
    fs::create_directories(c.out_dir);
    return (fs::path(c.out_dir) / (c.prefix + suffix)).string();
}

std::string manifest_path(const Common& c) {
    return c.manifest.empty() ? out_path(c, ".manifest.json") : c.manifest;
}

void add_common(CLI::App* sub, Common& c, bool outputs) {
    sub->add_option("--config", c.config_path, "Flat JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "Random seed (default: EBMUT_SEED, else 0)");
    sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
    if (outputs) {
        sub->add_option("--out-dir", c.out_dir, "Output directory");
        sub->add_option("--prefix", c.prefix, "Output file prefix");
        sub->add_option("--manifest", c.manifest, "Manifest path (default <prefix>.manifest.json)");
    }
}

void add_model_flags(CLI::App* sub, ModelFlags& f) {
    sub->add_option("--method", f.method, "Noise SD estimator: mle or moments");
    sub->add_option("--quantile", f.quantile, "Quantile of region-wise SDs");
    sub->add_option("--pseudocount", f.pseudocount, "Pseudocount for logit rates");
}

struct Inputs {
    std::string ref;
    std::string clinical;
    std::string matched;
    std::string regions;
};

void add_inputs(CLI::App* sub, Inputs& in, bool clinical) {
    auto* ref = sub->add_option("--ref", in.ref, "Reference (unmatched) pileup TSV");
    auto* matched = sub->add_option("--matched", in.matched, "Matched normal/tumor pileup TSV");
    ref->excludes(matched);
    if (clinical) sub->add_option("--clinical", in.clinical, "Clinical pileup TSV")->needs(ref);
    sub->add_option("--regions", in.regions, "Region map TSV");
}

void require_inputs(const Inputs& in, bool clinical) {
    if (in.ref.empty() && in.matched.empty()) throw Failure{kExitInvalid, "one of --ref or --matched is required"};
    if (clinical && !in.ref.empty() && in.clinical.empty()) {
        throw Failure{kExitInvalid, "--clinical is required with --ref"};
    }
}

// ---------------------------------------------------------------------------

int cmd_fit(const Common& common, const ModelFlags& mf, const Inputs& in, const std::string& out) {
    require_inputs(in, false);
    Config cfg;
    build_config(cfg, common, mf, nullptr);
    const bool matched = !in.matched.empty();
    const std::string& data_path = matched ? in.matched : in.ref;

    Run run("fit");
    run.input(matched ? "matched" : "reference", data_path);
    if (!in.regions.empty()) run.input("regions", in.regions);
    const ordered_json snap = config_snapshot(cfg);
    run.settings(snap, snap["seed"].get<std::uint64_t>());

    Pileup data;
    run.timed("load", [&] { check(ebm_pileup_load(data_path.c_str(), matched ? 1 : 0, data.out())); });
    Regions regions;
    if (!in.regions.empty()) check(ebm_regions_load(in.regions.c_str(), data.get(), regions.out()));
    Model model;
    run.timed("fit", [&] {
        if (matched) check(ebm_fit_matched(data.get(), cfg.get(), regions.get(), model.out()));
        else check(ebm_fit_reference(data.get(), cfg.get(), regions.get(), model.out()));
    });
    check(ebm_model_save(model.get(), out.c_str()));
    run.output(out);

    std::size_t samples = 0;
    check(ebm_model_info(model.get(), nullptr, &samples, nullptr));
    for (std::size_t j = 0; j < samples; ++j) {
        ebm_sample_params p;
        check(ebm_model_sample(model.get(), j, &p));
        if (matched) {
            std::printf("%s delta=%.4f sigma=%.4f eta=%.4f tau=%.4f\n", p.name, p.delta, p.sigma, p.eta, p.tau);
        } else {
            std::printf("%s delta=%.4f sigma=%.4f\n", p.name, p.delta, p.sigma);
        }
    }
    run.write_manifest(common.manifest.empty() ? out + ".manifest.json" : common.manifest);
    return kExitOk;
}

void print_detection(const ebm_result* res, const std::string& truth, double configured) {
    std::vector<double> thresholds = {0.1, 0.01};
    if (configured != 0.1 && configured != 0.01) thresholds.insert(thresholds.begin(), configured);
    std::string line = "summary";
    for (double t : thresholds) {
        ebm_detection d;
        check(ebm_result_detection(res, truth.c_str(), t, &d));
        char buf[128];
        std::snprintf(buf, sizeof buf, " fdr<=%g TP=%zu/%zu FP=%zu", t, d.true_positives, d.planted,
                      d.false_positives);
        line += buf;
    }
    std::puts(line.c_str());
}

int cmd_call(const Common& common, const ModelFlags& mf, const CallFlags& cf, const Inputs& in,
             const std::string& model_path, const std::string& truth) {
    require_inputs(in, true);
    Config cfg;
    build_config(cfg, common, mf, &cf);
    const bool matched = !in.matched.empty();

    Run run("call");
    if (matched) {
        run.input("matched", in.matched);
    } else {
        run.input("reference", in.ref);
        run.input("clinical", in.clinical);
    }
    if (!model_path.empty()) run.input("model", model_path);
    if (!in.regions.empty()) run.input("regions", in.regions);
    if (!truth.empty()) run.input("truth", truth);
    const ordered_json snap = config_snapshot(cfg);
    run.settings(snap, snap["seed"].get<std::uint64_t>());
    const std::string digest = run.digest();

    Pileup ref, clin, pair;
    run.timed("load", [&] {
        if (matched) {
            check(ebm_pileup_load(in.matched.c_str(), 1, pair.out()));
        } else {
            check(ebm_pileup_load(in.ref.c_str(), 0, ref.out()));
            check(ebm_pileup_load(in.clinical.c_str(), 0, clin.out()));
        }
    });
    Regions regions;
    if (!in.regions.empty()) {
        check(ebm_regions_load(in.regions.c_str(), matched ? pair.get() : ref.get(), regions.out()));
    }
    Model model;
    if (!model_path.empty()) check(ebm_model_load(model_path.c_str(), model.out()));

    Result res;
    run.timed("call", [&] {
        if (matched) check(ebm_call_matched(pair.get(), cfg.get(), model.get(), regions.get(), res.out()));
        else check(ebm_call_unmatched(ref.get(), clin.get(), cfg.get(), model.get(), regions.get(), res.out()));
    });

    run.timed("write", [&] {
        const std::string calls = out_path(common, ".calls.csv");
        const std::string fdr = out_path(common, ".fdr.csv");
        const std::string hist = out_path(common, ".histogram.csv");
        const std::string qq = out_path(common, ".qq.csv");
        const std::string fitted = out_path(common, ".model.json");
        check(ebm_result_write_calls(res.get(), calls.c_str(), digest.c_str()));
        check(ebm_result_write_fdr(res.get(), fdr.c_str(), digest.c_str()));
        check(ebm_result_write_histogram(res.get(), hist.c_str(), digest.c_str()));
        check(ebm_result_write_qq(res.get(), qq.c_str(), digest.c_str()));
        check(ebm_result_save_model(res.get(), fitted.c_str()));
        for (const auto& p : {calls, fdr, hist, qq, fitted}) run.output(p);
    });

    std::size_t records = 0, called = 0, notes = 0;
    check(ebm_result_counts(res.get(), &records, &called));
    double slope_r = 1.0, slope_rt = 1.0;
    check(ebm_result_qq_slopes(res.get(), &slope_r, &slope_rt));
    std::printf("records=%zu called=%zu qq_slope_r=%.4f qq_slope_r_tilde=%.4f\n", records, called, slope_r, slope_rt);
    check(ebm_result_note_count(res.get(), &notes));
    for (std::size_t k = 0; k < notes; ++k) {
        const char* note = nullptr;
        check(ebm_result_note(res.get(), k, &note));
        std::fprintf(stderr, "note: %s\n", note);
    }
    if (!truth.empty()) print_detection(res.get(), truth, snap["fdr_threshold"].get<double>());
    run.write_manifest(manifest_path(common));
    return kExitOk;
}

int cmd_simulate(const Common& common, const std::string& preset, const std::string& scenario_path) {
    if (preset.empty() == scenario_path.empty()) {
        throw Failure{kExitInvalid, std::string("give exactly one of --preset or --scenario (presets: ") +
                                        ebm_scenario_presets() + ")"};
    }
    std::uint64_t seed = common.seed ? *common.seed : env_seed().value_or(0);
    Scenario scenario;
    if (!preset.empty()) check(ebm_scenario_preset(preset.c_str(), seed, scenario.out()));
    else check(ebm_scenario_load(scenario_path.c_str(), seed, scenario.out()));
    char* text = nullptr;
    check(ebm_scenario_to_json(scenario.get(), &text));
    const std::string scenario_json = take_string(text);
    const ordered_json snap = ordered_json::parse(scenario_json);
    seed = snap["seed"].get<std::uint64_t>();

    Common c = common;
    if (c.prefix.empty()) c.prefix = snap["name"].get<std::string>();

    Run run("simulate");
    if (!scenario_path.empty()) run.input("scenario", scenario_path);
    run.settings(snap, seed);
    const std::string digest = run.digest();

    Sim sim;
    run.timed("simulate", [&] { check(ebm_simulate(scenario.get(), sim.out())); });
    int matched = 0;
    check(ebm_sim_is_matched(sim.get(), &matched));

    run.timed("write", [&] {
        auto save = [&](ebm_status (*get)(const ebm_sim*, ebm_pileup**), const std::string& suffix) {
            Pileup p;
            check(get(sim.get(), p.out()));
            const std::string path = out_path(c, suffix);
            check(ebm_pileup_save(p.get(), path.c_str()));
            run.output(path);
            std::size_t positions = 0, samples = 0;
            check(ebm_pileup_shape(p.get(), &positions, &samples, nullptr));
            std::printf("%s positions=%zu samples=%zu\n", path.c_str(), positions, samples);
        };
        if (matched) {
            save(ebm_sim_matched, ".matched.tsv");
        } else {
            save(ebm_sim_reference, ".ref.tsv");
            save(ebm_sim_clinical, ".clinical.tsv");
        }
        const std::string truth = out_path(c, ".truth.csv");
        const std::string fp = digest_text(scenario_json);
        check(ebm_sim_write_truth(sim.get(), truth.c_str(), digest.c_str(), fp.c_str(), seed));
        run.output(truth);
        const std::string scen = out_path(c, ".scenario.json");
        std::ofstream(scen, std::ios::binary) << scenario_json;
        run.output(scen);
        std::size_t planted = 0;
        check(ebm_sim_truth_count(sim.get(), &planted));
        std::printf("%s planted=%zu\n", truth.c_str(), planted);
    });
    run.write_manifest(manifest_path(c));
    return kExitOk;
}

int cmd_diagnose(const Common& common, const std::string& table, int bins) {
    Common c = common;
    if (c.prefix.empty()) c.prefix = fs::path(table).stem().string();
    const std::uint64_t seed = common.seed ? *common.seed : env_seed().value_or(0);

    Run run("diagnose");
    run.input("fdr_table", table);
    run.settings({{"bins", bins}}, seed);
    const std::string digest = run.digest();
    const std::string fp = digest_text(std::to_string(bins));

    const std::string hist = out_path(c, ".histogram.csv");
    const std::string qq = out_path(c, ".qq.csv");
    double slope_r = 1.0, slope_rt = 1.0;
    run.timed("diagnose", [&] {
        check(ebm_diagnose(table.c_str(), bins, hist.c_str(), qq.c_str(), digest.c_str(), fp.c_str(), seed, &slope_r,
                           &slope_rt));
    });
    run.output(hist);
    run.output(qq);
    std::printf("qq_slope_r=%.4f qq_slope_r_tilde=%.4f\n", slope_r, slope_rt);
    run.write_manifest(manifest_path(c));
    return kExitOk;
}

int cmd_verify(const std::vector<std::string>& pair, std::size_t count, std::uint64_t seed, double tol) {
    if (!pair.empty()) {
        ebm_theorem t;
        check(ebm_verify_pair(pair[0].c_str(), pair[1].c_str(), &t));
        std::printf("kl(H||U)=%.10g kl(G||F)=%.10g diff=%.3g\n", t.kl_r_uniform, t.kl_true_assumed,
                    std::fabs(t.kl_r_uniform - t.kl_true_assumed));
        std::printf("kl(U||H)=%.10g kl(F||G)=%.10g diff=%.3g\n", t.kl_uniform_r, t.kl_assumed_true,
                    std::fabs(t.kl_uniform_r - t.kl_assumed_true));
        std::printf("kolmogorov(H,U)=%.7f kolmogorov(F,G)=%.7f diff=%.3g\n", t.ks_r, t.ks_assumed_true,
                    std::fabs(t.ks_r - t.ks_assumed_true));
        std::printf("max_deviation=%.3g\n", t.max_deviation);
        return t.max_deviation < tol ? kExitOk : kExitNumeric;
    }
    double worst = 0.0;
    check(ebm_verify_suite(seed, count, &worst));
    const bool ok = worst < tol;
    std::printf("pairs=%zu max_deviation=%.3g tolerance=%.0e %s\n", count, worst, tol, ok ? "ok" : "FAILED");
    return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Empirical-Bayes detection of low-prevalence mutations in pileup counts"};
    app.set_version_flag("--version", ebm_version());
    app.require_subcommand(1);

    Common common;
    ModelFlags mflags;
    CallFlags cflags;
    Inputs inputs;

    auto* fit = app.add_subcommand("fit", "Fit the error model and write model JSON");
    add_common(fit, common, false);
    fit->add_option("--manifest", common.manifest, "Manifest path (default <out>.manifest.json)");
    add_model_flags(fit, mflags);
    add_inputs(fit, inputs, false);
    std::string fit_out;
    fit->add_option("--out", fit_out, "Model JSON path")->required();

    auto* call = app.add_subcommand("call", "Call mutations and write calls, fdr table and diagnostics");
    add_common(call, common, true);
    add_model_flags(call, mflags);
    add_inputs(call, inputs, true);
    std::string model_path, truth;
    call->add_option("--model", model_path, "Previously fitted model JSON");
    call->add_option("--truth", truth, "Truth CSV; prints a detection summary");
    call->add_option("--fdr", cflags.fdr, "Local fdr threshold");
    call->add_option("--delta", cflags.delta, "Effect threshold |delta_hat| (matched)");
    call->add_option("--mode", cflags.mode, "P-value mode: randomized or mid_p");
    call->add_option("--empirical-null", cflags.empirical_null, "on, off or auto");
    call->add_option("--df", cflags.df, "Marginal density spline degrees of freedom");
    call->add_flag("--literal-delta", cflags.literal_delta, "Scale the rate difference by fdr instead of 1 - fdr");

    auto* sim = app.add_subcommand("simulate", "Simulate pileups with planted mutations");
    add_common(sim, common, true);
    std::string preset, scenario;
    sim->add_option("--preset", preset, "Preset scenario (virus, tumor-small)");
    sim->add_option("--scenario", scenario, "Scenario JSON");

    auto* diag = app.add_subcommand("diagnose", "Histogram and QQ series from an fdr table");
    add_common(diag, common, true);
    std::string table;
    int bins = 50;
    diag->add_option("--fdr-table", table, "fdr CSV written by call")->required();
    diag->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber);

    auto* verify = app.add_subcommand("verify-theorem", "Check the randomized p-value distance identities");
    std::vector<std::string> pair;
    std::size_t count = 50;
    std::uint64_t vseed = 0;
    double tol = 1e-9;
    verify->add_option("--pair", pair, "Assumed and true law, e.g. poisson:5 poisson:10")->expected(2);
    verify->add_option("--count", count, "Random pairs in the default suite");
    verify->add_option("--seed", vseed, "Seed of the random suite");
    verify->add_option("--tolerance", tol, "Largest accepted deviation");
    verify->add_option("--threads", common.threads, "Worker threads (0 = all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalid;
    }

    try {
        ebm_set_threads(common.threads);
        if (fit->parsed()) return cmd_fit(common, mflags, inputs, fit_out);
        if (call->parsed()) {
            if (common.prefix.empty()) common.prefix = "ebmut";
            return cmd_call(common, mflags, cflags, inputs, model_path, truth);
        }
        if (sim->parsed()) return cmd_simulate(common, preset, scenario);
        if (diag->parsed()) return cmd_diagnose(common, table, bins);
        if (verify->parsed()) return cmd_verify(pair, count, vseed, tol);
    } catch (const Failure& f) {
        std::fprintf(stderr, "ebmut: error: %s\n", f.message.c_str());
        return f.code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ebmut: error: %s\n", e.what());
        return kExitInvalid;
    }
    return kExitInvalid;
}
