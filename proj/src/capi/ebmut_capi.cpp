#include "ebmut/ebmut.h"

#include "caller.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "pileup.hpp"
#include "simgen.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

using namespace ebmut;

struct ebm_pileup {
    std::variant<PileupMatrix, MatchedPileup> data;
};

struct ebm_regions {
    RegionMap map;
};

struct ebm_config {
    PipelineConfig cfg;
};

struct ebm_model {
    ModelDocument doc;
};

struct ebm_result {
    CallResult result;
    PipelineConfig cfg;
    bool matched = false;
    std::vector<std::string> reasons;
};

struct ebm_scenario {
    SimScenario scenario;
};

struct ebm_sim {
    SimResult sim;
    std::vector<PositionId> positions;
};

namespace {

thread_local std::string g_last_error;

ebm_status fail(ebm_status s, std::string msg) {
    g_last_error = std::move(msg);
    return s;
}

template <class F>
ebm_status guarded(F&& f) {
    try {
        g_last_error.clear();
        f();
        return EBM_OK;
    } catch (const IoError& e) {
        return fail(EBM_ERR_IO, e.what());
    } catch (const ValidationError& e) {
        return fail(EBM_ERR_VALIDATION, e.what());
    } catch (const NumericError& e) {
        return fail(EBM_ERR_NUMERIC, e.what());
    } catch (const std::bad_alloc&) {
        return fail(EBM_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(EBM_ERR_INTERNAL, e.what());
    }
}

#define EBM_REQUIRE(cond, what)                                  \
    do {                                                         \
        if (!(cond)) return fail(EBM_ERR_ARGUMENT, (what));      \
    } while (0)

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void copy_hex(std::uint64_t v, char out[17]) {
    const std::string h = hex64(v);
    std::memcpy(out, h.c_str(), 17);
}

std::optional<OutputHeader> make_header(const char* digest, const PipelineConfig& cfg) {
    if (!digest) return std::nullopt;
    return OutputHeader{digest, config_fingerprint(cfg), cfg.seed};
}

template <class W>
void write_to(const char* path, W&& writer) {
    auto out = open_output(path);
    writer(out);
    out.flush();
    if (!out) throw IoError(std::string("failed writing '") + path + "'");
}

const std::vector<PositionId>& result_positions(const ebm_result* r) {
    if (r->result.matched_model) return r->result.matched_model->base.positions;
    return r->result.unmatched_model->positions;
}

}  // namespace

extern "C" {

const char* ebm_version(void) { return kToolVersion; }

const char* ebm_last_error(void) { return g_last_error.c_str(); }

void ebm_set_threads(unsigned n) { set_thread_limit(n); }

void ebm_string_free(char* s) { std::free(s); }

// ---- pileups --------------------------------------------------------------

ebm_status ebm_pileup_load(const char* path, int matched, ebm_pileup** out) {
    EBM_REQUIRE(path && out, "null argument");
    return guarded([&] {
        auto data = load_pileup(path, matched ? PileupFormat::matched : PileupFormat::unmatched);
        *out = new ebm_pileup{std::move(data)};
    });
}

ebm_status ebm_pileup_save(const ebm_pileup* p, const char* path) {
    EBM_REQUIRE(p && path, "null argument");
    return guarded([&] {
        write_to(path, [&](std::ostream& o) {
            if (const auto* m = std::get_if<PileupMatrix>(&p->data)) write_pileup(o, *m);
            else write_matched_pileup(o, std::get<MatchedPileup>(p->data));
        });
    });
}

void ebm_pileup_free(ebm_pileup* p) { delete p; }

ebm_status ebm_pileup_shape(const ebm_pileup* p, size_t* positions, size_t* samples, int* matched) {
    EBM_REQUIRE(p, "null pileup");
    const auto* m = std::get_if<PileupMatrix>(&p->data);
    const PileupMatrix& base = m ? *m : std::get<MatchedPileup>(p->data).normal;
    if (positions) *positions = base.num_positions();
    if (samples) *samples = base.num_samples();
    if (matched) *matched = m ? 0 : 1;
    return EBM_OK;
}

ebm_status ebm_pileup_error_rate(const ebm_pileup* p, size_t i, size_t j, int tumor, double* rate, int* defined) {
    EBM_REQUIRE(p && rate && defined, "null argument");
    const PileupMatrix* m = std::get_if<PileupMatrix>(&p->data);
    if (!m) {
        const auto& mp = std::get<MatchedPileup>(p->data);
        m = tumor ? &mp.tumor : &mp.normal;
    } else {
        EBM_REQUIRE(!tumor, "unmatched pileup has no tumor matrix");
    }
    EBM_REQUIRE(i < m->num_positions() && j < m->num_samples(), "index out of range");
    const auto v = m->observed_error_rate(i, j);
    *defined = v ? 1 : 0;
    if (v) *rate = *v;
    return EBM_OK;
}

ebm_status ebm_regions_load(const char* path, const ebm_pileup* p, ebm_regions** out) {
    EBM_REQUIRE(path && p && out, "null argument");
    return guarded([&] {
        const auto* m = std::get_if<PileupMatrix>(&p->data);
        const PileupMatrix& base = m ? *m : std::get<MatchedPileup>(p->data).normal;
        *out = new ebm_regions{load_region_map(path, base)};
    });
}

void ebm_regions_free(ebm_regions* r) { delete r; }

// ---- configuration --------------------------------------------------------

ebm_status ebm_config_new(ebm_config** out) {
    EBM_REQUIRE(out, "null argument");
    *out = new ebm_config{};
    return EBM_OK;
}

void ebm_config_free(ebm_config* c) { delete c; }

ebm_status ebm_config_set(ebm_config* c, const char* key, const char* value) {
    EBM_REQUIRE(c && key && value, "null argument");
    return guarded([&] {
        nlohmann::json v;
        try {
            v = nlohmann::json::parse(value);
            if (!v.is_number() && !v.is_boolean()) v = std::string(value);
        } catch (const nlohmann::json::parse_error&) {
            v = std::string(value);
        }
        nlohmann::json obj = {{key, v}};
        PipelineConfig next = c->cfg;
        apply_config_json(next, obj.dump(), std::string("--") + key);
        next.validate();
        c->cfg = next;
    });
}

ebm_status ebm_config_load_json(ebm_config* c, const char* path) {
    EBM_REQUIRE(c && path, "null argument");
    return guarded([&] {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError(std::string("cannot open '") + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        PipelineConfig next = c->cfg;
        apply_config_json(next, ss.str(), path);
        next.validate();
        c->cfg = next;
    });
}

ebm_status ebm_config_to_json(const ebm_config* c, char** out) {
    EBM_REQUIRE(c && out, "null argument");
    return guarded([&] { *out = dup_string(config_to_json(c->cfg)); });
}

ebm_status ebm_config_fingerprint(const ebm_config* c, char out[17]) {
    EBM_REQUIRE(c && out, "null argument");
    return guarded([&] { std::memcpy(out, config_fingerprint(c->cfg).c_str(), 17); });
}

ebm_status ebm_config_validate(const ebm_config* c) {
    EBM_REQUIRE(c, "null config");
    return guarded([&] { c->cfg.validate(); });
}

// ---- error model ----------------------------------------------------------

ebm_status ebm_fit_reference(const ebm_pileup* reference, const ebm_config* c, const ebm_regions* regions,
                             ebm_model** out) {
    EBM_REQUIRE(reference && c && out, "null argument");
    const auto* m = std::get_if<PileupMatrix>(&reference->data);
    EBM_REQUIRE(m, "reference fit needs an unmatched pileup");
    return guarded([&] {
        c->cfg.validate();
        ModelDocument doc;
        doc.unmatched = fit_reference(*m, c->cfg.fit, regions ? &regions->map : nullptr);
        *out = new ebm_model{std::move(doc)};
    });
}

ebm_status ebm_fit_matched(const ebm_pileup* matched, const ebm_config* c, const ebm_regions* regions,
                           ebm_model** out) {
    EBM_REQUIRE(matched && c && out, "null argument");
    const auto* m = std::get_if<MatchedPileup>(&matched->data);
    EBM_REQUIRE(m, "matched fit needs a matched pileup");
    return guarded([&] {
        c->cfg.validate();
        ModelDocument doc;
        doc.matched = fit_matched(*m, c->cfg.fit, regions ? &regions->map : nullptr);
        *out = new ebm_model{std::move(doc)};
    });
}

ebm_status ebm_model_load(const char* path, ebm_model** out) {
    EBM_REQUIRE(path && out, "null argument");
    return guarded([&] { *out = new ebm_model{load_model(path)}; });
}

ebm_status ebm_model_save(const ebm_model* m, const char* path) {
    EBM_REQUIRE(m && path, "null argument");
    return guarded([&] { save_model(path, m->doc); });
}

void ebm_model_free(ebm_model* m) { delete m; }

static const ErrorModelParams& model_base(const ebm_model* m) {
    return m->doc.matched ? m->doc.matched->base : *m->doc.unmatched;
}

ebm_status ebm_model_info(const ebm_model* m, size_t* positions, size_t* samples, int* matched) {
    EBM_REQUIRE(m, "null model");
    const auto& b = model_base(m);
    if (positions) *positions = b.positions.size();
    if (samples) *samples = b.samples.size();
    if (matched) *matched = m->doc.matched ? 1 : 0;
    return EBM_OK;
}

ebm_status ebm_model_sample(const ebm_model* m, size_t j, ebm_sample_params* out) {
    EBM_REQUIRE(m && out, "null argument");
    const auto& b = model_base(m);
    EBM_REQUIRE(j < b.samples.size(), "sample index out of range");
    out->name = b.samples[j].c_str();
    out->delta = b.delta[j];
    out->sigma = b.sigma[j];
    out->eta = m->doc.matched ? m->doc.matched->eta[j] : 0.0;
    out->tau = m->doc.matched ? m->doc.matched->tau[j] : 0.0;
    return EBM_OK;
}

ebm_status ebm_model_mu(const ebm_model* m, size_t i, double* mu, int* estimable) {
    EBM_REQUIRE(m && mu && estimable, "null argument");
    const auto& b = model_base(m);
    EBM_REQUIRE(i < b.positions.size(), "position index out of range");
    *mu = b.mu[i];
    *estimable = b.estimable[i] ? 1 : 0;
    return EBM_OK;
}

// ---- calling --------------------------------------------------------------

static ebm_result* wrap_result(CallResult res, const PipelineConfig& cfg, bool matched) {
    auto* r = new ebm_result{std::move(res), cfg, matched, {}};
    r->reasons.reserve(r->result.records.size());
    for (const auto& rec : r->result.records) r->reasons.push_back(rec.reason_string());
    return r;
}

ebm_status ebm_call_unmatched(const ebm_pileup* reference, const ebm_pileup* clinical, const ebm_config* c,
                              const ebm_model* model, const ebm_regions* regions, ebm_result** out) {
    EBM_REQUIRE(reference && clinical && c && out, "null argument");
    const auto* ref = std::get_if<PileupMatrix>(&reference->data);
    const auto* clin = std::get_if<PileupMatrix>(&clinical->data);
    EBM_REQUIRE(ref && clin, "unmatched calling needs unmatched pileups");
    EBM_REQUIRE(!model || model->doc.unmatched, "model is not an unmatched model");
    return guarded([&] {
        c->cfg.validate();
        auto res = call_unmatched(*ref, *clin, c->cfg, model ? &*model->doc.unmatched : nullptr,
                                  regions ? &regions->map : nullptr);
        *out = wrap_result(std::move(res), c->cfg, false);
    });
}

ebm_status ebm_call_matched(const ebm_pileup* matched, const ebm_config* c, const ebm_model* model,
                            const ebm_regions* regions, ebm_result** out) {
    EBM_REQUIRE(matched && c && out, "null argument");
    const auto* data = std::get_if<MatchedPileup>(&matched->data);
    EBM_REQUIRE(data, "matched calling needs a matched pileup");
    EBM_REQUIRE(!model || model->doc.matched, "model is not a matched model");
    return guarded([&] {
        c->cfg.validate();
        auto res = call_matched(*data, c->cfg, model ? &*model->doc.matched : nullptr,
                                regions ? &regions->map : nullptr);
        *out = wrap_result(std::move(res), c->cfg, true);
    });
}

void ebm_result_free(ebm_result* r) { delete r; }

ebm_status ebm_result_counts(const ebm_result* r, size_t* records, size_t* called) {
    EBM_REQUIRE(r, "null result");
    if (records) *records = r->result.records.size();
    if (called) *called = r->result.num_called();
    return EBM_OK;
}

ebm_status ebm_result_record(const ebm_result* r, size_t k, ebm_record* out) {
    EBM_REQUIRE(r && out, "null argument");
    EBM_REQUIRE(k < r->result.records.size(), "record index out of range");
    const CallRecord& c = r->result.records[k];
    out->contig = c.position.contig.c_str();
    out->pos = c.position.coord;
    out->sample = c.sample.c_str();
    out->x = c.x ? *c.x : -1;
    out->n = c.n ? *c.n : -1;
    out->y = c.y;
    out->m = c.m;
    out->rate_normal = c.rate_normal;
    out->rate_tumor = c.rate_tumor;
    out->r = c.r;
    out->r_tilde = c.r_tilde;
    out->fdr = c.fdr;
    out->delta_hat = c.delta_hat;
    out->defined = c.defined ? 1 : 0;
    out->called = c.called ? 1 : 0;
    out->reasons = r->reasons[k].c_str();
    return EBM_OK;
}

ebm_status ebm_result_note_count(const ebm_result* r, size_t* count) {
    EBM_REQUIRE(r && count, "null argument");
    *count = r->result.notes.size();
    return EBM_OK;
}

ebm_status ebm_result_note(const ebm_result* r, size_t k, const char** out) {
    EBM_REQUIRE(r && out, "null argument");
    EBM_REQUIRE(k < r->result.notes.size(), "note index out of range");
    *out = r->result.notes[k].c_str();
    return EBM_OK;
}

ebm_status ebm_result_qq_slopes(const ebm_result* r, double* slope_r, double* slope_r_tilde) {
    EBM_REQUIRE(r, "null result");
    if (slope_r) *slope_r = r->result.diag.qq_slope_r;
    if (slope_r_tilde) *slope_r_tilde = r->result.diag.qq_slope_r_tilde;
    return EBM_OK;
}

ebm_status ebm_result_write_calls(const ebm_result* r, const char* path, const char* manifest_digest) {
    EBM_REQUIRE(r && path, "null argument");
    return guarded([&] {
        const auto h = make_header(manifest_digest, r->cfg);
        write_to(path, [&](std::ostream& o) { write_calls(o, r->result.records, h ? &*h : nullptr); });
    });
}

ebm_status ebm_result_write_fdr(const ebm_result* r, const char* path, const char* manifest_digest) {
    EBM_REQUIRE(r && path, "null argument");
    return guarded([&] {
        const auto h = make_header(manifest_digest, r->cfg);
        write_to(path, [&](std::ostream& o) { write_fdr_table(o, r->result.fdr.table, h ? &*h : nullptr); });
    });
}

ebm_status ebm_result_write_histogram(const ebm_result* r, const char* path, const char* manifest_digest) {
    EBM_REQUIRE(r && path, "null argument");
    return guarded([&] {
        const auto h = make_header(manifest_digest, r->cfg);
        write_to(path, [&](std::ostream& o) { write_histogram(o, r->result.diag, h ? &*h : nullptr); });
    });
}

ebm_status ebm_result_write_qq(const ebm_result* r, const char* path, const char* manifest_digest) {
    EBM_REQUIRE(r && path, "null argument");
    return guarded([&] {
        const auto h = make_header(manifest_digest, r->cfg);
        write_to(path, [&](std::ostream& o) { write_qq(o, r->result.diag, h ? &*h : nullptr); });
    });
}

ebm_status ebm_result_save_model(const ebm_result* r, const char* path) {
    EBM_REQUIRE(r && path, "null argument");
    return guarded([&] {
        ModelDocument doc;
        doc.unmatched = r->result.unmatched_model;
        doc.matched = r->result.matched_model;
        doc.empirical_nulls = r->result.fdr.empirical_nulls;
        if (r->result.fdr.marginal_fitted) doc.marginal = r->result.fdr.marginal;
        save_model(path, doc);
    });
}

ebm_status ebm_result_detection(const ebm_result* r, const char* truth_path, double fdr_threshold,
                                ebm_detection* out) {
    EBM_REQUIRE(r && truth_path && out, "null argument");
    return guarded([&] {
        const TruthTable truth = load_truth(truth_path, result_positions(r));
        const DetectionSummary s =
            summarize_detection(r->result.records, truth, fdr_threshold, r->matched, r->cfg.delta_threshold);
        *out = {s.fdr_threshold, s.planted, s.true_positives, s.false_positives};
    });
}

// ---- simulation -----------------------------------------------------------

ebm_status ebm_scenario_preset(const char* name, uint64_t seed, ebm_scenario** out) {
    EBM_REQUIRE(name && out, "null argument");
    return guarded([&] { *out = new ebm_scenario{preset_scenario(name, seed)}; });
}

ebm_status ebm_scenario_load(const char* path, uint64_t default_seed, ebm_scenario** out) {
    EBM_REQUIRE(path && out, "null argument");
    return guarded([&] { *out = new ebm_scenario{load_scenario(path, default_seed)}; });
}

ebm_status ebm_scenario_to_json(const ebm_scenario* s, char** out) {
    EBM_REQUIRE(s && out, "null argument");
    return guarded([&] { *out = dup_string(scenario_to_json(s->scenario)); });
}

const char* ebm_scenario_presets(void) {
    static const std::string names = [] {
        std::string s;
        for (const auto& p : scenario_presets()) s += (s.empty() ? "" : ",") + p;
        return s;
    }();
    return names.c_str();
}

void ebm_scenario_free(ebm_scenario* s) { delete s; }

ebm_status ebm_simulate(const ebm_scenario* s, ebm_sim** out) {
    EBM_REQUIRE(s && out, "null argument");
    return guarded([&] {
        SimResult res = simulate(s->scenario);
        std::vector<PositionId> positions =
            res.matched ? res.matched->normal.positions() : res.reference->positions();
        *out = new ebm_sim{std::move(res), std::move(positions)};
    });
}

void ebm_sim_free(ebm_sim* sim) { delete sim; }

ebm_status ebm_sim_is_matched(const ebm_sim* sim, int* matched) {
    EBM_REQUIRE(sim && matched, "null argument");
    *matched = sim->sim.matched ? 1 : 0;
    return EBM_OK;
}

ebm_status ebm_sim_reference(const ebm_sim* sim, ebm_pileup** out) {
    EBM_REQUIRE(sim && out, "null argument");
    EBM_REQUIRE(sim->sim.reference, "simulation has no reference samples");
    return guarded([&] { *out = new ebm_pileup{*sim->sim.reference}; });
}

ebm_status ebm_sim_clinical(const ebm_sim* sim, ebm_pileup** out) {
    EBM_REQUIRE(sim && out, "null argument");
    EBM_REQUIRE(sim->sim.clinical, "simulation has no clinical samples");
    return guarded([&] { *out = new ebm_pileup{*sim->sim.clinical}; });
}

ebm_status ebm_sim_matched(const ebm_sim* sim, ebm_pileup** out) {
    EBM_REQUIRE(sim && out, "null argument");
    EBM_REQUIRE(sim->sim.matched, "simulation is not matched");
    return guarded([&] { *out = new ebm_pileup{*sim->sim.matched}; });
}

ebm_status ebm_sim_truth_count(const ebm_sim* sim, size_t* count) {
    EBM_REQUIRE(sim && count, "null argument");
    *count = sim->sim.truth.entries.size();
    return EBM_OK;
}

ebm_status ebm_sim_write_truth(const ebm_sim* sim, const char* path, const char* manifest_digest,
                               const char* fingerprint, uint64_t seed) {
    EBM_REQUIRE(sim && path, "null argument");
    return guarded([&] {
        std::optional<OutputHeader> h;
        if (manifest_digest) h = OutputHeader{manifest_digest, fingerprint ? fingerprint : "-", seed};
        write_to(path, [&](std::ostream& o) { write_truth(o, sim->sim.truth, h ? &*h : nullptr); });
    });
}

// ---- diagnostics and theorem ----------------------------------------------

ebm_status ebm_diagnose(const char* fdr_path, int bins, const char* histogram_path, const char* qq_path,
                        const char* manifest_digest, const char* fingerprint, uint64_t seed, double* slope_r,
                        double* slope_r_tilde) {
    EBM_REQUIRE(fdr_path, "null argument");
    EBM_REQUIRE(bins > 0, "bins must be positive");
    return guarded([&] {
        std::ifstream in(fdr_path);
        if (!in) throw IoError(std::string("cannot open '") + fdr_path + "'");
        const FdrTable table = read_fdr_table(in, fdr_path);
        const Diagnostics d = diagnostics(table, bins);
        std::optional<OutputHeader> h;
        if (manifest_digest) h = OutputHeader{manifest_digest, fingerprint ? fingerprint : "-", seed};
        if (histogram_path) write_to(histogram_path, [&](std::ostream& o) { write_histogram(o, d, h ? &*h : nullptr); });
        if (qq_path) write_to(qq_path, [&](std::ostream& o) { write_qq(o, d, h ? &*h : nullptr); });
        if (slope_r) *slope_r = d.qq_slope_r;
        if (slope_r_tilde) *slope_r_tilde = d.qq_slope_r_tilde;
    });
}

ebm_status ebm_verify_pair(const char* assumed, const char* truth, ebm_theorem* out) {
    EBM_REQUIRE(assumed && truth && out, "null argument");
    return guarded([&] {
        // Poisson truncation points differ; share the wider one so neither law
        // loses support the other has.
        const std::int64_t hi = std::max(parse_distribution(assumed).hi(), parse_distribution(truth).hi());
        const TheoremCheck t = verify_theorem(parse_distribution(assumed, hi), parse_distribution(truth, hi));
        *out = {t.kl_r_uniform, t.kl_true_assumed, t.kl_uniform_r, t.kl_assumed_true,
                t.ks_r,         t.ks_assumed_true, t.max_deviation()};
    });
}

ebm_status ebm_verify_suite(uint64_t seed, size_t count, double* max_deviation) {
    EBM_REQUIRE(max_deviation, "null argument");
    return guarded([&] {
        double worst = 0.0;
        for (const auto& [f, g] : random_distribution_pairs(seed, count)) {
            worst = std::max(worst, verify_theorem(f, g).max_deviation());
        }
        *max_deviation = worst;
    });
}

// ---- digests --------------------------------------------------------------

ebm_status ebm_digest_file(const char* path, char out[17]) {
    EBM_REQUIRE(path && out, "null argument");
    return guarded([&] { copy_hex(file_digest(path), out); });
}

void ebm_digest_bytes(const void* data, size_t len, char out[17]) {
    copy_hex(fnv1a64(std::string_view(static_cast<const char*>(data), len)), out);
}

}  // extern "C"
