#include "caller.hpp"

#include "errors.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace ebmut {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

FdrOptions fdr_options(const PipelineConfig& cfg, bool empirical_null) {
    FdrOptions o;
    o.mode = cfg.mode;
    o.seed = cfg.seed;
    o.empirical_null = empirical_null;
    o.empirical_null_min = cfg.empirical_null_min;
    o.marginal.df = cfg.marginal_df;
    o.marginal.bins = cfg.marginal_bins;
    o.marginal.min_count = cfg.marginal_min;
    return o;
}

std::string obs_id(const PositionId& p, const std::string& sample) { return p.label() + ":" + sample; }

bool decision(const CallRecord& r, const PipelineConfig& cfg, bool matched) {
    return r.defined && r.fdr <= cfg.fdr_threshold && (!matched || std::fabs(r.delta_hat) >= cfg.delta_threshold);
}

void finish_records(CallResult& res, const PipelineConfig& cfg, bool matched) {
    for (auto& r : res.records) {
        r.called = decision(r, cfg, matched);
        if (!r.defined) continue;
        if (r.fdr > cfg.fdr_threshold) r.reasons.push_back("fdr_above_threshold");
        if (matched && std::fabs(r.delta_hat) < cfg.delta_threshold) r.reasons.push_back("effect_below_threshold");
        if (r.called) r.reasons.push_back("pass");
    }
    check_decisions(res.records, cfg, matched);
    const bool any = std::any_of(res.records.begin(), res.records.end(), [](const CallRecord& r) { return r.defined; });
    if (any) {
        res.diag = diagnostics(res.fdr.table, cfg.histogram_bins);
    } else {
        res.diag.bins = cfg.histogram_bins;
        res.diag.r_hist.assign(static_cast<std::size_t>(cfg.histogram_bins), 0);
        res.diag.r_tilde_hist = res.diag.r_hist;
        res.notes.push_back("no observation has a defined p-value; diagnostics are empty");
    }
    res.notes.insert(res.notes.end(), res.fdr.notes.begin(), res.fdr.notes.end());
}

double rate(std::int64_t x, std::int64_t n) {
    return n > 0 ? static_cast<double>(x) / static_cast<double>(n) : kNaN;
}

}  // namespace

const char* to_string(EmpiricalNullMode m) {
    switch (m) {
    case EmpiricalNullMode::off: return "off";
    case EmpiricalNullMode::on: return "on";
    case EmpiricalNullMode::automatic: return "auto";
    }
    return "auto";
}

EmpiricalNullMode parse_empirical_null_mode(const std::string& s) {
    if (s == "off") return EmpiricalNullMode::off;
    if (s == "on") return EmpiricalNullMode::on;
    if (s == "auto") return EmpiricalNullMode::automatic;
    throw ValidationError("unknown empirical-null mode '" + s + "' (expected on, off or auto)");
}

const char* to_string(PValueMode m) { return m == PValueMode::mid_p ? "mid_p" : "randomized"; }

PValueMode parse_pvalue_mode(const std::string& s) {
    if (s == "randomized") return PValueMode::randomized;
    if (s == "mid_p") return PValueMode::mid_p;
    throw ValidationError("unknown p-value mode '" + s + "' (expected randomized or mid_p)");
}

void PipelineConfig::validate() const {
    if (!(fdr_threshold > 0.0 && fdr_threshold <= 1.0)) throw ValidationError("fdr threshold must lie in (0, 1]");
    if (!(delta_threshold > 0.0 && delta_threshold <= 1.0)) throw ValidationError("delta threshold must lie in (0, 1]");
    if (marginal_df < 3 || marginal_df > 15) throw ValidationError("marginal df must lie in [3, 15]");
    if (marginal_bins < 10) throw ValidationError("marginal bins must be at least 10");
    if (histogram_bins < 1) throw ValidationError("histogram bins must be positive");
    if (!(fit.region_quantile >= 0.5 && fit.region_quantile < 1.0)) throw ValidationError("region quantile must lie in [0.5, 1)");
    if (!(fit.pseudocount > 0.0)) throw ValidationError("pseudocount must be positive");
    if (fit.trim_mads < 0.0) throw ValidationError("trim threshold must be nonnegative");
}

std::string CallRecord::reason_string() const {
    std::string s;
    for (const auto& r : reasons) s += (s.empty() ? "" : ";") + r;
    return s;
}

std::size_t CallResult::num_called() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const CallRecord& r) { return r.called; }));
}

double qq_slope(std::span<const double> values) {
    std::vector<double> z(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) z[i] = clamped_probit(values[i]);
    return (quantile(z, 0.75) - quantile(z, 0.25)) / (2.0 * probit(0.75));
}

Diagnostics diagnostics(const FdrTable& table, int bins, std::size_t max_qq) {
    if (bins < 1) throw ValidationError("diagnostics: bins must be positive");
    std::vector<double> r, rt;
    for (const auto& row : table.rows) {
        if (!row.defined) continue;
        r.push_back(row.r);
        rt.push_back(row.r_tilde);
    }
    if (r.empty()) throw ValidationError("diagnostics: no defined p-values");
    Diagnostics d;
    d.bins = bins;
    d.count = r.size();
    auto histogram = [bins](const std::vector<double>& v) {
        std::vector<std::size_t> h(static_cast<std::size_t>(bins), 0);
        for (double x : v) {
            const int k = std::clamp(static_cast<int>(x * bins), 0, bins - 1);
            ++h[static_cast<std::size_t>(k)];
        }
        return h;
    };
    d.r_hist = histogram(r);
    d.r_tilde_hist = histogram(rt);
    auto qq = [max_qq](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        const std::size_t points = std::min(n, std::max<std::size_t>(max_qq, 2));
        std::vector<QQPoint> out;
        for (std::size_t k = 0; k < points; ++k) {
            const std::size_t rank = points == 1 ? 0 : (k * (n - 1)) / (points - 1);
            const double pp = (static_cast<double>(rank) + 0.5) / static_cast<double>(n);
            out.push_back({probit(pp), clamped_probit(v[rank])});
        }
        return out;
    };
    d.qq_r = qq(r);
    d.qq_r_tilde = qq(rt);
    if (r.size() >= 4) {
        d.qq_slope_r = qq_slope(r);
        d.qq_slope_r_tilde = qq_slope(rt);
    }
    return d;
}

void check_decisions(const std::vector<CallRecord>& records, const PipelineConfig& cfg, bool matched) {
    for (const auto& r : records) {
        if (r.called != decision(r, cfg, matched)) {
            throw NumericError("decision rule violated at " + obs_id(r.position, r.sample));
        }
    }
}

CallResult call_unmatched(const PileupMatrix& reference, const PileupMatrix& clinical, const PipelineConfig& cfg,
                          const ErrorModelParams* fitted_reference, const RegionMap* regions) {
    cfg.validate();
    if (reference.num_samples() == 0) throw ValidationError("reference set is empty");
    if (!reference.same_positions(clinical)) throw ValidationError("reference and clinical pileups cover different positions");

    CallResult res;
    const ErrorModelParams ref_model = fitted_reference ? *fitted_reference : fit_reference(reference, cfg.fit, regions);
    res.unmatched_model = fit_targets(ref_model, clinical, cfg.fit, regions);
    const ErrorModelParams& model = *res.unmatched_model;

    const std::size_t P = clinical.num_positions(), S = clinical.num_samples();
    std::vector<PInterval> intervals(P * S);
    std::vector<int> group(P * S, -1);
    parallel_for(P * S, [&](std::size_t k) {
        const std::size_t i = k / S, j = k % S;
        const std::int64_t depth = clinical.n(i, j);
        if (depth == 0 || !model.estimable[i]) return;
        intervals[k] = null_interval(*null_cdf_unmatched(model, i, j, depth), clinical.x(i, j), Tail::upper);
        group[k] = static_cast<int>(j);
    });

    std::vector<std::string> ids(P * S);
    for (std::size_t k = 0; k < P * S; ++k) ids[k] = obs_id(clinical.positions()[k / S], clinical.samples()[k % S]);
    const bool enull = cfg.empirical_null == EmpiricalNullMode::on;
    res.fdr = analyze_fdr(intervals, group, static_cast<int>(S), fdr_options(cfg, enull), std::move(ids));

    res.records.resize(P * S);
    for (std::size_t k = 0; k < P * S; ++k) {
        const std::size_t i = k / S, j = k % S;
        CallRecord& rec = res.records[k];
        FdrRow& row = res.fdr.table.rows[k];
        rec.position = clinical.positions()[i];
        rec.position_index = i;
        rec.sample = clinical.samples()[j];
        rec.sample_index = j;
        rec.y = clinical.x(i, j);
        rec.m = clinical.n(i, j);
        rec.rate_tumor = rate(rec.y, rec.m);
        rec.rate_normal = model.estimable[i] ? expit(logit(model.mu[i]) + model.delta[j]) : kNaN;
        rec.defined = group[k] >= 0;
        if (!rec.defined) {
            rec.reasons.push_back(rec.m == 0 ? "zero_depth" : "unestimable_position");
            rec.r = rec.r_tilde = kNaN;
            continue;
        }
        // Only rates above the null are candidates; the far side of the
        // interval scale is the wrong tail.
        if (0.5 * (intervals[k].lo + intervals[k].hi) > 0.5) {
            row.fdr = 1.0;
            rec.reasons.push_back("wrong_tail");
        }
        rec.r = row.r;
        rec.r_tilde = row.r_tilde;
        rec.fdr = row.fdr;
        const double weight = cfg.literal_delta ? rec.fdr : 1.0 - rec.fdr;
        rec.delta_hat = weight * (rec.rate_tumor - rec.rate_normal);
    }
    finish_records(res, cfg, false);
    return res;
}

CallResult call_matched(const MatchedPileup& data, const PipelineConfig& cfg, const MatchedModelParams* fitted,
                        const RegionMap* regions) {
    cfg.validate();
    const PileupMatrix& normal = data.normal;
    const PileupMatrix& tumor = data.tumor;
    if (!normal.same_positions(tumor) || normal.samples() != tumor.samples()) {
        throw ValidationError("normal and tumor pileups are not paired");
    }

    CallResult res;
    res.matched_model = fitted ? *fitted : fit_matched(data, cfg.fit, regions);
    const MatchedModelParams& model = *res.matched_model;
    if (model.base.positions != normal.positions() || model.eta.size() != normal.num_samples()) {
        throw ValidationError("model does not match the pileup (positions or samples differ)");
    }

    const std::size_t P = normal.num_positions(), S = normal.num_samples();
    std::vector<PInterval> intervals(P * S);
    std::vector<int> group(P * S, -1);
    std::vector<double> prior_rate(P * S, kNaN);
    for (std::size_t j = 0; j < S; ++j) {
        const MuEstimate loo = matched_consensus(normal, model, j);
        parallel_for(P, [&](std::size_t i) {
            const std::size_t k = i * S + j;
            const std::int64_t m = tumor.n(i, j);
            const bool known = model.base.estimable[i] || model.genotypes.find(i).has_value();
            if (m == 0 || !known) return;
            const LogitPrior prior = matched_prior(model, &loo, i, j);
            prior_rate[k] = expit(prior.center);
            const auto null = conditional_null(prior, model.eta[j], model.tau[j], normal.x(i, j), normal.n(i, j), m,
                                               model.quadrature_nodes);
            intervals[k] = null_interval(*null, tumor.x(i, j), Tail::lower);
            group[k] = static_cast<int>(j);
        });
    }

    std::vector<std::string> ids(P * S);
    for (std::size_t k = 0; k < P * S; ++k) ids[k] = obs_id(normal.positions()[k / S], normal.samples()[k % S]);
    const bool enull = cfg.empirical_null != EmpiricalNullMode::off;
    res.fdr = analyze_fdr(intervals, group, static_cast<int>(S), fdr_options(cfg, enull), std::move(ids));

    res.records.resize(P * S);
    for (std::size_t k = 0; k < P * S; ++k) {
        const std::size_t i = k / S, j = k % S;
        CallRecord& rec = res.records[k];
        const FdrRow& row = res.fdr.table.rows[k];
        rec.position = normal.positions()[i];
        rec.position_index = i;
        rec.sample = normal.samples()[j];
        rec.sample_index = j;
        rec.x = normal.x(i, j);
        rec.n = normal.n(i, j);
        rec.y = tumor.x(i, j);
        rec.m = tumor.n(i, j);
        rec.rate_normal = rate(*rec.x, *rec.n);
        rec.rate_tumor = rate(rec.y, rec.m);
        rec.defined = group[k] >= 0;
        if (!rec.defined) {
            rec.reasons.push_back(rec.m == 0 ? "zero_depth" : "unestimable_position");
            rec.r = rec.r_tilde = kNaN;
            continue;
        }
        if (*rec.n == 0) rec.reasons.push_back("normal_zero_depth");
        rec.r = row.r;
        rec.r_tilde = row.r_tilde;
        rec.fdr = row.fdr;
        const double baseline = *rec.n > 0 ? rec.rate_normal : prior_rate[k];
        const double weight = cfg.literal_delta ? rec.fdr : 1.0 - rec.fdr;
        rec.delta_hat = weight * (rec.rate_tumor - baseline);
    }
    finish_records(res, cfg, true);
    return res;
}

DetectionSummary summarize_detection(const std::vector<CallRecord>& records, const TruthTable& truth,
                                     double fdr_threshold, bool matched, double delta_threshold) {
    std::set<std::pair<std::size_t, std::string>> planted;
    for (const auto& e : truth.entries) planted.insert({e.position_index, e.sample});
    DetectionSummary s;
    s.fdr_threshold = fdr_threshold;
    s.planted = planted.size();
    for (const auto& r : records) {
        const bool hit = r.defined && r.fdr <= fdr_threshold &&
                         (!matched || std::fabs(r.delta_hat) >= delta_threshold);
        if (!hit) continue;
        if (planted.count({r.position_index, r.sample})) {
            ++s.true_positives;
        } else {
            ++s.false_positives;
        }
    }
    return s;
}

}  // namespace ebmut
