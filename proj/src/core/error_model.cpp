#include "error_model.hpp"

#include "errors.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace ebmut {

namespace {

constexpr double kSigmaLo = 1e-4;
constexpr double kSigmaHi = 3.0;
constexpr double kSigmaTol = 1e-5;
constexpr std::size_t kMinRegionPositions = 20;

constexpr std::array<double, 20> kMedianVariance = {
    1.0,      0.5,      0.448671, 0.2982,   0.286834, 0.214743, 0.210447, 0.168181, 0.166101, 0.138326,
    0.137162, 0.117516, 0.116799, 0.102168, 0.101695, 0.090375, 0.090047, 0.081029, 0.080791, 0.073437,
};

double softplus(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

template <class F>
double golden_minimize(F&& f, double a, double b, double tol) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

double sampling_var(std::int64_t n, double p) { return 1.0 / (static_cast<double>(n) * p * (1.0 - p)); }

struct Residuals {
    std::vector<std::size_t> idx;  // positions in the series
    std::vector<double> e;         // logit rate − center − delta
    std::vector<double> b;         // binomial sampling variance
};

Residuals residuals(const SampleSeries& s, double delta, double pseudocount, std::span<const std::size_t> subset) {
    Residuals r;
    for (std::size_t i : subset) {
        const double p = expit(s.center[i] + delta);
        r.idx.push_back(i);
        r.e.push_back(logit_rate(s.x[i], s.n[i], pseudocount) - s.center[i] - delta);
        r.b.push_back(sampling_var(s.n[i], p));
    }
    return r;
}

double neg_loglik(const SampleSeries& s, std::span<const std::size_t> idx, double delta, double var) {
    std::vector<double> terms(idx.size());
    parallel_for(idx.size(), [&](std::size_t k) {
        const std::size_t i = idx[k];
        const double sd = std::sqrt(var + s.extra_var[i]);
        const BetaShape sh = beta_approx(expit(s.center[i] + delta), sd);
        terms[k] = -BetaBinomial(s.n[i], sh.alpha, sh.beta).log_pmf(s.x[i]);
    });
    return std::accumulate(terms.begin(), terms.end(), 0.0);
}

double mle_sigma(const SampleSeries& s, std::span<const std::size_t> idx, double delta, double base_var) {
    const double best = golden_minimize(
        [&](double sigma) { return neg_loglik(s, idx, delta, sigma * sigma + base_var); }, kSigmaLo, kSigmaHi,
        kSigmaTol);
    if (best > kSigmaHi - 1e-3) {
        throw NumericError("sigma likelihood search not bracketed on [1e-4, 3]");
    }
    return best;
}

// Drops positions whose standardized residual is far from the bulk.
std::vector<std::size_t> trim(const SampleSeries& s, std::span<const std::size_t> idx, double delta, double base_var,
                              double pseudocount, double k, std::size_t* trimmed) {
    *trimmed = 0;
    if (k <= 0.0 || idx.size() < 10) return {idx.begin(), idx.end()};
    const double pilot = mle_sigma(s, idx, delta, base_var);
    const Residuals r = residuals(s, delta, pseudocount, idx);
    std::vector<double> t(idx.size());
    for (std::size_t q = 0; q < idx.size(); ++q) {
        t[q] = r.e[q] / std::sqrt(pilot * pilot + base_var + s.extra_var[idx[q]] + r.b[q]);
    }
    const double med = median(t);
    std::vector<double> dev(t.size());
    for (std::size_t q = 0; q < t.size(); ++q) dev[q] = std::fabs(t[q] - med);
    const double mad = 1.4826 * median(dev);
    if (!(mad > 0.0)) return {idx.begin(), idx.end()};
    std::vector<std::size_t> kept;
    for (std::size_t q = 0; q < t.size(); ++q) {
        if (dev[q] <= k * mad) kept.push_back(idx[q]);
    }
    *trimmed = idx.size() - kept.size();
    return kept;
}

SigmaFit fit_sigma_subset(const SampleSeries& s, std::span<const std::size_t> subset, double delta,
                          const FitOptions& opts, double base_var) {
    SigmaFit fit;
    const auto idx = trim(s, subset, delta, base_var, opts.pseudocount, opts.trim_mads, &fit.positions_trimmed);
    fit.positions_used = idx.size();
    if (opts.method == SigmaMethod::moments) {
        const Residuals r = residuals(s, delta, opts.pseudocount, idx);
        double e2 = 0.0, noise = 0.0;
        for (std::size_t q = 0; q < idx.size(); ++q) {
            e2 += r.e[q] * r.e[q];
            noise += r.b[q] + s.extra_var[idx[q]] + base_var;
        }
        e2 /= static_cast<double>(idx.size());
        noise /= static_cast<double>(idx.size());
        const double var = e2 - noise;
        if (var > 0.0 && noise <= opts.moments_max_share * e2) {
            fit.sigma = std::max(kSigmaLo, std::sqrt(var));
            fit.method = SigmaMethod::moments;
            return fit;
        }
        fit.moments_unstable = true;
    }
    fit.sigma = mle_sigma(s, idx, delta, base_var);
    fit.method = SigmaMethod::mle;
    return fit;
}

}  // namespace

const char* to_string(SigmaMethod m) { return m == SigmaMethod::moments ? "moments" : "mle"; }

SigmaMethod parse_sigma_method(const std::string& s) {
    if (s == "moments") return SigmaMethod::moments;
    if (s == "mle") return SigmaMethod::mle;
    throw ValidationError("unknown sigma method '" + s + "' (expected moments or mle)");
}

double median_variance_factor(std::size_t s) {
    if (s == 0) return std::numeric_limits<double>::infinity();
    if (s <= kMedianVariance.size()) return kMedianVariance[s - 1];
    return std::numbers::pi / (2.0 * static_cast<double>(s));
}

// ---------------------------------------------------------------------------

MuEstimate estimate_mu(const PileupMatrix& ref, double pseudocount, std::span<const double> ref_sigma,
                       std::optional<std::size_t> leave_out) {
    const std::size_t P = ref.num_positions(), S = ref.num_samples();
    if (!ref_sigma.empty() && ref_sigma.size() != S) {
        throw ValidationError("estimate_mu: one sigma per reference sample");
    }
    MuEstimate out;
    out.mu.assign(P, std::numeric_limits<double>::quiet_NaN());
    out.estimable.assign(P, 0);
    out.extra_var.assign(P, 0.0);
    parallel_for(P, [&](std::size_t i) {
        std::vector<double> l;
        l.reserve(S);
        for (std::size_t j = 0; j < S; ++j) {
            if (leave_out && *leave_out == j) continue;
            if (ref.n(i, j) > 0) l.push_back(logit_rate(ref.x(i, j), ref.n(i, j), pseudocount));
        }
        if (l.empty()) return;
        const double mu = expit(median(l));
        double v = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
            if ((leave_out && *leave_out == j) || ref.n(i, j) == 0) continue;
            const double sg = ref_sigma.empty() ? 0.0 : ref_sigma[j];
            v += sg * sg + sampling_var(ref.n(i, j), mu);
        }
        out.mu[i] = mu;
        out.estimable[i] = 1;
        out.extra_var[i] = median_variance_factor(l.size()) * v / static_cast<double>(l.size());
    });
    return out;
}

SampleSeries sample_series(const PileupMatrix& m, std::size_t j, const MuEstimate& mu, const RegionMap* regions,
                           std::span<const std::uint8_t> mask) {
    const std::size_t P = m.num_positions();
    if (mu.mu.size() != P) throw ValidationError("consensus and data disagree on the number of positions");
    if (regions && regions->region_id.size() != P) {
        throw ValidationError("region map and data disagree on the number of positions");
    }
    SampleSeries s;
    s.x.resize(P);
    s.n.resize(P);
    s.center.resize(P);
    s.extra_var = mu.extra_var;
    s.use.resize(P);
    for (std::size_t i = 0; i < P; ++i) {
        s.x[i] = m.x(i, j);
        s.n[i] = m.n(i, j);
        s.center[i] = mu.estimable[i] ? logit(mu.mu[i]) : 0.0;
        s.use[i] = mu.estimable[i] && s.n[i] > 0 && (mask.empty() || mask[i]);
    }
    if (regions) s.region = regions->region_id;
    return s;
}

double fit_delta(const SampleSeries& s, double pseudocount, std::size_t min_positions) {
    std::vector<double> e;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (s.use[i]) e.push_back(logit_rate(s.x[i], s.n[i], pseudocount) - s.center[i]);
    }
    if (e.size() < std::max<std::size_t>(min_positions, 1)) {
        throw ValidationError("too few usable positions to estimate a sample effect (" + std::to_string(e.size()) +
                              ", need " + std::to_string(min_positions) + ")");
    }
    return median(e);
}

SigmaFit fit_sigma(const SampleSeries& s, double delta, const FitOptions& opts, double base_var) {
    if (!(opts.region_quantile >= 0.5 && opts.region_quantile < 1.0)) {
        throw ValidationError("region quantile must lie in [0.5, 1)");
    }
    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (s.use[i]) all.push_back(i);
    }
    if (all.empty()) throw ValidationError("no usable positions for the variance fit");
    if (s.region.empty()) return fit_sigma_subset(s, all, delta, opts, base_var);

    const int R = s.region.empty() ? 0 : *std::max_element(s.region.begin(), s.region.end()) + 1;
    std::vector<std::vector<std::size_t>> by_region(static_cast<std::size_t>(R));
    for (std::size_t i : all) by_region[static_cast<std::size_t>(s.region[i])].push_back(i);

    SigmaFit out;
    out.region_sigma.assign(static_cast<std::size_t>(R), std::numeric_limits<double>::quiet_NaN());
    std::vector<double> fitted;
    for (int r = 0; r < R; ++r) {
        const auto& idx = by_region[static_cast<std::size_t>(r)];
        if (idx.size() < kMinRegionPositions) continue;
        const SigmaFit f = fit_sigma_subset(s, idx, delta, opts, base_var);
        out.region_sigma[static_cast<std::size_t>(r)] = f.sigma;
        fitted.push_back(f.sigma);
        out.positions_used += f.positions_used;
        out.positions_trimmed += f.positions_trimmed;
        out.moments_unstable = out.moments_unstable || f.moments_unstable;
        if (f.method == SigmaMethod::mle) out.method = SigmaMethod::mle;
    }
    if (fitted.empty()) {
        SigmaFit f = fit_sigma_subset(s, all, delta, opts, base_var);
        f.region_sigma = std::move(out.region_sigma);
        return f;
    }
    if (!out.moments_unstable && opts.method == SigmaMethod::moments) out.method = SigmaMethod::moments;
    out.sigma = quantile(fitted, opts.region_quantile);
    return out;
}

std::vector<double> estimate_delta(const PileupMatrix& m, const MuEstimate& mu, double pseudocount,
                                   std::size_t min_positions) {
    std::vector<double> out(m.num_samples());
    for (std::size_t j = 0; j < m.num_samples(); ++j) {
        out[j] = fit_delta(sample_series(m, j, mu), pseudocount, min_positions);
    }
    return out;
}

std::vector<SigmaFit> estimate_sigma(const PileupMatrix& m, const MuEstimate& mu, std::span<const double> delta,
                                     const FitOptions& opts, const RegionMap* regions) {
    if (delta.size() != m.num_samples()) throw ValidationError("estimate_sigma: one delta per sample");
    std::vector<SigmaFit> out;
    for (std::size_t j = 0; j < m.num_samples(); ++j) {
        out.push_back(fit_sigma(sample_series(m, j, mu, regions), delta[j], opts));
    }
    return out;
}

// ---------------------------------------------------------------------------

BetaShape beta_approx(double mu, double sigma) {
    if (!(mu > 0.0 && mu < 1.0)) throw ValidationError("beta_approx: rate must lie strictly inside (0, 1)");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("beta_approx: sigma must be positive");
    const double s2 = sigma * sigma;
    return {1.0 / (s2 * (1.0 - mu)), 1.0 / (s2 * mu)};
}

namespace {

void record_sample_fit(ErrorModelParams& p, const SigmaFit& f) {
    p.sigma.push_back(f.sigma);
    p.region_sigma.push_back(f.region_sigma);
    std::string how = to_string(f.method);
    if (f.moments_unstable) how += " (moments unstable)";
    p.sigma_method.push_back(how);
}

ErrorModelParams params_shell(const PileupMatrix& m, const FitOptions& opts) {
    ErrorModelParams p;
    p.positions = m.positions();
    p.meta.method = to_string(opts.method);
    p.meta.pseudocount = opts.pseudocount;
    p.meta.region_quantile = opts.region_quantile;
    p.meta.seed = opts.seed;
    return p;
}

// Leave-one-out fits of every sample against the others, repeated so the
// consensus variance uses the current σ of the contributing samples.
struct LooFit {
    std::vector<double> delta;
    std::vector<SigmaFit> sigma;
};

LooFit leave_one_out_fit(const PileupMatrix& m, const FitOptions& opts, const RegionMap* regions,
                         std::span<const std::uint8_t> mask) {
    const std::size_t S = m.num_samples();
    LooFit out;
    out.delta.assign(S, 0.0);
    out.sigma.assign(S, SigmaFit{});
    std::vector<double> sigma(S, 0.0);
    for (int pass = 0; pass < std::max(1, opts.reference_passes); ++pass) {
        for (std::size_t j = 0; j < S; ++j) {
            const MuEstimate loo = estimate_mu(m, opts.pseudocount, sigma, j);
            const SampleSeries s = sample_series(m, j, loo, regions, mask);
            out.delta[j] = fit_delta(s, opts.pseudocount, opts.min_positions);
            out.sigma[j] = fit_sigma(s, out.delta[j], opts);
        }
        for (std::size_t j = 0; j < S; ++j) sigma[j] = out.sigma[j].sigma;
    }
    return out;
}

}  // namespace

ErrorModelParams fit_reference(const PileupMatrix& ref, const FitOptions& opts, const RegionMap* regions) {
    if (ref.num_samples() == 0) throw ValidationError("reference set is empty");
    if (ref.num_positions() == 0) throw ValidationError("reference pileup has no positions");
    ErrorModelParams p = params_shell(ref, opts);
    p.samples = ref.samples();
    std::vector<double> sigma(ref.num_samples(), 0.0);
    if (ref.num_samples() >= 2) {
        const LooFit fit = leave_one_out_fit(ref, opts, regions, {});
        p.delta = fit.delta;
        for (const auto& f : fit.sigma) record_sample_fit(p, f);
        sigma = p.sigma;
    } else {
        p.delta.assign(1, 0.0);
        p.sigma.assign(1, 0.0);
        p.region_sigma.assign(1, {});
        p.sigma_method.assign(1, "none");
        p.meta.notes.push_back("single reference sample: consensus variance from sampling noise only");
    }
    const MuEstimate mu = estimate_mu(ref, opts.pseudocount, sigma);
    p.mu = mu.mu;
    p.estimable = mu.estimable;
    p.extra_var = mu.extra_var;
    return p;
}

ErrorModelParams fit_targets(const ErrorModelParams& model, const PileupMatrix& target, const FitOptions& opts,
                             const RegionMap* regions) {
    if (model.positions != target.positions()) {
        throw ValidationError("reference and target pileups cover different positions");
    }
    ErrorModelParams p = params_shell(target, opts);
    p.mu = model.mu;
    p.estimable = model.estimable;
    p.extra_var = model.extra_var;
    p.samples = target.samples();
    p.meta.notes = model.meta.notes;
    const MuEstimate mu{model.mu, model.estimable, model.extra_var};
    for (std::size_t j = 0; j < target.num_samples(); ++j) {
        bool covered = false;
        for (std::size_t i = 0; i < target.num_positions() && !covered; ++i) covered = target.n(i, j) > 0;
        if (!covered) {
            // Nothing to fit; every observation of this sample is zero depth.
            const double nan = std::numeric_limits<double>::quiet_NaN();
            p.delta.push_back(nan);
            p.sigma.push_back(nan);
            p.region_sigma.emplace_back();
            p.sigma_method.push_back("none");
            p.meta.notes.push_back("sample " + target.samples()[j] + " has zero depth everywhere");
            continue;
        }
        const SampleSeries s = sample_series(target, j, mu, regions);
        const double delta = fit_delta(s, opts.pseudocount, opts.min_positions);
        p.delta.push_back(delta);
        record_sample_fit(p, fit_sigma(s, delta, opts));
    }
    return p;
}

NullCdfHandle null_cdf_unmatched(const ErrorModelParams& p, std::size_t i, std::size_t j, std::int64_t depth) {
    if (i >= p.mu.size() || j >= p.sigma.size()) throw ValidationError("null_cdf_unmatched: index out of range");
    if (!p.estimable[i]) throw ValidationError("position " + p.positions[i].label() + " has no error-rate estimate");
    if (depth < 0) throw ValidationError("null_cdf_unmatched: negative depth");
    if (depth == 0) return std::make_shared<PointMassNull>(0);
    const double rate = expit(logit(p.mu[i]) + p.delta[j]);
    const double sd = std::max(kSigmaLo, std::sqrt(p.sigma[j] * p.sigma[j] + p.extra_var[i]));
    const BetaShape sh = beta_approx(rate, sd);
    return std::make_shared<BetaBinomialNull>(BetaBinomial(depth, sh.alpha, sh.beta));
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> GenotypeAssignment::find(std::size_t position) const {
    const auto it = std::lower_bound(candidates.begin(), candidates.end(), position);
    if (it == candidates.end() || *it != position) return std::nullopt;
    return static_cast<std::size_t>(it - candidates.begin());
}

std::vector<std::size_t> default_genotype_candidates(const PileupMatrix& m, std::int64_t min_depth) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.num_positions(); ++i) {
        for (std::size_t j = 0; j < m.num_samples(); ++j) {
            if (m.n(i, j) < min_depth) continue;
            const double rate = static_cast<double>(m.x(i, j)) / static_cast<double>(m.n(i, j));
            if ((rate >= 0.2 && rate <= 0.8) || rate >= 0.95) {
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

GenotypeAssignment genotype_positions(const PileupMatrix& m, std::span<const std::size_t> candidates,
                                      const MuEstimate& mu, double pseudocount) {
    const std::size_t S = m.num_samples();
    GenotypeAssignment g;
    g.num_samples = S;
    g.candidates.assign(candidates.begin(), candidates.end());
    std::sort(g.candidates.begin(), g.candidates.end());
    g.candidates.erase(std::unique(g.candidates.begin(), g.candidates.end()), g.candidates.end());
    const std::size_t C = g.candidates.size();
    g.genotype.assign(C * S, Genotype::hom_ref);
    g.posterior.assign(C * S, {1.0, 0.0, 0.0});
    g.genotype_mu.resize(C);
    g.inflated.assign(C, 0);

    // Fallback hom-ref rate: the typical consensus over non-candidate positions.
    std::vector<double> bulk;
    for (std::size_t i = 0; i < m.num_positions(); ++i) {
        if (mu.estimable[i] && !std::binary_search(g.candidates.begin(), g.candidates.end(), i)) {
            bulk.push_back(logit(mu.mu[i]));
        }
    }
    const double bulk_rate = bulk.empty() ? 1e-3 : expit(median(bulk));

    for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = g.candidates[c];
        std::vector<double> low;
        for (std::size_t j = 0; j < S; ++j) {
            const std::int64_t n = m.n(i, j);
            if (n > 0 && static_cast<double>(m.x(i, j)) < 0.2 * static_cast<double>(n)) {
                low.push_back(logit_rate(m.x(i, j), n, pseudocount));
            }
        }
        const double mu0 = std::min(0.1, low.empty() ? bulk_rate : expit(median(low)));
        const std::array<double, 3> center = {mu0, 0.5, 1.0 - mu0};
        std::array<double, 3> log_c, log_1mc;
        for (int k = 0; k < 3; ++k) {
            log_c[k] = std::log(center[k]);
            log_1mc[k] = std::log1p(-center[k]);
        }

        std::array<double, 3> w = {1.0 / 3, 1.0 / 3, 1.0 / 3};
        std::vector<std::array<double, 3>> resp(S);
        for (int iter = 0; iter < 200; ++iter) {
            std::array<double, 3> acc = {0.0, 0.0, 0.0};
            std::size_t used = 0;
            for (std::size_t j = 0; j < S; ++j) {
                const std::int64_t n = m.n(i, j), x = m.x(i, j);
                if (n == 0) {
                    resp[j] = w;
                    continue;
                }
                std::array<double, 3> ll;
                double top = -std::numeric_limits<double>::infinity();
                for (int k = 0; k < 3; ++k) {
                    ll[k] = std::log(std::max(w[k], 1e-300)) + static_cast<double>(x) * log_c[k] +
                            static_cast<double>(n - x) * log_1mc[k];
                    top = std::max(top, ll[k]);
                }
                double z = 0.0;
                for (int k = 0; k < 3; ++k) z += std::exp(ll[k] - top);
                for (int k = 0; k < 3; ++k) {
                    resp[j][k] = std::exp(ll[k] - top) / z;
                    acc[k] += resp[j][k];
                }
                ++used;
            }
            if (used == 0) break;
            double change = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double nw = std::max(acc[k] / static_cast<double>(used), 1e-6);
                change = std::max(change, std::fabs(nw - w[k]));
                w[k] = nw;
            }
            const double total = w[0] + w[1] + w[2];
            for (double& v : w) v /= total;
            if (change < 1e-10) break;
        }

        std::array<std::vector<double>, 3> members;
        int seen = 0;
        std::array<bool, 3> present = {false, false, false};
        for (std::size_t j = 0; j < S; ++j) {
            const auto& r = resp[j];
            const int best = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
            g.posterior[c * S + j] = r;
            g.genotype[c * S + j] = static_cast<Genotype>(best);
            if (m.n(i, j) > 0) {
                members[static_cast<std::size_t>(best)].push_back(logit_rate(m.x(i, j), m.n(i, j), pseudocount));
                if (!present[static_cast<std::size_t>(best)]) {
                    present[static_cast<std::size_t>(best)] = true;
                    ++seen;
                }
            }
        }
        for (int k = 0; k < 3; ++k) {
            const auto& v = members[static_cast<std::size_t>(k)];
            g.genotype_mu[c][static_cast<std::size_t>(k)] = v.size() >= 2 ? expit(median(v)) : center[k];
        }
        g.inflated[c] = seen > 1;
    }
    return g;
}

MatchedModelParams fit_matched(const MatchedPileup& data, const FitOptions& opts, const RegionMap* regions) {
    const PileupMatrix& normal = data.normal;
    const PileupMatrix& tumor = data.tumor;
    const std::size_t P = normal.num_positions(), S = normal.num_samples();
    if (S == 0) throw ValidationError("matched pileup has no sample pairs");
    if (!normal.same_positions(tumor) || tumor.num_samples() != S) {
        throw ValidationError("normal and tumor pileups are not paired");
    }

    MatchedModelParams out;
    out.genotype_inflation = opts.genotype_inflation;
    out.quadrature_nodes = opts.quadrature_nodes;
    ErrorModelParams& base = out.base;
    base = params_shell(normal, opts);
    base.samples = normal.samples();

    std::vector<std::size_t> candidates;
    if (regions && !regions->genotype_candidate.empty()) {
        for (std::size_t i = 0; i < P; ++i) {
            if (regions->genotype_candidate[i]) candidates.push_back(i);
        }
    } else {
        candidates = default_genotype_candidates(normal);
    }
    out.genotypes = genotype_positions(normal, candidates, estimate_mu(normal, opts.pseudocount), opts.pseudocount);

    std::vector<std::uint8_t> mask(P, 1);
    for (std::size_t i : out.genotypes.candidates) mask[i] = 0;

    std::vector<double> sigma(S, 0.0);
    if (S >= 2) {
        const LooFit fit = leave_one_out_fit(normal, opts, regions, mask);
        base.delta = fit.delta;
        for (const auto& f : fit.sigma) record_sample_fit(base, f);
        sigma = base.sigma;
    } else {
        base.delta.assign(1, 0.0);
        base.sigma.assign(1, kSigmaLo);
        base.region_sigma.assign(1, {});
        base.sigma_method.assign(1, "none");
        base.meta.notes.push_back("single normal sample: sigma not identifiable, set to the lower bound");
    }
    const MuEstimate full = estimate_mu(normal, opts.pseudocount, sigma);
    base.mu = full.mu;
    base.estimable = full.estimable;
    base.extra_var = full.extra_var;

    for (std::size_t j = 0; j < S; ++j) {
        const MuEstimate loo = S >= 2 ? estimate_mu(normal, opts.pseudocount, sigma, j) : full;
        const SampleSeries t = sample_series(tumor, j, loo, regions, mask);
        const double eta = fit_delta(t, opts.pseudocount, opts.min_positions) - base.delta[j];
        out.eta.push_back(eta);
        const SigmaFit tf = fit_sigma(t, base.delta[j] + eta, opts, sigma[j] * sigma[j]);
        out.tau.push_back(tf.sigma);
        out.region_tau.push_back(tf.region_sigma);
    }
    return out;
}

MuEstimate matched_consensus(const PileupMatrix& normal, const MatchedModelParams& params, std::size_t j) {
    if (normal.num_samples() < 2) {
        return MuEstimate{params.base.mu, params.base.estimable, params.base.extra_var};
    }
    return estimate_mu(normal, params.base.meta.pseudocount, params.base.sigma, j);
}

LogitPrior matched_prior(const MatchedModelParams& params, const MuEstimate* loo, std::size_t i, std::size_t j) {
    const ErrorModelParams& base = params.base;
    if (i >= base.mu.size() || j >= base.sigma.size()) throw ValidationError("matched_prior: index out of range");
    const double sigma = base.sigma[j];
    if (const auto c = params.genotypes.find(i)) {
        const Genotype g = params.genotypes.genotype[*c * params.genotypes.num_samples + j];
        const double rate = std::clamp(params.genotypes.genotype_mu[*c][static_cast<std::size_t>(g)], 1e-9, 1.0 - 1e-9);
        const double infl = params.genotypes.inflated[*c] ? params.genotype_inflation : 1.0;
        const double shift = g == Genotype::hom_ref ? base.delta[j] : 0.0;
        return {logit(rate) + shift, (sigma * infl) * (sigma * infl)};
    }
    if (loo && loo->estimable[i]) {
        return {logit(loo->mu[i]) + base.delta[j], sigma * sigma + loo->extra_var[i]};
    }
    if (!base.estimable[i]) throw ValidationError("position " + base.positions[i].label() + " has no error-rate estimate");
    return {logit(base.mu[i]) + base.delta[j], sigma * sigma + base.extra_var[i]};
}

NullCdfHandle conditional_null(const LogitPrior& prior, double eta, double tau, std::int64_t x, std::int64_t n,
                               std::int64_t m, int nodes) {
    if (n < 0 || m < 0 || x < 0 || x > n) throw ValidationError("conditional_null: invalid counts");
    if (m == 0) return std::make_shared<PointMassNull>(0);
    tau = std::max(tau, kSigmaLo);
    const double prior_sd = std::max(kSigmaLo, std::sqrt(std::max(prior.var, 0.0)));
    if (n == 0) {
        const double sd = std::sqrt(prior_sd * prior_sd + tau * tau);
        const BetaShape sh = beta_approx(expit(prior.center + eta), sd);
        return std::make_shared<BetaBinomialNull>(BetaBinomial(m, sh.alpha, sh.beta));
    }
    const BetaShape pr = beta_approx(expit(prior.center), prior_sd);
    const double a = pr.alpha + static_cast<double>(x);
    const double b = pr.beta + static_cast<double>(n - x);
    const double mean = digamma(a) - digamma(b);
    const double sd = std::sqrt(trigamma(a) + trigamma(b));
    const double half = 8.0 * sd;

    const Quadrature q = gauss_legendre(nodes);
    std::vector<double> logw(q.nodes.size()), u(q.nodes.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
        u[k] = mean + half * q.nodes[k];
        logw[k] = std::log(q.weights[k]) + a * u[k] - (a + b) * softplus(u[k]);
        top = std::max(top, logw[k]);
    }
    std::vector<double> weights;
    std::vector<BetaBinomial> comps;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double w = std::exp(logw[k] - top);
        if (w < 1e-14) continue;
        const double rate = std::clamp(expit(u[k] + eta), 1e-300, 1.0 - 1e-15);
        const BetaShape sh = beta_approx(rate, tau);
        weights.push_back(w);
        comps.emplace_back(m, sh.alpha, sh.beta);
    }
    return std::make_shared<BetaBinomialMixtureNull>(std::move(weights), std::move(comps));
}

NullCdfHandle null_cdf_matched(const MatchedModelParams& params, std::size_t i, std::size_t j, std::int64_t x,
                               std::int64_t n, std::int64_t m, const LogitPrior* prior) {
    if (j >= params.eta.size()) throw ValidationError("null_cdf_matched: sample index out of range");
    const LogitPrior p = prior ? *prior : matched_prior(params, nullptr, i, j);
    return conditional_null(p, params.eta[j], params.tau[j], x, n, m, params.quadrature_nodes);
}

}  // namespace ebmut
