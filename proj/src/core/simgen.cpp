#include "simgen.hpp"

#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace ebmut {

namespace {

enum Lane : std::uint64_t {
    lane_mu = 1,
    lane_depth = 2,
    lane_normal_noise = 3,
    lane_normal_count = 4,
    lane_genotype = 5,
    lane_tumor_depth = 6,
    lane_tumor_noise = 7,
    lane_tumor_count = 8,
    lane_position_depth = 9,
    lane_planted = 200,
};

double gaussian(std::uint64_t seed, std::uint64_t index, std::uint64_t lane) {
    CounterStream g(seed, index, lane);
    std::normal_distribution<double> d;
    return d(g);
}

std::int64_t binomial(std::uint64_t seed, std::uint64_t index, std::uint64_t lane, std::int64_t n, double p) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    CounterStream g(seed, index, lane);
    std::binomial_distribution<std::int64_t> d(n, p);
    return d(g);
}

// Depth quantile for (i, j): a shared positional component plus a sample
// component, mixed on the probit scale.
double depth_quantile(const DepthLaw& law, std::uint64_t seed, std::size_t i, std::uint64_t idx, std::uint64_t lane) {
    const double u = counter_uniform(seed, idx, lane);
    const double rho = law.position_correlation;
    if (rho <= 0.0) return u;
    const double shared = probit(counter_uniform(seed, i, lane_position_depth));
    return normal_cdf(std::sqrt(rho) * shared + std::sqrt(1.0 - rho) * probit(u));
}

char reference_base(std::uint64_t seed, std::size_t i) {
    return "ACGT"[stream_key(seed, i, 300) % 4];
}

}  // namespace

std::int64_t DepthLaw::draw(double u) const {
    switch (kind) {
    case Kind::constant:
        return static_cast<std::int64_t>(std::llround(value));
    case Kind::log_uniform:
        return static_cast<std::int64_t>(std::llround(std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)))));
    case Kind::quantile_table: {
        if (u < zero_fraction) return 0;
        if (u <= table.front().first) return static_cast<std::int64_t>(std::llround(table.front().second));
        for (std::size_t k = 1; k < table.size(); ++k) {
            if (u <= table[k].first) {
                const auto [q0, d0] = table[k - 1];
                const auto [q1, d1] = table[k];
                const double t = (u - q0) / (q1 - q0);
                return static_cast<std::int64_t>(std::llround(std::exp(std::log(d0) + t * (std::log(d1) - std::log(d0)))));
            }
        }
        return static_cast<std::int64_t>(std::llround(table.back().second));
    }
    }
    return 0;
}

const char* to_string(SampleRole r) {
    switch (r) {
    case SampleRole::reference: return "reference";
    case SampleRole::clinical: return "clinical";
    case SampleRole::pair: return "pair";
    case SampleRole::control: return "control";
    }
    return "clinical";
}

SampleRole parse_sample_role(const std::string& s) {
    if (s == "reference") return SampleRole::reference;
    if (s == "clinical") return SampleRole::clinical;
    if (s == "pair") return SampleRole::pair;
    if (s == "control") return SampleRole::control;
    throw ValidationError("unknown sample role '" + s + "' (expected reference, clinical, pair or control)");
}

void SimScenario::validate() const {
    if (positions == 0) throw ValidationError("scenario: positions must be positive");
    if (samples.empty()) throw ValidationError("scenario: no samples");
    if (!(mu.lo > 0.0 && mu.hi < 1.0 && mu.lo <= mu.hi)) throw ValidationError("scenario: mu range must satisfy 0 < lo <= hi < 1");
    if (!(snp_fraction >= 0.0 && snp_fraction <= 1.0)) throw ValidationError("scenario: snp_fraction must lie in [0, 1]");
    switch (depth.kind) {
    case DepthLaw::Kind::constant:
        if (!(depth.value >= 0.0)) throw ValidationError("scenario: depth must be nonnegative");
        break;
    case DepthLaw::Kind::log_uniform:
        if (!(depth.lo >= 1.0 && depth.lo <= depth.hi)) throw ValidationError("scenario: depth range must satisfy 1 <= lo <= hi");
        break;
    case DepthLaw::Kind::quantile_table:
        if (depth.table.size() < 2) throw ValidationError("scenario: depth table needs at least two points");
        for (std::size_t k = 0; k < depth.table.size(); ++k) {
            if (!(depth.table[k].second >= 1.0)) throw ValidationError("scenario: depth table values must be >= 1");
            if (k > 0 && !(depth.table[k].first > depth.table[k - 1].first)) {
                throw ValidationError("scenario: depth table probabilities must increase");
            }
        }
        break;
    }
    if (!(depth.position_correlation >= 0.0 && depth.position_correlation < 1.0)) {
        throw ValidationError("scenario: depth position_correlation must lie in [0, 1)");
    }
    if (!(depth.zero_fraction >= 0.0 && depth.zero_fraction < 1.0)) throw ValidationError("scenario: zero_fraction must lie in [0, 1)");
    std::set<std::string> names;
    bool has_reference = false, has_target = false;
    for (const auto& s : samples) {
        if (s.name.empty() || !names.insert(s.name).second) throw ValidationError("scenario: sample names must be unique and nonempty");
        if (s.sigma < 0.0 || s.tau < 0.0) throw ValidationError("scenario: variance parameters must be nonnegative");
        const bool paired = s.role == SampleRole::pair || s.role == SampleRole::control;
        if ((design == Design::matched) != paired) {
            throw ValidationError("scenario: sample '" + s.name + "' has role " + to_string(s.role) +
                                  ", which does not fit the design");
        }
        has_reference = has_reference || s.role == SampleRole::reference;
        has_target = has_target || s.role == SampleRole::clinical;
    }
    if (design == Design::unmatched && (!has_reference || !has_target)) {
        throw ValidationError("scenario: unmatched designs need reference and clinical samples");
    }
    auto check_prevalence = [](double p) {
        if (!(p > 0.0 && p <= 1.0)) throw ValidationError("scenario: prevalence must lie in (0, 1]");
    };
    for (const auto& m : planted) {
        if (m.position >= positions) throw ValidationError("scenario: planted position out of range");
        check_prevalence(m.prevalence);
        for (const auto& name : m.samples) {
            if (!names.count(name)) throw ValidationError("scenario: planted sample '" + name + "' is unknown");
        }
    }
    if (random_planted_count > 0 || random_planted_per_sample > 0) check_prevalence(random_planted_prevalence);
    if (random_planted_count > positions || random_planted_per_sample > positions) {
        throw ValidationError("scenario: more planted positions than positions");
    }
}

std::vector<std::string> scenario_presets() { return {"virus", "tumor-small"}; }

SimScenario preset_scenario(const std::string& name, std::uint64_t seed) {
    SimScenario s;
    s.name = name;
    s.seed = seed;
    if (name == "virus") {
        s.design = Design::unmatched;
        s.positions = 281;
        s.contig = "virus";
        s.depth.kind = DepthLaw::Kind::quantile_table;
        s.depth.table = {{0.0, 150000}, {0.025, 271192}, {0.5, 775681}, {0.975, 1689977}, {1.0, 2500000}};
        s.mu = {3e-5, 3e-4};
        const double ref_delta[] = {0.0, 0.05, -0.05};
        const double clin_delta[] = {0.03, -0.04, 0.02};
        for (int k = 0; k < 3; ++k) {
            s.samples.push_back({"ref_" + std::to_string(k + 1), SampleRole::reference, ref_delta[k], 0.28, 0, 0});
        }
        for (int k = 0; k < 3; ++k) {
            s.samples.push_back({"clin_" + std::to_string(k + 1), SampleRole::clinical, clin_delta[k], 0.28, 0, 0});
        }
        s.random_planted_count = 14;
        s.random_planted_prevalence = 0.001;
        return s;
    }
    if (name == "tumor-small") {
        s.design = Design::matched;
        s.positions = 5000;
        s.contig = "chr1";
        s.depth.kind = DepthLaw::Kind::quantile_table;
        s.depth.zero_fraction = 0.01;
        s.depth.table = {{0.01, 2},    {0.05, 12},   {0.1, 30},      {0.25, 85},    {0.5, 171},
                         {0.75, 350},  {0.9, 800},   {0.975, 3000},  {0.995, 20000}, {1.0, 120000}};
        s.depth.position_correlation = 0.8;
        s.mu = {3e-4, 0.05};
        s.snp_fraction = 0.002;
        const double sigma[] = {0.2, 0.25, 0.22, 0.3, 0.24};
        const double delta[] = {0.0, 0.05, -0.05, 0.1, -0.08};
        const double eta[] = {0.1, -0.05, 0.08, 0.0, 0.05};
        const double tau[] = {0.15, 0.2, 0.1, 0.25, 0.18};
        for (int k = 0; k < 5; ++k) {
            s.samples.push_back({"pair_" + std::to_string(k + 1), SampleRole::pair, delta[k], sigma[k], eta[k], tau[k]});
        }
        s.samples.push_back({"control", SampleRole::control, 0.02, 0.22, 0.0, 0.0});
        s.random_planted_per_sample = 4;
        s.random_planted_prevalence = 0.3;
        return s;
    }
    std::string list;
    for (const auto& p : scenario_presets()) list += (list.empty() ? "" : ", ") + p;
    throw ValidationError("unknown preset '" + name + "' (available: " + list + ")");
}

bool TruthTable::planted(std::size_t position_index, const std::string& sample) const {
    return std::any_of(entries.begin(), entries.end(), [&](const TruthEntry& e) {
        return e.position_index == position_index && e.sample == sample;
    });
}

SimResult simulate(const SimScenario& sc) {
    sc.validate();
    const std::size_t P = sc.positions, S = sc.samples.size();
    const std::uint64_t seed = sc.seed;

    std::vector<PositionId> ids(P);
    std::vector<char> refbase(P);
    for (std::size_t i = 0; i < P; ++i) {
        ids[i] = {sc.contig, static_cast<std::int64_t>(i + 1)};
        refbase[i] = reference_base(seed, i);
    }

    SimResult out;
    out.mu.resize(P);
    const double log_lo = std::log(sc.mu.lo), log_hi = std::log(sc.mu.hi);
    for (std::size_t i = 0; i < P; ++i) {
        out.mu[i] = std::exp(log_lo + counter_uniform(seed, i, lane_mu) * (log_hi - log_lo));
    }

    // prevalence[i * S + j]
    std::vector<double> prevalence(P * S, 0.0);
    auto is_target = [&](std::size_t j) {
        return sc.samples[j].role == SampleRole::clinical || sc.samples[j].role == SampleRole::pair;
    };
    auto plant = [&](std::size_t i, std::size_t j, double p) {
        prevalence[i * S + j] = p;
    };
    for (const auto& m : sc.planted) {
        for (std::size_t j = 0; j < S; ++j) {
            const bool listed = m.samples.empty()
                                    ? is_target(j)
                                    : std::find(m.samples.begin(), m.samples.end(), sc.samples[j].name) != m.samples.end();
            if (listed) plant(m.position, j, m.prevalence);
        }
    }
    if (sc.random_planted_count > 0) {
        std::vector<std::size_t> order(P);
        std::iota(order.begin(), order.end(), 0);
        CounterStream g(sc.layout_seed, 0, lane_planted);
        std::shuffle(order.begin(), order.end(), g);
        for (std::size_t k = 0; k < sc.random_planted_count; ++k) {
            for (std::size_t j = 0; j < S; ++j) {
                if (is_target(j)) plant(order[k], j, sc.random_planted_prevalence);
            }
        }
    }
    if (sc.random_planted_per_sample > 0) {
        for (std::size_t j = 0; j < S; ++j) {
            if (!is_target(j)) continue;
            std::vector<std::size_t> order(P);
            std::iota(order.begin(), order.end(), 0);
            CounterStream g(sc.layout_seed, j + 1, lane_planted);
            std::shuffle(order.begin(), order.end(), g);
            for (std::size_t k = 0; k < sc.random_planted_per_sample; ++k) {
                plant(order[k], j, sc.random_planted_prevalence);
            }
        }
    }
    for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < S; ++j) {
            if (prevalence[i * S + j] > 0.0) {
                out.truth.entries.push_back({ids[i], i, sc.samples[j].name, prevalence[i * S + j]});
            }
        }
    }

    std::vector<std::int64_t> x(P * S), n(P * S);
    if (sc.design == Design::unmatched) {
        for (std::size_t i = 0; i < P; ++i) {
            for (std::size_t j = 0; j < S; ++j) {
                const std::uint64_t idx = i * S + j;
                const SampleSpec& sp = sc.samples[j];
                const std::int64_t depth = sc.depth.draw(depth_quantile(sc.depth, seed, i, idx, lane_depth));
                const double p = expit(logit(out.mu[i]) + sp.delta + sp.sigma * gaussian(seed, idx, lane_normal_noise));
                const double pi = prevalence[idx];
                n[idx] = depth;
                x[idx] = binomial(seed, idx, lane_normal_count, depth, pi + (1.0 - pi) * p);
            }
        }
        std::vector<std::size_t> ref_cols, clin_cols;
        for (std::size_t j = 0; j < S; ++j) {
            (sc.samples[j].role == SampleRole::reference ? ref_cols : clin_cols).push_back(j);
        }
        std::vector<std::string> names;
        for (const auto& sp : sc.samples) names.push_back(sp.name);
        const PileupMatrix all(ids, names, refbase, x, n);
        out.reference = all.select_samples(ref_cols);
        out.clinical = all.select_samples(clin_cols);
        return out;
    }

    std::vector<std::int64_t> y(P * S), m(P * S);
    for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < S; ++j) {
            const std::uint64_t idx = i * S + j;
            const SampleSpec& sp = sc.samples[j];
            const double pi = prevalence[idx];
            double base = logit(out.mu[i]) + sp.delta;
            if (pi == 0.0) {
                const double u = counter_uniform(seed, idx, lane_genotype);
                if (u < sc.snp_fraction * 2.0 / 3.0) {
                    base = 0.0;
                } else if (u < sc.snp_fraction) {
                    base = logit(1.0 - out.mu[i]);
                }
            }
            const double p = expit(base + sp.sigma * gaussian(seed, idx, lane_normal_noise));
            n[idx] = sc.depth.draw(depth_quantile(sc.depth, seed, i, idx, lane_depth));
            x[idx] = binomial(seed, idx, lane_normal_count, n[idx], p);

            double q = p;
            if (sp.role != SampleRole::control) {
                q = expit(logit(p) + sp.eta + sp.tau * gaussian(seed, idx, lane_tumor_noise));
            }
            m[idx] = sc.depth.draw(depth_quantile(sc.depth, seed, i, idx, lane_tumor_depth));
            y[idx] = binomial(seed, idx, lane_tumor_count, m[idx], pi + (1.0 - pi) * q);
        }
    }
    std::vector<std::string> names;
    for (const auto& sp : sc.samples) names.push_back(sp.name);
    out.matched = make_matched(PileupMatrix(ids, names, refbase, x, n), PileupMatrix(ids, names, refbase, y, m));
    return out;
}

std::optional<double> OracleFdr::at(std::int64_t x) const {
    if (x < lo || x >= lo + static_cast<std::int64_t>(fdr.size())) return std::nullopt;
    return fdr[static_cast<std::size_t>(x - lo)];
}

OracleFdr exact_fdr_oracle(const DiscreteDist& null, const DiscreteDist& alt, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("oracle: null weight must lie in [0, 1]");
    OracleFdr out;
    out.lo = std::min(null.lo(), alt.lo());
    const std::int64_t hi = std::max(null.hi(), alt.hi());
    if (hi - out.lo + 1 > 200) throw ValidationError("oracle: support exceeds 200 points");
    for (std::int64_t x = out.lo; x <= hi; ++x) {
        const double a = w * null.prob(x);
        const double denom = a + (1.0 - w) * alt.prob(x);
        out.fdr.push_back(denom > 0.0 ? std::optional<double>(a / denom) : std::nullopt);
    }
    return out;
}

std::vector<std::pair<DiscreteDist, DiscreteDist>> random_distribution_pairs(std::uint64_t seed, std::size_t count) {
    std::vector<std::pair<DiscreteDist, DiscreteDist>> out;
    for (std::size_t k = 0; k < count; ++k) {
        CounterStream g(seed, k, 400);
        const std::size_t size = 2 + static_cast<std::size_t>(g.uniform() * 29.0);
        const std::int64_t offset = static_cast<std::int64_t>(g.uniform() * 10.0);
        auto pmf = [&] {
            std::vector<double> p(size);
            double total = 0.0;
            for (double& v : p) {
                v = -std::log(g.uniform());
                total += v;
            }
            for (double& v : p) v /= total;
            return DiscreteDist::from_pmf(std::move(p), offset);
        };
        DiscreteDist f = pmf();
        DiscreteDist h = pmf();
        out.emplace_back(std::move(f), std::move(h));
    }
    return out;
}

std::int64_t draw_discrete(const DiscreteDist& d, double u) {
    double cum = 0.0;
    for (std::int64_t x = d.lo(); x <= d.hi(); ++x) {
        cum += d.prob(x);
        if (u <= cum) return x;
    }
    return d.hi();
}

}  // namespace ebmut
