// Acceptance runner: one PASS/FAIL line per criterion. Arguments select a
// subset by number; no arguments runs everything.

#include "oracles.hpp"

#include "caller.hpp"
#include "discrete_fdr.hpp"
#include "error_model.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "simgen.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace ebmut;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double kl_sum(const std::vector<double>& p, const std::vector<double>& q) {
    long double s = 0.0L;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] == 0.0) continue;
        if (q[k] == 0.0) return INFINITY;
        s += static_cast<long double>(p[k]) * std::log(static_cast<long double>(p[k]) / q[k]);
    }
    return static_cast<double>(s);
}

double ks_sum(const std::vector<double>& p, const std::vector<double>& q) {
    long double cp = 0, cq = 0, d = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        cp += p[k];
        cq += q[k];
        d = std::max(d, std::fabs(cp - cq));
    }
    return static_cast<double>(d);
}

double gap(double a, double b) {
    if (std::isinf(a) && std::isinf(b)) return 0.0;
    return std::fabs(a - b);
}

// pmf vector of d over [lo, hi]
std::vector<double> dense(const DiscreteDist& d, std::int64_t lo, std::int64_t hi) {
    std::vector<double> v;
    for (std::int64_t k = lo; k <= hi; ++k) {
        const std::int64_t at = k - d.offset;
        v.push_back(at >= 0 && at < static_cast<std::int64_t>(d.pmf.size()) ? d.pmf[at] : 0.0);
    }
    return v;
}

Outcome theorem_suite() {
    double worst = 0.0;
    for (const auto& [f, g] : random_distribution_pairs(20240601, 50)) {
        const std::int64_t lo = std::min(f.offset, g.offset);
        const std::int64_t hi = std::max(f.offset + static_cast<std::int64_t>(f.pmf.size()),
                                         g.offset + static_cast<std::int64_t>(g.pmf.size())) - 1;
        const auto pf = dense(f, lo, hi), pg = dense(g, lo, hi);
        const auto t = verify_theorem(f, g);
        worst = std::max({worst, gap(t.kl_r_uniform, kl_sum(pg, pf)), gap(t.kl_uniform_r, kl_sum(pf, pg)),
                          gap(t.ks_r, ks_sum(pf, pg)), t.max_deviation()});
    }
    const auto p5 = DiscreteDist::poisson(5.0, 1e-12, 60), p10 = DiscreteDist::poisson(10.0, 1e-12, 60);
    const double ks = verify_theorem(p5, p10).ks_r;
    return {worst < 1e-9 && std::fabs(ks - 0.6464) <= 1e-4,
            "max |LHS-RHS|=" + fmt("%.3g", worst) + " poisson ks=" + fmt("%.6f", ks)};
}

Outcome null_uniformity() {
    const std::size_t P = 2500, S = 4;
    int rejections = 0;
    for (std::uint64_t rep = 0; rep < 200; ++rep) {
        auto sc = preset_scenario("virus", 4000 + rep);
        sc.positions = P;
        sc.random_planted_count = 0;
        sc.samples.clear();
        for (std::size_t j = 0; j < S; ++j) {
            sc.samples.push_back({"r" + std::to_string(j), SampleRole::reference, 0.0, 0.28, 0.0, 0.0});
        }
        sc.samples.push_back({"unused", SampleRole::clinical, 0.0, 0.28, 0.0, 0.0});
        const auto sim = simulate(sc);
        const auto& ref = *sim.reference;
        const auto model = fit_reference(ref);
        // Counts drawn from each fitted beta-binomial null by a gamma ratio.
        std::mt19937_64 gen(rep);
        std::vector<std::int64_t> x;
        std::vector<NullCdfHandle> nulls;
        for (std::size_t i = 0; i < P; ++i) {
            if (!model.estimable[i]) continue;
            for (std::size_t j = 0; j < S; ++j) {
                const std::int64_t n = ref.n(i, j);
                if (n == 0) continue;
                const double rate = oracle::expit(oracle::logit(model.mu[i]) + model.delta[j]);
                const double s2 = std::max(1e-8, model.sigma[j] * model.sigma[j] + model.extra_var[i]);
                const double a = 1.0 / (s2 * (1.0 - rate)), b = 1.0 / (s2 * rate);
                const double ga = std::gamma_distribution<double>(a, 1.0)(gen);
                const double gb = std::gamma_distribution<double>(b, 1.0)(gen);
                x.push_back(std::binomial_distribution<std::int64_t>(n, ga / (ga + gb))(gen));
                nulls.push_back(null_cdf_unmatched(model, i, j, n));
            }
        }
        auto r = randomized_pvalues(x, nulls, PValueMode::randomized, rep, Tail::upper).r;
        r.resize(std::min<std::size_t>(r.size(), 10000));
        if (oracle::ks_uniform(r) > oracle::ks_critical_01(r.size())) ++rejections;
    }
    return {rejections <= 10, std::to_string(rejections) + "/200 KS rejections at 1%"};
}

Outcome virus_table() {
    double tp01 = 0, fp01 = 0, tp001 = 0, fp001 = 0, planted = 0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto sim = simulate(preset_scenario("virus", 500 + rep));
        PipelineConfig cfg;
        cfg.seed = rep;
        const auto res = call_unmatched(*sim.reference, *sim.clinical, cfg);
        planted += static_cast<double>(sim.truth.entries.size());
        for (const auto& r : res.records) {
            if (!r.defined) continue;
            const bool truth = sim.truth.planted(r.position_index, r.sample);
            if (r.fdr <= 0.1) (truth ? tp01 : fp01) += 1;
            if (r.fdr <= 0.01) (truth ? tp001 : fp001) += 1;
        }
    }
    const double pow01 = tp01 / planted, pow001 = tp001 / planted;
    fp01 /= 20;
    fp001 /= 20;
    const bool pass = pow01 >= 0.90 && fp01 <= 2 && pow001 >= 0.80 && fp001 <= 0.5;
    return {pass, "fdr<=0.1 power=" + fmt("%.3f", pow01) + " fp=" + fmt("%.2f", fp01) + "; fdr<=0.01 power=" +
                      fmt("%.3f", pow001) + " fp=" + fmt("%.2f", fp001)};
}

PileupMatrix replace_column(const PileupMatrix& m, std::size_t col, const PileupMatrix& src) {
    std::vector<std::int64_t> x, n;
    std::vector<char> ref;
    for (std::size_t i = 0; i < m.num_positions(); ++i) {
        ref.push_back(m.reference_base(i));
        for (std::size_t j = 0; j < m.num_samples(); ++j) {
            x.push_back(j == col ? src.x(i, col) : m.x(i, j));
            n.push_back(j == col ? src.n(i, col) : m.n(i, j));
        }
    }
    return PileupMatrix(m.positions(), m.samples(), ref, x, n);
}

Outcome control_pair() {
    int clean = 0;
    std::size_t dup_total = 0, control_total = 0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto sim = simulate(preset_scenario("tumor-small", 600 + rep));
        const auto& mp = *sim.matched;
        const std::string dup_name = "pair_" + std::to_string(1 + rep % 5);
        std::size_t col = 0;
        while (mp.normal.samples()[col] != dup_name) ++col;
        const MatchedPileup data{mp.normal, replace_column(mp.tumor, col, mp.normal)};
        PipelineConfig cfg;
        cfg.seed = rep;
        const auto res = call_matched(data, cfg);
        std::size_t dup = 0, control = 0;
        for (const auto& r : res.records) {
            const bool hit = r.fdr <= 0.1 && std::fabs(r.delta_hat) >= 0.25;
            if (r.sample == dup_name) dup += hit;
            if (r.sample == "control") control += hit;
        }
        dup_total += dup;
        control_total += control;
        clean += dup == 0 && control == 0;
    }
    return {clean >= 19, std::to_string(clean) + "/20 replications without calls (duplicate calls=" +
                             std::to_string(dup_total) + ", control calls=" + std::to_string(control_total) + ")"};
}

double median_of(std::vector<double> v) { return oracle::median(std::move(v)); }

Outcome parameter_recovery() {
    const std::size_t P = 1000, S = 3;
    const std::int64_t N = 100000;
    const std::vector<double> ref_sigma{0.05, 0.05, 0.05};
    const std::vector<double> tgt_delta{0.3, -0.2, 0.1}, tgt_sigma{0.1, 0.2, 0.3};
    std::vector<double> mu_share, delta_err, sigma_err;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        std::mt19937_64 gen(9000 + rep);
        std::uniform_real_distribution<double> lu(std::log(3e-3), std::log(3e-2));
        std::normal_distribution<double> z;
        std::vector<double> mu(P);
        for (auto& m : mu) m = std::exp(lu(gen));
        auto draw = [&](const std::vector<double>& delta, const std::vector<double>& sigma) {
            std::vector<PositionId> pos(P);
            std::vector<std::string> names(S);
            std::vector<std::int64_t> x(P * S), n(P * S, N);
            for (std::size_t j = 0; j < S; ++j) names[j] = "s" + std::to_string(j);
            for (std::size_t i = 0; i < P; ++i) {
                pos[i] = {"chr1", static_cast<std::int64_t>(i + 1)};
                for (std::size_t j = 0; j < S; ++j) {
                    const double p = oracle::expit(oracle::logit(mu[i]) + delta[j] + sigma[j] * z(gen));
                    x[i * S + j] = std::binomial_distribution<std::int64_t>(N, p)(gen);
                }
            }
            return PileupMatrix(pos, names, std::vector<char>(P, 'A'), x, n);
        };
        const auto ref = draw({0.0, 0.0, 0.0}, ref_sigma);
        const auto tgt = draw(tgt_delta, tgt_sigma);
        FitOptions opts;
        opts.method = SigmaMethod::mle;
        const auto model = fit_reference(ref, opts);
        const auto fitted = fit_targets(model, tgt, opts);
        std::size_t good = 0;
        for (std::size_t i = 0; i < P; ++i) good += std::fabs(model.mu[i] / mu[i] - 1.0) <= 0.15;
        mu_share.push_back(static_cast<double>(good) / P);
        double de = 0.0, se = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
            de = std::max(de, std::fabs(fitted.delta[j] - tgt_delta[j]));
            se = std::max({se, std::fabs(fitted.sigma[j] / tgt_sigma[j] - 1.0), std::fabs(model.sigma[j] / ref_sigma[j] - 1.0)});
        }
        delta_err.push_back(de);
        sigma_err.push_back(se);
    }
    const double m_mu = median_of(mu_share), m_d = median_of(delta_err), m_s = median_of(sigma_err);
    return {m_mu >= 0.95 && m_d <= 0.05 && m_s <= 0.15,
            "median mu share=" + fmt("%.3f", m_mu) + " max|delta err|=" + fmt("%.4f", m_d) +
                " max sigma rel err=" + fmt("%.3f", m_s)};
}

Outcome beta_moments() {
    bool pass = true;
    std::string worst;
    for (double mu : {1e-3, 1e-2, 0.1}) {
        for (double s : {0.1, 0.3}) {
            const auto b = beta_approx(mu, s);
            const auto m = oracle::logit_beta_moments(b.alpha, b.beta);
            const double skew = s * (std::pow(mu, 3) - std::pow(1.0 - mu, 3));
            const double e_mean = std::fabs(m.mean / oracle::logit(mu) - 1.0);
            const double e_var = std::fabs(m.var / (s * s) - 1.0);
            const double e_skew = std::fabs(m.skew / skew - 1.0);
            const bool ok = e_mean <= 0.02 && e_var <= 0.05 && e_skew <= 0.05;
            if (!ok) {
                worst += (worst.empty() ? "" : "; ") + std::string("mu=") + fmt("%g", mu) + " sigma=" + fmt("%g", s) +
                         " err mean/var/skew=" + fmt("%.3f", e_mean) + "/" + fmt("%.3f", e_var) + "/" +
                         fmt("%.3f", e_skew);
            }
            pass = pass && ok;
        }
    }
    return {pass, pass ? "all 6 grid points within 2%/5%/5%" : worst};
}

Outcome oracle_fdr() {
    const double w = 0.98;
    const auto f = DiscreteDist::binomial(40, 0.1), a = DiscreteDist::binomial(40, 0.35);
    const auto exact = exact_fdr_oracle(f, a, w);
    std::mt19937_64 gen(77);
    std::uniform_real_distribution<double> u;
    const std::size_t n = 100000;
    std::vector<std::int64_t> x(n);
    for (auto& v : x) v = u(gen) < w ? draw_discrete(f, u(gen)) : draw_discrete(a, u(gen));
    const TabulatedNull null(f);
    std::vector<PInterval> iv(n);
    for (std::size_t i = 0; i < n; ++i) iv[i] = null_interval(null, x[i], Tail::upper);
    FdrOptions opts;
    opts.seed = 5;
    const auto res = analyze_fdr(iv, std::vector<int>(n, 0), 1, opts);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err += std::fabs(res.table.rows[i].fdr - exact.at(x[i]).value());
    err /= static_cast<double>(n);
    return {err <= 0.05, "mean |fdr - exact|=" + fmt("%.4f", err)};
}

Outcome empirical_null() {
    std::mt19937_64 gen(88);
    std::normal_distribution<double> z(0.3, 0.8);
    std::vector<double> r(100000);
    for (auto& v : r) v = 0.5 * std::erfc(-z(gen) / std::sqrt(2.0));
    const auto e = fit_empirical_null(r);
    return {std::fabs(e.location - 0.3) <= 0.02 && std::fabs(e.scale - 0.8) <= 0.03,
            "location=" + fmt("%.4f", e.location) + " scale=" + fmt("%.4f", e.scale)};
}

std::string calls_csv(const CallResult& res) {
    std::ostringstream out;
    write_calls(out, res.records);
    return out.str();
}

Outcome determinism() {
    bool identical = true;
    for (const char* preset : {"virus", "tumor-small"}) {
        std::string first;
        for (unsigned threads : {1u, 4u}) {
            set_thread_limit(threads);
            const auto sim = simulate(preset_scenario(preset, 42));
            PipelineConfig cfg;
            cfg.seed = 42;
            const auto res = sim.matched ? call_matched(*sim.matched, cfg)
                                         : call_unmatched(*sim.reference, *sim.clinical, cfg);
            const auto csv = calls_csv(res);
            if (first.empty()) first = csv;
            identical = identical && csv == first;
        }
    }
    set_thread_limit(0);

    std::size_t changed = 0, positions = 0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto sim = simulate(preset_scenario("virus", 700 + rep));
        PipelineConfig cfg;
        std::set<std::size_t> called[2];
        for (int k = 0; k < 2; ++k) {
            cfg.seed = 1 + k;
            for (const auto& r : call_unmatched(*sim.reference, *sim.clinical, cfg).records) {
                if (r.called) called[k].insert(r.position_index * 1000 + r.sample_index);
            }
        }
        for (auto c : called[0]) changed += !called[1].count(c);
        for (auto c : called[1]) changed += !called[0].count(c);
        positions += sim.clinical->num_positions();
    }
    const double rate = static_cast<double>(changed) / static_cast<double>(positions) * 1e4;
    return {identical && rate <= 1.0, std::string(identical ? "byte-identical" : "outputs differ") +
                                          "; changed calls per 1e4 positions=" + fmt("%.2f", rate)};
}

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // 0: no runtime bound
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "theorem identities", 10, theorem_suite},
        {2, "null uniformity", 120, null_uniformity},
        {3, "virus-scale detection", 600, virus_table},
        {4, "matched control pair", 300, control_pair},
        {5, "parameter recovery", 300, parameter_recovery},
        {6, "beta approximation moments", 5, beta_moments},
        {7, "oracle fdr equivalence", 60, oracle_fdr},
        {8, "empirical null recovery", 10, empirical_null},
        {9, "determinism and seed robustness", 0, determinism},
    };
    std::set<int> wanted;
    for (int k = 1; k < argc; ++k) wanted.insert(std::atoi(argv[k]));
    int failures = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = c.limit_seconds == 0 || secs <= c.limit_seconds;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("%s criterion %d (%s): %s; %.1f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                    in_time ? "" : " over the time limit");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
