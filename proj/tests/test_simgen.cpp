#include "oracles.hpp"

#include "errors.hpp"
#include "simgen.hpp"

#include <doctest.h>

#include <cmath>

using namespace ebmut;

namespace {

SimScenario flat_unmatched(std::size_t P, double mu, double depth, double sigma, std::uint64_t seed) {
    SimScenario s;
    s.positions = P;
    s.seed = seed;
    s.mu = {mu, mu};
    s.depth.kind = DepthLaw::Kind::constant;
    s.depth.value = depth;
    s.samples = {{"ref", SampleRole::reference, 0.0, sigma, 0.0, 0.0}, {"clin", SampleRole::clinical, 0.0, sigma, 0.0, 0.0}};
    return s;
}

}  // namespace

TEST_CASE("degenerate hierarchy leaves binomial spread only") {
    const double mu = 0.01, N = 100000;
    const auto sim = simulate(flat_unmatched(4000, mu, N, 0.0, 1));
    const auto& m = *sim.clinical;
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < m.num_positions(); ++i) {
        const double r = static_cast<double>(m.x(i, 0)) / N;
        sum += r;
        sq += r * r;
    }
    const double n = m.num_positions();
    const double mean = sum / n, var = sq / n - mean * mean;
    const double binom_var = mu * (1 - mu) / N;
    CHECK(std::fabs(mean - mu) < 4.0 * std::sqrt(binom_var / n));
    CHECK(std::fabs(var / binom_var - 1.0) < 0.1);
}

TEST_CASE("virus preset plants a 0.1% mixture") {
    const auto sim = simulate(preset_scenario("virus", 3));
    REQUIRE(sim.truth.entries.size() == 42);
    CHECK(sim.reference->num_samples() == 3);
    CHECK(sim.clinical->num_samples() == 3);
    CHECK(sim.clinical->num_positions() == 281);
    double excess = 0;
    for (const auto& e : sim.truth.entries) {
        CHECK(e.prevalence == 0.001);
        std::size_t j = 0;
        while (sim.clinical->samples()[j] != e.sample) ++j;
        const double rate = static_cast<double>(sim.clinical->x(e.position_index, j)) / sim.clinical->n(e.position_index, j);
        excess += rate - sim.mu[e.position_index];
    }
    excess /= 42;
    CHECK(std::fabs(excess - 0.001) < 2e-4);

    std::vector<double> depth;
    for (std::size_t i = 0; i < 281; ++i) depth.push_back(sim.clinical->n(i, 0));
    CHECK(std::fabs(oracle::median(depth) / 775681.0 - 1.0) < 0.15);
}

TEST_CASE("tumor bias shifts logit rates") {
    SimScenario s;
    s.design = Design::matched;
    s.positions = 10000;
    s.seed = 4;
    s.mu = {0.01, 0.01};
    s.depth.value = 100000;
    s.samples = {{"t", SampleRole::pair, 0.0, 0.2, 0.1, 0.0}};
    const auto sim = simulate(s);
    const auto& mp = *sim.matched;
    double shift = 0;
    for (std::size_t i = 0; i < s.positions; ++i) {
        shift += oracle::logit(static_cast<double>(mp.tumor.x(i, 0)) / mp.tumor.n(i, 0)) -
                 oracle::logit(static_cast<double>(mp.normal.x(i, 0)) / mp.normal.n(i, 0));
    }
    CHECK(std::fabs(shift / s.positions - 0.1) < 0.01);
}

TEST_CASE("control pairs share the normal rate") {
    SimScenario s;
    s.design = Design::matched;
    s.positions = 5000;
    s.mu = {0.02, 0.02};
    s.depth.value = 50000;
    s.samples = {{"c", SampleRole::control, 0.0, 0.3, 0.5, 0.5}};
    const auto sim = simulate(s);
    double shift = 0;
    for (std::size_t i = 0; i < s.positions; ++i) {
        shift += oracle::logit(static_cast<double>(sim.matched->tumor.x(i, 0)) / 50000) -
                 oracle::logit(static_cast<double>(sim.matched->normal.x(i, 0)) / 50000);
    }
    CHECK(std::fabs(shift / s.positions) < 0.01);
}

TEST_CASE("exact fdr oracle") {
    const auto f = DiscreteDist::binomial(20, 0.1), a = DiscreteDist::binomial(20, 0.4);
    SUBCASE("no alternatives") {
        const auto o = exact_fdr_oracle(f, a, 1.0);
        for (const auto& v : o.fdr) {
            REQUIRE(v.has_value());
            CHECK(*v == 1.0);
        }
    }
    SUBCASE("identical laws") {
        const auto o = exact_fdr_oracle(f, f, 0.7);
        for (const auto& v : o.fdr) CHECK(*v == doctest::Approx(0.7).epsilon(1e-14));
    }
    SUBCASE("hand check at x = 8") {
        const double pf = oracle::binomial_pmf(20, 0.1, 8), pa = oracle::binomial_pmf(20, 0.4, 8);
        const auto o = exact_fdr_oracle(f, a, 0.9);
        CHECK(*o.at(8) == doctest::Approx(0.9 * pf / (0.9 * pf + 0.1 * pa)).epsilon(1e-12));
        CHECK_FALSE(o.at(21).has_value());
    }
    SUBCASE("impossible points are undefined") {
        const auto p = DiscreteDist::from_pmf({0.5, 0.0, 0.5});
        const auto o = exact_fdr_oracle(p, p, 0.5);
        CHECK(o.fdr[0].has_value());
        CHECK_FALSE(o.fdr[1].has_value());
    }
    CHECK_THROWS_AS(exact_fdr_oracle(DiscreteDist::binomial(300, 0.5), a, 0.9), ValidationError);
    CHECK_THROWS_AS(exact_fdr_oracle(f, a, 1.5), ValidationError);
}

TEST_CASE("simulation is deterministic per seed") {
    const auto a = simulate(preset_scenario("tumor-small", 8));
    const auto b = simulate(preset_scenario("tumor-small", 8));
    const auto c = simulate(preset_scenario("tumor-small", 9));
    bool same = true, differs = false;
    const auto& ma = a.matched->tumor;
    for (std::size_t i = 0; i < ma.num_positions(); ++i) {
        for (std::size_t j = 0; j < ma.num_samples(); ++j) {
            same = same && ma.x(i, j) == b.matched->tumor.x(i, j) && ma.n(i, j) == b.matched->tumor.n(i, j) &&
                   a.matched->normal.x(i, j) == b.matched->normal.x(i, j);
            differs = differs || ma.x(i, j) != c.matched->tumor.x(i, j);
        }
    }
    CHECK(same);
    CHECK(differs);
    REQUIRE(a.truth.entries.size() == c.truth.entries.size());
    for (std::size_t k = 0; k < a.truth.entries.size(); ++k) {
        CHECK(a.truth.entries[k].position == c.truth.entries[k].position);
        CHECK(a.truth.entries[k].sample == c.truth.entries[k].sample);
        CHECK(a.truth.entries[k].prevalence == c.truth.entries[k].prevalence);
    }
}

TEST_CASE("planted rates exceed the null at equal depth") {
    const double mu = 0.005, N = 20000;
    const double prevalence = 5.0 * std::sqrt(mu * (1 - mu) / N);
    double planted = 0, null = 0;
    std::size_t np = 0, nn = 0;
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
        auto s = flat_unmatched(500, mu, N, 0.1, rep);
        s.random_planted_count = 50;
        s.random_planted_prevalence = prevalence;
        const auto sim = simulate(s);
        for (std::size_t i = 0; i < 500; ++i) {
            const double r = static_cast<double>(sim.clinical->x(i, 0)) / N;
            if (sim.truth.planted(i, "clin")) {
                planted += r;
                ++np;
            } else {
                null += r;
                ++nn;
            }
        }
    }
    CHECK(np == 500);
    CHECK(planted / np > null / nn);
}

TEST_CASE("scenario validation") {
    auto s = flat_unmatched(10, 0.01, 100, 0.1, 0);
    CHECK_NOTHROW(s.validate());
    s.samples[0].sigma = -0.1;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = flat_unmatched(10, 0.01, 100, 0.1, 0);
    s.planted.push_back({3, {}, 0.0});
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.planted.back().prevalence = 1.5;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.planted.back().prevalence = 1.0;
    CHECK_NOTHROW(s.validate());
    s.planted.back().position = 10;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    CHECK_THROWS_WITH_AS(preset_scenario("nope", 1), doctest::Contains("virus"), ValidationError);
}

TEST_CASE("depth laws") {
    DepthLaw d;
    d.kind = DepthLaw::Kind::quantile_table;
    d.table = {{0.0, 10}, {0.5, 100}, {1.0, 1000}};
    CHECK(d.draw(0.5) == 100);
    CHECK(d.draw(0.0) == 10);
    CHECK(d.draw(0.25) == 32);  // log-linear midpoint of 10 and 100
    d.zero_fraction = 0.1;
    CHECK(d.draw(0.05) == 0);
    DepthLaw c;
    c.value = 77;
    CHECK(c.draw(0.3) == 77);
}

TEST_CASE("random pairs have full support") {
    const auto pairs = random_distribution_pairs(5, 50);
    REQUIRE(pairs.size() == 50);
    for (const auto& [f, g] : pairs) {
        CHECK(f.lo() == g.lo());
        CHECK(f.hi() == g.hi());
        CHECK(f.hi() - f.lo() + 1 >= 2);
        CHECK(f.hi() - f.lo() + 1 <= 30);
        double sf = 0, sg = 0;
        for (std::int64_t k = f.lo(); k <= f.hi(); ++k) {
            CHECK(f.prob(k) > 0.0);
            CHECK(g.prob(k) > 0.0);
            sf += f.prob(k);
            sg += g.prob(k);
        }
        CHECK(std::fabs(sf - 1.0) < 1e-12);
        CHECK(std::fabs(sg - 1.0) < 1e-12);
    }
}
