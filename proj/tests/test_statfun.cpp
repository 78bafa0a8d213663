#include "oracles.hpp"

#include "errors.hpp"
#include "statfun.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace ebmut;

TEST_CASE("log_gamma at known points") {
    CHECK(std::fabs(log_gamma(1.0)) < 1e-14);
    CHECK(std::fabs(log_gamma(0.5) - 0.5723649429247001) < 1e-13);
    CHECK(std::fabs(log_gamma(10.0) - std::log(362880.0)) < 1e-12);
    CHECK(std::fabs(log_gamma(2.0)) < 1e-14);
    CHECK_THROWS_AS(log_gamma(0.0), ValidationError);
    CHECK_THROWS_AS(log_gamma(-1.5), ValidationError);
}

TEST_CASE("log_gamma agrees with lgamma over [1e-3, 1e6]") {
    double worst_small = 0.0, worst_rel = 0.0;
    for (double lz = -3.0; lz <= 6.0; lz += 0.01) {
        const double z = std::pow(10.0, lz);
        const double ref = std::lgamma(z);
        const double err = std::fabs(log_gamma(z) - ref);
        // Relative error of Γ itself equals the absolute error of ln Γ.
        if (z <= 100.0) worst_small = std::max(worst_small, err);
        else worst_rel = std::max(worst_rel, err / std::fabs(ref));
    }
    CHECK(worst_small < 1e-12);
    // Beyond z = 100, ln Γ exceeds 360 and a double cannot hold it to 1e-12
    // absolute; require agreement to a few ulps instead.
    CHECK(worst_rel < 1e-14);
}

TEST_CASE("digamma and trigamma") {
    CHECK(std::fabs(digamma(1.0) + 0.5772156649015329) < 1e-12);
    CHECK(std::fabs(trigamma(1.0) - std::numbers::pi * std::numbers::pi / 6.0) < 1e-12);
    for (double x : {0.3, 2.5, 17.0, 1234.5}) {
        const double h = 1e-4 * x;
        const double fd = (std::lgamma(x + h) - std::lgamma(x - h)) / (2 * h);
        CHECK(std::fabs(digamma(x) - fd) < 1e-6 * std::max(1.0, std::fabs(fd)));
        CHECK(std::fabs(trigamma(x + 1.0) - trigamma(x) + 1.0 / (x * x)) < 1e-12);
    }
}

TEST_CASE("probit inverts the normal cdf") {
    for (double p : {1e-300, 1e-12, 1e-4, 0.025, 0.3, 0.5, 0.8, 0.975, 1 - 1e-10}) {
        CHECK(std::fabs(normal_cdf(probit(p)) - p) < 1e-14 + 1e-12 * p);
    }
    CHECK(std::fabs(probit(0.975) - 1.959963984540054) < 1e-13);
    CHECK(std::fabs(normal_cdf(-1.0) - 0.15865525393145707) < 1e-15);
}

TEST_CASE("beta-binomial pmf small cases") {
    CHECK(BetaBinomial(1, 1.0, 1.0).pmf(0) == doctest::Approx(0.5).epsilon(1e-14));
    const double q = oracle::betabinom_pmf_quadrature(10, 2.0, 8.0, 2);
    CHECK(std::fabs(BetaBinomial(10, 2.0, 8.0).pmf(2) - q) < 1e-10);
    for (std::int64_t k = 0; k <= 10; ++k) {
        CHECK(std::fabs(BetaBinomial(10, 2.0, 8.0).pmf(k) - oracle::betabinom_pmf_quadrature(10, 2.0, 8.0, k)) < 1e-10);
    }
    CHECK_THROWS_AS(BetaBinomial(10, 0.0, 1.0), ValidationError);
    CHECK_THROWS_AS(BetaBinomial(-1, 1.0, 1.0), ValidationError);
}

TEST_CASE("beta-binomial pmf sums to one and cdf is monotone") {
    struct Case {
        std::int64_t n;
        double a, b;
    };
    for (Case c : {Case{0, 1, 1}, Case{5, 0.3, 0.7}, Case{50, 2, 30}, Case{1000, 11.2, 1111.1}, Case{20000, 0.5, 0.5}}) {
        const BetaBinomial d(c.n, c.a, c.b);
        double s = 0.0, prev = 0.0;
        for (std::int64_t k = 0; k <= c.n; ++k) {
            const double p = d.pmf(k);
            CHECK(p >= 0.0);
            s += p;
            const double F = d.cdf(k);
            CHECK(F >= prev - 1e-15);
            prev = F;
            if (c.n <= 1000) CHECK(std::fabs(p - oracle::betabinom_pmf(c.n, c.a, c.b, k)) < 1e-11);
        }
        CHECK(std::fabs(s - 1.0) < 1e-10);
        CHECK(d.cdf(c.n) == 1.0);
        CHECK(d.cdf(-1) == 0.0);
    }
}

TEST_CASE("beta-binomial tails are complementary and survive huge depth") {
    const BetaBinomial d(775681, 11.2, 11111.1);
    for (std::int64_t k : {0, 100, 700, 900, 5000, 775680}) {
        const auto t = d.tails(k);
        CHECK(std::isfinite(t.lower));
        CHECK(std::fabs(t.lower + t.upper - 1.0) < 1e-12);
    }
    CHECK(d.sf(775681) == 0.0);
}

TEST_CASE("beta-binomial approaches the binomial as the shapes grow") {
    const double s = 1e6;
    const BetaBinomial d(20, 0.3 * s, 0.7 * s);
    double worst = 0.0;
    for (std::int64_t k = 0; k <= 20; ++k) worst = std::max(worst, std::fabs(d.pmf(k) - oracle::binomial_pmf(20, 0.3, k)));
    CHECK(worst < 1e-3);
}

TEST_CASE("Sn scale") {
    const std::vector<double> flat{1, 1, 1, 1};
    CHECK(sn_scale(flat) == 0.0);
    const std::vector<double> five{1, 2, 3, 4, 5};
    CHECK(std::fabs(sn_scale(five) - oracle::sn_bruteforce(five)) < 1e-12);
    CHECK_THROWS_AS(sn_scale(std::vector<double>{1.0}), ValidationError);

    std::mt19937_64 gen(7);
    std::normal_distribution<double> nd;
    for (std::size_t n = 2; n <= 40; ++n) {
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<double> v(n);
            for (auto& x : v) x = nd(gen);
            CHECK(std::fabs(sn_scale(v) - oracle::sn_bruteforce(v)) < 1e-12);
        }
    }
    std::vector<double> big(100000);
    for (auto& x : big) x = nd(gen);
    const double s = sn_scale(big);
    CHECK(s >= 0.97);
    CHECK(s <= 1.03);
}

TEST_CASE("median and quantile") {
    const std::vector<double> v{5, 1, 4, 2, 3};
    CHECK(median(v) == 3.0);
    CHECK(median(std::vector<double>{1, 2, 3, 10}) == 2.5);
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 5.0);
    CHECK(quantile(v, 0.9) == doctest::Approx(4.6));
}

TEST_CASE("discrete distances") {
    const auto f = DiscreteDist::poisson(5.0, 1e-12, 60);
    const auto g = DiscreteDist::poisson(10.0, 1e-12, 60);
    double cf = 0.0, cg = 0.0, ks = 0.0, kl = 0.0;
    for (int k = 0; k <= 60; ++k) {
        const double pf = oracle::poisson_pmf(5.0, k), pg = oracle::poisson_pmf(10.0, k);
        cf += pf;
        cg += pg;
        ks = std::max(ks, std::fabs(cf - cg));
        kl += pg * std::log(pg / pf);
    }
    CHECK(std::fabs(kolmogorov_distance(f, g) - ks) < 1e-12);
    CHECK(std::fabs(kolmogorov_distance(f, g) - 0.6464) < 1e-4);
    CHECK(std::fabs(kl_divergence(g, f) - kl) < 1e-10);
    CHECK(std::fabs(kl - (10.0 * std::log(2.0) - 5.0)) < 1e-10);
    CHECK(kl_divergence(f, f) == 0.0);
    CHECK(kolmogorov_distance(f, f) == 0.0);
    const auto a = DiscreteDist::from_pmf({0.5, 0.5});
    const auto b = DiscreteDist::from_pmf({1.0, 0.0});
    CHECK(std::isinf(kl_divergence(a, b)));
    CHECK(kl_divergence(b, a) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("Gauss-Legendre integrates polynomials exactly") {
    for (int order : {2, 8, 32}) {
        const auto q = gauss_legendre(order);
        double s = 0.0;
        for (std::size_t k = 0; k < q.nodes.size(); ++k) s += q.weights[k] * std::pow(q.nodes[k], 2 * order - 2);
        CHECK(std::fabs(s - 2.0 / (2 * order - 1)) < 1e-13);
    }
}

TEST_CASE("KS statistic against uniform") {
    CHECK(ks_statistic_uniform(std::vector<double>{0.5}) == doctest::Approx(0.5));
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u;
    std::vector<double> v(1000);
    for (auto& x : v) x = u(gen);
    CHECK(std::fabs(ks_statistic_uniform(v) - oracle::ks_uniform(v)) < 1e-15);
    CHECK(std::fabs(ks_critical_value(10000, 0.01) - oracle::ks_critical_01(10000)) < 2e-4);
}
