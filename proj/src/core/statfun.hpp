#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ebmut {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

// ln Γ(z) for z > 0. Reentrant (no signgam side effect).
double log_gamma(double z);

// ln Γ(a + k) − ln Γ(a), stable when a is large and k is small relative to a.
double log_gamma_ratio(double a, double k);

double log_beta(double a, double b);
double digamma(double x);
double trigamma(double x);

double normal_pdf(double z);
double normal_cdf(double z);
// Inverse of normal_cdf on (0, 1).
double probit(double p);

double logit(double p);
double expit(double x);

// ---------------------------------------------------------------------------
// Beta-binomial
// ---------------------------------------------------------------------------

struct TailPair {
    double lower;  // P(X <= k)
    double upper;  // P(X > k)
};

class BetaBinomial {
public:
    BetaBinomial(std::int64_t n, double alpha, double beta);

    std::int64_t n() const { return n_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

    double log_pmf(std::int64_t k) const;
    double pmf(std::int64_t k) const;
    double cdf(std::int64_t k) const { return tails(k).lower; }
    // P(X > k)
    double sf(std::int64_t k) const { return tails(k).upper; }
    // Both tails at k; the smaller one is summed directly so neither loses
    // relative precision to cancellation. k < 0 and k >= n are allowed.
    TailPair tails(std::int64_t k) const;
    double mean() const;

private:
    double sum_down(std::int64_t from, std::int64_t stop_below_mode) const;
    double sum_up(std::int64_t from, std::int64_t stop_above_mode) const;

    std::int64_t n_;
    double alpha_;
    double beta_;
    double log_norm_;  // ln Γ(n+1) − ln B(α, β) contribution shared by every k
};

// ---------------------------------------------------------------------------
// Robust summaries
// ---------------------------------------------------------------------------

double median(std::span<const double> values);
// Linear-interpolation quantile (R type 7).
double quantile(std::span<const double> values, double q);

// Rousseeuw–Croux Sn: c_n · 1.1926 · lomed_i himed_j |v_i − v_j|, computed in
// O(n log n). Throws ValidationError for fewer than 2 values.
double sn_scale(std::span<const double> values);

// Small-sample consistency factor c_n applied by sn_scale.
double sn_correction(std::size_t n);

// ---------------------------------------------------------------------------
// Finite discrete distributions
// ---------------------------------------------------------------------------

// pmf on the integer support {offset, ..., offset + pmf.size() − 1}. Mass cut
// off by truncation is kept in tail_mass; pmf is never renormalized.
struct DiscreteDist {
    std::int64_t offset = 0;
    std::vector<double> pmf;
    double tail_mass = 0.0;

    // Truncated once the tail is below tail_eps and the support reaches min_hi.
    static DiscreteDist poisson(double lambda, double tail_eps = 1e-12, std::int64_t min_hi = 0);
    static DiscreteDist binomial(std::int64_t n, double p);
    static DiscreteDist from_pmf(std::vector<double> pmf, std::int64_t offset = 0);

    std::int64_t lo() const { return offset; }
    std::int64_t hi() const { return offset + static_cast<std::int64_t>(pmf.size()) - 1; }
    double prob(std::int64_t x) const;
    double cdf(std::int64_t x) const;
    // Copy with support extended (zero mass) to cover [lo, hi].
    DiscreteDist widened(std::int64_t lo, std::int64_t hi) const;
};

// Σ p log(p/q); +∞ when p has mass where q has none.
double kl_divergence(const DiscreteDist& p, const DiscreteDist& q);
// sup_x |P(X ≤ x) − Q(X ≤ x)|
double kolmogorov_distance(const DiscreteDist& p, const DiscreteDist& q);

// One-sample KS statistic of values against Unif(0, 1).
double ks_statistic_uniform(std::span<const double> values);
// Approximate upper-alpha critical value of the one-sample KS statistic.
double ks_critical_value(std::size_t n, double alpha);

struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Gauss–Legendre rule on [-1, 1].
Quadrature gauss_legendre(int order);

}  // namespace ebmut
