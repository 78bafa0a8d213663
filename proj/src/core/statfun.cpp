#include "statfun.hpp"

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ebmut {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// ln Γ(z) − [(z − ½) ln z − z + ½ ln 2π], asymptotic series, z >= 10.
double stirling_tail(double z) {
    const double w = 1.0 / (z * z);
    const double s =
        1.0 / 12 +
        w * (-1.0 / 360 +
             w * (1.0 / 1260 +
                  w * (-1.0 / 1680 +
                       w * (1.0 / 1188 +
                            w * (-691.0 / 360360 + w * (1.0 / 156 + w * (-3617.0 / 122400)))))));
    return s / z;
}

double log_gamma_large(double z) {
    return (z - 0.5) * std::log(z) - z + kHalfLog2Pi + stirling_tail(z);
}

}  // namespace

double log_gamma(double z) {
    if (!(z > 0.0) || !std::isfinite(z)) {
        throw ValidationError("log_gamma: argument must be positive and finite");
    }
    if (z >= 10.0) return log_gamma_large(z);
    double product = 1.0;
    while (z < 10.0) {
        product *= z;
        z += 1.0;
    }
    return log_gamma_large(z) - std::log(product);
}

double log_gamma_ratio(double a, double k) {
    if (k == 0.0) return 0.0;
    if (a >= 10.0) {
        const double b = a + k;
        return (a - 0.5) * std::log1p(k / a) + k * std::log(b) - k + stirling_tail(b) -
               stirling_tail(a);
    }
    return log_gamma(a + k) - log_gamma(a);
}

double log_beta(double a, double b) {
    if (a < b) std::swap(a, b);
    // ln B(a, b) = ln Γ(b) − [ln Γ(a + b) − ln Γ(a)]
    return log_gamma(b) - log_gamma_ratio(a, b);
}

double digamma(double x) {
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double w = 1.0 / (x * x);
    const double series =
        w * (1.0 / 12 - w * (1.0 / 120 - w * (1.0 / 252 - w * (1.0 / 240 - w * (5.0 / 660)))));
    return acc + std::log(x) - 0.5 / x - series;
}

double trigamma(double x) {
    double acc = 0.0;
    while (x < 10.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double w = 1.0 / (x * x);
    const double series =
        1.0 / x + w / 2 +
        w / x * (1.0 / 6 - w * (1.0 / 30 - w * (1.0 / 42 - w * (1.0 / 30 - w * (5.0 / 66)))));
    return acc + series;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z - kHalfLog2Pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Wichura's AS241 (PPND16) followed by one Newton step.
double probit(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("probit: argument must lie in (0, 1)");
    }
    const double q = p - 0.5;
    double x;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            ((((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                   67265.770927008700853) * r + 45921.953931549871457) * r +
                 13731.693765509461125) * r + 1971.5909503065514427) * r +
               133.14166789178437745) * r + 3.387132872796366608));
        const double den =
            ((((((((5226.495278852545925 * r + 28729.085735721942674) * r +
                   39307.89580009271061) * r + 21213.794301586595867) * r +
                 5394.1960214247511077) * r + 687.1870074920579083) * r +
               42.313330701600911252) * r + 1.0));
        x = q * num / den;
    } else {
        double r = q < 0 ? p : 1.0 - p;
        r = std::sqrt(-std::log(r));
        double num, den;
        if (r <= 5.0) {
            r -= 1.6;
            num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                        0.24178072517745061177) * r + 1.27045825245236838258) * r +
                      3.64784832476320460504) * r + 5.7694972214606914055) * r +
                    4.6303378461565452959) * r + 1.42343711074968357734);
            den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                        0.0151986665636164571966) * r + 0.14810397642748007459) * r +
                      0.68976733498510000455) * r + 1.6763848301838038494) * r +
                    2.05319162663775882187) * r + 1.0);
        } else {
            r -= 5.0;
            num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                        0.0012426609473880784386) * r + 0.026532189526576123093) * r +
                      0.29656057182850489123) * r + 1.7848265399172913358) * r +
                    5.4637849111641143699) * r + 6.6579046435011037772);
            den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                        1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                      0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                    0.59983220655588793769) * r + 1.0);
        }
        x = num / den;
        if (q < 0) x = -x;
    }
    // Newton refinement on whichever tail is smaller.
    const double dens = normal_pdf(x);
    if (dens > 0.0) {
        // Φ(x) − p, evaluated in the tail where it keeps relative precision.
        const double err = x < 0 ? normal_cdf(x) - p : (1.0 - p) - normal_cdf(-x);
        x -= err / dens;
    }
    return x;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double expit(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------

BetaBinomial::BetaBinomial(std::int64_t n, double alpha, double beta)
    : n_(n), alpha_(alpha), beta_(beta) {
    if (n < 0) throw ValidationError("beta-binomial: trial count must be nonnegative");
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
        throw ValidationError("beta-binomial: shape parameters must be positive and finite");
    }
    log_norm_ = -log_gamma_ratio(alpha_ + beta_, static_cast<double>(n_));
}

double BetaBinomial::log_pmf(std::int64_t k) const {
    if (k < 0 || k > n_) return -std::numeric_limits<double>::infinity();
    const double kk = static_cast<double>(k);
    const double rest = static_cast<double>(n_ - k);
    const double log_choose = log_gamma_ratio(rest + 1.0, kk) - log_gamma(kk + 1.0);
    return log_choose + log_gamma_ratio(alpha_, kk) + log_gamma_ratio(beta_, rest) + log_norm_;
}

double BetaBinomial::pmf(std::int64_t k) const { return std::exp(log_pmf(k)); }

double BetaBinomial::mean() const {
    return static_cast<double>(n_) * alpha_ / (alpha_ + beta_);
}

// Σ_{j <= from} pmf(j), walking down. Early exit once below the mode and the
// remaining terms are negligible; stop_below_mode = -1 disables the exit.
double BetaBinomial::sum_down(std::int64_t from, std::int64_t mode) const {
    const double n = static_cast<double>(n_);
    double rel = 1.0;
    double sum = 0.0;
    for (std::int64_t j = from; j >= 0; --j) {
        sum += rel;
        if (j == 0) break;
        if (mode >= 0 && j <= mode && rel < 1e-17 * sum) break;
        const double jm = static_cast<double>(j - 1);
        // pmf(j−1)/pmf(j)
        rel *= (jm + 1.0) * (n - jm - 1.0 + beta_) / ((n - jm) * (jm + alpha_));
    }
    return std::exp(log_pmf(from) + std::log(sum));
}

double BetaBinomial::sum_up(std::int64_t from, std::int64_t mode) const {
    const double n = static_cast<double>(n_);
    double rel = 1.0;
    double sum = 0.0;
    for (std::int64_t j = from; j <= n_; ++j) {
        sum += rel;
        if (j == n_) break;
        if (mode >= 0 && j >= mode && rel < 1e-17 * sum) break;
        const double jj = static_cast<double>(j);
        // pmf(j+1)/pmf(j)
        rel *= (n - jj) * (jj + alpha_) / ((jj + 1.0) * (n - jj - 1.0 + beta_));
    }
    return std::exp(log_pmf(from) + std::log(sum));
}

TailPair BetaBinomial::tails(std::int64_t k) const {
    if (k < 0) return {0.0, 1.0};
    if (k >= n_) return {1.0, 0.0};
    const double n = static_cast<double>(n_);
    const double shape = alpha_ + beta_;
    if (shape > 2.0) {
        // pmf(j+1) >= pmf(j) exactly when j <= k0, so the pmf is unimodal.
        const double k0 = (n * alpha_ - n + 1.0 - beta_) / (shape - 2.0);
        std::int64_t mode = 0;
        if (k0 >= 0.0) mode = std::min<std::int64_t>(n_, static_cast<std::int64_t>(std::floor(k0)) + 1);
        if (k < mode) {
            const double lower = std::min(1.0, sum_down(k, mode));
            return {lower, std::max(0.0, 1.0 - lower)};
        }
        const double upper = std::min(1.0, sum_up(k + 1, mode));
        return {std::max(0.0, 1.0 - upper), upper};
    }
    // U-shaped or flat: no early exit is safe.
    if (2 * k < n_) {
        const double lower = std::min(1.0, sum_down(k, -1));
        return {lower, std::max(0.0, 1.0 - lower)};
    }
    const double upper = std::min(1.0, sum_up(k + 1, -1));
    return {std::max(0.0, 1.0 - upper), upper};
}

// ---------------------------------------------------------------------------

double median(std::span<const double> values) {
    if (values.empty()) throw ValidationError("median of an empty set");
    std::vector<double> v(values.begin(), values.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw ValidationError("quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile level must lie in [0, 1]");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double sn_correction(std::size_t n) {
    static constexpr double table[] = {0.743, 1.851, 0.954, 1.351, 0.993, 1.198, 1.005, 1.131};
    if (n < 2) throw ValidationError("Sn needs at least 2 values");
    if (n <= 9) return table[n - 2];
    if (n % 2 == 1) return static_cast<double>(n) / (static_cast<double>(n) - 0.9);
    return 1.0;
}

double sn_scale(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) throw ValidationError("Sn needs at least 2 values");
    for (double v : values) {
        if (!std::isfinite(v)) throw ValidationError("Sn: non-finite value");
    }
    std::vector<double> x(values.begin(), values.end());
    std::sort(x.begin(), x.end());

    // For each i: himed over all j of |x_i − x_j|. The j = i zero is always the
    // smallest, so this is the (n/2)-th smallest distance to the other points.
    const std::size_t k = n / 2;
    std::vector<double> inner(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t size_left = i;
        const std::size_t size_right = n - 1 - i;
        auto left = [&](std::size_t t) { return x[i] - x[i - 1 - t]; };
        auto right = [&](std::size_t t) { return x[i + 1 + t] - x[i]; };
        std::size_t lo = k > size_right ? k - size_right : 0;
        std::size_t hi = std::min(k, size_left);
        while (lo < hi) {
            const std::size_t a = lo + (hi - lo) / 2;
            const std::size_t b = k - a;
            // Need more from the left run when its next element is below the
            // last one taken from the right.
            if (left(a) < right(b - 1)) {
                lo = a + 1;
            } else {
                hi = a;
            }
        }
        const std::size_t a = lo;
        const std::size_t b = k - a;
        double v = -std::numeric_limits<double>::infinity();
        if (a > 0) v = std::max(v, left(a - 1));
        if (b > 0) v = std::max(v, right(b - 1));
        inner[i] = v;
    }
    const std::size_t lomed = (n + 1) / 2 - 1;
    std::nth_element(inner.begin(), inner.begin() + static_cast<std::ptrdiff_t>(lomed), inner.end());
    return sn_correction(n) * 1.1926 * inner[lomed];
}

// ---------------------------------------------------------------------------

DiscreteDist DiscreteDist::poisson(double lambda, double tail_eps, std::int64_t min_hi) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw ValidationError("poisson: rate must be positive");
    }
    DiscreteDist d;
    double cumulative = 0.0;
    for (std::int64_t k = 0;; ++k) {
        const double kk = static_cast<double>(k);
        const double p = std::exp(kk * std::log(lambda) - lambda - log_gamma(kk + 1.0));
        d.pmf.push_back(p);
        cumulative += p;
        if (kk > lambda && k >= min_hi && 1.0 - cumulative < tail_eps) break;
    }
    d.tail_mass = std::max(0.0, 1.0 - cumulative);
    return d;
}

DiscreteDist DiscreteDist::binomial(std::int64_t n, double p) {
    if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw ValidationError("binomial: invalid parameters");
    DiscreteDist d;
    d.pmf.resize(static_cast<std::size_t>(n) + 1, 0.0);
    if (p == 0.0 || p == 1.0) {
        d.pmf[p == 0.0 ? 0 : static_cast<std::size_t>(n)] = 1.0;
        return d;
    }
    const double nn = static_cast<double>(n);
    for (std::int64_t k = 0; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double log_choose = log_gamma_ratio(nn - kk + 1.0, kk) - log_gamma(kk + 1.0);
        d.pmf[static_cast<std::size_t>(k)] =
            std::exp(log_choose + kk * std::log(p) + (nn - kk) * std::log1p(-p));
    }
    return d;
}

DiscreteDist DiscreteDist::from_pmf(std::vector<double> pmf, std::int64_t offset) {
    if (pmf.empty()) throw ValidationError("discrete distribution needs a nonempty support");
    double total = 0.0;
    for (double p : pmf) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("pmf values must be nonnegative");
        total += p;
    }
    if (total > 1.0 + 1e-10) throw ValidationError("pmf values sum to more than one");
    DiscreteDist d;
    d.offset = offset;
    d.pmf = std::move(pmf);
    d.tail_mass = std::max(0.0, 1.0 - total);
    return d;
}

double DiscreteDist::prob(std::int64_t x) const {
    if (x < lo() || x > hi()) return 0.0;
    return pmf[static_cast<std::size_t>(x - offset)];
}

double DiscreteDist::cdf(std::int64_t x) const {
    double s = 0.0;
    for (std::int64_t k = lo(); k <= std::min(x, hi()); ++k) s += prob(k);
    return s;
}

DiscreteDist DiscreteDist::widened(std::int64_t new_lo, std::int64_t new_hi) const {
    DiscreteDist d;
    d.offset = std::min(new_lo, lo());
    const std::int64_t top = std::max(new_hi, hi());
    d.pmf.assign(static_cast<std::size_t>(top - d.offset + 1), 0.0);
    for (std::int64_t k = lo(); k <= hi(); ++k) d.pmf[static_cast<std::size_t>(k - d.offset)] = prob(k);
    d.tail_mass = tail_mass;
    return d;
}

double kl_divergence(const DiscreteDist& p, const DiscreteDist& q) {
    double kl = 0.0;
    for (std::int64_t x = p.lo(); x <= p.hi(); ++x) {
        const double px = p.prob(x);
        if (px <= 0.0) continue;
        const double qx = q.prob(x);
        if (qx <= 0.0) return std::numeric_limits<double>::infinity();
        kl += px * std::log(px / qx);
    }
    return std::max(0.0, kl);
}

double kolmogorov_distance(const DiscreteDist& p, const DiscreteDist& q) {
    const std::int64_t lo = std::min(p.lo(), q.lo());
    const std::int64_t hi = std::max(p.hi(), q.hi());
    double cp = 0.0, cq = 0.0, d = 0.0;
    for (std::int64_t x = lo; x <= hi; ++x) {
        cp += p.prob(x);
        cq += q.prob(x);
        d = std::max(d, std::fabs(cp - cq));
    }
    return std::min(1.0, d);
}

double ks_statistic_uniform(std::span<const double> values) {
    if (values.empty()) throw ValidationError("KS statistic of an empty sample");
    std::vector<double> u(values.begin(), values.end());
    std::sort(u.begin(), u.end());
    const double n = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max({d, hi - u[i], u[i] - lo});
    }
    return d;
}

double ks_critical_value(std::size_t n, double alpha) {
    if (n == 0 || !(alpha > 0.0 && alpha < 1.0)) throw ValidationError("invalid KS critical value request");
    const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    const double rn = std::sqrt(static_cast<double>(n));
    return c / (rn + 0.12 + 0.11 / rn);
}

Quadrature gauss_legendre(int order) {
    if (order < 1) throw ValidationError("quadrature order must be positive");
    Quadrature q;
    q.nodes.resize(static_cast<std::size_t>(order));
    q.weights.resize(static_cast<std::size_t>(order));
    const int half = (order + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 0; j < order; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
            }
            dp = order * (z * p1 - p2) / (z * z - 1.0);
            const double step = p1 / dp;
            z -= step;
            if (std::fabs(step) < 1e-15) break;
        }
        const auto lo = static_cast<std::size_t>(i);
        const auto hi = static_cast<std::size_t>(order - 1 - i);
        q.nodes[lo] = -z;
        q.nodes[hi] = z;
        q.weights[lo] = q.weights[hi] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return q;
}

}  // namespace ebmut
