#pragma once

#include "statfun.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ebmut {

// ---------------------------------------------------------------------------
// Null distributions for a single discrete observation
// ---------------------------------------------------------------------------

class DiscreteNull {
public:
    virtual ~DiscreteNull() = default;
    virtual double pmf(std::int64_t k) const = 0;
    // P(X <= k) and P(X > k), each accurate in its own tail.
    virtual TailPair tails(std::int64_t k) const = 0;

    double cdf(std::int64_t k) const { return tails(k).lower; }
    // F⁻(k) = P(X < k)
    double cdf_left(std::int64_t k) const { return tails(k - 1).lower; }
};

using NullCdfHandle = std::shared_ptr<const DiscreteNull>;

class BetaBinomialNull final : public DiscreteNull {
public:
    explicit BetaBinomialNull(BetaBinomial dist) : dist_(dist) {}
    double pmf(std::int64_t k) const override { return dist_.pmf(k); }
    TailPair tails(std::int64_t k) const override { return dist_.tails(k); }
    const BetaBinomial& dist() const { return dist_; }

private:
    BetaBinomial dist_;
};

// Finite mixture of beta-binomials sharing the trial count.
class BetaBinomialMixtureNull final : public DiscreteNull {
public:
    BetaBinomialMixtureNull(std::vector<double> weights, std::vector<BetaBinomial> components);
    double pmf(std::int64_t k) const override;
    TailPair tails(std::int64_t k) const override;
    std::size_t size() const { return components_.size(); }

private:
    std::vector<double> weights_;
    std::vector<BetaBinomial> components_;
};

// Point mass at `value`; the null of a zero-depth observation.
class PointMassNull final : public DiscreteNull {
public:
    explicit PointMassNull(std::int64_t value = 0) : value_(value) {}
    double pmf(std::int64_t k) const override { return k == value_ ? 1.0 : 0.0; }
    TailPair tails(std::int64_t k) const override {
        return k >= value_ ? TailPair{1.0, 0.0} : TailPair{0.0, 1.0};
    }

private:
    std::int64_t value_;
};

class TabulatedNull final : public DiscreteNull {
public:
    explicit TabulatedNull(DiscreteDist dist) : dist_(std::move(dist)) {}
    double pmf(std::int64_t k) const override { return dist_.prob(k); }
    TailPair tails(std::int64_t k) const override;

private:
    DiscreteDist dist_;
};

// ---------------------------------------------------------------------------
// Randomized p-values
// ---------------------------------------------------------------------------

enum class PValueMode { randomized, mid_p };

// lower: small p-values for unusually small x. upper: for unusually large x.
enum class Tail { lower, upper };

// The p-value interval of one observation: [F⁻(x), F(x)] in the chosen orientation.
struct PInterval {
    double lo = 0.0;
    double hi = 1.0;
    double width() const { return hi - lo; }
};

PInterval null_interval(const DiscreteNull& null, std::int64_t x, Tail tail = Tail::lower);

struct RandomizedPValues {
    std::vector<double> r;
    PValueMode mode = PValueMode::randomized;
    std::uint64_t rng_seed = 0;
};

// U for observation `index`: one counter-based stream per index.
double pvalue_uniform(std::uint64_t seed, std::uint64_t index);

// r_i = lo_i + U_i (hi_i − lo_i), or the midpoint in mid_p mode. The stream
// index of observation i is index_base + i.
RandomizedPValues randomized_pvalues(std::span<const PInterval> intervals, PValueMode mode,
                                     std::uint64_t seed, std::uint64_t index_base = 0);

RandomizedPValues randomized_pvalues(std::span<const std::int64_t> x,
                                     std::span<const NullCdfHandle> nulls, PValueMode mode,
                                     std::uint64_t seed, Tail tail = Tail::lower);

// ---------------------------------------------------------------------------
// Theorem checks: the law of r versus the assumed/true distance identities
// ---------------------------------------------------------------------------

struct TheoremCheck {
    double kl_r_uniform;   // D_KL(H ‖ H_unif), from the law of r
    double kl_true_assumed;  // D_KL(G ‖ F)
    double kl_uniform_r;   // D_KL(H_unif ‖ H), from the law of r
    double kl_assumed_true;  // D_KL(F ‖ G)
    double ks_r;           // sup_r |H(r) − r|
    double ks_assumed_true;  // sup_x |F(x) − G(x)|

    // Largest |LHS − RHS| over the three identities (0 when both sides are +∞).
    double max_deviation() const;
};

// `assumed` plays F (the null used to build r), `truth` plays G (the law of x).
TheoremCheck verify_theorem(const DiscreteDist& assumed, const DiscreteDist& truth);

// ---------------------------------------------------------------------------
// Empirical null
// ---------------------------------------------------------------------------

inline constexpr double kProbitClamp = 1e-12;

double clamped_probit(double p);

// H(p) = Φ((probit(p) − location) / scale), a location–scale correction on the
// probit scale.
struct EmpiricalNull {
    double location = 0.0;
    double scale = 1.0;

    double apply(double p) const;
    bool is_identity() const { return location == 0.0 && scale == 1.0; }
};

// Median and Sn of probit(r). Throws ValidationError below min_count values and
// NumericError when the values carry no spread.
EmpiricalNull fit_empirical_null(std::span<const double> r, std::size_t min_count = 100);

// ---------------------------------------------------------------------------
// Marginal density of p-values (Lindsey's method on the probit scale)
// ---------------------------------------------------------------------------

struct MarginalFitOptions {
    int df = 7;
    int bins = 120;
    int max_iterations = 50;
    double tolerance = 1e-8;
    std::size_t min_count = 200;
};

// Log-density of z = probit(r) is a natural cubic spline (linear beyond the
// boundary knots); the density on r is g(z)/φ(z).
class MarginalDensity {
public:
    MarginalDensity() = default;
    MarginalDensity(double z_lo, double z_hi, std::vector<double> knots, std::vector<double> coef,
                    int df, int bins);

    double density(double r) const;
    double log_density_z(double z) const;

    double z_lo() const { return z_lo_; }
    double z_hi() const { return z_hi_; }
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& coefficients() const { return coef_; }
    double log_normalizer() const { return log_norm_; }
    int df() const { return df_; }
    int bins() const { return bins_; }
    bool empty() const { return coef_.empty(); }

private:
    double spline(double z) const;

    double z_lo_ = 0.0;
    double z_hi_ = 1.0;
    std::vector<double> knots_;  // standardized to [0, 1] over [z_lo, z_hi]
    std::vector<double> coef_;
    double log_norm_ = 0.0;
    int df_ = 0;
    int bins_ = 0;
};

// Natural cubic spline basis (intercept, linear, then K−2 truncated-power
// terms) at standardized coordinate s for knots ξ_1 < … < ξ_K.
std::vector<double> natural_spline_basis(double s, std::span<const double> knots);

MarginalDensity fit_marginal_density(std::span<const double> r, const MarginalFitOptions& opts = {});

// ---------------------------------------------------------------------------
// Local fdr
// ---------------------------------------------------------------------------

struct FdrRow {
    bool defined = false;
    double r = 0.0;
    double r_tilde = 0.0;
    double interval_lo = 0.0;  // corrected interval
    double interval_hi = 1.0;
    double f_marg = 1.0;
    double fdr = 1.0;
};

struct FdrTable {
    std::vector<std::string> ids;
    std::vector<FdrRow> rows;
};

// fdr = min(1, 1 / f̂((a+b)/2)) on the corrected interval [a, b]; 1 when the
// marginal density vanishes there.
double local_fdr(const PInterval& corrected, const MarginalDensity& marg, double* f_marg_out = nullptr);

struct FdrOptions {
    PValueMode mode = PValueMode::randomized;
    std::uint64_t seed = 0;
    bool empirical_null = false;
    std::size_t empirical_null_min = 100;
    MarginalFitOptions marginal;
};

struct FdrAnalysis {
    FdrTable table;
    std::vector<EmpiricalNull> empirical_nulls;  // one per group
    std::vector<std::string> notes;
    MarginalDensity marginal;
    bool marginal_fitted = false;
};

// Full recipe over observations with precomputed null intervals. group[i] is
// the empirical-null group of observation i, or −1 for an undefined
// observation (excluded from every fit, fdr = 1). Null first, then r̃ with the
// same U, then the pooled marginal on r̃.
FdrAnalysis analyze_fdr(std::span<const PInterval> intervals, std::span<const int> group, int num_groups,
                        const FdrOptions& opts, std::vector<std::string> ids = {});

}  // namespace ebmut
