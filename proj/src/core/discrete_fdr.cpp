#include "discrete_fdr.hpp"

#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ebmut {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;
}  // namespace

BetaBinomialMixtureNull::BetaBinomialMixtureNull(std::vector<double> weights,
                                                 std::vector<BetaBinomial> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
    if (weights_.size() != components_.size() || weights_.empty()) {
        throw ValidationError("mixture null: weights and components must match and be nonempty");
    }
    for (const auto& c : components_) {
        if (c.n() != components_.front().n()) throw ValidationError("mixture null: components differ in trial count");
    }
    double total = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0)) throw ValidationError("mixture null: negative weight");
        total += w;
    }
    if (!(total > 0.0)) throw ValidationError("mixture null: weights sum to zero");
    for (double& w : weights_) w /= total;
}

double BetaBinomialMixtureNull::pmf(std::int64_t k) const {
    double s = 0.0;
    for (std::size_t c = 0; c < components_.size(); ++c) {
        if (weights_[c] > 0.0) s += weights_[c] * components_[c].pmf(k);
    }
    return s;
}

TailPair BetaBinomialMixtureNull::tails(std::int64_t k) const {
    if (k < 0) return {0.0, 1.0};
    if (k >= components_.front().n()) return {1.0, 0.0};
    TailPair t{0.0, 0.0};
    for (std::size_t c = 0; c < components_.size(); ++c) {
        if (weights_[c] <= 0.0) continue;
        const TailPair tc = components_[c].tails(k);
        t.lower += weights_[c] * tc.lower;
        t.upper += weights_[c] * tc.upper;
    }
    t.lower = std::min(1.0, t.lower);
    t.upper = std::min(1.0, t.upper);
    return t;
}

TailPair TabulatedNull::tails(std::int64_t k) const {
    double lower = 0.0, upper = 0.0;
    for (std::int64_t x = dist_.lo(); x <= dist_.hi(); ++x) {
        (x <= k ? lower : upper) += dist_.prob(x);
    }
    return {lower, upper};
}

// ---------------------------------------------------------------------------

PInterval null_interval(const DiscreteNull& null, std::int64_t x, Tail tail) {
    const TailPair t = null.tails(x);
    const double mass = null.pmf(x);
    if (tail == Tail::lower) {
        return {std::max(0.0, t.lower - mass), t.lower};
    }
    return {t.upper, std::min(1.0, t.upper + mass)};
}

double pvalue_uniform(std::uint64_t seed, std::uint64_t index) {
    return counter_uniform(seed, index, 0x5EEDu);
}

RandomizedPValues randomized_pvalues(std::span<const PInterval> intervals, PValueMode mode,
                                     std::uint64_t seed, std::uint64_t index_base) {
    RandomizedPValues out;
    out.mode = mode;
    out.rng_seed = seed;
    out.r.resize(intervals.size());
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const double u = mode == PValueMode::mid_p ? 0.5 : pvalue_uniform(seed, index_base + i);
        out.r[i] = std::clamp(intervals[i].lo + u * intervals[i].width(), 0.0, 1.0);
    }
    return out;
}

RandomizedPValues randomized_pvalues(std::span<const std::int64_t> x,
                                     std::span<const NullCdfHandle> nulls, PValueMode mode,
                                     std::uint64_t seed, Tail tail) {
    if (x.size() != nulls.size()) throw ValidationError("randomized_pvalues: one null per observation");
    std::vector<PInterval> intervals(x.size());
    parallel_for(x.size(), [&](std::size_t i) {
        if (!nulls[i]) throw ValidationError("randomized_pvalues: missing null");
        intervals[i] = null_interval(*nulls[i], x[i], tail);
    });
    return randomized_pvalues(intervals, mode, seed);
}

// ---------------------------------------------------------------------------

double TheoremCheck::max_deviation() const {
    auto dev = [](double a, double b) {
        if (std::isinf(a) && std::isinf(b)) return 0.0;
        if (std::isinf(a) || std::isinf(b)) return kInf;
        return std::fabs(a - b);
    };
    return std::max({dev(kl_r_uniform, kl_true_assumed), dev(kl_uniform_r, kl_assumed_true),
                     dev(ks_r, ks_assumed_true)});
}

TheoremCheck verify_theorem(const DiscreteDist& assumed, const DiscreteDist& truth) {
    const std::int64_t lo = std::min(assumed.lo(), truth.lo());
    const std::int64_t hi = std::max(assumed.hi(), truth.hi());

    // The law of r: on [F⁻(x), F(x)] density P_G(x)/P_F(x); an atom of mass
    // P_G(x) at F⁻(x) where P_F(x) = 0.
    double left = 0.0;  // F⁻(x)
    double h_cdf = 0.0; // H at the current knot
    double kl_r_unif = 0.0, kl_unif_r = 0.0, ks = 0.0;
    bool atom = false, hole = false;
    for (std::int64_t x = lo; x <= hi; ++x) {
        const double pf = assumed.prob(x);
        const double pg = truth.prob(x);
        const double right = left + pf;
        ks = std::max(ks, std::fabs(h_cdf - left));
        if (pf > 0.0) {
            // Segment length F(x) − F⁻(x); taken from the pmf since right − left
            // cancels to nothing in far tails where F⁻(x) is near 1.
            const double width = pf;
            const double h = pg / pf;
            if (h > 0.0) {
                kl_r_unif += width * h * std::log(h);
                kl_unif_r -= width * std::log(h);
            } else if (width > 0.0) {
                hole = true;
            }
            h_cdf += width * h;
        } else if (pg > 0.0) {
            atom = true;
            h_cdf += pg;
        }
        ks = std::max(ks, std::fabs(h_cdf - right));
        left = right;
    }

    TheoremCheck out{};
    out.kl_r_uniform = atom ? kInf : std::max(0.0, kl_r_unif);
    out.kl_uniform_r = hole ? kInf : std::max(0.0, kl_unif_r);
    out.ks_r = std::min(1.0, ks);
    out.kl_true_assumed = kl_divergence(truth, assumed);
    out.kl_assumed_true = kl_divergence(assumed, truth);
    out.ks_assumed_true = kolmogorov_distance(assumed, truth);
    return out;
}

// ---------------------------------------------------------------------------

double clamped_probit(double p) {
    return probit(std::clamp(p, kProbitClamp, 1.0 - kProbitClamp));
}

double EmpiricalNull::apply(double p) const {
    if (is_identity()) return p;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    return normal_cdf((clamped_probit(p) - location) / scale);
}

EmpiricalNull fit_empirical_null(std::span<const double> r, std::size_t min_count) {
    if (r.size() < std::max<std::size_t>(min_count, 2)) {
        throw ValidationError("empirical null: need at least " + std::to_string(min_count) +
                              " p-values, got " + std::to_string(r.size()));
    }
    std::vector<double> z(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = clamped_probit(r[i]);
    const double scale = sn_scale(z);
    if (!(scale > 0.0)) throw NumericError("empirical null: p-values carry no spread");
    return EmpiricalNull{median(z), scale};
}

// ---------------------------------------------------------------------------

std::vector<double> natural_spline_basis(double s, std::span<const double> knots) {
    const std::size_t K = knots.size();
    std::vector<double> b;
    b.reserve(K);
    b.push_back(1.0);
    b.push_back(s);
    const double last = knots[K - 1];
    auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
    auto d = [&](std::size_t k) { return (cube(s - knots[k]) - cube(s - last)) / (last - knots[k]); };
    const double d_penultimate = d(K - 2);
    for (std::size_t k = 0; k + 2 < K; ++k) b.push_back(d(k) - d_penultimate);
    return b;
}

MarginalDensity::MarginalDensity(double z_lo, double z_hi, std::vector<double> knots, std::vector<double> coef,
                                 int df, int bins)
    : z_lo_(z_lo), z_hi_(z_hi), knots_(std::move(knots)), coef_(std::move(coef)), df_(df), bins_(bins) {
    if (!(z_hi_ > z_lo_) || knots_.size() < 2 || coef_.size() != knots_.size()) {
        throw ValidationError("marginal density: inconsistent spline description");
    }
    // Normalize over the clamped probit range with composite Simpson.
    const double a = probit(kProbitClamp);
    const double b = -a;
    constexpr int intervals = 8192;
    const double h = (b - a) / intervals;
    std::vector<double> s(intervals + 1);
    double peak = -kInf;
    for (int k = 0; k <= intervals; ++k) {
        s[static_cast<std::size_t>(k)] = spline(a + k * h);
        peak = std::max(peak, s[static_cast<std::size_t>(k)]);
    }
    double acc = 0.0;
    for (int k = 0; k <= intervals; ++k) {
        const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        acc += w * std::exp(s[static_cast<std::size_t>(k)] - peak);
    }
    log_norm_ = peak + std::log(acc * h / 3.0);
}

double MarginalDensity::spline(double z) const {
    const double s = (z - z_lo_) / (z_hi_ - z_lo_);
    const auto basis = natural_spline_basis(s, knots_);
    double v = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) v += basis[k] * coef_[k];
    return v;
}

double MarginalDensity::log_density_z(double z) const { return spline(z) - log_norm_; }

double MarginalDensity::density(double r) const {
    const double z = clamped_probit(r);
    const double log_f = log_density_z(z) + 0.5 * z * z + kHalfLog2Pi;
    return std::exp(std::min(log_f, 700.0));
}

MarginalDensity fit_marginal_density(std::span<const double> r, const MarginalFitOptions& opts) {
    if (opts.df < 3 || opts.df > 15) throw ValidationError("marginal density: df must lie in [3, 15]");
    if (opts.bins < 10) throw ValidationError("marginal density: need at least 10 bins");
    if (r.size() < opts.min_count) {
        throw ValidationError("marginal density: need at least " + std::to_string(opts.min_count) +
                              " p-values, got " + std::to_string(r.size()));
    }
    std::vector<double> z(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = clamped_probit(r[i]);
    const auto [mn, mx] = std::minmax_element(z.begin(), z.end());
    const double z_lo = *mn, z_hi = *mx;
    if (!(z_hi - z_lo > 1e-9)) throw NumericError("marginal density: p-values carry no spread");
    const double span_z = z_hi - z_lo;

    const int B = opts.bins;
    const double width = span_z / B;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(B);
    for (double v : z) {
        const int k = std::min(B - 1, static_cast<int>((v - z_lo) / width));
        y(k) += 1.0;
    }

    // Boundary knots at the data range, interior knots at quantiles of z.
    std::vector<double> knots{0.0};
    for (int j = 1; j < opts.df; ++j) {
        const double s = (quantile(z, static_cast<double>(j) / opts.df) - z_lo) / span_z;
        if (s - knots.back() >= 1e-3 && 1.0 - s >= 1e-3) knots.push_back(s);
    }
    knots.push_back(1.0);
    const auto K = static_cast<Eigen::Index>(knots.size());

    Eigen::MatrixXd X(B, K);
    for (int k = 0; k < B; ++k) {
        const auto basis = natural_spline_basis((k + 0.5) / B, knots);
        for (Eigen::Index c = 0; c < K; ++c) X(k, c) = basis[static_cast<std::size_t>(c)];
    }

    auto deviance = [&](const Eigen::VectorXd& eta) {
        double dev = 0.0;
        for (int k = 0; k < B; ++k) {
            const double lambda = std::exp(std::min(eta(k), 700.0));
            if (y(k) > 0.0) dev += y(k) * std::log(y(k) / lambda);
            dev -= y(k) - lambda;
        }
        return 2.0 * dev;
    };

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(K);
    beta(0) = std::log(std::max(y.mean(), 1e-3));
    Eigen::VectorXd eta = X * beta;
    double dev = deviance(eta);
    bool converged = false;
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        Eigen::VectorXd lambda = eta.array().min(700.0).exp();
        Eigen::VectorXd work = eta.array() + (y.array() - lambda.array()) / lambda.array();
        Eigen::MatrixXd xtw = X.transpose() * lambda.asDiagonal();
        Eigen::MatrixXd info = xtw * X;
        info.diagonal().array() += 1e-10 * std::max(1.0, info.diagonal().mean());
        Eigen::VectorXd proposal = info.ldlt().solve(xtw * work);
        if (!proposal.allFinite()) throw NumericError("marginal density: IRLS produced non-finite coefficients");

        Eigen::VectorXd eta_new = X * proposal;
        double dev_new = deviance(eta_new);
        for (int halving = 0; halving < 20 && !(dev_new <= dev + 1e-12 * std::fabs(dev)); ++halving) {
            proposal = 0.5 * (proposal + beta);
            eta_new = X * proposal;
            dev_new = deviance(eta_new);
        }
        const double change = std::fabs(dev - dev_new);
        beta = proposal;
        eta = eta_new;
        dev = dev_new;
        if (change <= opts.tolerance * (std::fabs(dev) + 0.1)) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw NumericError("marginal density: IRLS did not converge in " +
                           std::to_string(opts.max_iterations) + " iterations");
    }
    std::vector<double> coef(beta.data(), beta.data() + K);
    return MarginalDensity(z_lo, z_hi, std::move(knots), std::move(coef), opts.df, opts.bins);
}

// ---------------------------------------------------------------------------

double local_fdr(const PInterval& corrected, const MarginalDensity& marg, double* f_marg_out) {
    const double mid = 0.5 * (corrected.lo + corrected.hi);
    const double f = marg.density(mid);
    if (f_marg_out) *f_marg_out = f;
    if (!(f > 0.0)) return 1.0;
    return std::min(1.0, 1.0 / f);
}

FdrAnalysis analyze_fdr(std::span<const PInterval> intervals, std::span<const int> group, int num_groups,
                        const FdrOptions& opts, std::vector<std::string> ids) {
    const std::size_t n = intervals.size();
    if (group.size() != n) throw ValidationError("analyze_fdr: one group label per observation");
    if (!ids.empty() && ids.size() != n) throw ValidationError("analyze_fdr: one id per observation");

    FdrAnalysis out;
    out.table.ids = std::move(ids);
    auto& rows = out.table.rows;
    rows.resize(n);

    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = opts.mode == PValueMode::mid_p ? 0.5 : pvalue_uniform(opts.seed, i);
        rows[i].defined = group[i] >= 0;
        rows[i].r = std::clamp(intervals[i].lo + u[i] * intervals[i].width(), 0.0, 1.0);
    }

    out.empirical_nulls.assign(static_cast<std::size_t>(std::max(num_groups, 0)), EmpiricalNull{});
    if (opts.empirical_null) {
        for (int g = 0; g < num_groups; ++g) {
            std::vector<double> rg;
            for (std::size_t i = 0; i < n; ++i) {
                if (group[i] == g) rg.push_back(rows[i].r);
            }
            if (rg.size() < opts.empirical_null_min) {
                out.notes.push_back("group " + std::to_string(g) + ": " + std::to_string(rg.size()) +
                                    " p-values, empirical null skipped");
                continue;
            }
            try {
                out.empirical_nulls[static_cast<std::size_t>(g)] =
                    fit_empirical_null(rg, opts.empirical_null_min);
            } catch (const NumericError& e) {
                out.notes.push_back("group " + std::to_string(g) + ": " + e.what());
            }
        }
    }

    std::vector<double> r_tilde;
    for (std::size_t i = 0; i < n; ++i) {
        FdrRow& row = rows[i];
        if (!row.defined) {
            row.r_tilde = row.r;
            row.interval_lo = intervals[i].lo;
            row.interval_hi = intervals[i].hi;
            continue;
        }
        const EmpiricalNull& h = out.empirical_nulls[static_cast<std::size_t>(group[i])];
        row.interval_lo = h.apply(intervals[i].lo);
        row.interval_hi = std::max(row.interval_lo, h.apply(intervals[i].hi));
        row.r_tilde = std::clamp(row.interval_lo + u[i] * (row.interval_hi - row.interval_lo), 0.0, 1.0);
        r_tilde.push_back(row.r_tilde);
    }

    if (r_tilde.size() < opts.marginal.min_count) {
        out.notes.push_back("only " + std::to_string(r_tilde.size()) +
                            " defined p-values; marginal density not fitted, fdr set to 1");
        for (auto& row : rows) {
            row.f_marg = 1.0;
            row.fdr = 1.0;
        }
        return out;
    }
    out.marginal = fit_marginal_density(r_tilde, opts.marginal);
    out.marginal_fitted = true;
    parallel_for(n, [&](std::size_t i) {
        FdrRow& row = rows[i];
        if (!row.defined) {
            row.f_marg = 1.0;
            row.fdr = 1.0;
            return;
        }
        row.fdr = local_fdr({row.interval_lo, row.interval_hi}, out.marginal, &row.f_marg);
    });
    return out;
}

}  // namespace ebmut
