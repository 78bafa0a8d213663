#pragma once

#include "discrete_fdr.hpp"
#include "pileup.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ebmut {

enum class SigmaMethod { moments, mle };

const char* to_string(SigmaMethod m);
SigmaMethod parse_sigma_method(const std::string& s);

struct FitOptions {
    SigmaMethod method = SigmaMethod::mle;
    double pseudocount = 0.5;
    double region_quantile = 0.9;
    // Residuals further than this many scaled MADs from the median are left
    // out of the variance fit; 0 keeps everything.
    double trim_mads = 4.0;
    std::size_t min_positions = 50;
    // Moments estimates where sampling noise explains more than this share of
    // the residual variance are flagged unstable.
    double moments_max_share = 0.6;
    int reference_passes = 3;
    double genotype_inflation = 1.5;
    int quadrature_nodes = 32;
    std::uint64_t seed = 0;
};

// Variance of the median of s iid standard normals.
double median_variance_factor(std::size_t s);

// Pseudocounted logit of an observed rate.
inline double logit_rate(std::int64_t x, std::int64_t n, double c) {
    return logit((static_cast<double>(x) + c) / (static_cast<double>(n) + 2.0 * c));
}

// ---------------------------------------------------------------------------
// Positional consensus
// ---------------------------------------------------------------------------

struct MuEstimate {
    std::vector<double> mu;
    std::vector<std::uint8_t> estimable;
    // Sampling variance of logit μ̂ (the consensus is itself noisy).
    std::vector<double> extra_var;
};

// μ̂_i = expit(median_j logit((x_ij + c)/(N_ij + 2c))) over samples with N > 0.
// ref_sigma (optional, one per sample) feeds the consensus variance;
// leave_out drops one sample column.
MuEstimate estimate_mu(const PileupMatrix& reference, double pseudocount = 0.5,
                       std::span<const double> ref_sigma = {},
                       std::optional<std::size_t> leave_out = std::nullopt);

// ---------------------------------------------------------------------------
// Per-sample effects
// ---------------------------------------------------------------------------

// One sample's observations against a consensus.
struct SampleSeries {
    std::vector<std::int64_t> x;
    std::vector<std::int64_t> n;
    std::vector<double> center;     // logit μ̂
    std::vector<double> extra_var;  // consensus variance
    std::vector<int> region;        // empty without regions
    std::vector<std::uint8_t> use;  // positions allowed into the fit
};

SampleSeries sample_series(const PileupMatrix& m, std::size_t j, const MuEstimate& mu,
                           const RegionMap* regions = nullptr,
                           std::span<const std::uint8_t> mask = {});

double fit_delta(const SampleSeries& s, double pseudocount, std::size_t min_positions);

struct SigmaFit {
    double sigma = 0.0;
    SigmaMethod method = SigmaMethod::mle;
    bool moments_unstable = false;
    std::vector<double> region_sigma;
    std::size_t positions_used = 0;
    std::size_t positions_trimmed = 0;
};

// With regions the fit is repeated per region and the configured quantile of
// the region values is reported. `base_var` is extra logit variance already
// known to be present (σ² of the normal when fitting τ).
SigmaFit fit_sigma(const SampleSeries& s, double delta, const FitOptions& opts, double base_var = 0.0);

std::vector<double> estimate_delta(const PileupMatrix& m, const MuEstimate& mu, double pseudocount = 0.5,
                                   std::size_t min_positions = 50);

std::vector<SigmaFit> estimate_sigma(const PileupMatrix& m, const MuEstimate& mu, std::span<const double> delta,
                                     const FitOptions& opts, const RegionMap* regions = nullptr);

// ---------------------------------------------------------------------------
// Beta approximation and nulls
// ---------------------------------------------------------------------------

struct BetaShape {
    double alpha;
    double beta;
};

// α = 1/(σ²(1−μ)), β = 1/(σ²μ)
BetaShape beta_approx(double mu, double sigma);

struct FitMetadata {
    std::string method = "mle";
    double pseudocount = 0.5;
    double region_quantile = 0.9;
    std::uint64_t seed = 0;
    std::vector<std::string> notes;
};

struct ErrorModelParams {
    std::vector<PositionId> positions;
    std::vector<double> mu;
    std::vector<std::uint8_t> estimable;
    std::vector<double> extra_var;
    std::vector<std::string> samples;
    std::vector<double> delta;
    std::vector<double> sigma;
    std::vector<std::vector<double>> region_sigma;  // [sample][region]
    std::vector<std::string> sigma_method;           // per sample, as fitted
    FitMetadata meta;
};

// Fits μ̂ on the reference and δ, σ of every reference sample against the
// consensus of the others.
ErrorModelParams fit_reference(const PileupMatrix& reference, const FitOptions& opts = {},
                               const RegionMap* regions = nullptr);

// Fits δ and σ of each target sample against a fitted reference model.
ErrorModelParams fit_targets(const ErrorModelParams& reference_model, const PileupMatrix& target,
                             const FitOptions& opts = {}, const RegionMap* regions = nullptr);

NullCdfHandle null_cdf_unmatched(const ErrorModelParams& params, std::size_t i, std::size_t j, std::int64_t depth);

// ---------------------------------------------------------------------------
// Matched design
// ---------------------------------------------------------------------------

enum class Genotype : std::uint8_t { hom_ref = 0, het = 1, hom_alt = 2 };

struct GenotypeAssignment {
    std::vector<std::size_t> candidates;                 // position indices
    std::vector<Genotype> genotype;                      // candidates × samples
    std::vector<std::array<double, 3>> posterior;        // candidates × samples
    std::vector<std::array<double, 3>> genotype_mu;      // per candidate
    std::vector<std::uint8_t> inflated;                  // per candidate
    std::size_t num_samples = 0;

    // Index into `candidates`, or nullopt.
    std::optional<std::size_t> find(std::size_t position) const;
};

// Positions where any sample at depth >= min_depth has rate in [0.2, 0.8] or >= 0.95.
std::vector<std::size_t> default_genotype_candidates(const PileupMatrix& m, std::int64_t min_depth = 20);

GenotypeAssignment genotype_positions(const PileupMatrix& m, std::span<const std::size_t> candidates,
                                      const MuEstimate& mu, double pseudocount = 0.5);

struct MatchedModelParams {
    ErrorModelParams base;
    std::vector<double> eta;
    std::vector<double> tau;
    std::vector<std::vector<double>> region_tau;
    GenotypeAssignment genotypes;
    double genotype_inflation = 1.5;
    int quadrature_nodes = 32;
};

MatchedModelParams fit_matched(const MatchedPileup& data, const FitOptions& opts = {},
                               const RegionMap* regions = nullptr);

// Prior for the normal rate p_ij on the logit scale.
struct LogitPrior {
    double center;
    double var;
};

// The prior for (i, j): genotype-specific at genotyped positions, otherwise
// the consensus of the other normals (`loo`, from matched_consensus) or, when
// `loo` is null, the stored full consensus.
LogitPrior matched_prior(const MatchedModelParams& params, const MuEstimate* loo, std::size_t i, std::size_t j);

// Consensus of all normals except sample j, with the fitted σ feeding its variance.
MuEstimate matched_consensus(const PileupMatrix& normal, const MatchedModelParams& params, std::size_t j);

// Law of y given x: Beta posterior of p, logit-normal step to q by (η, τ),
// Binomial(M, q), integrated over p by Gauss–Legendre on the logit scale.
NullCdfHandle conditional_null(const LogitPrior& prior, double eta, double tau, std::int64_t x, std::int64_t n,
                               std::int64_t m, int nodes = 32);

// Uses the full consensus when `prior` is not given. N = 0 falls back to the
// unconditional tumor null.
NullCdfHandle null_cdf_matched(const MatchedModelParams& params, std::size_t i, std::size_t j, std::int64_t x,
                               std::int64_t n, std::int64_t m, const LogitPrior* prior = nullptr);

}  // namespace ebmut
